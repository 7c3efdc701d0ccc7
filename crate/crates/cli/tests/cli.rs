use std::fs;
use std::path::Path;
use std::process::Command;

use panelbreak::gram::GramTable;
use panelbreak::simlab::{generate_panel, DgpConfig};
use panelbreak_cli::{load_csv, write_panel_csv, ColumnRoles};
use tempfile::TempDir;

fn roles(x: &[&str]) -> ColumnRoles {
    ColumnRoles {
        id: "id".into(),
        time: "time".into(),
        y: "y".into(),
        x: x.iter().map(|s| s.to_string()).collect(),
    }
}

fn write(dir: &TempDir, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, content).unwrap();
    path
}

#[test]
fn loader_reads_a_small_complete_panel() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "p.csv",
        "id,time,y,x1\na,1,1.0,0.5\na,2,2.0,1.5\nb,1,0.0,0.25\nb,2,1.0,1.25\n",
    );
    let loaded = load_csv(&path, &roles(&["x1"]), false).unwrap();
    assert_eq!(loaded.panel.n(), 2);
    assert_eq!(loaded.panel.t_periods(), 2);
    assert_eq!(loaded.panel.p(), 1);
    assert_eq!(loaded.ids, ["a", "b"]);
    // id "a" sorts first; y stored by (period, individual).
    assert_eq!(loaded.panel.y(0, 2), 2.0);
    assert_eq!(loaded.panel.x(1, 1), [0.25]);
}

#[test]
fn loader_prepends_intercept_column() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "p.csv",
        "id,time,y,x1\na,1,1.0,0.5\na,2,2.0,1.5\nb,1,0.0,0.25\nb,2,1.0,1.25\n",
    );
    let loaded = load_csv(&path, &roles(&["x1"]), true).unwrap();
    assert_eq!(loaded.panel.p(), 2);
    assert_eq!(loaded.panel.names()[0], "const");
    assert!(loaded.panel.has_intercept());
    assert_eq!(loaded.panel.x(0, 1), [1.0, 0.5]);
}

#[test]
fn loader_names_missing_pairs() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "p.csv",
        "id,time,y,x1\na,1,1.0,0.5\na,2,2.0,1.5\nb,1,0.0,0.25\n",
    );
    let err = load_csv(&path, &roles(&["x1"]), false)
        .unwrap_err()
        .to_string();
    assert!(err.contains("unbalanced"), "{err}");
    assert!(err.contains("('b', '2')"), "{err}");
}

#[test]
fn loader_names_duplicate_pairs_with_lines() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "p.csv",
        "id,time,y,x1\na,1,1.0,0.5\na,2,2.0,1.5\nb,1,0.0,0.25\nb,2,1.0,1.25\na,2,9.0,9.0\n",
    );
    let err = load_csv(&path, &roles(&["x1"]), false)
        .unwrap_err()
        .to_string();
    assert!(err.contains("duplicate"), "{err}");
    assert!(err.contains("('a', '2')"), "{err}");
    assert!(err.contains("lines 3 and 6"), "{err}");
}

#[test]
fn loader_reports_non_numeric_cells_by_line() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "p.csv",
        "id,time,y,x1\na,1,1.0,0.5\na,2,oops,1.5\nb,1,0.0,0.25\nb,2,1.0,1.25\n",
    );
    let err = load_csv(&path, &roles(&["x1"]), false)
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column 'y'"), "{err}");
    assert!(err.contains("'oops'"), "{err}");
}

#[test]
fn loader_rejects_unknown_column_role() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "p.csv", "id,time,y\na,1,1.0\na,2,2.0\n");
    let err = load_csv(&path, &roles(&["x1"]), false)
        .unwrap_err()
        .to_string();
    assert!(err.contains("column 'x1' not found"), "{err}");
}

#[test]
fn loader_orders_numeric_time_labels_numerically() {
    let dir = TempDir::new().unwrap();
    // Lexicographically "10" < "2"; numerically it is last.
    let path = write(
        &dir,
        "p.csv",
        "id,time,y,x1\na,10,3.0,0.5\na,2,2.0,1.5\na,1,1.0,0.25\n",
    );
    let loaded = load_csv(&path, &roles(&["x1"]), false).unwrap();
    assert_eq!(loaded.times, ["1", "2", "10"]);
    assert_eq!(loaded.time_label(3), "10");
    assert_eq!(loaded.panel.y(0, 3), 3.0);
}

#[test]
fn round_trip_preserves_gram_sums() {
    let dir = TempDir::new().unwrap();
    let cfg = DgpConfig::double_break(40, 12);
    let draw = generate_panel(&cfg, 3).unwrap();
    let path = dir.path().join("panel.csv");
    write_panel_csv(&draw.panel, &path).unwrap();

    let loaded = load_csv(&path, &roles(&["x1"]), false).unwrap();
    let before = GramTable::build(&draw.panel).unwrap();
    let after = GramTable::build(&loaded.panel).unwrap();
    let t = draw.panel.t_periods();
    for ti in 1..=t {
        let (a, b) = (before.period_sxx(ti), after.period_sxx(ti));
        for (lhs, rhs) in a.iter().zip(b.iter()) {
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
        for (lhs, rhs) in before
            .period_sxy(ti)
            .iter()
            .zip(after.period_sxy(ti).iter())
        {
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
        let (sy, sy2) = (before.period_syy(ti), after.period_syy(ti));
        assert!((sy - sy2).abs() <= 1e-12 * sy.abs().max(1.0));
    }
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_panelbreak"))
}

/// Replication 0 of the two-break preset, exported for the binary to read.
fn two_break_csv(dir: &Path) -> std::path::PathBuf {
    let draw = generate_panel(&DgpConfig::double_break(500, 20), 0).unwrap();
    let path = dir.join("panel.csv");
    write_panel_csv(&draw.panel, &path).unwrap();
    path
}

#[test]
fn detect_finds_injected_breaks_end_to_end() {
    let dir = TempDir::new().unwrap();
    let input = two_break_csv(dir.path());
    let out = dir.path().join("out");
    let status = binary()
        .args(["detect", "--input"])
        .arg(&input)
        .args(["--x-cols", "x1", "--penalty", "hqic", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let breaks = fs::read_to_string(out.join("breaks.csv")).unwrap();
    assert_eq!(breaks, "break,period,label\n1,6,6\n2,13,13\n");
    let log = fs::read_to_string(out.join("run.log")).unwrap();
    assert!(log.contains("selected m = 2"), "{log}");
    assert!(out.join("ic_curve.csv").exists());
    assert!(out.join("regime_ols.csv").exists());
}

#[test]
fn detect_reruns_byte_identically() {
    let dir = TempDir::new().unwrap();
    let input = two_break_csv(dir.path());
    let out = dir.path().join("out");
    let run = || {
        let status = binary()
            .args(["detect", "--input"])
            .arg(&input)
            .args(["--x-cols", "x1", "--out-dir"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        ["breaks.csv", "ic_curve.csv", "regime_ols.csv", "run.log"]
            .map(|f| fs::read(out.join(f)).unwrap())
    };
    let first = run();
    fs::remove_dir_all(&out).unwrap();
    let second = run();
    assert_eq!(first, second);
}

#[test]
fn fixed_zero_breaks_reports_one_regime() {
    let dir = TempDir::new().unwrap();
    let input = two_break_csv(dir.path());
    let out = dir.path().join("out");
    let status = binary()
        .args(["detect", "--input"])
        .arg(&input)
        .args(["--x-cols", "x1", "--m", "0", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let breaks = fs::read_to_string(out.join("breaks.csv")).unwrap();
    assert_eq!(breaks, "break,period,label\n");
    let ols = fs::read_to_string(out.join("regime_ols.csv")).unwrap();
    assert_eq!(ols.lines().count(), 2, "header plus the single regime");
    assert!(ols.lines().nth(1).unwrap().starts_with("1,1,20,"));
    assert!(!out.join("ic_curve.csv").exists());
}

#[test]
fn estimate_writes_fe_and_ffe_tables() {
    let dir = TempDir::new().unwrap();
    let input = two_break_csv(dir.path());
    let out = dir.path().join("out");
    let status = binary()
        .args(["estimate", "--input"])
        .arg(&input)
        .args([
            "--x-cols",
            "x1",
            "--m",
            "2",
            "--vcov",
            "cluster",
            "--out-dir",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let fe = fs::read_to_string(out.join("estimates_fe.csv")).unwrap();
    assert_eq!(fe.lines().count(), 4, "header plus three regimes");
    assert!(fe.lines().skip(1).all(|l| l.contains(",true,")));
    let ffe = fs::read_to_string(out.join("estimates_ffe.csv")).unwrap();
    assert_eq!(ffe.lines().count(), 4);
    // Slopes land near the -0.1 / 0.1 / -0.1 truth.
    let third: Vec<&str> = ffe.lines().nth(1).unwrap().split(',').collect();
    let estimate: f64 = third[4].parse().unwrap();
    assert!((estimate + 0.1).abs() < 0.05, "{estimate}");
}

#[test]
fn test_subcommand_rejects_on_real_breaks() {
    let dir = TempDir::new().unwrap();
    let input = two_break_csv(dir.path());
    let out = dir.path().join("out");
    let status = binary()
        .args(["test", "--input"])
        .arg(&input)
        .args(["--x-cols", "x1", "--m", "2", "--alpha", "0.05", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let wald = fs::read_to_string(out.join("wald.csv")).unwrap();
    let slope_rows: Vec<&str> = wald.lines().filter(|l| l.starts_with("slope,")).collect();
    assert_eq!(slope_rows.len(), 2);
    assert!(slope_rows.iter().all(|l| l.ends_with(",true")), "{wald}");
}

#[test]
fn test_subcommand_with_no_breaks_writes_empty_table() {
    let dir = TempDir::new().unwrap();
    let input = two_break_csv(dir.path());
    let out = dir.path().join("out");
    let status = binary()
        .args(["test", "--input"])
        .arg(&input)
        .args(["--x-cols", "x1", "--m", "0", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let wald = fs::read_to_string(out.join("wald.csv")).unwrap();
    assert_eq!(wald.lines().count(), 1, "{wald}");
}

#[test]
fn simulate_selection_recovers_two_breaks() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let status = binary()
        .args([
            "simulate",
            "--experiment",
            "selection",
            "--n",
            "300",
            "--t",
            "12",
            "--breaks",
            "4,8",
            "--reps",
            "20",
            "--seed",
            "7",
            "--out-dir",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());

    let selection = fs::read_to_string(out.join("mc_selection.csv")).unwrap();
    let m2: Vec<&str> = selection
        .lines()
        .filter(|l| l.starts_with("hqic,2,"))
        .collect();
    assert_eq!(m2.len(), 1);
    let count: usize = m2[0].split(',').nth(2).unwrap().parse().unwrap();
    assert!(count >= 18, "selection too often misses m = 2: {selection}");
}

#[test]
fn missing_input_fails_with_diagnostic() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let output = binary()
        .args(["detect", "--input", "/nonexistent/panel.csv"])
        .args(["--x-cols", "x1", "--out-dir"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("cannot open"), "{stderr}");
}

#[test]
fn fixed_m_conflicts_with_penalty_flag() {
    let output = binary()
        .args(["detect", "--input", "x.csv", "--x-cols", "x1"])
        .args(["--m", "1", "--penalty", "bic"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("cannot be used with"), "{stderr}");
}
