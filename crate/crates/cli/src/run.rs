//! The four subcommand pipelines behind the binary.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use panelbreak::detect::{detect_all, SegmentSseTable};
use panelbreak::gram::GramTable;
use panelbreak::infer::{bonferroni_adjust, wald_gram_change, wald_slope_change, WaldResult};
use panelbreak::select::detect_and_select;
use panelbreak::simlab::{generate_panel, run_monte_carlo, DgpConfig, Experiment};
use panelbreak::{estimate, Detection, Error, IcConfig, IcCurve, Partition, PenaltyKind, VcovKind};

use crate::loader::{load_csv, write_panel_csv, ColumnRoles, LoadedPanel};
use crate::report;
use crate::report::RunLog;

/// Input file plus column roles, shared by every panel-reading command.
#[derive(Debug, Clone)]
pub struct InputSpec {
    pub path: PathBuf,
    pub roles: ColumnRoles,
    pub intercept: bool,
}

/// How the break count is chosen: fixed by hand or by an information
/// criterion searched up to `m_max`.
#[derive(Debug, Clone)]
pub struct SelectionSpec {
    pub penalty: PenaltyKind,
    pub m_max: Option<usize>,
    pub fixed_m: Option<usize>,
}

struct Detected {
    loaded: LoadedPanel,
    detection: Detection,
    curve: Option<IcCurve>,
}

impl Detected {
    fn chosen(&self) -> &panelbreak::detect::DetectionRow<f64> {
        let m = self.detection.m_hat.expect("pipeline always sets m_hat");
        self.detection.row(m)
    }

    fn partition(&self) -> &Partition {
        &self.chosen().partition
    }
}

fn detect_pipeline(input: &InputSpec, sel: &SelectionSpec, log: &mut RunLog) -> Result<Detected> {
    let loaded = load_csv(&input.path, &input.roles, input.intercept)
        .with_context(|| format!("loading '{}'", input.path.display()))?;
    let panel = &loaded.panel;
    log.line(format!(
        "panel: {} individuals, {} periods, {} regressor column(s)",
        panel.n(),
        panel.t_periods(),
        panel.p(),
    ));

    let gram = GramTable::build(panel).context("building Gram sums")?;
    let table = SegmentSseTable::build(&gram).context("scoring segments")?;

    let (detection, curve) = match sel.fixed_m {
        Some(m) => {
            let mut det = detect_all(&table, m).context("break detection")?;
            det.m_hat = Some(m);
            log.line(format!("break count fixed at m = {m}"));
            (det, None)
        }
        None => {
            let cfg = IcConfig {
                penalty: sel.penalty,
                m_max: sel.m_max,
            };
            let (det, curve) =
                detect_and_select(&table, &cfg).context("break detection and selection")?;
            log.line(format!(
                "selected m = {} break(s) by {}",
                curve.m_hat, sel.penalty
            ));
            (det, Some(curve))
        }
    };

    let result = Detected {
        loaded,
        detection,
        curve,
    };
    let partition = result.partition();
    if partition.m() == 0 {
        log.line("no breaks: a single regime spans the whole sample".to_string());
    } else {
        let labels: Vec<String> = partition
            .breaks()
            .iter()
            .map(|&b| format!("{} ({})", b, result.loaded.time_label(b)))
            .collect();
        log.line(format!("breaks after period(s): {}", labels.join(", ")));
    }
    Ok(result)
}

fn write_detection_reports(out_dir: &Path, run: &Detected, log: &mut RunLog) -> Result<()> {
    if let Some(curve) = &run.curve {
        let path = report::write_ic_curve(out_dir, curve)?;
        log.line(format!("wrote {}", path.display()));
    }
    let path = report::write_breaks(out_dir, run.partition(), &run.loaded.times)?;
    log.line(format!("wrote {}", path.display()));
    let path = report::write_regime_ols(
        out_dir,
        run.chosen(),
        run.loaded.panel.names(),
        &run.loaded.times,
    )?;
    log.line(format!("wrote {}", path.display()));
    Ok(())
}

/// Detect breaks and report the selected partition with pooled slopes.
pub fn cmd_detect(input: &InputSpec, sel: &SelectionSpec, out_dir: &Path) -> Result<()> {
    let mut log = RunLog::new("panelbreak detect");
    let run = detect_pipeline(input, sel, &mut log)?;
    write_detection_reports(out_dir, &run, &mut log)?;
    log.finish(out_dir)?;
    Ok(())
}

/// Detect breaks, then fit the within and full-sample estimators.
pub fn cmd_estimate(
    input: &InputSpec,
    sel: &SelectionSpec,
    vcov: VcovKind,
    out_dir: &Path,
) -> Result<()> {
    let mut log = RunLog::new("panelbreak estimate");
    let run = detect_pipeline(input, sel, &mut log)?;
    write_detection_reports(out_dir, &run, &mut log)?;

    let panel = &run.loaded.panel;
    let partition = run.partition();
    log.line(format!("covariance: {vcov}"));

    match estimate::fe_estimate(panel, partition, vcov) {
        Ok(fe) => {
            for warning in &fe.warnings {
                log.line(format!("fe warning: {warning}"));
            }
            if !fe.singletons.is_empty() {
                log.line(format!(
                    "fe: single-period regime(s) {:?} are not estimable within",
                    fe.singletons
                ));
            }
            let path = report::write_fe(out_dir, &fe, partition, panel.names(), &run.loaded.times)?;
            log.line(format!("wrote {}", path.display()));
        }
        // The full-sample estimator still works when every regime is a
        // single period, so this degrades instead of failing.
        Err(Error::NoEstimableRegime) => {
            log.line("fe skipped: no regime spans two or more periods".to_string());
        }
        Err(e) => return Err(e).context("within estimation"),
    }

    let ffe = estimate::ffe_estimate(panel, partition, vcov).context("full-sample estimation")?;
    for warning in &ffe.warnings {
        log.line(format!("ffe warning: {warning}"));
    }
    let path = report::write_ffe(out_dir, &ffe, panel.names())?;
    log.line(format!("wrote {}", path.display()));

    log.finish(out_dir)?;
    Ok(())
}

/// Detect breaks, then test each adjacent regime pair.
pub fn cmd_test(
    input: &InputSpec,
    sel: &SelectionSpec,
    vcov: VcovKind,
    alpha: f64,
    out_dir: &Path,
) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie strictly between 0 and 1, got {alpha}");
    }
    let mut log = RunLog::new("panelbreak test");
    let run = detect_pipeline(input, sel, &mut log)?;
    write_detection_reports(out_dir, &run, &mut log)?;

    let panel = &run.loaded.panel;
    let partition = run.partition();
    let m = partition.m();
    if m == 0 {
        log.line("no breaks selected, so there is nothing to test".to_string());
        let path = report::write_wald(out_dir, &[])?;
        log.line(format!("wrote {}", path.display()));
        log.finish(out_dir)?;
        return Ok(());
    }

    let fe = estimate::fe_estimate(panel, partition, vcov).context("within estimation")?;
    for warning in &fe.warnings {
        log.line(format!("fe warning: {warning}"));
    }

    // Tests that cannot produce a finite statistic (single-period side,
    // degenerate contrast) are logged and left out of their family.
    let mut slope: Vec<WaldResult<f64>> = Vec::new();
    let mut gram: Vec<WaldResult<f64>> = Vec::new();
    for j in 1..=m {
        match wald_slope_change(&fe, j) {
            Ok(r) => slope.push(r),
            Err(e) => log.line(format!("slope test {j}|{} skipped: {e}", j + 1)),
        }
        match wald_gram_change(panel, partition, j) {
            Ok(r) => gram.push(r),
            Err(e) => log.line(format!("moment test {j}|{} skipped: {e}", j + 1)),
        }
    }

    let slope_report = bonferroni_adjust(&slope, alpha)?;
    let gram_report = bonferroni_adjust(&gram, alpha)?;
    for (family, report) in [("slope", &slope_report), ("moments", &gram_report)] {
        let rejections = report.items.iter().filter(|(_, r)| *r).count();
        log.line(format!(
            "{family}: {rejections} of {} test(s) reject at family level {alpha} \
             (per-test {})",
            report.items.len(),
            report.per_test_alpha,
        ));
    }

    let path = report::write_wald(
        out_dir,
        &[("slope", &slope_report), ("moments", &gram_report)],
    )?;
    log.line(format!("wrote {}", path.display()));
    log.finish(out_dir)?;
    Ok(())
}

/// Which Monte Carlo experiment `cmd_simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimExperiment {
    Locations,
    Slopes,
    Selection,
    MixingSweep,
    BreakSizeSweep,
}

#[derive(Debug, Clone)]
pub struct SimulateSpec {
    pub experiment: SimExperiment,
    pub n: usize,
    pub t: usize,
    /// `None` defaults to one break at `t / 3`; empty means no break.
    pub breaks: Option<Vec<usize>>,
    pub replications: usize,
    pub seed: u64,
    pub penalty: PenaltyKind,
    pub m_max: Option<usize>,
    pub vcov: VcovKind,
    /// Also write the first replication's panel as `panel.csv`.
    pub dump_panel: bool,
}

impl SimulateSpec {
    fn dgp(&self) -> Result<DgpConfig> {
        let breaks = match &self.breaks {
            Some(b) => b.clone(),
            None => vec![self.t / 3],
        };
        // Slopes +-0.1, alternating so every regime boundary moves them.
        let beta: Vec<Vec<f64>> = (0..=breaks.len())
            .map(|j| vec![if j % 2 == 0 { -0.1 } else { 0.1 }])
            .collect();
        let cfg = DgpConfig::base(self.n, self.t, breaks, beta)
            .with_seed(self.seed)
            .with_replications(self.replications);
        cfg.validate().context("simulation configuration")?;
        Ok(cfg)
    }

    fn experiment(&self, cfg: &DgpConfig) -> Experiment {
        match self.experiment {
            SimExperiment::Locations => Experiment::Locations {
                m: cfg.breaks.len(),
            },
            SimExperiment::Slopes => Experiment::Slopes { vcov: self.vcov },
            SimExperiment::Selection => Experiment::Selection {
                penalties: vec![self.penalty],
                m_max: self.m_max,
            },
            SimExperiment::MixingSweep => Experiment::MixingSweep {
                grid: vec![0.0, 0.3, 0.6, 0.9],
                penalty: self.penalty,
                m_max: self.m_max,
            },
            SimExperiment::BreakSizeSweep => Experiment::BreakSizeSweep {
                deltas: vec![0.02, 0.05, 0.1, 0.2, 0.4, 0.8],
                penalty: self.penalty,
                m_max: self.m_max,
            },
        }
    }
}

/// Run one Monte Carlo experiment and write its summary tables.
pub fn cmd_simulate(spec: &SimulateSpec, out_dir: &Path) -> Result<()> {
    let mut log = RunLog::new("panelbreak simulate");
    let cfg = spec.dgp()?;
    log.line(format!(
        "dgp: n = {}, t = {}, breaks {:?}, {} replication(s), seed {}",
        cfg.n, cfg.t, cfg.breaks, cfg.replications, cfg.seed
    ));

    if spec.dump_panel {
        let draw = generate_panel(&cfg, 0).context("drawing the panel to dump")?;
        std::fs::create_dir_all(out_dir)
            .with_context(|| format!("creating output directory '{}'", out_dir.display()))?;
        let path = out_dir.join("panel.csv");
        write_panel_csv(&draw.panel, &path)?;
        log.line(format!("wrote {} (replication 0)", path.display()));
    }

    let experiment = spec.experiment(&cfg);
    let summary = run_monte_carlo(&cfg, &experiment).context("running the experiment")?;

    log.line(format!("experiment: {}", summary.label));
    if let Some(rate) = summary.exact_rate {
        log.line(format!("exact break-vector rate: {rate}"));
    }
    for row in &summary.mhat {
        log.line(format!(
            "{}: correct break count in {} of replications",
            row.label, row.rate_correct
        ));
    }
    for note in &summary.notes {
        log.line(format!("note: {note}"));
    }

    let written = report::write_mc(out_dir, &summary)?;
    for path in written {
        log.line(format!("wrote {}", path.display()));
    }
    log.finish(out_dir)?;
    Ok(())
}
