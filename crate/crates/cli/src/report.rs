//! CSV report emission and the human-readable run log.
//!
//! Every artifact is plain CSV meant for external plotting or inspection;
//! floats print in shortest round-trip form so files diff cleanly across
//! runs with the same inputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use panelbreak::detect::DetectionRow;
use panelbreak::infer::BonferroniReport;
use panelbreak::simlab::McSummary;
use panelbreak::{FeEstimate, FfeEstimate, IcCurve, Partition};

/// Collects log lines, echoes them to stdout, and lands them in `run.log`.
pub struct RunLog {
    lines: Vec<String>,
}

impl RunLog {
    pub fn new(title: &str) -> Self {
        let mut log = Self { lines: Vec::new() };
        log.line(title.to_string());
        log
    }

    pub fn line(&mut self, text: impl Into<String>) {
        let text = text.into();
        println!("{text}");
        self.lines.push(text);
    }

    pub fn finish(self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("run.log");
        fs::write(&path, self.lines.join("\n") + "\n")
            .with_context(|| format!("writing '{}'", path.display()))?;
        Ok(path)
    }
}

fn csv_writer(out_dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf)> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory '{}'", out_dir.display()))?;
    let path = out_dir.join(name);
    let writer =
        csv::Writer::from_path(&path).with_context(|| format!("creating '{}'", path.display()))?;
    Ok((writer, path))
}

fn num(v: f64) -> String {
    v.to_string()
}

/// `ic_curve.csv`: one row per candidate break count.
pub fn write_ic_curve(out_dir: &Path, curve: &IcCurve) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(out_dir, "ic_curve.csv")?;
    w.write_record(["m", "s_nt", "p_star", "ic", "selected"])?;
    for row in &curve.rows {
        w.write_record([
            row.m.to_string(),
            num(row.s_nt),
            row.p_star.to_string(),
            num(row.ic),
            (row.m == curve.m_hat).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `breaks.csv`: the chosen break periods with their original labels.
pub fn write_breaks(out_dir: &Path, partition: &Partition, times: &[String]) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(out_dir, "breaks.csv")?;
    w.write_record(["break", "period", "label"])?;
    for (j, &b) in partition.breaks().iter().enumerate() {
        w.write_record([(j + 1).to_string(), b.to_string(), times[b - 1].clone()])?;
    }
    w.flush()?;
    Ok(path)
}

/// `regime_ols.csv`: pooled per-regime slopes at the chosen partition.
pub fn write_regime_ols(
    out_dir: &Path,
    row: &DetectionRow<f64>,
    names: &[String],
    times: &[String],
) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(out_dir, "regime_ols.csv")?;
    w.write_record([
        "regime",
        "start",
        "end",
        "start_label",
        "end_label",
        "col",
        "name",
        "estimate",
        "full_rank",
    ])?;
    for (j, start, end) in row.partition.regimes() {
        let gamma = &row.gamma[j - 1];
        for (k, name) in names.iter().enumerate() {
            w.write_record([
                j.to_string(),
                start.to_string(),
                end.to_string(),
                times[start - 1].clone(),
                times[end - 1].clone(),
                k.to_string(),
                name.clone(),
                num(gamma[k]),
                row.full_rank[j - 1].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// `estimates_fe.csv`: within-estimator slopes with identifiability masks.
///
/// Single-period regimes and columns that never move within a regime get
/// `identified = false` rows with empty estimate and se cells.
pub fn write_fe(
    out_dir: &Path,
    fe: &FeEstimate,
    partition: &Partition,
    names: &[String],
    times: &[String],
) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(out_dir, "estimates_fe.csv")?;
    w.write_record([
        "regime",
        "start_label",
        "end_label",
        "col",
        "name",
        "identified",
        "estimate",
        "se",
    ])?;
    for (j, start, end) in partition.regimes() {
        let reg = fe.regime(j);
        let ses = fe.se(j);
        for (k, name) in names.iter().enumerate() {
            let slot = reg.and_then(|r| {
                r.identified[k].then(|| r.cols.iter().position(|&c| c == k).unwrap())
            });
            let (identified, estimate, se) = match (reg, slot) {
                (Some(r), Some(a)) => (
                    true,
                    num(r.beta[a]),
                    ses.as_ref().map_or_else(String::new, |s| num(s[a])),
                ),
                _ => (false, String::new(), String::new()),
            };
            w.write_record([
                j.to_string(),
                times[start - 1].clone(),
                times[end - 1].clone(),
                k.to_string(),
                name.clone(),
                identified.to_string(),
                estimate,
                se,
            ])?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// `estimates_ffe.csv`: full-sample estimator coefficients.
///
/// Rows flagged `contrast = true` report a difference against regime 1
/// (the column never varies over time, so only differences are
/// identified). An empty se cell means the requested covariance does not
/// cover that coefficient.
pub fn write_ffe(out_dir: &Path, ffe: &FfeEstimate, names: &[String]) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(out_dir, "estimates_ffe.csv")?;
    w.write_record(["regime", "col", "name", "contrast", "estimate", "se"])?;
    for coef in &ffe.basis {
        let estimate = ffe.beta_for(coef.regime, coef.col).expect("basis entry");
        let se = ffe
            .se_for(coef.regime, coef.col)
            .map_or_else(String::new, num);
        w.write_record([
            coef.regime.to_string(),
            coef.col.to_string(),
            names[coef.col].clone(),
            coef.contrast.to_string(),
            num(estimate),
            se,
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `wald.csv`: adjacent-regime tests with Bonferroni rejection flags.
pub fn write_wald(out_dir: &Path, families: &[(&str, &BonferroniReport<f64>)]) -> Result<PathBuf> {
    let (mut w, path) = csv_writer(out_dir, "wald.csv")?;
    w.write_record([
        "family",
        "left",
        "right",
        "statistic",
        "df",
        "p_value",
        "per_test_alpha",
        "reject",
    ])?;
    for (family, report) in families {
        for (result, reject) in &report.items {
            w.write_record([
                family.to_string(),
                result.left.to_string(),
                result.right.to_string(),
                num(result.statistic),
                result.df.to_string(),
                num(result.p_value),
                num(report.per_test_alpha),
                reject.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// Monte Carlo artifacts; returns the files actually written.
///
/// `mc_slopes.csv`, `mc_locations.csv`, `mc_selection.csv` and
/// `mc_sweep.csv` appear only when the experiment produced that section.
pub fn write_mc(out_dir: &Path, summary: &McSummary) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    if !summary.slopes.is_empty() {
        let (mut w, path) = csv_writer(out_dir, "mc_slopes.csv")?;
        w.write_record([
            "estimator",
            "regime",
            "col",
            "truth",
            "bias",
            "sd",
            "mse",
            "se_mean",
            "used",
        ])?;
        for row in &summary.slopes {
            w.write_record([
                row.estimator.to_string(),
                row.regime.to_string(),
                row.col.to_string(),
                num(row.truth),
                num(row.stats.bias),
                num(row.stats.sd),
                num(row.stats.mse),
                row.stats.se_mean.map_or_else(String::new, num),
                row.used.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }

    if !summary.locations.is_empty() {
        let (mut w, path) = csv_writer(out_dir, "mc_locations.csv")?;
        w.write_record(["break", "period", "count"])?;
        for hist in &summary.locations {
            for (period, &count) in hist.counts.iter().enumerate().skip(1) {
                w.write_record([
                    hist.break_index.to_string(),
                    period.to_string(),
                    count.to_string(),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    if !summary.mhat.is_empty() {
        let (mut w, path) = csv_writer(out_dir, "mc_selection.csv")?;
        w.write_record(["penalty", "m", "count", "rate_correct"])?;
        for row in &summary.mhat {
            for (m, &count) in row.counts.iter().enumerate() {
                w.write_record([
                    row.label.clone(),
                    m.to_string(),
                    count.to_string(),
                    num(row.rate_correct),
                ])?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    if !summary.sweep.is_empty() {
        let (mut w, path) = csv_writer(out_dir, "mc_sweep.csv")?;
        w.write_record(["param", "rate", "modal_break", "conditioned"])?;
        for row in &summary.sweep {
            w.write_record([
                num(row.param),
                num(row.rate),
                row.modal_break.map_or_else(String::new, |b| b.to_string()),
                row.conditioned.to_string(),
            ])?;
        }
        w.flush()?;
        written.push(path);
    }

    Ok(written)
}
