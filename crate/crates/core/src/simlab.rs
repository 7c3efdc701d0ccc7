//! Synthetic panels and seeded Monte Carlo experiments.
//!
//! The generator produces balanced panels whose regressors load on an
//! unobserved per-individual effect that also enters the outcome, so pooled
//! slopes are biased while the slope changes across regimes remain
//! detectable. Experiments run replications in parallel on independent RNG
//! streams keyed by `(seed, replication)`; aggregation folds results in
//! replication order, so summaries are bit-identical across runs and thread
//! counts.
//!
//! This module works in `f64`: the experiment layer mixes estimation with
//! chi-square p-values and CSV-facing summaries, none of which benefit from
//! a generic scalar.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::detect::{detect_all, dp_optimal_partition, SegmentSseTable};
use crate::error::{Error, Result};
use crate::estimate::{fe_estimate, ffe_estimate, regime_ols, VcovKind};
use crate::gram::GramTable;
use crate::panel::{PanelData, Partition};
use crate::select::{select_m, IcConfig, PenaltyKind};

/// Default slope magnitude: regimes alternate between `-0.1` and `0.1`.
pub const DEFAULT_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub p: usize,
    /// True break periods, strictly increasing inside `1..t`.
    pub breaks: Vec<usize>,
    /// Per-regime slope vectors, `breaks.len() + 1` rows of length `p`.
    pub beta: Vec<Vec<f64>>,
    /// Variance of the individual effect entering the outcome.
    pub sigma_c2: f64,
    /// Variance of the idiosyncratic outcome error.
    pub sigma_eps2: f64,
    /// Variance of each noise source inside the regressors.
    pub noise_var: f64,
    /// Coefficient on the effect inside the regressors.
    pub loading: f64,
    /// Share of regressor noise that is constant over time, in `[0, 1]`.
    pub mixing_w: f64,
    /// AR(1) coefficient of the outcome error over time.
    pub error_rho: f64,
    pub replications: usize,
    pub seed: u64,
}

impl DgpConfig {
    /// Baseline: one regressor, effect variance 1/4, error variance 1/4,
    /// noise variance 1/2, loading `sqrt(2)`, no mixing, no serial
    /// correlation. Break layout and slopes come from the caller.
    pub fn base(n: usize, t: usize, breaks: Vec<usize>, beta: Vec<Vec<f64>>) -> Self {
        Self {
            n,
            t,
            p: 1,
            breaks,
            beta,
            sigma_c2: 0.25,
            sigma_eps2: 0.25,
            noise_var: 0.5,
            loading: 2f64.sqrt(),
            mixing_w: 0.0,
            error_rho: 0.0,
            replications: 1000,
            seed: 20260401,
        }
    }

    /// One break at `floor(t/3)`, slopes `-0.1` then `0.1`.
    pub fn single_break(n: usize, t: usize) -> Self {
        assert!(t >= 3);
        Self::base(
            n,
            t,
            vec![t / 3],
            vec![vec![-DEFAULT_SLOPE], vec![DEFAULT_SLOPE]],
        )
    }

    /// One break right after the second period, the short-first-regime case.
    pub fn early_break(n: usize, t: usize) -> Self {
        assert!(t >= 4);
        Self::base(
            n,
            t,
            vec![2],
            vec![vec![-DEFAULT_SLOPE], vec![DEFAULT_SLOPE]],
        )
    }

    /// Breaks at `floor(t/3)` and `floor(2t/3)`, slopes alternating.
    pub fn double_break(n: usize, t: usize) -> Self {
        assert!(t >= 5);
        Self::base(
            n,
            t,
            vec![t / 3, 2 * t / 3],
            vec![
                vec![-DEFAULT_SLOPE],
                vec![DEFAULT_SLOPE],
                vec![-DEFAULT_SLOPE],
            ],
        )
    }

    pub fn no_break(n: usize, t: usize) -> Self {
        Self::base(n, t, vec![], vec![vec![-DEFAULT_SLOPE]])
    }

    /// Many-regressor panel with one small break of size `delta` per slope:
    /// 15 regressors, 216 individuals, 18 periods, break after period 14.
    pub fn wide_panel(delta: f64) -> Self {
        let p = 15;
        let beta1: Vec<f64> = (0..p)
            .map(|k| {
                if k % 2 == 0 {
                    -DEFAULT_SLOPE
                } else {
                    DEFAULT_SLOPE
                }
            })
            .collect();
        let beta2: Vec<f64> = beta1.iter().map(|b| b + delta).collect();
        let mut cfg = Self::base(216, 18, vec![14], vec![beta1, beta2]);
        cfg.p = p;
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_mixing(mut self, w: f64) -> Self {
        self.mixing_w = w;
        self
    }

    pub fn with_error_rho(mut self, rho: f64) -> Self {
        self.error_rho = rho;
        self
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::new(self.breaks.clone(), self.t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t < 2 || self.p == 0 {
            return Err(Error::InvalidArgument(format!(
                "need n >= 1, t >= 2, p >= 1, got n = {}, t = {}, p = {}",
                self.n, self.t, self.p
            )));
        }
        self.partition()?;
        if self.beta.len() != self.breaks.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} slope rows for {} regimes",
                self.beta.len(),
                self.breaks.len() + 1
            )));
        }
        if self.beta.iter().any(|b| b.len() != self.p) {
            return Err(Error::InvalidArgument(format!(
                "every slope row must have p = {} entries",
                self.p
            )));
        }
        if !(self.sigma_c2 >= 0.0 && self.sigma_eps2 > 0.0 && self.noise_var > 0.0) {
            return Err(Error::InvalidArgument(
                "effect variance must be nonnegative, error and noise variances positive".into(),
            ));
        }
        if !self.loading.is_finite() {
            return Err(Error::InvalidArgument("loading must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.mixing_w) {
            return Err(Error::InvalidArgument(format!(
                "mixing weight must lie in [0, 1], got {}",
                self.mixing_w
            )));
        }
        if !self.error_rho.is_finite() || self.error_rho.abs() >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "error AR(1) coefficient must lie in (-1, 1), got {}",
                self.error_rho
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument(
                "need at least one replication".into(),
            ));
        }
        Ok(())
    }
}

/// One generated panel with its generating pieces kept for diagnostics.
#[derive(Debug, Clone)]
pub struct PanelDraw {
    pub panel: PanelData<f64>,
    /// Per-individual effect entering the outcome.
    pub effects: Vec<f64>,
    pub truth: Partition,
}

impl PanelDraw {
    /// The same panel with the individual effect removed from the outcome,
    /// sharing every other draw. Detection on both versions isolates what
    /// the omitted effect does to break estimates.
    pub fn without_effects(&self) -> PanelData<f64> {
        let n = self.panel.n();
        let t = self.panel.t_periods();
        let p = self.panel.p();
        let mut y = Vec::with_capacity(n * t);
        let mut x = Vec::with_capacity(n * t * p);
        for ti in 1..=t {
            for i in 0..n {
                y.push(self.panel.y(i, ti) - self.effects[i]);
                x.extend_from_slice(self.panel.x(i, ti));
            }
        }
        PanelData::new(n, t, self.panel.names().to_vec(), y, x, false)
            .expect("source panel was valid")
    }
}

/// Draws one panel. Deterministic in `(cfg.seed, rep)`: each replication
/// gets its own ChaCha stream, so replications can run in any order.
pub fn generate_panel(cfg: &DgpConfig, rep: u64) -> Result<PanelDraw> {
    cfg.validate()?;
    let (n, t, p) = (cfg.n, cfg.t, cfg.p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(rep);

    let std_c = cfg.sigma_c2.sqrt();
    let std_eps = cfg.sigma_eps2.sqrt();
    let std_noise = cfg.noise_var.sqrt();
    let norm_c = Normal::new(0.0, std_c).map_err(invalid)?;
    let norm_eps = Normal::new(0.0, std_eps).map_err(invalid)?;
    let norm_noise = Normal::new(0.0, std_noise).map_err(invalid)?;

    let effects: Vec<f64> = (0..n).map(|_| norm_c.sample(&mut rng)).collect();

    // Outcome errors, individual-major; AR(1) over time with stationary
    // variance sigma_eps2.
    let innov_scale = (1.0 - cfg.error_rho * cfg.error_rho).sqrt();
    let mut eps = vec![0.0f64; n * t];
    for i in 0..n {
        let mut prev = norm_eps.sample(&mut rng);
        eps[i * t] = prev;
        for ti in 1..t {
            let draw = norm_eps.sample(&mut rng);
            prev = if cfg.error_rho == 0.0 {
                draw
            } else {
                cfg.error_rho * prev + innov_scale * draw
            };
            eps[i * t + ti] = prev;
        }
    }

    // Regressors, individual-major per column. Column 0 loads on the same
    // effect as the outcome; the rest get independent effects of their own.
    let mut x_cols = vec![0.0f64; p * n * t];
    for k in 0..p {
        let ck: Vec<f64> = if k == 0 {
            effects.clone()
        } else {
            (0..n).map(|_| norm_c.sample(&mut rng)).collect()
        };
        let g: Vec<f64> = if cfg.mixing_w > 0.0 {
            (0..n).map(|_| norm_noise.sample(&mut rng)).collect()
        } else {
            Vec::new()
        };
        for i in 0..n {
            for ti in 0..t {
                let z = norm_noise.sample(&mut rng);
                let e = if cfg.mixing_w > 0.0 {
                    cfg.mixing_w * g[i] + (1.0 - cfg.mixing_w) * z
                } else {
                    z
                };
                x_cols[(k * n + i) * t + ti] = cfg.loading * ck[i] + e;
            }
        }
    }

    let truth = cfg.partition()?;
    let mut y = Vec::with_capacity(n * t);
    let mut x = Vec::with_capacity(n * t * p);
    for ti in 1..=t {
        let j = truth.regime_of(ti);
        let slopes = &cfg.beta[j - 1];
        for i in 0..n {
            let mut mean = effects[i] + eps[i * t + (ti - 1)];
            for k in 0..p {
                let xv = x_cols[(k * n + i) * t + (ti - 1)];
                mean += slopes[k] * xv;
                x.push(xv);
            }
            y.push(mean);
        }
    }
    let names = (0..p).map(|k| format!("x{}", k + 1)).collect();
    let panel = PanelData::new(n, t, names, y, x, false)?;
    Ok(PanelDraw {
        panel,
        effects,
        truth,
    })
}

fn invalid<E: fmt::Display>(e: E) -> Error {
    Error::InvalidArgument(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EstimatorKind {
    PooledOls,
    Fe,
    Ffe,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::PooledOls => "ols",
            EstimatorKind::Fe => "fe",
            EstimatorKind::Ffe => "ffe",
        })
    }
}

/// Moments of one coefficient across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeStats {
    pub bias: f64,
    /// Population standard deviation of the estimates.
    pub sd: f64,
    pub mse: f64,
    /// Mean of the per-replication estimated standard errors, when defined.
    pub se_mean: Option<f64>,
}

/// Per-replication estimates and their reported standard errors reduced to
/// the summary moments.
pub fn summarize(truth: f64, estimates: &[f64], ses: &[Option<f64>]) -> Result<SlopeStats> {
    if estimates.is_empty() || estimates.len() != ses.len() {
        return Err(Error::InvalidArgument(
            "summarize needs matching, nonempty estimate and SE lists".into(),
        ));
    }
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = estimates
        .iter()
        .map(|e| (e - mean) * (e - mean))
        .sum::<f64>()
        / r;
    let mse = estimates
        .iter()
        .map(|e| (e - truth) * (e - truth))
        .sum::<f64>()
        / r;
    let defined: Vec<f64> = ses.iter().flatten().copied().collect();
    let se_mean = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    Ok(SlopeStats {
        bias: mean - truth,
        sd: var.sqrt(),
        mse,
        se_mean,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeRow {
    pub estimator: EstimatorKind,
    /// 1-based regime.
    pub regime: usize,
    /// Source column index.
    pub col: usize,
    pub truth: f64,
    pub stats: SlopeStats,
    /// Replications contributing to this row.
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationHistogram {
    /// 1-based break index.
    pub break_index: usize,
    /// `counts[t]` = replications that put this break after period `t`;
    /// index 0 is unused.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhatRow {
    pub penalty: PenaltyKind,
    pub label: String,
    /// `counts[m]` = replications selecting `m` breaks.
    pub counts: Vec<usize>,
    /// Share of replications selecting the true break count.
    pub rate_correct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Swept parameter value (mixing weight or break size).
    pub param: f64,
    /// Share of replications selecting the true break count.
    pub rate: f64,
    /// Most frequent estimated first-break location among replications
    /// selecting one break.
    pub modal_break: Option<usize>,
    /// Replications behind `modal_break`.
    pub conditioned: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub label: String,
    pub replications: usize,
    pub truth_breaks: Vec<usize>,
    pub slopes: Vec<SlopeRow>,
    pub locations: Vec<LocationHistogram>,
    /// Share of replications recovering the whole true break vector, for
    /// experiments that estimate locations.
    pub exact_rate: Option<f64>,
    pub mhat: Vec<MhatRow>,
    pub sweep: Vec<SweepRow>,
    pub notes: Vec<String>,
}

impl McSummary {
    fn empty(label: String, cfg: &DgpConfig) -> Self {
        Self {
            label,
            replications: cfg.replications,
            truth_breaks: cfg.breaks.clone(),
            slopes: Vec::new(),
            locations: Vec::new(),
            exact_rate: None,
            mhat: Vec::new(),
            sweep: Vec::new(),
            notes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Experiment {
    /// Break-location histograms with the break count held at `m`.
    Locations { m: usize },
    /// Slope estimators evaluated at the true partition.
    Slopes { vcov: VcovKind },
    /// Distribution of the selected break count per penalty.
    Selection {
        penalties: Vec<PenaltyKind>,
        m_max: Option<usize>,
    },
    /// Selection accuracy as the time-constant noise share sweeps a grid.
    MixingSweep {
        grid: Vec<f64>,
        penalty: PenaltyKind,
        m_max: Option<usize>,
    },
    /// Detection of a single small break as its size sweeps a grid; the
    /// location histogram conditions on selecting exactly one break.
    BreakSizeSweep {
        deltas: Vec<f64>,
        penalty: PenaltyKind,
        m_max: Option<usize>,
    },
}

fn par_replications<O: Send>(
    cfg: &DgpConfig,
    worker: impl Fn(u64) -> Result<O> + Sync + Send,
) -> Result<Vec<O>> {
    (0..cfg.replications as u64)
        .into_par_iter()
        .map(worker)
        .collect()
}

fn sse_table(panel: &PanelData<f64>) -> Result<SegmentSseTable<f64>> {
    let gram = GramTable::build(panel)?;
    SegmentSseTable::build(&gram)
}

pub fn run_monte_carlo(cfg: &DgpConfig, experiment: &Experiment) -> Result<McSummary> {
    cfg.validate()?;
    match experiment {
        Experiment::Locations { m } => run_locations(cfg, *m),
        Experiment::Slopes { vcov } => run_slopes(cfg, *vcov),
        Experiment::Selection { penalties, m_max } => run_selection(cfg, penalties, *m_max),
        Experiment::MixingSweep {
            grid,
            penalty,
            m_max,
        } => run_mixing_sweep(cfg, grid, *penalty, *m_max),
        Experiment::BreakSizeSweep {
            deltas,
            penalty,
            m_max,
        } => run_break_size_sweep(cfg, deltas, *penalty, *m_max),
    }
}

fn run_locations(cfg: &DgpConfig, m: usize) -> Result<McSummary> {
    if m >= cfg.t {
        return Err(Error::InvalidArgument(format!(
            "cannot place {m} breaks in {} periods",
            cfg.t
        )));
    }
    let outcomes = par_replications(cfg, |rep| {
        let draw = generate_panel(cfg, rep)?;
        let table = sse_table(&draw.panel)?;
        Ok(dp_optimal_partition(&table, m)?.partition.breaks().to_vec())
    })?;

    let mut counts = vec![vec![0usize; cfg.t]; m];
    let mut exact = 0usize;
    for breaks in &outcomes {
        for (j, &b) in breaks.iter().enumerate() {
            counts[j][b] += 1;
        }
        if breaks == &cfg.breaks {
            exact += 1;
        }
    }
    let mut summary = McSummary::empty(format!("locations at m = {m}"), cfg);
    summary.locations = counts
        .into_iter()
        .enumerate()
        .map(|(j, counts)| LocationHistogram {
            break_index: j + 1,
            counts,
        })
        .collect();
    summary.exact_rate = Some(exact as f64 / cfg.replications as f64);
    summary
        .notes
        .push(format!("break count held at {m}; no conditioning"));
    Ok(summary)
}

type SlopeKey = (EstimatorKind, usize, usize);

fn run_slopes(cfg: &DgpConfig, vcov: VcovKind) -> Result<McSummary> {
    let truth = cfg.partition()?;
    let outcomes = par_replications(cfg, |rep| {
        let draw = generate_panel(cfg, rep)?;
        let mut rows: Vec<(SlopeKey, f64, Option<f64>)> = Vec::new();

        let gram = GramTable::build(&draw.panel)?;
        let ols = regime_ols(&gram, &truth)?;
        for (j, gamma) in ols.gamma.iter().enumerate() {
            for k in 0..cfg.p {
                rows.push(((EstimatorKind::PooledOls, j + 1, k), gamma[k], None));
            }
        }

        let fe = fe_estimate(&draw.panel, &truth, vcov)?;
        for reg in &fe.regimes {
            let ses = fe.se(reg.regime).expect("regime exists");
            for (a, &col) in reg.cols.iter().enumerate() {
                rows.push((
                    (EstimatorKind::Fe, reg.regime, col),
                    reg.beta[a],
                    Some(ses[a]),
                ));
            }
        }

        let ffe = ffe_estimate(&draw.panel, &truth, vcov)?;
        for coef in &ffe.basis {
            if coef.contrast {
                continue;
            }
            let est = ffe.beta_for(coef.regime, coef.col).expect("basis entry");
            rows.push((
                (EstimatorKind::Ffe, coef.regime, coef.col),
                est,
                ffe.se_for(coef.regime, coef.col),
            ));
        }
        Ok(rows)
    })?;

    let mut by_key: BTreeMap<SlopeKey, (Vec<f64>, Vec<Option<f64>>)> = BTreeMap::new();
    for rep_rows in &outcomes {
        for (key, est, se) in rep_rows {
            let entry = by_key.entry(*key).or_default();
            entry.0.push(*est);
            entry.1.push(*se);
        }
    }

    let mut summary = McSummary::empty(format!("slope estimators ({vcov} SEs)"), cfg);
    for ((estimator, regime, col), (ests, ses)) in by_key {
        let truth_val = cfg.beta[regime - 1][col];
        summary.slopes.push(SlopeRow {
            estimator,
            regime,
            col,
            truth: truth_val,
            stats: summarize(truth_val, &ests, &ses)?,
            used: ests.len(),
        });
    }
    summary
        .notes
        .push("estimators evaluated at the true partition".into());
    Ok(summary)
}

fn run_selection(
    cfg: &DgpConfig,
    penalties: &[PenaltyKind],
    m_max: Option<usize>,
) -> Result<McSummary> {
    if penalties.is_empty() {
        return Err(Error::InvalidArgument("no penalty to evaluate".into()));
    }
    let m_max = m_max.unwrap_or(cfg.t - 1);
    let outcomes = par_replications(cfg, |rep| {
        let draw = generate_panel(cfg, rep)?;
        let table = sse_table(&draw.panel)?;
        let det = detect_all(&table, m_max)?;
        let mut mhats = Vec::with_capacity(penalties.len());
        for &penalty in penalties {
            let curve = select_m(
                &det,
                &IcConfig {
                    penalty,
                    m_max: Some(m_max),
                },
            )?;
            mhats.push(curve.m_hat);
        }
        Ok(mhats)
    })?;

    let mut summary = McSummary::empty("break-count selection".into(), cfg);
    for (pi, &penalty) in penalties.iter().enumerate() {
        let mut counts = vec![0usize; m_max + 1];
        for rep_mhats in &outcomes {
            counts[rep_mhats[pi]] += 1;
        }
        let rate_correct = counts[cfg.breaks.len()] as f64 / cfg.replications as f64;
        summary.mhat.push(MhatRow {
            penalty,
            label: penalty.to_string(),
            counts,
            rate_correct,
        });
    }
    summary
        .notes
        .push(format!("break count searched up to {m_max}"));
    Ok(summary)
}

fn run_mixing_sweep(
    cfg: &DgpConfig,
    grid: &[f64],
    penalty: PenaltyKind,
    m_max: Option<usize>,
) -> Result<McSummary> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty mixing grid".into()));
    }
    let mut summary = McSummary::empty(format!("mixing sweep under {penalty}"), cfg);
    for &w in grid {
        let sub = cfg.clone().with_mixing(w);
        let res = run_selection(&sub, &[penalty], m_max)?;
        summary.sweep.push(SweepRow {
            param: w,
            rate: res.mhat[0].rate_correct,
            modal_break: None,
            conditioned: cfg.replications,
        });
    }
    summary
        .notes
        .push("each grid point reruns selection with the noise mixing weight replaced".into());
    Ok(summary)
}

fn run_break_size_sweep(
    cfg: &DgpConfig,
    deltas: &[f64],
    penalty: PenaltyKind,
    m_max: Option<usize>,
) -> Result<McSummary> {
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty break-size grid".into()));
    }
    if cfg.breaks.len() != 1 {
        return Err(Error::InvalidArgument(
            "the break-size sweep needs a single-break base configuration".into(),
        ));
    }
    let m_max = m_max.unwrap_or(cfg.t - 1);
    let mut summary = McSummary::empty(format!("break-size sweep under {penalty}"), cfg);
    for &delta in deltas {
        let mut sub = cfg.clone();
        sub.beta[1] = sub.beta[0].iter().map(|b| b + delta).collect();
        let outcomes = par_replications(&sub, |rep| {
            let draw = generate_panel(&sub, rep)?;
            let table = sse_table(&draw.panel)?;
            let det = detect_all(&table, m_max)?;
            let curve = select_m(
                &det,
                &IcConfig {
                    penalty,
                    m_max: Some(m_max),
                },
            )?;
            let first_break = if curve.m_hat == 1 {
                Some(det.row(1).partition.breaks()[0])
            } else {
                None
            };
            Ok((curve.m_hat, first_break))
        })?;

        let hits = outcomes.iter().filter(|(mh, _)| *mh == 1).count();
        let mut hist = vec![0usize; sub.t];
        for (_, b) in &outcomes {
            if let Some(b) = b {
                hist[*b] += 1;
            }
        }
        let modal_break = hist
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
            .filter(|(_, &c)| c > 0)
            .map(|(idx, _)| idx);
        summary.sweep.push(SweepRow {
            param: delta,
            rate: hits as f64 / sub.replications as f64,
            modal_break,
            conditioned: hits,
        });
    }
    summary
        .notes
        .push("modal break location conditions on selecting exactly one break".into());
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = DgpConfig::single_break(20, 9);
        assert!(cfg.validate().is_ok());
        cfg.beta.push(vec![0.3]);
        assert!(cfg.validate().is_err());

        let mut cfg = DgpConfig::single_break(20, 9);
        cfg.breaks = vec![9];
        assert!(cfg.validate().is_err());

        let mut cfg = DgpConfig::single_break(20, 9);
        cfg.mixing_w = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = DgpConfig::single_break(20, 9);
        cfg.error_rho = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = DgpConfig::single_break(20, 9);
        cfg.sigma_eps2 = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn presets_place_breaks_as_documented() {
        assert_eq!(DgpConfig::single_break(10, 20).breaks, vec![6]);
        assert_eq!(DgpConfig::double_break(10, 20).breaks, vec![6, 13]);
        assert_eq!(DgpConfig::early_break(10, 20).breaks, vec![2]);
        let wide = DgpConfig::wide_panel(0.02);
        assert_eq!((wide.n, wide.t, wide.p, wide.breaks[0]), (216, 18, 15, 14));
        assert_eq!(wide.beta[0][0], -0.1);
        assert_abs_diff_eq!(wide.beta[1][0], -0.08);
        assert!(wide.validate().is_ok());
    }

    #[test]
    fn draws_are_deterministic_per_stream() {
        let cfg = DgpConfig::single_break(15, 9).with_seed(99);
        let a = generate_panel(&cfg, 3).unwrap();
        let b = generate_panel(&cfg, 3).unwrap();
        assert_eq!(a.panel.y(4, 5), b.panel.y(4, 5));
        assert_eq!(a.panel.x(7, 2), b.panel.x(7, 2));
        let c = generate_panel(&cfg, 4).unwrap();
        assert_ne!(a.panel.y(4, 5), c.panel.y(4, 5));
    }

    #[test]
    fn generated_moments_match_design() {
        let cfg = DgpConfig::single_break(4000, 12).with_seed(5);
        let draw = generate_panel(&cfg, 0).unwrap();
        let (n, t) = (cfg.n, cfg.t);
        let nt = (n * t) as f64;

        let mut sx = 0.0;
        let mut sxx = 0.0;
        let mut sxc = 0.0;
        for ti in 1..=t {
            for i in 0..n {
                let x = draw.panel.x(i, ti)[0];
                sx += x;
                sxx += x * x;
                sxc += x * draw.effects[i];
            }
        }
        let var_x = sxx / nt - (sx / nt) * (sx / nt);
        // Var(x) = loading^2 * 1/4 + 1/2 = 1.
        assert_relative_eq!(var_x, 1.0, max_relative = 0.05);
        // Cov(x, c) = loading * 1/4.
        assert_relative_eq!(sxc / nt, 2f64.sqrt() / 4.0, max_relative = 0.06);

        // Residual variance of y at the truth.
        let mut see = 0.0;
        for ti in 1..=t {
            let j = draw.truth.regime_of(ti);
            for i in 0..n {
                let e = draw.panel.y(i, ti)
                    - cfg.beta[j - 1][0] * draw.panel.x(i, ti)[0]
                    - draw.effects[i];
                see += e * e;
            }
        }
        assert_relative_eq!(see / nt, 0.25, max_relative = 0.05);
    }

    /// Share of regressor-noise variance attributable to the individual,
    /// measured as the fit of `x - loading*c` on individual means.
    fn noise_individual_share(cfg: &DgpConfig) -> f64 {
        let draw = generate_panel(cfg, 1).unwrap();
        let (n, t) = (cfg.n, cfg.t);
        let mut e = vec![0.0; n * t];
        for ti in 1..=t {
            for i in 0..n {
                e[(ti - 1) * n + i] = draw.panel.x(i, ti)[0] - cfg.loading * draw.effects[i];
            }
        }
        let grand = e.iter().sum::<f64>() / (n * t) as f64;
        let mut between = 0.0;
        let mut total = 0.0;
        for i in 0..n {
            let mean_i = (1..=t).map(|ti| e[(ti - 1) * n + i]).sum::<f64>() / t as f64;
            between += t as f64 * (mean_i - grand) * (mean_i - grand);
        }
        for v in &e {
            total += (v - grand) * (v - grand);
        }
        between / total
    }

    #[test]
    fn mixing_weight_controls_individual_noise_share() {
        let base = DgpConfig::single_break(400, 20).with_seed(17);
        let r0 = noise_individual_share(&base);
        // Pure noise against n dummies: share near (n - 1) / (nt - 1).
        assert_abs_diff_eq!(r0, 0.05, epsilon = 0.02);
        let r3 = noise_individual_share(&base.clone().with_mixing(0.3));
        assert_abs_diff_eq!(r3, 0.20, epsilon = 0.04);
        assert!(r3 > r0);
    }

    #[test]
    fn error_rho_induces_serial_correlation() {
        let cfg = DgpConfig::single_break(3000, 10)
            .with_seed(23)
            .with_error_rho(0.5);
        let draw = generate_panel(&cfg, 0).unwrap();
        let (n, t) = (cfg.n, cfg.t);
        let mut resid = vec![0.0; n * t];
        for ti in 1..=t {
            let j = draw.truth.regime_of(ti);
            for i in 0..n {
                resid[i * t + ti - 1] = draw.panel.y(i, ti)
                    - cfg.beta[j - 1][0] * draw.panel.x(i, ti)[0]
                    - draw.effects[i];
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for ti in 0..t - 1 {
                num += resid[i * t + ti] * resid[i * t + ti + 1];
            }
            for ti in 0..t {
                den += resid[i * t + ti] * resid[i * t + ti];
            }
        }
        let rho_hat = num / den * t as f64 / (t as f64 - 1.0);
        assert_abs_diff_eq!(rho_hat, 0.5, epsilon = 0.05);
        // Stationary variance still sigma_eps2.
        assert_relative_eq!(den / (n * t) as f64, 0.25, max_relative = 0.06);
    }

    #[test]
    fn without_effects_strips_only_the_outcome() {
        let cfg = DgpConfig::single_break(10, 6).with_seed(3);
        let draw = generate_panel(&cfg, 0).unwrap();
        let bare = draw.without_effects();
        for i in 0..cfg.n {
            for ti in 1..=cfg.t {
                assert_eq!(bare.x(i, ti), draw.panel.x(i, ti));
                assert_abs_diff_eq!(
                    bare.y(i, ti),
                    draw.panel.y(i, ti) - draw.effects[i],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn summarize_trivial_cases() {
        let s = summarize(2.0, &[1.0, 2.0, 3.0], &[Some(0.1), None, Some(0.3)]).unwrap();
        assert_abs_diff_eq!(s.bias, 0.0, epsilon = 1e-15);
        assert_relative_eq!(s.sd, (2.0f64 / 3.0).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(s.mse, 2.0 / 3.0, max_relative = 1e-12);
        assert_abs_diff_eq!(s.se_mean.unwrap(), 0.2, epsilon = 1e-15);

        let one = summarize(1.5, &[2.0], &[None]).unwrap();
        assert_abs_diff_eq!(one.bias, 0.5);
        assert_abs_diff_eq!(one.mse, 0.25);
        assert!(one.se_mean.is_none());
        assert!(one.mse >= one.bias * one.bias - 1e-15);

        assert!(summarize(0.0, &[], &[]).is_err());
    }

    #[test]
    fn monte_carlo_runs_are_reproducible() {
        let cfg = DgpConfig::single_break(40, 9)
            .with_seed(101)
            .with_replications(12);
        let exp = Experiment::Slopes {
            vcov: VcovKind::Plugin,
        };
        let a = run_monte_carlo(&cfg, &exp).unwrap();
        let b = run_monte_carlo(&cfg, &exp).unwrap();
        assert_eq!(a, b);
        assert!(!a.slopes.is_empty());
        for row in &a.slopes {
            assert!(row.stats.mse >= row.stats.bias * row.stats.bias - 1e-12);
            assert_eq!(row.used, 12);
        }
    }

    #[test]
    fn location_histograms_sum_to_replications() {
        let cfg = DgpConfig::single_break(60, 9)
            .with_seed(7)
            .with_replications(25);
        let out = run_monte_carlo(&cfg, &Experiment::Locations { m: 1 }).unwrap();
        assert_eq!(out.locations.len(), 1);
        assert_eq!(out.locations[0].counts.iter().sum::<usize>(), 25);
        assert!(out.exact_rate.unwrap() > 0.5);
    }

    #[test]
    fn selection_counts_cover_all_replications() {
        let cfg = DgpConfig::single_break(80, 9)
            .with_seed(29)
            .with_replications(20);
        let out = run_monte_carlo(
            &cfg,
            &Experiment::Selection {
                penalties: vec![PenaltyKind::Hqic, PenaltyKind::Bic],
                m_max: Some(4),
            },
        )
        .unwrap();
        assert_eq!(out.mhat.len(), 2);
        for row in &out.mhat {
            assert_eq!(row.counts.iter().sum::<usize>(), 20);
        }
    }

    #[test]
    fn break_size_sweep_tracks_the_single_break() {
        let mut cfg = DgpConfig::single_break(120, 9)
            .with_seed(31)
            .with_replications(15);
        cfg.beta = vec![vec![0.0], vec![0.0]];
        let out = run_monte_carlo(
            &cfg,
            &Experiment::BreakSizeSweep {
                deltas: vec![0.8],
                penalty: PenaltyKind::Hqic,
                m_max: Some(4),
            },
        )
        .unwrap();
        assert_eq!(out.sweep.len(), 1);
        let row = &out.sweep[0];
        assert!(row.rate > 0.8, "rate {}", row.rate);
        assert_eq!(row.modal_break, Some(3));
    }
}
