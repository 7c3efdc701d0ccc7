//! Per-regime slope estimation under individual effects.
//!
//! Pooled OLS on a regime recovers slopes plus an omitted-effect drift, so
//! two fixed-effect transforms are provided for the slopes proper. The
//! within route demeans each regime separately and uses only regimes with at
//! least two periods; coefficients on columns with no within variation in a
//! regime are not identified there and are masked. The full-sample route
//! demeans `y` by each individual's full-sample mean and expands regressors
//! into per-regime blocks, which keeps single-period regimes usable and, for
//! globally time-invariant columns, estimates differences against regime 1
//! after dropping that regime's block column.
//!
//! Covariances come in two flavors. `Plugin` assumes homoskedastic,
//! serially uncorrelated errors and plugs within-regime moment estimates
//! into closed-form expressions; `Cluster` is the standard
//! cluster-by-individual sandwich and is robust to arbitrary within-
//! individual correlation and heteroskedasticity. Both are computed; the
//! requested kind drives `cov()`/`se()`.
//!
//! # References
//!
//! - Wooldridge, Econometric Analysis of Cross Section and Panel Data, ch. 10.
//! - Arellano (1987) for the clustered sandwich.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::detect::segment_sse;
use crate::error::{Error, Result};
use crate::gram::GramTable;
use crate::linalg::{pinv_psd, solve_psd};
use crate::panel::{demean_full_sample, demean_within_regime, PanelData, Partition, RegimeIndex};
use crate::scalar::{conv, Scalar};

/// Condition numbers above this trigger a warning on the estimate.
pub const CONDITION_WARN: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VcovKind {
    Plugin,
    #[default]
    Cluster,
}

impl fmt::Display for VcovKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VcovKind::Plugin => "plugin",
            VcovKind::Cluster => "cluster",
        })
    }
}

impl FromStr for VcovKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plugin" => Ok(VcovKind::Plugin),
            "cluster" => Ok(VcovKind::Cluster),
            other => Err(Error::InvalidArgument(format!(
                "unknown vcov '{other}', expected plugin or cluster"
            ))),
        }
    }
}

/// Pooled OLS slopes per regime of a fixed partition.
#[derive(Debug, Clone)]
pub struct RegimeOls<S: Scalar> {
    pub gamma: Vec<DVector<S>>,
    pub full_rank: Vec<bool>,
    pub sse: S,
    pub s_nt: S,
}

/// Pooled per-regime OLS at a given partition, straight from the Gram table.
///
/// The slopes estimate the sum of the true slopes and the omitted-effect
/// drift, not the slopes themselves; breaks in this composite are what the
/// detector reacts to.
pub fn regime_ols<S: Scalar>(gram: &GramTable<S>, partition: &Partition) -> Result<RegimeOls<S>> {
    if partition.t_periods() != gram.t_periods() {
        return Err(Error::InvalidPartition(format!(
            "partition over {} periods, gram table over {}",
            partition.t_periods(),
            gram.t_periods()
        )));
    }
    let mut gamma = Vec::with_capacity(partition.n_regimes());
    let mut full_rank = Vec::with_capacity(partition.n_regimes());
    let mut sse = S::zero();
    for (_, s, e) in partition.regimes() {
        let fit = segment_sse(gram, s, e)?;
        sse += fit.sse;
        gamma.push(fit.gamma);
        full_rank.push(fit.full_rank);
    }
    let nt = conv::<S>((gram.n() * gram.t_periods()) as f64);
    Ok(RegimeOls {
        gamma,
        full_rank,
        sse,
        s_nt: sse / nt,
    })
}

/// Residual-variance estimate from within-regime residuals.
///
/// Demeaning absorbs one degree of freedom per individual per regime, so the
/// denominator is `sum_j n (dt_j - 1)` over estimable regimes minus the
/// number of estimated coefficients.
pub fn sigma2_hat<S: Scalar>(
    ssr: S,
    n: usize,
    regime_lengths: &[usize],
    k_total: usize,
) -> Result<S> {
    let raw: usize = regime_lengths
        .iter()
        .map(|&dt| n * (dt.saturating_sub(1)))
        .sum();
    if raw <= k_total {
        return Err(Error::InvalidArgument(format!(
            "no degrees of freedom for the residual variance: {raw} demeaned \
             observations for {k_total} coefficients"
        )));
    }
    Ok(ssr / conv::<S>((raw - k_total) as f64))
}

/// Closed-form variance factor of the within estimator: `1 / (dt - 1)`.
pub fn fe_variance_factor<S: Scalar>(delta_t: usize) -> S {
    assert!(delta_t >= 2, "within estimation needs at least two periods");
    S::one() / conv::<S>((delta_t - 1) as f64)
}

/// Closed-form variance factor of the full-sample estimator:
/// `(t^2 - 3t + 1) t^2 / ((t - 1)^4 dt)`.
pub fn ffe_variance_factor<S: Scalar>(t: usize, delta_t: usize) -> S {
    assert!(t >= 4 && delta_t >= 1 && delta_t <= t);
    let tf = t as f64;
    conv::<S>((tf * tf - 3.0 * tf + 1.0) * tf * tf / ((tf - 1.0).powi(4) * delta_t as f64))
}

/// One estimable regime of the within estimator.
#[derive(Debug, Clone)]
pub struct FeRegime<S: Scalar> {
    /// 1-based regime number.
    pub regime: usize,
    pub start: usize,
    pub end: usize,
    /// Identification mask over source columns.
    pub identified: Vec<bool>,
    /// Identified column indices, the coordinate order of `beta`.
    pub cols: Vec<usize>,
    pub beta: DVector<S>,
    /// Row offset of this regime's block in the joint covariance.
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct FeEstimate<S: Scalar> {
    pub n: usize,
    pub regimes: Vec<FeRegime<S>>,
    /// Regimes skipped because they span a single period.
    pub singletons: Vec<usize>,
    pub sigma2: S,
    pub cov_plugin: DMatrix<S>,
    pub cov_cluster: DMatrix<S>,
    pub vcov: VcovKind,
    pub warnings: Vec<String>,
}

impl<S: Scalar> FeEstimate<S> {
    pub fn k_total(&self) -> usize {
        self.regimes.iter().map(|r| r.cols.len()).sum()
    }

    pub fn regime(&self, number: usize) -> Option<&FeRegime<S>> {
        self.regimes.iter().find(|r| r.regime == number)
    }

    /// Covariance selected by the requested kind.
    pub fn cov(&self) -> &DMatrix<S> {
        match self.vcov {
            VcovKind::Plugin => &self.cov_plugin,
            VcovKind::Cluster => &self.cov_cluster,
        }
    }

    /// Standard errors of one regime's coefficients under the active kind.
    pub fn se(&self, regime_number: usize) -> Option<Vec<S>> {
        let reg = self.regime(regime_number)?;
        let nf = conv::<S>(self.n as f64);
        Some(
            (0..reg.cols.len())
                .map(|a| (self.cov()[(reg.offset + a, reg.offset + a)] / nf).sqrt())
                .collect(),
        )
    }
}

struct WithinRegime<S: Scalar> {
    regime: usize,
    start: usize,
    end: usize,
    dt: usize,
    identified: Vec<bool>,
    cols: Vec<usize>,
    /// `(1/n) sum_i sum_t` demeaned Gram over identified columns.
    omega: DMatrix<S>,
    beta: DVector<S>,
    offset: usize,
}

struct WithinFit<S: Scalar> {
    regimes: Vec<WithinRegime<S>>,
    singletons: Vec<usize>,
    k_total: usize,
    sigma2: S,
    /// Per-individual stacked score `sum_t x~_it e_it`, one per individual.
    scores: Vec<DVector<S>>,
    warnings: Vec<String>,
}

fn within_fit<S: Scalar>(panel: &PanelData<S>, partition: &Partition) -> Result<WithinFit<S>> {
    let idx = RegimeIndex::new(partition);
    if idx.estimable.is_empty() {
        return Err(Error::NoEstimableRegime);
    }
    let dm = demean_within_regime(panel, partition)?;
    let (n, p) = (panel.n(), panel.p());
    let nf = conv::<S>(n as f64);
    let mut warnings = Vec::new();

    let mut regimes: Vec<WithinRegime<S>> = Vec::with_capacity(idx.estimable.len());
    let mut offset = 0usize;
    for &j in &idx.estimable {
        let (s, e) = partition.regime_bounds(j);
        let identified: Vec<bool> = dm.invariant[j - 1].iter().map(|inv| !inv).collect();
        let cols: Vec<usize> = (0..p).filter(|&k| identified[k]).collect();
        let kj = cols.len();
        let mut omega = DMatrix::<S>::zeros(kj, kj);
        let mut rhs = DVector::<S>::zeros(kj);
        for t in s..=e {
            for i in 0..n {
                let base = ((t - 1) * n + i) * p;
                let yv = dm.y[(t - 1) * n + i];
                for (a, &ca) in cols.iter().enumerate() {
                    let xa = dm.x[base + ca];
                    rhs[a] += xa * yv;
                    for (b, &cb) in cols.iter().enumerate().skip(a) {
                        omega[(a, b)] += xa * dm.x[base + cb];
                    }
                }
            }
        }
        for a in 0..kj {
            for b in 0..a {
                omega[(a, b)] = omega[(b, a)];
            }
        }
        omega /= nf;
        rhs /= nf;
        let beta = if kj > 0 {
            let solved = solve_psd(&omega, &rhs);
            if solved.rank < kj {
                return Err(Error::RankDeficient {
                    context: format!(
                        "within Gram of regime {j} over columns {:?}",
                        cols.iter()
                            .map(|&k| panel.names()[k].clone())
                            .collect::<Vec<_>>()
                    ),
                });
            }
            if solved.cond > conv::<S>(CONDITION_WARN) {
                warnings.push(format!(
                    "within Gram of regime {j} is ill conditioned (condition {:.3e})",
                    solved.cond.to_f64().unwrap_or(f64::INFINITY)
                ));
            }
            solved.solution
        } else {
            DVector::zeros(0)
        };
        regimes.push(WithinRegime {
            regime: j,
            start: s,
            end: e,
            dt: e - s + 1,
            identified,
            cols,
            omega,
            beta,
            offset,
        });
        offset += kj;
    }
    let k_total = offset;

    // Residual pass: pooled variance and per-individual scores.
    let mut ssr = S::zero();
    let mut scores = vec![DVector::<S>::zeros(k_total); n];
    for reg in &regimes {
        for t in reg.start..=reg.end {
            for (i, score) in scores.iter_mut().enumerate() {
                let base = ((t - 1) * n + i) * p;
                let mut fit = S::zero();
                for (a, &ca) in reg.cols.iter().enumerate() {
                    fit += dm.x[base + ca] * reg.beta[a];
                }
                let resid = dm.y[(t - 1) * n + i] - fit;
                ssr += resid * resid;
                for (a, &ca) in reg.cols.iter().enumerate() {
                    score[reg.offset + a] += dm.x[base + ca] * resid;
                }
            }
        }
    }
    let lengths: Vec<usize> = regimes.iter().map(|r| r.dt).collect();
    let sigma2 = sigma2_hat(ssr, n, &lengths, k_total)?;

    Ok(WithinFit {
        regimes,
        singletons: idx.singletons,
        k_total,
        sigma2,
        scores,
        warnings,
    })
}

fn cluster_sandwich<S: Scalar>(omega_inv: &DMatrix<S>, scores: &[DVector<S>]) -> DMatrix<S> {
    let k = omega_inv.nrows();
    let n = scores.len();
    let mut meat = DMatrix::<S>::zeros(k, k);
    for s in scores {
        meat.syger(S::one(), s, s, S::one());
    }
    meat /= conv::<S>(n as f64);
    // syger fills the lower triangle; mirror it.
    for a in 0..k {
        for b in a + 1..k {
            meat[(a, b)] = meat[(b, a)];
        }
    }
    omega_inv * meat * omega_inv
}

/// Within (per-regime demeaning) estimator over all estimable regimes.
pub fn fe_estimate<S: Scalar>(
    panel: &PanelData<S>,
    partition: &Partition,
    vcov: VcovKind,
) -> Result<FeEstimate<S>> {
    let wf = within_fit(panel, partition)?;
    let k = wf.k_total;
    let sigma2 = wf.sigma2;

    let mut omega_inv = DMatrix::<S>::zeros(k, k);
    let mut cov_plugin = DMatrix::<S>::zeros(k, k);
    let mut warnings = wf.warnings.clone();
    for reg in &wf.regimes {
        let kj = reg.cols.len();
        if kj == 0 {
            continue;
        }
        let inv = pinv_psd(&reg.omega);
        if inv.cond > conv::<S>(CONDITION_WARN) {
            warnings.push(format!(
                "plugin covariance of regime {} is ill conditioned (condition {:.3e})",
                reg.regime,
                inv.cond.to_f64().unwrap_or(f64::INFINITY)
            ));
        }
        for a in 0..kj {
            for b in 0..kj {
                omega_inv[(reg.offset + a, reg.offset + b)] = inv.inverse[(a, b)];
                cov_plugin[(reg.offset + a, reg.offset + b)] = sigma2 * inv.inverse[(a, b)];
            }
        }
    }
    let cov_cluster = cluster_sandwich(&omega_inv, &wf.scores);

    Ok(FeEstimate {
        n: panel.n(),
        regimes: wf
            .regimes
            .into_iter()
            .map(|r| FeRegime {
                regime: r.regime,
                start: r.start,
                end: r.end,
                identified: r.identified,
                cols: r.cols,
                beta: r.beta,
                offset: r.offset,
            })
            .collect(),
        singletons: wf.singletons,
        sigma2,
        cov_plugin,
        cov_cluster,
        vcov,
        warnings,
    })
}

/// Position of one coefficient in the full-sample estimator's basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FfeCoef {
    /// 1-based regime number of the block.
    pub regime: usize,
    /// Source column index.
    pub col: usize,
    /// True when the coefficient is a difference against regime 1 (the
    /// reparameterized coefficient of a globally time-invariant column).
    pub contrast: bool,
}

#[derive(Debug, Clone)]
pub struct FfeEstimate<S: Scalar> {
    pub n: usize,
    pub t_periods: usize,
    /// Kept block columns in block-major order.
    pub basis: Vec<FfeCoef>,
    pub beta: DVector<S>,
    /// Globally time-invariant source columns.
    pub invariant_cols: Vec<bool>,
    /// Block columns dropped by the reparameterization.
    pub rank_drop: usize,
    /// Pooled within residual variance, when any regime supports it.
    pub sigma2: Option<S>,
    pub cov_plugin: DMatrix<S>,
    /// Coefficients whose plugin variance is defined: time-varying columns
    /// in regimes with at least two periods.
    pub plugin_defined: Vec<bool>,
    pub cov_cluster: DMatrix<S>,
    pub vcov: VcovKind,
    pub warnings: Vec<String>,
}

impl<S: Scalar> FfeEstimate<S> {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn cov(&self) -> &DMatrix<S> {
        match self.vcov {
            VcovKind::Plugin => &self.cov_plugin,
            VcovKind::Cluster => &self.cov_cluster,
        }
    }

    pub fn coef_index(&self, regime: usize, col: usize) -> Option<usize> {
        self.basis
            .iter()
            .position(|c| c.regime == regime && c.col == col)
    }

    pub fn beta_for(&self, regime: usize, col: usize) -> Option<S> {
        self.coef_index(regime, col).map(|idx| self.beta[idx])
    }

    /// Standard error of one coefficient under the active kind, when defined.
    pub fn se_for(&self, regime: usize, col: usize) -> Option<S> {
        let idx = self.coef_index(regime, col)?;
        if self.vcov == VcovKind::Plugin && !self.plugin_defined[idx] {
            return None;
        }
        let nf = conv::<S>(self.n as f64);
        Some((self.cov()[(idx, idx)] / nf).sqrt())
    }

    /// Differences against regime 1 for time-invariant columns.
    pub fn contrast_table(&self) -> Vec<(usize, usize, S, Option<S>)> {
        self.basis
            .iter()
            .enumerate()
            .filter(|(_, c)| c.contrast)
            .map(|(idx, c)| {
                let se = if self.vcov == VcovKind::Plugin && !self.plugin_defined[idx] {
                    None
                } else {
                    let nf = conv::<S>(self.n as f64);
                    Some((self.cov()[(idx, idx)] / nf).sqrt())
                };
                (c.col, c.regime, self.beta[idx], se)
            })
            .collect()
    }
}

/// Full-sample demeaning estimator with the regime-block design.
pub fn ffe_estimate<S: Scalar>(
    panel: &PanelData<S>,
    partition: &Partition,
    vcov: VcovKind,
) -> Result<FfeEstimate<S>> {
    let dm = demean_full_sample(panel, partition)?;
    let (n, t, p) = (panel.n(), panel.t_periods(), panel.p());
    let m1 = partition.n_regimes();
    let q_full = m1 * p;
    let nf = conv::<S>(n as f64);
    let tf = conv::<S>(t as f64);
    let mut warnings = Vec::new();

    // Kept block columns: drop the regime-1 block of every globally
    // time-invariant column; its remaining blocks turn into contrasts.
    let mut basis = Vec::with_capacity(q_full);
    let mut keep = Vec::with_capacity(q_full);
    for j in 1..=m1 {
        for c in 0..p {
            if dm.invariant_cols[c] && j == 1 {
                continue;
            }
            basis.push(FfeCoef {
                regime: j,
                col: c,
                contrast: dm.invariant_cols[c],
            });
            keep.push((j - 1) * p + c);
        }
    }
    let qk = keep.len();
    let rank_drop = q_full - qk;
    if qk == 0 {
        return Err(Error::RankDeficient {
            context: "full-sample design: every column is time invariant".into(),
        });
    }

    // A_full = blockdiag(regime Grams) - t * sum_i w_i w_i'; the cross terms
    // collapse because the stacked regime sums equal t * w_i.
    let mut a_full = DMatrix::<S>::zeros(q_full, q_full);
    for (j, s, e) in partition.regimes() {
        let off = (j - 1) * p;
        for ti in s..=e {
            for i in 0..n {
                let row = panel.x(i, ti);
                for a in 0..p {
                    for b in a..p {
                        a_full[(off + a, off + b)] += row[a] * row[b];
                    }
                }
            }
        }
    }
    for i in 0..n {
        let w = DVector::<S>::from_column_slice(&dm.w[i * q_full..(i + 1) * q_full]);
        for a in 0..q_full {
            for b in a..q_full {
                a_full[(a, b)] -= tf * w[a] * w[b];
            }
        }
    }
    for a in 0..q_full {
        for b in 0..a {
            a_full[(a, b)] = a_full[(b, a)];
        }
    }

    let mut b_full = DVector::<S>::zeros(q_full);
    for (j, s, e) in partition.regimes() {
        let off = (j - 1) * p;
        for ti in s..=e {
            for i in 0..n {
                let row = panel.x(i, ti);
                let ys = dm.y_star[(ti - 1) * n + i];
                for a in 0..p {
                    b_full[off + a] += row[a] * ys;
                }
            }
        }
    }

    let a_kept = DMatrix::<S>::from_fn(qk, qk, |r, c| a_full[(keep[r], keep[c])]);
    let b_kept = DVector::<S>::from_fn(qk, |r, _| b_full[keep[r]]);

    let solved = solve_psd(&a_kept, &b_kept);
    if solved.rank < qk {
        let offenders = rank_offenders(&a_kept, &basis, panel.names());
        return Err(Error::RankDeficient {
            context: format!("full-sample design after reparameterization; near-collinear coefficients: {offenders}"),
        });
    }
    if solved.cond > conv::<S>(CONDITION_WARN) {
        warnings.push(format!(
            "full-sample design is ill conditioned (condition {:.3e})",
            solved.cond.to_f64().unwrap_or(f64::INFINITY)
        ));
    }
    let beta = solved.solution;

    // Residuals and per-individual scores on the kept basis.
    let mut scores = vec![DVector::<S>::zeros(qk); n];
    for ti in 1..=t {
        for (i, score) in scores.iter_mut().enumerate() {
            let xrow = dm.x_tilde_row(n, i, ti);
            let mut fit = S::zero();
            for (a, &full_col) in keep.iter().enumerate() {
                fit += xrow[full_col] * beta[a];
            }
            let resid = dm.y_star[(ti - 1) * n + i] - fit;
            for (a, &full_col) in keep.iter().enumerate() {
                score[a] += xrow[full_col] * resid;
            }
        }
    }

    let omega2 = &a_kept / nf;
    let omega2_inv = pinv_psd(&omega2).inverse;
    let cov_cluster = cluster_sandwich(&omega2_inv, &scores);

    // Plugin covariance: the closed form needs within-regime moments, which
    // exist only for time-varying columns in regimes spanning two or more
    // periods. Everything else keeps a zero row and is marked undefined.
    let mut cov_plugin = DMatrix::<S>::zeros(qk, qk);
    let mut plugin_defined = vec![false; qk];
    let mut sigma2 = None;
    if let Ok(wf) = within_fit(panel, partition) {
        sigma2 = Some(wf.sigma2);
        for reg in &wf.regimes {
            let kj = reg.cols.len();
            if kj == 0 {
                continue;
            }
            let factor = ffe_variance_factor::<S>(t, reg.dt);
            // Q_j estimate: within Gram scaled by 1 / (dt - 1).
            let qj = &reg.omega / conv::<S>((reg.dt - 1) as f64);
            let qj_pinv = pinv_psd(&qj);
            if qj_pinv.rank < kj {
                warnings.push(format!(
                    "plugin covariance of regime {} uses a rank-{} moment inverse",
                    reg.regime, qj_pinv.rank
                ));
            }
            let qj_inv = qj_pinv.inverse;
            let positions: Vec<Option<usize>> = reg
                .cols
                .iter()
                .map(|&c| {
                    basis
                        .iter()
                        .position(|bc| bc.regime == reg.regime && bc.col == c)
                })
                .collect();
            for a in 0..kj {
                let Some(pa) = positions[a] else { continue };
                plugin_defined[pa] = true;
                for b in 0..kj {
                    let Some(pb) = positions[b] else { continue };
                    cov_plugin[(pa, pb)] = wf.sigma2 * factor * qj_inv[(a, b)];
                }
            }
        }
    }

    Ok(FfeEstimate {
        n,
        t_periods: t,
        basis,
        beta,
        invariant_cols: dm.invariant_cols,
        rank_drop,
        sigma2,
        cov_plugin,
        plugin_defined,
        cov_cluster,
        vcov,
        warnings,
    })
}

/// Names the coefficients loading on near-null directions of `a`.
fn rank_offenders<S: Scalar>(a: &DMatrix<S>, basis: &[FfeCoef], names: &[String]) -> String {
    let eig = a.clone().symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .fold(S::zero(), |acc, &v| if v > acc { v } else { acc });
    let cut = max_eig * S::default_epsilon() * conv::<S>(1.0e4);
    let mut offenders: Vec<String> = Vec::new();
    for k in 0..a.nrows() {
        if eig.eigenvalues[k] <= cut {
            let v = eig.eigenvectors.column(k);
            let vmax = v.iter().fold(
                S::zero(),
                |acc, &x| {
                    if x.abs() > acc {
                        x.abs()
                    } else {
                        acc
                    }
                },
            );
            for (idx, coef) in basis.iter().enumerate() {
                if v[idx].abs() > vmax * conv::<S>(0.3) {
                    let label = format!("{}[regime {}]", names[coef.col], coef.regime);
                    if !offenders.contains(&label) {
                        offenders.push(label);
                    }
                }
            }
        }
    }
    offenders.join(", ")
}
