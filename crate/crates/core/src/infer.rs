//! Wald tests on adjacent regimes.
//!
//! Two complementary checks: whether the slope vector moves across a break,
//! and whether the regressor second-moment matrix moves. A detected break
//! with an unchanged slope but a shifted Gram points at a change in the
//! omitted-effect drift rather than in the slopes themselves.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimate::FeEstimate;
use crate::linalg::solve_psd;
use crate::panel::{PanelData, Partition};
use crate::scalar::{conv, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaldKind {
    SlopeChange,
    GramChange,
}

#[derive(Debug, Clone)]
pub struct WaldResult<S: Scalar> {
    pub kind: WaldKind,
    /// 1-based left regime of the tested break.
    pub left: usize,
    pub right: usize,
    pub statistic: S,
    pub df: usize,
    pub p_value: f64,
}

fn chi2_sf(statistic: f64, df: usize) -> Result<f64> {
    let dist = ChiSquared::new(df as f64).map_err(|e| {
        Error::InvalidArgument(format!("chi-square with {df} degrees of freedom: {e}"))
    })?;
    Ok((1.0 - dist.cdf(statistic)).clamp(0.0, 1.0))
}

/// Tests equality of the slope vectors of regimes `j` and `j + 1` on their
/// common identified coefficients, using the estimate's active covariance.
pub fn wald_slope_change<S: Scalar>(fe: &FeEstimate<S>, j: usize) -> Result<WaldResult<S>> {
    let left = fe.regime(j).ok_or(Error::NotTestable {
        left: j,
        right: j + 1,
        reason: format!("regime {j} spans a single period or does not exist"),
    })?;
    let right = fe.regime(j + 1).ok_or(Error::NotTestable {
        left: j,
        right: j + 1,
        reason: format!("regime {} spans a single period or does not exist", j + 1),
    })?;

    // Coordinates of the columns identified on both sides.
    let mut pairs = Vec::new();
    for (a, &col) in left.cols.iter().enumerate() {
        if let Some(b) = right.cols.iter().position(|&c| c == col) {
            pairs.push((a, b));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NotTestable {
            left: j,
            right: j + 1,
            reason: "no coefficient is identified in both regimes".into(),
        });
    }

    let d = pairs.len();
    let diff = DVector::<S>::from_fn(d, |r, _| {
        let (a, b) = pairs[r];
        left.beta[a] - right.beta[b]
    });
    let cov = fe.cov();
    let contrast_cov = DMatrix::<S>::from_fn(d, d, |r, c| {
        let (ra, rb) = pairs[r];
        let (ca, cb) = pairs[c];
        let (lr, rr) = (left.offset + ra, right.offset + rb);
        let (lc, rc) = (left.offset + ca, right.offset + cb);
        cov[(lr, lc)] + cov[(rr, rc)] - cov[(lr, rc)] - cov[(rr, lc)]
    });
    let solved = solve_psd(&contrast_cov, &diff);
    if solved.rank < d {
        return Err(Error::RankDeficient {
            context: format!("contrast covariance of regimes {j} and {}", j + 1),
        });
    }
    let mut statistic = conv::<S>(fe.n as f64) * diff.dot(&solved.solution);
    if statistic < S::zero() {
        statistic = S::zero();
    }
    let p_value = chi2_sf(statistic.to_f64().unwrap_or(f64::INFINITY), d)?;
    Ok(WaldResult {
        kind: WaldKind::SlopeChange,
        left: j,
        right: j + 1,
        statistic,
        df: d,
        p_value,
    })
}

/// Length of the stacked lower triangle of a `p x p` symmetric matrix.
fn vech_len(p: usize) -> usize {
    p * (p + 1) / 2
}

fn vech_scatter<S: Scalar>(row: &[S], scale: S, out: &mut [S], p: usize) {
    let mut idx = 0;
    for a in 0..p {
        for b in a..p {
            out[idx] += scale * row[a] * row[b];
            idx += 1;
        }
    }
}

/// Tests equality of the per-period regressor second-moment matrices of
/// regimes `j` and `j + 1`.
///
/// Each individual contributes the difference of its regime-averaged moment
/// matrices, stacked as the lower triangle; the statistic is the two-sample
/// mean test on those contributions. Components that are constant across
/// individuals and centered at zero carry no information and are dropped;
/// in the regular case the degrees of freedom equal `p (p + 1) / 2`.
pub fn wald_gram_change<S: Scalar>(
    panel: &PanelData<S>,
    partition: &Partition,
    j: usize,
) -> Result<WaldResult<S>> {
    if j < 1 || j + 1 > partition.n_regimes() {
        return Err(Error::InvalidArgument(format!(
            "break {j} out of range for {} regimes",
            partition.n_regimes()
        )));
    }
    let (n, p) = (panel.n(), panel.p());
    let d = vech_len(p);
    let (s1, e1) = partition.regime_bounds(j);
    let (s2, e2) = partition.regime_bounds(j + 1);
    let inv_len1 = S::one() / conv::<S>((e1 - s1 + 1) as f64);
    let inv_len2 = S::one() / conv::<S>((e2 - s2 + 1) as f64);

    let mut contrib = vec![vec![S::zero(); d]; n];
    for (i, ci) in contrib.iter_mut().enumerate() {
        for t in s1..=e1 {
            vech_scatter(panel.x(i, t), inv_len1, ci, p);
        }
        for t in s2..=e2 {
            vech_scatter(panel.x(i, t), -inv_len2, ci, p);
        }
    }

    let nf = conv::<S>(n as f64);
    let mut mean = vec![S::zero(); d];
    for c in &contrib {
        for (m, &v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= nf;
    }

    // Drop components with no cross-individual variation; a degenerate
    // component with a nonzero mean is a change known with certainty, which
    // the quadratic form cannot absorb.
    let mut scale = vec![S::zero(); d];
    for c in &contrib {
        for k in 0..d {
            if c[k].abs() > scale[k] {
                scale[k] = c[k].abs();
            }
        }
    }
    let mut var = vec![S::zero(); d];
    for c in &contrib {
        for k in 0..d {
            let dev = c[k] - mean[k];
            var[k] += dev * dev;
        }
    }
    let tol = conv::<S>(1e-10);
    let mut kept = Vec::new();
    for k in 0..d {
        let floor = tol * (S::one() + scale[k]);
        if var[k] / nf > floor * floor {
            kept.push(k);
        } else if mean[k].abs() > floor {
            return Err(Error::RankDeficient {
                context: format!(
                    "moment component {k} shifts across the break with no \
                     cross-individual variation"
                ),
            });
        }
    }
    if kept.is_empty() {
        return Err(Error::NotTestable {
            left: j,
            right: j + 1,
            reason: "regressor moments are identical across the break for every individual".into(),
        });
    }

    let dk = kept.len();
    let delta = DVector::<S>::from_fn(dk, |r, _| mean[kept[r]]);
    let mut vhat = DMatrix::<S>::zeros(dk, dk);
    for c in &contrib {
        for (r, &kr) in kept.iter().enumerate() {
            let dr = c[kr] - mean[kr];
            for (s, &ks) in kept.iter().enumerate().skip(r) {
                vhat[(r, s)] += dr * (c[ks] - mean[ks]);
            }
        }
    }
    for r in 0..dk {
        for s in 0..r {
            vhat[(r, s)] = vhat[(s, r)];
        }
    }
    vhat /= nf;

    let solved = solve_psd(&vhat, &delta);
    if solved.rank < dk {
        return Err(Error::RankDeficient {
            context: format!(
                "covariance of moment contrasts between regimes {j} and {}",
                j + 1
            ),
        });
    }
    let mut statistic = nf * delta.dot(&solved.solution);
    if statistic < S::zero() {
        statistic = S::zero();
    }
    let p_value = chi2_sf(statistic.to_f64().unwrap_or(f64::INFINITY), dk)?;
    Ok(WaldResult {
        kind: WaldKind::GramChange,
        left: j,
        right: j + 1,
        statistic,
        df: dk,
        p_value,
    })
}

/// A family of tests held at joint level `alpha` by testing each at
/// `alpha / m`.
#[derive(Debug, Clone)]
pub struct BonferroniReport<S: Scalar> {
    pub family_alpha: f64,
    pub per_test_alpha: f64,
    pub items: Vec<(WaldResult<S>, bool)>,
}

pub fn bonferroni_adjust<S: Scalar>(
    results: &[WaldResult<S>],
    alpha: f64,
) -> Result<BonferroniReport<S>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "family level must lie in (0, 1), got {alpha}"
        )));
    }
    let per_test_alpha = if results.is_empty() {
        alpha
    } else {
        alpha / results.len() as f64
    };
    Ok(BonferroniReport {
        family_alpha: alpha,
        per_test_alpha,
        items: results
            .iter()
            .map(|r| (r.clone(), r.p_value < per_test_alpha))
            .collect(),
    })
}
