//! Information-criterion choice of the number of breaks.
//!
//! For each candidate break count `m` the criterion is
//! `log(s_nt(m)) + p*(m) * weight`, where `s_nt(m)` is the minimized
//! per-observation residual sum of squares, `p*(m) = 3m + (m+1)p` counts
//! break locations (3 apiece, reflecting their faster convergence) plus
//! per-regime slopes, and the weight depends on the flavor:
//! Hannan-Quinn `log(log(nt))/nt`, Schwarz `log(nt)/nt`, or Akaike `2/nt`.
//! The reported minimizer is the smallest among ties.

use std::fmt;
use std::str::FromStr;

use crate::detect::{detect_all, DetectionResult, SegmentSseTable};
use crate::error::{Error, Result};
use crate::scalar::{conv, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    Hqic,
    Bic,
    Aic,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PenaltyKind::Hqic => "hqic",
            PenaltyKind::Bic => "bic",
            PenaltyKind::Aic => "aic",
        };
        f.write_str(s)
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hqic" => Ok(PenaltyKind::Hqic),
            "bic" => Ok(PenaltyKind::Bic),
            "aic" => Ok(PenaltyKind::Aic),
            other => Err(Error::InvalidArgument(format!(
                "unknown penalty '{other}', expected hqic, bic or aic"
            ))),
        }
    }
}

/// Per-parameter penalty weight for a panel with `n * t` observations.
pub fn penalty_weight<S: Scalar>(kind: PenaltyKind, n: usize, t: usize) -> Result<S> {
    let nt = n * t;
    if nt < 3 {
        return Err(Error::InvalidArgument(format!(
            "information criteria need n*t >= 3 observations, got {nt}"
        )));
    }
    let ntf = conv::<S>(nt as f64);
    Ok(match kind {
        PenaltyKind::Hqic => ntf.ln().ln() / ntf,
        PenaltyKind::Bic => ntf.ln() / ntf,
        PenaltyKind::Aic => conv::<S>(2.0) / ntf,
    })
}

/// Effective parameter count at `m` breaks with `p` regressors.
pub fn param_count(m: usize, p: usize) -> usize {
    3 * m + (m + 1) * p
}

#[derive(Debug, Clone)]
pub struct IcConfig {
    pub penalty: PenaltyKind,
    /// Largest break count to consider; defaults to `t - 1`.
    pub m_max: Option<usize>,
}

impl IcConfig {
    pub fn new(penalty: PenaltyKind) -> Self {
        Self {
            penalty,
            m_max: None,
        }
    }
}

impl Default for IcConfig {
    fn default() -> Self {
        Self::new(PenaltyKind::Hqic)
    }
}

#[derive(Debug, Clone)]
pub struct IcRow<S: Scalar> {
    pub m: usize,
    pub s_nt: S,
    pub p_star: usize,
    pub ic: S,
}

#[derive(Debug, Clone)]
pub struct IcCurve<S: Scalar> {
    pub penalty: PenaltyKind,
    pub rows: Vec<IcRow<S>>,
    pub m_hat: usize,
}

/// Index of the smallest value, preferring the earliest among exact ties.
fn smallest_argmin<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (idx, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = idx;
        }
    }
    best
}

/// Scores every detected row and picks the break count.
pub fn select_m<S: Scalar>(det: &DetectionResult<S>, cfg: &IcConfig) -> Result<IcCurve<S>> {
    // Unset means "score every break count detection produced".
    let m_max = cfg
        .m_max
        .unwrap_or_else(|| (det.t_periods - 1).min(det.rows.len() - 1));
    if m_max >= det.rows.len() {
        return Err(Error::InvalidArgument(format!(
            "selection up to m = {m_max} requested but detection stopped at m = {}",
            det.rows.len() - 1
        )));
    }
    let weight = penalty_weight::<S>(cfg.penalty, det.n, det.t_periods)?;
    let mut rows = Vec::with_capacity(m_max + 1);
    for m in 0..=m_max {
        let s_nt = det.rows[m].s_nt;
        if s_nt <= S::zero() {
            return Err(Error::DegenerateFit { m });
        }
        let p_star = param_count(m, det.p);
        rows.push(IcRow {
            m,
            s_nt,
            p_star,
            ic: s_nt.ln() + conv::<S>(p_star as f64) * weight,
        });
    }
    let ics: Vec<S> = rows.iter().map(|r| r.ic).collect();
    Ok(IcCurve {
        penalty: cfg.penalty,
        rows,
        m_hat: smallest_argmin(&ics),
    })
}

/// Detection and selection in one pass, with `m_hat` filled in.
pub fn detect_and_select<S: Scalar>(
    table: &SegmentSseTable<S>,
    cfg: &IcConfig,
) -> Result<(DetectionResult<S>, IcCurve<S>)> {
    let m_max = cfg.m_max.unwrap_or(table.t_periods() - 1);
    let mut det = detect_all(table, m_max)?;
    let curve = select_m(&det, cfg)?;
    det.m_hat = Some(curve.m_hat);
    Ok((det, curve))
}
