//! Balanced-panel storage, sample partitions and demeaning transforms.
//!
//! A panel holds `n` individuals observed over periods `1..=t`. Storage is
//! dense and period-major: all individuals for period 1, then period 2, and
//! so on, which keeps per-period cross-section sums contiguous.
//!
//! Two demeaning transforms are provided. Within-regime demeaning subtracts
//! each individual's mean over a regime from its observations in that regime
//! (the within transform applied regime by regime). Full-sample demeaning
//! subtracts each individual's full-sample mean from `y` and expands the
//! regressors into one block per regime, each block centered by `1/t` times
//! the individual's regime sum.

use crate::error::{Error, Result};
use crate::scalar::{conv, fmax, Scalar};

/// Relative threshold below which a demeaned column counts as constant.
pub const INVARIANCE_RTOL: f64 = 1e-10;

/// A balanced panel with `n` individuals, `t` periods and `p` regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData<S: Scalar> {
    n: usize,
    t: usize,
    p: usize,
    /// `y[(t-1)*n + i]`, period-major.
    y: Vec<S>,
    /// `x[((t-1)*n + i)*p + k]`, period-major rows of length `p`.
    x: Vec<S>,
    names: Vec<String>,
    has_intercept: bool,
}

impl<S: Scalar> PanelData<S> {
    /// Builds a panel from period-major arrays.
    ///
    /// When `has_intercept` is set, column 0 must be identically one.
    pub fn new(
        n: usize,
        t: usize,
        names: Vec<String>,
        y: Vec<S>,
        x: Vec<S>,
        has_intercept: bool,
    ) -> Result<Self> {
        let p = names.len();
        if n == 0 || t < 2 || p == 0 {
            return Err(Error::InvalidPanel(format!(
                "need n >= 1, t >= 2 and p >= 1, got n = {n}, t = {t}, p = {p}"
            )));
        }
        if y.len() != n * t {
            return Err(Error::InvalidPanel(format!(
                "y has {} entries, expected n*t = {}",
                y.len(),
                n * t
            )));
        }
        if x.len() != n * t * p {
            return Err(Error::InvalidPanel(format!(
                "x has {} entries, expected n*t*p = {}",
                x.len(),
                n * t * p
            )));
        }
        if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel("non-finite value in panel".into()));
        }
        let panel = Self {
            n,
            t,
            p,
            y,
            x,
            names,
            has_intercept,
        };
        if has_intercept {
            let one = S::one();
            for ti in 1..=t {
                for i in 0..n {
                    if panel.x(i, ti)[0] != one {
                        return Err(Error::InvalidPanel(
                            "intercept flag set but column 0 is not identically one".into(),
                        ));
                    }
                }
            }
        }
        Ok(panel)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of periods `t`; periods are numbered `1..=t`.
    pub fn t_periods(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn obs_count(&self) -> usize {
        self.n * self.t
    }

    #[inline]
    pub fn y(&self, i: usize, t: usize) -> S {
        debug_assert!(i < self.n && (1..=self.t).contains(&t));
        self.y[(t - 1) * self.n + i]
    }

    #[inline]
    pub fn x(&self, i: usize, t: usize) -> &[S] {
        debug_assert!(i < self.n && (1..=self.t).contains(&t));
        let base = ((t - 1) * self.n + i) * self.p;
        &self.x[base..base + self.p]
    }

    /// All `y` values for one period, indexed by individual.
    pub fn y_at(&self, t: usize) -> &[S] {
        &self.y[(t - 1) * self.n..t * self.n]
    }

    /// All regressor rows for one period, `n` contiguous rows of length `p`.
    pub fn x_at(&self, t: usize) -> &[S] {
        &self.x[(t - 1) * self.n * self.p..t * self.n * self.p]
    }
}

/// An ordered set of break periods splitting `1..=t` into regimes.
///
/// A break at `b` means the regime ends with period `b`; `m` breaks produce
/// `m + 1` regimes. Regime `j` (1-based) spans `(T_{j-1}+1)..=T_j` with
/// `T_0 = 0` and `T_{m+1} = t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    breaks: Vec<usize>,
    t: usize,
}

impl Partition {
    pub fn new(breaks: Vec<usize>, t_periods: usize) -> Result<Self> {
        if t_periods < 2 {
            return Err(Error::InvalidPartition(format!(
                "need at least two periods, got {t_periods}"
            )));
        }
        for (idx, &b) in breaks.iter().enumerate() {
            if b < 1 || b > t_periods - 1 {
                return Err(Error::InvalidPartition(format!(
                    "break {b} outside 1..={}",
                    t_periods - 1
                )));
            }
            if idx > 0 && breaks[idx - 1] >= b {
                return Err(Error::InvalidPartition(format!(
                    "breaks must be strictly increasing, got {:?}",
                    breaks
                )));
            }
        }
        Ok(Self {
            breaks,
            t: t_periods,
        })
    }

    /// The no-break partition: one regime covering the full sample.
    pub fn none(t_periods: usize) -> Self {
        Self {
            breaks: Vec::new(),
            t: t_periods,
        }
    }

    pub fn m(&self) -> usize {
        self.breaks.len()
    }

    pub fn n_regimes(&self) -> usize {
        self.breaks.len() + 1
    }

    pub fn t_periods(&self) -> usize {
        self.t
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    /// Inclusive period bounds of regime `j` (1-based).
    pub fn regime_bounds(&self, j: usize) -> (usize, usize) {
        debug_assert!((1..=self.n_regimes()).contains(&j));
        let start = if j == 1 { 1 } else { self.breaks[j - 2] + 1 };
        let end = if j == self.n_regimes() {
            self.t
        } else {
            self.breaks[j - 1]
        };
        (start, end)
    }

    pub fn regime_len(&self, j: usize) -> usize {
        let (s, e) = self.regime_bounds(j);
        e - s + 1
    }

    /// Iterates `(regime number, start, end)` over all regimes.
    pub fn regimes(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (1..=self.n_regimes()).map(|j| {
            let (s, e) = self.regime_bounds(j);
            (j, s, e)
        })
    }

    /// Regime number (1-based) containing period `t`.
    pub fn regime_of(&self, t: usize) -> usize {
        debug_assert!((1..=self.t).contains(&t));
        match self.breaks.binary_search(&t) {
            Ok(pos) => pos + 1,
            Err(pos) => pos + 1,
        }
    }

    /// Break locations as fractions of the sample, the asymptotic view.
    pub fn fractions(&self) -> Vec<f64> {
        self.breaks
            .iter()
            .map(|&b| b as f64 / self.t as f64)
            .collect()
    }
}

/// Splits regimes by whether within-regime estimation is possible.
///
/// A regime is estimable when it spans at least two periods; single-period
/// regimes lose every observation to demeaning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegimeIndex {
    pub estimable: Vec<usize>,
    pub singletons: Vec<usize>,
}

impl RegimeIndex {
    pub fn new(partition: &Partition) -> Self {
        let mut estimable = Vec::new();
        let mut singletons = Vec::new();
        for (j, s, e) in partition.regimes() {
            if e - s + 1 >= 2 {
                estimable.push(j);
            } else {
                singletons.push(j);
            }
        }
        Self {
            estimable,
            singletons,
        }
    }
}

fn check_partition<S: Scalar>(panel: &PanelData<S>, partition: &Partition) -> Result<()> {
    if partition.t_periods() != panel.t_periods() {
        return Err(Error::InvalidPartition(format!(
            "partition is over {} periods but panel has {}",
            partition.t_periods(),
            panel.t_periods()
        )));
    }
    Ok(())
}

/// Panel transformed by within-regime demeaning, same layout as the source.
#[derive(Debug, Clone)]
pub struct WithinDemeaned<S: Scalar> {
    pub y: Vec<S>,
    pub x: Vec<S>,
    /// `invariant[j-1][k]`: column `k` has no within variation in regime `j`.
    pub invariant: Vec<Vec<bool>>,
}

/// Subtracts each individual's regime mean from `y` and every column of `x`.
///
/// Columns that come out identically zero in a regime (intercepts, fixed
/// traits) are flagged; coefficients on them are not identified from that
/// regime alone. In single-period regimes the transform zeroes everything,
/// so all columns are flagged there.
pub fn demean_within_regime<S: Scalar>(
    panel: &PanelData<S>,
    partition: &Partition,
) -> Result<WithinDemeaned<S>> {
    check_partition(panel, partition)?;
    let (n, p) = (panel.n(), panel.p());
    let mut y = panel.y.clone();
    let mut x = panel.x.clone();
    let mut invariant = Vec::with_capacity(partition.n_regimes());

    let mut col_absmax = vec![S::zero(); p];
    let mut col_devmax = vec![S::zero(); p];
    for (_, s, e) in partition.regimes() {
        let dt = conv::<S>((e - s + 1) as f64);
        col_absmax.iter_mut().for_each(|v| *v = S::zero());
        col_devmax.iter_mut().for_each(|v| *v = S::zero());
        for i in 0..n {
            let mut ymean = S::zero();
            let mut xmean = vec![S::zero(); p];
            for t in s..=e {
                ymean += panel.y(i, t);
                let row = panel.x(i, t);
                for k in 0..p {
                    xmean[k] += row[k];
                    col_absmax[k] = fmax(col_absmax[k], row[k].abs());
                }
            }
            ymean /= dt;
            xmean.iter_mut().for_each(|v| *v /= dt);
            for t in s..=e {
                let base = ((t - 1) * n + i) * p;
                y[(t - 1) * n + i] -= ymean;
                for k in 0..p {
                    x[base + k] -= xmean[k];
                    col_devmax[k] = fmax(col_devmax[k], x[base + k].abs());
                }
            }
        }
        let flags = (0..p)
            .map(|k| col_devmax[k] < conv::<S>(INVARIANCE_RTOL) * (S::one() + col_absmax[k]))
            .collect();
        invariant.push(flags);
    }
    Ok(WithinDemeaned { y, x, invariant })
}

/// Result of full-sample demeaning: `y* = y - mean_i(y)` and the block
/// regressor expansion.
///
/// The expanded row for individual `i` at a period in regime `j` has blocks
/// `(-w_i1, ..., x_it - w_ij, ..., -w_i,m+1)` where `w_ij` is `1/t` times
/// the sum of `x_it` over regime `j`. Rows sum to zero over `t` for every
/// individual, and each globally time-invariant source column makes its
/// `m + 1` block columns sum to zero.
#[derive(Debug, Clone)]
pub struct FullDemeaned<S: Scalar> {
    /// Period-major like the panel.
    pub y_star: Vec<S>,
    /// `x_tilde[((t-1)*n + i)*q + c]` with `q = (m+1)p` block columns.
    pub x_tilde: Vec<S>,
    /// `w[(i*(m+1) + (j-1))*p + k]`, the `1/t`-scaled regime sums.
    pub w: Vec<S>,
    /// Columns of the source panel with no time variation for any individual.
    pub invariant_cols: Vec<bool>,
    /// Number of block columns, `(m+1)*p`.
    pub q: usize,
}

impl<S: Scalar> FullDemeaned<S> {
    #[inline]
    pub fn x_tilde_row(&self, n: usize, i: usize, t: usize) -> &[S] {
        let base = ((t - 1) * n + i) * self.q;
        &self.x_tilde[base..base + self.q]
    }

    #[inline]
    pub fn w_block(&self, m1: usize, p: usize, i: usize, j: usize) -> &[S] {
        let base = (i * m1 + (j - 1)) * p;
        &self.w[base..base + p]
    }
}

pub fn demean_full_sample<S: Scalar>(
    panel: &PanelData<S>,
    partition: &Partition,
) -> Result<FullDemeaned<S>> {
    check_partition(panel, partition)?;
    let (n, t, p) = (panel.n(), panel.t_periods(), panel.p());
    let m1 = partition.n_regimes();
    let q = m1 * p;
    let tf = conv::<S>(t as f64);

    let mut w = vec![S::zero(); n * q];
    let mut ybar = vec![S::zero(); n];
    for (j, s, e) in partition.regimes() {
        for ti in s..=e {
            for i in 0..n {
                let row = panel.x(i, ti);
                let base = (i * m1 + (j - 1)) * p;
                for k in 0..p {
                    w[base + k] += row[k];
                }
            }
        }
    }
    for v in w.iter_mut() {
        *v /= tf;
    }
    for ti in 1..=t {
        for (i, yb) in ybar.iter_mut().enumerate() {
            *yb += panel.y(i, ti);
        }
    }
    for v in ybar.iter_mut() {
        *v /= tf;
    }

    let mut col_absmax = vec![S::zero(); p];
    let mut col_devmax = vec![S::zero(); p];
    for i in 0..n {
        let mut xbar = vec![S::zero(); p];
        for ti in 1..=t {
            let row = panel.x(i, ti);
            for k in 0..p {
                xbar[k] += row[k];
                col_absmax[k] = fmax(col_absmax[k], row[k].abs());
            }
        }
        xbar.iter_mut().for_each(|v| *v /= tf);
        for ti in 1..=t {
            let row = panel.x(i, ti);
            for k in 0..p {
                col_devmax[k] = fmax(col_devmax[k], (row[k] - xbar[k]).abs());
            }
        }
    }
    let invariant_cols: Vec<bool> = (0..p)
        .map(|k| col_devmax[k] < conv::<S>(INVARIANCE_RTOL) * (S::one() + col_absmax[k]))
        .collect();

    let mut y_star = vec![S::zero(); n * t];
    let mut x_tilde = vec![S::zero(); n * t * q];
    for (j, s, e) in partition.regimes() {
        for ti in s..=e {
            for i in 0..n {
                y_star[(ti - 1) * n + i] = panel.y(i, ti) - ybar[i];
                let out = ((ti - 1) * n + i) * q;
                let wrow = &w[i * q..(i + 1) * q];
                for c in 0..q {
                    x_tilde[out + c] = -wrow[c];
                }
                let row = panel.x(i, ti);
                for k in 0..p {
                    x_tilde[out + (j - 1) * p + k] += row[k];
                }
            }
        }
    }

    Ok(FullDemeaned {
        y_star,
        x_tilde,
        w,
        invariant_cols,
        q,
    })
}
