//! Per-period cross-section Gram sums with prefix tables.
//!
//! For each period `t` the table holds `S_xx[t] = sum_i x_it x_it'`,
//! `S_xy[t] = sum_i x_it y_it` and `S_yy[t] = sum_i y_it^2`, plus running
//! prefix sums over periods. Any contiguous period range then reduces to two
//! prefix lookups and a subtraction, which is what makes the O(t^2) segment
//! table cheap to build.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::panel::PanelData;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GramTable<S: Scalar> {
    n: usize,
    t: usize,
    p: usize,
    sxx: Vec<DMatrix<S>>,
    sxy: Vec<DVector<S>>,
    syy: Vec<S>,
    /// Prefix sums with a leading zero entry: `pxx[t] = sum_{s<=t} sxx[s]`.
    pxx: Vec<DMatrix<S>>,
    pxy: Vec<DVector<S>>,
    pyy: Vec<S>,
}

impl<S: Scalar> GramTable<S> {
    pub fn build(panel: &PanelData<S>) -> Result<Self> {
        let (n, t, p) = (panel.n(), panel.t_periods(), panel.p());
        if n < p + 1 {
            return Err(Error::InvalidPanel(format!(
                "need n >= p + 1 individuals for cross-section Grams, got n = {n}, p = {p}"
            )));
        }
        let mut sxx = Vec::with_capacity(t);
        let mut sxy = Vec::with_capacity(t);
        let mut syy = Vec::with_capacity(t);
        for ti in 1..=t {
            let mut axx = DMatrix::<S>::zeros(p, p);
            let mut axy = DVector::<S>::zeros(p);
            let mut ayy = S::zero();
            for i in 0..n {
                let row = panel.x(i, ti);
                let yv = panel.y(i, ti);
                for a in 0..p {
                    let ra = row[a];
                    axy[a] += ra * yv;
                    for b in a..p {
                        axx[(a, b)] += ra * row[b];
                    }
                }
                ayy += yv * yv;
            }
            for a in 0..p {
                for b in 0..a {
                    axx[(a, b)] = axx[(b, a)];
                }
            }
            sxx.push(axx);
            sxy.push(axy);
            syy.push(ayy);
        }

        let mut pxx = Vec::with_capacity(t + 1);
        let mut pxy = Vec::with_capacity(t + 1);
        let mut pyy = Vec::with_capacity(t + 1);
        pxx.push(DMatrix::<S>::zeros(p, p));
        pxy.push(DVector::<S>::zeros(p));
        pyy.push(S::zero());
        for ti in 0..t {
            pxx.push(&pxx[ti] + &sxx[ti]);
            pxy.push(&pxy[ti] + &sxy[ti]);
            pyy.push(pyy[ti] + syy[ti]);
        }

        Ok(Self {
            n,
            t,
            p,
            sxx,
            sxy,
            syy,
            pxx,
            pxy,
            pyy,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t_periods(&self) -> usize {
        self.t
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn period_sxx(&self, t: usize) -> &DMatrix<S> {
        &self.sxx[t - 1]
    }

    pub fn period_sxy(&self, t: usize) -> &DVector<S> {
        &self.sxy[t - 1]
    }

    pub fn period_syy(&self, t: usize) -> S {
        self.syy[t - 1]
    }

    fn check_segment(&self, start: usize, end: usize) -> Result<()> {
        if start < 1 || end > self.t || start > end {
            return Err(Error::InvalidArgument(format!(
                "segment [{start}, {end}] outside 1..={}",
                self.t
            )));
        }
        Ok(())
    }

    /// `sum_{t in [start, end]} S_xx[t]` via prefix subtraction.
    pub fn segment_sxx(&self, start: usize, end: usize) -> Result<DMatrix<S>> {
        self.check_segment(start, end)?;
        Ok(&self.pxx[end] - &self.pxx[start - 1])
    }

    pub fn segment_sxy(&self, start: usize, end: usize) -> Result<DVector<S>> {
        self.check_segment(start, end)?;
        Ok(&self.pxy[end] - &self.pxy[start - 1])
    }

    pub fn segment_syy(&self, start: usize, end: usize) -> Result<S> {
        self.check_segment(start, end)?;
        Ok(self.pyy[end] - self.pyy[start - 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PanelData;
    use approx::assert_relative_eq;

    fn small_panel() -> PanelData<f64> {
        // n = 3, t = 3, p = 2 with deterministic but non-trivial values.
        let n = 3;
        let t = 3;
        let mut y = Vec::new();
        let mut x = Vec::new();
        for ti in 1..=t {
            for i in 0..n {
                let a = (i + 1) as f64 + 0.5 * ti as f64;
                let b = (ti * ti) as f64 - 0.25 * i as f64;
                x.push(a);
                x.push(b);
                y.push(2.0 * a - b + 0.1 * (i as f64 - ti as f64));
            }
        }
        PanelData::new(n, t, vec!["a".into(), "b".into()], y, x, false).unwrap()
    }

    #[test]
    fn needs_enough_individuals() {
        let panel = PanelData::<f64>::new(
            2,
            2,
            vec!["a".into(), "b".into()],
            vec![0.0; 4],
            vec![1.0; 8],
            false,
        )
        .unwrap();
        assert!(matches!(
            GramTable::build(&panel),
            Err(Error::InvalidPanel(_))
        ));
    }

    #[test]
    fn single_period_sums_match_hand_values() {
        // n = 2, p = 1: x = (1, 2), y = (3, 5) in period 1.
        let panel = PanelData::<f64>::new(
            2,
            2,
            vec!["x1".into()],
            vec![3.0, 5.0, 1.0, 1.0],
            vec![1.0, 2.0, 1.0, 1.0],
            false,
        )
        .unwrap();
        let gram = GramTable::build(&panel).unwrap();
        assert_eq!(gram.period_sxx(1)[(0, 0)], 5.0);
        assert_eq!(gram.period_sxy(1)[0], 13.0);
        assert_eq!(gram.period_syy(1), 34.0);
    }

    #[test]
    fn segment_lookup_matches_direct_summation() {
        let panel = small_panel();
        let gram = GramTable::build(&panel).unwrap();
        for s in 1..=3usize {
            for e in s..=3usize {
                let mut dxx = DMatrix::<f64>::zeros(2, 2);
                let mut dxy = DVector::<f64>::zeros(2);
                let mut dyy = 0.0;
                for ti in s..=e {
                    for i in 0..3 {
                        let row = panel.x(i, ti);
                        let xv = DVector::from_column_slice(row);
                        dxx += &xv * xv.transpose();
                        dxy += &xv * panel.y(i, ti);
                        dyy += panel.y(i, ti) * panel.y(i, ti);
                    }
                }
                let lxx = gram.segment_sxx(s, e).unwrap();
                let lxy = gram.segment_sxy(s, e).unwrap();
                let lyy = gram.segment_syy(s, e).unwrap();
                assert_relative_eq!(lxx, dxx, max_relative = 1e-12);
                assert_relative_eq!(lxy, dxy, max_relative = 1e-12);
                assert_relative_eq!(lyy, dyy, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn segment_bounds_are_checked() {
        let panel = small_panel();
        let gram = GramTable::build(&panel).unwrap();
        assert!(gram.segment_sxx(0, 2).is_err());
        assert!(gram.segment_sxx(2, 4).is_err());
        assert!(gram.segment_sxx(3, 2).is_err());
    }
}
