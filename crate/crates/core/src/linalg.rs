//! Rank-revealing solves for symmetric positive semidefinite systems.
//!
//! Normal-equation matrices here are Gram matrices, so eigendecomposition
//! doubles as a rank test: eigenvalues below a relative threshold are treated
//! as zero and the solve falls back to the minimum-norm (pseudo-inverse)
//! solution. Callers read `rank` and the retained-spectrum condition number
//! to decide whether to flag, warn or reject.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{conv, Scalar};

/// Multiplier on machine epsilon for the relative rank cutoff.
const RANK_EPS_MULT: f64 = 1.0e4;

pub(crate) struct PsdSolve<S: Scalar> {
    pub solution: DVector<S>,
    pub rank: usize,
    /// Ratio of largest to smallest retained eigenvalue; infinite at rank 0.
    pub cond: S,
}

pub(crate) struct PsdInverse<S: Scalar> {
    pub inverse: DMatrix<S>,
    pub rank: usize,
    pub cond: S,
}

fn rank_cutoff<S: Scalar>(max_eig: S) -> S {
    max_eig * S::default_epsilon() * conv::<S>(RANK_EPS_MULT)
}

/// Minimum-norm solution of `a x = b` for symmetric PSD `a`.
pub(crate) fn solve_psd<S: Scalar>(a: &DMatrix<S>, b: &DVector<S>) -> PsdSolve<S> {
    let p = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .fold(S::zero(), |acc, &v| if v > acc { v } else { acc });
    let cut = rank_cutoff(max_eig);
    let mut rank = 0usize;
    let mut min_kept = max_eig;
    let mut solution = DVector::<S>::zeros(p);
    for k in 0..p {
        let lambda = eig.eigenvalues[k];
        if lambda > cut && lambda > S::zero() {
            rank += 1;
            if lambda < min_kept {
                min_kept = lambda;
            }
            let v = eig.eigenvectors.column(k);
            let scale = v.dot(b) / lambda;
            solution.axpy(scale, &v, S::one());
        }
    }
    let cond = if rank == 0 {
        conv::<S>(f64::INFINITY)
    } else {
        max_eig / min_kept
    };
    PsdSolve {
        solution,
        rank,
        cond,
    }
}

/// Pseudo-inverse of a symmetric PSD matrix with the same rank rule.
pub(crate) fn pinv_psd<S: Scalar>(a: &DMatrix<S>) -> PsdInverse<S> {
    let p = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .fold(S::zero(), |acc, &v| if v > acc { v } else { acc });
    let cut = rank_cutoff(max_eig);
    let mut rank = 0usize;
    let mut min_kept = max_eig;
    let mut inverse = DMatrix::<S>::zeros(p, p);
    for k in 0..p {
        let lambda = eig.eigenvalues[k];
        if lambda > cut && lambda > S::zero() {
            rank += 1;
            if lambda < min_kept {
                min_kept = lambda;
            }
            let v = eig.eigenvectors.column(k);
            let outer = v * v.transpose();
            inverse += outer * (S::one() / lambda);
        }
    }
    let cond = if rank == 0 {
        conv::<S>(f64::INFINITY)
    } else {
        max_eig / min_kept
    };
    PsdInverse {
        inverse,
        rank,
        cond,
    }
}
