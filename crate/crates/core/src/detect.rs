//! Least-squares change-point search over pooled panel segments.
//!
//! Each candidate segment `[s, e]` is scored by the residual sum of squares
//! of pooled OLS on that segment, computed from Gram prefix sums without
//! touching the raw observations again. For a given number of breaks `m` the
//! optimal partition minimizes the sum of segment scores; a dynamic program
//! over (segments used, end period) finds it in O(t^2 m) once the O(t^2)
//! segment table is built. An exhaustive search over all break placements is
//! kept as a cross-check for small problems.
//!
//! Ties in total score are resolved toward the lexicographically smallest
//! break vector, and the dynamic program accumulates segment scores in
//! left-to-right order so that the exhaustive search agrees with it ulp for
//! ulp.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gram::GramTable;
use crate::linalg::solve_psd;
use crate::panel::Partition;
use crate::scalar::{conv, fmax, fmin, Scalar};

/// Largest number of break placements the exhaustive search will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Pooled OLS fit of one contiguous segment.
#[derive(Debug, Clone)]
pub struct SegmentFit<S: Scalar> {
    pub gamma: DVector<S>,
    pub sse: S,
    /// False when the segment Gram was rank deficient and `gamma` is the
    /// minimum-norm solution.
    pub full_rank: bool,
}

/// Pooled OLS residual sum of squares over periods `[start, end]`.
pub fn segment_sse<S: Scalar>(
    gram: &GramTable<S>,
    start: usize,
    end: usize,
) -> Result<SegmentFit<S>> {
    let a = gram.segment_sxx(start, end)?;
    let b = gram.segment_sxy(start, end)?;
    let c = gram.segment_syy(start, end)?;
    let solved = solve_psd(&a, &b);
    // sse = S_yy - gamma'S_xy, clamped to its mathematical range [0, S_yy].
    let sse = fmin(fmax(c - solved.solution.dot(&b), S::zero()), c);
    Ok(SegmentFit {
        gamma: solved.solution,
        sse,
        full_rank: solved.rank == gram.p(),
    })
}

/// All segment fits for `1 <= s <= e <= t`, square-indexed.
#[derive(Debug, Clone)]
pub struct SegmentSseTable<S: Scalar> {
    n: usize,
    t: usize,
    p: usize,
    cells: Vec<Option<SegmentFit<S>>>,
}

impl<S: Scalar> SegmentSseTable<S> {
    pub fn build(gram: &GramTable<S>) -> Result<Self> {
        let t = gram.t_periods();
        let mut cells = vec![None; t * t];
        for s in 1..=t {
            for e in s..=t {
                cells[(s - 1) * t + (e - 1)] = Some(segment_sse(gram, s, e)?);
            }
        }
        Ok(Self {
            n: gram.n(),
            t,
            p: gram.p(),
            cells,
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

    pub fn fit(&self, start: usize, end: usize) -> &SegmentFit<S> {
        assert!(
            start >= 1 && end <= self.t && start <= end,
            "segment [{start}, {end}] outside 1..={}",
            self.t
        );
        self.cells[(start - 1) * self.t + (end - 1)]
            .as_ref()
            .expect("triangular cell populated at build time")
    }

    pub fn sse(&self, start: usize, end: usize) -> S {
        self.fit(start, end).sse
    }
}

/// One partition with its minimized objective.
#[derive(Debug, Clone)]
pub struct PartitionFit<S: Scalar> {
    pub partition: Partition,
    /// Total residual sum of squares over all segments.
    pub sse: S,
    /// `sse / (n t)`, the per-observation objective.
    pub s_nt: S,
}

#[derive(Clone)]
struct DpCell<S: Scalar> {
    sse: S,
    breaks: Vec<usize>,
}

impl<S: Scalar> DpCell<S> {
    /// True when `(sse, breaks)` improves on `other` under the tie rule:
    /// strictly smaller score, or equal score with lexicographically
    /// smaller breaks.
    fn better_than(&self, other: &DpCell<S>) -> bool {
        if self.sse < other.sse {
            return true;
        }
        self.sse == other.sse && self.breaks < other.breaks
    }
}

/// Bellman table: `rows[j-1][e-1]` is the best split of `[1, e]` into `j`
/// segments, carrying its break vector for tie resolution.
fn dp_rows<S: Scalar>(
    table: &SegmentSseTable<S>,
    max_segments: usize,
) -> Vec<Vec<Option<DpCell<S>>>> {
    let t = table.t_periods();
    let mut rows: Vec<Vec<Option<DpCell<S>>>> = Vec::with_capacity(max_segments);
    let first: Vec<Option<DpCell<S>>> = (1..=t)
        .map(|e| {
            Some(DpCell {
                sse: table.sse(1, e),
                breaks: Vec::new(),
            })
        })
        .collect();
    rows.push(first);
    for j in 2..=max_segments {
        let mut row: Vec<Option<DpCell<S>>> = vec![None; t];
        for e in j..=t {
            let mut best: Option<DpCell<S>> = None;
            for b in (j - 1)..e {
                let prev = rows[j - 2][b - 1]
                    .as_ref()
                    .expect("previous row filled for e >= j");
                let mut breaks = prev.breaks.clone();
                breaks.push(b);
                let cand = DpCell {
                    sse: prev.sse + table.sse(b + 1, e),
                    breaks,
                };
                if best.as_ref().is_none_or(|cur| cand.better_than(cur)) {
                    best = Some(cand);
                }
            }
            row[e - 1] = best;
        }
        rows.push(row);
    }
    rows
}

fn partition_fit_from_cell<S: Scalar>(
    table: &SegmentSseTable<S>,
    cell: &DpCell<S>,
) -> PartitionFit<S> {
    let t = table.t_periods();
    let nt = conv::<S>((table.n() * t) as f64);
    PartitionFit {
        partition: Partition::new(cell.breaks.clone(), t).expect("dp breaks are valid"),
        sse: cell.sse,
        s_nt: cell.sse / nt,
    }
}

fn check_m<S: Scalar>(table: &SegmentSseTable<S>, m: usize) -> Result<()> {
    if m > table.t_periods() - 1 {
        return Err(Error::InvalidArgument(format!(
            "m = {m} breaks need at least {} periods, panel has {}",
            m + 1,
            table.t_periods()
        )));
    }
    Ok(())
}

/// Optimal placement of `m` breaks by dynamic programming.
pub fn dp_optimal_partition<S: Scalar>(
    table: &SegmentSseTable<S>,
    m: usize,
) -> Result<PartitionFit<S>> {
    check_m(table, m)?;
    let rows = dp_rows(table, m + 1);
    let cell = rows[m][table.t_periods() - 1]
        .as_ref()
        .expect("full-sample cell populated");
    Ok(partition_fit_from_cell(table, cell))
}

/// Optimal placement of `m` breaks by exhaustive enumeration.
///
/// Candidates are visited in lexicographic break order with strict
/// improvement, which realizes the same tie rule as the dynamic program.
/// Refuses problems with more than [`ENUMERATION_LIMIT`] candidates.
pub fn brute_force_partition<S: Scalar>(
    table: &SegmentSseTable<S>,
    m: usize,
) -> Result<PartitionFit<S>> {
    check_m(table, m)?;
    let t = table.t_periods();
    let combos = binomial(t - 1, m);
    if combos > ENUMERATION_LIMIT {
        return Err(Error::EnumerationGuard {
            combinations: combos,
            limit: ENUMERATION_LIMIT,
        });
    }

    let mut best: Option<(S, Vec<usize>)> = None;
    let mut breaks: Vec<usize> = (1..=m).collect();
    loop {
        let mut total = table.sse(1, if m == 0 { t } else { breaks[0] });
        for w in 0..m {
            let next_end = if w + 1 == m { t } else { breaks[w + 1] };
            total += table.sse(breaks[w] + 1, next_end);
        }
        if best.as_ref().is_none_or(|(cur, _)| total < *cur) {
            best = Some((total, breaks.clone()));
        }
        if !next_combination(&mut breaks, t - 1) {
            break;
        }
    }
    let (sse, breaks) = best.expect("at least one candidate");
    let nt = conv::<S>((table.n() * t) as f64);
    Ok(PartitionFit {
        partition: Partition::new(breaks, t).expect("enumerated breaks are valid"),
        sse,
        s_nt: sse / nt,
    })
}

/// Advances `c` to the next lexicographic m-combination of `1..=max`.
fn next_combination(c: &mut [usize], max: usize) -> bool {
    let m = c.len();
    if m == 0 {
        return false;
    }
    let mut idx = m;
    while idx > 0 {
        idx -= 1;
        if c[idx] < max - (m - 1 - idx) {
            c[idx] += 1;
            for k in idx + 1..m {
                c[k] = c[k - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Optimal partitions and per-regime pooled fits for every `m <= m_max`.
#[derive(Debug, Clone)]
pub struct DetectionRow<S: Scalar> {
    pub m: usize,
    pub partition: Partition,
    pub sse: S,
    pub s_nt: S,
    /// Pooled per-regime slopes at this partition, one entry per regime.
    pub gamma: Vec<DVector<S>>,
    pub full_rank: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct DetectionResult<S: Scalar> {
    pub n: usize,
    pub t_periods: usize,
    pub p: usize,
    pub rows: Vec<DetectionRow<S>>,
    /// Chosen break count, filled in by model selection.
    pub m_hat: Option<usize>,
}

impl<S: Scalar> DetectionResult<S> {
    pub fn row(&self, m: usize) -> &DetectionRow<S> {
        &self.rows[m]
    }

    pub fn selected_row(&self) -> Option<&DetectionRow<S>> {
        self.m_hat.map(|m| &self.rows[m])
    }
}

/// Runs the dynamic program once and reads off the optimum for each `m`.
pub fn detect_all<S: Scalar>(
    table: &SegmentSseTable<S>,
    m_max: usize,
) -> Result<DetectionResult<S>> {
    check_m(table, m_max)?;
    let rows_dp = dp_rows(table, m_max + 1);
    let t = table.t_periods();
    let mut rows = Vec::with_capacity(m_max + 1);
    for (m, dp_row) in rows_dp.iter().enumerate() {
        let cell = dp_row[t - 1].as_ref().expect("full-sample cell");
        let fit = partition_fit_from_cell(table, cell);
        let mut gamma = Vec::with_capacity(m + 1);
        let mut full_rank = Vec::with_capacity(m + 1);
        for (_, s, e) in fit.partition.regimes() {
            let seg = table.fit(s, e);
            gamma.push(seg.gamma.clone());
            full_rank.push(seg.full_rank);
        }
        rows.push(DetectionRow {
            m,
            partition: fit.partition,
            sse: fit.sse,
            s_nt: fit.s_nt,
            gamma,
            full_rank,
        });
    }
    Ok(DetectionResult {
        n: table.n(),
        t_periods: t,
        p: table.p(),
        rows,
        m_hat: None,
    })
}
