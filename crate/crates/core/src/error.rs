//! Error type shared across the library.

/// Errors reported by panel construction, detection, estimation and testing.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    /// A fit left zero residual variance, so log-based criteria are undefined.
    #[error("degenerate fit: zero residual variance at m = {m}")]
    DegenerateFit { m: usize },

    /// Every regime is a single period; nothing survives within-demeaning.
    #[error("no regime spans two or more periods; within estimation is not possible")]
    NoEstimableRegime,

    #[error("rank-deficient system in {context}")]
    RankDeficient { context: String },

    /// A two-regime test was requested where one side is not estimable.
    #[error("regimes {left} and {right} cannot be tested: {reason}")]
    NotTestable {
        left: usize,
        right: usize,
        reason: String,
    },

    /// Exhaustive partition search would enumerate too many candidates.
    #[error("refusing exhaustive search over {combinations} partitions (limit {limit})")]
    EnumerationGuard { combinations: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;
