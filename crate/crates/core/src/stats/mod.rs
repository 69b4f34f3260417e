//! Correlation screening of features against forward returns.

mod pearson;
mod significance;

pub use pearson::{minmax_normalize, pearson, Correlation, SignificanceRule};
pub use significance::{
    passing_rate_filter, select_target, significance_counts, BestShift, Exemplar, ReturnSeries,
    SignificanceConfig, SignificanceTable, TargetDistribution, TargetSelection,
};
