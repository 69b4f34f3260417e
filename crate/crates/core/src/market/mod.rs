//! Weekly prices, forward-return targets and technical indicators.

mod bars;
mod indicators;

pub use bars::{
    bars_by_firm, label, labeled_samples, tau_filter, weekly_bars, weekly_returns,
    write_targets_csv, LabeledSample, WeeklyBar, MAX_HORIZON,
};
pub use indicators::{
    indicator_series, technical_indicators, warm_up, write_indicators_csv, IndicatorVector,
    DEFAULT_PERIOD, MACD_PERIOD,
};
