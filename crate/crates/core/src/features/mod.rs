//! Windowed review features: the catalog of keys and their computation.

mod catalog;
mod compute;

pub use catalog::{enumerate_catalog, BaseFeature, Category, FeatureKey, Variant, WindowGrid};
pub use compute::{
    compute_features, shift_features, write_catalog_json, FeatureMatrix, FirmBlock, RowKey,
};
