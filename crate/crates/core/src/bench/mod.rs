//! Instance generators and rule comparison tables.

pub mod compare;
pub mod generators;

pub use compare::{
    arithmetic_mean, compare, gap_csv, geometric_mean, normalize_gaps, runs_csv, summary_csv,
    RunRecord,
};
pub use generators::{gen_bbp, gen_pooling_toy, haverly1, GenError, PoolingKind};
