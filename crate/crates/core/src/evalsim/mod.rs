//! Simulation apparatus: source catalogue, outlier generators, mixing
//! matrices, the Amari error and the replication harness.

pub mod contamination;
pub mod harness;
pub mod metrics;
pub mod sources;

pub use contamination::{
    contaminate_clustered, contaminate_increasing, contaminate_multiplicative,
    contaminate_multiplicative_with, ContaminationKind, ContaminationSpec,
};
pub use harness::{
    derive_seed, generate_dataset, run_benchmark, summarize, write_trials_csv, BenchConfig,
    Dataset, MethodKind, SummaryTable, TrialResult, TRIALS_HEADER,
};
pub use metrics::{
    amari_error, condition_number, random_mixing_draw, random_mixing_matrix, MixingDraw,
};
pub use sources::{catalogue, sample_sources, source_spec, DistributionChoice, Family, SourceSpec};
