//! Experiment configuration, the training loop, metrics output and the
//! per-layer timing benchmark.

mod bench;
mod config;
mod experiment;
mod metrics;

pub use bench::{run_bench, BenchConfig, BenchLayer, BenchReport};
pub use config::{DatasetKind, ExperimentConfig, LossMode, Model, OptimizerKind};
pub use experiment::{
    accuracy, build_assignments, build_network, load_dataset, run_experiment, run_on_dataset, ExperimentSummary,
    StepOutcome, Trainer, DEFAULT_SGD_LR,
};
pub use metrics::{emit_metrics, format_sig9, parse_metrics, read_metrics, write_metrics, MetricsRecord, METRICS_HEADER};
