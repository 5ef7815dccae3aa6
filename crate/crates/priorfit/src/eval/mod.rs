//! Evaluation harness: dataset I/O, metrics, benchmarks, the enumeration
//! Bayes oracle, and the scaled-down recovery/extrapolation experiments.

pub mod experiments;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod results;

pub use experiments::{
    gp_recovery_slots, run_extrapolation, run_gp_recovery, separable_task, write_curves_csv,
    LossCurve, RecoveryConfig, RecoveryReport,
};
pub use io::{
    load_dataset, load_prediction_pair, save_dataset, split, ColumnType, LabeledDataset, Schema,
};
pub use metrics::{accuracy, cross_entropy, roc_auc_ovo};
pub use oracle::{
    exact_ppd, four_threshold_prior, model_query_probabilities, oracle_probe_tvs,
    sample_oracle_dataset, total_variation, DiscretePrior, Hypothesis,
};
pub use results::{
    aggregate, config_hash, read_records, render_summary, run_benchmark, write_records,
    write_summary_csv, write_summary_svg, AggregateRow, BenchmarkConfig, BenchmarkOutcome,
    ResultRecord,
};
