//! Experiment orchestration: training, evaluation and baseline runs that
//! write CSV artifacts, plus cross-run comparison.

mod compare;
mod config;
mod run;

pub use compare::{compare, Comparison, PairRow, SummaryRow, PAIRWISE_FILE, SUMMARY_FILE};
pub use config::{EvalConfig, ExperimentConfig, Method};
pub use run::{
    final_rewards_csv, learning_curve_csv, nth_lowest_csv, run_baseline, run_eval, run_train, test_seeds,
    RunArtifacts, CHECKPOINT_FILE, CONFIG_FILE, DIVERGENCE_FILE, FINAL_REWARDS_FILE, LEARNING_CURVE_FILE,
    NTH_LOWEST_FILE, TRACE_FILE,
};
