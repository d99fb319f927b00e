//! Experiment configs, Monte Carlo versus exact comparisons, and CSV/JSON output.

mod compare;
mod config;
mod run;

pub use compare::{
    compare, judge, Adjudication, AdjudicationTarget, ComparisonReport, ComparisonRow, Estimate, Tally, Verdict,
    Z_THRESHOLD,
};
pub use config::{parse_measure, ExperimentConfig, Mode, SampleSizes, MAX_EXACT_N, MAX_J, MAX_K, MAX_N};
pub use run::{
    asymptotics_csv, compare_report, convergence_report, csv_text, exact_moment_ids, fmt_real, frequency_id,
    frequency_moments, limit_targets, moment_id, moments_csv, oracle_csv, rates_csv, report_csv, run_experiment,
    sampled_moments, write_atomic, RunOutcome,
};
