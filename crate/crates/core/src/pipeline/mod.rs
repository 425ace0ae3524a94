// SPDX-License-Identifier: Apache-2.0

mod config;
mod oracle;
mod report;
mod run;
mod stages;
mod sweep;

pub use config::{PipelineConfig, STORE_ROOT_ENV};
pub use oracle::{oracle_calls, oracle_run};
pub use report::{cost_summary, load_report, report_stats, stages_tsv, tasks_tsv};
pub use run::{run_pipeline, run_pipeline_on, RunReport, StageSummary};
pub use sweep::{parallelism_sweep, sweep_csv, synthetic_sweep, SweepRow, SyntheticWorkload};
