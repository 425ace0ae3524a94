// SPDX-License-Identifier: Apache-2.0

//! A provider-independent serverless map-reduce variant-calling pipeline.
//!
//! Reference genome (FASTA) and reads (FASTQ) live in a filesystem-backed
//! object store. The pipeline indexes the FASTA in place, aligns every
//! FASTA chunk against every FASTQ chunk on a simulated FaaS executor,
//! corrects cross-chunk alignments in a second independent step, builds
//! per-chunk pileups and shuffles them into memory-budgeted position ranges
//! through a scan-priced select engine before calling variants.

pub mod error;
pub mod executor;
pub mod genome;
pub mod map;
pub mod pipeline;
pub mod select;
pub mod shuffle;
pub mod store;

pub use error::{Error, Result};
pub use executor::{
    gb_seconds, gbsec_cost, select_cost, BatchReport, Executor, ExecutorConfig, FlightLog, ResourceConfig,
    ScheduleMode, Stage, StageHandler, TaskContext, TaskResult, TaskSpec, TaskStatus,
};
pub use pipeline::{oracle_run, run_pipeline, PipelineConfig, RunReport};
pub use select::{ScanQuery, ScanReport};
pub use store::{ObjectRead, ObjectRef, ObjectStore};
