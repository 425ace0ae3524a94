// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{gbsec_cost, select_cost, BatchReport, Executor, FlightLog, Stage, TaskResult, TaskSpec};
use crate::genome::{self, fai_key, FastaPartition, FastqChunk};
use crate::pipeline::stages::{self, corrected_key, encode_ranges};
use crate::pipeline::PipelineConfig;
use crate::shuffle::parse_partition_table;
use crate::store::{ObjectRef, ObjectStore};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: String,
    pub tasks: usize,
    pub failed: usize,
    pub flights: Vec<usize>,
    pub wall_s: f64,
    pub mean_billed_s: f64,
    pub max_billed_s: f64,
    pub mean_fetch_s: f64,
    pub mean_compute_s: f64,
    pub mean_store_s: f64,
    pub gb_seconds: f64,
    pub scan_bytes: u64,
}

impl StageSummary {
    fn from_batch(stage: Stage, batch: &BatchReport) -> Self {
        let n = batch.results.len();
        let mean = |f: fn(&TaskResult) -> f64| {
            if n == 0 {
                0.0
            } else {
                batch.results.iter().map(f).sum::<f64>() / n as f64
            }
        };
        Self {
            stage: stage.to_string(),
            tasks: n,
            failed: batch.failures().count(),
            flights: batch.flight_log.flights.clone(),
            wall_s: batch.wall_s,
            mean_billed_s: mean(|r| r.billed_s),
            max_billed_s: batch.results.iter().map(|r| r.billed_s).fold(0.0, f64::max),
            mean_fetch_s: mean(|r| r.fetch_s),
            mean_compute_s: mean(|r| r.compute_s),
            mean_store_s: mean(|r| r.store_s),
            gb_seconds: batch.results.iter().map(TaskResult::gb_seconds).sum(),
            scan_bytes: batch.scan().bytes_scanned,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub fasta_chunks: usize,
    pub fastq_chunks: usize,
    pub overlap_bases: u64,
    pub reduce_partitions: usize,
    pub stages: Vec<StageSummary>,
    /// All batches on one timeline, in seconds since the run started.
    pub flight_log: FlightLog,
    pub tasks: Vec<TaskResult>,
    pub gb_seconds: f64,
    pub gbsec_usd: f64,
    pub scan_bytes: u64,
    pub select_usd: f64,
    pub usd_per_gbsec: f64,
    pub usd_per_select_gb: f64,
    pub cross_task_reads: usize,
    pub wall_s: f64,
    pub output: ObjectRef,
}

impl RunReport {
    pub fn stage(&self, stage: Stage) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.stage == stage.as_str())
    }

    pub fn task_count(&self, stage: Stage) -> usize {
        self.stage(stage).map_or(0, |s| s.tasks)
    }
}

pub(crate) fn fasta_plan_key(prefix: &str) -> String {
    format!("{prefix}/plan/fasta.json")
}

/// Opens the configured store and runs the whole pipeline.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    let store = ObjectStore::open(&config.store_root)?.with_bandwidth(config.store_bandwidth);
    run_pipeline_on(Arc::new(store), config)
}

/// Pre-processing, map, shuffle and reduce phases, each stage submitted as
/// one batch of independent tasks after the previous batch finished.
pub fn run_pipeline_on(store: Arc<ObjectStore>, config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let mut driver = Driver::new(Arc::clone(&store), config);
    let bucket = config.bucket.as_str();
    let prefix = format!("runs/{}", config.run_id);
    let fasta = store.head(bucket, &config.fasta_key)?;
    let fastq = store.head(bucket, &config.fastq_key)?;

    // Pre-processing: index in place, then plan both partitionings.
    let fai_spec = TaskSpec::new("fasta_index", Stage::FastaIndex, config.resources(Stage::FastaIndex))
        .input(fasta.clone())
        .param("bucket", bucket)
        .param("out", fai_key(&config.fasta_key));
    let fai = driver
        .batch(Stage::FastaIndex, vec![fai_spec])?
        .remove(0)
        .outputs
        .remove(0);
    let index = genome::parse_fai(&String::from_utf8_lossy(&store.get(&fai)?))?;

    let planning = |e: Error| Error::StageFailed {
        stage: "plan".into(),
        message: e.to_string(),
    };
    let fastq_chunks: Vec<FastqChunk> =
        genome::plan_fastq_partitions(store.as_ref(), &fastq, config.fastq_chunk_bytes).map_err(planning)?;
    let max_read = fastq_chunks.iter().map(|c| c.max_read_len).max().unwrap_or(0);
    let overlap = config.overlap_bases.unwrap_or(max_read.saturating_sub(1));
    if config.fasta_chunk_bases <= overlap || config.fasta_chunk_bases < max_read {
        return Err(Error::Config(format!(
            "partition.fasta_chunk_bases ({}) must exceed the overlap ({overlap}) and cover the longest read ({max_read})",
            config.fasta_chunk_bases
        )));
    }
    let plan: Vec<FastaPartition> =
        genome::plan_fasta_partitions(&index, config.fasta_chunk_bases, overlap).map_err(planning)?;
    let plan_json = serde_json::to_vec(&plan).map_err(|e| Error::format(e.to_string()))?;
    let plan_ref = store.put(bucket, &fasta_plan_key(&prefix), &plan_json)?;

    // Map phase, step one: every FASTA chunk against every FASTQ chunk.
    let mut align_tasks = Vec::new();
    for q in &fastq_chunks {
        for p in &plan {
            align_tasks.push(
                TaskSpec::new(
                    format!("align-c{:04}-q{:04}", p.chunk_id, q.chunk_id),
                    Stage::Align,
                    config.resources(Stage::Align),
                )
                .inputs([fasta.clone(), fastq.clone(), plan_ref.clone()])
                .param("bucket", bucket)
                .param("out", format!("{prefix}/map/c{:04}/q{:04}.map", p.chunk_id, q.chunk_id))
                .param("chunk", p.chunk_id)
                .param("fastq_lo", q.byte_lo)
                .param("fastq_hi", q.byte_hi)
                .param("max_mismatches", config.max_mismatches),
            );
        }
    }
    let aligned = driver.batch(Stage::Align, align_tasks)?;

    // Step two: index correction, one task per FASTQ chunk.
    let mut correct_tasks = Vec::new();
    for (q, results) in fastq_chunks.iter().zip(aligned.chunks(plan.len().max(1))) {
        let maps: Vec<ObjectRef> = results.iter().map(|r| r.outputs[0].clone()).collect();
        let chunk_ids: Vec<String> = plan.iter().map(|p| p.chunk_id.to_string()).collect();
        correct_tasks.push(
            TaskSpec::new(
                format!("correct-q{:04}", q.chunk_id),
                Stage::Correct,
                config.resources(Stage::Correct),
            )
            .inputs([plan_ref.clone(), fai.clone()])
            .inputs(maps)
            .param("bucket", bucket)
            .param("out_prefix", format!("{prefix}/corrected"))
            .param("chunks", chunk_ids.join(","))
            .param("fastq_chunk", q.chunk_id),
        );
    }
    let corrected = driver.batch(Stage::Correct, correct_tasks)?;

    // Pileups only for chunk pairs with surviving alignments.
    let corrected_refs: BTreeMap<String, ObjectRef> = corrected
        .iter()
        .flat_map(|r| r.outputs.iter().map(|o| (o.key.clone(), o.clone())))
        .collect();
    let mut mpileup_tasks = Vec::new();
    let mut mpileup_chunks = Vec::new();
    for p in &plan {
        for q in &fastq_chunks {
            let Some(obj) = corrected_refs.get(&corrected_key(&format!("{prefix}/corrected"), p.chunk_id, q.chunk_id))
            else {
                continue;
            };
            mpileup_tasks.push(
                TaskSpec::new(
                    format!("mpileup-c{:04}-q{:04}", p.chunk_id, q.chunk_id),
                    Stage::Mpileup,
                    config.resources(Stage::Mpileup),
                )
                .inputs([fasta.clone(), plan_ref.clone(), fai.clone(), obj.clone()])
                .param("bucket", bucket)
                .param(
                    "out",
                    format!("{prefix}/mpileup/c{:04}/q{:04}.tsv", p.chunk_id, q.chunk_id),
                )
                .param("chunk", p.chunk_id),
            );
            mpileup_chunks.push(p.chunk_id);
        }
    }
    let pileups = driver.batch(Stage::Mpileup, mpileup_tasks)?;
    let mut by_chunk: BTreeMap<usize, Vec<ObjectRef>> = BTreeMap::new();
    for (r, chunk) in pileups.iter().zip(mpileup_chunks) {
        by_chunk.entry(chunk).or_default().extend(r.outputs.iter().cloned());
    }

    // Shuffle planning per FASTA chunk.
    let budget = config.reduce_budget();
    let plan_tasks: Vec<TaskSpec> = by_chunk
        .iter()
        .map(|(chunk, refs)| {
            TaskSpec::new(
                format!("shuffle-c{chunk:04}"),
                Stage::ShufflePlan,
                config.resources(Stage::ShufflePlan),
            )
            .inputs(refs.iter().cloned())
            .param("bucket", bucket)
            .param("out", format!("{prefix}/shuffle/c{chunk:04}.tsv"))
            .param("chunk", chunk)
            .param("budget", budget)
            .param("n_samples", config.n_samples)
        })
        .collect();
    let tables = driver.batch(Stage::ShufflePlan, plan_tasks)?;

    // Reduce.
    let mut reduce_tasks = Vec::new();
    for (result, (chunk, refs)) in tables.iter().zip(&by_chunk) {
        let text = String::from_utf8_lossy(&store.get(&result.outputs[0])?).into_owned();
        for part in parse_partition_table(&text, refs, budget)? {
            reduce_tasks.push(
                TaskSpec::new(
                    format!("reduce-c{chunk:04}-p{:04}", part.partition_id),
                    Stage::Reduce,
                    config.resources(Stage::Reduce),
                )
                .inputs(refs.iter().cloned())
                .param("bucket", bucket)
                .param(
                    "out",
                    format!("{prefix}/calls/c{chunk:04}/p{:04}.tsv", part.partition_id),
                )
                .param("chunk", chunk)
                .param("partition", part.partition_id)
                .param("ranges", encode_ranges(&part.ranges))
                .param("theta", config.caller.theta)
                .param("min_depth", config.caller.min_depth),
            );
        }
    }
    let reduce_partitions = reduce_tasks.len();
    let reduced = driver.batch(Stage::Reduce, reduce_tasks)?;

    // Concatenate in (FASTA chunk, partition) order; task ids sort that way.
    let labels: Vec<String> = reduced
        .iter()
        .map(|r| r.task_id.trim_start_matches("reduce-").to_string())
        .collect();
    let concat = TaskSpec::new("concat", Stage::Concat, config.resources(Stage::Concat))
        .input(fai.clone())
        .inputs(reduced.iter().map(|r| r.outputs[0].clone()))
        .param("bucket", bucket)
        .param("out", format!("{prefix}/output/calls.tsv"))
        .param("labels", labels.join(","));
    let output = driver.batch(Stage::Concat, vec![concat])?.remove(0).outputs.remove(0);

    if !config.keep_intermediates {
        for key in store.list(bucket, &format!("{prefix}/"))? {
            if key != output.key {
                store.delete(bucket, &key)?;
            }
        }
    }

    Ok(driver.finish(output, plan.len(), fastq_chunks.len(), overlap, reduce_partitions))
}

struct Driver<'a> {
    executor: Executor,
    config: &'a PipelineConfig,
    start: Instant,
    stages: Vec<StageSummary>,
    flight_log: FlightLog,
    tasks: Vec<TaskResult>,
    cross_task_reads: usize,
}

impl<'a> Driver<'a> {
    fn new(store: Arc<ObjectStore>, config: &'a PipelineConfig) -> Self {
        let mut executor = Executor::new(store, config.executor);
        stages::register_all(&mut executor);
        Self {
            executor,
            config,
            start: Instant::now(),
            stages: Vec::new(),
            flight_log: FlightLog {
                limit: config.executor.limit,
                ..FlightLog::default()
            },
            tasks: Vec::new(),
            cross_task_reads: 0,
        }
    }

    fn batch(&mut self, stage: Stage, tasks: Vec<TaskSpec>) -> Result<Vec<TaskResult>> {
        let offset = self.start.elapsed().as_secs_f64();
        let report = self.executor.submit(&tasks)?;
        log::info!("{stage}: {} tasks in {:.3}s", report.results.len(), report.wall_s);
        self.flight_log.extend_shifted(&report.flight_log, offset);
        self.stages.push(StageSummary::from_batch(stage, &report));
        self.cross_task_reads += report.cross_task_reads;
        self.tasks.extend(report.results.iter().cloned());
        if let Some(failed) = report.failures().next() {
            let message = match &failed.status {
                crate::executor::TaskStatus::Failed { message } => message.clone(),
                crate::executor::TaskStatus::Succeeded => unreachable!(),
            };
            return Err(Error::StageFailed {
                stage: stage.to_string(),
                message,
            });
        }
        Ok(report.results)
    }

    fn finish(
        self,
        output: ObjectRef,
        fasta_chunks: usize,
        fastq_chunks: usize,
        overlap: u64,
        reduce_partitions: usize,
    ) -> RunReport {
        let gb_seconds = self.tasks.iter().map(TaskResult::gb_seconds).sum();
        let scan_bytes = self.tasks.iter().map(|t| t.scan.bytes_scanned).sum();
        RunReport {
            run_id: self.config.run_id.clone(),
            fasta_chunks,
            fastq_chunks,
            overlap_bases: overlap,
            reduce_partitions,
            stages: self.stages,
            flight_log: self.flight_log,
            gbsec_usd: gbsec_cost(&self.tasks, self.config.usd_per_gbsec),
            tasks: self.tasks,
            gb_seconds,
            scan_bytes,
            select_usd: select_cost(scan_bytes, self.config.usd_per_select_gb),
            usd_per_gbsec: self.config.usd_per_gbsec,
            usd_per_select_gb: self.config.usd_per_select_gb,
            cross_task_reads: self.cross_task_reads,
            wall_s: self.start.elapsed().as_secs_f64(),
            output,
        }
    }
}
