// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{gbsec_cost, Executor, ExecutorConfig, ResourceConfig, Stage, TaskResult, TaskSpec, MB_PER_VCPU};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::store::{ObjectRead, ObjectStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub vcpus: u32,
    pub memory_mb: u64,
    pub invocations: usize,
    pub mean_fetch_s: f64,
    pub mean_compute_s: f64,
    pub mean_billed_s: f64,
    pub gb_seconds: f64,
    pub usd: f64,
}

impl SweepRow {
    fn from_results(res: ResourceConfig, results: &[TaskResult], usd_per_gbsec: f64) -> Self {
        let n = results.len().max(1) as f64;
        Self {
            vcpus: res.vcpus,
            memory_mb: res.memory_mb,
            invocations: results.len(),
            mean_fetch_s: results.iter().map(|r| r.fetch_s).sum::<f64>() / n,
            mean_compute_s: results.iter().map(|r| r.compute_s).sum::<f64>() / n,
            mean_billed_s: results.iter().map(|r| r.billed_s).sum::<f64>() / n,
            gb_seconds: results.iter().map(TaskResult::gb_seconds).sum(),
            usd: gbsec_cost(results, usd_per_gbsec),
        }
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("vcpus,memory_mb,invocations,mean_fetch_s,mean_compute_s,mean_billed_s,gb_seconds,usd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.8}\n",
            r.vcpus, r.memory_mb, r.invocations, r.mean_fetch_s, r.mean_compute_s, r.mean_billed_s, r.gb_seconds, r.usd
        ));
    }
    out
}

fn sized(vcpus: u32) -> ResourceConfig {
    ResourceConfig::from_memory(vcpus as u64 * MB_PER_VCPU).with_vcpus(vcpus)
}

/// Runs the pipeline once per setting. A function with `v` vCPUs gets
/// `v × 1769` MB and `v` times the base FASTQ chunk, so the number of align
/// functions shrinks as `v` grows. Rows describe the align stage.
pub fn parallelism_sweep(config: &PipelineConfig, vcpu_settings: &[u32]) -> Result<Vec<SweepRow>> {
    if vcpu_settings.is_empty() || vcpu_settings.contains(&0) {
        return Err(Error::Param("sweep needs at least one positive vCPU setting".into()));
    }
    let mut rows = Vec::new();
    for &v in vcpu_settings {
        let mut cfg = config.clone();
        cfg.run_id = format!("{}-sweep-v{v}", config.run_id);
        cfg.fastq_chunk_bytes = config.fastq_chunk_bytes * v as u64;
        cfg.resources.insert(Stage::Align, sized(v));
        let report = run_pipeline(&cfg)?;
        let align: Vec<TaskResult> = report
            .tasks
            .iter()
            .filter(|t| t.stage == Stage::Align)
            .cloned()
            .collect();
        rows.push(SweepRow::from_results(sized(v), &align, config.usd_per_gbsec));
    }
    Ok(rows)
}

/// Compute-bound stand-in for the align stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticWorkload {
    /// Functions at one vCPU; at `v` vCPUs there are `base_functions / v`.
    pub base_functions: usize,
    /// Bytes each one-vCPU function fetches.
    pub bytes_per_base_function: u64,
    /// Busy-loop iterations per function, split evenly across its vCPUs.
    pub work_per_function: u64,
}

/// Same sweep shape as [`parallelism_sweep`] with a handler that fetches its
/// slice of a shared object and then spins.
pub fn synthetic_sweep(
    store: Arc<ObjectStore>,
    bucket: &str,
    workload: SyntheticWorkload,
    vcpu_settings: &[u32],
    usd_per_gbsec: f64,
) -> Result<Vec<SweepRow>> {
    let total = workload.base_functions as u64 * workload.bytes_per_base_function;
    let input = store.put(bucket, "sweep/synthetic.bin", &vec![b'A'; total as usize])?;
    // One function at a time, so each only competes with its own threads.
    let sequential = ExecutorConfig {
        limit: 1,
        ..ExecutorConfig::default()
    };
    let executor = Executor::new(store, sequential).with_handler(Stage::Align, synthetic_handler);
    let mut rows = Vec::new();
    for &v in vcpu_settings {
        if v == 0 || !workload.base_functions.is_multiple_of(v as usize) {
            return Err(Error::Param(format!(
                "{v} vCPUs do not divide {} functions",
                workload.base_functions
            )));
        }
        let n = workload.base_functions / v as usize;
        let slice = total / n as u64;
        let tasks: Vec<TaskSpec> = (0..n)
            .map(|i| {
                TaskSpec::new(format!("synthetic-v{v}-{i:04}"), Stage::Align, sized(v))
                    .input(input.clone())
                    .param("lo", i as u64 * slice)
                    .param("hi", (i as u64 + 1) * slice)
                    .param("work", workload.work_per_function)
            })
            .collect();
        let report = executor.submit(&tasks)?;
        if let Some(f) = report.failures().next() {
            return Err(Error::StageFailed {
                stage: "sweep".into(),
                message: format!("{:?}", f.status),
            });
        }
        rows.push(SweepRow::from_results(sized(v), &report.results, usd_per_gbsec));
    }
    Ok(rows)
}

fn synthetic_handler(ctx: &crate::executor::TaskContext<'_>) -> Result<()> {
    let data = ctx.get_range(&ctx.inputs()[0], ctx.param_as("lo")?, ctx.param_as("hi")?)?;
    let vcpus = ctx.resources().vcpus.max(1) as u64;
    let share = ctx.param_as::<u64>("work")? / vcpus;
    let seed = data.len() as u64;
    thread::scope(|s| {
        for t in 0..vcpus {
            s.spawn(move || spin(seed ^ t, share));
        }
    });
    Ok(())
}

fn spin(seed: u64, iters: u64) -> u64 {
    let mut x = seed | 1;
    for _ in 0..iters {
        x = black_box(x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407));
    }
    x
}
