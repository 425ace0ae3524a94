// SPDX-License-Identifier: Apache-2.0

//! Simulated FaaS backend: a work queue of independent tasks run under a hard
//! concurrency limit, with per-task fetch/compute/store timing and GB-second
//! billing.
//!
//! Tasks never wait on each other. The store is the only channel between
//! them; every input must exist when the batch is submitted, and the
//! executor counts any read of an object produced by another task of the
//! same batch as a cross-task dependency.

use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::{self, Row, ScanQuery, ScanReport, SelectEngine};
use crate::store::{ObjectRead, ObjectRef, ObjectStore};

/// Memory per vCPU on the reference platform: 1769 MB buys one full vCPU.
pub const MB_PER_VCPU: u64 = 1769;

const WORKER_STACK: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FastaIndex,
    Align,
    Correct,
    Mpileup,
    ShufflePlan,
    Reduce,
    Concat,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::FastaIndex,
        Stage::Align,
        Stage::Correct,
        Stage::Mpileup,
        Stage::ShufflePlan,
        Stage::Reduce,
        Stage::Concat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::FastaIndex => "fasta_index",
            Stage::Align => "align",
            Stage::Correct => "correct",
            Stage::Mpileup => "mpileup",
            Stage::ShufflePlan => "shuffle_plan",
            Stage::Reduce => "reduce",
            Stage::Concat => "concat",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceConfig {
    pub memory_mb: u64,
    pub vcpus: u32,
}

impl ResourceConfig {
    /// vCPUs tied to memory: one per full 1769 MB, at least one, so 8192 MB
    /// gets 4.
    pub fn from_memory(memory_mb: u64) -> Self {
        let vcpus = (memory_mb / MB_PER_VCPU).max(1) as u32;
        Self { memory_mb, vcpus }
    }

    pub fn with_vcpus(mut self, vcpus: u32) -> Self {
        self.vcpus = vcpus;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.memory_mb == 0 || self.vcpus == 0 {
            return Err(Error::param(format!(
                "resources need memory_mb > 0 and vcpus >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for ResourceConfig {
    fn default() -> Self {
        Self::from_memory(2048)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub stage: Stage,
    pub inputs: Vec<ObjectRef>,
    pub params: BTreeMap<String, String>,
    pub resources: ResourceConfig,
}

impl TaskSpec {
    pub fn new(task_id: impl Into<String>, stage: Stage, resources: ResourceConfig) -> Self {
        Self {
            task_id: task_id.into(),
            stage,
            inputs: Vec::new(),
            params: BTreeMap::new(),
            resources,
        }
    }

    pub fn input(mut self, obj: ObjectRef) -> Self {
        self.inputs.push(obj);
        self
    }

    pub fn inputs(mut self, objs: impl IntoIterator<Item = ObjectRef>) -> Self {
        self.inputs.extend(objs);
        self
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TaskStatus {
    Succeeded,
    Failed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub stage: Stage,
    pub status: TaskStatus,
    pub attempts: u32,
    pub outputs: Vec<ObjectRef>,
    pub fetch_s: f64,
    pub compute_s: f64,
    pub store_s: f64,
    pub billed_s: f64,
    /// Seconds since the batch started.
    pub started_at: f64,
    pub ended_at: f64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub peak_est_bytes: u64,
    pub scan: ScanReport,
    pub memory_mb: u64,
    pub vcpus: u32,
}

impl TaskResult {
    pub fn succeeded(&self) -> bool {
        self.status == TaskStatus::Succeeded
    }

    pub fn gb_seconds(&self) -> f64 {
        gb_seconds(self.memory_mb, self.billed_s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Launch `min(limit, remaining)` tasks, wait for all, repeat.
    #[default]
    Wave,
    /// Start a queued task as soon as any slot frees.
    Streaming,
}

impl FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wave" => Ok(ScheduleMode::Wave),
            "streaming" => Ok(ScheduleMode::Streaming),
            other => Err(Error::Config(format!("unknown executor mode {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleMode::Wave => "wave",
            ScheduleMode::Streaming => "streaming",
        })
    }
}

/// Launch groups and the in-flight count after every start and finish.
///
/// In wave mode each flight is one wave. In streaming mode the first flight
/// is the initial burst and the second counts the tasks that were started
/// into freed slots.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub limit: usize,
    pub flights: Vec<usize>,
    pub timeline: Vec<(f64, usize)>,
}

impl FlightLog {
    pub fn max_in_flight(&self) -> usize {
        self.timeline.iter().map(|&(_, n)| n).max().unwrap_or(0)
    }

    /// Appends another log whose times are relative to `offset`.
    pub fn extend_shifted(&mut self, other: &FlightLog, offset: f64) {
        self.limit = self.limit.max(other.limit);
        self.flights.extend_from_slice(&other.flights);
        self.timeline
            .extend(other.timeline.iter().map(|&(t, n)| (t + offset, n)));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,in_flight\n");
        for (t, n) in &self.timeline {
            out.push_str(&format!("{t:.6},{n}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub results: Vec<TaskResult>,
    pub flight_log: FlightLog,
    /// Reads of objects written by another task of the same batch.
    pub cross_task_reads: usize,
    pub wall_s: f64,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = &TaskResult> {
        self.results.iter().filter(|r| !r.succeeded())
    }

    pub fn scan(&self) -> ScanReport {
        let mut total = ScanReport::default();
        for r in &self.results {
            total.accumulate(&r.scan);
        }
        total
    }
}

/// Allocated gigabytes times billed seconds.
pub fn gb_seconds(memory_mb: u64, billed_s: f64) -> f64 {
    memory_mb as f64 / 1024.0 * billed_s
}

/// Σ memory_gb × billed_s × rate.
pub fn gbsec_cost(results: &[TaskResult], usd_per_gbsec: f64) -> f64 {
    results.iter().map(TaskResult::gb_seconds).sum::<f64>() * usd_per_gbsec
}

/// Scan-priced query cost: `bytes / 2^30 × rate`.
pub fn select_cost(bytes_scanned: u64, usd_per_gb: f64) -> f64 {
    bytes_scanned as f64 / (1u64 << 30) as f64 * usd_per_gb
}

pub trait StageHandler: Send + Sync {
    fn run(&self, ctx: &TaskContext<'_>) -> Result<()>;
}

impl<F> StageHandler for F
where
    F: Fn(&TaskContext<'_>) -> Result<()> + Send + Sync,
{
    fn run(&self, ctx: &TaskContext<'_>) -> Result<()> {
        self(ctx)
    }
}

#[derive(Default)]
struct BatchState {
    writers: Mutex<HashMap<String, String>>,
    cross_reads: AtomicUsize,
}

impl BatchState {
    fn record_write(&self, path: String, task_id: &str) {
        self.writers
            .lock()
            .expect("batch state poisoned")
            .insert(path, task_id.to_string());
    }

    fn check_read(&self, path: &str, task_id: &str) {
        let writers = self.writers.lock().expect("batch state poisoned");
        if writers.get(path).is_some_and(|w| w != task_id) {
            self.cross_reads.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// The store as seen from inside one task: reads are timed as fetch, writes
/// as store, and every written object is recorded as a task output.
pub struct TaskContext<'a> {
    store: &'a ObjectStore,
    spec: &'a TaskSpec,
    batch: &'a BatchState,
    fetch: Cell<Duration>,
    store_time: Cell<Duration>,
    bytes_read: Cell<u64>,
    bytes_written: Cell<u64>,
    scan: Cell<ScanReport>,
    outputs: RefCell<Vec<ObjectRef>>,
}

impl<'a> TaskContext<'a> {
    fn new(store: &'a ObjectStore, spec: &'a TaskSpec, batch: &'a BatchState) -> Self {
        Self {
            store,
            spec,
            batch,
            fetch: Cell::new(Duration::ZERO),
            store_time: Cell::new(Duration::ZERO),
            bytes_read: Cell::new(0),
            bytes_written: Cell::new(0),
            scan: Cell::new(ScanReport::default()),
            outputs: RefCell::new(Vec::new()),
        }
    }

    pub fn spec(&self) -> &TaskSpec {
        self.spec
    }

    pub fn inputs(&self) -> &[ObjectRef] {
        &self.spec.inputs
    }

    pub fn resources(&self) -> ResourceConfig {
        self.spec.resources
    }

    pub fn param(&self, key: &str) -> Result<&str> {
        self.spec
            .params
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::param(format!("task {} is missing param {key:?}", self.spec.task_id)))
    }

    pub fn param_as<T: FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.param(key)?;
        raw.parse()
            .map_err(|_| Error::param(format!("param {key}={raw:?} has the wrong type")))
    }

    fn timed_read<T>(&self, obj: &ObjectRef, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.batch.check_read(&obj.path(), &self.spec.task_id);
        let t = Instant::now();
        let out = f();
        self.fetch.set(self.fetch.get() + t.elapsed());
        out
    }

    pub fn head(&self, bucket: &str, key: &str) -> Result<ObjectRef> {
        let t = Instant::now();
        let out = self.store.head(bucket, key);
        self.fetch.set(self.fetch.get() + t.elapsed());
        out
    }

    pub fn list(&self, bucket: &str, prefix: &str) -> Result<Vec<String>> {
        let t = Instant::now();
        let out = self.store.list(bucket, prefix);
        self.fetch.set(self.fetch.get() + t.elapsed());
        out
    }

    pub fn put(&self, bucket: &str, key: &str, data: &[u8]) -> Result<ObjectRef> {
        let t = Instant::now();
        let out = self.store.put(bucket, key, data);
        self.store_time.set(self.store_time.get() + t.elapsed());
        let obj = out?;
        self.bytes_written.set(self.bytes_written.get() + obj.size);
        self.batch.record_write(obj.path(), &self.spec.task_id);
        self.outputs.borrow_mut().push(obj.clone());
        Ok(obj)
    }

    /// Runs a scan query; the full object is read and billed.
    pub fn select(&self, obj: &ObjectRef, query: &ScanQuery) -> Result<(Vec<Row>, ScanReport)> {
        let data = self.get(obj)?;
        let (rows, report) = select::select_bytes(&data, query)?;
        let mut acc = self.scan.get();
        acc.accumulate(&report);
        self.scan.set(acc);
        Ok((rows, report))
    }
}

impl SelectEngine for TaskContext<'_> {
    fn select(&self, obj: &ObjectRef, query: &ScanQuery) -> Result<(Vec<Row>, ScanReport)> {
        TaskContext::select(self, obj, query)
    }
}

impl ObjectRead for TaskContext<'_> {
    fn get(&self, obj: &ObjectRef) -> Result<Vec<u8>> {
        let data = self.timed_read(obj, || self.store.get(obj))?;
        self.bytes_read.set(self.bytes_read.get() + data.len() as u64);
        Ok(data)
    }

    fn get_range(&self, obj: &ObjectRef, lo: u64, hi: u64) -> Result<Vec<u8>> {
        let data = self.timed_read(obj, || self.store.get_range(obj, lo, hi))?;
        self.bytes_read.set(self.bytes_read.get() + data.len() as u64);
        Ok(data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub limit: usize,
    pub mode: ScheduleMode,
    pub retries: u32,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            limit: 1000,
            mode: ScheduleMode::Wave,
            retries: 2,
        }
    }
}

struct Timeline {
    start: Instant,
    state: Mutex<(usize, Vec<(f64, usize)>)>,
}

impl Timeline {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            state: Mutex::new((0, Vec::new())),
        }
    }

    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn enter(&self) -> f64 {
        let mut st = self.state.lock().expect("timeline poisoned");
        let t = self.now();
        st.0 += 1;
        let n = st.0;
        st.1.push((t, n));
        t
    }

    fn leave(&self) -> f64 {
        let mut st = self.state.lock().expect("timeline poisoned");
        let t = self.now();
        st.0 -= 1;
        let n = st.0;
        st.1.push((t, n));
        t
    }
}

pub struct Executor {
    store: Arc<ObjectStore>,
    handlers: HashMap<Stage, Arc<dyn StageHandler>>,
    config: ExecutorConfig,
}

impl Executor {
    pub fn new(store: Arc<ObjectStore>, config: ExecutorConfig) -> Self {
        Self {
            store,
            handlers: HashMap::new(),
            config,
        }
    }

    pub fn with_handler(mut self, stage: Stage, handler: impl StageHandler + 'static) -> Self {
        self.handlers.insert(stage, Arc::new(handler));
        self
    }

    pub fn register(&mut self, stage: Stage, handler: Arc<dyn StageHandler>) {
        self.handlers.insert(stage, handler);
    }

    pub fn store(&self) -> &Arc<ObjectStore> {
        &self.store
    }

    pub fn config(&self) -> ExecutorConfig {
        self.config
    }

    pub fn set_config(&mut self, config: ExecutorConfig) {
        self.config = config;
    }

    /// Runs one batch of mutually independent tasks. Results come back in
    /// submission order whatever the completion order.
    pub fn submit(&self, tasks: &[TaskSpec]) -> Result<BatchReport> {
        let ExecutorConfig { limit, mode, .. } = self.config;
        if limit == 0 {
            return Err(Error::param("concurrency limit must be at least 1"));
        }
        for t in tasks {
            t.resources.validate()?;
            for input in &t.inputs {
                self.store.head(&input.bucket, &input.key).map_err(|e| {
                    Error::param(format!(
                        "task {} input {} is not materialised: {e}",
                        t.task_id,
                        input.path()
                    ))
                })?;
            }
        }

        let batch = BatchState::default();
        let timeline = Timeline::new();
        let mut flights = Vec::new();
        let mut results: Vec<Option<TaskResult>> = vec![None; tasks.len()];

        match mode {
            ScheduleMode::Wave => {
                let mut base = 0;
                for flight in tasks.chunks(limit) {
                    flights.push(flight.len());
                    thread::scope(|scope| {
                        let handles: Vec<_> = flight
                            .iter()
                            .map(|spec| {
                                let (batch, timeline) = (&batch, &timeline);
                                thread::Builder::new()
                                    .stack_size(WORKER_STACK)
                                    .spawn_scoped(scope, move || self.run_in_batch(spec, batch, timeline))
                                    .expect("spawn worker")
                            })
                            .collect();
                        for (i, h) in handles.into_iter().enumerate() {
                            results[base + i] = Some(h.join().expect("worker panicked outside handler"));
                        }
                    });
                    base += flight.len();
                }
            }
            ScheduleMode::Streaming => {
                let workers = limit.min(tasks.len());
                if workers > 0 {
                    flights.push(workers);
                    if tasks.len() > workers {
                        flights.push(tasks.len() - workers);
                    }
                }
                let next = AtomicUsize::new(0);
                let slots = Mutex::new(&mut results);
                thread::scope(|scope| {
                    for _ in 0..workers {
                        let (batch, timeline, next, slots) = (&batch, &timeline, &next, &slots);
                        thread::Builder::new()
                            .stack_size(WORKER_STACK)
                            .spawn_scoped(scope, move || loop {
                                let i = next.fetch_add(1, Ordering::Relaxed);
                                let Some(spec) = tasks.get(i) else { break };
                                let r = self.run_in_batch(spec, batch, timeline);
                                slots.lock().expect("result slots poisoned")[i] = Some(r);
                            })
                            .expect("spawn worker");
                    }
                });
            }
        }

        let wall_s = timeline.now();
        let (_, points) = timeline.state.into_inner().expect("timeline poisoned");
        Ok(BatchReport {
            results: results.into_iter().map(|r| r.expect("every task ran")).collect(),
            flight_log: FlightLog {
                limit,
                flights,
                timeline: points,
            },
            cross_task_reads: batch.cross_reads.load(Ordering::Relaxed),
            wall_s,
        })
    }

    /// Runs a single task outside any batch.
    pub fn run_task(&self, spec: &TaskSpec) -> TaskResult {
        self.run_in_batch(spec, &BatchState::default(), &Timeline::new())
    }

    fn run_in_batch(&self, spec: &TaskSpec, batch: &BatchState, timeline: &Timeline) -> TaskResult {
        let started_at = timeline.enter();
        let retries = spec
            .params
            .get("retries")
            .and_then(|r| r.parse().ok())
            .unwrap_or(self.config.retries);

        let mut fetch = Duration::ZERO;
        let mut compute = Duration::ZERO;
        let mut store_t = Duration::ZERO;
        let mut bytes_read = 0;
        let mut bytes_written = 0;
        let mut peak = 0;
        let mut scan = ScanReport::default();
        let mut attempts = 0;
        let mut outputs = Vec::new();
        let mut status = TaskStatus::Failed {
            message: "not run".into(),
        };

        while attempts <= retries {
            attempts += 1;
            let ctx = TaskContext::new(&self.store, spec, batch);
            let t = Instant::now();
            let outcome = match self.handlers.get(&spec.stage) {
                Some(h) => catch_unwind(AssertUnwindSafe(|| h.run(&ctx))).unwrap_or_else(|p| {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "handler panicked".into());
                    Err(Error::Consistency(msg))
                }),
                None => Err(Error::Config(format!("no handler registered for stage {}", spec.stage))),
            };
            let elapsed = t.elapsed();
            let (f, s) = (ctx.fetch.get(), ctx.store_time.get());
            fetch += f;
            store_t += s;
            compute += elapsed.saturating_sub(f + s);
            bytes_read += ctx.bytes_read.get();
            bytes_written += ctx.bytes_written.get();
            peak = peak.max(ctx.bytes_read.get() + ctx.bytes_written.get());
            scan.accumulate(&ctx.scan.get());
            match outcome {
                Ok(()) => {
                    outputs = ctx.outputs.into_inner();
                    status = TaskStatus::Succeeded;
                    break;
                }
                Err(e) => {
                    log::debug!("task {} attempt {attempts} failed: {e}", spec.task_id);
                    status = TaskStatus::Failed {
                        message: Error::TaskFailed {
                            stage: spec.stage.to_string(),
                            task_id: spec.task_id.clone(),
                            message: e.to_string(),
                        }
                        .to_string(),
                    };
                }
            }
        }

        let ended_at = timeline.leave();
        TaskResult {
            task_id: spec.task_id.clone(),
            stage: spec.stage,
            status,
            attempts,
            outputs,
            fetch_s: fetch.as_secs_f64(),
            compute_s: compute.as_secs_f64(),
            store_s: store_t.as_secs_f64(),
            billed_s: ended_at - started_at,
            started_at,
            ended_at,
            bytes_read,
            bytes_written,
            peak_est_bytes: peak,
            scan,
            memory_mb: spec.resources.memory_mb,
            vcpus: spec.resources.vcpus,
        }
    }
}
