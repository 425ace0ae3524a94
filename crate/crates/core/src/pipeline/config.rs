// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::{ExecutorConfig, ResourceConfig, Stage};
use crate::shuffle::CallerParams;

pub const STORE_ROOT_ENV: &str = "FAASFLOW_STORE_ROOT";

/// Every tunable of a run. Loaded from `key = value` text, then overridden
/// per key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub store_root: PathBuf,
    pub bucket: String,
    /// Simulated store transfer rate; `None` means raw local I/O.
    pub store_bandwidth: Option<f64>,
    pub fasta_key: String,
    pub fastq_key: String,
    pub run_id: String,
    pub keep_intermediates: bool,
    pub fasta_chunk_bases: u64,
    pub fastq_chunk_bytes: u64,
    /// Defaults to the longest read length minus one.
    pub overlap_bases: Option<u64>,
    pub max_mismatches: u32,
    pub caller: CallerParams,
    pub executor: ExecutorConfig,
    pub resources: BTreeMap<Stage, ResourceConfig>,
    pub usd_per_gbsec: f64,
    pub usd_per_select_gb: f64,
    /// Fraction of reduce-function memory a partition may fill.
    pub alpha: f64,
    pub n_samples: usize,
    /// Overrides `alpha × reduce memory` when set.
    pub budget_bytes: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut resources: BTreeMap<Stage, ResourceConfig> = Stage::ALL
            .iter()
            .map(|&s| (s, ResourceConfig::from_memory(2048)))
            .collect();
        resources.insert(Stage::Align, ResourceConfig::from_memory(8192));
        Self {
            store_root: PathBuf::from("store"),
            bucket: "data".into(),
            store_bandwidth: None,
            fasta_key: "genome.fa".into(),
            fastq_key: "reads.fq".into(),
            run_id: "run".into(),
            keep_intermediates: true,
            fasta_chunk_bases: 1_000_000,
            fastq_chunk_bytes: 8 << 20,
            overlap_bases: None,
            max_mismatches: 2,
            caller: CallerParams::default(),
            executor: ExecutorConfig::default(),
            resources,
            usd_per_gbsec: 0.000_016_666_7,
            usd_per_select_gb: 0.002,
            alpha: 0.5,
            n_samples: 100,
            budget_bytes: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies `FAASFLOW_STORE_ROOT` if set.
    pub fn apply_env(&mut self) {
        if let Ok(root) = std::env::var(STORE_ROOT_ENV) {
            if !root.is_empty() {
                self.store_root = PathBuf::from(root);
            }
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "store.root" => self.store_root = PathBuf::from(value),
            "store.bucket" => self.bucket = value.to_string(),
            "store.bandwidth_bytes_per_sec" => {
                self.store_bandwidth = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "input.fasta" => self.fasta_key = value.to_string(),
            "input.fastq" => self.fastq_key = value.to_string(),
            "run.id" => self.run_id = value.to_string(),
            "run.keep_intermediates" => self.keep_intermediates = parse(key, value)?,
            "partition.fasta_chunk_bases" => self.fasta_chunk_bases = parse(key, value)?,
            "partition.fastq_chunk_bytes" => self.fastq_chunk_bytes = parse(key, value)?,
            "partition.overlap_bases" => {
                self.overlap_bases = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "align.max_mismatches" => self.max_mismatches = parse(key, value)?,
            "call.theta" => self.caller.theta = parse(key, value)?,
            "call.min_depth" => self.caller.min_depth = parse(key, value)?,
            "executor.limit" => self.executor.limit = parse(key, value)?,
            "executor.mode" => self.executor.mode = parse(key, value)?,
            "executor.retries" => self.executor.retries = parse(key, value)?,
            "cost.usd_per_gbsec" => self.usd_per_gbsec = parse(key, value)?,
            "cost.usd_per_select_gb" => self.usd_per_select_gb = parse(key, value)?,
            "shuffle.alpha" => self.alpha = parse(key, value)?,
            "shuffle.n_samples" => self.n_samples = parse(key, value)?,
            "shuffle.budget_bytes" => {
                self.budget_bytes = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            other => {
                let parts: Vec<&str> = other.split('.').collect();
                match parts.as_slice() {
                    ["resources", stage, field] => {
                        let stage: Stage = stage.parse()?;
                        let cur = self.resources.entry(stage).or_default();
                        match *field {
                            // Memory re-derives the tied vCPU count; set vcpus
                            // after memory to override it.
                            "memory_mb" => *cur = ResourceConfig::from_memory(parse(key, value)?),
                            "vcpus" => cur.vcpus = parse(key, value)?,
                            _ => return Err(Error::Config(format!("unknown key {other}"))),
                        }
                    }
                    _ => return Err(Error::Config(format!("unknown key {other}"))),
                }
            }
        }
        Ok(())
    }

    pub fn resources(&self, stage: Stage) -> ResourceConfig {
        self.resources.get(&stage).copied().unwrap_or_default()
    }

    /// Byte budget of one reduce partition.
    pub fn reduce_budget(&self) -> u64 {
        self.budget_bytes.unwrap_or_else(|| {
            (self.alpha * self.resources(Stage::Reduce).memory_mb as f64 * (1u64 << 20) as f64) as u64
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("partition.fasta_chunk_bases", self.fasta_chunk_bases),
            ("partition.fastq_chunk_bytes", self.fastq_chunk_bytes),
            ("executor.limit", self.executor.limit as u64),
            ("shuffle.n_samples", self.n_samples as u64),
            ("call.min_depth", self.caller.min_depth as u64),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !(self.caller.theta > 0.0 && self.caller.theta <= 1.0) {
            return Err(Error::Config(format!(
                "call.theta must be in (0, 1], got {}",
                self.caller.theta
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "shuffle.alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.usd_per_gbsec < 0.0 || self.usd_per_select_gb < 0.0 {
            return Err(Error::Config("cost rates must be non-negative".into()));
        }
        for r in self.resources.values() {
            r.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.budget_bytes == Some(0) {
            return Err(Error::Config("shuffle.budget_bytes must be positive".into()));
        }
        Ok(())
    }
}
