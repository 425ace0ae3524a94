// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::RunReport;

pub const CONCURRENCY_CSV: &str = "concurrency.csv";
pub const STAGES_TSV: &str = "stages.tsv";
pub const TASKS_TSV: &str = "tasks.tsv";
pub const COST_TXT: &str = "cost.txt";
pub const REPORT_JSON: &str = "report.json";

pub fn stages_tsv(report: &RunReport) -> String {
    let mut out = String::from(
        "stage\ttasks\tfailed\tflights\twall_s\tmean_billed_s\tmax_billed_s\tmean_fetch_s\tmean_compute_s\tmean_store_s\tgb_seconds\tscan_bytes\n",
    );
    for s in &report.stages {
        let flights: Vec<String> = s.flights.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
            s.stage,
            s.tasks,
            s.failed,
            flights.join(","),
            s.wall_s,
            s.mean_billed_s,
            s.max_billed_s,
            s.mean_fetch_s,
            s.mean_compute_s,
            s.mean_store_s,
            s.gb_seconds,
            s.scan_bytes
        ));
    }
    out
}

pub fn tasks_tsv(report: &RunReport) -> String {
    let mut out = String::from(
        "task_id\tstage\tattempts\tstatus\tmemory_mb\tvcpus\tstarted_at\tended_at\tfetch_s\tcompute_s\tstore_s\tbilled_s\tbytes_read\tbytes_written\tscan_bytes\n",
    );
    for t in &report.tasks {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\n",
            t.task_id,
            t.stage,
            t.attempts,
            if t.succeeded() { "ok" } else { "failed" },
            t.memory_mb,
            t.vcpus,
            t.started_at,
            t.ended_at,
            t.fetch_s,
            t.compute_s,
            t.store_s,
            t.billed_s,
            t.bytes_read,
            t.bytes_written,
            t.scan.bytes_scanned
        ));
    }
    out
}

/// GB-sec and SELECT charges on separate lines.
pub fn cost_summary(report: &RunReport) -> String {
    format!(
        "gb_seconds\t{:.6}\ngbsec_usd\t{:.6}\nselect_bytes_scanned\t{}\nselect_gb_scanned\t{:.4}\nselect_usd\t{:.4}\ntotal_usd\t{:.6}\n",
        report.gb_seconds,
        report.gbsec_usd,
        report.scan_bytes,
        report.scan_bytes as f64 / (1u64 << 30) as f64,
        report.select_usd,
        report.gbsec_usd + report.select_usd
    )
}

/// Writes the report file set into `dir`, creating it if needed.
pub fn report_stats(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Storage {
        key: dir.display().to_string(),
        source: e,
    })?;
    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    let files = [
        (CONCURRENCY_CSV, report.flight_log.to_csv()),
        (STAGES_TSV, stages_tsv(report)),
        (TASKS_TSV, tasks_tsv(report)),
        (COST_TXT, cost_summary(report)),
        (REPORT_JSON, json + "\n"),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::Storage {
            key: path.display().to_string(),
            source: e,
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Reads back a report written by [`report_stats`].
pub fn load_report(dir: &Path) -> Result<RunReport> {
    let path = dir.join(REPORT_JSON);
    let text = fs::read_to_string(&path).map_err(|e| Error::Storage {
        key: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
