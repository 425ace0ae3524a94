// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use faasflow::genome::{build_fasta_index, plan_fasta_partitions, plan_fastq_partitions, to_fai};
use faasflow::pipeline::{
    cost_summary, load_report, oracle_run, parallelism_sweep, report_stats, run_pipeline, sweep_csv, synthetic_sweep,
    RunReport, SyntheticWorkload,
};
use faasflow::{select::select, Error, ObjectStore, PipelineConfig, Result, ScanQuery};

/// Serverless-style map-reduce variant calling over a local object store.
///
/// Any `--section.key value` (or `--section.key=value`) argument overrides
/// the matching configuration key, e.g. `--partition.fasta_chunk_bases 50000`.
#[derive(Parser)]
#[command(name = "faasflow", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build `<key>.fai` next to a FASTA object and print it.
    IndexFasta {
        /// FASTA key; defaults to input.fasta.
        #[arg(long)]
        key: Option<String>,
    },
    /// Print the FASTA and FASTQ partitioning without running anything.
    Plan {
        #[arg(long)]
        fasta_chunk_bases: Option<u64>,
        #[arg(long)]
        fastq_chunk_bytes: Option<u64>,
        #[arg(long)]
        overlap: Option<u64>,
    },
    /// Run the whole pipeline.
    Run {
        /// Also write the report files here.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Single-pass reference computation.
    Oracle,
    /// vCPU sweep over the align stage.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        vcpus: Vec<u32>,
        /// Use a fetch-then-spin handler instead of the aligner.
        #[arg(long)]
        synthetic: bool,
    },
    /// Write report files for a finished run.
    Stats {
        /// Output directory; defaults to `stats/<run id>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Projection and BETWEEN filter over a TSV object.
    Select {
        #[arg(long)]
        key: String,
        /// Zero-based columns to keep.
        #[arg(long, value_delimiter = ',', required = true)]
        cols: Vec<usize>,
        /// COL,LO,HI inclusive integer range.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        between: Vec<i64>,
    },
}

type Overrides = Vec<(String, String)>;

/// Splits `--a.b value` / `--a.b=value` overrides from the clap arguments.
fn split_overrides(args: Vec<String>) -> std::result::Result<(Vec<String>, Overrides), String> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        match arg.strip_prefix("--") {
            Some(flag) if flag.split('=').next().is_some_and(|k| k.contains('.')) => {
                if let Some((k, v)) = flag.split_once('=') {
                    overrides.push((k.to_string(), v.to_string()));
                } else {
                    let v = it.next().ok_or_else(|| format!("missing value for --{flag}"))?;
                    overrides.push((flag.to_string(), v));
                }
            }
            _ => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

fn load_config(path: Option<&PathBuf>, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    config.apply_env();
    for (k, v) in overrides {
        config.set(k, v)?;
    }
    config.validate()?;
    Ok(config)
}

fn open_store(config: &PipelineConfig) -> Result<ObjectStore> {
    Ok(ObjectStore::open(&config.store_root)?.with_bandwidth(config.store_bandwidth))
}

fn report_key(config: &PipelineConfig) -> String {
    format!("runs/{}/report.json", config.run_id)
}

fn execute(command: Command, mut config: PipelineConfig) -> Result<()> {
    match command {
        Command::IndexFasta { key } => {
            let store = open_store(&config)?;
            let fasta = store.head(&config.bucket, key.as_deref().unwrap_or(&config.fasta_key))?;
            let (entries, fai) = build_fasta_index(&store, &fasta)?;
            print!("{}", to_fai(&entries));
            eprintln!("wrote {}", fai.path());
        }
        Command::Plan {
            fasta_chunk_bases,
            fastq_chunk_bytes,
            overlap,
        } => {
            let store = open_store(&config)?;
            let fasta = store.head(&config.bucket, &config.fasta_key)?;
            let fastq = store.head(&config.bucket, &config.fastq_key)?;
            let index = faasflow::genome::index_fasta_bytes(&store.get(&fasta)?)?;
            let chunks = plan_fastq_partitions(&store, &fastq, fastq_chunk_bytes.unwrap_or(config.fastq_chunk_bytes))?;
            let max_read = chunks.iter().map(|c| c.max_read_len).max().unwrap_or(0);
            let overlap = overlap.or(config.overlap_bases).unwrap_or(max_read.saturating_sub(1));
            let parts = plan_fasta_partitions(&index, fasta_chunk_bases.unwrap_or(config.fasta_chunk_bases), overlap)?;
            println!("kind\tchunk\tlocation\tsize");
            for p in &parts {
                let spans: Vec<String> = p
                    .spans
                    .iter()
                    .map(|s| format!("{}:{}-{}", s.name, s.start_base, s.end_base))
                    .collect();
                println!("fasta\t{}\t{}\t{}", p.chunk_id, spans.join(","), p.total_bases());
            }
            for c in &chunks {
                println!("fastq\t{}\t{}-{}\t{}", c.chunk_id, c.byte_lo, c.byte_hi, c.record_count);
            }
            eprintln!("{} align tasks, overlap {overlap}", parts.len() * chunks.len());
        }
        Command::Run { stats } => {
            let report = run_pipeline(&config)?;
            let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
            open_store(&config)?.put(&config.bucket, &report_key(&config), &json)?;
            if let Some(dir) = stats {
                report_stats(&report, &dir)?;
            }
            print_summary(&report);
        }
        Command::Oracle => {
            let out = oracle_run(&config)?;
            println!("{}", out.path());
        }
        Command::Sweep { vcpus, synthetic } => {
            let rows = if synthetic {
                config.store_bandwidth.get_or_insert(64.0 * 1024.0 * 1024.0);
                let workload = SyntheticWorkload {
                    base_functions: 4 * vcpus.iter().fold(1, |acc, &v| lcm(acc, v.max(1) as usize)),
                    bytes_per_base_function: 4 << 20,
                    work_per_function: 200_000_000,
                };
                synthetic_sweep(
                    Arc::new(open_store(&config)?),
                    &config.bucket,
                    workload,
                    &vcpus,
                    config.usd_per_gbsec,
                )?
            } else {
                parallelism_sweep(&config, &vcpus)?
            };
            print!("{}", sweep_csv(&rows));
        }
        Command::Stats { out } => {
            let store = open_store(&config)?;
            let obj = store.head(&config.bucket, &report_key(&config))?;
            let report: RunReport =
                serde_json::from_slice(&store.get(&obj)?).map_err(|e| Error::Format(e.to_string()))?;
            let dir = out.unwrap_or_else(|| PathBuf::from("stats").join(&config.run_id));
            for path in report_stats(&report, &dir)? {
                println!("{}", path.display());
            }
            debug_assert_eq!(load_report(&dir)?, report);
        }
        Command::Select { key, cols, between } => {
            let store = open_store(&config)?;
            let obj = store.head(&config.bucket, &key)?;
            let mut query = ScanQuery::project(cols);
            match between[..] {
                [] => {}
                [c, lo, hi] => {
                    let col = usize::try_from(c).map_err(|_| Error::Param(format!("bad column {c}")))?;
                    query = query.between(col, lo, hi);
                }
                _ => return Err(Error::Param("--between takes COL,LO,HI".into())),
            }
            let (rows, scan) = select(&store, &obj, &query)?;
            for row in rows {
                println!("{}", row.join("\t"));
            }
            eprintln!("{} rows, {} bytes scanned", scan.rows_returned, scan.bytes_scanned);
        }
    }
    Ok(())
}

fn lcm(a: usize, b: usize) -> usize {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    a / x * b
}

fn print_summary(report: &RunReport) {
    println!("output\t{}", report.output.path());
    for s in &report.stages {
        println!("stage\t{}\t{} tasks\t{:.3}s", s.stage, s.tasks, s.wall_s);
    }
    print!("{}", cost_summary(report));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = match split_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    let result = load_config(cli.config.as_ref(), &overrides).and_then(|config| execute(cli.command, config));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
