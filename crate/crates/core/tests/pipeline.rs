// SPDX-License-Identifier: Apache-2.0

mod common;

use faasflow::executor::Stage;
use faasflow::pipeline::{load_report, oracle_calls, report_stats, run_pipeline};
use faasflow::{oracle_run, Error, ObjectStore};

#[test]
fn task_counts_follow_the_partitioning() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[3000, 2000], 300, 40, 0.01, 200, 1);
    let (store, mut config) = common::stage(dir.path(), &data);
    config.fasta_chunk_bases = 2500;
    config.fastq_chunk_bytes = data.fastq.len() as u64 / 3 + 1;
    let report = run_pipeline(&config).unwrap();
    assert_eq!((report.fasta_chunks, report.fastq_chunks), (2, 3));
    assert_eq!(report.task_count(Stage::FastaIndex), 1);
    assert_eq!(report.task_count(Stage::Align), 6);
    assert_eq!(report.task_count(Stage::Correct), 3);
    assert!(report.task_count(Stage::Mpileup) <= 6);
    assert_eq!(report.task_count(Stage::ShufflePlan), 2);
    assert_eq!(report.task_count(Stage::Reduce), report.reduce_partitions);
    assert_eq!(report.task_count(Stage::Concat), 1);

    let gbsec: f64 = report.tasks.iter().map(|t| t.gb_seconds()).sum();
    assert!((report.gb_seconds - gbsec).abs() <= 1e-12 * gbsec.max(1.0));
    let scan: u64 = report.tasks.iter().map(|t| t.scan.bytes_scanned).sum();
    assert_eq!(report.scan_bytes, scan);
    assert!((report.select_usd - scan as f64 / (1u64 << 30) as f64 * 0.002).abs() < 1e-15);

    let out = store.get(&report.output).unwrap();
    let expected = oracle_calls(data.fasta.as_bytes(), data.fastq.as_bytes(), 2, &config.caller).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), expected);
}

#[test]
fn single_partition_matches_oracle_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[4000], 200, 50, 0.01, 150, 2);
    let (store, config) = common::stage(dir.path(), &data);
    let report = run_pipeline(&config).unwrap();
    assert_eq!((report.fasta_chunks, report.fastq_chunks), (1, 1));
    let oracle = oracle_run(&config).unwrap();
    let got = store.get(&report.output).unwrap();
    assert!(!got.is_empty());
    assert_eq!(got, store.get(&oracle).unwrap());
}

#[test]
fn empty_fastq_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut data = common::synth(&[500], 0, 50, 0.0, 100, 3);
    data.fastq.clear();
    let (store, config) = common::stage(dir.path(), &data);
    let report = run_pipeline(&config).unwrap();
    assert_eq!(report.task_count(Stage::Align), 0);
    assert_eq!(report.task_count(Stage::Correct), 0);
    assert!(store.get(&report.output).unwrap().is_empty());
    assert_eq!((report.scan_bytes, report.select_usd), (0, 0.0));
}

#[test]
fn missing_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[500], 10, 50, 0.0, 100, 4);
    let (_, mut config) = common::stage(dir.path(), &data);
    config.fastq_key = "absent.fq".into();
    assert!(matches!(run_pipeline(&config), Err(Error::NotFound { .. })));
}

fn failed_stage(config: &faasflow::PipelineConfig) -> String {
    match run_pipeline(config) {
        Err(Error::StageFailed { stage, .. }) => stage,
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("run succeeded"),
    }
}

#[test]
fn failing_stage_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[500], 10, 50, 0.0, 100, 5);
    let (store, config) = common::stage(dir.path(), &data);

    let mut bad = data.fastq.clone();
    bad.push_str("@x\nACGT\n+\nII\n");
    store.put(&config.bucket, &config.fastq_key, bad.as_bytes()).unwrap();
    assert_eq!(failed_stage(&config), "plan");

    store
        .put(&config.bucket, &config.fastq_key, data.fastq.as_bytes())
        .unwrap();
    store
        .put(&config.bucket, &config.fasta_key, b">a\nACGTAC\nACGTACGT\nAC\n")
        .unwrap();
    assert_eq!(failed_stage(&config), "fasta_index");
}

#[test]
fn intermediates_can_be_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[2000], 100, 40, 0.01, 100, 6);
    let (store, mut config) = common::stage(dir.path(), &data);
    config.keep_intermediates = false;
    let report = run_pipeline(&config).unwrap();
    let left = store.list(&config.bucket, "runs/").unwrap();
    assert_eq!(left, vec![report.output.key.clone()]);
}

#[test]
fn report_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[2000], 100, 40, 0.01, 100, 7);
    let (_, config) = common::stage(&dir.path().join("store"), &data);
    let report = run_pipeline(&config).unwrap();
    let out = dir.path().join("stats");
    let files = report_stats(&report, &out).unwrap();
    assert_eq!(files.len(), 5);
    assert_eq!(load_report(&out).unwrap(), report);
    let cost = std::fs::read_to_string(out.join("cost.txt")).unwrap();
    assert!(cost.contains("gbsec_usd\t") && cost.contains("select_usd\t"));
    let csv = std::fs::read_to_string(out.join("concurrency.csv")).unwrap();
    assert!(csv.starts_with("time,in_flight\n"));
}

#[test]
fn store_root_is_shared_between_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::synth(&[2000], 50, 40, 0.0, 100, 8);
    let (_, mut config) = common::stage(dir.path(), &data);
    config.run_id = "a".into();
    let a = run_pipeline(&config).unwrap();
    config.run_id = "b".into();
    let b = run_pipeline(&config).unwrap();
    let store = ObjectStore::open(dir.path()).unwrap();
    assert_eq!(store.get(&a.output).unwrap(), store.get(&b.output).unwrap());
}
