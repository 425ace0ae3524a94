// SPDX-License-Identifier: Apache-2.0
#![allow(dead_code)]

use std::path::Path;

use faasflow::{ObjectStore, PipelineConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Dataset {
    pub fasta: String,
    pub fastq: String,
    pub genome: Vec<(String, Vec<u8>)>,
}

/// Random genome; reads come from a copy carrying a SNP every `snp_every`
/// bases, then get independent substitutions at `error_rate`.
pub fn synth(
    seq_lens: &[usize],
    reads: usize,
    read_len: usize,
    error_rate: f64,
    snp_every: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genome: Vec<(String, Vec<u8>)> = seq_lens
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (
                format!("chr{}", i + 1),
                (0..n).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect(),
            )
        })
        .collect();
    let sample: Vec<Vec<u8>> = genome
        .iter()
        .map(|(_, s)| {
            let mut s = s.clone();
            for p in (snp_every / 2..s.len()).step_by(snp_every.max(1)) {
                s[p] = other_base(s[p], &mut rng);
            }
            s
        })
        .collect();

    let mut fasta = String::new();
    for (name, seq) in &genome {
        fasta.push_str(&format!(">{name} synthetic\n"));
        for line in seq.chunks(60) {
            fasta.push_str(std::str::from_utf8(line).unwrap());
            fasta.push('\n');
        }
    }
    let mut fastq = String::new();
    for r in 0..reads {
        let src = &sample[rng.gen_range(0..sample.len())];
        let start = rng.gen_range(0..=src.len() - read_len);
        let mut read = src[start..start + read_len].to_vec();
        for b in read.iter_mut() {
            if rng.gen_bool(error_rate) {
                *b = other_base(*b, &mut rng);
            }
        }
        let qual: String = (0..read_len).map(|_| (b'!' + rng.gen_range(0..41)) as char).collect();
        fastq.push_str(&format!(
            "@read{r:06}\n{}\n+\n{qual}\n",
            String::from_utf8(read).unwrap()
        ));
    }
    Dataset { fasta, fastq, genome }
}

fn other_base(b: u8, rng: &mut ChaCha8Rng) -> u8 {
    loop {
        let c = b"ACGT"[rng.gen_range(0..4)];
        if c != b {
            return c;
        }
    }
}

/// Store at `root` holding the dataset, plus a config pointing at it.
pub fn stage(root: &Path, data: &Dataset) -> (ObjectStore, PipelineConfig) {
    let store = ObjectStore::open(root).unwrap();
    let config = PipelineConfig {
        store_root: root.to_path_buf(),
        ..PipelineConfig::default()
    };
    store
        .put(&config.bucket, &config.fasta_key, data.fasta.as_bytes())
        .unwrap();
    store
        .put(&config.bucket, &config.fastq_key, data.fastq.as_bytes())
        .unwrap();
    (store, config)
}
