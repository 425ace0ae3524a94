// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::genome::parse_fastq;
use crate::pipeline::PipelineConfig;
use crate::shuffle::{call_variant, write_calls, CallerParams};
use crate::store::{ObjectRef, ObjectStore};

/// Single pass over the whole inputs: no partitioning, executor or SELECT.
/// Writes the calls to `runs/<run id>/oracle/calls.tsv`.
pub fn oracle_run(config: &PipelineConfig) -> Result<ObjectRef> {
    config.validate()?;
    let store = ObjectStore::open(&config.store_root)?;
    let bucket = config.bucket.as_str();
    let fasta = store.get(&store.head(bucket, &config.fasta_key)?)?;
    let fastq = store.get(&store.head(bucket, &config.fastq_key)?)?;
    let calls = oracle_calls(&fasta, &fastq, config.max_mismatches, &config.caller)?;
    store.put(
        bucket,
        &format!("runs/{}/oracle/calls.tsv", config.run_id),
        calls.as_bytes(),
    )
}

/// The oracle computation on in-memory inputs.
pub fn oracle_calls(fasta: &[u8], fastq: &[u8], m: u32, caller: &CallerParams) -> Result<String> {
    let genome = read_sequences(fasta)?;
    let reads = parse_fastq(fastq)?;

    // read id -> (mismatches, sequence ordinal, 0-based offset, bases)
    let mut best: BTreeMap<&str, (u32, usize, usize, &[u8])> = BTreeMap::new();
    for read in &reads {
        let seq = read.seq.to_ascii_uppercase();
        let mut hit: Option<(u32, usize, usize)> = None;
        for (ordinal, (_, reference)) in genome.iter().enumerate() {
            if seq.is_empty() || reference.len() < seq.len() {
                continue;
            }
            for off in 0..=reference.len() - seq.len() {
                let mut mm = 0u32;
                for (a, b) in seq.iter().zip(&reference[off..]) {
                    if a != b || *a == b'N' {
                        mm += 1;
                        if mm > m {
                            break;
                        }
                    }
                }
                if mm <= m && hit.is_none_or(|h| mm < h.0) {
                    hit = Some((mm, ordinal, off));
                }
            }
        }
        if let Some((mm, ordinal, off)) = hit {
            let cand = (mm, ordinal, off, read.seq.as_slice());
            best.entry(read.id.as_str())
                .and_modify(|cur| {
                    if (mm, ordinal, off) < (cur.0, cur.1, cur.2) {
                        *cur = cand;
                    }
                })
                .or_insert(cand);
        }
    }

    let mut pileup: BTreeMap<(usize, usize), Vec<u8>> = BTreeMap::new();
    for &(_, ordinal, off, bases) in best.values() {
        for (i, &b) in bases.iter().enumerate() {
            pileup.entry((ordinal, off + i)).or_default().push(b);
        }
    }
    let calls: Vec<_> = pileup
        .into_iter()
        .filter_map(|((ordinal, off), bases)| {
            let (name, reference) = &genome[ordinal];
            call_variant(name, off as u64 + 1, reference[off], &bases, caller)
        })
        .collect();
    Ok(write_calls(&calls))
}

/// Names and uppercased bases of every sequence, in file order.
fn read_sequences(data: &[u8]) -> Result<Vec<(String, Vec<u8>)>> {
    let mut out: Vec<(String, Vec<u8>)> = Vec::new();
    for line in data.split(|&b| b == b'\n') {
        let line = line.strip_suffix(b"\r").unwrap_or(line);
        if let Some(header) = line.strip_prefix(b">") {
            let name = String::from_utf8_lossy(header)
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_string();
            out.push((name, Vec::new()));
        } else if !line.is_empty() {
            let (_, seq) = out
                .last_mut()
                .ok_or_else(|| Error::Format("sequence data before the first header".into()))?;
            seq.extend(line.to_ascii_uppercase());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fastq(reads: &[&str]) -> String {
        reads
            .iter()
            .enumerate()
            .map(|(i, s)| format!("@r{i}\n{s}\n+\n{}\n", "I".repeat(s.len())))
            .collect()
    }

    #[test]
    fn matching_reads_make_no_calls() {
        let out = oracle_calls(
            b">chr1\nACGTACGT\n",
            fastq(&["GTAC"; 3]).as_bytes(),
            2,
            &CallerParams::default(),
        )
        .unwrap();
        assert_eq!(out, "");
    }

    #[test]
    fn one_mutated_read_makes_one_call() {
        let fq = fastq(&["ACGTAAGTCC", "ACGTACGTCC"]);
        let out = oracle_calls(b">chr1\nACGTACGTCCTTGA\n", fq.as_bytes(), 1, &CallerParams::default()).unwrap();
        assert_eq!(out, "chr1\t6\tC\tA\t2\t1\t0.500000\n");
    }
}
