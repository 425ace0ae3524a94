// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ObjectRead, ObjectRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FastqChunk {
    pub chunk_id: usize,
    pub byte_lo: u64,
    pub byte_hi: u64,
    pub record_count: u64,
    pub max_read_len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastqRecord {
    /// Header text up to the first whitespace, without the '@'.
    pub id: String,
    pub seq: Vec<u8>,
    pub qual: Vec<u8>,
}

/// Splits a FASTQ object into chunks of roughly `target_bytes`, each starting
/// on a record boundary.
pub fn plan_fastq_partitions(store: &impl ObjectRead, fastq: &ObjectRef, target_bytes: u64) -> Result<Vec<FastqChunk>> {
    let data = store.get(fastq)?;
    plan_fastq_bytes(&data, target_bytes)
}

pub fn plan_fastq_bytes(data: &[u8], target_bytes: u64) -> Result<Vec<FastqChunk>> {
    if target_bytes == 0 {
        return Err(Error::param("fastq chunk size must be positive"));
    }
    let len = data.len() as u64;
    let mut bounds = vec![0u64];
    let mut k = 1u64;
    while k * target_bytes < len {
        let b = find_sync(data, (k * target_bytes) as usize).map_or(len, |b| b as u64);
        if b > *bounds.last().unwrap() {
            bounds.push(b);
        }
        if b >= len {
            break;
        }
        // Skip provisional offsets already passed by a long resync.
        k = k.max(b / target_bytes) + 1;
    }
    if *bounds.last().unwrap() < len {
        bounds.push(len);
    }
    if len == 0 {
        return Ok(Vec::new());
    }

    // Sequential parse: validates every record and checks that each
    // synchronised boundary is a true record start.
    let records = record_layout(data)?;
    let mut chunks = Vec::with_capacity(bounds.len() - 1);
    let mut r = 0usize;
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if r < records.len() && records[r].0 != lo {
            return Err(Error::format(format!(
                "synchronisation point at byte {lo} is not a record start"
            )));
        }
        let first = r;
        let mut max_len = 0;
        while r < records.len() && records[r].0 < hi {
            max_len = max_len.max(records[r].1);
            r += 1;
        }
        if r < records.len() && records[r].0 != hi {
            return Err(Error::format(format!(
                "synchronisation point at byte {hi} is not a record start"
            )));
        }
        if r > first {
            chunks.push(FastqChunk {
                chunk_id: chunks.len(),
                byte_lo: lo,
                byte_hi: hi,
                record_count: (r - first) as u64,
                max_read_len: max_len,
            });
        }
    }
    Ok(chunks)
}

fn line_at(data: &[u8], start: usize) -> Option<(&[u8], usize)> {
    if start >= data.len() {
        return None;
    }
    let end = data[start..]
        .iter()
        .position(|&b| b == b'\n')
        .map_or(data.len(), |i| start + i);
    let next = (end + 1).min(data.len());
    let mut line = &data[start..end];
    if line.last() == Some(&b'\r') {
        line = &line[..line.len() - 1];
    }
    Some((line, next.max(end)))
}

/// First line start at or after `from` that begins a record: '@' header, a
/// '+' separator two lines below, and equal sequence and quality lengths.
/// Quality strings may begin with '@', so the header alone is not enough.
fn find_sync(data: &[u8], from: usize) -> Option<usize> {
    let mut start = if from == 0 || data.get(from - 1) == Some(&b'\n') {
        from
    } else {
        from + data[from..].iter().position(|&b| b == b'\n')? + 1
    };
    while start < data.len() {
        let (l0, n1) = line_at(data, start)?;
        if l0.first() == Some(&b'@') {
            let witness = (|| {
                let (l1, n2) = line_at(data, n1)?;
                let (l2, n3) = line_at(data, n2)?;
                let (l3, _) = line_at(data, n3)?;
                Some(l2.first() == Some(&b'+') && l1.len() == l3.len())
            })();
            if witness == Some(true) {
                return Some(start);
            }
        }
        start = n1;
    }
    None
}

/// (record start offset, read length) for every record.
fn record_layout(data: &[u8]) -> Result<Vec<(u64, u64)>> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < data.len() {
        let ordinal = out.len() + 1;
        let bad = |what: &str| Error::format(format!("malformed FASTQ record {ordinal}: {what}"));
        let (header, n1) = line_at(data, pos).ok_or_else(|| bad("missing header"))?;
        if header.first() != Some(&b'@') {
            return Err(bad("header does not start with '@'"));
        }
        let (seq, n2) = line_at(data, n1).ok_or_else(|| bad("missing sequence line"))?;
        let (sep, n3) = line_at(data, n2).ok_or_else(|| bad("missing '+' line"))?;
        if sep.first() != Some(&b'+') {
            return Err(bad("separator does not start with '+'"));
        }
        let (qual, n4) = line_at(data, n3).ok_or_else(|| bad("missing quality line"))?;
        if qual.len() != seq.len() {
            return Err(bad("quality length differs from sequence length"));
        }
        out.push((pos as u64, seq.len() as u64));
        pos = n4;
    }
    Ok(out)
}

pub fn parse_fastq(data: &[u8]) -> Result<Vec<FastqRecord>> {
    let layout = record_layout(data)?;
    layout
        .iter()
        .map(|&(start, _)| {
            let (header, n1) = line_at(data, start as usize).expect("validated");
            let (seq, n2) = line_at(data, n1).expect("validated");
            let (_, n3) = line_at(data, n2).expect("validated");
            let (qual, _) = line_at(data, n3).expect("validated");
            let id = std::str::from_utf8(&header[1..])
                .map_err(|_| Error::format(format!("non UTF-8 read name at byte {start}")))?
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_string();
            Ok(FastqRecord {
                id,
                seq: seq.to_vec(),
                qual: qual.to_vec(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, seq: &str, qual: &str) -> String {
        format!("@{id}\n{seq}\n+\n{qual}\n")
    }

    #[test]
    fn uniform_records_split_on_record_five() {
        // "@r0\nACGTAC\n+\nIIIIII\n" is 20 bytes.
        let data: String = (0..8).map(|i| record(&format!("r{i}"), "ACGTAC", "IIIIII")).collect();
        assert_eq!(data.len(), 160);
        let chunks = plan_fastq_bytes(data.as_bytes(), 80).unwrap();
        assert_eq!(chunks.len(), 2);
        assert_eq!(
            (chunks[0].byte_lo, chunks[0].byte_hi, chunks[0].record_count),
            (0, 80, 4)
        );
        assert_eq!(
            (chunks[1].byte_lo, chunks[1].byte_hi, chunks[1].record_count),
            (80, 160, 4)
        );
    }

    #[test]
    fn one_chunk_when_target_exceeds_file() {
        let data: String = (0..3).map(|i| record(&format!("r{i}"), "ACGT", "IIII")).collect();
        let chunks = plan_fastq_bytes(data.as_bytes(), 10_000).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].record_count, 3);
        assert_eq!(chunks[0].byte_hi, data.len() as u64);
    }

    #[test]
    fn empty_file_has_no_chunks() {
        assert!(plan_fastq_bytes(b"", 10).unwrap().is_empty());
    }

    #[test]
    fn quality_starting_with_at_sign() {
        let data = format!(
            "{}{}{}",
            record("a", "ACGT", "@@II"),
            record("b", "ACGT", "@III"),
            record("c", "ACGT", "IIII")
        );
        // Offsets land just before each '@'-led quality line.
        let sequential = record_layout(data.as_bytes()).unwrap();
        for target in 1..data.len() as u64 {
            let chunks = plan_fastq_bytes(data.as_bytes(), target).unwrap();
            for c in &chunks {
                assert!(sequential.iter().any(|(s, _)| *s == c.byte_lo), "target {target}");
            }
            assert_eq!(chunks.iter().map(|c| c.record_count).sum::<u64>(), 3);
        }
    }

    #[test]
    fn malformed_record_ordinal() {
        let data = format!("{}@b\nACGT\n-\nIIII\n", record("a", "ACGT", "IIII"));
        let err = plan_fastq_bytes(data.as_bytes(), 1000).unwrap_err();
        assert!(err.to_string().contains("record 2"), "{err}");
        let data = format!("{}@b\nACGT\n+\nIII\n", record("a", "ACGT", "IIII"));
        assert!(parse_fastq(data.as_bytes()).is_err());
    }

    #[test]
    fn parse_records() {
        let data = format!("{}{}", record("r1 extra", "ACGT", "IIII"), "@r2\nGG\n+\nII");
        let recs = parse_fastq(data.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].id, "r1");
        assert_eq!(recs[1].seq, b"GG");
    }

    proptest! {
        #[test]
        fn chunks_tile_the_file(reads in proptest::collection::vec(("[ACGT]{1,30}", "[!-~]{0}"), 1..40),
                                quals_at in proptest::collection::vec(any::<bool>(), 40),
                                target in 1u64..400) {
            let data: String = reads.iter().enumerate().map(|(i, (seq, _))| {
                let q: String = seq.chars().enumerate()
                    .map(|(j, _)| if j == 0 && quals_at[i] { '@' } else { 'I' }).collect();
                record(&format!("r{i}"), seq, &q)
            }).collect();
            let chunks = plan_fastq_bytes(data.as_bytes(), target).unwrap();
            prop_assert_eq!(chunks.iter().map(|c| c.record_count).sum::<u64>(), reads.len() as u64);
            prop_assert_eq!(chunks[0].byte_lo, 0);
            prop_assert_eq!(chunks.last().unwrap().byte_hi, data.len() as u64);
            for w in chunks.windows(2) {
                prop_assert_eq!(w[0].byte_hi, w[1].byte_lo);
            }
            let mut total = 0;
            for c in &chunks {
                let part = parse_fastq(&data.as_bytes()[c.byte_lo as usize..c.byte_hi as usize]).unwrap();
                prop_assert_eq!(part.len() as u64, c.record_count);
                total += part.len();
            }
            prop_assert_eq!(total, reads.len());
        }
    }
}
