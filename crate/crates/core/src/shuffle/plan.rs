// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::KEY_COLUMN;
use crate::select::{split_rows, ScanQuery, ScanReport, SelectEngine};
use crate::store::{ObjectRead, ObjectRef};

/// Closed range of linearised pileup keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub fasta_chunk_id: usize,
    pub lo: u64,
    pub hi: u64,
    /// Rows across all files with a key in `[lo, hi]`.
    pub rows: u64,
    /// `rows × max_row_bytes`.
    pub est_bytes: u64,
    /// A single key whose rows alone exceed the budget.
    pub oversized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReducePartition {
    pub partition_id: usize,
    pub fasta_chunk_id: usize,
    pub ranges: Vec<IndexRange>,
    pub mpileup_refs: Vec<ObjectRef>,
    pub budget_bytes: u64,
}

impl ReducePartition {
    pub fn est_bytes(&self) -> u64 {
        self.ranges.iter().map(|r| r.est_bytes).sum()
    }

    pub fn oversized(&self) -> bool {
        self.ranges.iter().any(|r| r.oversized)
    }
}

/// Byte lengths of the rows at indices `⌊k·rows/n⌋`, `k < n`, of every
/// file; returns the smallest and largest seen. Lengths include the LF.
pub fn sample_row_sizes(reader: &impl ObjectRead, refs: &[ObjectRef], n_samples: usize) -> Result<(u64, u64)> {
    let bodies = refs.iter().map(|r| reader.get(r)).collect::<Result<Vec<_>>>()?;
    let slices: Vec<&[u8]> = bodies.iter().map(Vec::as_slice).collect();
    sample_row_sizes_bytes(&slices, n_samples)
}

pub fn sample_row_sizes_bytes(bodies: &[&[u8]], n_samples: usize) -> Result<(u64, u64)> {
    if n_samples == 0 {
        return Err(Error::param("n_samples must be at least 1"));
    }
    let mut extremes: Option<(u64, u64)> = None;
    for body in bodies {
        let text = std::str::from_utf8(body).map_err(|_| Error::format("pileup object is not UTF-8"))?;
        let terminated = text.ends_with('\n');
        let rows: Vec<&str> = split_rows(text).collect();
        let count = rows.len();
        for k in 0..n_samples {
            let Some(row) = rows.get(k * count / n_samples) else {
                continue;
            };
            let is_last = k * count / n_samples == count - 1;
            let len = row.len() as u64 + u64::from(!is_last || terminated);
            extremes = Some(match extremes {
                Some((lo, hi)) => (lo.min(len), hi.max(len)),
                None => (len, len),
            });
        }
    }
    extremes.ok_or_else(|| Error::EmptyInput("every pileup object is empty".into()))
}

/// One projection-only query per file returning its key column.
pub fn extract_index_columns(engine: &impl SelectEngine, refs: &[ObjectRef]) -> Result<(Vec<Vec<u64>>, ScanReport)> {
    let mut scan = ScanReport::default();
    let mut lists = Vec::with_capacity(refs.len());
    for r in refs {
        let (rows, report) = engine.select(r, &ScanQuery::project([KEY_COLUMN]))?;
        scan.accumulate(&report);
        let keys = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row[0].parse::<u64>().map_err(|_| Error::RowFormat {
                    line: i + 1,
                    message: format!("index value {:?} in {} is not an integer", row[0], r.path()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lists.push(keys);
    }
    Ok((lists, scan))
}

/// Greedy walk over the sorted union of keys: a range grows while
/// `rows × max_row_bytes` stays within the budget. A key whose rows alone
/// exceed the budget becomes an oversized singleton.
pub fn build_ranges(
    lists: &[Vec<u64>],
    max_row_bytes: u64,
    budget_bytes: u64,
    fasta_chunk_id: usize,
) -> Result<Vec<IndexRange>> {
    if max_row_bytes == 0 || budget_bytes < max_row_bytes {
        return Err(Error::param(format!(
            "budget ({budget_bytes} B) must be at least the maximum row size ({max_row_bytes} B)"
        )));
    }
    let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
    for list in lists {
        for &k in list {
            *counts.entry(k).or_default() += 1;
        }
    }

    let mut ranges = Vec::new();
    let mut cur: Option<IndexRange> = None;
    for (key, n) in counts {
        let bytes = n * max_row_bytes;
        if let Some(r) = cur.as_mut() {
            if (r.rows + n) * max_row_bytes <= budget_bytes {
                r.hi = key;
                r.rows += n;
                r.est_bytes = r.rows * max_row_bytes;
                continue;
            }
            ranges.push(cur.take().expect("open range"));
        }
        let oversized = bytes > budget_bytes;
        if oversized {
            log::warn!("key {key} alone needs {bytes} B, over the {budget_bytes} B budget");
        }
        let range = IndexRange {
            fasta_chunk_id,
            lo: key,
            hi: key,
            rows: n,
            est_bytes: bytes,
            oversized,
        };
        if oversized {
            ranges.push(range);
        } else {
            cur = Some(range);
        }
    }
    ranges.extend(cur);
    Ok(ranges)
}

/// Packs consecutive ranges into partitions while their estimated bytes fit
/// the budget. Oversized ranges always get a partition of their own.
pub fn group_ranges(ranges: Vec<IndexRange>, budget_bytes: u64) -> Vec<Vec<IndexRange>> {
    let mut groups: Vec<Vec<IndexRange>> = Vec::new();
    let mut cur: Vec<IndexRange> = Vec::new();
    let mut cur_bytes = 0;
    for r in ranges {
        if r.oversized || (!cur.is_empty() && cur_bytes + r.est_bytes > budget_bytes) {
            if !cur.is_empty() {
                groups.push(std::mem::take(&mut cur));
            }
            cur_bytes = 0;
        }
        if r.oversized {
            groups.push(vec![r]);
            continue;
        }
        cur_bytes += r.est_bytes;
        cur.push(r);
    }
    if !cur.is_empty() {
        groups.push(cur);
    }
    groups
}

pub fn plan_ranges(
    lists: &[Vec<u64>],
    max_row_bytes: u64,
    budget_bytes: u64,
    fasta_chunk_id: usize,
    mpileup_refs: &[ObjectRef],
) -> Result<Vec<ReducePartition>> {
    let ranges = build_ranges(lists, max_row_bytes, budget_bytes, fasta_chunk_id)?;
    Ok(group_ranges(ranges, budget_bytes)
        .into_iter()
        .enumerate()
        .map(|(partition_id, ranges)| ReducePartition {
            partition_id,
            fasta_chunk_id,
            ranges,
            mpileup_refs: mpileup_refs.to_vec(),
            budget_bytes,
        })
        .collect())
}

/// `partition_id  fasta_chunk_id  lo  hi  rows  est_bytes  oversized`, one
/// line per range.
pub fn write_partition_table(parts: &[ReducePartition]) -> String {
    let mut out = String::new();
    for p in parts {
        for r in &p.ranges {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                p.partition_id,
                r.fasta_chunk_id,
                r.lo,
                r.hi,
                r.rows,
                r.est_bytes,
                u8::from(r.oversized)
            ));
        }
    }
    out
}

pub fn parse_partition_table(
    text: &str,
    mpileup_refs: &[ObjectRef],
    budget_bytes: u64,
) -> Result<Vec<ReducePartition>> {
    let mut parts: Vec<ReducePartition> = Vec::new();
    for (i, line) in split_rows(text).enumerate() {
        let bad = || Error::RowFormat {
            line: i + 1,
            message: format!("malformed partition table line {line:?}"),
        };
        let f: Vec<u64> = line
            .split('\t')
            .map(|x| x.parse::<u64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if f.len() != 7 {
            return Err(bad());
        }
        let range = IndexRange {
            fasta_chunk_id: f[1] as usize,
            lo: f[2],
            hi: f[3],
            rows: f[4],
            est_bytes: f[5],
            oversized: f[6] != 0,
        };
        let pid = f[0] as usize;
        match parts.last_mut() {
            Some(p) if p.partition_id == pid => p.ranges.push(range),
            _ => parts.push(ReducePartition {
                partition_id: pid,
                fasta_chunk_id: range.fasta_chunk_id,
                ranges: vec![range],
                mpileup_refs: mpileup_refs.to_vec(),
                budget_bytes,
            }),
        }
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampled_extremes() {
        let body = format!("{}\n{}\n{}\n", "a".repeat(9), "b".repeat(11), "c".repeat(13));
        assert_eq!(sample_row_sizes_bytes(&[body.as_bytes()], 3).unwrap(), (10, 14));
        let uniform = format!("{}\n", "x".repeat(19)).repeat(5);
        assert_eq!(sample_row_sizes_bytes(&[uniform.as_bytes()], 2).unwrap(), (20, 20));
        let a = format!("{}\n", "x".repeat(7));
        let b = format!("{}\n", "y".repeat(29));
        assert_eq!(
            sample_row_sizes_bytes(&[a.as_bytes(), b.as_bytes()], 1).unwrap(),
            (8, 30)
        );
    }

    #[test]
    fn sampling_errors() {
        assert!(matches!(
            sample_row_sizes_bytes(&[b"", b""], 3),
            Err(Error::EmptyInput(_))
        ));
        assert!(sample_row_sizes_bytes(&[b"a\n"], 0).is_err());
    }

    #[test]
    fn sample_indices_are_spread() {
        // rows 0..10 with length i+2 (incl. LF); n=4 samples rows 0,2,5,7.
        let body: String = (0..10).map(|i| format!("{}\n", "z".repeat(i + 1))).collect();
        assert_eq!(sample_row_sizes_bytes(&[body.as_bytes()], 4).unwrap(), (2, 9));
    }

    fn spans(ranges: &[IndexRange]) -> Vec<(u64, u64)> {
        ranges.iter().map(|r| (r.lo, r.hi)).collect()
    }

    #[test]
    fn greedy_ranges_over_overlapping_files() {
        let a: Vec<u64> = (1..=10).collect();
        let b: Vec<u64> = (5..=14).collect();
        let ranges = build_ranges(&[a, b], 100, 600, 0).unwrap();
        assert_eq!(spans(&ranges), vec![(1, 5), (6, 8), (9, 12), (13, 14)]);
        assert_eq!(ranges.iter().map(|r| r.rows).collect::<Vec<_>>(), vec![6, 6, 6, 2]);
    }

    #[test]
    fn single_range_when_everything_fits() {
        let ranges = build_ranges(&[vec![2, 9, 40]], 50, 150, 1).unwrap();
        assert_eq!(spans(&ranges), vec![(2, 40)]);
        assert_eq!(ranges[0].fasta_chunk_id, 1);
    }

    #[test]
    fn oversized_singleton_is_kept() {
        let lists: Vec<Vec<u64>> = (0..10).map(|_| vec![7]).collect();
        let ranges = build_ranges(&lists, 100, 500, 0).unwrap();
        assert_eq!(spans(&ranges), vec![(7, 7)]);
        assert!(ranges[0].oversized);
        assert_eq!(ranges[0].rows, 10);
    }

    #[test]
    fn budget_below_row_size_rejected() {
        assert!(build_ranges(&[vec![1]], 100, 99, 0).is_err());
    }

    fn range(lo: u64, est: u64, oversized: bool) -> IndexRange {
        IndexRange {
            fasta_chunk_id: 0,
            lo,
            hi: lo,
            rows: 1,
            est_bytes: est,
            oversized,
        }
    }

    #[test]
    fn small_ranges_grouped() {
        let groups = group_ranges(
            vec![
                range(1, 100, false),
                range(2, 200, false),
                range(3, 300, false),
                range(4, 900, true),
                range(5, 50, false),
            ],
            600,
        );
        let ids: Vec<Vec<u64>> = groups.iter().map(|g| g.iter().map(|r| r.lo).collect()).collect();
        assert_eq!(ids, vec![vec![1, 2, 3], vec![4], vec![5]]);
    }

    #[test]
    fn partition_table_round_trip() {
        let parts = plan_ranges(&[(1..=10).collect(), (5..=14).collect()], 100, 600, 2, &[]).unwrap();
        let text = write_partition_table(&parts);
        assert_eq!(text.lines().next().unwrap(), "0\t2\t1\t5\t6\t600\t0");
        assert_eq!(parse_partition_table(&text, &[], 600).unwrap(), parts);
    }
}
