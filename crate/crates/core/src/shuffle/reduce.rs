// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::ChromOrder;
use crate::map::{MpileupRow, KEY_COLUMN};
use crate::select::{split_rows, ScanQuery, ScanReport, SelectEngine};
use crate::shuffle::ReducePartition;
use crate::store::{ObjectRead, ObjectRef};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallerParams {
    /// Minimum alternate allele frequency.
    pub theta: f64,
    pub min_depth: u32,
}

impl Default for CallerParams {
    fn default() -> Self {
        Self {
            theta: 0.2,
            min_depth: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCall {
    pub chrom: String,
    pub pos: u64,
    pub ref_base: u8,
    pub alt_base: u8,
    pub depth: u32,
    pub alt_count: u32,
    pub alt_freq: f64,
}

impl VariantCall {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\n",
            self.chrom,
            self.pos,
            self.ref_base as char,
            self.alt_base as char,
            self.depth,
            self.alt_count,
            self.alt_freq
        )
    }
}

/// Frequency-threshold caller: the alternate allele is the most frequent
/// non-reference, non-N base (ties to the smaller byte); a call is made when
/// `depth >= min_depth` and `alt_count / depth >= theta`.
pub fn call_variant(chrom: &str, pos: u64, ref_base: u8, bases: &[u8], params: &CallerParams) -> Option<VariantCall> {
    let depth = bases.len() as u32;
    if depth == 0 || depth < params.min_depth {
        return None;
    }
    let ref_base = ref_base.to_ascii_uppercase();
    let mut counts = [0u32; 256];
    for b in bases {
        counts[b.to_ascii_uppercase() as usize] += 1;
    }
    let (alt_base, alt_count) = (0u8..=255)
        .filter(|&b| b != ref_base && b != b'N')
        .map(|b| (b, counts[b as usize]))
        .fold((0u8, 0u32), |best, cur| if cur.1 > best.1 { cur } else { best });
    if alt_count == 0 {
        return None;
    }
    let alt_freq = alt_count as f64 / depth as f64;
    (alt_freq >= params.theta).then(|| VariantCall {
        chrom: chrom.to_string(),
        pos,
        ref_base,
        alt_base,
        depth,
        alt_count,
        alt_freq,
    })
}

pub fn write_calls(calls: &[VariantCall]) -> String {
    calls.iter().map(VariantCall::to_line).collect()
}

pub fn parse_calls(data: &[u8]) -> Result<Vec<VariantCall>> {
    let text = std::str::from_utf8(data).map_err(|_| Error::format("call object is not UTF-8"))?;
    split_rows(text)
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::RowFormat {
                line: i + 1,
                message: format!("malformed call {line:?}"),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 || f[2].len() != 1 || f[3].len() != 1 {
                return Err(bad());
            }
            Ok(VariantCall {
                chrom: f[0].to_string(),
                pos: f[1].parse().map_err(|_| bad())?,
                ref_base: f[2].as_bytes()[0],
                alt_base: f[3].as_bytes()[0],
                depth: f[4].parse().map_err(|_| bad())?,
                alt_count: f[5].parse().map_err(|_| bad())?,
                alt_freq: f[6].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReduceOutput {
    pub calls: Vec<VariantCall>,
    /// Pileup rows fetched across all ranges and files.
    pub rows_fetched: u64,
    /// Bytes of the fetched rows, terminators included.
    pub fetched_bytes: u64,
    pub scan: ScanReport,
}

/// Fetches every range of the partition from every pileup object, merges rows
/// sharing a key (depth summed, bases concatenated in object-key order) and
/// calls variants.
pub fn reduce_partition(
    engine: &impl SelectEngine,
    partition: &ReducePartition,
    params: &CallerParams,
) -> Result<ReduceOutput> {
    for w in partition.ranges.windows(2) {
        if w[0].hi >= w[1].lo {
            return Err(Error::Planner(format!(
                "partition {} has overlapping or unsorted ranges [{}, {}] and [{}, {}]",
                partition.partition_id, w[0].lo, w[0].hi, w[1].lo, w[1].hi
            )));
        }
    }
    if let Some(r) = partition.ranges.iter().find(|r| r.lo > r.hi) {
        return Err(Error::Planner(format!("empty range [{}, {}]", r.lo, r.hi)));
    }

    let mut refs: Vec<&ObjectRef> = partition.mpileup_refs.iter().collect();
    refs.sort_by(|a, b| a.key.cmp(&b.key));

    let mut out = ReduceOutput::default();
    let mut merged: BTreeMap<u64, MpileupRow> = BTreeMap::new();
    for range in &partition.ranges {
        for obj in &refs {
            let query = ScanQuery::project([0, 1, 2, 3, 4, 5]).between(KEY_COLUMN, range.lo as i64, range.hi as i64);
            let (rows, report) = engine.select(obj, &query)?;
            out.scan.accumulate(&report);
            for (i, fields) in rows.iter().enumerate() {
                out.rows_fetched += 1;
                out.fetched_bytes += fields.iter().map(|f| f.len() as u64 + 1).sum::<u64>();
                let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
                let row =
                    MpileupRow::from_fields(&refs).map_err(|message| Error::RowFormat { line: i + 1, message })?;
                match merged.get_mut(&row.key) {
                    Some(acc) => {
                        if acc.ref_base != row.ref_base || acc.chrom != row.chrom {
                            return Err(Error::Consistency(format!(
                                "pileups disagree on {}:{}",
                                row.chrom, row.pos
                            )));
                        }
                        acc.depth += row.depth;
                        acc.bases.push_str(&row.bases);
                    }
                    None => {
                        merged.insert(row.key, row);
                    }
                }
            }
        }
    }
    out.calls = merged
        .values()
        .filter_map(|r| call_variant(&r.chrom, r.pos, r.ref_base, r.bases.as_bytes(), params))
        .collect();
    Ok(out)
}

/// Byte concatenation of partial outputs given as `(partition label, object)`
/// in output order. A missing object fails the run naming its partition.
pub fn concat_outputs(reader: &impl ObjectRead, parts: &[(String, ObjectRef)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (label, obj) in parts {
        match reader.get(obj) {
            Ok(body) => out.extend_from_slice(&body),
            Err(Error::NotFound { .. }) => {
                return Err(Error::Incomplete {
                    partition_id: label.clone(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Checks that calls are strictly increasing in (FASTA order, position).
pub fn validate_sorted(data: &[u8], order: &ChromOrder) -> Result<()> {
    let calls = parse_calls(data)?;
    let mut prev: Option<(u32, u64)> = None;
    for (i, c) in calls.iter().enumerate() {
        let ord = order
            .ordinal(&c.chrom)
            .ok_or_else(|| Error::Consistency(format!("call {} names unknown sequence {}", i + 1, c.chrom)))?;
        let key = (ord, c.pos);
        if prev.is_some_and(|p| p >= key) {
            return Err(Error::Consistency(format!(
                "output not sorted at call {} ({}:{})",
                i + 1,
                c.chrom,
                c.pos
            )));
        }
        prev = Some(key);
    }
    Ok(())
}
