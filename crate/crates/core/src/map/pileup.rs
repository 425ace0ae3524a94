// SPDX-License-Identifier: Apache-2.0

//! Pileup rows.
//!
//! Object layout, one row per covered position, sorted by key:
//! `key  chrom  pos  ref  depth  bases`, where `key = ordinal * 2^32 + pos`
//! linearises (sequence, position) so that a single integer range predicate
//! selects a genome interval even when a chunk spans several sequences.
//! `bases` lists the literal read bases, not the samtools `.`/`,` encoding.

use crate::error::{Error, Result};
use crate::genome::{FastaPartition, SpanText};
use crate::map::AlignmentRecord;

pub const KEY_COLUMN: usize = 0;

pub fn linear_key(ordinal: u32, pos: u64) -> u64 {
    ((ordinal as u64) << 32) + pos
}

pub fn split_key(key: u64) -> (u32, u64) {
    ((key >> 32) as u32, key & 0xFFFF_FFFF)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MpileupRow {
    pub key: u64,
    pub chrom: String,
    /// 1-based.
    pub pos: u64,
    pub ref_base: u8,
    pub depth: u32,
    pub bases: String,
}

impl MpileupRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            self.key, self.chrom, self.pos, self.ref_base as char, self.depth, self.bases
        )
    }

    pub fn from_fields(f: &[&str]) -> std::result::Result<Self, String> {
        if f.len() != 6 {
            return Err(format!("expected 6 pileup fields, got {}", f.len()));
        }
        let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| format!("bad {what} {s:?}"));
        let row = MpileupRow {
            key: num(f[0], "key")?,
            chrom: f[1].to_string(),
            pos: num(f[2], "position")?,
            ref_base: *f[3].as_bytes().first().ok_or("empty reference base")?,
            depth: num(f[4], "depth")? as u32,
            bases: f[5].to_string(),
        };
        if row.depth as usize != row.bases.len() {
            return Err(format!("depth {} does not match {} bases", row.depth, row.bases.len()));
        }
        Ok(row)
    }
}

/// Partition text restricted to the bases the partition owns.
pub fn owned_texts(partition: &FastaPartition, texts: &[SpanText]) -> Vec<SpanText> {
    let mut out = texts.to_vec();
    if let Some(first) = out.first_mut() {
        let skip = partition.overlap_bases as usize;
        first.bases.drain(..skip);
        first.start_base += skip as u64;
    }
    out.retain(|t| !t.bases.is_empty());
    out
}

/// Pileup of `alignments` over the positions in `owned`. Contributions are
/// appended in read-id order. Positions outside `owned` are ignored, but an
/// alignment that touches none of them is a routing error.
pub fn make_mpileup(alignments: &[AlignmentRecord], owned: &[SpanText]) -> Result<Vec<MpileupRow>> {
    let mut order: Vec<&AlignmentRecord> = alignments.iter().collect();
    order.sort_by(|a, b| a.read_id.cmp(&b.read_id).then(a.locus().cmp(&b.locus())));

    let mut columns: Vec<Vec<Vec<u8>>> = owned.iter().map(|t| vec![Vec::new(); t.bases.len()]).collect();
    for aln in order {
        let (lo, hi) = (aln.gpos - 1, aln.end());
        let mut touched = false;
        for (span, col) in owned.iter().zip(columns.iter_mut()) {
            let (s, e) = (span.start_base, span.start_base + span.bases.len() as u64);
            if span.ordinal != aln.chrom_ordinal || hi <= s || e <= lo {
                continue;
            }
            touched = true;
            for g in lo.max(s)..hi.min(e) {
                col[(g - s) as usize].push(aln.read_bases[(g - lo) as usize]);
            }
        }
        if !touched {
            return Err(Error::Consistency(format!(
                "alignment of {} at {}:{} lies outside the partition",
                aln.read_id, aln.chrom, aln.gpos
            )));
        }
    }

    let mut rows = Vec::new();
    for (span, col) in owned.iter().zip(columns) {
        for (i, bases) in col.into_iter().enumerate() {
            if bases.is_empty() {
                continue;
            }
            let pos = span.start_base + i as u64 + 1;
            rows.push(MpileupRow {
                key: linear_key(span.ordinal, pos),
                chrom: span.name.clone(),
                pos,
                ref_base: span.bases[i].to_ascii_uppercase(),
                depth: bases.len() as u32,
                bases: String::from_utf8_lossy(&bases).into_owned(),
            });
        }
    }
    rows.sort_by_key(|r| r.key);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aln(id: &str, gpos: u64, seq: &str) -> AlignmentRecord {
        AlignmentRecord {
            read_id: id.into(),
            chrom: "chr1".into(),
            chrom_ordinal: 0,
            gpos,
            mismatches: 0,
            read_bases: seq.as_bytes().to_vec(),
            fasta_chunk_id: 0,
        }
    }

    fn reference() -> Vec<SpanText> {
        vec![SpanText {
            name: "chr1".into(),
            ordinal: 0,
            start_base: 0,
            bases: b"ACGTACGT".to_vec(),
        }]
    }

    #[test]
    fn single_read_expands_per_position() {
        let rows = make_mpileup(&[aln("r", 3, "GTAC")], &reference()).unwrap();
        let got: Vec<(u64, u8, u32, &str)> = rows
            .iter()
            .map(|r| (r.pos, r.ref_base, r.depth, r.bases.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                (3, b'G', 1, "G"),
                (4, b'T', 1, "T"),
                (5, b'A', 1, "A"),
                (6, b'C', 1, "C")
            ]
        );
        assert_eq!(rows[0].to_line(), "3\tchr1\t3\tG\t1\tG\n");
    }

    #[test]
    fn identical_reads_double_depth() {
        let rows = make_mpileup(&[aln("a", 3, "GTAC"), aln("b", 3, "GTAC")], &reference()).unwrap();
        assert!(rows.iter().all(|r| r.depth == 2 && r.bases.len() == 2));
    }

    #[test]
    fn contributions_in_read_order() {
        let rows = make_mpileup(&[aln("b", 1, "T"), aln("a", 1, "A")], &reference()).unwrap();
        assert_eq!(rows[0].bases, "AT");
    }

    #[test]
    fn no_alignments_no_rows() {
        assert!(make_mpileup(&[], &reference()).unwrap().is_empty());
    }

    #[test]
    fn clipped_to_owned_region() {
        let owned = vec![SpanText {
            name: "chr1".into(),
            ordinal: 0,
            start_base: 4,
            bases: b"ACGT".to_vec(),
        }];
        let rows = make_mpileup(&[aln("r", 3, "GTAC")], &owned).unwrap();
        assert_eq!(rows.iter().map(|r| r.pos).collect::<Vec<_>>(), vec![5, 6]);
        assert!(make_mpileup(&[aln("r", 1, "AC")], &owned).is_err());
    }

    #[test]
    fn key_layout() {
        assert_eq!(linear_key(0, 7), 7);
        assert_eq!(linear_key(2, 7), (2u64 << 32) + 7);
        assert_eq!(split_key(linear_key(3, 99)), (3, 99));
        let row = MpileupRow::from_fields(&["4294967303", "chr2", "7", "A", "2", "AG"]).unwrap();
        assert_eq!(split_key(row.key), (1, 7));
        assert!(MpileupRow::from_fields(&["1", "c", "1", "A", "3", "AG"]).is_err());
    }
}
