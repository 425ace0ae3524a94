// SPDX-License-Identifier: Apache-2.0

//! Map phase: chunk-against-chunk alignment, cross-chunk index correction and
//! pileup generation.

mod align;
mod correct;
mod pileup;

pub use align::{align_chunk, AlignOutput, AlignmentRecord};
pub use correct::{correct_index, route_to_owners};
pub use pileup::{linear_key, make_mpileup, owned_texts, split_key, MpileupRow, KEY_COLUMN};

use crate::error::{Error, Result};
use crate::genome::ChromOrder;
use crate::select::split_rows;

/// `.map` stand-in: `read_id  chrom  gpos  mismatches  bases`.
pub fn write_map(records: &[AlignmentRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.read_id,
                r.chrom,
                r.gpos,
                r.mismatches,
                String::from_utf8_lossy(&r.read_bases)
            )
        })
        .collect()
}

pub fn parse_map(data: &[u8], order: &ChromOrder, fasta_chunk_id: usize) -> Result<Vec<AlignmentRecord>> {
    let text = std::str::from_utf8(data).map_err(|_| Error::format(".map object is not UTF-8"))?;
    split_rows(text)
        .enumerate()
        .map(|(i, line)| {
            let bad = |msg: &str| Error::RowFormat {
                line: i + 1,
                message: format!("{msg} in {line:?}"),
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let chrom_ordinal = order.ordinal(f[1]).ok_or_else(|| bad("unknown sequence"))?;
            Ok(AlignmentRecord {
                read_id: f[0].to_string(),
                chrom: f[1].to_string(),
                chrom_ordinal,
                gpos: f[2].parse().map_err(|_| bad("bad position"))?,
                mismatches: f[3].parse().map_err(|_| bad("bad mismatch count"))?,
                read_bases: f[4].as_bytes().to_vec(),
                fasta_chunk_id,
            })
        })
        .collect()
}

pub fn write_mpileup(rows: &[MpileupRow]) -> String {
    rows.iter().map(MpileupRow::to_line).collect()
}

pub fn parse_mpileup(data: &[u8]) -> Result<Vec<MpileupRow>> {
    let text = std::str::from_utf8(data).map_err(|_| Error::format("mpileup object is not UTF-8"))?;
    split_rows(text)
        .enumerate()
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            MpileupRow::from_fields(&fields).map_err(|message| Error::RowFormat { line: i + 1, message })
        })
        .collect()
}
