// SPDX-License-Identifier: Apache-2.0

use std::thread;

use crate::genome::{FastqRecord, SpanText};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentRecord {
    pub read_id: String,
    pub chrom: String,
    pub chrom_ordinal: u32,
    /// 1-based global position of the first aligned base.
    pub gpos: u64,
    pub mismatches: u32,
    pub read_bases: Vec<u8>,
    pub fasta_chunk_id: usize,
}

impl AlignmentRecord {
    /// Genome-order key used for tie-breaking.
    pub fn locus(&self) -> (u32, u64) {
        (self.chrom_ordinal, self.gpos)
    }

    /// 1-based inclusive end.
    pub fn end(&self) -> u64 {
        self.gpos + self.read_bases.len() as u64 - 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignOutput {
    pub records: Vec<AlignmentRecord>,
    /// Reads longer than every span of the chunk.
    pub skipped: usize,
}

/// Ungapped mismatch-bounded alignment of every read against the chunk.
///
/// Each read yields at most one record: the fewest mismatches (at most `m`),
/// ties going to the lowest genome position. `N` never matches. Reads are
/// split into `vcpus` contiguous blocks aligned on separate threads; the
/// output does not depend on `vcpus`.
pub fn align_chunk(
    spans: &[SpanText],
    reads: &[FastqRecord],
    m: u32,
    vcpus: u32,
    fasta_chunk_id: usize,
) -> AlignOutput {
    let workers = (vcpus.max(1) as usize).min(reads.len().max(1));
    let block = reads.len().div_ceil(workers).max(1);
    let parts: Vec<AlignOutput> = if workers == 1 {
        vec![align_block(spans, reads, m, fasta_chunk_id)]
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = reads
                .chunks(block)
                .map(|blk| scope.spawn(move || align_block(spans, blk, m, fasta_chunk_id)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("alignment worker panicked"))
                .collect()
        })
    };
    let mut out = AlignOutput::default();
    for p in parts {
        out.records.extend(p.records);
        out.skipped += p.skipped;
    }
    out
}

fn align_block(spans: &[SpanText], reads: &[FastqRecord], m: u32, fasta_chunk_id: usize) -> AlignOutput {
    let mut out = AlignOutput::default();
    let upper: Vec<Vec<u8>> = spans.iter().map(|s| s.bases.to_ascii_uppercase()).collect();
    for read in reads {
        let seq = read.seq.to_ascii_uppercase();
        if seq.is_empty() || spans.iter().all(|s| s.bases.len() < seq.len()) {
            out.skipped += 1;
            continue;
        }
        // (mismatches, span index, offset); spans are in genome order so the
        // first hit found with a given count has the lowest position.
        let mut best: Option<(u32, usize, usize)> = None;
        'spans: for (si, reference) in upper.iter().enumerate() {
            if reference.len() < seq.len() {
                continue;
            }
            for off in 0..=reference.len() - seq.len() {
                let bound = match best {
                    Some((0, ..)) => break 'spans,
                    Some((mm, ..)) => mm - 1,
                    None => m,
                };
                if let Some(mm) = count_mismatches(&seq, &reference[off..off + seq.len()], bound) {
                    best = Some((mm, si, off));
                }
            }
        }
        if let Some((mm, si, off)) = best {
            let span = &spans[si];
            out.records.push(AlignmentRecord {
                read_id: read.id.clone(),
                chrom: span.name.clone(),
                chrom_ordinal: span.ordinal,
                gpos: span.start_base + off as u64 + 1,
                mismatches: mm,
                read_bases: read.seq.clone(),
                fasta_chunk_id,
            });
        }
    }
    out
}

/// Mismatch count if it does not exceed `bound`.
fn count_mismatches(read: &[u8], reference: &[u8], bound: u32) -> Option<u32> {
    let mut mm = 0;
    for (a, b) in read.iter().zip(reference) {
        if a != b || *a == b'N' {
            mm += 1;
            if mm > bound {
                return None;
            }
        }
    }
    Some(mm)
}
