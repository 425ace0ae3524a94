// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use crate::genome::FastaSpan;
use crate::map::AlignmentRecord;

/// Keeps one alignment per read out of the candidates found in every FASTA
/// chunk: fewest mismatches, then lowest genome position. Identical loci
/// reported by two overlapping chunks collapse to the lower chunk id.
/// Output is ordered by read id.
pub fn correct_index(candidates: Vec<AlignmentRecord>) -> Vec<AlignmentRecord> {
    let mut best: BTreeMap<String, AlignmentRecord> = BTreeMap::new();
    for cand in candidates {
        match best.get_mut(&cand.read_id) {
            Some(cur) => {
                let rank = |r: &AlignmentRecord| (r.mismatches, r.chrom_ordinal, r.gpos, r.fasta_chunk_id);
                if rank(&cand) < rank(cur) {
                    *cur = cand;
                }
            }
            None => {
                best.insert(cand.read_id.clone(), cand);
            }
        }
    }
    best.into_values().collect()
}

/// Assigns each alignment to every chunk whose owned region it touches.
/// `owned` is indexed by chunk id. Alignments touching no owned region are
/// returned separately; they indicate a planning bug.
pub fn route_to_owners(
    alignments: &[AlignmentRecord],
    owned: &[Vec<FastaSpan>],
) -> (BTreeMap<usize, Vec<AlignmentRecord>>, Vec<AlignmentRecord>) {
    let mut routed: BTreeMap<usize, Vec<AlignmentRecord>> = BTreeMap::new();
    let mut orphans = Vec::new();
    for aln in alignments {
        let (lo, hi) = (aln.gpos - 1, aln.end());
        let mut hit = false;
        for (chunk, spans) in owned.iter().enumerate() {
            if spans
                .iter()
                .any(|s| s.ordinal == aln.chrom_ordinal && s.start_base < hi && lo < s.end_base)
            {
                routed.entry(chunk).or_default().push(aln.clone());
                hit = true;
            }
        }
        if !hit {
            orphans.push(aln.clone());
        }
    }
    (routed, orphans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(read: &str, chunk: usize, mm: u32, gpos: u64) -> AlignmentRecord {
        AlignmentRecord {
            read_id: read.into(),
            chrom: "chr1".into(),
            chrom_ordinal: 0,
            gpos,
            mismatches: mm,
            read_bases: b"ACGT".to_vec(),
            fasta_chunk_id: chunk,
        }
    }

    #[test]
    fn strict_minimum() {
        let out = correct_index(vec![rec("r1", 0, 1, 100), rec("r1", 1, 0, 5000)]);
        assert_eq!(out, vec![rec("r1", 1, 0, 5000)]);
    }

    #[test]
    fn overlap_duplicate_collapses() {
        let out = correct_index(vec![rec("r2", 4, 0, 40), rec("r2", 3, 0, 40)]);
        assert_eq!(out, vec![rec("r2", 3, 0, 40)]);
    }

    #[test]
    fn tie_goes_to_lowest_position() {
        // Enumerate both candidate orders; the winner must not depend on it.
        let a = rec("r3", 0, 1, 10);
        let b = rec("r3", 1, 1, 90);
        assert_eq!(correct_index(vec![a.clone(), b.clone()]), vec![a.clone()]);
        assert_eq!(correct_index(vec![b, a.clone()]), vec![a]);
    }

    #[test]
    fn chrom_order_precedes_position() {
        let mut later = rec("r", 0, 0, 1);
        later.chrom_ordinal = 1;
        let earlier = rec("r", 1, 0, 900);
        assert_eq!(correct_index(vec![later, earlier.clone()]), vec![earlier]);
    }

    #[test]
    fn empty_and_order() {
        assert!(correct_index(vec![]).is_empty());
        let out = correct_index(vec![rec("b", 0, 0, 1), rec("a", 0, 0, 2)]);
        assert_eq!(out.iter().map(|r| r.read_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn routing_by_owned_region() {
        let span = |s, e| FastaSpan {
            name: "chr1".into(),
            ordinal: 0,
            start_base: s,
            end_base: e,
        };
        let owned = vec![vec![span(0, 10)], vec![span(10, 20)]];
        // Bases 9..=12 (1-based) straddle the boundary.
        let (routed, orphans) = route_to_owners(&[rec("x", 0, 0, 9), rec("y", 0, 0, 15), rec("z", 0, 0, 30)], &owned);
        assert_eq!(routed[&0].len(), 1);
        assert_eq!(routed[&1].len(), 2);
        assert_eq!(orphans.len(), 1);
    }
}
