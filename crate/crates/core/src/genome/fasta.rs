// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ObjectRead, ObjectRef, ObjectStore};

/// One line of a `.fai` index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaidxEntry {
    pub name: String,
    pub length: u64,
    /// Byte offset of the first base.
    pub offset: u64,
    pub line_bases: u64,
    /// Bytes per full line, terminator included.
    pub line_width: u64,
}

impl FaidxEntry {
    /// Byte offset of 0-based base `b`.
    pub fn base_offset(&self, b: u64) -> u64 {
        self.offset + (b / self.line_bases) * self.line_width + b % self.line_bases
    }

    /// Half-open byte range holding bases `[start, end)`; `end > start`.
    pub fn byte_range(&self, start: u64, end: u64) -> (u64, u64) {
        (self.base_offset(start), self.base_offset(end - 1) + 1)
    }
}

/// Key under which the index of `fasta_key` is stored.
pub fn fai_key(fasta_key: &str) -> String {
    format!("{fasta_key}.fai")
}

/// Builds the index and stores it next to the FASTA as `<key>.fai`. The FASTA
/// object itself is only read.
pub fn build_fasta_index(store: &ObjectStore, fasta: &ObjectRef) -> Result<(Vec<FaidxEntry>, ObjectRef)> {
    let data = store.get(fasta)?;
    let entries = index_fasta_bytes(&data)?;
    let fai = store.put(&fasta.bucket, &fai_key(&fasta.key), to_fai(&entries).as_bytes())?;
    Ok((entries, fai))
}

pub fn index_fasta_bytes(data: &[u8]) -> Result<Vec<FaidxEntry>> {
    struct Open {
        entry: FaidxEntry,
        short_line_seen: bool,
    }

    fn close(open: Option<Open>, out: &mut Vec<FaidxEntry>) -> Result<()> {
        if let Some(o) = open {
            if o.entry.length == 0 {
                return Err(Error::format(format!("sequence {} has an empty body", o.entry.name)));
            }
            out.push(o.entry);
        }
        Ok(())
    }

    let mut out = Vec::new();
    let mut cur: Option<Open> = None;
    let mut pos = 0usize;
    while pos < data.len() {
        let (line_end, next) = match data[pos..].iter().position(|&b| b == b'\n') {
            Some(i) => (pos + i, pos + i + 1),
            None => (data.len(), data.len()),
        };
        let terminated = next > line_end;
        let mut content_end = line_end;
        if content_end > pos && data[content_end - 1] == b'\r' {
            content_end -= 1;
        }
        let line = &data[pos..content_end];

        if line.first() == Some(&b'>') {
            close(cur.take(), &mut out)?;
            let name = std::str::from_utf8(&line[1..])
                .map_err(|_| Error::format(format!("non UTF-8 header at byte {pos}")))?
                .split_whitespace()
                .next()
                .unwrap_or("")
                .to_string();
            if name.is_empty() {
                return Err(Error::format(format!("empty sequence name at byte {pos}")));
            }
            cur = Some(Open {
                entry: FaidxEntry {
                    name,
                    length: 0,
                    offset: next as u64,
                    line_bases: 0,
                    line_width: 0,
                },
                short_line_seen: false,
            });
        } else {
            let open = cur
                .as_mut()
                .ok_or_else(|| Error::format("sequence data before the first header"))?;
            let bases = line.len() as u64;
            // An unterminated last line is measured as if it had a LF.
            let width = if terminated { (next - pos) as u64 } else { bases + 1 };
            let e = &mut open.entry;
            if e.line_bases == 0 {
                if bases == 0 {
                    return Err(Error::format(format!("sequence {} has an empty body", e.name)));
                }
                e.line_bases = bases;
                e.line_width = width;
            } else if bases > 0
                && (open.short_line_seen || bases > e.line_bases || (bases == e.line_bases && width != e.line_width))
            {
                return Err(Error::format(format!(
                    "sequence {} has non-uniform line widths",
                    e.name
                )));
            }
            if bases < e.line_bases {
                open.short_line_seen = true;
            }
            e.length += bases;
        }
        pos = next;
    }
    close(cur, &mut out)?;
    Ok(out)
}

/// Five-column `.fai` text.
pub fn to_fai(entries: &[FaidxEntry]) -> String {
    entries
        .iter()
        .map(|e| {
            format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.name, e.length, e.offset, e.line_bases, e.line_width
            )
        })
        .collect()
}

pub fn parse_fai(text: &str) -> Result<Vec<FaidxEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || Error::RowFormat {
                line: i + 1,
                message: format!("malformed .fai line {line:?}"),
            };
            if f.len() < 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
            Ok(FaidxEntry {
                name: f[0].to_string(),
                length: num(f[1])?,
                offset: num(f[2])?,
                line_bases: num(f[3])?,
                line_width: num(f[4])?,
            })
        })
        .collect()
}

/// FASTA order of sequence names.
#[derive(Debug, Clone, Default)]
pub struct ChromOrder {
    names: Vec<String>,
    ordinals: HashMap<String, u32>,
}

impl ChromOrder {
    pub fn new(index: &[FaidxEntry]) -> Self {
        let names: Vec<String> = index.iter().map(|e| e.name.clone()).collect();
        let ordinals = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        Self { names, ordinals }
    }

    pub fn ordinal(&self, name: &str) -> Option<u32> {
        self.ordinals.get(name).copied()
    }

    pub fn name(&self, ordinal: u32) -> Option<&str> {
        self.names.get(ordinal as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FastaSpan {
    pub name: String,
    /// Position of the sequence in the FASTA.
    pub ordinal: u32,
    /// 0-based inclusive.
    pub start_base: u64,
    /// Exclusive.
    pub end_base: u64,
}

impl FastaSpan {
    pub fn len(&self) -> u64 {
        self.end_base - self.start_base
    }

    pub fn is_empty(&self) -> bool {
        self.end_base == self.start_base
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FastaPartition {
    pub chunk_id: usize,
    pub spans: Vec<FastaSpan>,
    pub byte_ranges: Vec<(u64, u64)>,
    /// Bases at the head of the first span repeated from the previous chunk.
    pub overlap_bases: u64,
}

impl FastaPartition {
    pub fn total_bases(&self) -> u64 {
        self.spans.iter().map(FastaSpan::len).sum()
    }

    /// Spans without the carried overlap. Every genome base is owned by
    /// exactly one partition.
    pub fn owned_spans(&self) -> Vec<FastaSpan> {
        let mut owned = self.spans.clone();
        if let Some(first) = owned.first_mut() {
            first.start_base += self.overlap_bases;
        }
        owned.retain(|s| !s.is_empty());
        owned
    }
}

/// Splits the genome into windows of `chunk_bases` new bases each. A window
/// starting inside a sequence is extended backwards by up to `overlap_bases`
/// so that consecutive windows of one sequence share exactly that many bases.
/// Windows may cross sequence boundaries.
pub fn plan_fasta_partitions(
    index: &[FaidxEntry],
    chunk_bases: u64,
    overlap_bases: u64,
) -> Result<Vec<FastaPartition>> {
    if chunk_bases == 0 {
        return Err(Error::param("chunk_bases must be positive"));
    }
    if overlap_bases >= chunk_bases {
        return Err(Error::param(format!(
            "overlap_bases ({overlap_bases}) must be smaller than chunk_bases ({chunk_bases})"
        )));
    }
    for e in index {
        if e.line_bases == 0 || e.line_width <= e.line_bases || e.length == 0 {
            return Err(Error::format(format!("invalid index entry for {}", e.name)));
        }
    }

    let mut seq_starts = Vec::with_capacity(index.len());
    let mut total = 0u64;
    for e in index {
        seq_starts.push(total);
        total += e.length;
    }

    let mut parts = Vec::new();
    let mut seq = 0usize;
    let mut lo = 0u64;
    while lo < total {
        let hi = (lo + chunk_bases).min(total);
        let mut spans = Vec::new();
        let mut ranges = Vec::new();
        let mut carried = 0;
        let mut s = seq;
        while s < index.len() && seq_starts[s] < hi {
            let e = &index[s];
            let seq_end = seq_starts[s] + e.length;
            if seq_end > lo {
                let mut start = lo.max(seq_starts[s]) - seq_starts[s];
                let end = hi.min(seq_end) - seq_starts[s];
                if spans.is_empty() && start > 0 {
                    carried = overlap_bases.min(start);
                    start -= carried;
                }
                ranges.push(e.byte_range(start, end));
                spans.push(FastaSpan {
                    name: e.name.clone(),
                    ordinal: s as u32,
                    start_base: start,
                    end_base: end,
                });
            }
            if seq_end <= hi {
                s += 1;
            } else {
                break;
            }
        }
        // The next window starts in the sequence where this one stopped.
        seq = s;
        parts.push(FastaPartition {
            chunk_id: parts.len(),
            spans,
            byte_ranges: ranges,
            overlap_bases: carried,
        });
        lo = hi;
    }
    Ok(parts)
}

/// Bases of one span plus the coordinates needed to map chunk-local hits
/// back to the genome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanText {
    pub name: String,
    pub ordinal: u32,
    pub start_base: u64,
    pub bases: Vec<u8>,
}

/// Fetches a partition with one byte-range read per span.
pub fn fetch_fasta_partition(
    store: &impl ObjectRead,
    fasta: &ObjectRef,
    partition: &FastaPartition,
) -> Result<Vec<SpanText>> {
    partition
        .spans
        .iter()
        .zip(&partition.byte_ranges)
        .map(|(span, &(lo, hi))| {
            if span.is_empty() {
                return Err(Error::param(format!(
                    "empty span for {} in chunk {}",
                    span.name, partition.chunk_id
                )));
            }
            let raw = store.get_range(fasta, lo, hi)?;
            let bases: Vec<u8> = raw.into_iter().filter(|b| *b != b'\n' && *b != b'\r').collect();
            if bases.len() as u64 != span.len() {
                return Err(Error::format(format!(
                    "span {}:{}-{} decoded to {} bases, expected {}",
                    span.name,
                    span.start_base,
                    span.end_base,
                    bases.len(),
                    span.len()
                )));
            }
            Ok(SpanText {
                name: span.name.clone(),
                ordinal: span.ordinal,
                start_base: span.start_base,
                bases,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(name: &str, length: u64, offset: u64, lb: u64, lw: u64) -> FaidxEntry {
        FaidxEntry {
            name: name.into(),
            length,
            offset,
            line_bases: lb,
            line_width: lw,
        }
    }

    #[test]
    fn two_sequence_index() {
        let idx = index_fasta_bytes(b">chr1\nACGT\nACGT\n>chr2\nGG\n").unwrap();
        assert_eq!(idx, vec![entry("chr1", 8, 6, 4, 5), entry("chr2", 2, 22, 2, 3)]);
        assert_eq!(to_fai(&idx), "chr1\t8\t6\t4\t5\nchr2\t2\t22\t2\t3\n");
        assert_eq!(parse_fai(&to_fai(&idx)).unwrap(), idx);
    }

    #[test]
    fn minimal_and_short_last_line() {
        assert_eq!(index_fasta_bytes(b">s\nA\n").unwrap(), vec![entry("s", 1, 3, 1, 2)]);
        let idx = index_fasta_bytes(b">a\nACGT\nAC\n>b\nACGT\n").unwrap();
        assert_eq!(idx[0].length, 6);
        assert_eq!(idx[1].offset, 14);
    }

    #[test]
    fn header_description_and_no_final_newline() {
        let idx = index_fasta_bytes(b">chr7 some description\nACG\nA").unwrap();
        assert_eq!(idx, vec![entry("chr7", 4, 23, 3, 4)]);
    }

    #[test]
    fn crlf_lines() {
        let idx = index_fasta_bytes(b">s\r\nACGT\r\nAC\r\n").unwrap();
        assert_eq!(idx, vec![entry("s", 6, 4, 4, 6)]);
    }

    #[test]
    fn rejects_bad_layouts() {
        let e = index_fasta_bytes(b">a\nAC\nACGT\n").unwrap_err();
        assert!(e.to_string().contains("non-uniform"), "{e}");
        assert!(index_fasta_bytes(b">a\nACGT\nAC\nAC\n").is_err());
        assert!(index_fasta_bytes(b">a\n>b\nAC\n")
            .unwrap_err()
            .to_string()
            .contains("empty body"));
        assert!(index_fasta_bytes(b"ACGT\n").is_err());
    }

    #[test]
    fn index_leaves_fasta_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let store = ObjectStore::open(dir.path()).unwrap();
        let fa = store.put("b", "g.fa", b">chr1\nACGT\nACGT\n").unwrap();
        let before = store.write_log().len();
        let (_, fai) = build_fasta_index(&store, &fa).unwrap();
        assert_eq!(fai.key, "g.fa.fai");
        assert_eq!(store.write_log()[before..], ["b/g.fa.fai".to_string()]);
        assert_eq!(store.get(&fa).unwrap(), b">chr1\nACGT\nACGT\n");
    }

    fn spans(p: &FastaPartition) -> Vec<(String, u64, u64)> {
        p.spans
            .iter()
            .map(|s| (s.name.clone(), s.start_base, s.end_base))
            .collect()
    }

    #[test]
    fn partition_examples() {
        let ten = [entry("s", 10, 3, 10, 11)];
        let p = plan_fasta_partitions(&ten, 5, 0).unwrap();
        assert_eq!(
            p.iter().map(spans).collect::<Vec<_>>(),
            vec![vec![("s".into(), 0, 5)], vec![("s".into(), 5, 10)]]
        );

        let p = plan_fasta_partitions(&ten, 5, 2).unwrap();
        assert_eq!(spans(&p[0]), vec![("s".into(), 0, 5)]);
        assert_eq!(spans(&p[1]), vec![("s".into(), 3, 10)]);
        assert_eq!(p[1].overlap_bases, 2);

        let two = [entry("a", 4, 3, 4, 5), entry("b", 4, 11, 4, 5)];
        let p = plan_fasta_partitions(&two, 8, 0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(spans(&p[0]), vec![("a".into(), 0, 4), ("b".into(), 0, 4)]);
    }

    #[test]
    fn partition_parameter_errors() {
        let idx = [entry("s", 10, 3, 10, 11)];
        assert!(plan_fasta_partitions(&idx, 0, 0).is_err());
        assert!(plan_fasta_partitions(&idx, 5, 5).is_err());
    }

    #[test]
    fn fetch_across_line_break() {
        let dir = tempfile::tempdir().unwrap();
        let store = ObjectStore::open(dir.path()).unwrap();
        let fa = store.put("b", "g.fa", b">chr1\nACGT\nACGT\n").unwrap();
        let idx = index_fasta_bytes(&store.get(&fa).unwrap()).unwrap();
        let part = FastaPartition {
            chunk_id: 0,
            spans: vec![FastaSpan {
                name: "chr1".into(),
                ordinal: 0,
                start_base: 2,
                end_base: 6,
            }],
            byte_ranges: vec![idx[0].byte_range(2, 6)],
            overlap_bases: 0,
        };
        let text = fetch_fasta_partition(&store, &fa, &part).unwrap();
        assert_eq!(text[0].bases, b"GTAC");
        assert_eq!(text[0].start_base, 2);

        let whole = &plan_fasta_partitions(&idx, 100, 0).unwrap()[0];
        assert_eq!(fetch_fasta_partition(&store, &fa, whole).unwrap()[0].bases, b"ACGTACGT");

        let mut empty = part.clone();
        empty.spans[0].end_base = 2;
        assert!(fetch_fasta_partition(&store, &fa, &empty).is_err());
    }

    fn fasta_strategy() -> impl Strategy<Value = (Vec<(String, Vec<u8>, usize)>, String)> {
        proptest::collection::vec(
            (
                proptest::collection::vec(prop_oneof![Just(b'A'), Just(b'C'), Just(b'G'), Just(b'T')], 1..60),
                1usize..12,
            ),
            1..4,
        )
        .prop_map(|seqs| {
            let seqs: Vec<(String, Vec<u8>, usize)> = seqs
                .into_iter()
                .enumerate()
                .map(|(i, (s, w))| (format!("seq{i}"), s, w))
                .collect();
            let mut text = String::new();
            for (name, s, w) in &seqs {
                text.push_str(&format!(">{name}\n"));
                for line in s.chunks(*w) {
                    text.push_str(std::str::from_utf8(line).unwrap());
                    text.push('\n');
                }
            }
            (seqs, text)
        })
    }

    proptest! {
        #[test]
        fn partitions_reconstruct_genome((seqs, text) in fasta_strategy(), chunk in 2u64..40, ov in 0u64..20) {
            prop_assume!(ov < chunk);
            let dir = tempfile::tempdir().unwrap();
            let store = ObjectStore::open(dir.path()).unwrap();
            let fa = store.put("b", "g.fa", text.as_bytes()).unwrap();
            let idx = index_fasta_bytes(text.as_bytes()).unwrap();
            let writes = store.write_log().len();
            let parts = plan_fasta_partitions(&idx, chunk, ov).unwrap();
            let mut rebuilt: Vec<Vec<u8>> = vec![Vec::new(); seqs.len()];
            let mut owned_total = 0;
            for p in &parts {
                prop_assert!(p.total_bases() <= chunk + ov);
                let texts = fetch_fasta_partition(&store, &fa, p).unwrap();
                for (i, t) in texts.iter().enumerate() {
                    let skip = if i == 0 { p.overlap_bases as usize } else { 0 };
                    let seq = &mut rebuilt[t.ordinal as usize];
                    // Carried overlap must equal the tail already rebuilt.
                    prop_assert_eq!(&seq[seq.len() - skip..], &t.bases[..skip]);
                    prop_assert_eq!(seq.len() as u64, t.start_base + skip as u64);
                    seq.extend_from_slice(&t.bases[skip..]);
                }
                owned_total += p.owned_spans().iter().map(FastaSpan::len).sum::<u64>();
            }
            for (i, (_, s, _)) in seqs.iter().enumerate() {
                prop_assert_eq!(&rebuilt[i], s);
            }
            prop_assert_eq!(owned_total, seqs.iter().map(|s| s.1.len() as u64).sum::<u64>());
            // Consecutive windows of the same sequence share exactly the overlap.
            for w in parts.windows(2) {
                let (last, first) = (w[0].spans.last().unwrap(), &w[1].spans[0]);
                if last.ordinal == first.ordinal {
                    prop_assert_eq!(last.end_base - first.start_base, ov.min(last.end_base));
                }
            }
            // Replanning reuses the index without writing.
            plan_fasta_partitions(&idx, chunk + 7, 0).unwrap();
            prop_assert_eq!(store.write_log().len(), writes);
        }
    }
}
