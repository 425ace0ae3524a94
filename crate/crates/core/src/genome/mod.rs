// SPDX-License-Identifier: Apache-2.0

//! Read-only indexing and partition planning for FASTA and FASTQ objects.

mod fasta;
mod fastq;

pub use fasta::{
    build_fasta_index, fai_key, fetch_fasta_partition, index_fasta_bytes, parse_fai, plan_fasta_partitions, to_fai,
    ChromOrder, FaidxEntry, FastaPartition, FastaSpan, SpanText,
};
pub use fastq::{parse_fastq, plan_fastq_bytes, plan_fastq_partitions, FastqChunk, FastqRecord};
