// SPDX-License-Identifier: Apache-2.0

//! Reduce phase: memory-budgeted range planning over the pileup objects of
//! one FASTA chunk, range fetching through the select engine, merge, variant
//! calling and concatenation.

mod plan;
mod reduce;

pub use plan::{
    build_ranges, extract_index_columns, group_ranges, parse_partition_table, plan_ranges, sample_row_sizes,
    sample_row_sizes_bytes, write_partition_table, IndexRange, ReducePartition,
};
pub use reduce::{
    call_variant, concat_outputs, parse_calls, reduce_partition, validate_sorted, write_calls, CallerParams,
    ReduceOutput, VariantCall,
};
