// SPDX-License-Identifier: Apache-2.0

//! Stage handlers. Each is a pure function of its inputs and params; all
//! results go back to the store.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::executor::{Executor, Stage, StageHandler, TaskContext};
use crate::genome::{self, ChromOrder, FastaPartition};
use crate::map::{self, align_chunk, correct_index, make_mpileup, owned_texts, route_to_owners};
use crate::shuffle::{
    self, extract_index_columns, plan_ranges, reduce_partition, sample_row_sizes, write_calls, CallerParams,
    IndexRange, ReducePartition,
};
use crate::store::ObjectRead;

pub(crate) fn register_all(executor: &mut Executor) {
    let handlers: [(Stage, Arc<dyn StageHandler>); 7] = [
        (Stage::FastaIndex, Arc::new(fasta_index)),
        (Stage::Align, Arc::new(align)),
        (Stage::Correct, Arc::new(correct)),
        (Stage::Mpileup, Arc::new(mpileup)),
        (Stage::ShufflePlan, Arc::new(shuffle_plan)),
        (Stage::Reduce, Arc::new(reduce)),
        (Stage::Concat, Arc::new(concat)),
    ];
    for (stage, h) in handlers {
        executor.register(stage, h);
    }
}

fn input<'a>(ctx: &'a TaskContext<'_>, i: usize) -> Result<&'a crate::store::ObjectRef> {
    ctx.inputs()
        .get(i)
        .ok_or_else(|| Error::param(format!("task {} needs input #{i}", ctx.spec().task_id)))
}

fn read_plan(ctx: &TaskContext<'_>, i: usize) -> Result<Vec<FastaPartition>> {
    let body = ctx.get(input(ctx, i)?)?;
    serde_json::from_slice(&body).map_err(|e| Error::format(format!("bad partition plan: {e}")))
}

fn read_order(ctx: &TaskContext<'_>, i: usize) -> Result<ChromOrder> {
    let body = ctx.get(input(ctx, i)?)?;
    let text = std::str::from_utf8(&body).map_err(|_| Error::format(".fai is not UTF-8"))?;
    Ok(ChromOrder::new(&genome::parse_fai(text)?))
}

fn partition(plan: &[FastaPartition], chunk: usize) -> Result<&FastaPartition> {
    plan.get(chunk)
        .ok_or_else(|| Error::param(format!("no FASTA chunk {chunk} in plan")))
}

/// inputs: [fasta]; params: bucket, out
fn fasta_index(ctx: &TaskContext<'_>) -> Result<()> {
    let body = ctx.get(input(ctx, 0)?)?;
    let entries = genome::index_fasta_bytes(&body)?;
    ctx.put(
        ctx.param("bucket")?,
        ctx.param("out")?,
        genome::to_fai(&entries).as_bytes(),
    )?;
    Ok(())
}

/// inputs: [fasta, fastq, fasta plan]; params: bucket, out, chunk,
/// fastq_lo, fastq_hi, max_mismatches
fn align(ctx: &TaskContext<'_>) -> Result<()> {
    let plan = read_plan(ctx, 2)?;
    let chunk: usize = ctx.param_as("chunk")?;
    let part = partition(&plan, chunk)?;
    let texts = genome::fetch_fasta_partition(ctx, input(ctx, 0)?, part)?;
    let reads_raw = ctx.get_range(input(ctx, 1)?, ctx.param_as("fastq_lo")?, ctx.param_as("fastq_hi")?)?;
    let reads = genome::parse_fastq(&reads_raw)?;
    let out = align_chunk(
        &texts,
        &reads,
        ctx.param_as("max_mismatches")?,
        ctx.resources().vcpus,
        chunk,
    );
    if out.skipped > 0 {
        log::debug!("{}: {} reads longer than every span", ctx.spec().task_id, out.skipped);
    }
    ctx.put(
        ctx.param("bucket")?,
        ctx.param("out")?,
        map::write_map(&out.records).as_bytes(),
    )?;
    Ok(())
}

/// inputs: [fasta plan, fai, map...]; params: bucket, out_prefix, chunks
/// (FASTA chunk id of each map input), fastq_chunk
fn correct(ctx: &TaskContext<'_>) -> Result<()> {
    let plan = read_plan(ctx, 0)?;
    let order = read_order(ctx, 1)?;
    let chunks: Vec<usize> = parse_list(ctx.param("chunks")?)?;
    let maps = &ctx.inputs()[2..];
    if maps.len() != chunks.len() {
        return Err(Error::param("chunks param does not match the .map inputs"));
    }
    let mut candidates = Vec::new();
    for (obj, &chunk) in maps.iter().zip(&chunks) {
        candidates.extend(map::parse_map(&ctx.get(obj)?, &order, chunk)?);
    }
    let corrected = correct_index(candidates);
    let owned: Vec<_> = plan.iter().map(FastaPartition::owned_spans).collect();
    let (routed, orphans) = route_to_owners(&corrected, &owned);
    if let Some(o) = orphans.first() {
        return Err(Error::Consistency(format!(
            "alignment of {} at {}:{} has no owning chunk",
            o.read_id, o.chrom, o.gpos
        )));
    }
    let (bucket, prefix, q) = (
        ctx.param("bucket")?,
        ctx.param("out_prefix")?,
        ctx.param_as::<usize>("fastq_chunk")?,
    );
    for (chunk, records) in routed {
        ctx.put(
            bucket,
            &corrected_key(prefix, chunk, q),
            map::write_map(&records).as_bytes(),
        )?;
    }
    Ok(())
}

pub(crate) fn corrected_key(prefix: &str, chunk: usize, fastq_chunk: usize) -> String {
    format!("{prefix}/c{chunk:04}/q{fastq_chunk:04}.map")
}

/// inputs: [fasta, fasta plan, fai, corrected map]; params: bucket, out, chunk
fn mpileup(ctx: &TaskContext<'_>) -> Result<()> {
    let plan = read_plan(ctx, 1)?;
    let order = read_order(ctx, 2)?;
    let chunk: usize = ctx.param_as("chunk")?;
    let part = partition(&plan, chunk)?;
    let alignments = map::parse_map(&ctx.get(input(ctx, 3)?)?, &order, chunk)?;
    let texts = genome::fetch_fasta_partition(ctx, input(ctx, 0)?, part)?;
    let rows = make_mpileup(&alignments, &owned_texts(part, &texts))?;
    ctx.put(
        ctx.param("bucket")?,
        ctx.param("out")?,
        map::write_mpileup(&rows).as_bytes(),
    )?;
    Ok(())
}

/// inputs: pileup objects of one FASTA chunk; params: bucket, out, chunk,
/// budget, n_samples
fn shuffle_plan(ctx: &TaskContext<'_>) -> Result<()> {
    let refs = ctx.inputs();
    let (_, max_row) = sample_row_sizes(ctx, refs, ctx.param_as("n_samples")?)?;
    let (lists, _) = extract_index_columns(ctx, refs)?;
    let parts = plan_ranges(&lists, max_row, ctx.param_as("budget")?, ctx.param_as("chunk")?, refs)?;
    ctx.put(
        ctx.param("bucket")?,
        ctx.param("out")?,
        shuffle::write_partition_table(&parts).as_bytes(),
    )?;
    Ok(())
}

pub(crate) fn encode_ranges(ranges: &[IndexRange]) -> String {
    ranges
        .iter()
        .map(|r| format!("{}-{}", r.lo, r.hi))
        .collect::<Vec<_>>()
        .join(",")
}

fn decode_ranges(text: &str, chunk: usize) -> Result<Vec<IndexRange>> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            let (lo, hi) = s
                .split_once('-')
                .ok_or_else(|| Error::param(format!("bad range {s:?}")))?;
            let num = |x: &str| x.parse::<u64>().map_err(|_| Error::param(format!("bad range {s:?}")));
            Ok(IndexRange {
                fasta_chunk_id: chunk,
                lo: num(lo)?,
                hi: num(hi)?,
                rows: 0,
                est_bytes: 0,
                oversized: false,
            })
        })
        .collect()
}

fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::param(format!("bad list entry {s:?}"))))
        .collect()
}

/// inputs: pileup objects; params: bucket, out, chunk, partition, ranges,
/// theta, min_depth
fn reduce(ctx: &TaskContext<'_>) -> Result<()> {
    let chunk: usize = ctx.param_as("chunk")?;
    let part = ReducePartition {
        partition_id: ctx.param_as("partition")?,
        fasta_chunk_id: chunk,
        ranges: decode_ranges(ctx.param("ranges")?, chunk)?,
        mpileup_refs: ctx.inputs().to_vec(),
        budget_bytes: 0,
    };
    let params = CallerParams {
        theta: ctx.param_as("theta")?,
        min_depth: ctx.param_as("min_depth")?,
    };
    let out = reduce_partition(ctx, &part, &params)?;
    ctx.put(
        ctx.param("bucket")?,
        ctx.param("out")?,
        write_calls(&out.calls).as_bytes(),
    )?;
    Ok(())
}

/// inputs: [fai, partial outputs...]; params: bucket, out, labels
fn concat(ctx: &TaskContext<'_>) -> Result<()> {
    let order = read_order(ctx, 0)?;
    let labels: Vec<String> = ctx
        .param("labels")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect();
    let parts = &ctx.inputs()[1..];
    if labels.len() != parts.len() {
        return Err(Error::param("labels param does not match the partial outputs"));
    }
    let pairs: Vec<(String, _)> = labels.into_iter().zip(parts.iter().cloned()).collect();
    let body = shuffle::concat_outputs(ctx, &pairs)?;
    shuffle::validate_sorted(&body, &order)?;
    ctx.put(ctx.param("bucket")?, ctx.param("out")?, &body)?;
    Ok(())
}
