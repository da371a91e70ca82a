// Licensed to the Apache Software Foundation (ASF) under one
// or more contributor license agreements.  See the NOTICE file
// distributed with this work for additional information
// regarding copyright ownership.  The ASF licenses this file
// to you under the Apache License, Version 2.0 (the
// "License"); you may not use this file except in compliance
// with the License.  You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing,
// software distributed under the License is distributed on an
// "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, either express or implied.  See the License for the
// specific language governing permissions and limitations
// under the License.

//! Task execution: read inputs, run the operator pipeline, write one
//! partitioned output object.
//!
//! A task's output is a deterministic function of its spec and the objects
//! it reads, so re-running a failed attempt is safe.

pub mod agg;
pub mod expr;
pub mod join;
pub mod keys;

use std::sync::Arc;

use futures::future::try_join_all;
use serde::{Deserialize, Serialize};

pub use agg::{AggExpr, AggFunc, AggSpec};
pub use expr::{parse_date, ArithOp, Expr};
pub use keys::{partitioner_fingerprint, HashPartitioner};

use crate::error::{Error, Result};
use crate::format::{
    read_partitions, scan_base_table, write_partitioned, Field, FormatOptions, PruneTerm, RowBatch, Schema,
    SchemaRef,
};
use crate::mitigation::{MitigationConfig, StatsSink, TaskIo};
use crate::storesim::{ObjectKey, SimObjectStore};

/// Tracks memory reservations against a fixed ceiling.
#[derive(Debug, Clone)]
pub struct MemoryBudget {
    limit: u64,
    used: u64,
}

impl MemoryBudget {
    pub fn new(limit: u64) -> Self {
        Self { limit, used: 0 }
    }

    pub fn reserve(&mut self, bytes: u64) -> Result<()> {
        let want = self.used.saturating_add(bytes);
        if want > self.limit {
            return Err(Error::OutOfBudget {
                requested: want,
                budget: self.limit,
            });
        }
        self.used = want;
        Ok(())
    }

    pub fn used(&self) -> u64 {
        self.used
    }
}

/// Partitions `lo..hi` of one partitioned object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRead {
    pub key: ObjectKey,
    pub lo: usize,
    pub hi: usize,
    /// Partitioner identity the object must carry, if any.
    #[serde(default)]
    pub fingerprint: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Columns of base-table objects, with optional statistics pruning.
    Scan {
        table_schema: Schema,
        objects: Vec<ObjectKey>,
        columns: Vec<String>,
        #[serde(default)]
        prune: Vec<PruneTerm>,
    },
    /// Partition ranges of intermediate objects, concatenated in order.
    Parts(Vec<PartRead>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedExpr {
    pub name: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    pub column: String,
    #[serde(default)]
    pub descending: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinOp {
    pub build: Vec<PartRead>,
    pub probe_keys: Vec<String>,
    pub build_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Filter(Expr),
    Project(Vec<NamedExpr>),
    Join(JoinOp),
    PartialAggregate(AggSpec),
    FinalAggregate(AggSpec),
    Sort(Vec<SortKey>),
    Limit(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sink {
    /// Hash-partition rows by `keys`.
    Hash {
        output: ObjectKey,
        keys: Vec<String>,
        partitions: usize,
        seed: u64,
    },
    /// Everything in one partition.
    Single { output: ObjectKey },
    /// Shuffle combiner: output partition `j` holds input partition `lo + j`
    /// of every input, in input order. All inputs must share `lo..hi`.
    Regroup { output: ObjectKey, fingerprint: u64 },
}

impl Sink {
    pub fn output(&self) -> &ObjectKey {
        match self {
            Sink::Hash { output, .. } | Sink::Single { output } | Sink::Regroup { output, .. } => output,
        }
    }
}

/// Injected misbehavior for testing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Fault {
    /// Attempts numbered below this fail just before writing output.
    pub fail_attempts: u32,
    /// Extra delay before writing output.
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Billing account, one per query execution.
    pub account: String,
    pub stage: String,
    pub task: usize,
    #[serde(default)]
    pub attempt: u32,
    pub source: Source,
    #[serde(default)]
    pub ops: Vec<Op>,
    pub sink: Sink,
    #[serde(default)]
    pub mitigation: MitigationConfig,
    #[serde(default)]
    pub format: FormatOptions,
    pub max_memory: u64,
    /// Modeled CPU time per row handled by the scan and each operator.
    #[serde(default)]
    pub compute_ns_per_row: f64,
    /// How long reads wait for inputs that are not yet visible.
    #[serde(default)]
    pub poll_budget_ms: Option<f64>,
    #[serde(default)]
    pub fault: Option<Fault>,
}

impl TaskSpec {
    pub fn name(&self) -> String {
        format!("{}/{}#{}", self.stage, self.task, self.attempt)
    }

    /// Every object the task reads, scan or partition input first, then
    /// join build sides.
    pub fn input_keys(&self) -> Vec<&ObjectKey> {
        let mut keys: Vec<&ObjectKey> = match &self.source {
            Source::Scan { objects, .. } => objects.iter().collect(),
            Source::Parts(reads) => reads.iter().map(|r| &r.key).collect(),
        };
        for op in &self.ops {
            if let Op::Join(j) = op {
                keys.extend(j.build.iter().map(|r| &r.key));
            }
        }
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub rows_in: u64,
    pub rows_out: u64,
    pub bytes_written: u64,
    pub compute_ms: f64,
    pub partitions: usize,
}

pub async fn run_task(spec: &TaskSpec, store: &SimObjectStore, stats: &StatsSink) -> Result<TaskOutput> {
    let mut io = TaskIo::new(store.clone(), spec.account.as_str(), spec.mitigation, stats.clone());
    if let Some(ms) = spec.poll_budget_ms {
        io = io.with_poll_budget(ms);
    }
    let mut mem = MemoryBudget::new(spec.max_memory);
    let mut processed = 0u64;

    let (parts, fingerprint, rows_in) = match &spec.sink {
        Sink::Regroup { fingerprint, .. } => {
            if !spec.ops.is_empty() {
                return Err(Error::InvalidTopology("combiner tasks take no operators".into()));
            }
            let Source::Parts(reads) = &spec.source else {
                return Err(Error::InvalidTopology("combiner needs partitioned inputs".into()));
            };
            let parts = regroup(reads, &io, &spec.format, &mut mem).await?;
            let rows: u64 = parts.iter().map(|b| b.num_rows() as u64).sum();
            processed += rows;
            (parts, *fingerprint, rows)
        }
        sink => {
            let mut batch = read_source(&spec.source, &io, &spec.format, &mut mem).await?;
            let rows_in = batch.num_rows() as u64;
            processed += rows_in;
            for op in &spec.ops {
                batch = apply(op, batch, &io, &spec.format, &mut mem, &mut processed).await?;
            }
            match sink {
                Sink::Hash {
                    keys, partitions, seed, ..
                } => {
                    let p = HashPartitioner {
                        keys: keys.clone(),
                        partitions: *partitions,
                        seed: *seed,
                    };
                    (p.split(&batch)?, p.fingerprint(), rows_in)
                }
                _ => (vec![batch], 0, rows_in),
            }
        }
    };

    let clock = store.clock();
    let compute_ms = processed as f64 * spec.compute_ns_per_row / 1e6;
    clock.sleep(compute_ms).await;
    if let Some(f) = spec.fault {
        clock.sleep(f.delay_ms).await;
        if spec.attempt < f.fail_attempts {
            return Err(Error::TaskFailed {
                task: spec.name(),
                detail: "injected failure".into(),
            });
        }
    }

    let rows_out = parts.iter().map(|b| b.num_rows() as u64).sum();
    let payload = write_partitioned(&parts, fingerprint, &spec.format)?;
    let bytes_written = payload.len() as u64;
    io.write(spec.sink.output(), payload).await;
    Ok(TaskOutput {
        rows_in,
        rows_out,
        bytes_written,
        compute_ms,
        partitions: parts.len(),
    })
}

async fn read_parts(
    reads: &[PartRead],
    io: &TaskIo,
    opts: &FormatOptions,
    mem: &mut MemoryBudget,
) -> Result<(SchemaRef, Vec<Vec<RowBatch>>)> {
    if reads.is_empty() {
        return Err(Error::InvalidTopology("no inputs to read".into()));
    }
    let results = try_join_all(reads.iter().map(|r| async move {
        let (meta, parts) = read_partitions(io, &r.key, r.lo, r.hi, opts).await?;
        if let Some(expected) = r.fingerprint {
            if meta.fingerprint != expected {
                return Err(Error::PartitionMismatch {
                    expected,
                    found: meta.fingerprint,
                });
            }
        }
        Ok((meta.schema, parts))
    }))
    .await?;
    let schema = results[0].0.clone();
    let mut out = Vec::with_capacity(results.len());
    for (s, parts) in results {
        if !s.logical_eq(&schema) {
            return Err(Error::SchemaMismatch(format!("inputs disagree: {s:?} vs {schema:?}")));
        }
        for b in &parts {
            mem.reserve(b.approx_bytes())?;
        }
        out.push(parts);
    }
    Ok((schema, out))
}

async fn read_concat(
    reads: &[PartRead],
    io: &TaskIo,
    opts: &FormatOptions,
    mem: &mut MemoryBudget,
) -> Result<RowBatch> {
    let (schema, parts) = read_parts(reads, io, opts, mem).await?;
    let flat: Vec<RowBatch> = parts.into_iter().flatten().collect();
    RowBatch::concat(&schema, &flat)
}

async fn regroup(
    reads: &[PartRead],
    io: &TaskIo,
    opts: &FormatOptions,
    mem: &mut MemoryBudget,
) -> Result<Vec<RowBatch>> {
    let (lo, hi) = (reads.first().map_or(0, |r| r.lo), reads.first().map_or(0, |r| r.hi));
    if reads.iter().any(|r| r.lo != lo || r.hi != hi) {
        return Err(Error::InvalidTopology("combiner inputs cover different partitions".into()));
    }
    let (schema, parts) = read_parts(reads, io, opts, mem).await?;
    (0..hi - lo)
        .map(|j| {
            let column: Vec<RowBatch> = parts.iter().map(|p| p[j].clone()).collect();
            RowBatch::concat(&schema, &column)
        })
        .collect()
}

async fn read_source(
    source: &Source,
    io: &TaskIo,
    opts: &FormatOptions,
    mem: &mut MemoryBudget,
) -> Result<RowBatch> {
    match source {
        Source::Parts(reads) => read_concat(reads, io, opts, mem).await,
        Source::Scan {
            table_schema,
            objects,
            columns,
            prune,
        } => {
            let indices = columns
                .iter()
                .map(|c| table_schema.index_of(c))
                .collect::<Result<Vec<_>>>()?;
            let schema = Arc::new(table_schema.project(&indices)?);
            let batches = try_join_all(
                objects
                    .iter()
                    .map(|key| scan_base_table(io, key, columns, prune, opts)),
            )
            .await?;
            for b in &batches {
                mem.reserve(b.approx_bytes())?;
            }
            RowBatch::concat(&schema, &batches)
        }
    }
}

async fn apply(
    op: &Op,
    batch: RowBatch,
    io: &TaskIo,
    opts: &FormatOptions,
    mem: &mut MemoryBudget,
    processed: &mut u64,
) -> Result<RowBatch> {
    *processed += batch.num_rows() as u64;
    match op {
        Op::Filter(pred) => filter(&batch, pred),
        Op::Project(exprs) => project(&batch, exprs),
        Op::Join(j) => {
            let build = read_concat(&j.build, io, opts, mem).await?;
            *processed += build.num_rows() as u64;
            join::hash_join(&batch, &build, &j.probe_keys, &j.build_keys, mem)
        }
        Op::PartialAggregate(spec) => spec.partial(&batch, mem),
        Op::FinalAggregate(spec) => spec.finish(&batch, mem),
        Op::Sort(keys) => sort(&batch, keys),
        Op::Limit(n) => {
            let keep: Vec<u32> = (0..batch.num_rows().min(*n) as u32).collect();
            Ok(batch.take(&keep))
        }
    }
}

pub fn filter(batch: &RowBatch, pred: &Expr) -> Result<RowBatch> {
    let mask = pred.eval(batch)?;
    let crate::format::ColumnData::Bool(v) = &mask.data else {
        return Err(Error::Type("filter predicate is not boolean".into()));
    };
    let keep: Vec<u32> = (0..batch.num_rows())
        .filter(|&i| v[i] && mask.is_valid(i))
        .map(|i| i as u32)
        .collect();
    if keep.len() == batch.num_rows() {
        return Ok(batch.clone());
    }
    Ok(batch.take(&keep))
}

pub fn project(batch: &RowBatch, exprs: &[NamedExpr]) -> Result<RowBatch> {
    let input = batch.schema();
    let mut fields = Vec::with_capacity(exprs.len());
    let mut columns = Vec::with_capacity(exprs.len());
    for ne in exprs {
        let field = match &ne.expr {
            Expr::Col(c) => {
                let f = input.field(input.index_of(c)?);
                Field::new(ne.name.clone(), f.data_type, f.nullable)
            }
            e => Field::new(ne.name.clone(), e.data_type(input)?.unwrap_or(crate::format::DataType::Int64), true),
        };
        fields.push(field);
        columns.push(ne.expr.eval(batch)?);
    }
    let schema = Arc::new(Schema::new(fields)?);
    if batch.num_rows() == 0 {
        return Ok(RowBatch::empty(schema));
    }
    RowBatch::try_new(schema, columns)
}

pub fn sort(batch: &RowBatch, keys: &[SortKey]) -> Result<RowBatch> {
    let cols = keys
        .iter()
        .map(|k| Ok((batch.column_by_name(&k.column)?, k.descending)))
        .collect::<Result<Vec<_>>>()?;
    let mut idx: Vec<u32> = (0..batch.num_rows() as u32).collect();
    idx.sort_by(|&a, &b| {
        for (c, desc) in &cols {
            let (a, b) = (a as usize, b as usize);
            // nulls sort first ascending
            let ord = match (c.is_valid(a), c.is_valid(b)) {
                (false, false) => std::cmp::Ordering::Equal,
                (false, true) => std::cmp::Ordering::Less,
                (true, false) => std::cmp::Ordering::Greater,
                (true, true) => agg::cell_cmp(c, a, b),
            };
            let ord = if *desc { ord.reverse() } else { ord };
            if ord.is_ne() {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    });
    Ok(batch.take(&idx))
}
