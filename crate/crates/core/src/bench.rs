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

//! Microbenchmarks and plan sweeps. Every function returns per-sample rows
//! so that summary numbers can be recomputed from what is emitted.

use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::config::EngineConfig;
use crate::coordinator::{Engine, PhysicalPlan, QueryReport};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::mitigation::{MitigationConfig, StatsSink, TaskIo, WsmMode};
use crate::shuffle::{estimate_cost, ShuffleSpec, ShuffleTopology, TopologyKind};
use crate::storesim::{ByteRange, ObjectKey, RequestKind, RequestOutcome, RequestRecord, SimObjectStore};
use crate::clock::SimClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchKind {
    ReadCdf,
    WriteCdf,
    Ablation,
    ShuffleCost,
    Tradeoff,
}

impl BenchKind {
    pub const ALL: [BenchKind; 5] = [
        BenchKind::ReadCdf,
        BenchKind::WriteCdf,
        BenchKind::Ablation,
        BenchKind::ShuffleCost,
        BenchKind::Tradeoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchKind::ReadCdf => "read-cdf",
            BenchKind::WriteCdf => "write-cdf",
            BenchKind::Ablation => "ablation",
            BenchKind::ShuffleCost => "shuffle-cost",
            BenchKind::Tradeoff => "tradeoff",
        }
    }
}

impl FromStr for BenchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownBench(s.to_string()))
    }
}

/// Serialize `rows` as CSV with a header line.
pub fn write_csv<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One store request, flattened for CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub run: String,
    pub account: String,
    pub kind: RequestKind,
    pub bucket: String,
    pub key: String,
    pub bytes: u64,
    pub issued_at: f64,
    pub completed_at: f64,
    pub duplicate: bool,
    pub outcome: RequestOutcome,
}

pub fn trace_rows(run: &str, records: &[RequestRecord]) -> Vec<TraceRow> {
    records
        .iter()
        .map(|r| TraceRow {
            run: run.to_string(),
            account: r.account.clone(),
            kind: r.kind,
            bucket: r.key.bucket.clone(),
            key: r.key.key.clone(),
            bytes: r.bytes,
            issued_at: r.issued_at,
            completed_at: r.completed_at,
            duplicate: r.was_duplicate,
            outcome: r.outcome,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// request-level benches

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequestSampleRow {
    pub arm: String,
    pub index: u64,
    pub latency_ms: f64,
    pub hedged: bool,
}

fn block_on<T>(cfg: &EngineConfig, f: impl std::future::Future<Output = Result<T>>) -> Result<T> {
    cfg.clock.runtime()?.block_on(f)
}

/// `n` sequential reads of one `bytes`-sized object, with RSM off and then
/// on. Both arms see the same primary latency draws.
pub fn read_cdf(cfg: &EngineConfig, n: usize, bytes: u64) -> Result<Vec<RequestSampleRow>> {
    let mut rows = Vec::with_capacity(2 * n);
    for (arm, rsm) in [("rsm_off", false), ("rsm_on", true)] {
        let mitigation = MitigationConfig {
            rsm,
            ..cfg.mitigation
        };
        rows.extend(block_on(cfg, async {
            let clock = SimClock::start(cfg.clock);
            let store = SimObjectStore::new(clock.clone(), cfg.store_profile());
            let key = ObjectKey::new(&cfg.bucket, "bench/read");
            store.insert_raw(&key, vec![0; bytes as usize]);
            let stats = StatsSink::new();
            let io = TaskIo::new(store, "bench", mitigation, stats.clone());
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let before = stats.snapshot().reads_hedged;
                let t0 = clock.now();
                io.read(&key, ByteRange::Full).await?;
                out.push(RequestSampleRow {
                    arm: arm.to_string(),
                    index: i as u64,
                    latency_ms: clock.now() - t0,
                    hedged: stats.snapshot().reads_hedged > before,
                });
            }
            Ok(out)
        })?);
    }
    Ok(rows)
}

/// `n` sequential writes of `bytes` to distinct keys under each WSM mode,
/// doublewrite off. Arms share primary latency draws.
pub fn write_cdf(cfg: &EngineConfig, n: usize, bytes: u64) -> Result<Vec<RequestSampleRow>> {
    let payload: Arc<[u8]> = vec![0u8; bytes as usize].into();
    let mut rows = Vec::with_capacity(3 * n);
    for (arm, wsm) in [("wsm_off", WsmMode::Off), ("wsm_single", WsmMode::Single), ("wsm_full", WsmMode::Full)] {
        let mitigation = MitigationConfig {
            wsm,
            doublewrite: false,
            ..cfg.mitigation
        };
        let payload = payload.clone();
        rows.extend(block_on(cfg, async move {
            let clock = SimClock::start(cfg.clock);
            let store = SimObjectStore::new(clock.clone(), cfg.store_profile());
            let stats = StatsSink::new();
            let io = TaskIo::new(store, "bench", mitigation, stats.clone());
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let key = ObjectKey::new(&cfg.bucket, format!("bench/write/{i}"));
                let before = stats.snapshot().writes_hedged;
                let t0 = clock.now();
                io.write(&key, payload.clone()).await;
                out.push(RequestSampleRow {
                    arm: arm.to_string(),
                    index: i as u64,
                    latency_ms: clock.now() - t0,
                    hedged: stats.snapshot().writes_hedged > before,
                });
            }
            Ok(out)
        })?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublewriteTrial {
    pub index: u64,
    /// Reader time from issue to payload.
    pub wait_ms: f64,
    /// Primary was not visible on the first read.
    pub fallback: bool,
    /// Neither copy was visible and the reader had to poll.
    pub both_invisible: bool,
}

/// Write-then-read trials: each writes one object (doublewritten when
/// `doublewrite` is set) and reads it back as soon as the write returns.
pub fn doublewrite_trials(cfg: &EngineConfig, n: usize, bytes: u64, doublewrite: bool) -> Result<Vec<DoublewriteTrial>> {
    let mitigation = MitigationConfig {
        doublewrite,
        ..cfg.mitigation
    };
    block_on(cfg, async {
        let clock = SimClock::start(cfg.clock);
        let store = SimObjectStore::new(clock.clone(), cfg.store_profile());
        let writer = TaskIo::new(store.clone(), "bench-writer", mitigation, StatsSink::new());
        let stats = StatsSink::new();
        let reader = TaskIo::new(store, "bench-reader", mitigation, stats.clone());
        let payload: Arc<[u8]> = vec![7u8; bytes as usize].into();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let key = ObjectKey::new(&cfg.bucket, format!("bench/dw/{i}"));
            writer.write(&key, payload.clone()).await;
            let before = stats.snapshot();
            let t0 = clock.now();
            reader.read(&key, ByteRange::Full).await?;
            let after = stats.snapshot();
            out.push(DoublewriteTrial {
                index: i as u64,
                wait_ms: clock.now() - t0,
                fallback: after.doublewrite_fallbacks > before.doublewrite_fallbacks
                    || after.poll_gets > before.poll_gets,
                both_invisible: after.both_invisible_waits > before.both_invisible_waits,
            });
        }
        Ok(out)
    })
}

// ---------------------------------------------------------------------------
// plan-level benches

/// A finished plan execution with its raw request trace.
#[derive(Debug, Clone)]
pub struct PlanRun {
    pub report: QueryReport,
    pub records: Vec<RequestRecord>,
    /// Highest concurrent invocation count seen by the runtime.
    pub peak_active: usize,
}

/// Execute `plan` once on a fresh engine holding `data`.
pub fn run_plan(cfg: &EngineConfig, data: &Dataset, plan: &PhysicalPlan) -> Result<PlanRun> {
    block_on(cfg, async {
        let engine = Engine::create(cfg.clone(), data.catalog.clone())?;
        data.install(engine.store());
        let report = engine.run(plan).await?;
        let records = engine.store().records_for(&report.exec_id);
        Ok(PlanRun {
            report,
            records,
            peak_active: engine.runtime().peak_active(),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub label: String,
    pub seed: u64,
    pub tasks: usize,
    pub succeeded: bool,
    pub latency_ms: f64,
    pub dollars: f64,
    pub get_dollars: f64,
    pub put_dollars: f64,
    pub storage_dollars: f64,
    pub invocation_dollars: f64,
    pub gets: u64,
    pub puts: u64,
    pub billed_ms: u64,
    pub core_seconds: f64,
    pub reads_hedged: u64,
    pub writes_hedged: u64,
    pub doublewrite_fallbacks: u64,
}

impl RunRow {
    pub fn new(label: &str, seed: u64, tasks: usize, r: &QueryReport) -> Self {
        Self {
            label: label.to_string(),
            seed,
            tasks,
            succeeded: r.succeeded,
            latency_ms: r.latency_ms,
            dollars: r.cost.total.dollars(),
            get_dollars: r.cost.get.dollars(),
            put_dollars: r.cost.put.dollars(),
            storage_dollars: r.cost.storage.dollars(),
            invocation_dollars: r.cost.invocation.dollars(),
            gets: r.counts.gets,
            puts: r.counts.puts,
            billed_ms: r.counts.billed_ms,
            core_seconds: r.core_seconds,
            reads_hedged: r.mitigation.reads_hedged,
            writes_hedged: r.mitigation.writes_hedged,
            doublewrite_fallbacks: r.mitigation.doublewrite_fallbacks,
        }
    }
}

/// Cumulative steps of the mitigation ablation.
pub const ABLATION_STEPS: [&str; 5] = ["none", "parallel_reads", "rsm", "wsm", "doublewrite"];

/// Mitigation settings for ablation step `step`, taking pool size, timers
/// and models from `base`.
pub fn ablation_config(base: &MitigationConfig, step: usize) -> MitigationConfig {
    MitigationConfig {
        parallel_reads: if step >= 1 { base.parallel_reads.max(2) } else { 1 },
        rsm: step >= 2,
        wsm: if step >= 3 { WsmMode::Full } else { WsmMode::Off },
        doublewrite: step >= 4,
        ..*base
    }
}

/// Run `plan` under each ablation step for each seed. Rows are ordered by
/// seed, then step; each seed's steps see the same latency draws.
pub fn ablation(
    cfg: &EngineConfig,
    data: &Dataset,
    plan: &PhysicalPlan,
    seeds: &[u64],
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<Vec<RunRow>> {
    let mut trace = trace;
    ablation_with(cfg, data, plan, seeds, &mut |step, seed, run| {
        if let Some(t) = trace.as_deref_mut() {
            t.extend(trace_rows(&format!("{step}/{seed}"), &run.records));
        }
    })
}

/// [`ablation`], handing every finished run to `observe` with its step
/// name and seed.
pub fn ablation_with(
    cfg: &EngineConfig,
    data: &Dataset,
    plan: &PhysicalPlan,
    seeds: &[u64],
    observe: &mut dyn FnMut(&str, u64, &PlanRun),
) -> Result<Vec<RunRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for (i, step) in ABLATION_STEPS.iter().enumerate() {
            let c = EngineConfig {
                mitigation: ablation_config(&cfg.mitigation, i),
                ..cfg.clone().with_seed(seed)
            };
            let run = run_plan(&c, data, plan)?;
            let tasks = run.report.stages.iter().map(|s| s.tasks).max().unwrap_or(0);
            observe(step, seed, &run);
            rows.push(RunRow::new(step, seed, tasks, &run.report));
        }
    }
    Ok(rows)
}

/// Mean latency and dollars per label, in first-seen order.
pub fn summarize(rows: &[RunRow]) -> Vec<(String, f64, f64)> {
    let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|o| o.0 == r.label) {
            Some(o) => {
                o.1 += r.latency_ms;
                o.2 += r.dollars;
                o.3 += 1;
            }
            None => out.push((r.label.clone(), r.latency_ms, r.dollars, 1)),
        }
    }
    out.into_iter().map(|(l, a, b, n)| (l, a / n as f64, b / n as f64)).collect()
}

/// Run `plan` with every non-terminal stage at each task count.
pub fn tradeoff(
    cfg: &EngineConfig,
    data: &Dataset,
    plan: &PhysicalPlan,
    task_counts: &[usize],
    seeds: &[u64],
    trace: Option<&mut Vec<TraceRow>>,
) -> Result<Vec<RunRow>> {
    let mut rows = Vec::new();
    let mut trace = trace;
    for &tasks in task_counts {
        let p = plan.clone().with_tasks(tasks);
        for &seed in seeds {
            let run = run_plan(&cfg.clone().with_seed(seed), data, &p)?;
            if let Some(t) = trace.as_deref_mut() {
                t.extend(trace_rows(&format!("{tasks}/{seed}"), &run.records));
            }
            rows.push(RunRow::new(&tasks.to_string(), seed, tasks, &run.report));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShuffleCostRow {
    pub s: u64,
    pub r: u64,
    pub kind: String,
    pub p: String,
    pub f: String,
    pub combiners: u64,
    pub gets: u64,
    pub puts: u64,
    pub get_dollars: f64,
    pub put_dollars: f64,
    pub total_dollars: f64,
}

/// Request counts and dollars of each shuffle, from the cost formulas.
pub fn shuffle_cost(
    points: &[(u64, u64, ShuffleSpec)],
    cfg: &EngineConfig,
) -> Result<Vec<ShuffleCostRow>> {
    points
        .iter()
        .map(|&(s, r, spec)| {
            let t = ShuffleTopology::from_spec(spec, s, r)?;
            let e = estimate_cost(&t, &cfg.prices, cfg.mitigation.doublewrite)?;
            Ok(ShuffleCostRow {
                s,
                r,
                kind: match t.kind {
                    TopologyKind::Standard => "standard",
                    TopologyKind::Multistage => "multistage",
                }
                .to_string(),
                p: t.p.to_string(),
                f: t.f.to_string(),
                combiners: t.combiner_count(),
                gets: e.get_count,
                puts: e.put_count,
                get_dollars: e.get_dollars.dollars(),
                put_dollars: e.put_dollars.dollars(),
                total_dollars: e.total().dollars(),
            })
        })
        .collect()
}

/// Producer/consumer sizes swept by default, each as standard and as
/// multistage with automatic fractions.
pub fn default_shuffle_points() -> Vec<(u64, u64, ShuffleSpec)> {
    let sizes = [(64, 16), (128, 32), (256, 64), (512, 128), (1024, 256), (2048, 512), (5120, 1280)];
    let mut out = Vec::new();
    for (s, r) in sizes {
        out.push((s, r, ShuffleSpec::Standard));
        out.push((s, r, ShuffleSpec::Multistage { p: None, f: None }));
    }
    out
}
