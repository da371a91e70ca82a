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

//! The coordinator: compiles plans, schedules their stages on the function
//! runtime, retries failed tasks and assembles query reports.

mod compile;
mod plan;
mod report;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use futures::future::join_all;
use tokio::sync::mpsc;
use xxhash_rust::xxh3::xxh3_64;

pub use compile::{compile, hash_seed, intermediate_key, result_key, CompiledPlan, CompiledStage};
pub use plan::{PhysicalPlan, PlanJoin, PlanOp, PlanStage, StageInput, StageOutput, TaskFault};
pub use report::{InvocationTrace, QueryReport, StageReport};

use crate::clock::SimClock;
use crate::config::EngineConfig;
use crate::cost::CostBreakdown;
use crate::error::{Error, Result};
use crate::exec::{run_task, TaskOutput, TaskSpec};
use crate::format::{read_partitions, Catalog, RowBatch};
use crate::mitigation::{StatsSink, TaskIo};
use crate::runtime::{FunctionRuntime, InvocationResult, InvocationStatus};
use crate::storesim::SimObjectStore;

/// Shared execution environment: one store, one runtime cap, one catalog.
/// Queries run through the same engine compete for the same slots.
#[derive(Clone)]
pub struct Engine {
    config: Arc<EngineConfig>,
    store: SimObjectStore,
    runtime: FunctionRuntime,
    catalog: Arc<Catalog>,
    next_exec: Arc<AtomicU64>,
}

struct StageState {
    submitted: bool,
    done: Vec<bool>,
    attempts: Vec<u32>,
    completed: usize,
    started_at: f64,
    finished_at: f64,
    retries: u32,
    rows_out: u64,
}

impl Engine {
    /// Must be called inside the simulation runtime; the store's ledger
    /// also receives invocation billing.
    pub fn new(config: EngineConfig, store: SimObjectStore, catalog: Catalog) -> Result<Self> {
        config.validate()?;
        let runtime = FunctionRuntime::new(store.clock().clone(), store.ledger().clone(), config.limits);
        Ok(Self {
            config: Arc::new(config),
            store,
            runtime,
            catalog: Arc::new(catalog),
            next_exec: Arc::new(AtomicU64::new(0)),
        })
    }

    /// Fresh store and runtime on a clock started now. Call inside a runtime
    /// built by the config's clock mode.
    pub fn create(config: EngineConfig, catalog: Catalog) -> Result<Self> {
        config.validate()?;
        let clock = SimClock::start(config.clock);
        let store = SimObjectStore::new(clock, config.store_profile());
        Self::new(config, store, catalog)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &SimObjectStore {
        &self.store
    }

    pub fn runtime(&self) -> &FunctionRuntime {
        &self.runtime
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    fn fresh_exec_id(&self, query: &str) -> String {
        let n = self.next_exec.fetch_add(1, Ordering::SeqCst);
        format!("{query}-{n}")
    }

    pub fn compile(&self, plan: &PhysicalPlan, exec_id: &str) -> Result<CompiledPlan> {
        compile(plan, &self.catalog, &self.config, exec_id)
    }

    /// Run `plan` to completion; a query whose task exhausts its retries
    /// becomes [`Error::QueryFailed`].
    pub async fn execute(&self, plan: &PhysicalPlan) -> Result<QueryReport> {
        let report = self.run(plan).await?;
        match &report.failure {
            None => Ok(report),
            Some(detail) => Err(Error::QueryFailed {
                query: report.exec_id.clone(),
                detail: detail.clone(),
            }),
        }
    }

    /// Like [`Engine::execute`] but a failed query still yields its partial
    /// report. Errors only for plans that fail to compile.
    pub async fn run(&self, plan: &PhysicalPlan) -> Result<QueryReport> {
        let exec_id = self.fresh_exec_id(&plan.query);
        let compiled = self.compile(plan, &exec_id)?;
        Ok(self.run_compiled(&compiled).await)
    }

    /// Run several plans at once over the shared cap. Admission stays FIFO
    /// across queries; one failing query does not disturb the others.
    pub async fn run_concurrent(&self, plans: &[PhysicalPlan]) -> Vec<Result<QueryReport>> {
        join_all(plans.iter().map(|p| self.execute(p))).await
    }

    pub async fn run_compiled(&self, plan: &CompiledPlan) -> QueryReport {
        let clock = self.store.clock().clone();
        let started_at = clock.now();
        let stats = StatsSink::new();
        let mut traces = Vec::new();
        let mut states: Vec<StageState> = plan
            .stages
            .iter()
            .map(|s| StageState {
                submitted: false,
                done: vec![false; s.tasks.len()],
                attempts: vec![0; s.tasks.len()],
                completed: 0,
                started_at,
                finished_at: started_at,
                retries: 0,
                rows_out: 0,
            })
            .collect();

        let failure = self.schedule(plan, &stats, &mut states, &mut traces).await.err();
        let (result, failure) = match failure {
            Some(e) => (None, Some(e.to_string())),
            None => match self.fetch_result(plan, &stats).await {
                Ok(b) => (Some(b), None),
                Err(e) => (None, Some(e.to_string())),
            },
        };
        let latency_ms = clock.now() - started_at;

        let counts = self.store.ledger().snapshot(&plan.exec_id);
        let cost = CostBreakdown::from_counts(&counts, &self.config.prices, latency_ms.ceil() as u64);
        let mut mitigation = stats.snapshot();
        mitigation.extra_request_dollars = mitigation.extra_dollars(&self.config.prices);
        let stages = plan
            .stages
            .iter()
            .zip(&states)
            .map(|(s, st)| StageReport {
                id: s.id.clone(),
                tasks: s.tasks.len(),
                started_at: st.started_at,
                finished_at: st.finished_at,
                latency_ms: st.finished_at - st.started_at,
                retries: st.retries,
                rows_out: st.rows_out,
            })
            .collect();
        let result_digest = self.store.peek(&plan.result_key).map_or(0, |b| xxh3_64(&b));
        QueryReport {
            query: plan.query.clone(),
            exec_id: plan.exec_id.clone(),
            succeeded: failure.is_none(),
            failure,
            started_at,
            latency_ms,
            stages,
            counts,
            cost,
            mitigation,
            core_seconds: traces.iter().map(|t: &InvocationTrace| t.duration_ms).sum::<f64>() / 1000.0,
            retries: states.iter().map(|s| s.retries).sum(),
            invocations: traces,
            result_rows: result.as_ref().map_or(0, |b| b.num_rows() as u64),
            result_digest,
            result,
        }
    }

    /// The single coordinator loop: launch runnable stages, then consume
    /// completions until every task has succeeded or one is out of retries.
    async fn schedule(
        &self,
        plan: &CompiledPlan,
        stats: &StatsSink,
        states: &mut [StageState],
        traces: &mut Vec<InvocationTrace>,
    ) -> Result<()> {
        let (tx, mut rx) = mpsc::unbounded_channel::<InvocationResult<TaskOutput>>();
        let mut names: HashMap<String, (usize, usize)> = HashMap::new();
        let mut outstanding = 0usize;
        let clock = self.store.clock().clone();

        loop {
            // Stages become runnable in topological order; those that become
            // runnable together are interleaved task by task.
            let mut ready = Vec::new();
            for (i, s) in plan.stages.iter().enumerate() {
                if states[i].submitted {
                    continue;
                }
                let runnable = s.deps.iter().all(|&d| {
                    let dep = &states[d];
                    let n = dep.done.len();
                    match s.pipeline {
                        Some(t) if t < 1.0 => dep.submitted && dep.completed as f64 >= t * n as f64,
                        _ => dep.completed == n,
                    }
                });
                if runnable {
                    states[i].submitted = true;
                    states[i].started_at = clock.now();
                    ready.push(i);
                }
            }
            let widest = ready.iter().map(|&i| plan.stages[i].tasks.len()).max().unwrap_or(0);
            for k in 0..widest {
                for &i in &ready {
                    if let Some(spec) = plan.stages[i].tasks.get(k) {
                        names.insert(spec.name(), (i, k));
                        self.submit(spec.clone(), stats, &tx);
                        outstanding += 1;
                    }
                }
            }

            if states.iter().zip(&plan.stages).all(|(st, s)| st.completed == s.tasks.len()) {
                return Ok(());
            }
            if outstanding == 0 {
                return Err(Error::QueryFailed {
                    query: plan.exec_id.clone(),
                    detail: "no runnable stage".into(),
                });
            }
            let res = rx.recv().await.expect("sender held by this loop");
            outstanding -= 1;
            traces.push(InvocationTrace {
                task: res.task.clone(),
                status: res.status,
                started_at: res.started_at,
                finished_at: res.finished_at,
                duration_ms: res.duration_ms,
                billed_ms: res.billed_ms,
            });
            let (si, ti) = names[&res.task];
            let st = &mut states[si];
            match (res.status, res.output) {
                (InvocationStatus::Ok, Some(out)) => {
                    if !st.done[ti] {
                        st.done[ti] = true;
                        st.completed += 1;
                        st.rows_out += out.rows_out;
                        st.finished_at = res.finished_at;
                    }
                }
                _ => {
                    let detail = res.error.map_or_else(|| format!("{:?}", res.status), |e| e.to_string());
                    tracing::debug!(task = %res.task, %detail, "task failed");
                    if st.attempts[ti] >= self.config.task_retries {
                        return Err(Error::TaskFailed { task: res.task, detail });
                    }
                    st.attempts[ti] += 1;
                    st.retries += 1;
                    let mut spec = plan.stages[si].tasks[ti].clone();
                    spec.attempt = st.attempts[ti];
                    names.insert(spec.name(), (si, ti));
                    self.submit(spec, stats, &tx);
                    outstanding += 1;
                }
            }
        }
    }

    fn submit(&self, spec: TaskSpec, stats: &StatsSink, tx: &mpsc::UnboundedSender<InvocationResult<TaskOutput>>) {
        let store = self.store.clone();
        let stats = stats.clone();
        let name = spec.name();
        let account = spec.account.clone();
        self.runtime.invoke(
            &account,
            name,
            async move { run_task(&spec, &store, &stats).await },
            tx.clone(),
        );
    }

    /// Read the terminal stage's object back through the store, as a client
    /// would, with the query's mitigation settings.
    async fn fetch_result(&self, plan: &CompiledPlan, stats: &StatsSink) -> Result<RowBatch> {
        let io = TaskIo::new(
            self.store.clone(),
            plan.exec_id.as_str(),
            self.config.mitigation,
            stats.clone(),
        );
        let (meta, parts) = read_partitions(&io, &plan.result_key, 0, 1, &self.config.format).await?;
        RowBatch::concat(&meta.schema, &parts)
    }
}
