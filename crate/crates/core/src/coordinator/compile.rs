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

//! Lowering of a validated plan into task specs. Every object key a query
//! will read or write is fixed here, before anything runs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::plan::{PhysicalPlan, PlanJoin, PlanOp, PlanStage, StageInput, StageOutput};
use crate::config::EngineConfig;
use crate::error::Result;
use crate::exec::{partitioner_fingerprint, Fault, JoinOp, Op, PartRead, Sink, Source, TaskSpec};
use crate::format::Catalog;
use crate::shuffle::{group_bounds, plan_multistage, CombinerSpec, ShuffleTopology, TopologyKind};
use crate::storesim::ObjectKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledStage {
    pub id: String,
    /// Indices into [`CompiledPlan::stages`].
    pub deps: Vec<usize>,
    pub pipeline: Option<f64>,
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledPlan {
    pub query: String,
    pub exec_id: String,
    pub hash_seed: u64,
    /// Producers before consumers; combiner stages sit right before the
    /// stage they feed.
    pub stages: Vec<CompiledStage>,
    pub result_key: ObjectKey,
}

impl CompiledPlan {
    /// Every key written by the query, in stage order.
    pub fn output_keys(&self) -> Vec<ObjectKey> {
        self.stages
            .iter()
            .flat_map(|s| s.tasks.iter().map(|t| t.sink.output().clone()))
            .collect()
    }

    /// Lines of `stage/task read|write bucket/key`, one per object touched,
    /// in stage and task order. Duplicate reads of one object are listed
    /// once per task.
    pub fn key_manifest(&self) -> String {
        let mut out = String::new();
        for s in &self.stages {
            for t in &s.tasks {
                let mut seen = std::collections::BTreeSet::new();
                for k in t.input_keys() {
                    if seen.insert(k) {
                        out.push_str(&format!("{}/{} read {}\n", s.id, t.task, k));
                    }
                }
                out.push_str(&format!("{}/{} write {}\n", s.id, t.task, t.sink.output()));
            }
        }
        out
    }
}

/// Seed of the query's hash partitioners.
pub fn hash_seed(query: &str, run_seed: u64) -> u64 {
    xxh3_64_with_seed(query.as_bytes(), run_seed)
}

pub fn intermediate_key(bucket: &str, exec_id: &str, stage: &str, task: usize) -> ObjectKey {
    ObjectKey::new(bucket, format!("intermediate/{exec_id}/{stage}/{task}"))
}

pub fn result_key(bucket: &str, exec_id: &str) -> ObjectKey {
    ObjectKey::new(bucket, format!("{exec_id}/result"))
}

struct Lowered<'a> {
    plan: &'a PhysicalPlan,
    cfg: &'a EngineConfig,
    exec_id: &'a str,
    seed: u64,
    terminal: &'a str,
    /// Plan stage id to compiled index.
    index: BTreeMap<String, usize>,
    /// Combiners between a partitioned producer and its consumer.
    combiners: BTreeMap<String, Vec<CombinerSpec>>,
    stages: Vec<CompiledStage>,
}

impl<'a> Lowered<'a> {
    fn output_key(&self, stage: &str, task: usize) -> ObjectKey {
        if stage == self.terminal {
            result_key(&self.cfg.bucket, self.exec_id)
        } else {
            intermediate_key(&self.cfg.bucket, self.exec_id, stage, task)
        }
    }

    fn stage(&self, id: &str) -> &'a PlanStage {
        self.plan.stage(id).expect("validated")
    }

    fn fingerprint(&self, consumer: &PlanStage) -> u64 {
        partitioner_fingerprint(self.seed, consumer.tasks)
    }

    /// What task `i` of `consumer` reads from `producer`. `gather` splits
    /// unpartitioned producer objects across consumer tasks instead of
    /// handing every task all of them.
    fn reads(&self, producer: &PlanStage, consumer: &PlanStage, i: usize, gather: bool) -> Vec<PartRead> {
        match &producer.output {
            StageOutput::Partition { .. } => {
                let fp = Some(self.fingerprint(consumer));
                match self.combiners.get(&producer.id) {
                    Some(combs) => combs
                        .iter()
                        .filter(|c| c.partition_group.0 <= i && i < c.partition_group.1)
                        .map(|c| PartRead {
                            key: c.output_key.clone(),
                            lo: i - c.partition_group.0,
                            hi: i - c.partition_group.0 + 1,
                            fingerprint: fp,
                        })
                        .collect(),
                    None => (0..producer.tasks)
                        .map(|j| PartRead {
                            key: self.output_key(&producer.id, j),
                            lo: i,
                            hi: i + 1,
                            fingerprint: fp,
                        })
                        .collect(),
                }
            }
            StageOutput::Single => {
                let (lo, hi) = if gather {
                    group_bounds(producer.tasks as u64, consumer.tasks as u64, i as u64)
                } else {
                    (0, producer.tasks)
                };
                (lo..hi)
                    .map(|j| PartRead {
                        key: self.output_key(&producer.id, j),
                        lo: 0,
                        hi: 1,
                        fingerprint: None,
                    })
                    .collect()
            }
        }
    }

    fn base_spec(&self, stage: &str, task: usize, source: Source, ops: Vec<Op>, sink: Sink) -> TaskSpec {
        TaskSpec {
            account: self.exec_id.to_string(),
            stage: stage.to_string(),
            task,
            attempt: 0,
            source,
            ops,
            sink,
            mitigation: self.cfg.mitigation,
            format: self.cfg.format,
            max_memory: self.cfg.limits.max_memory,
            compute_ns_per_row: self.cfg.compute_ns_per_row,
            poll_budget_ms: None,
            fault: None,
        }
    }

    fn pipeline_of(&self, s: &PlanStage) -> Option<f64> {
        s.pipeline
            .or(self.cfg.pipelining.then_some(self.cfg.pipeline_threshold))
    }

    fn push(&mut self, id: String, deps: Vec<usize>, pipeline: Option<f64>, mut tasks: Vec<TaskSpec>) {
        if pipeline.is_some_and(|t| t < 1.0) {
            // Early consumers wait on inputs for as long as they may run.
            for t in &mut tasks {
                t.poll_budget_ms = Some(self.cfg.limits.max_duration_ms);
            }
        }
        self.index.insert(id.clone(), self.stages.len());
        self.stages.push(CompiledStage {
            id,
            deps,
            pipeline,
            tasks,
        });
    }

    fn lower_combiners(&mut self, producer: &'a PlanStage, consumer: &'a PlanStage) -> Result<()> {
        let topo = ShuffleTopology::from_spec(consumer.shuffle, producer.tasks as u64, consumer.tasks as u64)?;
        if topo.kind != TopologyKind::Multistage {
            return Ok(());
        }
        let id = format!("{}.comb", producer.id);
        let prefix = format!("intermediate/{}/{id}", self.exec_id);
        let combs = plan_multistage(&topo, &self.cfg.bucket, &prefix)?;
        let fp = self.fingerprint(consumer);
        let tasks = combs
            .iter()
            .map(|c| {
                let reads = (c.file_group.0..c.file_group.1)
                    .map(|j| PartRead {
                        key: self.output_key(&producer.id, j),
                        lo: c.partition_group.0,
                        hi: c.partition_group.1,
                        fingerprint: Some(fp),
                    })
                    .collect();
                let sink = Sink::Regroup {
                    output: c.output_key.clone(),
                    fingerprint: fp,
                };
                self.base_spec(&id, c.index, Source::Parts(reads), Vec::new(), sink)
            })
            .collect();
        let deps = vec![self.index[&producer.id]];
        self.push(id, deps, self.pipeline_of(consumer), tasks);
        self.combiners.insert(producer.id.clone(), combs);
        Ok(())
    }

    fn lower_stage(&mut self, s: &'a PlanStage, catalog: &Catalog) -> Result<()> {
        for d in s.dependencies() {
            let p = self.stage(d);
            if p.is_partitioned() {
                self.lower_combiners(p, s)?;
            }
        }
        let deps: Vec<usize> = s
            .dependencies()
            .iter()
            .map(|d| match self.combiners.contains_key(*d) {
                true => self.index[&format!("{d}.comb")],
                false => self.index[*d],
            })
            .collect();

        let consumer_tasks = self.plan.consumers(&s.id).first().map_or(1, |c| c.tasks);
        let mut tasks = Vec::with_capacity(s.tasks);
        for i in 0..s.tasks {
            let source = match &s.input {
                StageInput::Table { name, columns, prune } => {
                    let entry = catalog.table(name)?;
                    let (lo, hi) = group_bounds(entry.objects.len() as u64, s.tasks as u64, i as u64);
                    Source::Scan {
                        table_schema: entry.schema.clone(),
                        objects: entry.objects[lo..hi].to_vec(),
                        columns: columns.clone(),
                        prune: prune.clone(),
                    }
                }
                StageInput::Stage(src) => Source::Parts(self.reads(self.stage(src), s, i, true)),
            };
            let ops = s
                .ops
                .iter()
                .map(|op| self.lower_op(op, s, i))
                .collect();
            let output = self.output_key(&s.id, i);
            let sink = match &s.output {
                StageOutput::Single => Sink::Single { output },
                StageOutput::Partition { keys } => Sink::Hash {
                    output,
                    keys: keys.clone(),
                    partitions: consumer_tasks,
                    seed: self.seed,
                },
            };
            let mut spec = self.base_spec(&s.id, i, source, ops, sink);
            spec.fault = s.faults.iter().find(|f| f.task == i).map(|f| Fault {
                fail_attempts: f.fail_attempts,
                delay_ms: f.delay_ms,
            });
            tasks.push(spec);
        }
        self.push(s.id.clone(), deps, self.pipeline_of(s), tasks);
        Ok(())
    }

    fn lower_op(&self, op: &PlanOp, s: &PlanStage, i: usize) -> Op {
        match op {
            PlanOp::Filter(e) => Op::Filter(e.clone()),
            PlanOp::Project(p) => Op::Project(p.clone()),
            PlanOp::Join(PlanJoin {
                build,
                probe_keys,
                build_keys,
            }) => {
                let b = self.stage(build.as_deref().expect("validated"));
                Op::Join(JoinOp {
                    build: self.reads(b, s, i, false),
                    probe_keys: probe_keys.clone(),
                    build_keys: build_keys.clone(),
                })
            }
            PlanOp::PartialAggregate(a) => Op::PartialAggregate(a.clone()),
            PlanOp::FinalAggregate(a) => Op::FinalAggregate(a.clone()),
            PlanOp::Sort(k) => Op::Sort(k.clone()),
            PlanOp::Limit(n) => Op::Limit(*n),
        }
    }
}

/// Lower `plan` for one execution named `exec_id`.
pub fn compile(plan: &PhysicalPlan, catalog: &Catalog, cfg: &EngineConfig, exec_id: &str) -> Result<CompiledPlan> {
    plan.validate()?;
    let order = plan.topo_order()?;
    let mut l = Lowered {
        plan,
        cfg,
        exec_id,
        seed: hash_seed(&plan.query, cfg.seed),
        terminal: &plan.terminal().id,
        index: BTreeMap::new(),
        combiners: BTreeMap::new(),
        stages: Vec::new(),
    };
    for i in order {
        l.lower_stage(&plan.stages[i], catalog)?;
    }
    Ok(CompiledPlan {
        query: plan.query.clone(),
        exec_id: exec_id.to_string(),
        hash_seed: l.seed,
        stages: l.stages,
        result_key: result_key(&cfg.bucket, exec_id),
    })
}
