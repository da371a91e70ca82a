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

//! Physical plan files and their validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{AggSpec, Expr, NamedExpr, SortKey};
use crate::format::PruneTerm;
use crate::shuffle::{ShuffleSpec, ShuffleTopology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageInput {
    Table {
        name: String,
        columns: Vec<String>,
        #[serde(default)]
        prune: Vec<PruneTerm>,
    },
    Stage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutput {
    /// One unpartitioned object per task.
    Single,
    /// Hash-partitioned by `keys` into as many partitions as the consuming
    /// stage has tasks.
    Partition { keys: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJoin {
    /// Stage whose output is loaded into the hash table.
    #[serde(default)]
    pub build: Option<String>,
    pub probe_keys: Vec<String>,
    pub build_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanOp {
    Filter(Expr),
    Project(Vec<NamedExpr>),
    /// Partitioned when the build stage is hash partitioned, broadcast when
    /// it writes single objects.
    Join(PlanJoin),
    PartialAggregate(AggSpec),
    FinalAggregate(AggSpec),
    Sort(Vec<SortKey>),
    Limit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskFault {
    pub task: usize,
    #[serde(default)]
    pub fail_attempts: u32,
    #[serde(default)]
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStage {
    pub id: String,
    pub tasks: usize,
    pub input: StageInput,
    #[serde(default)]
    pub ops: Vec<PlanOp>,
    pub output: StageOutput,
    /// Topology of the shuffles feeding this stage.
    #[serde(default)]
    pub shuffle: ShuffleSpec,
    /// Start once this fraction of every producer's tasks has finished.
    #[serde(default)]
    pub pipeline: Option<f64>,
    #[serde(default)]
    pub faults: Vec<TaskFault>,
}

impl PlanStage {
    /// Upstream stages, input first then join build sides, without repeats.
    pub fn dependencies(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        if let StageInput::Stage(s) = &self.input {
            out.push(s);
        }
        for op in &self.ops {
            if let PlanOp::Join(PlanJoin { build: Some(b), .. }) = op {
                if !out.contains(&b.as_str()) {
                    out.push(b);
                }
            }
        }
        out
    }

    pub fn is_partitioned(&self) -> bool {
        matches!(self.output, StageOutput::Partition { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    pub query: String,
    pub stages: Vec<PlanStage>,
}

fn at(stage: &str) -> String {
    format!("stage {stage}")
}

impl PhysicalPlan {
    /// Parse and validate.
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: PhysicalPlan =
            serde_json::from_str(text).map_err(|e| Error::plan("plan file", e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::plan(path.display().to_string(), e.to_string()))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Copy with every stage but the terminal one set to `tasks` tasks.
    pub fn with_tasks(&self, tasks: usize) -> PhysicalPlan {
        let terminal = self.terminal().id.clone();
        let mut out = self.clone();
        for s in &mut out.stages {
            if s.id != terminal {
                s.tasks = tasks;
            }
        }
        out
    }

    pub fn stage_mut(&mut self, id: &str) -> Option<&mut PlanStage> {
        self.stages.iter_mut().find(|s| s.id == id)
    }

    pub fn stage(&self, id: &str) -> Option<&PlanStage> {
        self.stages.iter().find(|s| s.id == id)
    }

    /// (producer, consumer) pairs.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for s in &self.stages {
            for d in s.dependencies() {
                out.push((d.to_string(), s.id.clone()));
            }
        }
        out
    }

    pub fn consumers(&self, id: &str) -> Vec<&PlanStage> {
        self.stages
            .iter()
            .filter(|s| s.dependencies().contains(&id))
            .collect()
    }

    /// The stage nothing consumes. Valid plans have exactly one.
    pub fn terminal(&self) -> &PlanStage {
        self.stages
            .iter()
            .find(|s| self.consumers(&s.id).is_empty())
            .expect("validated plan has a terminal stage")
    }

    /// Stage indices with producers before consumers, ties broken by
    /// declaration order.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; self.stages.len()];
        for (i, s) in self.stages.iter().enumerate() {
            indegree[i] = s.dependencies().len();
        }
        let mut order = Vec::with_capacity(self.stages.len());
        let mut ready: BTreeSet<usize> = (0..self.stages.len()).filter(|&i| indegree[i] == 0).collect();
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for c in self.consumers(&self.stages[i].id) {
                let ci = index[c.id.as_str()];
                indegree[ci] -= 1;
                if indegree[ci] == 0 {
                    ready.insert(ci);
                }
            }
        }
        if order.len() != self.stages.len() {
            let stuck = (0..self.stages.len()).find(|i| !order.contains(i)).unwrap();
            return Err(Error::plan(at(&self.stages[stuck].id), "cycle in stage dependencies"));
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.query.is_empty() {
            return Err(Error::plan("plan", "empty query id"));
        }
        if self.stages.is_empty() {
            return Err(Error::plan("plan", "no stages"));
        }
        let mut seen = BTreeSet::new();
        for s in &self.stages {
            if s.id.is_empty() || s.id.contains(['/', '.', '#']) {
                return Err(Error::plan(at(&s.id), "stage ids must be non-empty and free of '/', '.' and '#'"));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::plan(at(&s.id), "duplicate stage id"));
            }
        }
        for s in &self.stages {
            for d in s.dependencies() {
                if self.stage(d).is_none() {
                    return Err(Error::plan(at(&s.id), format!("missing stage {d}")));
                }
            }
        }
        self.topo_order()?;
        for s in &self.stages {
            self.validate_stage(s)?;
        }

        let terminals: Vec<&PlanStage> = self
            .stages
            .iter()
            .filter(|s| self.consumers(&s.id).is_empty())
            .collect();
        if terminals.len() != 1 {
            return Err(Error::plan(
                "plan",
                format!("expected exactly one terminal stage, found {}", terminals.len()),
            ));
        }
        let t = terminals[0];
        if t.tasks != 1 || t.is_partitioned() {
            return Err(Error::plan(at(&t.id), "terminal stage must be one task with single output"));
        }

        for s in &self.stages {
            if s.is_partitioned() {
                let consumers = self.consumers(&s.id);
                if consumers.len() != 1 {
                    return Err(Error::plan(at(&s.id), "a partitioned stage must feed exactly one stage"));
                }
            }
        }
        Ok(())
    }

    fn validate_stage(&self, s: &PlanStage) -> Result<()> {
        if s.tasks == 0 {
            return Err(Error::plan(at(&s.id), "task count must be at least 1"));
        }
        for (i, op) in s.ops.iter().enumerate() {
            if let PlanOp::Join(j) = op {
                if j.build.is_none() {
                    return Err(Error::plan(format!("stage {} op {i}", s.id), "missing build side"));
                }
                if j.probe_keys.is_empty() || j.probe_keys.len() != j.build_keys.len() {
                    return Err(Error::plan(format!("stage {} op {i}", s.id), "join key lists differ"));
                }
            }
        }
        if let StageInput::Stage(src) = &s.input {
            if let Some(p) = self.stage(src) {
                if !p.is_partitioned() && s.tasks > p.tasks {
                    return Err(Error::plan(
                        at(&s.id),
                        format!("{} tasks cannot share {} unpartitioned inputs", s.tasks, p.tasks),
                    ));
                }
            }
        }
        let input_partitioned = matches!(&s.input, StageInput::Stage(src)
            if self.stage(src).is_some_and(|p| p.is_partitioned()));
        let mut shuffled = Vec::new();
        if input_partitioned {
            shuffled.extend(s.dependencies().first().copied());
        }
        for op in &s.ops {
            if let PlanOp::Join(PlanJoin { build: Some(b), .. }) = op {
                if self.stage(b).is_some_and(|p| p.is_partitioned()) {
                    if !input_partitioned {
                        return Err(Error::plan(
                            at(&s.id),
                            format!("partitioned build side {b} needs a partitioned probe input"),
                        ));
                    }
                    shuffled.push(b);
                }
            }
        }
        if shuffled.is_empty() && s.shuffle != ShuffleSpec::Standard {
            return Err(Error::plan(at(&s.id), "multistage shuffle on a stage without shuffled inputs"));
        }
        for src in shuffled {
            if let Some(p) = self.stage(src) {
                ShuffleTopology::from_spec(s.shuffle, p.tasks as u64, s.tasks as u64)
                    .and_then(|t| t.validate())
                    .map_err(|e| Error::plan(at(&s.id), format!("bad fraction: {e}")))?;
            }
        }
        if let Some(t) = s.pipeline {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::plan(at(&s.id), "pipeline threshold outside [0,1]"));
            }
        }
        for f in &s.faults {
            if f.task >= s.tasks {
                return Err(Error::plan(at(&s.id), format!("fault names task {} of {}", f.task, s.tasks)));
            }
        }
        Ok(())
    }
}
