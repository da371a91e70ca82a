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

//! Per-query reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cost::{CostBreakdown, LedgerCounts};
use crate::format::{RowBatch, Value};
use crate::mitigation::MitigationStats;
use crate::runtime::InvocationStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub id: String,
    pub tasks: usize,
    pub started_at: f64,
    pub finished_at: f64,
    pub latency_ms: f64,
    pub retries: u32,
    pub rows_out: u64,
}

/// One invocation as billed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationTrace {
    pub task: String,
    pub status: InvocationStatus,
    pub started_at: f64,
    pub finished_at: f64,
    pub duration_ms: f64,
    pub billed_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryReport {
    pub query: String,
    pub exec_id: String,
    pub succeeded: bool,
    pub failure: Option<String>,
    pub started_at: f64,
    pub latency_ms: f64,
    pub stages: Vec<StageReport>,
    pub counts: LedgerCounts,
    pub cost: CostBreakdown,
    pub mitigation: MitigationStats,
    /// Sum of invocation durations; one core per invocation.
    pub core_seconds: f64,
    pub retries: u32,
    pub invocations: Vec<InvocationTrace>,
    pub result_rows: u64,
    /// xxh3 of the stored result object.
    pub result_digest: u64,
    #[serde(skip)]
    pub result: Option<RowBatch>,
}

impl QueryReport {
    pub fn total_dollars(&self) -> f64 {
        self.cost.total.dollars()
    }

    pub fn result_rows(&self) -> Vec<Vec<Value>> {
        self.result.as_ref().map(|b| b.to_rows()).unwrap_or_default()
    }

    /// Human-readable summary.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let status = if self.succeeded { "ok" } else { "FAILED" };
        let _ = writeln!(s, "query {} ({}) {status}", self.query, self.exec_id);
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "  failure: {f}");
        }
        let _ = writeln!(s, "  latency      {:>12.1} ms", self.latency_ms);
        let _ = writeln!(s, "  result rows  {:>12}", self.result_rows);
        let _ = writeln!(s, "  core-seconds {:>12.3}", self.core_seconds);
        let _ = writeln!(s, "  retries      {:>12}", self.retries);
        let _ = writeln!(s, "  {:<24} {:>6} {:>12} {:>12} {:>10}", "stage", "tasks", "start ms", "latency ms", "rows");
        for st in &self.stages {
            let _ = writeln!(
                s,
                "  {:<24} {:>6} {:>12.1} {:>12.1} {:>10}",
                st.id,
                st.tasks,
                st.started_at - self.started_at,
                st.latency_ms,
                st.rows_out
            );
        }
        let c = &self.counts;
        let _ = writeln!(s, "  GETs {} PUTs {} invocations {} billed {} ms", c.gets, c.puts, c.invocations, c.billed_ms);
        let _ = writeln!(
            s,
            "  cost get {} put {} storage {} invocation {} total {}",
            self.cost.get, self.cost.put, self.cost.storage, self.cost.invocation, self.cost.total
        );
        let m = &self.mitigation;
        let _ = writeln!(
            s,
            "  hedged reads {}/{} hedged writes {}/{} doublewrite fallbacks {}",
            m.reads_hedged, m.reads_total, m.writes_hedged, m.writes_total, m.doublewrite_fallbacks
        );
        s
    }
}
