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

//! Simulated function service: FIFO admission under a global concurrency
//! cap, per-invocation time limit, and millisecond billing.

use std::future::Future;
use std::pin::Pin;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, Semaphore};

use crate::clock::{SimClock, SimTime};
use crate::cost::CostLedger;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeLimits {
    pub max_concurrent: usize,
    pub max_duration_ms: f64,
    /// Ceiling for operator memory reservations.
    pub max_memory: u64,
    pub billing_granularity_ms: u64,
    /// Fixed delay between admission and the start of execution. Not billed.
    pub startup_ms: f64,
}

impl Default for RuntimeLimits {
    fn default() -> Self {
        Self {
            max_concurrent: 1000,
            max_duration_ms: 900_000.0,
            max_memory: 3 << 30,
            billing_granularity_ms: 1,
            startup_ms: 50.0,
        }
    }
}

impl RuntimeLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent == 0
            || !(self.max_duration_ms > 0.0)
            || self.max_memory == 0
            || self.billing_granularity_ms == 0
            || !(self.startup_ms >= 0.0)
        {
            return Err(Error::Config("runtime limits must be positive".into()));
        }
        Ok(())
    }

    /// Duration rounded up to the billing granularity.
    pub fn billed_ms(&self, duration_ms: f64) -> u64 {
        // Round to the clock's microsecond resolution first so float noise
        // never bills an extra unit.
        let us = (duration_ms.max(0.0) * 1000.0).round() as u64;
        let g = self.billing_granularity_ms * 1000;
        us.div_ceil(g) * self.billing_granularity_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvocationStatus {
    Ok,
    Failed,
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct InvocationResult<T> {
    pub task: String,
    pub account: String,
    pub status: InvocationStatus,
    pub admitted_at: SimTime,
    pub started_at: SimTime,
    pub finished_at: SimTime,
    pub duration_ms: f64,
    pub billed_ms: u64,
    pub error: Option<Error>,
    pub output: Option<T>,
}

type Job = Pin<Box<dyn Future<Output = ()> + Send>>;

struct Inner {
    clock: SimClock,
    ledger: Arc<CostLedger>,
    limits: RuntimeLimits,
    queue: mpsc::UnboundedSender<Job>,
    active: AtomicUsize,
    peak: AtomicUsize,
}

/// Cheap to clone; clones share the cap.
#[derive(Clone)]
pub struct FunctionRuntime {
    inner: Arc<Inner>,
}

impl FunctionRuntime {
    /// Must be called inside the simulation's tokio runtime: it spawns the
    /// admission loop.
    pub fn new(clock: SimClock, ledger: Arc<CostLedger>, limits: RuntimeLimits) -> Self {
        let (queue, mut jobs) = mpsc::unbounded_channel::<Job>();
        let slots = Arc::new(Semaphore::new(limits.max_concurrent));
        tokio::spawn(async move {
            while let Some(job) = jobs.recv().await {
                let permit = slots.clone().acquire_owned().await.expect("semaphore closed");
                tokio::spawn(async move {
                    job.await;
                    drop(permit);
                });
            }
        });
        Self {
            inner: Arc::new(Inner {
                clock,
                ledger,
                limits,
                queue,
                active: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
            }),
        }
    }

    pub fn limits(&self) -> &RuntimeLimits {
        &self.inner.limits
    }

    pub fn clock(&self) -> &SimClock {
        &self.inner.clock
    }

    /// Invocations currently holding a slot.
    pub fn active_count(&self) -> usize {
        self.inner.active.load(Ordering::SeqCst)
    }

    /// Highest `active_count` ever observed.
    pub fn peak_active(&self) -> usize {
        self.inner.peak.load(Ordering::SeqCst)
    }

    /// Queue an invocation. It runs once a slot frees up (FIFO), and its
    /// result is sent on `done`. Billing goes to `account`.
    pub fn invoke<T, F>(
        &self,
        account: &str,
        task: impl Into<String>,
        work: F,
        done: mpsc::UnboundedSender<InvocationResult<T>>,
    ) where
        T: Send + 'static,
        F: Future<Output = Result<T>> + Send + 'static,
    {
        let rt = self.clone();
        let account = account.to_string();
        let task = task.into();
        let job: Job = Box::pin(async move {
            let result = rt.run_admitted(account, task, work).await;
            let _ = done.send(result);
        });
        self.inner.queue.send(job).expect("admission loop stopped");
    }

    async fn run_admitted<T, F>(&self, account: String, task: String, work: F) -> InvocationResult<T>
    where
        F: Future<Output = Result<T>>,
    {
        let inner = &self.inner;
        let n = inner.active.fetch_add(1, Ordering::SeqCst) + 1;
        inner.peak.fetch_max(n, Ordering::SeqCst);
        let admitted_at = inner.clock.now();
        inner.clock.sleep(inner.limits.startup_ms).await;
        let started_at = inner.clock.now();
        let limit = inner.limits.max_duration_ms;
        let (status, error, output) = tokio::select! {
            biased;
            r = work => match r {
                Ok(v) => (InvocationStatus::Ok, None, Some(v)),
                Err(e) => (InvocationStatus::Failed, Some(e), None),
            },
            _ = inner.clock.sleep(limit) => (
                InvocationStatus::TimedOut,
                Some(Error::TaskFailed { task: task.clone(), detail: format!("exceeded {limit} ms") }),
                None,
            ),
        };
        let finished_at = inner.clock.now();
        let duration_ms = finished_at - started_at;
        let billed_ms = inner.limits.billed_ms(duration_ms);
        inner.ledger.record_invocation(&account, billed_ms);
        inner.active.fetch_sub(1, Ordering::SeqCst);
        InvocationResult {
            task,
            account,
            status,
            admitted_at,
            started_at,
            finished_at,
            duration_ms,
            billed_ms,
            error,
            output,
        }
    }
}
