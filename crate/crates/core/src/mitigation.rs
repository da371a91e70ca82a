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

//! Tail-latency defenses for a task's store traffic: a bounded parallel read
//! pool, hedged reads (RSM), two-timer hedged writes (WSM) and doublewrite
//! with visibility fallback.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use futures::future::BoxFuture;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::clock::SimTime;
use crate::cost::{LedgerCounts, Money, PriceSheet};
use crate::error::{Error, Result};
use crate::format::RangeReader;
use crate::storesim::{ByteRange, ObjectKey, PutReceipt, SimObjectStore};

/// Expected response time model `r = l + b·c/t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StragglerModel {
    /// Latency floor in ms.
    pub l_ms: f64,
    /// Per-invocation throughput in bytes per second.
    pub throughput: f64,
}

impl StragglerModel {
    pub const fn new(l_ms: f64, throughput: f64) -> Self {
        Self { l_ms, throughput }
    }

    /// Expected completion in ms for `bytes` with `readers` requests sharing
    /// the invocation's bandwidth.
    pub fn expected_response(&self, bytes: u64, readers: usize) -> f64 {
        self.l_ms + bytes as f64 * readers.max(1) as f64 / self.throughput * 1000.0
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.l_ms > 0.0 && self.throughput > 0.0) {
            return Err(Error::Config(format!("{name}: l and t must be positive")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WsmMode {
    Off,
    /// Only the timer started with the request.
    Single,
    /// Also a second timer restarted once the payload is sent.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationConfig {
    /// Read pool size per task; 1 disables parallel reads.
    pub parallel_reads: usize,
    pub rsm: bool,
    pub wsm: WsmMode,
    pub doublewrite: bool,
    /// Hedge once a request exceeds this multiple of its expected time.
    pub retry_factor: f64,
    pub read_model: StragglerModel,
    /// Write model measured from request start.
    pub write_model: StragglerModel,
    /// Write model measured from the moment the payload is sent.
    pub write_post_model: StragglerModel,
    pub poll_interval_ms: f64,
    pub poll_budget_ms: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self {
            parallel_reads: 16,
            rsm: true,
            wsm: WsmMode::Full,
            doublewrite: true,
            retry_factor: 2.0,
            read_model: StragglerModel::new(15.0, 150e6),
            write_model: StragglerModel::new(15.0, 150e6),
            write_post_model: StragglerModel::new(50.0, 1e9),
            poll_interval_ms: 20.0,
            poll_budget_ms: 60_000.0,
        }
    }
}

impl MitigationConfig {
    /// Everything off, one read at a time.
    pub fn off() -> Self {
        Self {
            parallel_reads: 1,
            rsm: false,
            wsm: WsmMode::Off,
            doublewrite: false,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallel_reads == 0 {
            return Err(Error::Config("parallel_reads must be at least 1".into()));
        }
        if !(self.retry_factor > 1.0) {
            return Err(Error::Config("retry_factor must exceed 1".into()));
        }
        if !(self.poll_interval_ms > 0.0 && self.poll_budget_ms >= 0.0) {
            return Err(Error::Config("poll interval must be positive".into()));
        }
        self.read_model.validate("read_model")?;
        self.write_model.validate("write_model")?;
        self.write_post_model.validate("write_post_model")?;
        if self.write_post_model.throughput < self.write_model.throughput {
            return Err(Error::Config("post-send throughput below pre-send throughput".into()));
        }
        Ok(())
    }
}

/// Second key of a doublewritten object.
pub fn secondary_key(primary: &ObjectKey) -> ObjectKey {
    ObjectKey::new(primary.bucket.clone(), format!("{}.dw", primary.key))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MitigationStats {
    /// Logical reads, each possibly hedged.
    pub reads_total: u64,
    pub reads_hedged: u64,
    pub writes_total: u64,
    pub writes_hedged: u64,
    /// Reads whose primary key was not visible and that tried the secondary.
    pub doublewrite_fallbacks: u64,
    /// Reads that found neither key visible and had to poll.
    pub both_invisible_waits: u64,
    /// Secondary-key PUTs issued by doublewrite.
    pub doublewrite_puts: u64,
    /// GETs issued while polling for a not-yet-visible object.
    pub poll_gets: u64,
    pub max_in_flight_reads: u64,
    /// Projected loser completion minus winner completion, over hedges won
    /// by the duplicate.
    pub compute_ms_saved: f64,
    pub extra_request_dollars: Money,
}

impl MitigationStats {
    pub fn merge(&mut self, o: &MitigationStats) {
        self.reads_total += o.reads_total;
        self.reads_hedged += o.reads_hedged;
        self.writes_total += o.writes_total;
        self.writes_hedged += o.writes_hedged;
        self.doublewrite_fallbacks += o.doublewrite_fallbacks;
        self.both_invisible_waits += o.both_invisible_waits;
        self.doublewrite_puts += o.doublewrite_puts;
        self.poll_gets += o.poll_gets;
        self.max_in_flight_reads = self.max_in_flight_reads.max(o.max_in_flight_reads);
        self.compute_ms_saved += o.compute_ms_saved;
        self.extra_request_dollars = self.extra_request_dollars + o.extra_request_dollars;
    }

    /// Cost of requests that exist only because of mitigation.
    pub fn extra_dollars(&self, prices: &PriceSheet) -> Money {
        prices.get().times(self.reads_hedged) + prices.put().times(self.writes_hedged + self.doublewrite_puts)
    }

    /// Same quantity from the ledger's duplicate counters.
    pub fn extra_dollars_from_ledger(counts: &LedgerCounts, prices: &PriceSheet) -> Money {
        prices.get().times(counts.duplicate_gets) + prices.put().times(counts.duplicate_puts)
    }
}

/// Shared accumulator for one query's mitigation stats.
#[derive(Debug, Clone, Default)]
pub struct StatsSink(Arc<Mutex<MitigationStats>>);

impl StatsSink {
    pub fn new() -> Self {
        Self::default()
    }

    fn update(&self, f: impl FnOnce(&mut MitigationStats)) {
        f(&mut self.0.lock().unwrap())
    }

    pub fn snapshot(&self) -> MitigationStats {
        *self.0.lock().unwrap()
    }
}

/// Store access for one task with the configured mitigations applied.
pub struct TaskIo {
    store: SimObjectStore,
    account: Arc<str>,
    cfg: MitigationConfig,
    pool: Semaphore,
    in_flight: AtomicUsize,
    stats: StatsSink,
    poll_budget_ms: f64,
    /// Primary keys already served from their secondary.
    resolved: Mutex<HashMap<ObjectKey, ObjectKey>>,
}

impl TaskIo {
    pub fn new(store: SimObjectStore, account: impl Into<Arc<str>>, cfg: MitigationConfig, stats: StatsSink) -> Self {
        Self {
            store,
            account: account.into(),
            pool: Semaphore::new(cfg.parallel_reads.max(1)),
            in_flight: AtomicUsize::new(0),
            poll_budget_ms: cfg.poll_budget_ms,
            cfg,
            stats,
            resolved: Mutex::new(HashMap::new()),
        }
    }

    /// Override how long a read waits for an invisible object.
    pub fn with_poll_budget(mut self, ms: f64) -> Self {
        self.poll_budget_ms = ms;
        self
    }

    pub fn config(&self) -> &MitigationConfig {
        &self.cfg
    }

    pub fn store(&self) -> &SimObjectStore {
        &self.store
    }

    pub fn account(&self) -> &str {
        &self.account
    }

    fn now(&self) -> SimTime {
        self.store.clock().now()
    }

    /// One GET through the pool, hedged when RSM is on.
    async fn pooled_get(&self, key: &ObjectKey, range: ByteRange) -> Result<Vec<u8>> {
        let _permit = self.pool.acquire().await.expect("pool closed");
        let c = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.stats.update(|s| {
            s.reads_total += 1;
            s.max_in_flight_reads = s.max_in_flight_reads.max(c as u64);
        });
        let r = self.hedged_get(key, range, c).await;
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        r
    }

    async fn hedged_get(&self, key: &ObjectKey, range: ByteRange, readers: usize) -> Result<Vec<u8>> {
        let primary = self.store.start_get(&self.account, key, range, false);
        if !self.cfg.rsm {
            return primary.wait().await;
        }
        let bytes = range.requested_len().unwrap_or(0);
        let deadline = primary.issued_at() + self.cfg.retry_factor * self.cfg.read_model.expected_response(bytes, readers);
        let primary_done = primary.completes_at();
        let clock = self.store.clock().clone();
        let mut p = Box::pin(primary.wait());
        tokio::select! {
            biased;
            r = &mut p => return r,
            _ = clock.sleep_until(deadline) => {}
        }
        let dup = self.store.start_get(&self.account, key, range, true);
        self.stats.update(|s| s.reads_hedged += 1);
        let mut d = Box::pin(dup.wait());
        tokio::select! {
            biased;
            r = &mut p => r,
            r = &mut d => {
                let saved = primary_done - self.now();
                self.stats.update(|s| s.compute_ms_saved += saved.max(0.0));
                r
            }
        }
    }

    /// Read a range, falling back to the doublewrite secondary and then
    /// polling while the object is not visible.
    pub async fn read(&self, key: &ObjectKey, range: ByteRange) -> Result<Vec<u8>> {
        let resolved = self.resolved.lock().unwrap().get(key).cloned();
        if let Some(sec) = resolved {
            return self.pooled_get(&sec, range).await;
        }
        match self.pooled_get(key, range).await {
            Err(Error::NotVisible(_)) => {}
            other => return other,
        }
        let secondary = self.cfg.doublewrite.then(|| secondary_key(key));
        if let Some(sec) = &secondary {
            self.stats.update(|s| s.doublewrite_fallbacks += 1);
            match self.pooled_get(sec, range).await {
                Ok(b) => {
                    self.resolved.lock().unwrap().insert(key.clone(), sec.clone());
                    return Ok(b);
                }
                Err(Error::NotVisible(_)) => self.stats.update(|s| s.both_invisible_waits += 1),
                Err(e) => return Err(e),
            }
        }
        let deadline = self.now() + self.poll_budget_ms;
        let mut turn = 0usize;
        loop {
            if self.now() >= deadline {
                return Err(match secondary {
                    Some(sec) => Error::BothInvisible {
                        primary: key.clone(),
                        secondary: sec,
                        budget_ms: self.poll_budget_ms,
                    },
                    None => Error::NotVisible(key.clone()),
                });
            }
            self.store.clock().sleep(self.cfg.poll_interval_ms).await;
            let target = match &secondary {
                Some(sec) if turn % 2 == 1 => sec,
                _ => key,
            };
            turn += 1;
            self.stats.update(|s| s.poll_gets += 1);
            match self.pooled_get(target, range).await {
                Ok(b) => {
                    if target != key {
                        self.resolved.lock().unwrap().insert(key.clone(), target.clone());
                    }
                    return Ok(b);
                }
                Err(Error::NotVisible(_)) => continue,
                Err(e) => return Err(e),
            }
        }
    }

    async fn hedged_put(&self, key: &ObjectKey, payload: Arc<[u8]>, duplicate: bool) -> PutReceipt {
        let primary = self.store.start_put(&self.account, key, payload.clone(), duplicate);
        self.stats.update(|s| s.writes_total += 1);
        let k = self.cfg.retry_factor;
        let bytes = payload.len() as u64;
        let pre = primary.issued_at() + k * self.cfg.write_model.expected_response(bytes, 1);
        let deadline = match self.cfg.wsm {
            WsmMode::Off => return primary.wait().await,
            WsmMode::Single => pre,
            WsmMode::Full => pre.min(primary.sent_at() + k * self.cfg.write_post_model.expected_response(bytes, 1)),
        };
        let primary_done = primary.completes_at();
        let clock = self.store.clock().clone();
        let mut p = Box::pin(primary.wait());
        tokio::select! {
            biased;
            r = &mut p => return r,
            _ = clock.sleep_until(deadline) => {}
        }
        let dup = self.store.start_put(&self.account, key, payload, true);
        self.stats.update(|s| s.writes_hedged += 1);
        let mut d = Box::pin(dup.wait());
        tokio::select! {
            biased;
            r = &mut p => r,
            r = &mut d => {
                let saved = primary_done - self.now();
                self.stats.update(|s| s.compute_ms_saved += saved.max(0.0));
                r
            }
        }
    }

    /// Write an object, and its secondary copy when doublewrite is on.
    /// Returns once every copy is acknowledged.
    pub async fn write(&self, key: &ObjectKey, payload: impl Into<Arc<[u8]>>) -> PutReceipt {
        let payload: Arc<[u8]> = payload.into();
        if !self.cfg.doublewrite {
            return self.hedged_put(key, payload, false).await;
        }
        let sec = secondary_key(key);
        self.stats.update(|s| s.doublewrite_puts += 1);
        let (a, _) = tokio::join!(
            self.hedged_put(key, payload.clone(), false),
            self.hedged_put(&sec, payload, true)
        );
        a
    }
}

impl RangeReader for TaskIo {
    fn get_range<'a>(&'a self, key: &'a ObjectKey, range: ByteRange) -> BoxFuture<'a, Result<Vec<u8>>> {
        Box::pin(self.read(key, range))
    }
}
