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

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::latency::{request_rng, LatencyProfile};
use crate::clock::{SimClock, SimTime};
use crate::cost::CostLedger;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectKey {
    pub bucket: String,
    pub key: String,
}

impl ObjectKey {
    pub fn new(bucket: impl Into<String>, key: impl Into<String>) -> Self {
        let k = Self {
            bucket: bucket.into(),
            key: key.into(),
        };
        debug_assert!(!k.bucket.is_empty() && !k.key.is_empty());
        k
    }
}

impl fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.bucket, self.key)
    }
}

/// Byte range of a GET. Ranges past the end of the object are clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ByteRange {
    Full,
    /// `[start, end)`
    Span(u64, u64),
    /// The last `n` bytes.
    Suffix(u64),
}

impl ByteRange {
    fn resolve(self, len: u64) -> (u64, u64) {
        match self {
            ByteRange::Full => (0, len),
            ByteRange::Span(s, e) => (s.min(len), e.min(len).max(s.min(len))),
            ByteRange::Suffix(n) => (len - n.min(len), len),
        }
    }

    /// Requested length when known without the object.
    pub fn requested_len(self) -> Option<u64> {
        match self {
            ByteRange::Full => None,
            ByteRange::Span(s, e) => Some(e.saturating_sub(s)),
            ByteRange::Suffix(n) => Some(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RequestKind {
    Get,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestOutcome {
    Ok,
    NotVisible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub account: String,
    pub kind: RequestKind,
    pub key: ObjectKey,
    pub bytes: u64,
    pub issued_at: SimTime,
    /// Projected completion; a cancelled request keeps the time it would
    /// have finished.
    pub completed_at: SimTime,
    pub was_duplicate: bool,
    pub outcome: RequestOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutReceipt {
    pub duration: f64,
    pub completed_at: SimTime,
    pub visible_after: SimTime,
}

#[derive(Debug, Clone)]
struct Version {
    payload: Arc<[u8]>,
    visible_after: SimTime,
}

#[derive(Debug, Default)]
struct Slot {
    /// Ascending commit order.
    versions: Vec<Version>,
}

impl Slot {
    fn visible_at(&self, t: SimTime) -> Option<&Version> {
        self.versions.iter().rev().find(|v| v.visible_after <= t)
    }

    fn commit(&mut self, v: Version, now: SimTime) -> u64 {
        let replaced = self.versions.last().map(|v| v.payload.len() as u64).unwrap_or(0);
        self.versions.push(v);
        if let Some(idx) = self.versions.iter().rposition(|v| v.visible_after <= now) {
            self.versions.drain(..idx);
        }
        replaced
    }
}

struct Inner {
    clock: SimClock,
    profile: LatencyProfile,
    objects: Mutex<HashMap<ObjectKey, Slot>>,
    records: Mutex<Vec<RequestRecord>>,
    streams: Mutex<HashMap<String, u64>>,
    ledger: Arc<CostLedger>,
}

/// Write-once keyed blob store with injected latency, delayed visibility and
/// per-request metering. Cheap to clone; clones share state.
#[derive(Clone)]
pub struct SimObjectStore {
    inner: Arc<Inner>,
}

impl fmt::Debug for SimObjectStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimObjectStore")
            .field("objects", &self.inner.objects.lock().unwrap().len())
            .field("records", &self.inner.records.lock().unwrap().len())
            .finish()
    }
}

impl SimObjectStore {
    pub fn new(clock: SimClock, profile: LatencyProfile) -> Self {
        Self::with_ledger(clock, profile, Arc::new(CostLedger::new()))
    }

    pub fn with_ledger(clock: SimClock, profile: LatencyProfile, ledger: Arc<CostLedger>) -> Self {
        Self {
            inner: Arc::new(Inner {
                clock,
                profile,
                objects: Mutex::new(HashMap::new()),
                records: Mutex::new(Vec::new()),
                streams: Mutex::new(HashMap::new()),
                ledger,
            }),
        }
    }

    pub fn clock(&self) -> &SimClock {
        &self.inner.clock
    }

    pub fn profile(&self) -> &LatencyProfile {
        &self.inner.profile
    }

    pub fn ledger(&self) -> &Arc<CostLedger> {
        &self.inner.ledger
    }

    pub fn client(&self, account: impl Into<Arc<str>>) -> StoreClient {
        StoreClient {
            store: self.clone(),
            account: account.into(),
        }
    }

    fn next_index(&self, stream: &str) -> u64 {
        let mut streams = self.inner.streams.lock().unwrap();
        let n = streams.entry(stream.to_string()).or_insert(0);
        let i = *n;
        *n += 1;
        i
    }

    /// Issue a GET. The request is metered and its outcome fixed at issue
    /// time; awaiting [`PendingGet::wait`] delivers it after the sampled
    /// latency.
    pub fn start_get(&self, account: &str, key: &ObjectKey, range: ByteRange, duplicate: bool) -> PendingGet {
        let now = self.inner.clock.now();
        let snapshot = {
            let objects = self.inner.objects.lock().unwrap();
            objects
                .get(key)
                .and_then(|slot| slot.visible_at(now))
                .map(|v| v.payload.clone())
        };
        let result = match &snapshot {
            Some(payload) => {
                let (s, e) = range.resolve(payload.len() as u64);
                Ok(payload[s as usize..e as usize].to_vec())
            }
            None => Err(Error::NotVisible(key.clone())),
        };
        let bytes = result.as_ref().map(|b| b.len() as u64).unwrap_or(0);
        let stream = stream_name("GET", key, duplicate);
        let index = self.next_index(&stream);
        let mut rng = request_rng(self.inner.profile.rng_seed, &stream, index);
        let duration = self.inner.profile.get.sample(bytes, &mut rng).total();
        let completes_at = now + duration;
        self.inner.ledger.record_get(account, bytes, duplicate);
        self.inner.records.lock().unwrap().push(RequestRecord {
            account: account.to_string(),
            kind: RequestKind::Get,
            key: key.clone(),
            bytes,
            issued_at: now,
            completed_at: completes_at,
            was_duplicate: duplicate,
            outcome: if result.is_ok() {
                RequestOutcome::Ok
            } else {
                RequestOutcome::NotVisible
            },
        });
        PendingGet {
            clock: self.inner.clock.clone(),
            issued_at: now,
            completes_at,
            result,
        }
    }

    pub async fn get(&self, account: &str, key: &ObjectKey, range: ByteRange) -> Result<Vec<u8>> {
        self.start_get(account, key, range, false).wait().await
    }

    /// Issue a PUT. Metered at issue; the object is committed only when
    /// [`PendingPut::wait`] reaches completion, so a dropped request writes
    /// nothing.
    pub fn start_put(&self, account: &str, key: &ObjectKey, payload: Arc<[u8]>, duplicate: bool) -> PendingPut {
        let now = self.inner.clock.now();
        let bytes = payload.len() as u64;
        let stream = stream_name("PUT", key, duplicate);
        let index = self.next_index(&stream);
        let mut rng = request_rng(self.inner.profile.rng_seed, &stream, index);
        let sample = self.inner.profile.put.sample(bytes, &mut rng);
        let delay = {
            use rand::Rng;
            let coin: f64 = rng.random();
            let d = self.inner.profile.visibility_delay.sample(&mut rng).max(0.0);
            if coin < self.inner.profile.visibility_delay_probability {
                d
            } else {
                0.0
            }
        };
        let sent_at = now + sample.transfer_ms;
        let completes_at = now + sample.total();
        self.inner.ledger.record_put(account, bytes, duplicate);
        self.inner.records.lock().unwrap().push(RequestRecord {
            account: account.to_string(),
            kind: RequestKind::Put,
            key: key.clone(),
            bytes,
            issued_at: now,
            completed_at: completes_at,
            was_duplicate: duplicate,
            outcome: RequestOutcome::Ok,
        });
        PendingPut {
            store: self.clone(),
            account: account.to_string(),
            key: key.clone(),
            payload,
            issued_at: now,
            sent_at,
            completes_at,
            visibility_delay: delay,
        }
    }

    pub async fn put(&self, account: &str, key: &ObjectKey, payload: Vec<u8>) -> PutReceipt {
        self.start_put(account, key, payload.into(), false).wait().await
    }

    fn commit(&self, account: &str, key: &ObjectKey, payload: Arc<[u8]>, visible_after: SimTime) {
        let now = self.inner.clock.now();
        let added = payload.len() as u64;
        let replaced = {
            let mut objects = self.inner.objects.lock().unwrap();
            objects.entry(key.clone()).or_default().commit(
                Version {
                    payload,
                    visible_after,
                },
                now,
            )
        };
        self.inner.ledger.record_stored(account, added, replaced);
    }

    /// Place an object without latency or metering (data loading).
    pub fn insert_raw(&self, key: &ObjectKey, payload: Vec<u8>) {
        let mut objects = self.inner.objects.lock().unwrap();
        let slot = objects.entry(key.clone()).or_default();
        slot.versions.clear();
        slot.versions.push(Version {
            payload: payload.into(),
            visible_after: f64::NEG_INFINITY,
        });
    }

    /// Unmetered read of the newest committed version, visible or not.
    pub fn peek(&self, key: &ObjectKey) -> Option<Vec<u8>> {
        let objects = self.inner.objects.lock().unwrap();
        objects
            .get(key)
            .and_then(|s| s.versions.last())
            .map(|v| v.payload.to_vec())
    }

    pub fn keys(&self) -> Vec<ObjectKey> {
        let mut keys: Vec<_> = self.inner.objects.lock().unwrap().keys().cloned().collect();
        keys.sort();
        keys
    }

    pub fn records(&self) -> Vec<RequestRecord> {
        self.inner.records.lock().unwrap().clone()
    }

    pub fn records_for(&self, account: &str) -> Vec<RequestRecord> {
        self.inner
            .records
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.account == account)
            .cloned()
            .collect()
    }

    pub fn request_count(&self) -> usize {
        self.inner.records.lock().unwrap().len()
    }

    /// Write every object to `dir/<bucket>/<key>`.
    pub fn export_dir(&self, dir: &Path) -> Result<()> {
        for key in self.keys() {
            let payload = self.peek(&key).unwrap_or_default();
            let path = dir.join(&key.bucket).join(&key.key);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, payload)?;
        }
        Ok(())
    }

    /// Load every file under `dir/<bucket>/...` as a visible object.
    pub fn import_dir(&self, dir: &Path) -> Result<usize> {
        let mut n = 0;
        for bucket in std::fs::read_dir(dir)? {
            let bucket = bucket?;
            if !bucket.file_type()?.is_dir() {
                continue;
            }
            let name = bucket.file_name().to_string_lossy().to_string();
            let mut stack = vec![bucket.path()];
            while let Some(d) = stack.pop() {
                for entry in std::fs::read_dir(&d)? {
                    let entry = entry?;
                    let path = entry.path();
                    if entry.file_type()?.is_dir() {
                        stack.push(path);
                    } else {
                        let rel = path.strip_prefix(bucket.path()).unwrap();
                        let key = rel.to_string_lossy().replace('\\', "/");
                        self.insert_raw(&ObjectKey::new(name.clone(), key), std::fs::read(&path)?);
                        n += 1;
                    }
                }
            }
        }
        Ok(n)
    }
}

/// Latency samples are drawn per (kind, key, duplicate) stream so that a
/// hedge never shifts the samples of later primary requests.
fn stream_name(kind: &str, key: &ObjectKey, duplicate: bool) -> String {
    if duplicate {
        format!("{kind}:{key}#dup")
    } else {
        format!("{kind}:{key}")
    }
}

#[derive(Debug)]
pub struct PendingGet {
    clock: SimClock,
    issued_at: SimTime,
    completes_at: SimTime,
    result: Result<Vec<u8>>,
}

impl PendingGet {
    pub fn issued_at(&self) -> SimTime {
        self.issued_at
    }

    /// Simulator-side knowledge of when the response lands. Used only for
    /// savings accounting, never for hedging decisions.
    pub fn completes_at(&self) -> SimTime {
        self.completes_at
    }

    pub async fn wait(self) -> Result<Vec<u8>> {
        self.clock.sleep_until(self.completes_at).await;
        self.result
    }
}

pub struct PendingPut {
    store: SimObjectStore,
    account: String,
    key: ObjectKey,
    payload: Arc<[u8]>,
    issued_at: SimTime,
    sent_at: SimTime,
    completes_at: SimTime,
    visibility_delay: f64,
}

impl PendingPut {
    pub fn issued_at(&self) -> SimTime {
        self.issued_at
    }

    /// When the client finishes sending the payload. Observable by the client.
    pub fn sent_at(&self) -> SimTime {
        self.sent_at
    }

    /// See [`PendingGet::completes_at`].
    pub fn completes_at(&self) -> SimTime {
        self.completes_at
    }

    pub async fn wait(self) -> PutReceipt {
        let clock = self.store.inner.clock.clone();
        clock.sleep_until(self.completes_at).await;
        let now = clock.now();
        let visible_after = now + self.visibility_delay;
        self.store
            .commit(&self.account, &self.key, self.payload.clone(), visible_after);
        PutReceipt {
            duration: now - self.issued_at,
            completed_at: now,
            visible_after,
        }
    }
}

/// A store handle that tags every request with one account.
#[derive(Clone, Debug)]
pub struct StoreClient {
    store: SimObjectStore,
    account: Arc<str>,
}

impl StoreClient {
    pub fn store(&self) -> &SimObjectStore {
        &self.store
    }

    pub fn account(&self) -> &str {
        &self.account
    }

    pub async fn get(&self, key: &ObjectKey, range: ByteRange) -> Result<Vec<u8>> {
        self.store.get(&self.account, key, range).await
    }

    pub async fn put(&self, key: &ObjectKey, payload: Vec<u8>) -> PutReceipt {
        self.store.put(&self.account, key, payload).await
    }
}
