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

//! Dollar accounting.
//!
//! Amounts are held as integer attodollars so that ledger totals equal
//! `count × unit price` exactly, whatever order requests were recorded in.

use std::collections::BTreeMap;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ATTO_PER_DOLLAR: f64 = 1e18;
/// 30-day month, in milliseconds.
pub const MONTH_MS: u128 = 30 * 24 * 3600 * 1000;
const BYTES_PER_GB: u128 = 1_000_000_000;

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Money(u128);

impl Money {
    pub const ZERO: Money = Money(0);

    /// Rounds to the nearest attodollar.
    pub fn from_dollars(d: f64) -> Self {
        assert!(d >= 0.0 && d.is_finite(), "negative or non-finite amount {d}");
        Money((d * ATTO_PER_DOLLAR).round() as u128)
    }

    pub fn from_atto(a: u128) -> Self {
        Money(a)
    }

    pub fn atto(self) -> u128 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / ATTO_PER_DOLLAR
    }

    pub fn times(self, n: u64) -> Money {
        Money(self.0 * n as u128)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Debug for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${:.9}", self.dollars())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${:.6}", self.dollars())
    }
}

/// Unit prices in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceSheet {
    /// Per GET request.
    pub get_price: f64,
    /// Per PUT request.
    pub put_price: f64,
    /// Per GB-month stored.
    pub storage_price: f64,
    /// Per billed invocation-millisecond.
    pub invocation_price: f64,
}

impl Default for PriceSheet {
    /// July 2019 object-store prices; invocation price is a 3008 MB function
    /// at $0.0000166667 per GB-second.
    fn default() -> Self {
        Self {
            // $0.0004 and $0.005 per thousand
            get_price: 4e-7,
            put_price: 5e-6,
            storage_price: 0.23,
            invocation_price: 0.000_016_666_7 * (3008.0 / 1024.0) / 1000.0,
        }
    }
}

impl PriceSheet {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("get_price", self.get_price),
            ("put_price", self.put_price),
            ("storage_price", self.storage_price),
            ("invocation_price", self.invocation_price),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn get(&self) -> Money {
        Money::from_dollars(self.get_price)
    }

    pub fn put(&self) -> Money {
        Money::from_dollars(self.put_price)
    }

    pub fn invocation_ms(&self) -> Money {
        Money::from_dollars(self.invocation_price)
    }

    pub fn storage_gb_month(&self) -> Money {
        Money::from_dollars(self.storage_price)
    }

    /// Milliseconds of invocation time one extra request of price `request`
    /// must save to pay for itself.
    pub fn break_even_ms(&self, request: f64) -> f64 {
        request / self.invocation_price
    }

    /// Storage charge for holding `peak_bytes` for `wall_ms`.
    pub fn storage_for(&self, peak_bytes: u64, wall_ms: u64) -> Money {
        let atto = self.storage_gb_month().atto() * peak_bytes as u128 * wall_ms as u128
            / (BYTES_PER_GB * MONTH_MS);
        Money::from_atto(atto)
    }
}

/// Raw counters for one account (usually one query execution).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub gets: u64,
    pub puts: u64,
    pub duplicate_gets: u64,
    pub duplicate_puts: u64,
    pub get_bytes: u64,
    pub put_bytes: u64,
    pub invocations: u64,
    pub billed_ms: u64,
    pub bytes_stored: u64,
    pub peak_bytes_stored: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub get: Money,
    pub put: Money,
    pub storage: Money,
    pub invocation: Money,
    pub total: Money,
}

impl CostBreakdown {
    pub fn from_counts(counts: &LedgerCounts, prices: &PriceSheet, wall_ms: u64) -> Self {
        let get = prices.get().times(counts.gets);
        let put = prices.put().times(counts.puts);
        let invocation = prices.invocation_ms().times(counts.billed_ms);
        let storage = prices.storage_for(counts.peak_bytes_stored, wall_ms);
        Self {
            get,
            put,
            storage,
            invocation,
            total: get + put + storage + invocation,
        }
    }
}

/// Concurrent per-account tally of requests, bytes and billed time.
#[derive(Debug, Default)]
pub struct CostLedger {
    accounts: Mutex<BTreeMap<String, LedgerCounts>>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    fn with<R>(&self, account: &str, f: impl FnOnce(&mut LedgerCounts) -> R) -> R {
        let mut map = self.accounts.lock().unwrap();
        let counts = map.entry(account.to_string()).or_default();
        f(counts)
    }

    pub fn record_get(&self, account: &str, bytes: u64, duplicate: bool) {
        self.with(account, |c| {
            c.gets += 1;
            c.get_bytes += bytes;
            if duplicate {
                c.duplicate_gets += 1;
            }
        })
    }

    pub fn record_put(&self, account: &str, bytes: u64, duplicate: bool) {
        self.with(account, |c| {
            c.puts += 1;
            c.put_bytes += bytes;
            if duplicate {
                c.duplicate_puts += 1;
            }
        })
    }

    /// Adjust bytes held by `account` after an object commit.
    pub fn record_stored(&self, account: &str, added: u64, removed: u64) {
        self.with(account, |c| {
            c.bytes_stored = (c.bytes_stored + added).saturating_sub(removed);
            c.peak_bytes_stored = c.peak_bytes_stored.max(c.bytes_stored);
        })
    }

    pub fn record_invocation(&self, account: &str, billed_ms: u64) {
        self.with(account, |c| {
            c.invocations += 1;
            c.billed_ms += billed_ms;
        })
    }

    pub fn snapshot(&self, account: &str) -> LedgerCounts {
        self.accounts
            .lock()
            .unwrap()
            .get(account)
            .copied()
            .unwrap_or_default()
    }

    pub fn accounts(&self) -> Vec<String> {
        self.accounts.lock().unwrap().keys().cloned().collect()
    }
}
