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

//! Simulated time.
//!
//! Every latency in the engine is expressed in simulated milliseconds and
//! enforced by suspending the calling task on a [`SimClock`]. Two modes exist:
//!
//! - [`ClockMode::Virtual`]: a paused tokio clock that auto-advances whenever
//!   every task is idle. One simulated millisecond maps onto one second of
//!   paused tokio time, so timer resolution is one simulated microsecond.
//!   Runs are deterministic and take no wall-clock time for sleeps.
//! - [`ClockMode::Scaled`]: real time, with simulated milliseconds multiplied
//!   by `factor` before sleeping.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::runtime::{Builder, Runtime};
use tokio::time::Instant;

/// Simulated timestamp in milliseconds since the clock origin.
pub type SimTime = f64;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    #[default]
    Virtual,
    Scaled { factor: f64 },
}

impl ClockMode {
    /// Build a runtime suitable for this clock mode.
    pub fn runtime(&self) -> std::io::Result<Runtime> {
        match self {
            ClockMode::Virtual => Builder::new_current_thread()
                .enable_time()
                .start_paused(true)
                .build(),
            ClockMode::Scaled { .. } => Builder::new_multi_thread().enable_time().build(),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, ClockMode::Virtual)
    }
}

#[derive(Debug, Clone)]
pub struct SimClock {
    mode: ClockMode,
    origin: Instant,
}

impl SimClock {
    /// Must be called from inside a runtime built by [`ClockMode::runtime`].
    pub fn start(mode: ClockMode) -> Self {
        Self {
            mode,
            origin: Instant::now(),
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now(&self) -> SimTime {
        let elapsed = self.origin.elapsed();
        match self.mode {
            ClockMode::Virtual => elapsed.as_secs_f64(),
            ClockMode::Scaled { factor } => elapsed.as_secs_f64() * 1000.0 / factor,
        }
    }

    fn to_duration(&self, ms: f64) -> Duration {
        let ms = ms.max(0.0);
        match self.mode {
            ClockMode::Virtual => Duration::from_secs_f64(ms),
            ClockMode::Scaled { factor } => Duration::from_secs_f64(ms * factor / 1000.0),
        }
    }

    pub async fn sleep(&self, ms: f64) {
        if ms > 0.0 {
            tokio::time::sleep(self.to_duration(ms)).await;
        }
    }

    pub async fn sleep_until(&self, at: SimTime) {
        let now = self.now();
        if at > now {
            self.sleep(at - now).await;
        }
    }
}
