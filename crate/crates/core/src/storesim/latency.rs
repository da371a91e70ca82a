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

//! Latency distributions and the per-request sampling path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use xxhash_rust::xxh3::Xxh3;

use crate::error::{Error, Result};

/// A distribution over non-negative milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Constant { ms: f64 },
    Uniform { lo_ms: f64, hi_ms: f64 },
    LogNormal { median_ms: f64, sigma: f64 },
    Exponential { mean_ms: f64 },
    /// Piecewise-linear quantile table of `[cumulative probability, ms]`
    /// points. The first point must have probability 0 and the last 1.
    Empirical { quantiles: Vec<[f64; 2]> },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Constant { ms: 0.0 }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Distribution {
    pub fn constant(ms: f64) -> Self {
        Distribution::Constant { ms }
    }

    pub fn lognormal(median_ms: f64, sigma: f64) -> Self {
        Distribution::LogNormal { median_ms, sigma }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("{m} in {self:?}")));
        match self {
            Distribution::Constant { ms } if *ms < 0.0 || !ms.is_finite() => bad("negative constant"),
            Distribution::Uniform { lo_ms, hi_ms } if *lo_ms < 0.0 || hi_ms < lo_ms => {
                bad("bad uniform bounds")
            }
            Distribution::LogNormal { median_ms, sigma } if *median_ms <= 0.0 || *sigma < 0.0 => {
                bad("bad lognormal parameters")
            }
            Distribution::Exponential { mean_ms } if *mean_ms < 0.0 => bad("negative mean"),
            Distribution::Empirical { quantiles } => {
                if quantiles.len() < 2 {
                    return bad("empirical table needs at least two points");
                }
                if quantiles[0][0] != 0.0 || quantiles[quantiles.len() - 1][0] != 1.0 {
                    return bad("empirical table must span probability 0..1");
                }
                if quantiles[0][1] < 0.0 {
                    return bad("negative quantile");
                }
                if quantiles.windows(2).any(|w| w[1][0] < w[0][0] || w[1][1] < w[0][1]) {
                    return bad("empirical table must be non-decreasing");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Constant { ms } => *ms,
            Distribution::Uniform { lo_ms, hi_ms } => lo_ms + (hi_ms - lo_ms) * rng.random::<f64>(),
            Distribution::LogNormal { median_ms, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                median_ms * (sigma * z).exp()
            }
            Distribution::Exponential { mean_ms } => {
                let u: f64 = rng.random();
                -mean_ms * (1.0 - u).ln()
            }
            Distribution::Empirical { quantiles } => {
                let u: f64 = rng.random();
                quantile_of(quantiles, u)
            }
        }
    }

    /// P(X <= x).
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Distribution::Constant { ms } => {
                if x >= *ms {
                    1.0
                } else {
                    0.0
                }
            }
            Distribution::Uniform { lo_ms, hi_ms } => {
                if x < *lo_ms {
                    0.0
                } else if x >= *hi_ms {
                    1.0
                } else {
                    (x - lo_ms) / (hi_ms - lo_ms)
                }
            }
            Distribution::LogNormal { median_ms, sigma } => {
                if x <= 0.0 {
                    0.0
                } else if *sigma == 0.0 {
                    if x >= *median_ms {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    std_normal_cdf((x / median_ms).ln() / sigma)
                }
            }
            Distribution::Exponential { mean_ms } => {
                if x < 0.0 {
                    0.0
                } else if *mean_ms == 0.0 {
                    1.0
                } else {
                    1.0 - (-x / mean_ms).exp()
                }
            }
            Distribution::Empirical { quantiles } => {
                if x < quantiles[0][1] {
                    return 0.0;
                }
                for w in quantiles.windows(2) {
                    let ([p0, v0], [p1, v1]) = (w[0], w[1]);
                    if x < v1 {
                        return if v1 > v0 { p0 + (p1 - p0) * (x - v0) / (v1 - v0) } else { p1 };
                    }
                }
                1.0
            }
        }
    }

    pub fn median(&self) -> f64 {
        match self {
            Distribution::Constant { ms } => *ms,
            Distribution::Uniform { lo_ms, hi_ms } => 0.5 * (lo_ms + hi_ms),
            Distribution::LogNormal { median_ms, .. } => *median_ms,
            Distribution::Exponential { mean_ms } => mean_ms * std::f64::consts::LN_2,
            Distribution::Empirical { quantiles } => quantile_of(quantiles, 0.5),
        }
    }
}

fn quantile_of(table: &[[f64; 2]], u: f64) -> f64 {
    for w in table.windows(2) {
        let ([p0, v0], [p1, v1]) = (w[0], w[1]);
        if u <= p1 {
            if p1 > p0 {
                return v0 + (v1 - v0) * (u - p0) / (p1 - p0);
            }
            return v1;
        }
    }
    table[table.len() - 1][1]
}

/// Latency of one request kind: a base sample, a size-proportional transfer
/// term, and with some probability an additive tail sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RequestLatency {
    pub base: Distribution,
    /// Inverse throughput, seconds per byte.
    pub per_byte_seconds: f64,
    pub tail_probability: f64,
    pub tail: Distribution,
}

/// One sampled request duration, split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RequestSample {
    pub base_ms: f64,
    pub transfer_ms: f64,
    pub tail_ms: f64,
}

impl RequestSample {
    pub fn total(&self) -> f64 {
        self.base_ms + self.transfer_ms + self.tail_ms
    }
}

impl RequestLatency {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.tail.validate()?;
        if !(0.0..=1.0).contains(&self.tail_probability) {
            return Err(Error::Config(format!(
                "tail_probability {} outside [0,1]",
                self.tail_probability
            )));
        }
        if self.per_byte_seconds < 0.0 {
            return Err(Error::Config("per_byte_seconds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn transfer_ms(&self, bytes: u64) -> f64 {
        bytes as f64 * self.per_byte_seconds * 1000.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, bytes: u64, rng: &mut R) -> RequestSample {
        let base_ms = self.base.sample(rng).max(0.0);
        // Always draw the coin so the stream position does not depend on it.
        let coin: f64 = rng.random();
        let tail_ms = if coin < self.tail_probability {
            self.tail.sample(rng).max(0.0)
        } else {
            0.0
        };
        RequestSample {
            base_ms,
            transfer_ms: self.transfer_ms(bytes),
            tail_ms,
        }
    }

    /// Exact P(duration <= x) for a request of `bytes`, available when the
    /// tail is absent or a point mass.
    pub fn cdf(&self, bytes: u64, x: f64) -> Option<f64> {
        let y = x - self.transfer_ms(bytes);
        let body = self.base.cdf(y);
        if self.tail_probability == 0.0 {
            return Some(body);
        }
        match self.tail {
            Distribution::Constant { ms } => Some(
                (1.0 - self.tail_probability) * body + self.tail_probability * self.base.cdf(y - ms),
            ),
            _ => None,
        }
    }
}

/// Sample the duration of one request of `bytes` under `latency`.
pub fn sample_request_time<R: Rng + ?Sized>(latency: &RequestLatency, bytes: u64, rng: &mut R) -> f64 {
    latency.sample(bytes, rng).total()
}

/// Complete latency model of the simulated store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LatencyProfile {
    pub get: RequestLatency,
    /// For PUTs the transfer term is the client send phase; base and tail
    /// make up the service response phase.
    pub put: RequestLatency,
    pub visibility_delay_probability: f64,
    pub visibility_delay: Distribution,
    pub rng_seed: u64,
}

impl LatencyProfile {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.get.validate()?;
        self.put.validate()?;
        self.visibility_delay.validate()?;
        if !(0.0..=1.0).contains(&self.visibility_delay_probability) {
            return Err(Error::Config(format!(
                "visibility_delay_probability {} outside [0,1]",
                self.visibility_delay_probability
            )));
        }
        Ok(())
    }
}

/// Deterministic generator for one request, keyed by the profile seed, the
/// request stream name and the request's index within that stream.
pub fn request_rng(seed: u64, stream: &str, index: u64) -> ChaCha8Rng {
    let mut h = Xxh3::with_seed(seed);
    h.update(stream.as_bytes());
    h.update(&index.to_le_bytes());
    ChaCha8Rng::seed_from_u64(h.digest())
}
