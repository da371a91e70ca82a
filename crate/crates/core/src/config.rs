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

//! Run configuration: latency profile, prices, runtime limits, mitigation
//! toggles and the run seed, loaded from a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clock::ClockMode;
use crate::cost::PriceSheet;
use crate::error::{Error, Result};
use crate::format::FormatOptions;
use crate::mitigation::MitigationConfig;
use crate::runtime::RuntimeLimits;
use crate::storesim::{Distribution, LatencyProfile, RequestLatency};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub format_version: u32,
    /// Seeds the store's latency sampling and the query hash partitioners.
    /// Replaces `latency.rng_seed` when the engine is built.
    pub seed: u64,
    pub bucket: String,
    pub clock: ClockMode,
    pub latency: LatencyProfile,
    pub prices: PriceSheet,
    pub limits: RuntimeLimits,
    pub mitigation: MitigationConfig,
    pub format: FormatOptions,
    /// Modeled operator CPU cost.
    pub compute_ns_per_row: f64,
    /// Extra attempts per task before the query fails.
    pub task_retries: u32,
    /// Start consumer stages early for every stage, not just those whose
    /// plan entry sets a threshold.
    pub pipelining: bool,
    pub pipeline_threshold: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            seed: 1,
            bucket: "stratus".into(),
            clock: ClockMode::Virtual,
            latency: s3_like_profile(),
            prices: PriceSheet::default(),
            limits: RuntimeLimits {
                max_concurrent: 64,
                ..RuntimeLimits::default()
            },
            mitigation: MitigationConfig::default(),
            format: FormatOptions::default(),
            compute_ns_per_row: 100.0,
            task_retries: 2,
            pipelining: false,
            pipeline_threshold: 0.9,
        }
    }
}

impl EngineConfig {
    /// Parse a config file. Keys it sets override the defaults one by one;
    /// a tagged table (a distribution, the clock) replaces the default
    /// table whole. Unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let overlay: toml::Table = text.parse().map_err(|e| bad(&e))?;
        let mut base = toml::Table::try_from(EngineConfig::default()).map_err(|e| bad(&e))?;
        merge(&mut base, overlay, "")?;
        let cfg: EngineConfig = toml::Value::Table(base).try_into().map_err(|e| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        if self.bucket.is_empty() {
            return Err(Error::Config("bucket must not be empty".into()));
        }
        if let ClockMode::Scaled { factor } = self.clock {
            if !(factor > 0.0) {
                return Err(Error::Config("clock factor must be positive".into()));
            }
        }
        self.latency.validate()?;
        self.prices.validate()?;
        self.limits.validate()?;
        self.mitigation.validate()?;
        if !(self.compute_ns_per_row >= 0.0) {
            return Err(Error::Config("compute_ns_per_row must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.pipeline_threshold) {
            return Err(Error::Config("pipeline_threshold outside [0,1]".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Latency profile with the run seed applied.
    pub fn store_profile(&self) -> LatencyProfile {
        LatencyProfile {
            rng_seed: self.seed,
            ..self.latency.clone()
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table, path: &str) -> Result<()> {
    for (k, v) in overlay {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match (base.get_mut(&k), v) {
            (None, _) => return Err(Error::Config(format!("unknown key `{here}`"))),
            (Some(toml::Value::Table(b)), toml::Value::Table(o))
                if !o.contains_key("kind") && !o.contains_key("mode") =>
            {
                merge(b, o, &here)?
            }
            (Some(slot), v) => *slot = v,
        }
    }
    Ok(())
}

/// Default store behavior: a lognormal body around 14 ms for small reads,
/// rare one-second read stragglers, slower and heavier-tailed writes, and
/// occasional delayed visibility.
pub fn s3_like_profile() -> LatencyProfile {
    LatencyProfile {
        get: RequestLatency {
            base: Distribution::lognormal(12.0, 0.35),
            per_byte_seconds: 1.0 / 150e6,
            tail_probability: 0.003,
            tail: Distribution::constant(1000.0),
        },
        put: RequestLatency {
            base: Distribution::lognormal(25.0, 0.45),
            per_byte_seconds: 1.0 / 100e6,
            tail_probability: 0.01,
            tail: Distribution::lognormal(2500.0, 0.5),
        },
        visibility_delay_probability: 0.001,
        visibility_delay: Distribution::Uniform {
            lo_ms: 500.0,
            hi_ms: 3000.0,
        },
        rng_seed: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = EngineConfig::default();
        let back = EngineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = EngineConfig::from_toml("seed = 9\n[limits]\nmax_concurrent = 4\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.limits.max_concurrent, 4);
        assert_eq!(cfg.limits.max_duration_ms, 900_000.0);
        assert_eq!(cfg.store_profile().rng_seed, 9);
    }

    #[test]
    fn nested_override_keeps_siblings() {
        let cfg = EngineConfig::from_toml("[latency.put]\ntail_probability = 0.5\n[latency.put.tail]\nkind = \"constant\"\nms = 9.0\n")
            .unwrap();
        let d = EngineConfig::default();
        assert_eq!(cfg.latency.put.tail_probability, 0.5);
        assert_eq!(cfg.latency.put.tail, Distribution::constant(9.0));
        assert_eq!(cfg.latency.put.base, d.latency.put.base);
        assert_eq!(cfg.latency.get, d.latency.get);
        let scaled = EngineConfig::from_toml("[clock]\nmode = \"scaled\"\nfactor = 0.5\n").unwrap();
        assert_eq!(scaled.clock, ClockMode::Scaled { factor: 0.5 });
    }

    #[test]
    fn bundled_configs_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut n = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            EngineConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
        assert!(n >= 4);
        let default = EngineConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")).unwrap();
        assert_eq!(default, EngineConfig::default());
    }

    #[test]
    fn bad_values_rejected() {
        assert!(EngineConfig::from_toml("format_version = 2").is_err());
        assert!(EngineConfig::from_toml("nonsense = 1").is_err());
        assert!(EngineConfig::from_toml("[mitigation]\nretry_factor = 0.5").is_err());
        assert!(EngineConfig::from_toml("[prices]\nget_price = -1.0").is_err());
        assert!(EngineConfig::from_toml("[mitigation]\nrms = true").is_err());
        assert!(EngineConfig::from_toml("sed = 3").is_err());
    }
}
