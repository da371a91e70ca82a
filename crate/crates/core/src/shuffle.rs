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

//! Shuffle topology math: request counts, combiner layout and dollar
//! estimates for standard and multistage shuffles.
//!
//! In a standard shuffle each of `r` consumers reads its partition from each
//! of `s` producer objects, two GETs apiece (metadata, then data). A
//! multistage shuffle inserts `1/(p·f)` combiners: each covers a contiguous
//! group holding a fraction `p` of the partitions and a fraction `f` of the
//! producer files, and re-emits that cell as one partitioned object.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::{Money, PriceSheet};
use crate::error::{Error, Result};
use crate::storesim::ObjectKey;

/// A unit fraction `1/den`, written `"1/den"` (or `"1"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fraction {
    den: u64,
}

impl Fraction {
    pub fn unit(den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidTopology("fraction with zero denominator".into()));
        }
        Ok(Self { den })
    }

    /// The integer `1/self`.
    pub fn inverse(self) -> u64 {
        self.den
    }

    pub fn value(self) -> f64 {
        1.0 / self.den as f64
    }
}

impl TryFrom<String> for Fraction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Fraction> for String {
    fn from(f: Fraction) -> String {
        f.to_string()
    }
}

impl std::str::FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidTopology(format!("fraction {s:?}: expected 1/n with n a positive integer"));
        let (num, den) = match s.trim().split_once('/') {
            Some((a, b)) => (a.trim().parse::<u64>().map_err(|_| bad())?, b.trim().parse::<u64>().map_err(|_| bad())?),
            None => (s.trim().parse::<u64>().map_err(|_| bad())?, 1),
        };
        if num == 0 || den == 0 || num > den || den % num != 0 {
            return Err(bad());
        }
        Fraction::unit(den / num)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "1")
        } else {
            write!(f, "1/{}", self.den)
        }
    }
}

/// How a plan asks for a shuffle into a stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleSpec {
    #[default]
    Standard,
    /// Fractions left out are chosen by [`auto_fractions`].
    Multistage {
        #[serde(default)]
        p: Option<Fraction>,
        #[serde(default)]
        f: Option<Fraction>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Standard,
    Multistage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleTopology {
    pub kind: TopologyKind,
    /// Producer count.
    pub s: u64,
    /// Consumer count, which is also the partition count.
    pub r: u64,
    pub p: Fraction,
    pub f: Fraction,
}

impl ShuffleTopology {
    pub fn standard(s: u64, r: u64) -> Self {
        Self {
            kind: TopologyKind::Standard,
            s,
            r,
            p: Fraction { den: 1 },
            f: Fraction { den: 1 },
        }
    }

    pub fn multistage(s: u64, r: u64, p: Fraction, f: Fraction) -> Self {
        Self {
            kind: TopologyKind::Multistage,
            s,
            r,
            p,
            f,
        }
    }

    /// Resolve a plan's shuffle request for `s` producers and `r` consumers.
    pub fn from_spec(spec: ShuffleSpec, s: u64, r: u64) -> Result<Self> {
        let t = match spec {
            ShuffleSpec::Standard => Self::standard(s, r),
            ShuffleSpec::Multistage { p, f } => {
                let (p, f) = match (p, f) {
                    (Some(p), Some(f)) => (p, f),
                    (None, None) => auto_fractions(s, r)?,
                    (Some(p), None) => (p, complement(r, p.inverse())?),
                    (None, Some(f)) => (complement(r, f.inverse())?, f),
                };
                Self::multistage(s, r, p, f)
            }
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.r == 0 {
            return Err(Error::InvalidTopology(format!("s={} r={}: both must be at least 1", self.s, self.r)));
        }
        if self.kind == TopologyKind::Multistage {
            let (pg, fg) = (self.p.inverse(), self.f.inverse());
            if pg > self.r {
                return Err(Error::InvalidTopology(format!(
                    "p={} splits {} partitions into empty groups",
                    self.p, self.r
                )));
            }
            if fg > self.s {
                return Err(Error::InvalidTopology(format!(
                    "f={} splits {} files into empty groups",
                    self.f, self.s
                )));
            }
        }
        Ok(())
    }

    /// Number of combiners, `1/(p·f)`; zero for a standard shuffle.
    pub fn combiner_count(&self) -> u64 {
        match self.kind {
            TopologyKind::Standard => 0,
            TopologyKind::Multistage => self.p.inverse() * self.f.inverse(),
        }
    }
}

/// Metered GETs for one execution of the shuffle.
pub fn read_count(t: &ShuffleTopology) -> Result<u64> {
    t.validate()?;
    Ok(match t.kind {
        TopologyKind::Standard => 2 * t.s * t.r,
        TopologyKind::Multistage => 2 * (t.s * t.p.inverse() + t.r * t.f.inverse()),
    })
}

/// Contiguous, near-equal split of `0..n` into `k` groups; group `g`.
pub fn group_bounds(n: u64, k: u64, g: u64) -> (usize, usize) {
    ((g * n / k) as usize, ((g + 1) * n / k) as usize)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinerSpec {
    pub index: usize,
    pub partition_group: (usize, usize),
    pub file_group: (usize, usize),
    pub output_key: ObjectKey,
}

/// Lay out the combiner grid. Combiner `pg·(1/f) + fg` reads partition
/// group `pg` from every file in file group `fg`; its output is written
/// under `bucket` at `{prefix}/{index}`.
pub fn plan_multistage(t: &ShuffleTopology, bucket: &str, prefix: &str) -> Result<Vec<CombinerSpec>> {
    t.validate()?;
    if t.kind != TopologyKind::Multistage {
        return Err(Error::InvalidTopology("not a multistage topology".into()));
    }
    let (np, nf) = (t.p.inverse(), t.f.inverse());
    let mut out = Vec::with_capacity((np * nf) as usize);
    for pg in 0..np {
        for fg in 0..nf {
            let index = out.len();
            out.push(CombinerSpec {
                index,
                partition_group: group_bounds(t.r, np, pg),
                file_group: group_bounds(t.s, nf, fg),
                output_key: ObjectKey::new(bucket, format!("{prefix}/{index}")),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleCostEstimate {
    pub get_count: u64,
    pub put_count: u64,
    pub get_dollars: Money,
    pub put_dollars: Money,
}

impl ShuffleCostEstimate {
    pub fn total(&self) -> Money {
        self.get_dollars + self.put_dollars
    }
}

/// Request dollars of the shuffle: its GETs, plus the PUTs of producer and
/// combiner outputs (each doubled under doublewrite).
pub fn estimate_cost(t: &ShuffleTopology, prices: &PriceSheet, doublewrite: bool) -> Result<ShuffleCostEstimate> {
    let get_count = read_count(t)?;
    let put_count = (t.s + t.combiner_count()) * if doublewrite { 2 } else { 1 };
    Ok(ShuffleCostEstimate {
        get_count,
        put_count,
        get_dollars: prices.get().times(get_count),
        put_dollars: prices.put().times(put_count),
    })
}

fn complement(r: u64, known: u64) -> Result<Fraction> {
    if known == 0 || !r.is_multiple_of(known) {
        return Err(Error::InvalidTopology(format!(
            "cannot complete a fraction 1/{known} to r={r} combiners"
        )));
    }
    Fraction::unit(r / known)
}

/// Fractions for `r` combiners (`1/(p·f) = r`) that minimise reads
/// `2(s·a + r·r/a)` over divisors `a = 1/p` of `r`, preferring the coarser
/// partition fraction on ties.
pub fn auto_fractions(s: u64, r: u64) -> Result<(Fraction, Fraction)> {
    if s == 0 || r == 0 {
        return Err(Error::InvalidTopology("auto fractions need s, r ≥ 1".into()));
    }
    let best = (1..=r)
        .filter(|a| r.is_multiple_of(*a) && r / a <= s)
        .min_by_key(|&a| (s * a + r * (r / a), a))
        .ok_or_else(|| Error::InvalidTopology(format!("no combiner grid for s={s} r={r}")))?;
    Ok((Fraction::unit(best)?, Fraction::unit(r / best)?))
}
