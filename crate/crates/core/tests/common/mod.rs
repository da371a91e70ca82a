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

//! Shared test support: a row-at-a-time reference executor used as the
//! correctness oracle, result comparison, and simulation harness helpers.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::future::Future;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};

use stratus::clock::ClockMode;
use stratus::config::EngineConfig;
use stratus::coordinator::{Engine, PhysicalPlan, PlanOp, QueryReport, StageInput};
use stratus::storesim::{RequestKind, RequestRecord};
use stratus::datagen::{build_dataset, DataGenOptions, Dataset};
use stratus::exec::{AggFunc, AggSpec, ArithOp, Expr, SortKey};
use stratus::format::{CmpOp, DataType, FormatOptions, RowBatch, Value};

// ---------------------------------------------------------------------------
// harness

pub fn plans_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("plans")
}

pub fn plan(name: &str) -> PhysicalPlan {
    PhysicalPlan::load(&plans_dir().join(format!("{name}.json"))).unwrap()
}

pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(plans_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "json").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

/// Datasets are expensive at 10^5+ rows; share them across tests.
pub fn dataset(scale: u64, seed: u64) -> &'static Dataset {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), &'static Dataset>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(d) = cache.lock().unwrap().get(&(scale, seed)) {
        return d;
    }
    let opts = DataGenOptions {
        scale,
        object_size: 1 << 20,
        seed,
    };
    let ds: &'static Dataset = Box::leak(Box::new(build_dataset(&opts, "stratus", &FormatOptions::default()).unwrap()));
    cache.lock().unwrap().entry((scale, seed)).or_insert(ds)
}

/// Run `f` on a fresh virtual-clock runtime.
pub fn sim<F: Future>(f: F) -> F::Output {
    ClockMode::Virtual.runtime().unwrap().block_on(f)
}

/// Engine with `ds` installed. Call inside [`sim`].
pub fn engine(cfg: EngineConfig, ds: &Dataset) -> Engine {
    let e = Engine::create(cfg, ds.catalog.clone()).unwrap();
    ds.install(e.store());
    e
}

/// No latency, no mitigation: fastest config for correctness checks.
pub fn quiet_config() -> EngineConfig {
    EngineConfig {
        latency: stratus::storesim::LatencyProfile::zero(),
        mitigation: stratus::mitigation::MitigationConfig::off(),
        ..EngineConfig::default()
    }
}

/// Dollars of one run from first principles: counted records, billed
/// durations rounded up to the granularity, and peak bytes as the sum of
/// distinct written objects. Compared exactly against the report.
pub fn reprice_run(label: &str, cfg: &EngineConfig, report: &QueryReport, records: &[RequestRecord]) -> Result<(), String> {
    let atto = |d: f64| (d * 1e18).round() as u128;
    let prices = &cfg.prices;
    let gets = records.iter().filter(|x| x.kind == RequestKind::Get).count() as u128;
    let puts = records.iter().filter(|x| x.kind == RequestKind::Put).count() as u128;
    let mut objects: BTreeMap<&str, u64> = BTreeMap::new();
    for x in records.iter().filter(|x| x.kind == RequestKind::Put) {
        objects.insert(&x.key.key, x.bytes);
    }
    let peak: u128 = objects.values().map(|&b| b as u128).sum();
    let g = cfg.limits.billing_granularity_ms as u128;
    let billed: u128 = report
        .invocations
        .iter()
        .map(|t| ((t.duration_ms * 1000.0).round() as u128).div_ceil(g * 1000) * g)
        .sum();
    let wall = report.latency_ms.ceil() as u128;
    let get = atto(prices.get_price) * gets;
    let put = atto(prices.put_price) * puts;
    let inv = atto(prices.invocation_price) * billed;
    let storage = atto(prices.storage_price) * peak * wall / (1_000_000_000 * 30 * 24 * 3600 * 1000);
    let cost = &report.cost;
    let pairs = [
        ("get", get, cost.get.atto()),
        ("put", put, cost.put.atto()),
        ("invocation", inv, cost.invocation.atto()),
        ("storage", storage, cost.storage.atto()),
        ("total", get + put + inv + storage, cost.total.atto()),
    ];
    for (name, want, got) in pairs {
        if want != got {
            return Err(format!("{label}: {name} recomputed {want} reported {got}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// reference executor

#[derive(Debug, Clone)]
pub struct Rel {
    pub names: Vec<String>,
    pub types: Vec<DataType>,
    pub rows: Vec<Vec<Value>>,
}

impl Rel {
    pub fn from_batch(b: &RowBatch) -> Rel {
        Rel {
            names: b.schema().fields().iter().map(|f| f.name.clone()).collect(),
            types: b.schema().fields().iter().map(|f| f.data_type).collect(),
            rows: b.to_rows(),
        }
    }

    fn idx(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap_or_else(|| panic!("no column {name}"))
    }
}

fn date(s: &str) -> i32 {
    stratus::exec::parse_date(s).unwrap()
}

fn lit_type(v: &Value) -> Option<DataType> {
    match v {
        Value::Null => None,
        Value::Bool(_) => Some(DataType::Bool),
        Value::Int(_) => Some(DataType::Int64),
        Value::Float(_) => Some(DataType::Float64),
        Value::Date(_) => Some(DataType::Date32),
        Value::Str(_) => Some(DataType::Utf8),
    }
}

fn expr_type(e: &Expr, rel: &Rel) -> Option<DataType> {
    match e {
        Expr::Col(c) => Some(rel.types[rel.idx(c)]),
        Expr::Lit(v) => lit_type(v),
        Expr::Date(_) => Some(DataType::Date32),
        Expr::Cmp(..) | Expr::And(_) | Expr::Or(_) | Expr::Not(_) | Expr::In(..) | Expr::IsNull(_) => {
            Some(DataType::Bool)
        }
        Expr::Arith(op, a, b) => {
            if *op == ArithOp::Div {
                return Some(DataType::Float64);
            }
            match (expr_type(a, rel), expr_type(b, rel)) {
                (Some(DataType::Int64), Some(DataType::Int64)) => Some(DataType::Int64),
                _ => Some(DataType::Float64),
            }
        }
        Expr::If(_, a, b) => expr_type(a, rel).or_else(|| expr_type(b, rel)),
    }
}

fn num(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        other => panic!("not numeric: {other:?}"),
    }
}

fn cmp_values(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Int(_) | Value::Float(_), Value::Int(_) | Value::Float(_)) => num(a).partial_cmp(&num(b)).unwrap(),
        (Value::Date(x), Value::Date(y)) => x.cmp(y),
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        _ => panic!("incomparable {a:?} {b:?}"),
    }
}

fn eval(e: &Expr, rel: &Rel, row: &[Value]) -> Value {
    match e {
        Expr::Col(c) => row[rel.idx(c)].clone(),
        Expr::Lit(v) => v.clone(),
        Expr::Date(s) => Value::Date(date(s)),
        Expr::Cmp(op, a, b) => {
            let (x, y) = (eval(a, rel, row), eval(b, rel, row));
            if x.is_null() || y.is_null() {
                return Value::Null;
            }
            let o = cmp_values(&x, &y);
            Value::Bool(match op {
                CmpOp::Eq => o == Ordering::Equal,
                CmpOp::Ne => o != Ordering::Equal,
                CmpOp::Lt => o == Ordering::Less,
                CmpOp::Le => o != Ordering::Greater,
                CmpOp::Gt => o == Ordering::Greater,
                CmpOp::Ge => o != Ordering::Less,
            })
        }
        Expr::And(es) => {
            let vals: Vec<Value> = es.iter().map(|e| eval(e, rel, row)).collect();
            if vals.contains(&Value::Bool(false)) {
                Value::Bool(false)
            } else if vals.iter().any(Value::is_null) {
                Value::Null
            } else {
                Value::Bool(true)
            }
        }
        Expr::Or(es) => {
            let vals: Vec<Value> = es.iter().map(|e| eval(e, rel, row)).collect();
            if vals.contains(&Value::Bool(true)) {
                Value::Bool(true)
            } else if vals.iter().any(Value::is_null) {
                Value::Null
            } else {
                Value::Bool(false)
            }
        }
        Expr::Not(e) => match eval(e, rel, row) {
            Value::Bool(b) => Value::Bool(!b),
            _ => Value::Null,
        },
        Expr::In(e, list) => {
            let x = eval(e, rel, row);
            if x.is_null() {
                return Value::Null;
            }
            Value::Bool(list.iter().any(|c| {
                let c = eval(c, rel, row);
                !c.is_null() && cmp_values(&x, &c) == Ordering::Equal
            }))
        }
        Expr::Arith(op, a, b) => {
            let (x, y) = (eval(a, rel, row), eval(b, rel, row));
            if x.is_null() || y.is_null() {
                return Value::Null;
            }
            match (op, &x, &y) {
                (ArithOp::Div, _, _) => {
                    if num(&y) == 0.0 {
                        Value::Null
                    } else {
                        Value::Float(num(&x) / num(&y))
                    }
                }
                (ArithOp::Add, Value::Int(p), Value::Int(q)) => Value::Int(p.wrapping_add(*q)),
                (ArithOp::Sub, Value::Int(p), Value::Int(q)) => Value::Int(p.wrapping_sub(*q)),
                (ArithOp::Mul, Value::Int(p), Value::Int(q)) => Value::Int(p.wrapping_mul(*q)),
                (ArithOp::Add, _, _) => Value::Float(num(&x) + num(&y)),
                (ArithOp::Sub, _, _) => Value::Float(num(&x) - num(&y)),
                (ArithOp::Mul, _, _) => Value::Float(num(&x) * num(&y)),
            }
        }
        Expr::If(c, a, b) => match eval(c, rel, row) {
            Value::Bool(true) => eval(a, rel, row),
            _ => eval(b, rel, row),
        },
        Expr::IsNull(e) => Value::Bool(eval(e, rel, row).is_null()),
    }
}

/// Neumaier-compensated sum, used as the float oracle.
#[derive(Default, Clone, Copy)]
struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }
    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Clone)]
enum State {
    IntSum(i64),
    FloatSum(KahanSum),
    Count(i64),
    Extreme(Option<Value>),
    Avg(KahanSum, i64),
}

fn key_string(vals: &[Value]) -> String {
    // -0.0 and 0.0 group together
    vals.iter()
        .map(|v| match v {
            Value::Float(f) if *f == 0.0 => "F0".to_string(),
            other => format!("{other:?}"),
        })
        .collect::<Vec<_>>()
        .join("\u{1}")
}

/// Aggregate `rel`. With `merge` false, `rel` holds raw rows and the output
/// is partial state; with `merge` true, `rel` holds partial state.
fn aggregate(rel: &Rel, spec: &AggSpec, merge: bool) -> Rel {
    let gidx: Vec<usize> = spec.group_by.iter().map(|g| rel.idx(g)).collect();
    let mut names: Vec<String> = spec.group_by.clone();
    let mut types: Vec<DataType> = gidx.iter().map(|&i| rel.types[i]).collect();
    let arg_types: Vec<DataType> = spec
        .aggs
        .iter()
        .map(|a| match (merge, &a.expr) {
            (true, _) if a.func == AggFunc::Avg => DataType::Float64,
            (true, _) => rel.types[rel.idx(&a.name)],
            (false, None) => DataType::Int64,
            (false, Some(e)) => expr_type(e, rel).unwrap_or(DataType::Int64),
        })
        .collect();
    for (a, t) in spec.aggs.iter().zip(&arg_types) {
        match (a.func, merge) {
            (AggFunc::Avg, false) => {
                names.push(format!("{}__sum", a.name));
                types.push(DataType::Float64);
                names.push(format!("{}__count", a.name));
                types.push(DataType::Int64);
            }
            (AggFunc::Avg, true) => {
                names.push(a.name.clone());
                types.push(DataType::Float64);
            }
            (AggFunc::Count, _) => {
                names.push(a.name.clone());
                types.push(DataType::Int64);
            }
            _ => {
                names.push(a.name.clone());
                types.push(*t);
            }
        }
    }

    let fresh = || -> Vec<State> {
        spec.aggs
            .iter()
            .zip(&arg_types)
            .map(|(a, t)| match a.func {
                AggFunc::Sum if *t == DataType::Int64 => State::IntSum(0),
                AggFunc::Sum => State::FloatSum(KahanSum::default()),
                AggFunc::Count => State::Count(0),
                AggFunc::Min | AggFunc::Max => State::Extreme(None),
                AggFunc::Avg => State::Avg(KahanSum::default(), 0),
            })
            .collect()
    };
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<Value>, Vec<State>)> = HashMap::new();
    if spec.group_by.is_empty() {
        order.push(String::new());
        groups.insert(String::new(), (Vec::new(), fresh()));
    }
    for row in &rel.rows {
        let key_vals: Vec<Value> = gidx.iter().map(|&i| row[i].clone()).collect();
        let k = key_string(&key_vals);
        let entry = groups.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            (key_vals, fresh())
        });
        for (a, st) in spec.aggs.iter().zip(entry.1.iter_mut()) {
            if merge {
                match st {
                    State::Avg(s, c) => {
                        let sv = &row[rel.idx(&format!("{}__sum", a.name))];
                        let cv = &row[rel.idx(&format!("{}__count", a.name))];
                        s.add(num(sv));
                        *c += match cv {
                            Value::Int(i) => *i,
                            _ => 0,
                        };
                    }
                    _ => {
                        let v = row[rel.idx(&a.name)].clone();
                        fold(st, a.func, v, true);
                    }
                }
            } else {
                let v = match &a.expr {
                    None => Value::Int(1),
                    Some(e) => eval(e, rel, row),
                };
                fold(st, a.func, v, false);
            }
        }
    }
    let rows = order
        .iter()
        .map(|k| {
            let (kv, states) = &groups[k];
            let mut out = kv.clone();
            for st in states {
                match st {
                    State::IntSum(s) => out.push(Value::Int(*s)),
                    State::FloatSum(s) => out.push(Value::Float(s.value())),
                    State::Count(c) => out.push(Value::Int(*c)),
                    State::Extreme(v) => out.push(v.clone().unwrap_or(Value::Null)),
                    State::Avg(s, c) if merge => out.push(if *c == 0 {
                        Value::Null
                    } else {
                        Value::Float(s.value() / *c as f64)
                    }),
                    State::Avg(s, c) => {
                        out.push(Value::Float(s.value()));
                        out.push(Value::Int(*c));
                    }
                }
            }
            out
        })
        .collect();
    Rel { names, types, rows }
}

fn fold(st: &mut State, func: AggFunc, v: Value, merge: bool) {
    if v.is_null() {
        return;
    }
    match st {
        State::IntSum(s) => {
            if let Value::Int(i) = v {
                *s = s.wrapping_add(i)
            }
        }
        State::FloatSum(s) => s.add(num(&v)),
        State::Count(c) => {
            *c += if merge {
                match v {
                    Value::Int(i) => i,
                    _ => 0,
                }
            } else {
                1
            }
        }
        State::Extreme(cur) => {
            let better = match cur {
                None => true,
                Some(c) => {
                    let o = cmp_values(&v, c);
                    (func == AggFunc::Min && o == Ordering::Less) || (func == AggFunc::Max && o == Ordering::Greater)
                }
            };
            if better {
                *cur = Some(v);
            }
        }
        State::Avg(s, c) => {
            s.add(num(&v));
            *c += 1;
        }
    }
}

fn join(probe: &Rel, build: &Rel, pk: &[String], bk: &[String]) -> Rel {
    let pi: Vec<usize> = pk.iter().map(|k| probe.idx(k)).collect();
    let bi: Vec<usize> = bk.iter().map(|k| build.idx(k)).collect();
    let mut table: HashMap<String, Vec<usize>> = HashMap::new();
    for (r, row) in build.rows.iter().enumerate() {
        let key: Vec<Value> = bi.iter().map(|&i| row[i].clone()).collect();
        if key.iter().any(Value::is_null) {
            continue;
        }
        table.entry(key_string(&key)).or_default().push(r);
    }
    let mut rows = Vec::new();
    for row in &probe.rows {
        let key: Vec<Value> = pi.iter().map(|&i| row[i].clone()).collect();
        if key.iter().any(Value::is_null) {
            continue;
        }
        for &b in table.get(&key_string(&key)).map(Vec::as_slice).unwrap_or(&[]) {
            let mut out = row.clone();
            out.extend(build.rows[b].iter().cloned());
            rows.push(out);
        }
    }
    Rel {
        names: probe.names.iter().chain(&build.names).cloned().collect(),
        types: probe.types.iter().chain(&build.types).copied().collect(),
        rows,
    }
}

fn sort_rel(rel: &mut Rel, keys: &[SortKey]) {
    let idx: Vec<(usize, bool)> = keys.iter().map(|k| (rel.idx(&k.column), k.descending)).collect();
    rel.rows.sort_by(|a, b| {
        for &(i, desc) in &idx {
            let o = match (a[i].is_null(), b[i].is_null()) {
                (true, true) => Ordering::Equal,
                (true, false) => Ordering::Less,
                (false, true) => Ordering::Greater,
                _ => cmp_values(&a[i], &b[i]),
            };
            let o = if desc { o.reverse() } else { o };
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    });
}

/// Evaluate `plan` over whole in-memory tables, one stage at a time, with
/// each stage's operators applied to the union of its inputs.
pub fn reference(plan: &PhysicalPlan, tables: &BTreeMap<String, RowBatch>) -> Rel {
    let mut outputs: HashMap<String, Rel> = HashMap::new();
    for i in plan.topo_order().unwrap() {
        let s = &plan.stages[i];
        let mut rel = match &s.input {
            StageInput::Table { name, columns, .. } => {
                let full = Rel::from_batch(&tables[name]);
                let idx: Vec<usize> = columns.iter().map(|c| full.idx(c)).collect();
                Rel {
                    names: columns.clone(),
                    types: idx.iter().map(|&i| full.types[i]).collect(),
                    rows: full.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
                }
            }
            StageInput::Stage(src) => outputs[src].clone(),
        };
        for op in &s.ops {
            rel = match op {
                PlanOp::Filter(e) => {
                    let rows = rel
                        .rows
                        .iter()
                        .filter(|r| eval(e, &rel, r) == Value::Bool(true))
                        .cloned()
                        .collect();
                    Rel { rows, ..rel }
                }
                PlanOp::Project(exprs) => Rel {
                    names: exprs.iter().map(|e| e.name.clone()).collect(),
                    types: exprs
                        .iter()
                        .map(|e| expr_type(&e.expr, &rel).unwrap_or(DataType::Int64))
                        .collect(),
                    rows: rel
                        .rows
                        .iter()
                        .map(|r| exprs.iter().map(|e| eval(&e.expr, &rel, r)).collect())
                        .collect(),
                },
                PlanOp::Join(j) => {
                    let build = &outputs[j.build.as_deref().unwrap()];
                    join(&rel, build, &j.probe_keys, &j.build_keys)
                }
                PlanOp::PartialAggregate(a) => aggregate(&rel, a, false),
                PlanOp::FinalAggregate(a) => aggregate(&rel, a, true),
                PlanOp::Sort(keys) => {
                    sort_rel(&mut rel, keys);
                    rel
                }
                PlanOp::Limit(n) => {
                    rel.rows.truncate(*n);
                    rel
                }
            };
        }
        outputs.insert(s.id.clone(), rel);
    }
    outputs.remove(&plan.terminal().id).unwrap()
}

// ---------------------------------------------------------------------------
// comparison

fn canonical_cmp(a: &[Value], b: &[Value]) -> Ordering {
    // exact columns first so float noise cannot reorder rows
    let exact = |v: &Value| !matches!(v, Value::Float(_));
    for pass in [true, false] {
        for (x, y) in a.iter().zip(b) {
            if exact(x) != pass && exact(y) != pass {
                continue;
            }
            let o = x.total_cmp(y);
            if o != Ordering::Equal {
                return o;
            }
        }
    }
    Ordering::Equal
}

pub fn values_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => {
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0)
        }
        _ => a == b,
    }
}

/// Row-multiset equality; exact except floats at 1e-9 relative.
pub fn assert_same_rows(label: &str, got: &[Vec<Value>], want: &[Vec<Value>]) {
    assert_eq!(got.len(), want.len(), "{label}: row count {} vs reference {}", got.len(), want.len());
    let mut g = got.to_vec();
    let mut w = want.to_vec();
    g.sort_by(|a, b| canonical_cmp(a, b));
    w.sort_by(|a, b| canonical_cmp(a, b));
    for (i, (x, y)) in g.iter().zip(&w).enumerate() {
        assert_eq!(x.len(), y.len(), "{label}: width differs at row {i}");
        for (c, (p, q)) in x.iter().zip(y).enumerate() {
            assert!(values_match(p, q), "{label}: row {i} col {c}: {p:?} vs reference {q:?}\n{x:?}\n{y:?}");
        }
    }
}
