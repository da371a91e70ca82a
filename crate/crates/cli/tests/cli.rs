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

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn plan(name: &str) -> PathBuf {
    root().join("crates/core/plans").join(format!("{name}.json"))
}

fn stratus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratus"))
        .args(args)
        .env_remove("STRATUS_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = stratus(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gendata(dir: &Path, scale: u64, object_size: u64, seed: u64) {
    let (scale, size, seed) = (scale.to_string(), object_size.to_string(), seed.to_string());
    ok(&["gendata", "--scale", &scale, "--object-size", &size, "--seed", &seed, "--out", p(dir)]);
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(dir).unwrap().display().to_string(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn scale_zero_gives_empty_tables() {
    let t = TempDir::new().unwrap();
    gendata(t.path(), 0, 1 << 20, 1);
    let m = json(&t.path().join("rows.json"));
    for (name, table) in m["tables"].as_object().unwrap() {
        assert_eq!(table["rows"], 0, "{name}");
    }
}

#[test]
fn same_seed_gives_identical_objects() {
    let (a, b, c) = (TempDir::new().unwrap(), TempDir::new().unwrap(), TempDir::new().unwrap());
    gendata(a.path(), 5_000, 64 << 10, 4);
    gendata(b.path(), 5_000, 64 << 10, 4);
    gendata(c.path(), 5_000, 64 << 10, 5);
    assert_eq!(files(a.path()), files(b.path()));
    assert_ne!(files(a.path()), files(c.path()));
}

#[test]
fn objects_respect_the_size_cap() {
    let t = TempDir::new().unwrap();
    let cap = 256u64 << 10;
    gendata(t.path(), 200_000, cap, 1);
    let lineitem: Vec<u64> = files(t.path())
        .iter()
        .filter(|(name, _)| name.contains("lineitem/"))
        .map(|(_, bytes)| bytes.len() as u64)
        .collect();
    let total: u64 = lineitem.iter().sum();
    assert!(lineitem.len() as u64 >= total.div_ceil(cap), "{} objects for {total} bytes", lineitem.len());
    assert!(lineitem.iter().all(|&b| b <= cap));
    let m = json(&t.path().join("rows.json"));
    assert_eq!(m["tables"]["lineitem"]["objects"], lineitem.len());
    assert_eq!(m["tables"]["lineitem"]["rows"], 200_000);
}

#[test]
fn run_writes_reports_and_the_median_of_repeats() {
    let t = TempDir::new().unwrap();
    let (data, out) = (t.path().join("data"), t.path().join("out"));
    gendata(&data, 10_000, 128 << 10, 1);
    let stdout = ok(&["run", "--plan", p(&plan("q1")), "--data", p(&data), "--repeat", "3", "--seed", "40", "--out", p(&out)]);
    let text = fs::read_to_string(out.join("q1-0.txt")).unwrap();
    assert!(text.contains("scan") && text.contains("final"), "{text}");

    let mut lat: Vec<f64> = (0..3)
        .map(|i| json(&out.join(format!("q1-{i}.json")))["latency_ms"].as_f64().unwrap())
        .collect();
    let seeds: Vec<u64> = json(&out.join("summary.json"))[0]["runs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [40, 41, 42]);
    lat.sort_by(f64::total_cmp);
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary[0]["median_latency_ms"].as_f64().unwrap(), lat[1]);
    assert!(stdout.contains(&format!("median latency {:.1} ms", lat[1])), "{stdout}");

    let trace = fs::read_to_string(out.join("q1-0.trace.csv")).unwrap();
    let report = json(&out.join("q1-0.json"));
    assert_eq!(trace.lines().count() as u64 - 1, report["counts"]["gets"].as_u64().unwrap() + report["counts"]["puts"].as_u64().unwrap());
}

#[test]
fn mitigation_lowers_mean_latency_under_the_tail_profile() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    gendata(&data, 20_000, 64 << 10, 1);
    let tail = fs::read_to_string(root().join("configs/tail.toml")).unwrap();
    let off = t.path().join("off.toml");
    fs::write(&off, format!("{tail}\n[mitigation]\nparallel_reads = 1\nrsm = false\nwsm = \"off\"\ndoublewrite = false\n")).unwrap();
    let mean = |cfg: &Path, name: &str| {
        let out = t.path().join(name);
        ok(&["run", "--config", p(cfg), "--plan", p(&plan("q12")), "--data", p(&data), "--repeat", "3", "--out", p(&out)]);
        let s = json(&out.join("summary.json"));
        let runs = s[0]["runs"].as_array().unwrap();
        runs.iter().map(|r| r["latency_ms"].as_f64().unwrap()).sum::<f64>() / runs.len() as f64
    };
    let (without, with) = (mean(&off, "off"), mean(&root().join("configs/tail.toml"), "on"));
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn failed_query_exits_with_one() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    gendata(&data, 2_000, 64 << 10, 1);
    let mut q: Value = json(&plan("q6"));
    q["stages"][0]["faults"] = serde_json::json!([{"task": 0, "fail_attempts": 9}]);
    let bad = t.path().join("bad.json");
    fs::write(&bad, q.to_string()).unwrap();
    let out = stratus(&["run", "--plan", p(&bad), "--data", p(&data), "--out", p(&t.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&t.path().join("o/q6-0.json"))["succeeded"], false);
}

#[test]
fn configuration_errors_exit_with_two() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("c.toml");
    fs::write(&cfg, "[limits]\nmax_concurent = 3\n").unwrap();
    let out = stratus(&["bench", "--bench", "read-cdf", "--samples", "10", "--config", p(&cfg), "--out", p(&t.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("limits.max_concurent"));

    let out = stratus(&["bench", "--bench", "fig5", "--out", p(&t.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(env!("CARGO_BIN_EXE_stratus"))
        .args(["bench", "--bench", "read-cdf", "--samples", "10", "--out", p(&t.path().join("y.csv"))])
        .env("STRATUS_CONFIG", t.path().join("missing.toml"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = stratus(&["bench", "--bench", "ablation", "--out", p(&t.path().join("z.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shuffle_cost_reports_the_worked_example() {
    let t = TempDir::new().unwrap();
    let csv = t.path().join("s.csv");
    ok(&["bench", "--bench", "shuffle-cost", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.contains("512,128,standard,1,1,0,131072,1024,"), "{text}");
    assert!(text.contains("5120,1280,standard,1,1,0,13107200,"), "{text}");
}

#[test]
fn read_cdf_emits_both_arms() {
    let t = TempDir::new().unwrap();
    let csv = t.path().join("r.csv");
    ok(&["bench", "--bench", "read-cdf", "--samples", "500", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "arm,index,latency_ms,hedged");
    assert_eq!(text.lines().filter(|l| l.starts_with("rsm_off,")).count(), 500);
    assert_eq!(text.lines().filter(|l| l.starts_with("rsm_on,")).count(), 500);
}

#[test]
fn tradeoff_sweeps_task_counts() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    gendata(&data, 50_000, 64 << 10, 1);
    let csv = t.path().join("t.csv");
    // Compute-bound tasks, so spreading the work shortens the query.
    let cfg = root().join("configs/tail.toml");
    let stdout = ok(&[
        "bench", "--bench", "tradeoff", "--config", p(&cfg), "--data", p(&data), "--plan", p(&plan("q12")),
        "--seeds", "2", "--out", p(&csv),
    ]);
    let mut rdr = fs::read_to_string(&csv).unwrap();
    rdr = rdr.lines().skip(1).collect::<Vec<_>>().join("\n");
    let rows: Vec<(usize, f64)> = rdr
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].parse().unwrap(), f[4].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 8);
    let mean = |tasks: usize| rows.iter().filter(|r| r.0 == tasks).map(|r| r.1).sum::<f64>() / 2.0;
    assert!(mean(128) < mean(16), "{stdout}");
    assert!(csv.with_extension("trace.csv").exists());
}

#[test]
fn ablation_writes_one_row_per_step_and_seed() {
    let t = TempDir::new().unwrap();
    let data = t.path().join("data");
    gendata(&data, 10_000, 64 << 10, 1);
    let csv = t.path().join("a.csv");
    ok(&["bench", "--bench", "ablation", "--data", p(&data), "--plan", p(&plan("q12")), "--seeds", "2", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 5);
    for step in ["none", "parallel_reads", "rsm", "wsm", "doublewrite"] {
        assert_eq!(text.lines().filter(|l| l.starts_with(&format!("{step},"))).count(), 2, "{step}");
    }
}
