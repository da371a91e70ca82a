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

//! `stratus`: generate data, run plans and reproduce the microbenchmarks.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use stratus::bench::{self, BenchKind, TraceRow};
use stratus::config::EngineConfig;
use stratus::coordinator::PhysicalPlan;
use stratus::datagen::{build_dataset, DataGenOptions, Dataset};
use stratus::Error;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "stratus", version, about = "Serverless-style query engine over a simulated object store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate seeded TPC-H-shaped tables into a directory.
    Gendata(GendataArgs),
    /// Execute one or more plans and write their reports.
    Run(RunArgs),
    /// Run a microbenchmark and write its CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GendataArgs {
    /// Rows in the fact table; the others scale with it.
    #[arg(long, default_value_t = 1_000_000)]
    scale: u64,
    /// Largest base-table object in bytes.
    #[arg(long, default_value_t = 8 << 20)]
    object_size: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConfigArg {
    /// Engine config (TOML). Defaults apply when absent.
    #[arg(long, env = "STRATUS_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, required = true)]
    plan: Vec<PathBuf>,
    /// Directory written by `gendata`.
    #[arg(long)]
    data: PathBuf,
    /// Seed of the first repetition; repetition i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    repeat: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// read-cdf, write-cdf, ablation, shuffle-cost or tradeoff.
    #[arg(long)]
    bench: String,
    #[command(flatten)]
    config: ConfigArg,
    /// Dataset for the plan-level benches.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Requests per arm for the CDF benches.
    #[arg(long)]
    samples: Option<usize>,
    /// Object size for the CDF benches.
    #[arg(long)]
    bytes: Option<u64>,
    /// Paired seeds 1..=n for the plan-level benches.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// Task counts swept by `tradeoff`.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    tasks: Vec<usize>,
    /// CSV output; a per-request trace goes next to it for plan-level benches.
    #[arg(long)]
    out: PathBuf,
}

fn load_config(arg: &ConfigArg) -> stratus::Result<EngineConfig> {
    match &arg.config {
        Some(p) => EngineConfig::load(p),
        None => Ok(EngineConfig::default()),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[(v.len() - 1) / 2]
}

fn gendata(a: &GendataArgs) -> stratus::Result<()> {
    let cfg = EngineConfig::default();
    let opts = DataGenOptions {
        scale: a.scale,
        object_size: a.object_size,
        seed: a.seed,
    };
    let ds = build_dataset(&opts, &cfg.bucket, &cfg.format)?;
    ds.save(&a.out)?;
    let mut counts = serde_json::Map::new();
    for (name, t) in &ds.catalog.tables {
        println!("{name:<10} {:>10} rows {:>4} objects", t.rows(), t.objects.len());
        counts.insert(name.clone(), json!({"rows": t.rows(), "objects": t.objects.len()}));
    }
    let manifest = json!({"scale": a.scale, "object_size": a.object_size, "seed": a.seed, "tables": counts});
    fs::write(a.out.join("rows.json"), serde_json::to_string_pretty(&manifest).unwrap())?;
    println!("{} bytes in {}", ds.total_bytes(), a.out.display());
    Ok(())
}

fn write_trace(path: &Path, rows: &[TraceRow]) -> stratus::Result<()> {
    bench::write_csv(rows, BufWriter::new(File::create(path)?))
}

/// Returns whether every query succeeded.
fn run(a: &RunArgs) -> stratus::Result<bool> {
    let mut cfg = load_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let plans: Vec<PhysicalPlan> = a.plan.iter().map(|p| PhysicalPlan::load(p)).collect::<Result<_, _>>()?;
    for p in &plans {
        p.validate()?;
    }
    let data = Dataset::load(&a.data)?;
    fs::create_dir_all(&a.out)?;

    let mut ok = true;
    let mut summary = Vec::new();
    for plan in &plans {
        let mut runs = Vec::new();
        for i in 0..a.repeat {
            let seed = cfg.seed + i as u64;
            let run = bench::run_plan(&cfg.clone().with_seed(seed), &data, plan)?;
            let r = &run.report;
            let stem = a.out.join(format!("{}-{i}", plan.query));
            fs::write(stem.with_extension("json"), serde_json::to_string_pretty(r).unwrap())?;
            fs::write(stem.with_extension("txt"), r.render())?;
            write_trace(&stem.with_extension("trace.csv"), &bench::trace_rows(&r.exec_id, &run.records))?;
            tracing::info!(exec = %r.exec_id, seed, latency_ms = r.latency_ms, "run finished");
            if !r.succeeded {
                ok = false;
                eprintln!("{} failed: {}", r.exec_id, r.failure.as_deref().unwrap_or("unknown"));
            }
            runs.push(json!({
                "seed": seed,
                "report": stem.with_extension("json").file_name().unwrap().to_string_lossy(),
                "succeeded": r.succeeded,
                "latency_ms": r.latency_ms,
                "dollars": r.cost.total.dollars(),
            }));
        }
        let lat = median(runs.iter().map(|r| r["latency_ms"].as_f64().unwrap()).collect());
        let cost = median(runs.iter().map(|r| r["dollars"].as_f64().unwrap()).collect());
        println!("{}: median latency {lat:.1} ms, median cost ${cost:.6} over {} runs", plan.query, a.repeat);
        summary.push(json!({
            "query": plan.query,
            "median_latency_ms": lat,
            "median_dollars": cost,
            "runs": runs,
        }));
    }
    fs::write(a.out.join("summary.json"), serde_json::to_string_pretty(&summary).unwrap())?;
    Ok(ok)
}

fn plan_inputs(a: &BenchArgs) -> stratus::Result<(Dataset, PhysicalPlan)> {
    let missing = |what: &str| Error::Config(format!("{} needs --{what}", a.bench));
    let data = Dataset::load(a.data.as_deref().ok_or_else(|| missing("data"))?)?;
    let plan = PhysicalPlan::load(a.plan.as_deref().ok_or_else(|| missing("plan"))?)?;
    Ok((data, plan))
}

fn bench_cmd(a: &BenchArgs) -> stratus::Result<()> {
    let kind: BenchKind = a.bench.parse()?;
    let cfg = load_config(&a.config)?;
    let out = BufWriter::new(File::create(&a.out)?);
    let seeds: Vec<u64> = (1..=a.seeds).collect();
    let mut trace = Vec::new();
    match kind {
        BenchKind::ReadCdf => {
            let rows = bench::read_cdf(&cfg, a.samples.unwrap_or(50_000), a.bytes.unwrap_or(256 << 10))?;
            bench::write_csv(&rows, out)?;
        }
        BenchKind::WriteCdf => {
            let rows = bench::write_cdf(&cfg, a.samples.unwrap_or(10_000), a.bytes.unwrap_or(1 << 20))?;
            bench::write_csv(&rows, out)?;
        }
        BenchKind::ShuffleCost => {
            bench::write_csv(&bench::shuffle_cost(&bench::default_shuffle_points(), &cfg)?, out)?;
        }
        BenchKind::Ablation => {
            let (data, plan) = plan_inputs(a)?;
            let rows = bench::ablation(&cfg, &data, &plan, &seeds, Some(&mut trace))?;
            for (label, lat, dollars) in bench::summarize(&rows) {
                println!("{label:<16} {lat:>10.1} ms  ${dollars:.6}");
            }
            bench::write_csv(&rows, out)?;
        }
        BenchKind::Tradeoff => {
            let (data, plan) = plan_inputs(a)?;
            let rows = bench::tradeoff(&cfg, &data, &plan, &a.tasks, &seeds, Some(&mut trace))?;
            for (label, lat, dollars) in bench::summarize(&rows) {
                println!("{label:>6} tasks {lat:>10.1} ms  ${dollars:.6}");
            }
            bench::write_csv(&rows, out)?;
        }
    }
    if !trace.is_empty() {
        write_trace(&a.out.with_extension("trace.csv"), &trace)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env())
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gendata(a) => gendata(a).map(|_| true),
        Command::Run(a) => run(a),
        Command::Bench(a) => bench_cmd(a).map(|_| true),
    };
    let code = match result {
        Ok(true) => 0,
        Ok(false) | Err(Error::QueryFailed { .. }) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    };
    let _ = io::stdout().flush();
    ExitCode::from(code)
}
