//! Command-line front end. Exit codes: 0 success, 1 data error, 2 usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::admission::fod_admit;
use crate::baselines::SchedulerKind;
use crate::config::{gen_batch_instance, load_config, BatchParams, RunConfig};
use crate::error::{Error, Result};
use crate::experiments::{bench, batch_schedule, plan_runs, run_plan, summarize, BenchTarget, CostRow, MetricsRow, RunResult};
use crate::model::{completion_times, read_tasks_csv, read_tasks_json, Schedule, Task};
use crate::oracle::oracle_max_served;
use crate::plot::{line_chart, Series};
use crate::sched_core::{schedule_optimal, schedule_optimal_fast};
use crate::sim::{write_trace_jsonl, SimOptions};

#[derive(Debug, Parser)]
#[command(name = "edgesched", version, about = "Deadline-aware task scheduling and MEC offloading")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// RNG seed; falls back to EDGESCHED_SEED, then the config file.
    #[arg(long, env = "EDGESCHED_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schedule a batch of tasks from a CSV file on one server.
    Schedule {
        /// Task file, CSV (id,arrival_s,cycles,deadline_s,bits,user) or .json
        tasks: PathBuf,
        #[arg(long, default_value = "optimal")]
        scheduler: SchedulerKind,
        /// Server capacity in cycles/s.
        #[arg(long, default_value_t = 1e9)]
        capacity: f64,
        #[arg(long, default_value_t = 0.0)]
        base_time: f64,
    },
    /// Run the simulator (or the sweep in the config) and write metrics,
    /// costs, traces and plots.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        seed: SeedArg,
        /// Overrides the config's scheduler for single runs.
        #[arg(long)]
        scheduler: Option<SchedulerKind>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads for replications; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Also write one trace per run for sweeps.
        #[arg(long)]
        trace: bool,
        /// Check simulator invariants after every event.
        #[arg(long)]
        check: bool,
    },
    /// Time one arrival against pre-built queues of growing size.
    Bench {
        /// fod, optimal, optimal_fast, moore, edf, sdf, dstar_s, dedas or all.
        #[arg(long, default_value = "fod")]
        scheduler: String,
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
        n: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[command(flatten)]
        seed: SeedArg,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the schedulers against the brute-force oracle.
    OracleCheck {
        /// Check this task file instead of random instances.
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 12)]
        max_n: usize,
        #[arg(long, default_value_t = 1e9)]
        capacity: f64,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[arg(long)]
        dump: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn out_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// JSON when the extension says so, CSV otherwise.
fn read_tasks_path(path: &Path) -> Result<Vec<Task>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        read_tasks_json(file)
    } else {
        read_tasks_csv(file)
    }
}

fn load_or_default(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(RunConfig::default()),
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Schedule {
            tasks,
            scheduler,
            capacity,
            base_time,
        } => {
            let tasks = read_tasks_path(&tasks)?;
            cmd_schedule(&tasks, scheduler, capacity, base_time, io::stdout().lock())
        }
        Command::Simulate {
            config,
            seed,
            scheduler,
            out,
            jobs,
            trace,
            check,
        } => {
            let mut cfg = load_or_default(config.as_deref())?;
            if let Some(s) = scheduler {
                cfg.scheduler = s;
            }
            let seed = seed.seed.unwrap_or(cfg.seed);
            cmd_simulate(&cfg, seed, &out, jobs, trace, check)
        }
        Command::Bench {
            scheduler,
            n,
            reps,
            seed,
            out,
        } => {
            let targets: Vec<BenchTarget> = if scheduler == "all" {
                BenchTarget::ALL.to_vec()
            } else {
                scheduler.split(',').map(str::parse).collect::<Result<_>>()?
            };
            cmd_bench(&targets, &n, reps, seed.seed.unwrap_or(0), out_writer(out.as_deref())?)
        }
        Command::OracleCheck {
            tasks,
            instances,
            max_n,
            capacity,
            seed,
            out,
        } => {
            let seed = seed.seed.unwrap_or(0);
            let batches: Vec<Vec<Task>> = match tasks {
                Some(p) => vec![read_tasks_path(&p)?],
                None => random_instances(instances, max_n, seed),
            };
            let mismatches = cmd_oracle_check(&batches, capacity, seed, out_writer(out.as_deref())?)?;
            if mismatches > 0 {
                return Err(Error::Internal(format!("{mismatches} oracle mismatches")));
            }
            Ok(())
        }
        Command::Config { dump, config } => {
            let cfg = load_or_default(config.as_deref())?;
            if dump {
                print!("{}", cfg.to_toml());
            } else {
                cfg.validate()?;
                eprintln!("config ok; pass --dump to print it");
            }
            Ok(())
        }
    }
}

/// Writes `position,id,start_s,finish_s,deadline_s,status`: accepted tasks
/// in execution order, then rejected ones by id. Nothing for an empty batch.
pub fn cmd_schedule<W: Write>(tasks: &[Task], kind: SchedulerKind, capacity: f64, base_time: f64, out: W) -> Result<()> {
    let schedule = batch_schedule(kind, tasks, capacity, base_time)?;
    write_schedule_csv(&schedule, out)
}

pub fn write_schedule_csv<W: Write>(s: &Schedule, out: W) -> Result<()> {
    if s.accepted.is_empty() && s.rejected.is_empty() {
        return Ok(());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["position", "id", "start_s", "finish_s", "deadline_s", "status"])?;
    let finishes = completion_times(s)?;
    let mut start = s.base_time;
    for (i, (t, fin)) in s.accepted.iter().zip(finishes).enumerate() {
        w.write_record([
            (i + 1).to_string(),
            t.id.seq.to_string(),
            start.to_string(),
            fin.to_string(),
            t.deadline.to_string(),
            if fin <= t.deadline { "accepted" } else { "late" }.to_string(),
        ])?;
        start = fin;
    }
    for t in &s.rejected {
        w.write_record([
            String::new(),
            t.id.seq.to_string(),
            String::new(),
            String::new(),
            t.deadline.to_string(),
            "rejected".to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig, seed: u64, out: &Path, jobs: usize, all_traces: bool, check: bool) -> Result<()> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    let plan = plan_runs(cfg, seed);
    let single = cfg.sweep.is_none();
    let opts = SimOptions {
        trace: single || all_traces,
        check_invariants: check,
        record_decisions: false,
    };
    let results = run_plan(plan, &opts, jobs)?;

    write_csv(&out.join("metrics.csv"), results.iter().map(MetricsRow::new))?;
    write_csv(&out.join("cost.csv"), results.iter().map(CostRow::new))?;
    if single {
        write_trace_jsonl(BufWriter::new(File::create(out.join("trace.jsonl"))?), &results[0].trace)?;
    } else if all_traces {
        let dir = out.join("traces");
        fs::create_dir_all(&dir)?;
        for r in &results {
            let name = format!(
                "{}-{}-{}.jsonl",
                r.run.scheduler,
                r.run.value.unwrap_or(0.0),
                r.run.replication
            );
            write_trace_jsonl(BufWriter::new(File::create(dir.join(name))?), &r.trace)?;
        }
    }
    if let Some(sweep) = &cfg.sweep {
        write_plots(&results, sweep.parameter.label(), out)?;
    }
    for r in results.iter().take(50) {
        eprintln!(
            "{} {} rep {}: generated {} served {} ratio {:.4}",
            r.run.scheduler,
            r.run.value.map(|v| v.to_string()).unwrap_or_default(),
            r.run.replication,
            r.metrics.generated,
            r.metrics.served,
            r.metrics.service_ratio()
        );
    }
    Ok(())
}

fn write_plots(results: &[RunResult], x_label: &str, out: &Path) -> Result<()> {
    let summary = summarize(results);
    let mut kinds: Vec<SchedulerKind> = Vec::new();
    for p in &summary {
        if !kinds.contains(&p.scheduler) {
            kinds.push(p.scheduler);
        }
    }
    let series = |f: &dyn Fn(&crate::experiments::PointSummary) -> (f64, f64)| -> Vec<Series> {
        kinds
            .iter()
            .map(|k| Series {
                label: k.to_string(),
                points: summary.iter().filter(|p| p.scheduler == *k).map(f).collect(),
            })
            .collect()
    };
    fs::write(
        out.join("service_ratio.svg"),
        line_chart("Service ratio", x_label, "service ratio", &series(&|p| (p.value, p.service_ratio))),
    )?;
    fs::write(
        out.join("scheduling_cost.svg"),
        line_chart(
            "Scheduling cost per arrival",
            x_label,
            "seconds",
            &series(&|p| (p.value, p.mean_cost_s)),
        ),
    )?;
    fs::write(
        out.join("scheduling_cost_tasks.svg"),
        line_chart(
            "Scheduling cost vs generated tasks",
            "generated tasks",
            "seconds",
            &series(&|p| (p.mean_generated, p.mean_cost_s)),
        ),
    )?;
    Ok(())
}

pub fn cmd_bench<W: Write>(targets: &[BenchTarget], n: &[usize], reps: usize, seed: u64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for &t in targets {
        for row in bench(t, n, reps, seed)?.rows {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Random batches with sizes uniform in `0..=max_n`.
pub fn random_instances(count: usize, max_n: usize, seed: u64) -> Vec<Vec<Task>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(0..=max_n);
            gen_batch_instance(n, rng.random(), &BatchParams::default())
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct OracleRow {
    instance: usize,
    n: usize,
    oracle: usize,
    optimal: usize,
    optimal_fast: usize,
    moore: usize,
    fod_agrees: bool,
    ok: bool,
}

/// Compares served counts and, for one extra random task per instance, the
/// FOD verdict against a full re-schedule. Returns the mismatch count.
pub fn cmd_oracle_check<W: Write>(batches: &[Vec<Task>], capacity: f64, seed: u64, out: W) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf0d);
    let mut mismatches = 0;
    for (i, tasks) in batches.iter().enumerate() {
        let oracle = oracle_max_served(tasks, capacity, 0.0)?.max_served;
        let reference = schedule_optimal(tasks, capacity, 0.0)?;
        let fast = schedule_optimal_fast(tasks, capacity, 0.0)?;
        let moore = crate::baselines::moore_hodgson(tasks, capacity, 0.0)?;

        let extra = gen_batch_instance(1, rng.random(), &BatchParams::default()).pop().unwrap();
        let extra = Task {
            id: crate::model::TaskId::new(u32::MAX, 0),
            origin_user: u32::MAX,
            ..extra
        };
        let queue = Schedule::from_accepted(reference.accepted.clone(), capacity, 0.0);
        let verdict = fod_admit(&queue, &extra, capacity, 0.0)?;
        let mut union = reference.accepted.clone();
        union.push(extra.clone());
        let truth = schedule_optimal(&union, capacity, 0.0)?.accepted.iter().any(|t| t.id == extra.id);

        let row = OracleRow {
            instance: i,
            n: tasks.len(),
            oracle,
            optimal: reference.accepted.len(),
            optimal_fast: fast.accepted.len(),
            moore: moore.accepted.len(),
            fod_agrees: verdict.accepted == truth,
            ok: false,
        };
        let ok = row.optimal == oracle && row.optimal_fast == oracle && row.moore == oracle && row.fod_agrees && fast == reference;
        if !ok {
            mismatches += 1;
        }
        w.serialize(OracleRow { ok, ..row })?;
    }
    w.flush()?;
    Ok(mismatches)
}
