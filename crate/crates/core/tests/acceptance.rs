//! End-to-end acceptance suite. Runs every criterion in order, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.
//!
//! Run with `cargo test -p edgesched --test acceptance`.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use edgesched::admission::fod_admit;
use edgesched::baselines::SchedulerKind;
use edgesched::cli::{cmd_schedule, random_instances};
use edgesched::config::{load_config, BatchParams, RunConfig, SweepParameter};
use edgesched::experiments::{
    batch_stream_outages, bench, plan_runs, run_plan, spearman, summarize, BatchStream, BenchTarget,
    PointSummary,
};
use edgesched::model::{Schedule, Task, TaskId};
use edgesched::oracle::{oracle_max_served, oracle_max_served_permutations};
use edgesched::sched_core::{schedule_optimal, schedule_optimal_fast};
use edgesched::sim::{run_with, SimOptions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const GHZ: f64 = 1e9;
/// Oracle instances run on a slow server so most of them force rejections.
const ORACLE_CAPACITY: f64 = 0.4e9;
const PROPOSED: SchedulerKind = SchedulerKind::Fod;
const BASELINES: [SchedulerKind; 5] = [
    SchedulerKind::Edf,
    SchedulerKind::Sdf,
    SchedulerKind::DstarS,
    SchedulerKind::Moore,
    SchedulerKind::Dedas,
];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn task(seq: u32, cycles: u64, deadline: f64) -> Task {
    Task::new(TaskId::new(0, seq), 0.0, cycles, deadline, 0.0).unwrap()
}

fn c1_golden() -> Outcome {
    let table = [(1, 4, 8.0), (2, 5, 6.0), (3, 2, 11.0), (4, 1, 6.0), (5, 2, 4.0)];
    let tasks: Vec<Task> = table
        .iter()
        .map(|&(id, mc, ms)| task(id, mc * 1_000_000, ms / 1000.0))
        .collect();
    let mut out = Vec::new();
    let t0 = Instant::now();
    cmd_schedule(&tasks, SchedulerKind::Optimal, GHZ, 0.0, &mut out).map_err(|e| e.to_string())?;
    let dt = t0.elapsed();
    let text = String::from_utf8(out).unwrap();
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let id = f[1].rsplit(':').next().unwrap().to_string();
        match f[5] {
            "accepted" => accepted.push(id),
            _ => rejected.push(id),
        }
    }
    ensure(accepted == ["5", "4", "1", "3"], || format!("accepted {accepted:?}"))?;
    ensure(rejected == ["2"], || format!("rejected {rejected:?}"))?;
    ensure(dt < Duration::from_millis(1), || format!("took {dt:?}"))?;
    Ok(format!("accepted [5,4,1,3], rejected {{2}} in {dt:?}"))
}

fn c2_optimality() -> Outcome {
    let t0 = Instant::now();
    let instances = random_instances(1000, 12, 2);
    let mut matched = 0;
    let mut with_rejections = 0;
    for tasks in &instances {
        let best = oracle_max_served(tasks, ORACLE_CAPACITY, 0.0).unwrap().max_served;
        let got = schedule_optimal(tasks, ORACLE_CAPACITY, 0.0).unwrap().accepted.len();
        matched += usize::from(got == best);
        with_rejections += usize::from(best < tasks.len());
    }
    let dt = t0.elapsed();
    ensure(matched == 1000, || format!("{matched}/1000 matched"))?;
    ensure(dt < Duration::from_secs(60), || format!("took {dt:?}"))?;
    Ok(format!("1000/1000 ({with_rejections} with outages) in {dt:.2?}"))
}

fn c3_oracles() -> Outcome {
    let instances = random_instances(500, 7, 3);
    let mut matched = 0;
    for tasks in &instances {
        let a = oracle_max_served(tasks, ORACLE_CAPACITY, 0.0).unwrap().max_served;
        let b = oracle_max_served_permutations(tasks, ORACLE_CAPACITY, 0.0).unwrap().max_served;
        matched += usize::from(a == b);
    }
    ensure(matched == 500, || format!("{matched}/500 matched"))?;
    Ok("500/500".into())
}

/// Tasks drawn from small value pools so equal work, equal deadlines and
/// completions landing exactly on a deadline are common.
fn tie_heavy(rng: &mut ChaCha8Rng, n: usize, first_seq: u32) -> Vec<Task> {
    (0..n)
        .map(|i| {
            let cycles = rng.random_range(1..=4u64) * 100_000_000;
            let deadline = rng.random_range(1..=12u32) as f64 / 10.0;
            task(first_seq + i as u32, cycles, deadline)
        })
        .collect()
}

fn c4_fod() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = BatchParams::default();
    let mut matched = 0;
    let mut admitted = 0;
    for k in 0..1000 {
        let n = rng.random_range(0..=40);
        let (pool, new) = if k % 2 == 0 {
            let mut all = tie_heavy(&mut rng, n + 1, 1);
            let new = all.pop().unwrap();
            (all, new)
        } else {
            let mut all = edgesched::config::gen_batch_instance(n + 1, rng.random(), &params);
            let new = all.pop().unwrap();
            (all, new)
        };
        let queue = schedule_optimal(&pool, GHZ, 0.0).unwrap();
        let queue = Schedule::from_accepted(queue.accepted, GHZ, 0.0);
        let verdict = fod_admit(&queue, &new, GHZ, 0.0).unwrap();
        let mut union = queue.accepted.clone();
        union.push(new.clone());
        let truth = schedule_optimal(&union, GHZ, 0.0)
            .unwrap()
            .accepted
            .iter()
            .any(|t| t.id == new.id);
        matched += usize::from(verdict.accepted == truth);
        admitted += usize::from(truth);
    }
    ensure(matched == 1000, || format!("{matched}/1000 verdicts agree"))?;
    Ok(format!("1000/1000 ({admitted} admitted, 500 tie-heavy)"))
}

fn c5_variants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = BatchParams::default();
    let mut identical = 0;
    for k in 0..1000 {
        let n = rng.random_range(0..=60);
        let tasks = if k % 2 == 0 {
            tie_heavy(&mut rng, n, 1)
        } else {
            let mut t = edgesched::config::gen_batch_instance(n, rng.random(), &params);
            // Copy work and deadlines between tasks to force duplicates.
            for i in 1..t.len() {
                if rng.random_bool(0.3) {
                    let j = rng.random_range(0..i);
                    t[i].cpu_cycles = t[j].cpu_cycles;
                }
                if rng.random_bool(0.3) {
                    let j = rng.random_range(0..i);
                    t[i].deadline = t[j].deadline;
                }
            }
            t
        };
        let base = if k % 3 == 0 { 0.25 } else { 0.0 };
        let a = schedule_optimal(&tasks, GHZ, base).unwrap();
        let b = schedule_optimal_fast(&tasks, GHZ, base).unwrap();
        identical += usize::from(a == b);
    }
    ensure(identical == 1000, || format!("{identical}/1000 identical"))?;
    Ok("1000/1000 identical".into())
}

fn c6_batch_stream() -> Outcome {
    let stream = BatchStream {
        batches: 200,
        batch_size: 50,
        capacity: 1.5 * GHZ,
        params: BatchParams::default(),
        seed: 1,
    };
    let kinds = [
        SchedulerKind::Optimal,
        SchedulerKind::Fod,
        SchedulerKind::Moore,
        SchedulerKind::Edf,
        SchedulerKind::Sdf,
        SchedulerKind::DstarS,
    ];
    let counts = batch_stream_outages(&stream, &kinds).map_err(|e| e.to_string())?;
    let of = |k: SchedulerKind| counts.iter().find(|c| c.0 == k).unwrap().1;
    let proposed = of(SchedulerKind::Fod);
    ensure(of(SchedulerKind::Optimal) == proposed, || {
        format!("optimal {} != fod {proposed}", of(SchedulerKind::Optimal))
    })?;
    ensure(of(SchedulerKind::Moore) == proposed, || {
        format!("moore {} != proposed {proposed}", of(SchedulerKind::Moore))
    })?;
    for k in [SchedulerKind::Edf, SchedulerKind::Sdf, SchedulerKind::DstarS] {
        ensure(of(k) as f64 >= 1.05 * proposed as f64, || {
            format!("{k} {} not 5% above proposed {proposed}", of(k))
        })?;
    }
    let list: Vec<String> = counts.iter().map(|(k, c)| format!("{k}={c}")).collect();
    Ok(format!("outages of 10000: {}", list.join(" ")))
}

fn sweep(file: &str) -> Result<(RunConfig, Vec<PointSummary>), String> {
    let cfg = load_config(configs_dir().join(file)).map_err(|e| e.to_string())?;
    let opts = SimOptions {
        trace: false,
        check_invariants: false,
        record_decisions: false,
    };
    let results = run_plan(plan_runs(&cfg, cfg.seed), &opts, 0).map_err(|e| e.to_string())?;
    Ok((cfg, summarize(&results)))
}

fn series(points: &[PointSummary], k: SchedulerKind) -> Vec<(f64, f64)> {
    let mut s: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.scheduler == k)
        .map(|p| (p.value, p.service_ratio))
        .collect();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    s
}

fn proposed_dominates(points: &[PointSummary], tol: f64) -> Result<(), String> {
    let ours = series(points, PROPOSED);
    for k in BASELINES {
        for ((x, mine), (_, theirs)) in ours.iter().zip(series(points, k)) {
            ensure(*mine >= theirs - tol, || {
                format!("at {x}: proposed {mine:.4} < {k} {theirs:.4} - {tol}")
            })?;
        }
    }
    Ok(())
}

fn c7_capacity() -> Outcome {
    let t0 = Instant::now();
    let (cfg, points) = sweep("desk_capacity.toml")?;
    let dt = t0.elapsed();
    let sweep = cfg.sweep.as_ref().unwrap();
    ensure(sweep.parameter == SweepParameter::Capacity, || "not a capacity sweep".into())?;
    let mut worst = f64::INFINITY;
    for &k in &sweep.schedulers {
        let s = series(&points, k);
        let (x, y): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
        let rho = spearman(&x, &y).unwrap_or(if y.windows(2).all(|w| w[0] == w[1]) { 1.0 } else { 0.0 });
        ensure(rho >= 0.9, || format!("{k} spearman {rho:.3}"))?;
        worst = worst.min(rho);
    }
    proposed_dominates(&points, 0.01)?;
    ensure(dt < Duration::from_secs(300), || format!("took {dt:?}"))?;
    let ours = series(&points, PROPOSED);
    Ok(format!(
        "min rho {worst:.3}, proposed {:.3} -> {:.3}, {dt:.1?}",
        ours[0].1,
        ours.last().unwrap().1
    ))
}

fn c8_load() -> Outcome {
    let (_, users) = sweep("desk_users.toml")?;
    proposed_dominates(&users, 0.01).map_err(|e| format!("users: {e}"))?;
    let decline = |k| {
        let s = series(&users, k);
        s[0].1 - s.last().unwrap().1
    };
    let ours = decline(PROPOSED);
    for k in [SchedulerKind::Edf, SchedulerKind::Sdf] {
        ensure(ours < decline(k), || {
            format!("proposed decline {ours:.4} not below {k} {:.4}", decline(k))
        })?;
    }
    let (_, nearest) = sweep("desk_nearest.toml")?;
    proposed_dominates(&nearest, 0.01).map_err(|e| format!("nearest: {e}"))?;
    Ok(format!(
        "declines proposed {ours:.3} edf {:.3} sdf {:.3}",
        decline(SchedulerKind::Edf),
        decline(SchedulerKind::Sdf)
    ))
}

fn c9_complexity() -> Outcome {
    let n = [1000, 2000, 4000];
    let mut notes = Vec::new();
    let bounds = [
        (BenchTarget::Fod, 0.0, 3.0),
        (BenchTarget::Moore, 0.0, 3.0),
        (BenchTarget::OptimalFast, 0.0, 3.0),
        (BenchTarget::Optimal, 3.0, 6.0),
    ];
    let mut failures = Vec::new();
    for (target, lo, hi) in bounds {
        let report = bench(target, &n, 20, 9).map_err(|e| e.to_string())?;
        let ratios = report.growth_ratios();
        let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.2}")).collect();
        notes.push(format!("{target} {}", shown.join("/")));
        if ratios.iter().any(|&r| r < lo || r > hi) {
            failures.push(format!("{target} ratios {shown:?} outside [{lo}, {hi}]"));
        }
    }
    ensure(failures.is_empty(), || failures.join("; "))?;
    Ok(notes.join(", "))
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "num_servers = 6\nnum_users = 20\nhorizon_s = 30.0\narea_m = [2000.0, 2000.0]\nscheduler = \"fod\"\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_edgesched"))
            .arg("simulate")
            .arg("--config")
            .arg(&cfg)
            .args(["--seed", "11", "--out"])
            .arg(&out)
            .env_remove("EDGESCHED_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("simulate failed: {}", String::from_utf8_lossy(&status.stderr))
        })?;
        let metrics = std::fs::read(out.join("metrics.csv")).map_err(|e| e.to_string())?;
        let trace = std::fs::read(out.join("trace.jsonl")).map_err(|e| e.to_string())?;
        outputs.push((metrics, trace));
    }
    ensure(outputs[0].0 == outputs[1].0, || "metrics.csv differs".into())?;
    ensure(outputs[0].1 == outputs[1].1, || "trace.jsonl differs".into())?;
    ensure(!outputs[0].1.is_empty(), || "empty trace".into())?;
    Ok(format!(
        "metrics {} B and trace {} B identical",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn fuzz_config(rng: &mut ChaCha8Rng, kind: SchedulerKind) -> RunConfig {
    let cap_lo = rng.random_range(1.0..8.0) * GHZ;
    let dl_lo = rng.random_range(0.02..0.5);
    let num_servers = rng.random_range(2..=6);
    RunConfig {
        area_m: [1500.0, 1500.0],
        num_servers,
        num_users: rng.random_range(2..=12),
        arrival_rate: rng.random_range(0.5..6.0),
        mean_cycles: rng.random_range(0.05..1.0) * GHZ,
        capacity_hz: [cap_lo, cap_lo * rng.random_range(1.0..2.0)],
        data_size_bits: [8192.0, rng.random_range(2.0..400.0) * 8192.0],
        nearest_servers: rng.random_range(1..=num_servers.min(4)),
        deadline_s: [dl_lo, dl_lo * rng.random_range(1.0..6.0)],
        horizon_s: rng.random_range(5.0..20.0),
        scheduler: kind,
        force_offload: rng.random_bool(0.4),
        ..RunConfig::default()
    }
}

fn c11_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = SimOptions {
        trace: false,
        check_invariants: true,
        record_decisions: true,
    };
    let mut events = 0u64;
    let mut runs = 0;
    let mut forced_runs = 0;
    while events < 50_000 || runs < 3 * SchedulerKind::ALL.len() {
        let kind = SchedulerKind::ALL[runs % SchedulerKind::ALL.len()];
        let cfg = fuzz_config(&mut rng, kind);
        let seed = rng.random();
        let out = run_with(&cfg, seed, &opts).map_err(|e| format!("run {runs} ({kind}): {e}"))?;
        let m = &out.metrics;
        let tag = || format!("run {runs} ({kind}, seed {seed})");
        ensure(m.served + m.breakdown.total() == m.generated, || format!("{}: accounting", tag()))?;
        ensure(m.outages == m.breakdown.total(), || format!("{}: outage total", tag()))?;
        ensure(out.decisions.len() as u64 == m.generated, || format!("{}: decision rows", tag()))?;
        let mut seen = HashSet::new();
        let mut dropped = 0;
        for d in &out.decisions {
            ensure(seen.insert(d.task), || format!("{}: duplicate row for {}", tag(), d.task))?;
            match d.chosen_candidate() {
                Some(c) => {
                    ensure(c.accepted.is_some(), || format!("{}: chosen server not queried", tag()))?;
                    ensure(d.forced || c.accepted == Some(true), || {
                        format!("{}: chosen server rejected {}", tag(), d.task)
                    })?;
                    ensure(!d.forced || cfg.force_offload, || format!("{}: forced without flag", tag()))?;
                }
                None => {
                    ensure(d.chosen.is_none(), || format!("{}: chosen server not a candidate", tag()))?;
                    ensure(d.candidates.iter().all(|c| c.accepted != Some(true)), || {
                        format!("{}: dropped despite an admitting server", tag())
                    })?;
                    dropped += 1;
                }
            }
        }
        ensure(dropped == m.breakdown.dropped_no_server, || format!("{}: drop count", tag()))?;
        events += m.events;
        runs += 1;
        forced_runs += usize::from(cfg.force_offload);
    }
    Ok(format!("{events} events over {runs} runs ({forced_runs} forced)"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("golden five-task example", c1_golden),
        ("optimality against subset oracle", c2_optimality),
        ("subset oracle equals permutation oracle", c3_oracles),
        ("FOD verdict equals full re-schedule", c4_fod),
        ("fast and reference variants identical", c5_variants),
        ("batch stream outage ordering", c6_batch_stream),
        ("capacity sweep", c7_capacity),
        ("users and nearest-server sweeps", c8_load),
        ("complexity growth ratios", c9_complexity),
        ("simulate determinism", c10_determinism),
        ("invariant suite under fuzzing", c11_invariants),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let dt = t0.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {n:2} PASS  {name}: {detail} [{dt:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:2} FAIL  {name}: {detail} [{dt:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
