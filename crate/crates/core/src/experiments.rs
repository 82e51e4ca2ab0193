//! Experiment drivers: simulation sweeps, the single-server batch stream and
//! the per-event scheduling-cost benchmark.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::admission::fod_admit;
use crate::baselines::{dedas_insert, moore_hodgson, next_task, DedasOutcome, DispatchPolicy, PolicyKind, SchedulerKind};
use crate::config::{gen_batch_instance, BatchParams, RunConfig, SweepParameter};
use crate::error::{Error, Result};
use crate::model::{deadline_order_cmp, finish_time, Schedule, Task, TaskId};
use crate::sched_core::{schedule_optimal, schedule_optimal_fast};
use crate::sim::{run_with, RunMetrics, SimOptions, TraceEvent};

/// Runs `f` on a pool of `jobs` threads (0 = all cores).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scheduler: SchedulerKind,
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub replication: usize,
    pub seed: u64,
    pub config: RunConfig,
}

/// Every run a config describes, ordered by (scheduler, sweep point,
/// replication). Without a sweep section this is the single configured
/// scheduler at seed `seed`. Replication `r` uses `seed + r`, shared across
/// schedulers and sweep points.
pub fn plan_runs(config: &RunConfig, seed: u64) -> Vec<RunSpec> {
    let Some(sweep) = &config.sweep else {
        let mut c = config.clone();
        c.seed = seed;
        return vec![RunSpec {
            scheduler: config.scheduler,
            parameter: None,
            value: None,
            replication: 0,
            seed,
            config: c,
        }];
    };
    let mut out = Vec::new();
    for &kind in &sweep.schedulers {
        for &v in &sweep.values {
            for r in 0..sweep.replications {
                let mut c = config.clone();
                c.sweep = None;
                c.scheduler = kind;
                c.apply_sweep(sweep.parameter, v);
                c.seed = seed.wrapping_add(r as u64);
                out.push(RunSpec {
                    scheduler: kind,
                    parameter: Some(sweep.parameter),
                    value: Some(v),
                    replication: r,
                    seed: c.seed,
                    config: c,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: RunSpec,
    pub metrics: RunMetrics,
    pub trace: Vec<TraceEvent>,
}

/// Runs every planned replication in parallel; output keeps plan order.
pub fn run_plan(specs: Vec<RunSpec>, opts: &SimOptions, jobs: usize) -> Result<Vec<RunResult>> {
    with_jobs(jobs, || {
        specs
            .into_par_iter()
            .map(|run| {
                let out = run_with(&run.config, run.seed, opts)?;
                Ok(RunResult {
                    run,
                    metrics: out.metrics,
                    trace: out.trace,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scheduler: SchedulerKind,
    pub parameter: String,
    pub value: String,
    pub replication: usize,
    pub seed: u64,
    pub generated: u64,
    pub served: u64,
    pub outages: u64,
    pub rejected_at_admission: u64,
    pub evicted_on_reschedule: u64,
    pub missed_in_execution: u64,
    pub dropped_no_server: u64,
    pub service_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub scheduler: SchedulerKind,
    pub parameter: String,
    pub value: String,
    pub replication: usize,
    pub seed: u64,
    pub arrivals: usize,
    pub mean_cost_s: f64,
    pub median_cost_s: f64,
    pub p95_cost_s: f64,
    pub mean_decision_s: f64,
    pub mean_reschedule_s: f64,
}

fn point_labels(run: &RunSpec) -> (String, String) {
    match (run.parameter, run.value) {
        (Some(p), Some(v)) => (p.label().to_string(), v.to_string()),
        _ => (String::new(), String::new()),
    }
}

impl MetricsRow {
    pub fn new(r: &RunResult) -> Self {
        let (parameter, value) = point_labels(&r.run);
        let m = &r.metrics;
        Self {
            scheduler: r.run.scheduler,
            parameter,
            value,
            replication: r.run.replication,
            seed: r.run.seed,
            generated: m.generated,
            served: m.served,
            outages: m.outages,
            rejected_at_admission: m.breakdown.rejected_at_admission,
            evicted_on_reschedule: m.breakdown.evicted_on_reschedule,
            missed_in_execution: m.breakdown.missed_in_execution,
            dropped_no_server: m.breakdown.dropped_no_server,
            service_ratio: m.service_ratio(),
        }
    }
}

impl CostRow {
    pub fn new(r: &RunResult) -> Self {
        let (parameter, value) = point_labels(&r.run);
        let m = &r.metrics;
        let stats = Stats::of(&m.scheduling_cost);
        Self {
            scheduler: r.run.scheduler,
            parameter,
            value,
            replication: r.run.replication,
            seed: r.run.seed,
            arrivals: m.scheduling_cost.len(),
            mean_cost_s: stats.mean,
            median_cost_s: stats.median,
            p95_cost_s: stats.p95,
            mean_decision_s: Stats::of(&m.decision_cost).mean,
            mean_reschedule_s: Stats::of(&m.reschedule_cost).mean,
        }
    }
}

/// Mean service ratio and mean per-arrival cost of one (scheduler, point).
#[derive(Debug, Clone, PartialEq)]
pub struct PointSummary {
    pub scheduler: SchedulerKind,
    pub value: f64,
    pub service_ratio: f64,
    pub mean_cost_s: f64,
    pub mean_generated: f64,
}

pub fn summarize(results: &[RunResult]) -> Vec<PointSummary> {
    let mut out: Vec<PointSummary> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for r in results {
        let v = r.run.value.unwrap_or(0.0);
        let cost = Stats::of(&r.metrics.scheduling_cost).mean;
        match out.iter().position(|p| p.scheduler == r.run.scheduler && p.value == v) {
            Some(i) => {
                out[i].service_ratio += r.metrics.service_ratio();
                out[i].mean_cost_s += cost;
                out[i].mean_generated += r.metrics.generated as f64;
                counts[i] += 1;
            }
            None => {
                out.push(PointSummary {
                    scheduler: r.run.scheduler,
                    value: v,
                    service_ratio: r.metrics.service_ratio(),
                    mean_cost_s: cost,
                    mean_generated: r.metrics.generated as f64,
                });
                counts.push(1);
            }
        }
    }
    for (p, n) in out.iter_mut().zip(counts) {
        let n = n as f64;
        p.service_ratio /= n;
        p.mean_cost_s /= n;
        p.mean_generated /= n;
    }
    out
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let (mut vx, mut vy) = (0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl Stats {
    pub fn of(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| s[((p * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: q(0.5),
            p95: q(0.95),
        }
    }
}

/// Independent batches of tasks that all arrive at time 0 at one server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStream {
    pub batches: usize,
    pub batch_size: usize,
    pub capacity: f64,
    pub params: BatchParams,
    pub seed: u64,
}

impl BatchStream {
    pub fn instances(&self) -> impl Iterator<Item = Vec<Task>> + '_ {
        (0..self.batches).map(move |b| {
            gen_batch_instance(self.batch_size, self.seed.wrapping_mul(1_000_003).wrapping_add(b as u64), &self.params)
        })
    }
}

/// Runs a batch to completion under a dispatch rule. Executed tasks come
/// back in run order; stale drops are the rejected set.
pub fn dispatch_batch(tasks: &[Task], policy: &DispatchPolicy, capacity: f64, base_time: f64) -> Result<Schedule> {
    let mut queue = tasks.to_vec();
    let mut out = Schedule::empty(capacity, base_time);
    let mut now = base_time;
    loop {
        let d = next_task(policy, &mut queue, now, capacity)?;
        out.rejected.extend(d.dropped);
        match d.task {
            Some(t) => {
                now = finish_time(now, t.cpu_cycles, capacity);
                out.accepted.push(t);
            }
            None => break,
        }
    }
    out.rejected.sort_by_key(|t| t.id);
    Ok(out)
}

/// Schedules a batch that is all available at `base_time`. `optimal` and
/// `fod` share the server schedule; Dedas inserts tasks one at a time in
/// (arrival, id) order; the dispatch rules run the batch to completion.
pub fn batch_schedule(kind: SchedulerKind, tasks: &[Task], capacity: f64, base_time: f64) -> Result<Schedule> {
    match kind {
        SchedulerKind::Optimal | SchedulerKind::Fod => schedule_optimal_fast(tasks, capacity, base_time),
        SchedulerKind::Moore => moore_hodgson(tasks, capacity, base_time),
        SchedulerKind::Dedas => {
            crate::model::check_capacity(capacity)?;
            let mut q = Schedule::empty(capacity, base_time);
            let mut order: Vec<&Task> = tasks.iter().collect();
            order.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time).then(a.id.cmp(&b.id)));
            for t in order {
                match dedas_insert(&q, t, base_time) {
                    DedasOutcome::Admit { position } => q.accepted.insert(position - 1, t.clone()),
                    DedasOutcome::Reject => q.rejected.push(t.clone()),
                }
            }
            q.rejected.sort_by_key(|t| t.id);
            Ok(q)
        }
        other => dispatch_batch(tasks, &DispatchPolicy::new(other.policy().unwrap()), capacity, base_time),
    }
}

pub fn batch_outages(kind: SchedulerKind, tasks: &[Task], capacity: f64) -> Result<usize> {
    Ok(batch_schedule(kind, tasks, capacity, 0.0)?.rejected.len())
}

/// Total outages per scheduler over the whole stream.
pub fn batch_stream_outages(stream: &BatchStream, kinds: &[SchedulerKind]) -> Result<Vec<(SchedulerKind, usize)>> {
    let mut totals: Vec<(SchedulerKind, usize)> = kinds.iter().map(|&k| (k, 0)).collect();
    for tasks in stream.instances() {
        for (k, total) in &mut totals {
            *total += batch_outages(*k, &tasks, stream.capacity)?;
        }
    }
    Ok(totals)
}

/// What the cost benchmark times per synthetic arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchTarget {
    Fod,
    /// Reference greedy re-schedule of the union.
    Optimal,
    OptimalFast,
    Moore,
    Edf,
    Sdf,
    DstarS,
    Dedas,
}

impl BenchTarget {
    pub const ALL: [BenchTarget; 8] = [
        BenchTarget::Fod,
        BenchTarget::Optimal,
        BenchTarget::OptimalFast,
        BenchTarget::Moore,
        BenchTarget::Edf,
        BenchTarget::Sdf,
        BenchTarget::DstarS,
        BenchTarget::Dedas,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchTarget::Fod => "fod",
            BenchTarget::Optimal => "optimal",
            BenchTarget::OptimalFast => "optimal_fast",
            BenchTarget::Moore => "moore",
            BenchTarget::Edf => "edf",
            BenchTarget::Sdf => "sdf",
            BenchTarget::DstarS => "dstar_s",
            BenchTarget::Dedas => "dedas",
        }
    }
}

impl fmt::Display for BenchTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownScheduler(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub scheduler: String,
    pub n: usize,
    pub reps: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
    /// Median cost over the previous row's median; empty on the first row.
    pub growth_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub scheduler: String,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn growth_ratios(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.growth_ratio).collect()
    }
}

const BENCH_CAPACITY: f64 = 1e9;
const WARMUP: usize = 3;
const MIN_SAMPLE_S: f64 = 2e-3;
const MAX_ITERS: usize = 10_000;

/// A feasible, deadline-sorted queue of `n` tasks plus one arriving task
/// whose deadline falls inside the queue's span.
pub fn bench_instance(n: usize, seed: u64) -> (Schedule, Task) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = BatchParams::default();
    let cycles = Exp::new(1.0 / params.mean_cycles).expect("positive mean");
    let mut work = 0u64;
    let mut queue: Vec<Task> = (0..n)
        .map(|i| {
            let c = cycles.sample(&mut rng).round().max(1.0) as u64;
            work += c;
            let done = finish_time(0.0, work, BENCH_CAPACITY);
            let deadline = done * (1.0 + 0.5 * rng.random::<f64>());
            Task::new(TaskId::new(0, i as u32 + 1), 0.0, c, deadline, 0.0).expect("valid bench task")
        })
        .collect();
    queue.sort_by(deadline_order_cmp);
    let span = finish_time(0.0, work, BENCH_CAPACITY);
    let c = (params.mean_cycles * rng.random_range(0.5..1.5)).round() as u64;
    let new = Task::new(TaskId::new(1, 0), 0.0, c, span * rng.random_range(0.25..0.75), 0.0).expect("valid bench task");
    (Schedule::from_accepted(queue, BENCH_CAPACITY, 0.0), new)
}

fn run_target(target: BenchTarget, queue: &Schedule, new: &Task) -> Result<usize> {
    let union = || {
        let mut u = queue.accepted.clone();
        u.push(new.clone());
        u
    };
    let f = queue.capacity;
    let dispatch = |kind: PolicyKind| -> Result<usize> {
        let mut q = union();
        let d = next_task(&DispatchPolicy::new(kind), &mut q, 0.0, f)?;
        Ok(q.len() + d.dropped.len())
    };
    Ok(match target {
        BenchTarget::Fod => fod_admit(queue, new, f, 0.0)?.visited,
        BenchTarget::Optimal => schedule_optimal(&union(), f, 0.0)?.accepted.len(),
        BenchTarget::OptimalFast => schedule_optimal_fast(&union(), f, 0.0)?.accepted.len(),
        BenchTarget::Moore => moore_hodgson(&union(), f, 0.0)?.accepted.len(),
        BenchTarget::Edf => dispatch(PolicyKind::Edf)?,
        BenchTarget::Sdf => dispatch(PolicyKind::Sdf)?,
        BenchTarget::DstarS => dispatch(PolicyKind::DstarS)?,
        BenchTarget::Dedas => match dedas_insert(queue, new, 0.0) {
            DedasOutcome::Admit { position } => position,
            DedasOutcome::Reject => 0,
        },
    })
}

/// Times one synthetic arrival against pre-built queues of each size.
/// Queue construction and the union copy for re-scheduling targets are part
/// of the event, as they are in the simulator; warm-up runs are discarded.
pub fn bench(target: BenchTarget, n_list: &[usize], reps: usize, seed: u64) -> Result<BenchReport> {
    if n_list.is_empty() {
        return Err(Error::Precondition("bench needs at least one n".into()));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("n values must be strictly increasing".into()));
    }
    if reps == 0 {
        return Err(Error::Precondition("reps must be > 0".into()));
    }
    // Sub-millisecond calls are timed in batches so timer resolution does not
    // dominate; each sample is the per-call mean. Sizes are interleaved per
    // repetition so a slow stretch on the host hits every n alike.
    let time = |n: usize, r: usize, iters: usize| -> Result<f64> {
        let (queue, new) = bench_instance(n, seed.wrapping_add(r as u64));
        let t0 = Instant::now();
        for _ in 0..iters {
            std::hint::black_box(run_target(target, std::hint::black_box(&queue), &new)?);
        }
        Ok(t0.elapsed().as_secs_f64() / iters as f64)
    };
    let mut iters = vec![1usize; n_list.len()];
    for (k, &n) in n_list.iter().enumerate() {
        for r in 0..WARMUP {
            let dt = time(n, r, iters[k])?;
            iters[k] = ((MIN_SAMPLE_S / dt.max(1e-9)).ceil() as usize).clamp(1, MAX_ITERS);
        }
    }
    let mut samples = vec![Vec::with_capacity(reps); n_list.len()];
    for r in WARMUP..WARMUP + reps {
        for (k, &n) in n_list.iter().enumerate() {
            samples[k].push(time(n, r, iters[k])?);
        }
    }

    let mut rows: Vec<BenchRow> = Vec::with_capacity(n_list.len());
    for (&n, samples) in n_list.iter().zip(&samples) {
        let s = Stats::of(samples);
        let growth_ratio = rows.last().map(|prev| s.median / prev.median_s);
        rows.push(BenchRow {
            scheduler: target.name().to_string(),
            n,
            reps,
            mean_s: s.mean,
            median_s: s.median,
            p95_s: s.p95,
            growth_ratio,
        });
    }
    Ok(BenchReport {
        scheduler: target.name().to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SweepConfig;
    use crate::model::is_feasible_order;
    use crate::oracle::oracle_max_served;

    #[test]
    fn plan_order_and_count() {
        let cfg = RunConfig {
            sweep: Some(SweepConfig {
                parameter: SweepParameter::Users,
                values: vec![30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
                schedulers: SchedulerKind::all(),
                replications: 1,
            }),
            ..RunConfig::default()
        };
        let plan = plan_runs(&cfg, 7);
        assert_eq!(plan.len(), 6 * 7);
        assert_eq!(plan[0].scheduler, SchedulerKind::Optimal);
        assert_eq!(plan[1].config.num_users, 40);
        assert!(plan.iter().all(|s| s.config.sweep.is_none() && s.seed == 7));
        assert_eq!(plan_runs(&RunConfig::default(), 3).len(), 1);
    }

    #[test]
    fn bench_instances_are_feasible() {
        for n in [1, 10, 200] {
            let (q, new) = bench_instance(n, 4);
            assert_eq!(q.accepted.len(), n);
            assert!(is_feasible_order(&q.accepted, q.capacity, 0.0).unwrap());
            assert!(fod_admit(&q, &new, q.capacity, 0.0).is_ok());
        }
    }

    #[test]
    fn bench_report_shape() {
        let r = bench(BenchTarget::Fod, &[1], 3, 0).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].growth_ratio, None);
        let r = bench(BenchTarget::Moore, &[10, 20, 40], 3, 0).unwrap();
        assert_eq!(r.growth_ratios().len(), 2);
        assert!(r.rows.iter().all(|row| row.median_s >= 0.0 && row.p95_s >= row.median_s));
        assert!(bench(BenchTarget::Fod, &[], 3, 0).is_err());
        assert!(bench(BenchTarget::Fod, &[20, 10], 3, 0).is_err());
        assert_eq!("optimal_fast".parse::<BenchTarget>().unwrap(), BenchTarget::OptimalFast);
    }

    #[test]
    fn batch_optimal_pair_agrees_with_oracle() {
        let stream = BatchStream {
            batches: 20,
            batch_size: 12,
            capacity: 2e9,
            params: BatchParams::default(),
            seed: 1,
        };
        for tasks in stream.instances() {
            let best = oracle_max_served(&tasks, stream.capacity, 0.0).unwrap().max_served;
            for k in [SchedulerKind::Optimal, SchedulerKind::Fod, SchedulerKind::Moore] {
                assert_eq!(batch_outages(k, &tasks, stream.capacity).unwrap(), tasks.len() - best);
            }
            for k in [SchedulerKind::Edf, SchedulerKind::Sdf, SchedulerKind::DstarS, SchedulerKind::Dedas] {
                assert!(batch_outages(k, &tasks, stream.capacity).unwrap() >= tasks.len() - best);
            }
        }
    }

    #[test]
    fn spearman_cases() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(spearman(&x, &[10.0, 20.0, 30.0, 40.0]), Some(1.0));
        assert_eq!(spearman(&x, &[4.0, 3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&x, &[1.0, 1.0, 1.0, 1.0]), None);
        // Ties take the average rank.
        let r = spearman(&x, &[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }

    #[test]
    fn dispatch_batch_on_five_tasks() {
        let t = crate::model::fixtures::five_tasks();
        let s = batch_schedule(SchedulerKind::Edf, &t, 1e9, 0.0).unwrap();
        assert!(is_feasible_order(&s.accepted, 1e9, 0.0).unwrap());
        assert_eq!(s.accepted.len() + s.rejected.len(), 5);
        let d = batch_schedule(SchedulerKind::Dedas, &t, 1e9, 0.0).unwrap();
        assert!(is_feasible_order(&d.accepted, 1e9, 0.0).unwrap());
    }

    #[test]
    fn stats_quantiles() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 4.0, 5.0]);
        assert_eq!((s.mean, s.median), (3.0, 3.0));
        assert_eq!(s.p95, 5.0);
        assert_eq!(Stats::of(&[]), Stats::default());
    }
}
