//! Discrete-event simulation of users offloading tasks to edge servers.
//!
//! Each arrival runs the three-step protocol: the user queries its `L`
//! nearest servers, each returns a snapshot, and the user sends the task to
//! the admitting server with the earliest predicted completion. Latency is
//! additive: a task is on time when its queue completion plus its uplink
//! delay is within the deadline, so the server sees the deadline reduced by
//! the uplink delay of the chosen link.

mod server;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::config::{RunConfig, TaskSampler};
use crate::error::{Error, Result};
use crate::model::{Task, TaskId};
use crate::phy::{achievable_rate, channel_gain, mobility_step, sample_fading, ChannelDraw, RadioConfig, UserMotionState};

pub use server::{
    predict_admission, select_server, server_on_arrival, ArrivalOutcome, CandidateVerdict, InProgress,
    OffloadDecision, ServerPolicy, ServerSnapshot, ServerState,
};

/// Fraction of generated tasks served on time; 1 when nothing was generated.
pub fn service_ratio(generated: u64, outages: u64) -> f64 {
    if generated == 0 {
        1.0
    } else {
        (generated - outages) as f64 / generated as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OutageBreakdown {
    /// The chosen server's re-schedule turned the task away (forced offloads only).
    pub rejected_at_admission: u64,
    /// Displaced from a queue by a later arrival.
    pub evicted_on_reschedule: u64,
    /// Dropped as stale at dispatch, or finished late.
    pub missed_in_execution: u64,
    /// No candidate admitted it, or none had a free channel.
    pub dropped_no_server: u64,
}

impl OutageBreakdown {
    pub fn total(&self) -> u64 {
        self.rejected_at_admission + self.evicted_on_reschedule + self.missed_in_execution + self.dropped_no_server
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub generated: u64,
    pub served: u64,
    pub outages: u64,
    pub breakdown: OutageBreakdown,
    /// Wall-clock seconds per arrival: decision plus server re-schedule.
    pub scheduling_cost: Vec<f64>,
    pub decision_cost: Vec<f64>,
    pub reschedule_cost: Vec<f64>,
    pub events: u64,
}

impl RunMetrics {
    pub fn service_ratio(&self) -> f64 {
        service_ratio(self.generated, self.outages)
    }

    fn outage(&mut self, counter: fn(&mut OutageBreakdown) -> &mut u64, n: usize) {
        *counter(&mut self.breakdown) += n as u64;
        self.outages += n as u64;
    }
}

/// One line of the JSON-lines event trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub time: f64,
    pub kind: &'static str,
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub server: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<&'static str>,
}

pub fn write_trace_jsonl<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub trace: bool,
    pub check_invariants: bool,
    pub record_decisions: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            trace: true,
            check_invariants: cfg!(debug_assertions),
            record_decisions: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub trace: Vec<TraceEvent>,
    pub decisions: Vec<OffloadDecision>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub servers: Vec<ServerState>,
    pub users: Vec<[f64; 2]>,
}

const LAYOUT_STREAM: u64 = 0;
const CAPACITY_STREAM: u64 = 1;
const PLACEMENT_TRIES: usize = 10_000;
const LAYOUT_TRIES: usize = 100;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Per-user streams are independent of the user count and of the server
/// capacities, so sweeps over either reuse the same randomness.
fn user_stream(seed: u64, user: usize, purpose: u64) -> ChaCha8Rng {
    stream(seed, 16 + 4 * user as u64 + purpose)
}

const PLACE: u64 = 0;
const WORKLOAD: u64 = 1;
const MOTION: u64 = 2;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Places servers uniformly, then each user uniformly among points with at
/// least `min_servers_in_coverage` servers within the coverage radius.
pub fn generate_layout(config: &RunConfig, seed: u64) -> Result<Layout> {
    let mut pos_rng = stream(seed, LAYOUT_STREAM);
    let mut cap_rng = stream(seed, CAPACITY_STREAM);
    let [w, h] = config.area_m;
    let [lo, hi] = config.capacity_hz;
    let capacities: Vec<f64> = (0..config.num_servers)
        .map(|_| lo + (hi - lo) * cap_rng.random::<f64>())
        .collect();

    'layout: for _ in 0..LAYOUT_TRIES {
        let positions: Vec<[f64; 2]> = (0..config.num_servers)
            .map(|_| [pos_rng.random::<f64>() * w, pos_rng.random::<f64>() * h])
            .collect();
        let mut users = Vec::with_capacity(config.num_users);
        for u in 0..config.num_users {
            let mut rng = user_stream(seed, u, PLACE);
            let spot = (0..PLACEMENT_TRIES)
                .map(|_| [rng.random::<f64>() * w, rng.random::<f64>() * h])
                .find(|&p| {
                    positions.iter().filter(|&&s| dist(p, s) <= config.coverage_radius_m).count()
                        >= config.min_servers_in_coverage
                });
            match spot {
                Some(p) => users.push(p),
                None => continue 'layout,
            }
        }
        let servers = positions
            .into_iter()
            .zip(&capacities)
            .enumerate()
            .map(|(i, (p, &f))| ServerState::new(i, p, f, config.radio.channels_per_server))
            .collect();
        return Ok(Layout { servers, users });
    }
    Err(Error::NoCoverage)
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Small-scale fading of the (user, server) link, constant within a slot.
fn slot_fading(seed: u64, user: usize, server: usize, slot: u64) -> num_complex::Complex64 {
    let key = mix64(mix64(mix64(seed) ^ user as u64) ^ ((server as u64) << 32 | 0x5eed)) ^ slot;
    sample_fading(&mut ChaCha8Rng::seed_from_u64(mix64(key)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    ExecComplete,
    TxComplete,
    Arrival,
    Mobility,
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Exec { server: usize },
    Tx { server: usize, task: TaskId },
    Arrival { user: usize },
    Mobility { tick: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.seq.cmp(&other.seq))
    }
}

struct User {
    motion: UserMotionState,
    motion_rng: ChaCha8Rng,
    workload_rng: ChaCha8Rng,
    next_seq: u32,
}

struct Sim<'a> {
    config: &'a RunConfig,
    opts: &'a SimOptions,
    seed: u64,
    radio: RadioConfig,
    policy: ServerPolicy,
    sampler: TaskSampler,
    inter_arrival: Exp<f64>,
    servers: Vec<ServerState>,
    in_flight: Vec<usize>,
    users: Vec<User>,
    events: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    out: RunOutput,
}

impl Sim<'_> {
    fn push(&mut self, time: f64, kind: EventKind, payload: Payload) {
        self.next_seq += 1;
        self.events.push(Reverse(Event {
            time,
            kind,
            seq: self.next_seq,
            payload,
        }));
    }

    fn trace(&mut self, time: f64, kind: &'static str, task: TaskId, server: Option<usize>, verdict: Option<&'static str>) {
        if self.opts.trace {
            self.out.trace.push(TraceEvent {
                time,
                kind,
                task: task.to_string(),
                server,
                verdict,
            });
        }
    }

    fn trace_all(&mut self, time: f64, kind: &'static str, tasks: &[Task], server: usize) {
        for t in tasks {
            self.trace(time, kind, t.id, Some(server), None);
        }
    }

    fn schedule_arrival(&mut self, user: usize, now: f64) {
        let gap = self.inter_arrival.sample(&mut self.users[user].workload_rng);
        let t = now + gap;
        if t <= self.config.horizon_s {
            self.push(t, EventKind::Arrival, Payload::Arrival { user });
        }
    }

    fn rate(&self, user: usize, server: usize, clock: f64) -> Result<f64> {
        let slot = (clock / self.config.mobility_interval_s).floor() as u64;
        let d = dist(self.users[user].motion.position, self.servers[server].position).max(1.0);
        let draw = ChannelDraw {
            fading: slot_fading(self.seed, user, server, slot),
            distance: d,
        };
        achievable_rate(channel_gain(draw, self.radio.pathloss_exponent)?, &self.radio)
    }

    fn nearest(&self, user: usize) -> Vec<usize> {
        let p = self.users[user].motion.position;
        let mut ids: Vec<(f64, usize)> = self.servers.iter().map(|s| (dist(p, s.position), s.id)).collect();
        ids.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ids.truncate(self.config.nearest_servers);
        ids.into_iter().map(|(_, id)| id).collect()
    }

    fn dispatch(&mut self, server: usize, clock: f64) -> Result<()> {
        let (finish, missed) = self.servers[server].start_next(clock, &self.policy)?;
        self.out.metrics.outage(|b| &mut b.missed_in_execution, missed.len());
        self.trace_all(clock, "missed", &missed, server);
        if let Some(finish) = finish {
            let id = self.servers[server].in_progress.as_ref().unwrap().task.id;
            self.trace(clock, "start", id, Some(server), None);
            self.push(finish, EventKind::ExecComplete, Payload::Exec { server });
        }
        Ok(())
    }

    fn on_arrival(&mut self, user: usize, clock: f64) -> Result<()> {
        self.schedule_arrival(user, clock);
        let u = &mut self.users[user];
        u.next_seq += 1;
        let id = TaskId::new(user as u32, u.next_seq);
        let task = self.sampler.sample(&mut u.workload_rng, id, clock);
        self.out.metrics.generated += 1;
        self.trace(clock, "arrival", id, None, None);

        let started = Instant::now();
        let snapshots: Vec<ServerSnapshot> = self.nearest(user).into_iter().map(|s| self.servers[s].snapshot(clock)).collect();
        let decision = select_server(&self.policy, &task, &snapshots, clock, |s| self.rate(user, s, clock))?;
        let decided = Instant::now();

        let Some(chosen) = decision.candidate_for_chosen() else {
            let decision_s = decided.duration_since(started).as_secs_f64();
            self.record_cost(decision_s, 0.0);
            self.out.metrics.outage(|b| &mut b.dropped_no_server, 1);
            self.trace(clock, "dropped", id, None, Some("no_server"));
            self.finish_decision(decision);
            return Ok(());
        };
        let (server, tau) = chosen;
        let outcome = server_on_arrival(
            &mut self.servers[server],
            task.with_deadline(task.deadline - tau),
            clock,
            &self.policy,
            decision.forced,
        )?;
        let rescheduled = Instant::now();
        self.record_cost(
            decided.duration_since(started).as_secs_f64(),
            rescheduled.duration_since(decided).as_secs_f64(),
        );

        self.in_flight[server] += 1;
        self.push(clock + tau, EventKind::TxComplete, Payload::Tx { server, task: id });
        let verdict = if decision.forced { "forced" } else { "admitted" };
        self.trace(clock, "offload", id, Some(server), Some(verdict));
        if !outcome.admitted {
            self.out.metrics.outage(|b| &mut b.rejected_at_admission, 1);
            self.trace(clock, "rejected", id, Some(server), None);
        }
        self.out.metrics.outage(|b| &mut b.evicted_on_reschedule, outcome.evicted.len());
        self.trace_all(clock, "evicted", &outcome.evicted, server);
        self.finish_decision(decision);
        self.dispatch(server, clock)
    }

    fn record_cost(&mut self, decision: f64, reschedule: f64) {
        let m = &mut self.out.metrics;
        m.decision_cost.push(decision);
        m.reschedule_cost.push(reschedule);
        m.scheduling_cost.push(decision + reschedule);
    }

    fn finish_decision(&mut self, decision: OffloadDecision) {
        if self.opts.record_decisions {
            self.out.decisions.push(decision);
        }
    }

    fn on_exec_complete(&mut self, server: usize, clock: f64) -> Result<()> {
        let (task, on_time) = self.servers[server].complete()?;
        if on_time {
            self.out.metrics.served += 1;
        } else {
            self.out.metrics.outage(|b| &mut b.missed_in_execution, 1);
        }
        self.trace(clock, "complete", task.id, Some(server), Some(if on_time { "on_time" } else { "late" }));
        self.dispatch(server, clock)
    }

    fn on_mobility(&mut self, tick: u64) {
        let area = self.config.area();
        let dt = self.config.mobility_interval_s;
        for u in &mut self.users {
            u.motion = mobility_step(u.motion, dt, area, &mut u.motion_rng);
        }
        let next = (tick + 1) as f64 * dt;
        if next <= self.config.horizon_s {
            self.push(next, EventKind::Mobility, Payload::Mobility { tick: tick + 1 });
        }
    }

    fn check(&self, clock: f64) -> Result<()> {
        for (s, &inflight) in self.servers.iter().zip(&self.in_flight) {
            s.check_invariants(clock, self.policy.kind, inflight)?;
        }
        let m = &self.out.metrics;
        if m.outages != m.breakdown.total() || m.served + m.outages > m.generated {
            return Err(Error::Internal(format!("accounting drift at t={clock}: {m:?}")));
        }
        if m.scheduling_cost.len() as u64 != m.generated {
            return Err(Error::Internal(format!("decision rows {} != generated {}", m.scheduling_cost.len(), m.generated)));
        }
        Ok(())
    }
}

impl OffloadDecision {
    /// Chosen server and its uplink delay.
    fn candidate_for_chosen(&self) -> Option<(usize, f64)> {
        self.chosen_candidate().map(|c| (c.server, c.transmission_delay))
    }
}

pub fn run(config: &RunConfig, seed: u64) -> Result<RunOutput> {
    run_with(config, seed, &SimOptions::default())
}

/// Runs one replication. Arrivals stop at the horizon; queued work is then
/// drained so every generated task is accounted for.
pub fn run_with(config: &RunConfig, seed: u64, opts: &SimOptions) -> Result<RunOutput> {
    config.validate()?;
    let layout = generate_layout(config, seed)?;
    let mut policy = ServerPolicy::new(config.scheduler);
    policy.force_offload = config.force_offload;
    policy.dispatch.size_key = config.size_key;

    let users = layout
        .users
        .iter()
        .enumerate()
        .map(|(u, &p)| User {
            motion: UserMotionState::new(p, config.user_speed_mps, config.turn_probability),
            motion_rng: user_stream(seed, u, MOTION),
            workload_rng: user_stream(seed, u, WORKLOAD),
            next_seq: 0,
        })
        .collect();
    let mut sim = Sim {
        config,
        opts,
        seed,
        radio: config.radio_config(),
        policy,
        sampler: TaskSampler::new(&config.batch_params()),
        inter_arrival: Exp::new(config.arrival_rate).map_err(|e| Error::config("arrival_rate", e.to_string()))?,
        in_flight: vec![0; layout.servers.len()],
        servers: layout.servers,
        users,
        events: BinaryHeap::new(),
        next_seq: 0,
        out: RunOutput::default(),
    };

    for u in 0..sim.users.len() {
        sim.schedule_arrival(u, 0.0);
    }
    if config.mobility_interval_s <= config.horizon_s {
        sim.push(config.mobility_interval_s, EventKind::Mobility, Payload::Mobility { tick: 1 });
    }

    while let Some(Reverse(ev)) = sim.events.pop() {
        sim.out.metrics.events += 1;
        let clock = ev.time;
        match ev.payload {
            Payload::Exec { server } => sim.on_exec_complete(server, clock)?,
            Payload::Tx { server, task } => {
                sim.servers[server].release_channel()?;
                sim.in_flight[server] -= 1;
                sim.trace(clock, "uplink_done", task, Some(server), None);
            }
            Payload::Arrival { user } => sim.on_arrival(user, clock)?,
            Payload::Mobility { tick } => sim.on_mobility(tick),
        }
        if opts.check_invariants {
            sim.check(clock)?;
        }
    }

    let m = &sim.out.metrics;
    if m.served + m.outages != m.generated {
        return Err(Error::Internal(format!(
            "served {} + outages {} != generated {}",
            m.served, m.outages, m.generated
        )));
    }
    Ok(sim.out)
}
