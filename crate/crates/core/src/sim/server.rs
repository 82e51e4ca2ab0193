//! Edge servers, the per-scheduler admission predictors and the user's choice
//! among candidate servers.

use std::cmp::Ordering;

use serde::Serialize;

use crate::admission::{fod_admit, AdmissionVerdict};
use crate::baselines::{dedas_insert, moore_hodgson, next_task, DedasOutcome, DispatchPolicy, SchedulerKind};
use crate::error::{Error, Result};
use crate::model::{finish_time, meets_deadline, Schedule, Task, TaskId};
use crate::sched_core::schedule_optimal_fast;

/// Scheduler identity plus the knobs the baselines need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerPolicy {
    pub kind: SchedulerKind,
    /// Priority rule for the dispatch-order baselines; ignored otherwise.
    pub dispatch: DispatchPolicy,
    pub force_offload: bool,
}

impl ServerPolicy {
    pub fn new(kind: SchedulerKind) -> Self {
        let dispatch = DispatchPolicy::new(kind.policy().unwrap_or(crate::baselines::PolicyKind::Edf));
        Self {
            kind,
            dispatch,
            force_offload: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InProgress {
    pub task: Task,
    pub start: f64,
    pub finish: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub id: usize,
    pub position: [f64; 2],
    pub capacity: f64,
    /// Waiting tasks. Deadline-sorted for re-scheduling servers, in insertion
    /// order for Dedas, unordered for the dispatch-rule baselines. Deadlines
    /// are already reduced by the transmission delay.
    pub queue: Schedule,
    pub in_progress: Option<InProgress>,
    pub channels: usize,
    pub free_channels: usize,
    pub busy_until: f64,
}

/// What a server reports to a querying user.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerSnapshot {
    pub server: usize,
    /// `queue.base_time` is when the first waiting task would start.
    pub queue: Schedule,
    pub busy_until: f64,
    pub capacity: f64,
    pub free_channels: usize,
}

impl ServerState {
    pub fn new(id: usize, position: [f64; 2], capacity: f64, channels: usize) -> Self {
        Self {
            id,
            position,
            capacity,
            queue: Schedule::empty(capacity, 0.0),
            in_progress: None,
            channels,
            free_channels: channels,
            busy_until: 0.0,
        }
    }

    pub fn base_time(&self, clock: f64) -> f64 {
        clock.max(self.busy_until)
    }

    pub fn snapshot(&self, clock: f64) -> ServerSnapshot {
        let mut queue = self.queue.clone();
        queue.base_time = self.base_time(clock);
        ServerSnapshot {
            server: self.id,
            queue,
            busy_until: self.busy_until,
            capacity: self.capacity,
            free_channels: self.free_channels,
        }
    }

    pub fn release_channel(&mut self) -> Result<()> {
        if self.free_channels >= self.channels {
            return Err(Error::Internal(format!("server {} released an unreserved channel", self.id)));
        }
        self.free_channels += 1;
        Ok(())
    }

    /// Starts the next waiting task if idle. Returns the started task's
    /// finish time and every task found unable to finish on time.
    pub fn start_next(&mut self, clock: f64, policy: &ServerPolicy) -> Result<(Option<f64>, Vec<Task>)> {
        if self.in_progress.is_some() {
            return Ok((None, Vec::new()));
        }
        let f = self.capacity;
        let mut missed = Vec::new();
        let next = if policy.kind.policy().is_some() {
            let d = next_task(&policy.dispatch, &mut self.queue.accepted, clock, f)?;
            missed = d.dropped;
            d.task
        } else {
            let mut next = None;
            while !self.queue.accepted.is_empty() {
                let t = self.queue.accepted.remove(0);
                if meets_deadline(clock, t.cpu_cycles, f, t.deadline) {
                    next = Some(t);
                    break;
                }
                missed.push(t);
            }
            next
        };

        let Some(task) = next else {
            self.busy_until = clock;
            self.queue.base_time = clock;
            return Ok((None, missed));
        };
        let finish = finish_time(clock, task.cpu_cycles, f);
        self.busy_until = finish;
        self.queue.base_time = finish;
        self.in_progress = Some(InProgress { task, start: clock, finish });
        if policy.kind.keeps_feasible_queue() {
            // Re-anchoring the queue at the new finish time can move a
            // boundary completion by an ulp.
            missed.extend(self.drop_infeasible());
        }
        Ok((Some(finish), missed))
    }

    fn drop_infeasible(&mut self) -> Vec<Task> {
        let (f, base) = (self.capacity, self.queue.base_time);
        let mut work = 0u64;
        let mut late = Vec::new();
        self.queue.accepted.retain(|t| {
            if meets_deadline(base, work + t.cpu_cycles, f, t.deadline) {
                work += t.cpu_cycles;
                true
            } else {
                late.push(t.clone());
                false
            }
        });
        late
    }

    /// Finishes the running task; `true` when it met its deadline.
    pub fn complete(&mut self) -> Result<(Task, bool)> {
        let run = self
            .in_progress
            .take()
            .ok_or_else(|| Error::Internal(format!("server {} completed with nothing running", self.id)))?;
        let on_time = meets_deadline(run.start, run.task.cpu_cycles, self.capacity, run.task.deadline);
        Ok((run.task, on_time))
    }

    pub fn check_invariants(&self, clock: f64, kind: SchedulerKind, in_flight: usize) -> Result<()> {
        let fail = |what: String| Err(Error::Internal(format!("server {} at t={clock}: {what}", self.id)));
        if self.free_channels > self.channels || self.free_channels + in_flight != self.channels {
            return fail(format!(
                "channels free {} + reserved {in_flight} != {}",
                self.free_channels, self.channels
            ));
        }
        if self.in_progress.is_none() && !self.queue.accepted.is_empty() {
            return fail("idle with waiting tasks".into());
        }
        if let Some(run) = &self.in_progress {
            if self.queue.accepted.iter().any(|t| t.id == run.task.id) {
                return fail(format!("running task {} still queued", run.task.id));
            }
        }
        if kind.keeps_feasible_queue() {
            let base = self.base_time(clock);
            let mut work = 0u64;
            for t in &self.queue.accepted {
                work += t.cpu_cycles;
                if !meets_deadline(base, work, self.capacity, t.deadline) {
                    return fail(format!("queued task {} would be late", t.id));
                }
            }
        }
        Ok(())
    }
}

/// Completion of `id` within an execution order starting at `base`.
fn completion_in(order: &[Task], id: TaskId, base: f64, capacity: f64) -> Option<f64> {
    let mut work = 0u64;
    for t in order {
        work += t.cpu_cycles;
        if t.id == id {
            return Some(finish_time(base, work, capacity));
        }
    }
    None
}

fn verdict(accepted: bool, completion: Option<f64>, failing: Option<TaskId>, visited: usize) -> AdmissionVerdict {
    AdmissionVerdict {
        accepted,
        predicted_completion: if accepted { completion } else { None },
        failing_deadline_task: if accepted { None } else { failing },
        visited,
    }
}

/// The user-side admission test each scheduler pairs with. `task` carries
/// the deadline already reduced by the transmission delay to this server.
pub fn predict_admission(
    policy: &ServerPolicy,
    snapshot: &ServerSnapshot,
    task: &Task,
    clock: f64,
) -> Result<AdmissionVerdict> {
    let q = &snapshot.queue;
    let (base, f) = (q.base_time, snapshot.capacity);
    let union = || {
        let mut u = q.accepted.clone();
        u.push(task.clone());
        u
    };
    Ok(match policy.kind {
        SchedulerKind::Fod => fod_admit(q, task, f, base)?,
        SchedulerKind::Optimal | SchedulerKind::Moore => {
            let s = if policy.kind == SchedulerKind::Optimal {
                schedule_optimal_fast(&union(), f, base)?
            } else {
                moore_hodgson(&union(), f, base)?
            };
            let c = completion_in(&s.accepted, task.id, base, f);
            verdict(c.is_some(), c, Some(task.id), q.accepted.len() + 1)
        }
        SchedulerKind::Dedas => match dedas_insert(q, task, clock) {
            DedasOutcome::Admit { position } => {
                let ahead: u64 = q.accepted[..position - 1].iter().map(|t| t.cpu_cycles).sum();
                let c = finish_time(base, ahead + task.cpu_cycles, f);
                verdict(true, Some(c), None, q.accepted.len() + 1)
            }
            DedasOutcome::Reject => verdict(false, None, Some(task.id), q.accepted.len() + 1),
        },
        SchedulerKind::Edf | SchedulerKind::Sdf | SchedulerKind::DstarS => {
            let ahead: u64 = q
                .accepted
                .iter()
                .filter(|t| policy.dispatch.cmp(t, task, clock) == Ordering::Less)
                .map(|t| t.cpu_cycles)
                .sum();
            let work = ahead + task.cpu_cycles;
            let ok = meets_deadline(base, work, f, task.deadline);
            verdict(ok, Some(finish_time(base, work, f)), Some(task.id), q.accepted.len())
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateVerdict {
    pub server: usize,
    pub transmission_delay: f64,
    /// `None` when the server had no free channel and was not queried.
    pub accepted: Option<bool>,
    /// Arrival-to-completion estimate including the uplink, absolute time.
    pub predicted_completion: Option<f64>,
    #[serde(skip)]
    pub verdict: Option<AdmissionVerdict>,
}

/// One row of the decision matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffloadDecision {
    pub task: TaskId,
    pub candidates: Vec<CandidateVerdict>,
    /// `None` means the task was dropped at the user.
    pub chosen: Option<usize>,
    /// Set when the chosen server's own test rejected the task.
    pub forced: bool,
}

impl OffloadDecision {
    pub fn chosen_candidate(&self) -> Option<&CandidateVerdict> {
        let s = self.chosen?;
        self.candidates.iter().find(|c| c.server == s)
    }
}

/// Queries every candidate with a free channel and picks the admitting
/// server with the earliest predicted completion (ties by server id).
/// `rate_fn` maps a server id to the current uplink rate in bits/s.
pub fn select_server(
    policy: &ServerPolicy,
    task: &Task,
    snapshots: &[ServerSnapshot],
    clock: f64,
    mut rate_fn: impl FnMut(usize) -> Result<f64>,
) -> Result<OffloadDecision> {
    if snapshots.is_empty() {
        return Err(Error::NoCoverage);
    }
    let mut candidates = Vec::with_capacity(snapshots.len());
    for s in snapshots {
        let tau = crate::phy::transmission_delay(task.data_size, rate_fn(s.server)?)?;
        if s.free_channels == 0 {
            candidates.push(CandidateVerdict {
                server: s.server,
                transmission_delay: tau,
                accepted: None,
                predicted_completion: None,
                verdict: None,
            });
            continue;
        }
        let v = predict_admission(policy, s, &task.with_deadline(task.deadline - tau), clock)?;
        candidates.push(CandidateVerdict {
            server: s.server,
            transmission_delay: tau,
            accepted: Some(v.accepted),
            predicted_completion: v.predicted_completion.map(|c| c + tau),
            verdict: Some(v),
        });
    }

    let best = |pairs: &mut dyn Iterator<Item = (f64, usize)>| {
        pairs.min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))).map(|p| p.1)
    };
    let mut admitting = candidates
        .iter()
        .filter(|c| c.accepted == Some(true))
        .map(|c| (c.predicted_completion.unwrap(), c.server));
    let mut chosen = best(&mut admitting);
    let mut forced = false;
    if chosen.is_none() && policy.force_offload {
        let mut all = candidates.iter().filter(|c| c.accepted.is_some()).map(|c| {
            let s = snapshots.iter().find(|s| s.server == c.server).unwrap();
            let work = s.queue.total_work() + task.cpu_cycles;
            (finish_time(s.queue.base_time, work, s.capacity) + c.transmission_delay, c.server)
        });
        chosen = best(&mut all);
        forced = chosen.is_some();
    }
    Ok(OffloadDecision {
        task: task.id,
        candidates,
        chosen,
        forced,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalOutcome {
    pub admitted: bool,
    /// Previously queued tasks displaced by the re-schedule.
    pub evicted: Vec<Task>,
}

/// Adds a task the user sent to this server and reserves its uplink channel.
/// `task` carries the deadline reduced by the transmission delay. Running
/// tasks are never preempted; re-scheduling covers the waiting ones only.
pub fn server_on_arrival(
    server: &mut ServerState,
    task: Task,
    clock: f64,
    policy: &ServerPolicy,
    forced: bool,
) -> Result<ArrivalOutcome> {
    if server.free_channels == 0 {
        return Err(Error::Internal(format!("server {} chosen without a free channel", server.id)));
    }
    server.free_channels -= 1;
    let base = server.base_time(clock);
    let f = server.capacity;
    let id = task.id;
    let rescheduled = |s: Schedule| {
        let admitted = s.accepted.iter().any(|t| t.id == id);
        let evicted: Vec<Task> = s.rejected.into_iter().filter(|t| t.id != id).collect();
        (Schedule::from_accepted(s.accepted, f, base), admitted, evicted)
    };
    let mut union = || {
        let mut u = std::mem::take(&mut server.queue.accepted);
        u.push(task.clone());
        u
    };
    let (queue, admitted, evicted) = match policy.kind {
        SchedulerKind::Optimal | SchedulerKind::Fod => rescheduled(schedule_optimal_fast(&union(), f, base)?),
        SchedulerKind::Moore => rescheduled(moore_hodgson(&union(), f, base)?),
        SchedulerKind::Dedas => {
            let mut q = std::mem::replace(&mut server.queue, Schedule::empty(f, base));
            q.base_time = base;
            match dedas_insert(&q, &task, clock) {
                DedasOutcome::Admit { position } => {
                    q.accepted.insert(position - 1, task);
                    (q, true, Vec::new())
                }
                DedasOutcome::Reject => (q, false, Vec::new()),
            }
        }
        SchedulerKind::Edf | SchedulerKind::Sdf | SchedulerKind::DstarS => {
            (Schedule::from_accepted(union(), f, base), true, Vec::new())
        }
    };
    server.queue = queue;
    if !admitted && !forced {
        return Err(Error::Internal(format!(
            "server {} rejected task {id} that its admission test accepted",
            server.id
        )));
    }
    Ok(ArrivalOutcome { admitted, evicted })
}
