//! Comparison schedulers: three priority dispatch rules, Moore-Hodgson, and
//! a Dedas-style insertion discipline.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_capacity, deadline_order_cmp, meets_deadline, Schedule, Task};

/// Every scheduler selectable by name in configs and on the command line.
///
/// `optimal` and `fod` run the same server-side schedule; they differ in how
/// the user predicts admission (full re-schedule vs. the linear-time test).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Optimal,
    Fod,
    Edf,
    Sdf,
    DstarS,
    Moore,
    Dedas,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 7] = [
        SchedulerKind::Optimal,
        SchedulerKind::Fod,
        SchedulerKind::Edf,
        SchedulerKind::Sdf,
        SchedulerKind::DstarS,
        SchedulerKind::Moore,
        SchedulerKind::Dedas,
    ];

    pub fn all() -> Vec<SchedulerKind> {
        Self::ALL.to_vec()
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Optimal => "optimal",
            SchedulerKind::Fod => "fod",
            SchedulerKind::Edf => "edf",
            SchedulerKind::Sdf => "sdf",
            SchedulerKind::DstarS => "dstar_s",
            SchedulerKind::Moore => "moore",
            SchedulerKind::Dedas => "dedas",
        }
    }

    /// The priority rule, for the three dispatch-order baselines.
    pub fn policy(&self) -> Option<PolicyKind> {
        match self {
            SchedulerKind::Edf => Some(PolicyKind::Edf),
            SchedulerKind::Sdf => Some(PolicyKind::Sdf),
            SchedulerKind::DstarS => Some(PolicyKind::DstarS),
            _ => None,
        }
    }

    /// Whether the server queue is kept feasible at all times, i.e. every
    /// queued task is predicted on time.
    pub fn keeps_feasible_queue(&self) -> bool {
        self.policy().is_none()
    }

    /// Deadline-sorted queues produced by a full re-schedule on arrival.
    pub fn reschedules(&self) -> bool {
        matches!(self, SchedulerKind::Optimal | SchedulerKind::Fod | SchedulerKind::Moore)
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownScheduler(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Edf,
    Sdf,
    DstarS,
}

/// Which task attribute stands in for "size" in SDF and D*S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeKey {
    #[default]
    Cycles,
    Bits,
}

impl FromStr for SizeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycles" => Ok(SizeKey::Cycles),
            "bits" => Ok(SizeKey::Bits),
            other => Err(Error::config("size_key", format!("expected cycles|bits, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchPolicy {
    pub kind: PolicyKind,
    pub drop_stale: bool,
    pub size_key: SizeKey,
}

impl DispatchPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            drop_stale: true,
            size_key: SizeKey::Cycles,
        }
    }

    fn size(&self, t: &Task) -> f64 {
        match self.size_key {
            SizeKey::Cycles => t.cpu_cycles as f64,
            SizeKey::Bits => t.data_size,
        }
    }

    /// Priority key at `now`; smaller runs first.
    pub fn key(&self, t: &Task, now: f64) -> f64 {
        match self.kind {
            PolicyKind::Edf => t.deadline,
            PolicyKind::Sdf => self.size(t),
            // Remaining time to deadline times size.
            PolicyKind::DstarS => (t.deadline - now) * self.size(t),
        }
    }

    pub fn cmp(&self, a: &Task, b: &Task, now: f64) -> Ordering {
        self.key(a, now)
            .total_cmp(&self.key(b, now))
            .then(a.id.cmp(&b.id))
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Edf => "edf",
            PolicyKind::Sdf => "sdf",
            PolicyKind::DstarS => "dstar_s",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dispatch {
    pub task: Option<Task>,
    /// Tasks removed because they could no longer finish on time.
    pub dropped: Vec<Task>,
}

/// Removes and returns the queue element with the smallest policy key.
pub fn next_task(
    policy: &DispatchPolicy,
    queue: &mut Vec<Task>,
    now: f64,
    capacity: f64,
) -> Result<Dispatch> {
    check_capacity(capacity)?;
    let mut out = Dispatch::default();
    while !queue.is_empty() {
        let best = queue
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| policy.cmp(a, b, now))
            .map(|(i, _)| i)
            .unwrap();
        let t = queue.remove(best);
        if policy.drop_stale && !meets_deadline(now, t.cpu_cycles, capacity, t.deadline) {
            out.dropped.push(t);
            continue;
        }
        out.task = Some(t);
        break;
    }
    Ok(out)
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct ByWork {
    cycles: u64,
    pos: usize,
}

/// Moore-Hodgson: scan in deadline order, and on each violation drop the
/// largest-work task scanned so far.
pub fn moore_hodgson(tasks: &[Task], capacity: f64, base_time: f64) -> Result<Schedule> {
    check_capacity(capacity)?;
    let mut order: Vec<&Task> = tasks.iter().collect();
    order.sort_by(|a, b| deadline_order_cmp(a, b));

    let mut heap = BinaryHeap::with_capacity(order.len());
    let mut kept = vec![true; order.len()];
    let mut work = 0u64;
    for (pos, t) in order.iter().enumerate() {
        heap.push(ByWork {
            cycles: t.cpu_cycles,
            pos,
        });
        work += t.cpu_cycles;
        if !meets_deadline(base_time, work, capacity, t.deadline) {
            let longest = heap.pop().unwrap();
            work -= longest.cycles;
            kept[longest.pos] = false;
        }
    }

    let mut accepted = Vec::with_capacity(heap.len());
    let mut rejected = Vec::new();
    for (t, k) in order.into_iter().zip(kept) {
        if k {
            accepted.push(t.clone());
        } else {
            rejected.push(t.clone());
        }
    }
    rejected.sort_by_key(|t| t.id);
    Ok(Schedule {
        base_time,
        capacity,
        accepted,
        rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedasOutcome {
    /// 1-based insertion position.
    Admit { position: usize },
    Reject,
}

fn feasible_with_insert(queue: &[Task], new_task: &Task, at: usize, capacity: f64, base: f64) -> bool {
    let mut work = 0u64;
    let seq = queue[..at]
        .iter()
        .chain(std::iter::once(new_task))
        .chain(&queue[at..]);
    for t in seq {
        work += t.cpu_cycles;
        if !meets_deadline(base, work, capacity, t.deadline) {
            return false;
        }
    }
    true
}

/// Tries the tail first, then every position front to back; existing tasks
/// are never evicted. Timing starts at `max(now, queue.base_time)`.
pub fn dedas_insert(queue: &Schedule, new_task: &Task, now: f64) -> DedasOutcome {
    let base = queue.base_time.max(now);
    let cap = queue.capacity;
    let q = &queue.accepted;
    if meets_deadline(base, queue.total_work() + new_task.cpu_cycles, cap, new_task.deadline) {
        return DedasOutcome::Admit { position: q.len() + 1 };
    }
    (0..=q.len())
        .find(|&at| feasible_with_insert(q, new_task, at, cap, base))
        .map_or(DedasOutcome::Reject, |at| DedasOutcome::Admit { position: at + 1 })
}
