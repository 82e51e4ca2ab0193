//! Domain types shared by every scheduler and the simulator.
//!
//! Units are fixed crate-wide: seconds for time, cycles for work, bits for
//! payloads and cycles/second for server capacity. Deadlines are absolute
//! clock values.
//!
//! Work is integral. Every on-time test in the crate goes through
//! [`meets_deadline`], which evaluates `base + W / f <= deadline` with `W`
//! the exact cumulative cycle count, so two schedulers that see the same
//! prefix always reach the same verdict.

mod io;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_tasks_csv, read_tasks_json, write_tasks_csv, write_tasks_json};

/// `(user index, per-user sequence number)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub user: u32,
    pub seq: u32,
}

impl TaskId {
    pub const fn new(user: u32, seq: u32) -> Self {
        Self { user, seq }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.user, self.seq)
    }
}

/// One offloadable job.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    /// Absolute generation time in seconds.
    pub arrival_time: f64,
    /// Required CPU cycles, always > 0.
    pub cpu_cycles: u64,
    /// Absolute deadline in seconds.
    pub deadline: f64,
    /// Uplink payload in bits.
    pub data_size: f64,
    pub origin_user: u32,
}

impl Task {
    pub fn new(
        id: TaskId,
        arrival_time: f64,
        cpu_cycles: u64,
        deadline: f64,
        data_size: f64,
    ) -> Result<Self> {
        let task = Self {
            id,
            arrival_time,
            cpu_cycles,
            deadline,
            data_size,
            origin_user: id.user,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::InvalidTask {
                id: self.id,
                reason: reason.to_string(),
            })
        };
        if self.cpu_cycles == 0 {
            return fail("cpu_cycles must be > 0");
        }
        if !(self.data_size >= 0.0) || !self.data_size.is_finite() {
            return fail("data_size must be finite and >= 0");
        }
        if !(self.arrival_time >= 0.0) || !self.arrival_time.is_finite() {
            return fail("arrival_time must be finite and >= 0");
        }
        if !(self.deadline >= self.arrival_time) {
            return fail("deadline must be >= arrival_time");
        }
        Ok(())
    }

    /// Copy with a different deadline; used when a transmission delay
    /// shrinks the time left for computation.
    pub fn with_deadline(&self, deadline: f64) -> Self {
        Self {
            deadline,
            ..self.clone()
        }
    }
}

/// Deadline order (the set `b`): deadline asc, cycles asc, id asc.
pub fn deadline_order_cmp(a: &Task, b: &Task) -> Ordering {
    a.deadline
        .total_cmp(&b.deadline)
        .then(a.cpu_cycles.cmp(&b.cpu_cycles))
        .then(a.id.cmp(&b.id))
}

/// Cycle order (the set `c`): cycles asc, deadline desc, id asc.
pub fn cycle_order_cmp(a: &Task, b: &Task) -> Ordering {
    a.cpu_cycles
        .cmp(&b.cpu_cycles)
        .then(b.deadline.total_cmp(&a.deadline))
        .then(a.id.cmp(&b.id))
}

/// An ordered list of accepted tasks plus the rejected remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Clock at which the first accepted task starts.
    pub base_time: f64,
    pub capacity: f64,
    pub accepted: Vec<Task>,
    /// Sorted by id.
    pub rejected: Vec<Task>,
}

impl Schedule {
    pub fn empty(capacity: f64, base_time: f64) -> Self {
        Self {
            base_time,
            capacity,
            accepted: Vec::new(),
            rejected: Vec::new(),
        }
    }

    pub fn from_accepted(accepted: Vec<Task>, capacity: f64, base_time: f64) -> Self {
        Self {
            base_time,
            capacity,
            accepted,
            rejected: Vec::new(),
        }
    }

    pub fn accepted_ids(&self) -> Vec<TaskId> {
        self.accepted.iter().map(|t| t.id).collect()
    }

    pub fn rejected_ids(&self) -> Vec<TaskId> {
        self.rejected.iter().map(|t| t.id).collect()
    }

    pub fn total_work(&self) -> u64 {
        self.accepted.iter().map(|t| t.cpu_cycles).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutageVerdict {
    pub is_outage: bool,
    pub completion_time: f64,
    /// `deadline - completion_time`.
    pub slack: f64,
}

impl OutageVerdict {
    pub fn new(completion_time: f64, deadline: f64) -> Self {
        let slack = deadline - completion_time;
        Self {
            is_outage: completion_time > deadline,
            completion_time,
            slack,
        }
    }
}

pub fn check_capacity(capacity: f64) -> Result<()> {
    if capacity > 0.0 && capacity.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCapacity(capacity))
    }
}

#[inline]
pub fn finish_time(base_time: f64, work: u64, capacity: f64) -> f64 {
    base_time + work as f64 / capacity
}

#[inline]
pub fn meets_deadline(base_time: f64, work: u64, capacity: f64, deadline: f64) -> bool {
    finish_time(base_time, work, capacity) <= deadline
}

const MAX_EXACT_WORK: i64 = 1 << 53;

/// Largest integer work `W` with `meets_deadline(base, W, f, deadline)`, or
/// -1 when even zero work is late. Capped at 2^53.
pub(crate) fn work_budget(base_time: f64, capacity: f64, deadline: f64) -> i64 {
    if !(deadline >= base_time) || !meets_deadline(base_time, 0, capacity, deadline) {
        return -1;
    }
    let raw = (deadline - base_time) * capacity;
    if raw >= MAX_EXACT_WORK as f64 {
        return MAX_EXACT_WORK;
    }
    let fits = |w: i64| meets_deadline(base_time, w as u64, capacity, deadline);
    let mut w = raw.floor().max(0.0) as i64;
    while w < MAX_EXACT_WORK && fits(w + 1) {
        w += 1;
    }
    while w > 0 && !fits(w) {
        w -= 1;
    }
    w
}

/// Absolute completion time of every accepted task, in order.
pub fn completion_times(schedule: &Schedule) -> Result<Vec<f64>> {
    check_capacity(schedule.capacity)?;
    let mut work = 0u64;
    Ok(schedule
        .accepted
        .iter()
        .map(|t| {
            work += t.cpu_cycles;
            finish_time(schedule.base_time, work, schedule.capacity)
        })
        .collect())
}

/// Per-task outage verdicts for an execution order.
pub fn outage_verdicts(tasks: &[Task], capacity: f64, base_time: f64) -> Result<Vec<OutageVerdict>> {
    check_capacity(capacity)?;
    let mut work = 0u64;
    Ok(tasks
        .iter()
        .map(|t| {
            work += t.cpu_cycles;
            OutageVerdict::new(finish_time(base_time, work, capacity), t.deadline)
        })
        .collect())
}

/// True iff every task in `tasks`, run back to back from `base_time`,
/// finishes by its deadline.
pub fn is_feasible_order(tasks: &[Task], capacity: f64, base_time: f64) -> Result<bool> {
    check_capacity(capacity)?;
    let mut work = 0u64;
    Ok(tasks.iter().all(|t| {
        work += t.cpu_cycles;
        meets_deadline(base_time, work, capacity, t.deadline)
    }))
}
