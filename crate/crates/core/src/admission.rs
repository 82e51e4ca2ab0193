//! Fast outage detection: a single pass over a server's current optimal
//! schedule that predicts whether a new task would be kept by a full
//! re-schedule of the union.
//!
//! When the new task `a` is visited by the cycle-order greedy, the slot array
//! holds exactly the queued tasks that precede `a` in cycle order (all of
//! them, since the queue is feasible on its own). `a` survives iff that set
//! plus `a` is on time in deadline order, which is what the pass checks.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{
    check_capacity, cycle_order_cmp, deadline_order_cmp, finish_time, meets_deadline, Schedule,
    Task, TaskId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FodMode {
    /// Accumulate the work of every task that precedes the new one in cycle
    /// order, plus the new task itself.
    #[default]
    Exact,
    /// Textbook transcription: include every task with work `<=` the new
    /// task's and add the *new* task's work on each hit. Kept for comparison
    /// only; it disagrees with the full re-schedule.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionVerdict {
    pub accepted: bool,
    /// Completion of the new task if it joins the queue and nothing ahead of
    /// it in deadline order is evicted.
    pub predicted_completion: Option<f64>,
    /// The task whose deadline the accumulated delay broke.
    pub failing_deadline_task: Option<TaskId>,
    /// Deadline-order elements visited.
    pub visited: usize,
}

fn check_schedule(current: &Schedule, capacity: f64, clock: f64) -> Result<()> {
    let mut work = 0u64;
    for (i, t) in current.accepted.iter().enumerate() {
        if i > 0 && deadline_order_cmp(&current.accepted[i - 1], t) != Ordering::Less {
            return Err(Error::Precondition(format!(
                "schedule not deadline-sorted at position {}",
                i + 1
            )));
        }
        work += t.cpu_cycles;
        if !meets_deadline(clock, work, capacity, t.deadline) {
            return Err(Error::Precondition(format!(
                "schedule infeasible at position {} (task {})",
                i + 1,
                t.id
            )));
        }
    }
    Ok(())
}

pub fn fod_admit(
    current: &Schedule,
    new_task: &Task,
    capacity: f64,
    clock: f64,
) -> Result<AdmissionVerdict> {
    fod_admit_with(current, new_task, capacity, clock, FodMode::Exact)
}

pub fn fod_admit_with(
    current: &Schedule,
    new_task: &Task,
    capacity: f64,
    clock: f64,
    mode: FodMode,
) -> Result<AdmissionVerdict> {
    check_capacity(capacity)?;
    check_schedule(current, capacity, clock)?;

    let includes = |t: &Task| match mode {
        FodMode::Exact => cycle_order_cmp(t, new_task) != Ordering::Greater,
        FodMode::Literal => t.cpu_cycles <= new_task.cpu_cycles,
    };

    // Merge the new task into the deadline order on the fly.
    let mut pending = Some(new_task);
    let mut existing = current.accepted.iter().peekable();
    let mut delay_work = 0u64;
    let mut work_through_new = 0u64;
    let mut visited = 0;

    loop {
        let t = match (pending, existing.peek()) {
            (Some(a), Some(e)) if deadline_order_cmp(a, e) == Ordering::Less => pending.take().unwrap(),
            (Some(_), None) => pending.take().unwrap(),
            (_, Some(_)) => existing.next().unwrap(),
            (None, None) => break,
        };
        visited += 1;
        let is_new = std::ptr::eq(t, new_task);
        if pending.is_some() || is_new {
            work_through_new += t.cpu_cycles;
        }
        if includes(t) {
            delay_work += match mode {
                FodMode::Exact => t.cpu_cycles,
                FodMode::Literal => new_task.cpu_cycles,
            };
            if !meets_deadline(clock, delay_work, capacity, t.deadline) {
                return Ok(AdmissionVerdict {
                    accepted: false,
                    predicted_completion: None,
                    failing_deadline_task: Some(t.id),
                    visited,
                });
            }
        }
    }

    Ok(AdmissionVerdict {
        accepted: true,
        predicted_completion: Some(finish_time(clock, work_through_new, capacity)),
        failing_deadline_task: None,
        visited,
    })
}
