//! Exact late-job minimization for a batch of tasks sharing one server.
//!
//! Tasks are visited in cycle order (smallest work first). Each one is
//! dropped into its slot of the deadline order and kept only if no occupied
//! slot at or after it becomes late. [`schedule_optimal`] is the literal
//! quadratic form; [`schedule_optimal_fast`] answers the same outage check
//! with a range-add/range-min tree over slot slacks and returns the same
//! schedule.

use crate::error::Result;
use crate::model::{
    check_capacity, cycle_order_cmp, deadline_order_cmp, meets_deadline, work_budget, Schedule,
    Task,
};
use crate::segtree::{Fenwick, MinAddTree};

/// Permutation of input positions sorted by work (the set `c`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleOrder {
    pub indices: Vec<usize>,
}

/// Permutation of input positions sorted by deadline (the set `b`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeadlineOrder {
    pub indices: Vec<usize>,
}

impl DeadlineOrder {
    /// `slot_of[input position] = position in the deadline order`.
    pub fn slots(&self) -> Vec<usize> {
        let mut slot_of = vec![0; self.indices.len()];
        for (slot, &i) in self.indices.iter().enumerate() {
            slot_of[i] = slot;
        }
        slot_of
    }
}

/// The array `q`: one slot per deadline position, empty or holding an input
/// position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotArray {
    pub slots: Vec<Option<usize>>,
}

impl SlotArray {
    pub fn new(len: usize) -> Self {
        Self {
            slots: vec![None; len],
        }
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().filter_map(|s| *s)
    }
}

pub fn build_cycle_order(tasks: &[Task]) -> CycleOrder {
    let mut indices: Vec<usize> = (0..tasks.len()).collect();
    indices.sort_by(|&a, &b| cycle_order_cmp(&tasks[a], &tasks[b]));
    CycleOrder { indices }
}

pub fn build_deadline_order(tasks: &[Task]) -> DeadlineOrder {
    let mut indices: Vec<usize> = (0..tasks.len()).collect();
    indices.sort_by(|&a, &b| deadline_order_cmp(&tasks[a], &tasks[b]));
    DeadlineOrder { indices }
}

/// Splits off tasks whose deadline passed before `base_time`; they can never
/// be on time and never enter the slot array.
fn split_stale(tasks: &[Task], base_time: f64) -> (Vec<Task>, Vec<Task>) {
    tasks.iter().cloned().partition(|t| t.deadline >= base_time)
}

fn finish(
    live: &[Task],
    accepted_slots: impl Iterator<Item = usize>,
    mut rejected: Vec<Task>,
    capacity: f64,
    base_time: f64,
) -> Schedule {
    let mut taken = vec![false; live.len()];
    let accepted: Vec<Task> = accepted_slots
        .map(|i| {
            taken[i] = true;
            live[i].clone()
        })
        .collect();
    rejected.extend(
        live.iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(t, _)| t.clone()),
    );
    rejected.sort_by_key(|t| t.id);
    Schedule {
        base_time,
        capacity,
        accepted,
        rejected,
    }
}

/// Reference implementation: one full outage scan of the slot suffix per
/// candidate, O(N^2).
pub fn schedule_optimal(tasks: &[Task], capacity: f64, base_time: f64) -> Result<Schedule> {
    check_capacity(capacity)?;
    let (live, stale) = split_stale(tasks, base_time);
    let c = build_cycle_order(&live);
    let b = build_deadline_order(&live);
    let slot_of = b.slots();
    let mut q = SlotArray::new(live.len());

    for &cand in &c.indices {
        let star = slot_of[cand];
        q.slots[star] = Some(cand);

        // Work of everything placed ahead of slot `star`.
        let mut work: u64 = q.slots[..star]
            .iter()
            .flatten()
            .map(|&i| live[i].cpu_cycles)
            .sum();
        let mut outage = false;
        for slot in &q.slots[star..] {
            if let Some(i) = *slot {
                work += live[i].cpu_cycles;
                if !meets_deadline(base_time, work, capacity, live[i].deadline) {
                    outage = true;
                    break;
                }
            }
        }
        if outage {
            q.slots[star] = None;
        }
    }

    Ok(finish(&live, q.occupied(), stale, capacity, base_time))
}

const EMPTY_SLACK: i64 = i64::MAX / 4;

/// O(N log N) variant. Slot `j` holds `budget_j - W_j`, the spare work before
/// its task turns late; a candidate is kept iff the suffix minimum stays
/// non-negative after inserting it.
pub fn schedule_optimal_fast(tasks: &[Task], capacity: f64, base_time: f64) -> Result<Schedule> {
    check_capacity(capacity)?;
    let (live, stale) = split_stale(tasks, base_time);
    let n = live.len();
    let c = build_cycle_order(&live);
    let b = build_deadline_order(&live);
    let slot_of = b.slots();

    let mut slack = MinAddTree::new(n, EMPTY_SLACK);
    let mut work_before = Fenwick::new(n);
    let mut kept = vec![false; n];

    for &cand in &c.indices {
        let star = slot_of[cand];
        let task = &live[cand];
        let alpha = task.cpu_cycles as i64;
        let budget = work_budget(base_time, capacity, task.deadline);
        let done = work_before.prefix(star) as i64 + alpha;

        slack.set(star, budget - done);
        slack.add(star + 1, n, -alpha);
        if slack.min(star, n) < 0 {
            slack.add(star + 1, n, alpha);
            slack.set(star, EMPTY_SLACK);
        } else {
            work_before.add(star, task.cpu_cycles);
            kept[star] = true;
        }
    }

    let accepted_slots = b
        .indices
        .iter()
        .enumerate()
        .filter(|(slot, _)| kept[*slot])
        .map(|(_, &i)| i);
    Ok(finish(&live, accepted_slots, stale, capacity, base_time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{is_feasible_order, TaskId};
    use proptest::prelude::*;

    const GHZ: f64 = 1e9;

    fn ids_in(tasks: &[Task], order: &[usize]) -> Vec<u32> {
        order.iter().map(|&i| tasks[i].id.seq).collect()
    }

    #[test]
    fn orders_on_five_tasks() {
        let t = five_tasks();
        assert_eq!(ids_in(&t, &build_deadline_order(&t).indices), vec![5, 4, 2, 1, 3]);
        // Equal work (tasks 3 and 5): larger deadline first.
        assert_eq!(ids_in(&t, &build_cycle_order(&t).indices), vec![4, 3, 5, 1, 2]);
    }

    #[test]
    fn orders_on_trivial_inputs() {
        assert!(build_cycle_order(&[]).indices.is_empty());
        assert!(build_deadline_order(&[]).indices.is_empty());
        let one = vec![Task::new(TaskId::new(0, 9), 0.0, 3, 1.0, 0.0).unwrap()];
        assert_eq!(build_deadline_order(&one).indices, vec![0]);
        let distinct: Vec<Task> = [5u64, 1, 3]
            .iter()
            .enumerate()
            .map(|(i, &c)| Task::new(TaskId::new(0, i as u32), 0.0, c, 1.0, 0.0).unwrap())
            .collect();
        assert_eq!(build_cycle_order(&distinct).indices, vec![1, 2, 0]);
    }

    #[test]
    fn five_tasks_golden() {
        for f in [schedule_optimal, schedule_optimal_fast] {
            let s = f(&five_tasks(), GHZ, 0.0).unwrap();
            assert_eq!(seqs(&s.accepted), vec![5, 4, 1, 3]);
            assert_eq!(seqs(&s.rejected), vec![2]);
        }
    }

    /// Visiting tied-work tasks in the printed example order (5 before 3)
    /// still lands on the same schedule.
    #[test]
    fn tie_order_of_example_gives_same_schedule() {
        let t = five_tasks();
        let b = build_deadline_order(&t);
        let slot_of = b.slots();
        let printed_c: Vec<usize> = [4u32, 5, 3, 1, 2]
            .iter()
            .map(|s| t.iter().position(|x| x.id.seq == *s).unwrap())
            .collect();
        let mut q = SlotArray::new(t.len());
        for cand in printed_c {
            let star = slot_of[cand];
            q.slots[star] = Some(cand);
            let order: Vec<Task> = q.occupied().map(|i| t[i].clone()).collect();
            if !is_feasible_order(&order, GHZ, 0.0).unwrap() {
                q.slots[star] = None;
            }
        }
        assert_eq!(ids_in(&t, &q.occupied().collect::<Vec<_>>()), vec![5, 4, 1, 3]);
    }

    #[test]
    fn infeasible_singleton_and_empty() {
        let t = Task::new(TaskId::new(0, 1), 0.0, 2_000_000_000, 1.0, 0.0).unwrap();
        for f in [schedule_optimal, schedule_optimal_fast] {
            let s = f(std::slice::from_ref(&t), GHZ, 0.0).unwrap();
            assert!(s.accepted.is_empty());
            assert_eq!(s.rejected.len(), 1);
            let e = f(&[], GHZ, 0.0).unwrap();
            assert!(e.accepted.is_empty() && e.rejected.is_empty());
            assert!(f(&[], 0.0, 0.0).is_err());
        }
    }

    #[test]
    fn stale_tasks_rejected_up_front() {
        let old = Task::new(TaskId::new(0, 1), 0.0, 1, 0.5, 0.0).unwrap();
        let fresh = Task::new(TaskId::new(0, 2), 0.0, 1, 5.0, 0.0).unwrap();
        let s = schedule_optimal_fast(&[old, fresh], GHZ, 1.0).unwrap();
        assert_eq!(seqs(&s.accepted), vec![2]);
        assert_eq!(seqs(&s.rejected), vec![1]);
    }

    pub(crate) fn arb_batch(max_n: usize) -> impl Strategy<Value = Vec<Task>> {
        prop::collection::vec((1u64..8, 1u64..30), 0..=max_n).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (c, d))| Task::new(TaskId::new(0, i as u32), 0.0, c, d as f64, 0.0).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn output_feasible_sorted_and_partitioned(tasks in arb_batch(14), cap in 1.0f64..3.0) {
            let s = schedule_optimal(&tasks, cap, 0.0).unwrap();
            prop_assert!(is_feasible_order(&s.accepted, cap, 0.0).unwrap());
            prop_assert!(s.accepted.windows(2).all(|w| deadline_order_cmp(&w[0], &w[1]).is_lt()));
            let mut all: Vec<_> = s.accepted_ids().into_iter().chain(s.rejected_ids()).collect();
            all.sort();
            let mut want: Vec<_> = tasks.iter().map(|t| t.id).collect();
            want.sort();
            prop_assert_eq!(all, want);
        }

        #[test]
        fn fast_is_identical(tasks in arb_batch(20), cap in 0.5f64..3.0, base in 0.0f64..3.0) {
            prop_assert_eq!(
                schedule_optimal(&tasks, cap, base).unwrap(),
                schedule_optimal_fast(&tasks, cap, base).unwrap()
            );
        }

        #[test]
        fn permutation_invariant(tasks in arb_batch(12), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = tasks.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = schedule_optimal_fast(&tasks, 1.0, 0.0).unwrap();
            let b = schedule_optimal_fast(&shuffled, 1.0, 0.0).unwrap();
            prop_assert_eq!(a.accepted_ids(), b.accepted_ids());
        }

        #[test]
        fn idempotent(tasks in arb_batch(14)) {
            let s = schedule_optimal(&tasks, 1.0, 0.0).unwrap();
            let again = schedule_optimal(&s.accepted, 1.0, 0.0).unwrap();
            prop_assert_eq!(again.accepted_ids(), s.accepted_ids());
            prop_assert!(again.rejected.is_empty());
        }

        #[test]
        fn more_capacity_never_serves_fewer(tasks in arb_batch(14), cap in 0.5f64..2.0, extra in 0.0f64..2.0) {
            let lo = schedule_optimal_fast(&tasks, cap, 0.0).unwrap().accepted.len();
            let hi = schedule_optimal_fast(&tasks, cap + extra, 0.0).unwrap().accepted.len();
            prop_assert!(hi >= lo);
        }

        /// Any feasible order stays feasible once sorted by deadline.
        #[test]
        fn deadline_sorting_preserves_feasibility(tasks in arb_batch(10), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut order = tasks.clone();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            // Keep the on-time prefix skeleton: drop tasks that would be late.
            let mut kept = Vec::new();
            let mut w = 0u64;
            for t in order {
                if meets_deadline(0.0, w + t.cpu_cycles, 1.0, t.deadline) {
                    w += t.cpu_cycles;
                    kept.push(t);
                }
            }
            prop_assert!(is_feasible_order(&kept, 1.0, 0.0).unwrap());
            kept.sort_by(deadline_order_cmp);
            prop_assert!(is_feasible_order(&kept, 1.0, 0.0).unwrap());
        }
    }
}
