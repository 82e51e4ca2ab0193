//! Brute-force ground truth for the single-server batch problem.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::model::{check_capacity, deadline_order_cmp, meets_deadline, Task, TaskId};

pub const SUBSET_CAP: usize = 20;
pub const PERMUTATION_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub max_served: usize,
    /// Deadline-sorted feasible subset of size `max_served`.
    pub witness: Vec<Task>,
}

impl OracleResult {
    pub fn witness_ids(&self) -> Vec<TaskId> {
        self.witness.iter().map(|t| t.id).collect()
    }
}

fn edf_feasible(sorted: &[&Task], mask: u32, capacity: f64, base_time: f64) -> bool {
    let mut work = 0u64;
    for (i, t) in sorted.iter().enumerate() {
        if mask & (1 << i) != 0 {
            work += t.cpu_cycles;
            if !meets_deadline(base_time, work, capacity, t.deadline) {
                return false;
            }
        }
    }
    true
}

/// Enumerates all subsets and checks each in deadline order. The witness is
/// the maximum subset whose sorted id list is lexicographically smallest.
pub fn oracle_max_served(tasks: &[Task], capacity: f64, base_time: f64) -> Result<OracleResult> {
    check_capacity(capacity)?;
    let n = tasks.len();
    if n > SUBSET_CAP {
        return Err(Error::InstanceTooLarge { n, cap: SUBSET_CAP });
    }
    let mut sorted: Vec<&Task> = tasks.iter().collect();
    sorted.sort_by(|a, b| deadline_order_cmp(a, b));

    let ids_of = |mask: u32| -> Vec<TaskId> {
        sorted
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, t)| t.id)
            .sorted()
            .collect()
    };

    let mut best: Option<(usize, Vec<TaskId>, u32)> = None;
    for mask in 0u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if best.as_ref().is_some_and(|(s, _, _)| size < *s) {
            continue;
        }
        if !edf_feasible(&sorted, mask, capacity, base_time) {
            continue;
        }
        let ids = ids_of(mask);
        let better = match &best {
            None => true,
            Some((s, b, _)) => size > *s || ids < *b,
        };
        if better {
            best = Some((size, ids, mask));
        }
    }

    let (max_served, _, mask) = best.expect("empty subset is always feasible");
    let witness = sorted
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, t)| (*t).clone())
        .collect();
    Ok(OracleResult { max_served, witness })
}

/// Enumerates all `n!` execution orders; a task that would finish late is
/// skipped and costs no time.
pub fn oracle_max_served_permutations(
    tasks: &[Task],
    capacity: f64,
    base_time: f64,
) -> Result<OracleResult> {
    check_capacity(capacity)?;
    let n = tasks.len();
    if n > PERMUTATION_CAP {
        return Err(Error::InstanceTooLarge {
            n,
            cap: PERMUTATION_CAP,
        });
    }
    let mut best: Vec<&Task> = Vec::new();
    for perm in tasks.iter().permutations(n) {
        let mut work = 0u64;
        let mut served = Vec::with_capacity(n);
        for t in perm {
            if meets_deadline(base_time, work + t.cpu_cycles, capacity, t.deadline) {
                work += t.cpu_cycles;
                served.push(t);
            }
        }
        if served.len() > best.len() {
            best = served;
            if best.len() == n {
                break;
            }
        }
    }
    let mut witness: Vec<Task> = best.into_iter().cloned().collect();
    witness.sort_by(deadline_order_cmp);
    Ok(OracleResult {
        max_served: witness.len(),
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::is_feasible_order;
    use proptest::prelude::*;

    const GHZ: f64 = 1e9;

    #[test]
    fn five_tasks() {
        let t = super::super::model::fixtures::five_tasks();
        let r = oracle_max_served(&t, GHZ, 0.0).unwrap();
        assert_eq!(r.max_served, 4);
        assert_eq!(seqs(&r.witness), vec![5, 4, 1, 3]);
        assert_eq!(oracle_max_served_permutations(&t, GHZ, 0.0).unwrap().max_served, 4);
    }

    #[test]
    fn trivial_instances() {
        let r = oracle_max_served(&[], GHZ, 0.0).unwrap();
        assert_eq!(r.max_served, 0);
        assert!(r.witness.is_empty());

        let open: Vec<Task> = (0..6)
            .map(|i| Task::new(TaskId::new(0, i), 0.0, 1_000 + i as u64, f64::INFINITY, 0.0).unwrap())
            .collect();
        assert_eq!(oracle_max_served(&open, GHZ, 0.0).unwrap().max_served, 6);

        let one = Task::new(TaskId::new(0, 1), 0.0, 10, 1.0, 0.0).unwrap();
        assert_eq!(oracle_max_served_permutations(&[one], GHZ, 0.0).unwrap().max_served, 1);
    }

    #[test]
    fn caps_enforced() {
        let many: Vec<Task> = (0..21)
            .map(|i| Task::new(TaskId::new(0, i), 0.0, 1, 1.0, 0.0).unwrap())
            .collect();
        assert!(matches!(
            oracle_max_served(&many, 1.0, 0.0),
            Err(Error::InstanceTooLarge { n: 21, cap: 20 })
        ));
        assert!(matches!(
            oracle_max_served_permutations(&many[..9], 1.0, 0.0),
            Err(Error::InstanceTooLarge { n: 9, cap: 8 })
        ));
    }

    fn arb_batch(max_n: usize) -> impl Strategy<Value = Vec<Task>> {
        prop::collection::vec((1u64..8, 1u64..25), 0..=max_n).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (c, d))| Task::new(TaskId::new(0, i as u32), 0.0, c, d as f64, 0.0).unwrap())
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn subset_and_permutation_agree(tasks in arb_batch(6)) {
            let a = oracle_max_served(&tasks, 1.0, 0.0).unwrap();
            let b = oracle_max_served_permutations(&tasks, 1.0, 0.0).unwrap();
            prop_assert_eq!(a.max_served, b.max_served);
            prop_assert!(is_feasible_order(&a.witness, 1.0, 0.0).unwrap());
            prop_assert!(is_feasible_order(&b.witness, 1.0, 0.0).unwrap());
        }

        #[test]
        fn monotone_under_more_tasks_and_later_deadlines(tasks in arb_batch(9), extra in (1u64..8, 1u64..25), bump in 0usize..9) {
            let base = oracle_max_served(&tasks, 1.0, 0.0).unwrap().max_served;
            let mut more = tasks.clone();
            more.push(Task::new(TaskId::new(1, 0), 0.0, extra.0, extra.1 as f64, 0.0).unwrap());
            prop_assert!(oracle_max_served(&more, 1.0, 0.0).unwrap().max_served >= base);
            if !tasks.is_empty() {
                let mut later = tasks.clone();
                let i = bump % later.len();
                later[i].deadline += 5.0;
                prop_assert!(oracle_max_served(&later, 1.0, 0.0).unwrap().max_served >= base);
            }
        }
    }
}
