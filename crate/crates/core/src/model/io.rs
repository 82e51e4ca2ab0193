use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Task, TaskId};
use crate::error::{Error, Result};

/// Wire form shared by the CSV and JSON task formats.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    id: u32,
    arrival_s: f64,
    cycles: u64,
    deadline_s: f64,
    bits: f64,
    user: u32,
}

impl From<&Task> for TaskRecord {
    fn from(t: &Task) -> Self {
        Self {
            id: t.id.seq,
            arrival_s: t.arrival_time,
            cycles: t.cpu_cycles,
            deadline_s: t.deadline,
            bits: t.data_size,
            user: t.id.user,
        }
    }
}

impl TaskRecord {
    fn into_task(self) -> Result<Task> {
        Task::new(
            TaskId::new(self.user, self.id),
            self.arrival_s,
            self.cycles,
            self.deadline_s,
            self.bits,
        )
    }
}

fn check_unique(tasks: &[Task]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, t) in tasks.iter().enumerate() {
        if !seen.insert(t.id) {
            return Err(Error::Row {
                row: i + 1,
                reason: format!("duplicate task id {}", t.id),
            });
        }
    }
    Ok(())
}

/// Reads `id,arrival_s,cycles,deadline_s,bits,user`. Row numbers in errors
/// count data rows from 1.
pub fn read_tasks_csv<R: Read>(reader: R) -> Result<Vec<Task>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut tasks = Vec::new();
    for (i, rec) in rdr.deserialize::<TaskRecord>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row {
            row,
            reason: e.to_string(),
        })?;
        let task = rec.into_task().map_err(|e| Error::Row {
            row,
            reason: e.to_string(),
        })?;
        tasks.push(task);
    }
    check_unique(&tasks)?;
    Ok(tasks)
}

pub fn write_tasks_csv<W: Write>(writer: W, tasks: &[Task]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    if tasks.is_empty() {
        wtr.write_record(["id", "arrival_s", "cycles", "deadline_s", "bits", "user"])?;
    }
    for t in tasks {
        wtr.serialize(TaskRecord::from(t))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_tasks_json<R: Read>(reader: R) -> Result<Vec<Task>> {
    let recs: Vec<TaskRecord> = serde_json::from_reader(reader)?;
    let tasks = recs
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.into_task().map_err(|e| Error::Row {
                row: i + 1,
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    check_unique(&tasks)?;
    Ok(tasks)
}

pub fn write_tasks_json<W: Write>(writer: W, tasks: &[Task]) -> Result<()> {
    let recs: Vec<TaskRecord> = tasks.iter().map(TaskRecord::from).collect();
    serde_json::to_writer_pretty(writer, &recs)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIVE_TASKS_CSV: &str = "id,arrival_s,cycles,deadline_s,bits,user
1,0,4000000,0.008,0,0
2,0,5000000,0.006,0,0
3,0,2000000,0.011,0,0
4,0,1000000,0.006,0,0
5,0,2000000,0.004,0,0
";

    #[test]
    fn reads_five_tasks() {
        let tasks = read_tasks_csv(FIVE_TASKS_CSV.as_bytes()).unwrap();
        assert_eq!(tasks.len(), 5);
        assert_eq!(tasks[1].cpu_cycles, 5_000_000);
        assert_eq!(tasks[4].deadline, 0.004);
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let bad = "id,arrival_s,cycles,deadline_s,bits,user\n1,0,5,1,0,0\n2,0,zero,1,0,0\n";
        match read_tasks_csv(bad.as_bytes()) {
            Err(Error::Row { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let invalid = "id,arrival_s,cycles,deadline_s,bits,user\n1,0,0,1,0,0\n";
        assert!(matches!(read_tasks_csv(invalid.as_bytes()), Err(Error::Row { row: 1, .. })));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dup = "id,arrival_s,cycles,deadline_s,bits,user\n1,0,5,1,0,0\n1,0,6,1,0,0\n";
        assert!(read_tasks_csv(dup.as_bytes()).is_err());
    }

    #[test]
    fn empty_csv_is_empty() {
        assert!(read_tasks_csv("".as_bytes()).unwrap().is_empty());
        let mut out = Vec::new();
        write_tasks_csv(&mut out, &[]).unwrap();
        assert!(read_tasks_csv(out.as_slice()).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn csv_and_json_round_trip(rows in prop::collection::vec((1u64..1_000_000_000, 0.0f64..100.0, 0.0f64..10.0, 0.0f64..1e8, 0u32..5), 0..20)) {
            let tasks: Vec<Task> = rows.into_iter().enumerate().map(|(i, (c, a, rel, bits, u))| {
                Task::new(TaskId::new(u, i as u32), a, c, a + rel, bits).unwrap()
            }).collect();
            let mut csv_buf = Vec::new();
            write_tasks_csv(&mut csv_buf, &tasks).unwrap();
            prop_assert_eq!(&read_tasks_csv(csv_buf.as_slice()).unwrap(), &tasks);
            let mut json_buf = Vec::new();
            write_tasks_json(&mut json_buf, &tasks).unwrap();
            prop_assert_eq!(&read_tasks_json(json_buf.as_slice()).unwrap(), &tasks);
        }
    }
}
