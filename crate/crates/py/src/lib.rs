//! Python bindings: tasks, single-server schedulers, FOD admission, the
//! brute-force oracle and the simulator.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use edgesched::admission;
use edgesched::baselines::{self, SchedulerKind};
use edgesched::config::parse_config;
use edgesched::experiments::batch_schedule;
use edgesched::model::{self, TaskId};
use edgesched::oracle;
use edgesched::sched_core;
use edgesched::sim::{self, SimOptions};

fn err(e: edgesched::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Task", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyTask {
    inner: model::Task,
}

#[pymethods]
impl PyTask {
    #[new]
    #[pyo3(signature = (id, cycles, deadline, arrival=0.0, bits=0.0, user=0))]
    fn new(id: u32, cycles: u64, deadline: f64, arrival: f64, bits: f64, user: u32) -> PyResult<Self> {
        let inner = model::Task::new(TaskId::new(user, id), arrival, cycles, deadline, bits).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn id(&self) -> u32 {
        self.inner.id.seq
    }

    #[getter]
    fn user(&self) -> u32 {
        self.inner.id.user
    }

    #[getter]
    fn cycles(&self) -> u64 {
        self.inner.cpu_cycles
    }

    #[getter]
    fn deadline(&self) -> f64 {
        self.inner.deadline
    }

    #[getter]
    fn arrival(&self) -> f64 {
        self.inner.arrival_time
    }

    #[getter]
    fn bits(&self) -> f64 {
        self.inner.data_size
    }

    fn __repr__(&self) -> String {
        format!(
            "Task(id={}, cycles={}, deadline={}, user={})",
            self.inner.id.seq, self.inner.cpu_cycles, self.inner.deadline, self.inner.id.user
        )
    }
}

#[pyclass(name = "Schedule", frozen)]
pub struct PySchedule {
    inner: model::Schedule,
}

fn wrap(tasks: &[model::Task]) -> Vec<PyTask> {
    tasks.iter().cloned().map(|inner| PyTask { inner }).collect()
}

fn unwrap(tasks: Vec<PyTask>) -> Vec<model::Task> {
    tasks.into_iter().map(|t| t.inner).collect()
}

#[pymethods]
impl PySchedule {
    /// Tasks in execution order.
    #[getter]
    fn accepted(&self) -> Vec<PyTask> {
        wrap(&self.inner.accepted)
    }

    #[getter]
    fn rejected(&self) -> Vec<PyTask> {
        wrap(&self.inner.rejected)
    }

    #[getter]
    fn accepted_ids(&self) -> Vec<u32> {
        self.inner.accepted.iter().map(|t| t.id.seq).collect()
    }

    #[getter]
    fn rejected_ids(&self) -> Vec<u32> {
        self.inner.rejected.iter().map(|t| t.id.seq).collect()
    }

    #[getter]
    fn capacity(&self) -> f64 {
        self.inner.capacity
    }

    #[getter]
    fn base_time(&self) -> f64 {
        self.inner.base_time
    }

    fn completion_times(&self) -> PyResult<Vec<f64>> {
        model::completion_times(&self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.accepted.len()
    }

    fn __repr__(&self) -> String {
        format!("Schedule(accepted={:?}, rejected={:?})", self.accepted_ids(), self.rejected_ids())
    }
}

/// Maximum on-time set in deadline order (reference O(N^2) variant).
#[pyfunction]
#[pyo3(signature = (tasks, capacity, base_time=0.0))]
fn schedule_optimal(tasks: Vec<PyTask>, capacity: f64, base_time: f64) -> PyResult<PySchedule> {
    let inner = sched_core::schedule_optimal(&unwrap(tasks), capacity, base_time).map_err(err)?;
    Ok(PySchedule { inner })
}

#[pyfunction]
#[pyo3(signature = (tasks, capacity, base_time=0.0))]
fn schedule_optimal_fast(tasks: Vec<PyTask>, capacity: f64, base_time: f64) -> PyResult<PySchedule> {
    let inner = sched_core::schedule_optimal_fast(&unwrap(tasks), capacity, base_time).map_err(err)?;
    Ok(PySchedule { inner })
}

#[pyfunction]
#[pyo3(signature = (tasks, capacity, base_time=0.0))]
fn moore_hodgson(tasks: Vec<PyTask>, capacity: f64, base_time: f64) -> PyResult<PySchedule> {
    let inner = baselines::moore_hodgson(&unwrap(tasks), capacity, base_time).map_err(err)?;
    Ok(PySchedule { inner })
}

/// Schedules a batch with any scheduler by name (`optimal`, `fod`, `edf`,
/// `sdf`, `dstar_s`, `moore`, `dedas`).
#[pyfunction]
#[pyo3(signature = (scheduler, tasks, capacity, base_time=0.0))]
fn schedule(scheduler: &str, tasks: Vec<PyTask>, capacity: f64, base_time: f64) -> PyResult<PySchedule> {
    let kind: SchedulerKind = scheduler.parse().map_err(err)?;
    let inner = batch_schedule(kind, &unwrap(tasks), capacity, base_time).map_err(err)?;
    Ok(PySchedule { inner })
}

/// Whether `new_task` survives a full re-schedule of the deadline-sorted,
/// feasible `queue`. Returns `(accepted, predicted_completion)`.
#[pyfunction]
#[pyo3(signature = (queue, new_task, capacity, clock=0.0))]
fn fod_admit(queue: Vec<PyTask>, new_task: PyTask, capacity: f64, clock: f64) -> PyResult<(bool, Option<f64>)> {
    let current = model::Schedule::from_accepted(unwrap(queue), capacity, clock);
    let v = admission::fod_admit(&current, &new_task.inner, capacity, clock).map_err(err)?;
    Ok((v.accepted, v.predicted_completion))
}

/// Brute-force maximum number of on-time tasks; at most 20 tasks.
#[pyfunction]
#[pyo3(signature = (tasks, capacity, base_time=0.0))]
fn oracle_max_served(tasks: Vec<PyTask>, capacity: f64, base_time: f64) -> PyResult<usize> {
    Ok(oracle::oracle_max_served(&unwrap(tasks), capacity, base_time)
        .map_err(err)?
        .max_served)
}

/// Runs one simulation. `config` is TOML text (empty for the defaults);
/// returns the run metrics as a dict.
#[pyfunction]
#[pyo3(signature = (config="", seed=0, scheduler=None))]
fn simulate<'py>(py: Python<'py>, config: &str, seed: u64, scheduler: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = parse_config(config, false).map_err(err)?;
    if let Some(s) = scheduler {
        cfg.scheduler = s.parse().map_err(err)?;
    }
    cfg.sweep = None;
    let opts = SimOptions {
        trace: false,
        check_invariants: false,
        record_decisions: false,
    };
    let m = py.detach(|| sim::run_with(&cfg, seed, &opts)).map_err(err)?.metrics;
    let d = PyDict::new(py);
    d.set_item("scheduler", cfg.scheduler.name())?;
    d.set_item("generated", m.generated)?;
    d.set_item("served", m.served)?;
    d.set_item("outages", m.outages)?;
    d.set_item("service_ratio", m.service_ratio())?;
    d.set_item("rejected_at_admission", m.breakdown.rejected_at_admission)?;
    d.set_item("evicted_on_reschedule", m.breakdown.evicted_on_reschedule)?;
    d.set_item("missed_in_execution", m.breakdown.missed_in_execution)?;
    d.set_item("dropped_no_server", m.breakdown.dropped_no_server)?;
    d.set_item("events", m.events)?;
    Ok(d)
}

/// The default configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    edgesched::config::RunConfig::default().to_toml()
}

#[pymodule]
#[pyo3(name = "edgesched")]
fn edgesched_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTask>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(schedule_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_optimal_fast, m)?)?;
    m.add_function(wrap_pyfunction!(moore_hodgson, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(fod_admit, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_max_served, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add("SCHEDULERS", SchedulerKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>())?;
    Ok(())
}
