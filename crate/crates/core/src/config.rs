//! Run configuration, defaults and synthetic workload generators.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::baselines::{SchedulerKind, SizeKey};
use crate::error::{Error, Result};
use crate::model::{Task, TaskId};
use crate::phy::{dbm_to_watts, Area, RadioConfig};

pub const KIB_BITS: f64 = 1024.0 * 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioSection {
    pub total_bandwidth_hz: f64,
    pub channels_per_server: usize,
    pub tx_power_w: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub pathloss_exponent: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            total_bandwidth_hz: 20e6,
            channels_per_server: 10,
            tx_power_w: 0.1,
            noise_psd_dbm_per_hz: -174.0,
            pathloss_exponent: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Users,
    Capacity,
    Nearest,
    ArrivalRate,
}

impl SweepParameter {
    pub fn label(&self) -> &'static str {
        match self {
            SweepParameter::Users => "users",
            SweepParameter::Capacity => "capacity_ghz",
            SweepParameter::Nearest => "nearest_servers",
            SweepParameter::ArrivalRate => "arrival_rate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    /// Users and nearest-server counts as plain numbers; capacity in GHz.
    pub values: Vec<f64>,
    #[serde(default = "SchedulerKind::all")]
    pub schedulers: Vec<SchedulerKind>,
    #[serde(default = "one")]
    pub replications: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub area_m: [f64; 2],
    pub num_servers: usize,
    pub num_users: usize,
    /// Tasks per user per second.
    pub arrival_rate: f64,
    pub mean_cycles: f64,
    /// Server capacities are drawn uniformly from this range, cycles/s.
    pub capacity_hz: [f64; 2],
    pub data_size_bits: [f64; 2],
    /// L, the candidate servers a user queries.
    pub nearest_servers: usize,
    /// Relative deadline range, seconds.
    pub deadline_s: [f64; 2],
    pub horizon_s: f64,
    /// Δ: mobility step and fading slot length.
    pub mobility_interval_s: f64,
    pub user_speed_mps: f64,
    pub turn_probability: f64,
    pub coverage_radius_m: f64,
    pub min_servers_in_coverage: usize,
    pub scheduler: SchedulerKind,
    /// Offload to the best-looking server even when every candidate rejects.
    pub force_offload: bool,
    pub size_key: SizeKey,
    pub seed: u64,
    pub radio: RadioSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            area_m: [5000.0, 5000.0],
            num_servers: 20,
            num_users: 50,
            arrival_rate: 3.0,
            mean_cycles: 200e6,
            capacity_hz: [10e9, 20e9],
            data_size_bits: [10.0 * KIB_BITS, 5000.0 * KIB_BITS],
            nearest_servers: 4,
            deadline_s: [0.5, 5.0],
            horizon_s: 100.0,
            mobility_interval_s: 0.1,
            user_speed_mps: 10.0,
            turn_probability: 0.2,
            coverage_radius_m: 1000.0,
            min_servers_in_coverage: 2,
            scheduler: SchedulerKind::Fod,
            force_offload: false,
            size_key: SizeKey::Cycles,
            seed: 0,
            radio: RadioSection::default(),
            sweep: None,
        }
    }
}

fn range_ok(field: &str, r: [f64; 2], allow_zero: bool) -> Result<()> {
    let lo_ok = if allow_zero { r[0] >= 0.0 } else { r[0] > 0.0 };
    if lo_ok && r[0] <= r[1] && r[1].is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("invalid range [{}, {}]", r[0], r[1])))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(field, format!("{v} must be finite and > 0")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        positive("area_m", self.area_m[0])?;
        positive("area_m", self.area_m[1])?;
        if self.num_servers == 0 {
            return Err(Error::config("num_servers", "must be > 0"));
        }
        positive("arrival_rate", self.arrival_rate)?;
        positive("mean_cycles", self.mean_cycles)?;
        range_ok("capacity_hz", self.capacity_hz, false)?;
        range_ok("data_size_bits", self.data_size_bits, true)?;
        range_ok("deadline_s", self.deadline_s, false)?;
        if self.nearest_servers == 0 || self.nearest_servers > self.num_servers {
            return Err(Error::config("nearest_servers", "must be in 1..=num_servers"));
        }
        positive("horizon_s", self.horizon_s)?;
        positive("mobility_interval_s", self.mobility_interval_s)?;
        if !(self.user_speed_mps >= 0.0) {
            return Err(Error::config("user_speed_mps", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return Err(Error::config("turn_probability", "must be in [0, 1]"));
        }
        positive("coverage_radius_m", self.coverage_radius_m)?;
        if self.min_servers_in_coverage > self.num_servers {
            return Err(Error::config("min_servers_in_coverage", "exceeds num_servers"));
        }
        self.radio_config().validate().map_err(|e| match e {
            Error::InvalidRadio { field, reason } => Error::config(format!("radio.{field}"), reason),
            other => other,
        })?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep.values", "must not be empty"));
            }
            if sweep.schedulers.is_empty() {
                return Err(Error::config("sweep.schedulers", "must not be empty"));
            }
            if sweep.replications == 0 {
                return Err(Error::config("sweep.replications", "must be > 0"));
            }
            for &v in &sweep.values {
                let mut probe = self.clone();
                probe.sweep = None;
                probe.apply_sweep(sweep.parameter, v);
                probe.validate().map_err(|e| Error::config("sweep.values", format!("{v}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn radio_config(&self) -> RadioConfig {
        RadioConfig {
            total_bandwidth: self.radio.total_bandwidth_hz,
            num_servers: self.num_servers,
            channels_per_server: self.radio.channels_per_server,
            tx_power: self.radio.tx_power_w,
            noise_psd: dbm_to_watts(self.radio.noise_psd_dbm_per_hz),
            pathloss_exponent: self.radio.pathloss_exponent,
        }
    }

    pub fn area(&self) -> Area {
        Area {
            width: self.area_m[0],
            height: self.area_m[1],
        }
    }

    pub fn batch_params(&self) -> BatchParams {
        BatchParams {
            mean_cycles: self.mean_cycles,
            deadline_s: self.deadline_s,
            data_size_bits: self.data_size_bits,
        }
    }

    /// Sets one swept parameter; capacity is given in GHz and pins every
    /// server to that value.
    pub fn apply_sweep(&mut self, parameter: SweepParameter, value: f64) {
        match parameter {
            SweepParameter::Users => self.num_users = value.round() as usize,
            SweepParameter::Capacity => self.capacity_hz = [value * 1e9; 2],
            SweepParameter::Nearest => self.nearest_servers = value.round() as usize,
            SweepParameter::ArrivalRate => self.arrival_rate = value,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

pub fn parse_config(text: &str, json: bool) -> Result<RunConfig> {
    let cfg: RunConfig = if json {
        if text.trim().is_empty() {
            RunConfig::default()
        } else {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        }
    } else {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Reads TOML, or JSON when the extension is `.json`.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    parse_config(&text, json)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchParams {
    pub mean_cycles: f64,
    pub deadline_s: [f64; 2],
    pub data_size_bits: [f64; 2],
}

impl Default for BatchParams {
    fn default() -> Self {
        RunConfig::default().batch_params()
    }
}

/// Draws task attributes: exponential work, uniform payload and uniform
/// relative deadline.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    cycles: Exp<f64>,
    deadline: Uniform<f64>,
    size: Uniform<f64>,
}

impl TaskSampler {
    pub fn new(params: &BatchParams) -> Self {
        Self {
            cycles: Exp::new(1.0 / params.mean_cycles).expect("positive mean"),
            deadline: Uniform::new_inclusive(params.deadline_s[0], params.deadline_s[1])
                .expect("valid deadline range"),
            size: Uniform::new_inclusive(params.data_size_bits[0], params.data_size_bits[1])
                .expect("valid size range"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, id: TaskId, arrival: f64) -> Task {
        let cycles = self.cycles.sample(rng).round().max(1.0) as u64;
        let rel = self.deadline.sample(rng);
        let bits = self.size.sample(rng).round();
        Task {
            id,
            arrival_time: arrival,
            cpu_cycles: cycles,
            deadline: arrival + rel,
            data_size: bits,
            origin_user: id.user,
        }
    }
}

/// `n` tasks that all arrive at time 0, deterministic per seed.
pub fn gen_batch_instance(n: usize, seed: u64, params: &BatchParams) -> Vec<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = TaskSampler::new(params);
    (0..n)
        .map(|i| sampler.sample(&mut rng, TaskId::new(0, i as u32 + 1), 0.0))
        .collect()
}
