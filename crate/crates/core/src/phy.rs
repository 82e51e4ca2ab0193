//! Uplink channel, FDMA rate, transmission delay and user mobility.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// dBm/Hz to W/Hz.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    /// W, Hz.
    pub total_bandwidth: f64,
    /// E.
    pub num_servers: usize,
    /// N.
    pub channels_per_server: usize,
    /// P_k, W.
    pub tx_power: f64,
    /// N_0, W/Hz.
    pub noise_psd: f64,
    pub pathloss_exponent: f64,
}

impl RadioConfig {
    /// W / (N E).
    pub fn channel_bandwidth(&self) -> f64 {
        self.total_bandwidth / (self.channels_per_server * self.num_servers) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidRadio {
                    field,
                    reason: format!("{v} must be finite and > 0"),
                })
            }
        };
        positive("total_bandwidth", self.total_bandwidth)?;
        positive("tx_power", self.tx_power)?;
        positive("noise_psd", self.noise_psd)?;
        if self.num_servers == 0 || self.channels_per_server == 0 {
            return Err(Error::InvalidRadio {
                field: "channels",
                reason: "server and channel counts must be > 0".into(),
            });
        }
        if !(2.0..=4.0).contains(&self.pathloss_exponent) {
            return Err(Error::InvalidRadio {
                field: "pathloss_exponent",
                reason: format!("{} outside [2, 4]", self.pathloss_exponent),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelDraw {
    /// Small-scale fading, CN(0, 1).
    pub fading: Complex64,
    /// Meters.
    pub distance: f64,
}

/// One CN(0, 1) sample: independent real and imaginary parts of variance 1/2.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `h = g / d^(p/2)`.
pub fn channel_gain(draw: ChannelDraw, pathloss_exponent: f64) -> Result<Complex64> {
    if !(draw.distance > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    Ok(draw.fading / draw.distance.powf(pathloss_exponent / 2.0))
}

/// Shannon rate of one FDMA channel, bits/s.
pub fn achievable_rate(gain: Complex64, config: &RadioConfig) -> Result<f64> {
    config.validate()?;
    let wc = config.channel_bandwidth();
    let snr = gain.norm_sqr() * config.tx_power / (wc * config.noise_psd);
    Ok(wc * (1.0 + snr).log2())
}

pub fn transmission_delay(data_size: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::UnreachableServer);
    }
    Ok(data_size / rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0.0..=self.width).contains(&p[0]) && (0.0..=self.height).contains(&p[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserMotionState {
    pub position: [f64; 2],
    /// Radians.
    pub heading: f64,
    /// m/s.
    pub speed: f64,
    /// Chance of drawing a fresh heading at each step.
    pub turn_probability: f64,
}

impl UserMotionState {
    /// Users start heading along +x.
    pub fn new(position: [f64; 2], speed: f64, turn_probability: f64) -> Self {
        Self {
            position,
            heading: 0.0,
            speed,
            turn_probability,
        }
    }
}

/// Folds `x` back into `[0, len]`, mirroring at the walls. The flag is set
/// when the folded motion runs opposite to the unfolded one.
fn reflect(x: f64, len: f64) -> (f64, bool) {
    if len <= 0.0 {
        return (0.0, false);
    }
    let period = 2.0 * len;
    let m = x.rem_euclid(period);
    if m <= len {
        (m, false)
    } else {
        (period - m, true)
    }
}

/// Advances one mobility interval. With probability `turn_probability` the
/// heading is redrawn uniformly from [0, 2π); the user then moves
/// `dt * speed` meters and is reflected at the area boundary.
pub fn mobility_step<R: Rng + ?Sized>(
    state: UserMotionState,
    dt: f64,
    area: Area,
    rng: &mut R,
) -> UserMotionState {
    let mut heading = state.heading;
    if rng.random::<f64>() < state.turn_probability {
        heading = rng.random_range(0.0..TAU);
    }
    let step = dt * state.speed;
    let raw = [
        state.position[0] + step * heading.cos(),
        state.position[1] + step * heading.sin(),
    ];
    let (x, flip_x) = reflect(raw[0], area.width);
    let (y, flip_y) = reflect(raw[1], area.height);
    // Mirror the heading on every wall bounce so the user keeps moving inward.
    let (mut dx, mut dy) = (heading.cos(), heading.sin());
    if flip_x {
        dx = -dx;
    }
    if flip_y {
        dy = -dy;
    }
    if flip_x || flip_y {
        heading = dy.atan2(dx).rem_euclid(TAU);
    }
    UserMotionState {
        position: [x, y],
        heading,
        ..state
    }
}
