//! Seeded UWB ranging and IMU sample generation.
//!
//! Every call draws a fixed number of variates regardless of the ranging
//! regime, dropout outcome or configured sigmas, so two runs that make the
//! same sequence of calls with the same seed see identical noise even when
//! their vehicles follow different paths. Draw order per ranging epoch is
//! anchors in ascending ID order (uniform dropout, LOS noise, NLOS bias, NLOS
//! noise); per IMU sample it is gyro noise then speed noise.

use std::hash::{DefaultHasher, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::control::VehicleState;
use crate::geometry::Point2;
use crate::world::{line_of_sight, LotScenario};

/// Ranges are clamped above this floor, meters.
pub const MIN_RANGE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseProfile {
    pub los_sigma: f64,
    pub nlos_bias_mean: f64,
    pub nlos_bias_sigma: f64,
    pub nlos_sigma: f64,
    pub dropout_prob_los: f64,
    pub dropout_prob_nlos: f64,
    pub imu_gyro_sigma: f64,
    pub imu_speed_sigma: f64,
    pub imu_gyro_bias: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            los_sigma: 0.05,
            nlos_bias_mean: 0.8,
            nlos_bias_sigma: 0.4,
            nlos_sigma: 0.3,
            dropout_prob_los: 0.02,
            dropout_prob_nlos: 0.15,
            imu_gyro_sigma: 0.02,
            imu_speed_sigma: 0.02,
            imu_gyro_bias: 0.005,
        }
    }
}

impl NoiseProfile {
    /// Perfect sensors.
    pub fn zero() -> Self {
        Self {
            los_sigma: 0.0,
            nlos_bias_mean: 0.0,
            nlos_bias_sigma: 0.0,
            nlos_sigma: 0.0,
            dropout_prob_los: 0.0,
            dropout_prob_nlos: 0.0,
            imu_gyro_sigma: 0.0,
            imu_speed_sigma: 0.0,
            imu_gyro_bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            ("los_sigma", self.los_sigma),
            ("nlos_bias_sigma", self.nlos_bias_sigma),
            ("nlos_sigma", self.nlos_sigma),
            ("imu_gyro_sigma", self.imu_gyro_sigma),
            ("imu_speed_sigma", self.imu_speed_sigma),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("noise.{name} must be >= 0"));
            }
        }
        for (name, p) in [
            ("dropout_prob_los", self.dropout_prob_los),
            ("dropout_prob_nlos", self.dropout_prob_nlos),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("noise.{name} must be in [0, 1]"));
            }
        }
        if !(self.nlos_bias_mean >= 0.0 && self.nlos_bias_mean.is_finite()) {
            return Err("noise.nlos_bias_mean must be >= 0".into());
        }
        if !self.imu_gyro_bias.is_finite() {
            return Err("noise.imu_gyro_bias must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangingSample {
    pub anchor_id: u32,
    pub distance: f64,
    pub timestamp: f64,
    /// Ground-truth label, for evaluation only.
    pub regime: Regime,
    /// Positive range bias drawn for this sample (zero under LOS).
    pub nlos_bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub yaw_rate: f64,
    pub speed: f64,
    pub timestamp: f64,
}

/// Single-owner generator for one simulated vehicle.
#[derive(Debug, Clone)]
pub struct SensorSim {
    rng: ChaCha8Rng,
    digest: DefaultHasher,
}

impl SensorSim {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            digest: DefaultHasher::new(),
        }
    }

    fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.gen();
        self.digest.write_u64(u.to_bits());
        u
    }

    fn normal(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.digest.write_u64(z.to_bits());
        z
    }

    /// Hash of every variate drawn so far.
    pub fn stream_digest(&self) -> u64 {
        self.digest.finish()
    }

    /// One ranging epoch at `true_pos`.
    pub fn sample_ranging(&mut self, scenario: &LotScenario, true_pos: Point2, t: f64) -> Vec<RangingSample> {
        let noise = &scenario.noise;
        let in_zone = scenario.in_nlos_zone(true_pos);
        let mut anchors: Vec<_> = scenario.anchors.iter().collect();
        anchors.sort_by_key(|a| a.id);
        let mut out = Vec::with_capacity(anchors.len());
        for a in anchors {
            let u = self.uniform();
            let z_los = self.normal();
            let z_bias = self.normal();
            let z_nlos = self.normal();
            let los = !in_zone && line_of_sight(scenario, true_pos, a.position);
            let truth = true_pos.distance(a.position);
            let (regime, drop_p, bias, dist) = if los {
                (Regime::Los, noise.dropout_prob_los, 0.0, truth + noise.los_sigma * z_los)
            } else {
                let bias = (noise.nlos_bias_mean + noise.nlos_bias_sigma * z_bias).max(0.0);
                (Regime::Nlos, noise.dropout_prob_nlos, bias, truth + bias + noise.nlos_sigma * z_nlos)
            };
            if u < drop_p {
                continue;
            }
            out.push(RangingSample {
                anchor_id: a.id,
                distance: dist.max(MIN_RANGE),
                timestamp: t,
                regime,
                nlos_bias: bias,
            });
        }
        out
    }

    pub fn sample_imu(&mut self, noise: &NoiseProfile, true_state: &VehicleState, t: f64) -> ImuSample {
        let zg = self.normal();
        let zs = self.normal();
        ImuSample {
            yaw_rate: true_state.omega + noise.imu_gyro_bias + noise.imu_gyro_sigma * zg,
            speed: true_state.v + noise.imu_speed_sigma * zs,
            timestamp: t,
        }
    }
}
