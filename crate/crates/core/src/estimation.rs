//! Synthetic IMU and the roll / gyro-bias Kalman filter.
//!
//! The filter state is `[phi, b]`. The gyro rate drives the prediction
//! (`phi += dt * (rate - b)`), and the accelerometer-derived roll angle is
//! the measurement.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::dynamics::Mat2;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ImuModel {
    /// Variance of the accelerometer roll angle, rad^2.
    pub accel_noise_var: f64,
    /// Variance of the gyro rate, (rad/s)^2.
    pub gyro_noise_var: f64,
    /// Initial gyro bias, rad/s.
    pub gyro_bias_init: f64,
    /// Bias random-walk intensity, (rad/s)^2 per second.
    pub gyro_bias_walk_var: f64,
}

impl ImuModel {
    pub const IDEAL: Self = Self {
        accel_noise_var: 0.0,
        gyro_noise_var: 0.0,
        gyro_bias_init: 0.0,
        gyro_bias_walk_var: 0.0,
    };

    pub fn validate(&self) -> Result<(), Error> {
        let vars = [self.accel_noise_var, self.gyro_noise_var, self.gyro_bias_walk_var];
        if vars.iter().all(|v| v.is_finite() && *v >= 0.0) && self.gyro_bias_init.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter("IMU variances must be non-negative"))
        }
    }
}

impl Default for ImuModel {
    fn default() -> Self {
        Self {
            accel_noise_var: 0.03,
            gyro_noise_var: 1e-3,
            gyro_bias_init: 0.05,
            gyro_bias_walk_var: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    /// Roll angle derived from the accelerometer, rad.
    pub accel_roll: f64,
    /// Measured roll rate, rad/s.
    pub gyro_rate: f64,
    /// True bias at this sample, rad/s.
    pub bias: f64,
}

/// Seeded sensor simulator.
#[derive(Debug, Clone)]
pub struct Imu {
    model: ImuModel,
    rng: ChaCha8Rng,
    bias: f64,
}

impl Imu {
    pub fn new(model: ImuModel, seed: u64) -> Self {
        Self {
            model,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bias: model.gyro_bias_init,
        }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    fn gaussian(&mut self, var: f64) -> f64 {
        if var == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * libm::sqrt(var)
    }

    /// Measures the true roll angle and rate, then advances the bias walk
    /// by `dt`.
    pub fn sample(&mut self, true_phi: f64, true_phi_dot: f64, dt: f64) -> ImuSample {
        let accel_roll = true_phi + self.gaussian(self.model.accel_noise_var);
        let gyro_rate = true_phi_dot + self.bias + self.gaussian(self.model.gyro_noise_var);
        let out = ImuSample {
            accel_roll,
            gyro_rate,
            bias: self.bias,
        };
        self.bias += self.gaussian(self.model.gyro_bias_walk_var * dt);
        out
    }
}

pub fn simulate_imu(imu: &mut Imu, true_phi: f64, true_phi_dot: f64, dt: f64) -> ImuSample {
    imu.sample(true_phi, true_phi_dot, dt)
}

/// Noise model and initial covariance of the filter.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct KalmanConfig {
    /// Process noise density of the angle.
    pub q_phi: f64,
    /// Process noise density of the gyro bias.
    pub q_bias: f64,
    /// Measurement variance of the accelerometer roll.
    pub r: f64,
    /// Initial diagonal of `P`.
    pub p0: [f64; 2],
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            q_phi: 0.001,
            q_bias: 0.003,
            r: 0.03,
            p0: [1.0, 1.0],
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let all = [self.q_phi, self.q_bias, self.r, self.p0[0], self.p0[1]];
        if all.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("Kalman noise terms must be non-negative"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter {
    /// `[roll, gyro bias]` estimate.
    pub x_hat: [f64; 2],
    pub p: Mat2,
    pub q_phi: f64,
    pub q_bias: f64,
    pub r: f64,
    pub dt: f64,
    /// Gain of the most recent update.
    pub gain: [f64; 2],
}

impl KalmanFilter {
    pub fn new(cfg: &KalmanConfig, dt: f64, phi0: f64) -> Self {
        Self {
            x_hat: [phi0, 0.0],
            p: [[cfg.p0[0], 0.0], [0.0, cfg.p0[1]]],
            q_phi: cfg.q_phi,
            q_bias: cfg.q_bias,
            r: cfg.r,
            dt,
            gain: [0.0; 2],
        }
    }

    pub fn phi(&self) -> f64 {
        self.x_hat[0]
    }

    pub fn bias(&self) -> f64 {
        self.x_hat[1]
    }

    /// `x <- F x + B rate`, `P <- F P F' + Q dt` with `F = [[1, -dt], [0, 1]]`,
    /// `B = [dt, 0]'`.
    pub fn predict(&mut self, gyro_rate: f64) {
        let dt = self.dt;
        let [phi, b] = self.x_hat;
        self.x_hat = [phi - dt * b + dt * gyro_rate, b];

        let p = self.p;
        // F P
        let fp = [
            [p[0][0] - dt * p[1][0], p[0][1] - dt * p[1][1]],
            [p[1][0], p[1][1]],
        ];
        // (F P) F'
        let mut next = [
            [fp[0][0] - dt * fp[0][1], fp[0][1]],
            [fp[1][0] - dt * fp[1][1], fp[1][1]],
        ];
        next[0][0] += self.q_phi * dt;
        next[1][1] += self.q_bias * dt;
        self.p = next;
    }

    /// Fuses an accelerometer roll measurement with `H = [1, 0]`.
    pub fn update(&mut self, z: f64) -> Result<(), Error> {
        let p = self.p;
        let innovation = z - self.x_hat[0];
        let s = p[0][0] + self.r;
        if !(s > 0.0) {
            return Err(Error::FilterDegenerate { s });
        }
        let k = [p[0][0] / s, p[1][0] / s];
        self.x_hat[0] += k[0] * innovation;
        self.x_hat[1] += k[1] * innovation;
        // (I - K H) P
        let mut next = [
            [(1.0 - k[0]) * p[0][0], (1.0 - k[0]) * p[0][1]],
            [p[1][0] - k[1] * p[0][0], p[1][1] - k[1] * p[0][1]],
        ];
        // the product form drifts from symmetry by rounding only
        let off = 0.5 * (next[0][1] + next[1][0]);
        next[0][1] = off;
        next[1][0] = off;
        self.p = next;
        self.gain = k;
        Ok(())
    }
}

pub fn kf_predict(kf: &mut KalmanFilter, gyro_rate: f64) {
    kf.predict(gyro_rate)
}

pub fn kf_update(kf: &mut KalmanFilter, z: f64) -> Result<(), Error> {
    kf.update(z)
}
