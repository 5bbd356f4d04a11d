//! Discrete PID for the inner steering loop.
//!
//! The derivative acts on the measurement, so a step in the steering
//! reference never produces a derivative kick. The integral is clamped for
//! anti-windup.

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Torque saturation, N m. Zero disables it.
    pub output_limit: f64,
    /// Clamp on the accumulated error, rad s. `None` derives it from
    /// `output_limit / ki` when both are set.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub integral_limit: Option<f64>,
    /// Sample period, s.
    pub period: f64,
}

impl PidConfig {
    /// Gains of the simulated steering servo, unsaturated.
    pub const SIMULATION: Self = Self {
        kp: 300.0,
        ki: 100.0,
        kd: 200.0,
        output_limit: 0.0,
        integral_limit: None,
        period: 2.5e-4,
    };
    /// First gain set reported for the motor position loop on the rig.
    pub const RIG_INITIAL: Self = Self {
        kp: 40.0,
        ki: 0.001,
        kd: 1.0,
        output_limit: 2.5,
        integral_limit: None,
        period: 2.5e-4,
    };
    /// Gain set used for the closed-loop rig experiments.
    pub const RIG_TUNED: Self = Self {
        kp: 40.0,
        ki: 1.0,
        kd: 0.01,
        output_limit: 2.5,
        integral_limit: None,
        period: 2.5e-4,
    };

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "simulation" => Some(Self::SIMULATION),
            "rig-initial" => Some(Self::RIG_INITIAL),
            "rig-tuned" => Some(Self::RIG_TUNED),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let gains = [self.kp, self.ki, self.kd];
        if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidParameter("PID gains must be non-negative"));
        }
        if !(self.period > 0.0) {
            return Err(Error::InvalidParameter("PID period must be positive"));
        }
        if !(self.output_limit >= 0.0) {
            return Err(Error::InvalidParameter("PID output limit must be non-negative"));
        }
        if matches!(self.integral_limit, Some(l) if !(l >= 0.0)) {
            return Err(Error::InvalidParameter("PID integral limit must be non-negative"));
        }
        Ok(())
    }

    /// Active integral clamp, if any.
    pub fn effective_integral_limit(&self) -> Option<f64> {
        match self.integral_limit {
            Some(l) => Some(l),
            None if self.output_limit > 0.0 && self.ki > 0.0 => Some(self.output_limit / self.ki),
            None => None,
        }
    }
}

impl Default for PidConfig {
    fn default() -> Self {
        Self::SIMULATION
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub integral: f64,
    pub prev_measurement: f64,
}

impl PidState {
    /// Fresh state for a loop whose measurement currently reads `measurement`.
    pub fn new(measurement: f64) -> Self {
        Self {
            integral: 0.0,
            prev_measurement: measurement,
        }
    }
}

/// One controller sample. Returns the torque and the advanced state.
pub fn pid_step(cfg: &PidConfig, st: &PidState, setpoint: f64, measurement: f64) -> (f64, PidState) {
    let error = setpoint - measurement;
    let mut integral = st.integral;
    if cfg.ki != 0.0 {
        integral += error * cfg.period;
        if let Some(limit) = cfg.effective_integral_limit() {
            integral = integral.clamp(-limit, limit);
        }
    }
    let derivative = -(measurement - st.prev_measurement) / cfg.period;
    let mut torque = cfg.kp * error + cfg.ki * integral + cfg.kd * derivative;
    if cfg.output_limit > 0.0 {
        torque = torque.clamp(-cfg.output_limit, cfg.output_limit);
    }
    (
        torque,
        PidState {
            integral,
            prev_measurement: measurement,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_error_zero_torque() {
        let cfg = PidConfig::SIMULATION;
        let mut st = PidState::new(0.2);
        for _ in 0..100 {
            let (tau, next) = pid_step(&cfg, &st, 0.2, 0.2);
            assert_eq!(tau, 0.0);
            st = next;
        }
        assert_eq!(st.integral, 0.0);
    }

    #[test]
    fn proportional_first_step() {
        let cfg = PidConfig {
            ki: 0.0,
            ..PidConfig::SIMULATION
        };
        let (tau, _) = pid_step(&cfg, &PidState::new(0.0), 0.01, 0.0);
        assert_abs_diff_eq!(tau, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn no_derivative_kick_on_setpoint_step() {
        let cfg = PidConfig {
            ki: 0.0,
            ..PidConfig::SIMULATION
        };
        let st = PidState::new(0.0);
        let (before, st) = pid_step(&cfg, &st, 0.0, 0.0);
        let (after, _) = pid_step(&cfg, &st, 0.5, 0.0);
        assert!((after - before).abs() <= cfg.kp * 0.5 + 1e-12);
    }

    #[test]
    fn output_limit_and_anti_windup() {
        let cfg = PidConfig {
            output_limit: 2.5,
            ..PidConfig::SIMULATION
        };
        assert_eq!(cfg.effective_integral_limit(), Some(0.025));
        let mut st = PidState::new(0.0);
        for _ in 0..100_000 {
            let (tau, next) = pid_step(&cfg, &st, 1.0, 0.0);
            assert!(tau.abs() <= 2.5);
            st = next;
        }
        assert!(st.integral.abs() <= 0.025);
    }

    #[test]
    fn ki_zero_keeps_integral() {
        let cfg = PidConfig {
            ki: 0.0,
            ..PidConfig::SIMULATION
        };
        let mut st = PidState {
            integral: 0.123,
            prev_measurement: 0.0,
        };
        for k in 0..50 {
            st = pid_step(&cfg, &st, 1.0, k as f64 * 0.01).1;
            assert_eq!(st.integral, 0.123);
        }
    }

    #[test]
    fn integrator_plant_reaches_setpoint() {
        // x' = tau, PID sampled at its period with zero-order hold
        let cfg = PidConfig {
            kp: 4.0,
            ki: 4.0,
            kd: 0.0,
            period: 1e-3,
            ..PidConfig::SIMULATION
        };
        let mut x = 0.0;
        let mut st = PidState::new(x);
        for _ in 0..10_000 {
            let (tau, next) = pid_step(&cfg, &st, 0.3, x);
            st = next;
            x += tau * cfg.period;
        }
        assert!((0.3 - x).abs() < 1e-4, "{x}");
    }

    #[test]
    fn presets() {
        assert_eq!(PidConfig::preset("simulation").unwrap().kp, 300.0);
        assert_eq!(PidConfig::preset("rig-initial").unwrap().ki, 0.001);
        assert_eq!(PidConfig::preset("rig-tuned").unwrap().kd, 0.01);
        assert!(PidConfig::preset("nope").is_none());
    }

    #[test]
    fn rejects_negative_gain() {
        assert!(PidConfig {
            kd: -1.0,
            ..PidConfig::SIMULATION
        }
        .validate()
        .is_err());
    }
}
