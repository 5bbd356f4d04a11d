//! Closed-loop scenarios, run traces and the metrics extracted from them.
//!
//! Each control period the roll angle is read (directly or through the
//! Kalman filter), the fuzzy controller maps the roll error and its
//! per-sample difference to a steering reference, the critic scores the
//! error and, when adapting, the consequents are updated. The steering PID
//! and the RK4 integrator then run at the physics step until the next
//! control sample.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::critic::{cost, critic_signal, update_consequents, CriticConfig, LearnConfig};
use crate::dynamics::{BicycleParams, BicycleState, GeneralizedForce, ParamScales};
use crate::estimation::{Imu, ImuModel, KalmanConfig, KalmanFilter};
use crate::fuzzy::{TskRuleBase, RULES};
use crate::pid::{pid_step, PidConfig, PidState};
use crate::{deg, to_deg, Error};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields))]
pub enum Reference {
    Constant { value: f64 },
    /// `amplitude * sin(omega * t)`
    Sine { amplitude: f64, omega: f64 },
}

impl Reference {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Reference::Constant { value } => value,
            Reference::Sine { amplitude, omega } => amplitude * libm::sin(omega * t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields))]
pub enum Sensing {
    /// The controller reads the true roll angle.
    Ideal,
    /// Roll is estimated by the Kalman filter from a simulated IMU.
    Imu { model: ImuModel },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    Adaptive(LearnConfig),
    /// Same rule base, never updated.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Forward speed, m/s.
    pub speed: f64,
    /// Initial roll angle, rad.
    pub phi0: f64,
    pub reference: Reference,
    pub duration: f64,
    pub physics_dt: f64,
    pub control_dt: f64,
    pub param_scales: ParamScales,
    pub sensing: Sensing,
    pub controller: Controller,
    pub seed: u64,
    /// Keep a copy of the 27 consequent coefficients every control step.
    pub record_coefficients: bool,
}

/// Names accepted by [`Scenario::preset`].
pub const PRESETS: [&str; 4] = ["case1", "case2", "case3a", "case3b"];

impl Scenario {
    fn base(name: &str, speed: f64, phi0: f64, reference: Reference, duration: f64) -> Self {
        Self {
            name: name.into(),
            speed,
            phi0,
            reference,
            duration,
            physics_dt: 2.5e-4,
            control_dt: 0.01,
            param_scales: ParamScales::default(),
            sensing: Sensing::Ideal,
            controller: Controller::Adaptive(LearnConfig::SIMULATION),
            seed: 0,
            record_coefficients: false,
        }
    }

    fn sine() -> Reference {
        Reference::Sine {
            amplitude: deg(5.0),
            omega: core::f64::consts::PI / 3.0,
        }
    }

    /// Recovery from a -15 degree lean at 10 km/h.
    pub fn case1() -> Self {
        Self::base("case1", 2.78, deg(-15.0), Reference::Constant { value: 0.0 }, 10.0)
    }

    /// 5 degree, pi/3 rad/s sinusoidal roll tracking at 10 km/h.
    pub fn case2() -> Self {
        Self::base("case2", 2.78, 0.0, Self::sine(), 20.0)
    }

    /// Case 1 recovery on a 20 % heavier bicycle at 5 km/h.
    pub fn case3a() -> Self {
        Self {
            param_scales: ParamScales::heavier(1.2),
            ..Self::base("case3a", 1.39, deg(-15.0), Reference::Constant { value: 0.0 }, 10.0)
        }
    }

    /// Case 2 tracking on a 20 % heavier bicycle at 5 km/h.
    pub fn case3b() -> Self {
        Self {
            param_scales: ParamScales::heavier(1.2),
            ..Self::base("case3b", 1.39, 0.0, Self::sine(), 20.0)
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "case1" => Some(Self::case1()),
            "case2" => Some(Self::case2()),
            "case3a" => Some(Self::case3a()),
            "case3b" => Some(Self::case3b()),
            _ => None,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.controller = Controller::Frozen;
        self
    }

    pub fn adaptive(mut self, lc: LearnConfig) -> Self {
        self.controller = Controller::Adaptive(lc);
        self
    }

    pub fn with_sensing(mut self, sensing: Sensing) -> Self {
        self.sensing = sensing;
        self
    }

    /// Physics substeps per control period.
    pub fn substeps(&self) -> usize {
        libm::round(self.control_dt / self.physics_dt) as usize
    }

    pub fn control_steps(&self) -> usize {
        libm::round(self.duration / self.control_dt) as usize
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter("duration must be positive"));
        }
        if !(self.physics_dt > 0.0) {
            return Err(Error::InvalidParameter("physics step must be positive"));
        }
        if !(self.control_dt >= self.physics_dt) {
            return Err(Error::InvalidParameter("control period must not be shorter than the physics step"));
        }
        let ratio = self.control_dt / self.physics_dt;
        if (ratio - libm::round(ratio)).abs() > 1e-9 * ratio {
            return Err(Error::InvalidParameter("control period must be a multiple of the physics step"));
        }
        if !(self.speed >= 0.0 && self.phi0.is_finite()) {
            return Err(Error::InvalidParameter("speed and initial roll"));
        }
        match self.sensing {
            Sensing::Ideal => {}
            Sensing::Imu { model } => model.validate()?,
        }
        if let Controller::Adaptive(lc) = self.controller {
            lc.validate()?;
        }
        Ok(())
    }
}

/// Everything about the controlled bicycle that is shared across scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    /// Base parameters; speed comes from the scenario.
    pub bicycle: BicycleParams,
    /// Initial rule base.
    pub rule_base: TskRuleBase,
    pub critic: CriticConfig,
    /// Inner loop gains. The PID is sampled every physics step.
    pub pid: PidConfig,
    pub kalman: KalmanConfig,
    /// Maps the controller output to the steering reference
    /// (`delta_ref = steer_sign * u`). The learning rule assumes roll grows
    /// with `u`; for this bicycle that requires steering into the lean,
    /// hence `-1`.
    pub steer_sign: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            bicycle: BicycleParams::experimental(0.0),
            rule_base: TskRuleBase::pd_seeded(DEFAULT_SEED_KP, DEFAULT_SEED_KD),
            critic: CriticConfig::SIMULATION,
            pid: PidConfig::SIMULATION,
            kalman: KalmanConfig::default(),
            steer_sign: -1.0,
        }
    }
}

/// Default proportional consequent of every rule.
pub const DEFAULT_SEED_KP: f64 = 25.0;
/// Default error-difference consequent of every rule.
pub const DEFAULT_SEED_KD: f64 = 200.0;

impl LoopConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.bicycle.validate()?;
        self.rule_base.validate()?;
        self.critic.validate()?;
        self.pid.validate()?;
        self.kalman.validate()?;
        if self.steer_sign != 1.0 && self.steer_sign != -1.0 {
            return Err(Error::InvalidParameter("steer_sign must be +1 or -1"));
        }
        Ok(())
    }
}

/// One control-period sample. Angles in rad, torque in N m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TraceRecord {
    pub t: f64,
    pub phi_ref: f64,
    pub phi_true: f64,
    pub phi_est: f64,
    pub delta: f64,
    pub delta_ref: f64,
    pub torque: f64,
    pub r: f64,
    #[cfg_attr(feature = "serde", serde(rename = "E"))]
    pub cost: f64,
    pub psi: f64,
    pub x: f64,
    pub y: f64,
    pub accel_roll: f64,
    pub gyro_rate: f64,
    pub bias_est: f64,
}

/// Column names in CSV order.
pub const TRACE_COLUMNS: [&str; 15] = [
    "t",
    "phi_ref",
    "phi_true",
    "phi_est",
    "delta",
    "delta_ref",
    "torque",
    "r",
    "E",
    "psi",
    "x",
    "y",
    "accel_roll",
    "gyro_rate",
    "bias_est",
];

impl TraceRecord {
    pub fn to_array(&self) -> [f64; 15] {
        [
            self.t,
            self.phi_ref,
            self.phi_true,
            self.phi_est,
            self.delta,
            self.delta_ref,
            self.torque,
            self.r,
            self.cost,
            self.psi,
            self.x,
            self.y,
            self.accel_roll,
            self.gyro_rate,
            self.bias_est,
        ]
    }

    pub fn from_array(a: [f64; 15]) -> Self {
        Self {
            t: a[0],
            phi_ref: a[1],
            phi_true: a[2],
            phi_est: a[3],
            delta: a[4],
            delta_ref: a[5],
            torque: a[6],
            r: a[7],
            cost: a[8],
            psi: a[9],
            x: a[10],
            y: a[11],
            accel_roll: a[12],
            gyro_rate: a[13],
            bias_est: a[14],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub control_dt: f64,
    pub records: Vec<TraceRecord>,
    /// Consequents after each control step, when requested.
    pub coefficients: Option<Vec<[f64; 3 * RULES]>>,
}

impl RunTrace {
    pub fn new(control_dt: f64) -> Self {
        Self {
            control_dt,
            records: Vec::new(),
            coefficients: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Roll tracking RMSE in degrees over samples with `t0 <= t < t1`.
    pub fn rmse_between(&self, t0: f64, t1: f64) -> Option<f64> {
        let (sum, n) = self
            .records
            .iter()
            .filter(|r| r.t >= t0 - 1e-9 && r.t < t1 - 1e-9)
            .fold((0.0, 0usize), |(s, n), r| {
                let e = to_deg(r.phi_true - r.phi_ref);
                (s + e * e, n + 1)
            });
        (n > 0).then(|| libm::sqrt(sum / n as f64))
    }
}

/// A run that stopped early; carries everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub trace: RunTrace,
    pub error: Error,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} after {} control steps", self.error, self.trace.len())
    }
}

impl core::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        Some(&self.error)
    }
}

enum Estimator {
    Ideal,
    Filtered { imu: Imu, kf: Option<KalmanFilter> },
}

struct Reading {
    phi: f64,
    accel_roll: f64,
    gyro_rate: f64,
    bias_est: f64,
}

impl Estimator {
    fn read(&mut self, s: &BicycleState, cfg: &KalmanConfig, dt: f64) -> Result<Reading, Error> {
        match self {
            Estimator::Ideal => Ok(Reading {
                phi: s.phi,
                accel_roll: s.phi,
                gyro_rate: s.phi_dot,
                bias_est: 0.0,
            }),
            Estimator::Filtered { imu, kf } => {
                let sample = imu.sample(s.phi, s.phi_dot, dt);
                let kf = match kf {
                    Some(kf) => {
                        kf.predict(sample.gyro_rate);
                        kf.update(sample.accel_roll)?;
                        kf
                    }
                    None => kf.insert(KalmanFilter::new(cfg, dt, sample.accel_roll)),
                };
                Ok(Reading {
                    phi: kf.phi(),
                    accel_roll: sample.accel_roll,
                    gyro_rate: sample.gyro_rate,
                    bias_est: kf.bias(),
                })
            }
        }
    }
}

/// Runs `scenario` in closed loop. Deterministic for a given scenario
/// (including its seed) and configuration.
pub fn run(scenario: &Scenario, config: &LoopConfig) -> Result<RunTrace, RunFailure> {
    let mut trace = RunTrace::new(scenario.control_dt);
    let fail = |trace: RunTrace, error| Err(RunFailure { trace, error });

    if let Err(e) = scenario.validate().and_then(|_| config.validate()) {
        return fail(trace, e);
    }
    let params = config
        .bicycle
        .with_speed(scenario.speed)
        .scaled(&scenario.param_scales);
    let model = match params.validate().and_then(|_| params.model()) {
        Ok(m) => m,
        Err(e) => return fail(trace, e),
    };

    let mut rule_base = config.rule_base.clone();
    let pid = PidConfig {
        period: scenario.physics_dt,
        ..config.pid
    };
    let substeps = scenario.substeps();
    let steps = scenario.control_steps();
    let mut estimator = match scenario.sensing {
        Sensing::Ideal => Estimator::Ideal,
        Sensing::Imu { model } => Estimator::Filtered {
            imu: Imu::new(model, scenario.seed),
            kf: None,
        },
    };

    let mut state = BicycleState::leaning(scenario.phi0);
    let mut pid_state = PidState::new(state.delta);
    let mut prev_error: Option<f64> = None;
    trace.records.reserve(steps);
    if scenario.record_coefficients {
        trace.coefficients = Some(Vec::with_capacity(steps));
    }

    for k in 0..steps {
        let t = k as f64 * scenario.control_dt;
        let reading = match estimator.read(&state, &config.kalman, scenario.control_dt) {
            Ok(r) => r,
            Err(e) => return fail(trace, e),
        };
        let phi_ref = scenario.reference.at(t);
        let e = phi_ref - reading.phi;
        let de = e - prev_error.unwrap_or(e);
        prev_error = Some(e);

        let inference = match rule_base.infer(e, de) {
            Ok(i) => i,
            Err(err) => return fail(trace, err),
        };
        let delta_ref = config.steer_sign * inference.u;
        let r = critic_signal(e, de, &config.critic);
        if let Controller::Adaptive(lc) = &scenario.controller {
            if let Err(err) = update_consequents(&mut rule_base, r, e, de, &inference.weights, lc, k as u64) {
                return fail(trace, err);
            }
        }
        if let Some(c) = trace.coefficients.as_mut() {
            c.push(rule_base.coefficients());
        }

        let mut record = TraceRecord {
            t,
            phi_ref,
            phi_true: state.phi,
            phi_est: reading.phi,
            delta: state.delta,
            delta_ref,
            torque: 0.0,
            r,
            cost: cost(r),
            psi: state.psi,
            x: state.x,
            y: state.y,
            accel_roll: reading.accel_roll,
            gyro_rate: reading.gyro_rate,
            bias_est: reading.bias_est,
        };

        for s in 0..substeps {
            let (torque, next_pid) = pid_step(&pid, &pid_state, delta_ref, state.delta);
            pid_state = next_pid;
            if s == 0 {
                record.torque = torque;
            }
            let ts = t + s as f64 * scenario.physics_dt;
            match model.step_rk4(&state, &GeneralizedForce::steer(torque), ts, scenario.physics_dt) {
                Ok(next) => state = next,
                Err(err) => {
                    trace.records.push(record);
                    return fail(trace, err);
                }
            }
        }
        trace.records.push(record);
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RunMetrics {
    /// Largest excursion past the reference on the far side of the initial
    /// error, deg. With no initial error, the largest absolute error.
    pub overshoot: f64,
    /// First time after which the roll error stays inside the band, s.
    /// `None` if the run ends outside the band.
    pub settling_time: Option<f64>,
    /// Roll tracking RMSE over the whole run, deg.
    pub tracking_rmse: f64,
    /// Integral of the squared steering torque, N^2 m^2 s.
    pub control_effort: f64,
    pub max_torque: f64,
    pub converged: bool,
}

/// Extracts metrics from a trace; `band` is the settling tolerance in deg.
/// Returns `None` for an empty trace.
pub fn metrics(trace: &RunTrace, band: f64) -> Option<RunMetrics> {
    let first = trace.records.first()?;
    let err_deg = |r: &TraceRecord| to_deg(r.phi_true - r.phi_ref);
    let initial = err_deg(first);

    let overshoot = trace
        .records
        .iter()
        .map(|r| {
            let e = err_deg(r);
            if initial < 0.0 {
                e
            } else if initial > 0.0 {
                -e
            } else {
                e.abs()
            }
        })
        .fold(0.0f64, f64::max);

    let last_outside = trace.records.iter().rposition(|r| !(err_deg(r).abs() <= band));
    let settling_time = match last_outside {
        None => Some(first.t),
        Some(i) => trace.records.get(i + 1).map(|r| r.t),
    };

    let n = trace.records.len() as f64;
    let tracking_rmse = libm::sqrt(trace.records.iter().map(|r| { let e = err_deg(r); e * e }).sum::<f64>() / n);
    let control_effort = trace.records.iter().map(|r| r.torque * r.torque).sum::<f64>() * trace.control_dt;
    let max_torque = trace.records.iter().map(|r| r.torque.abs()).fold(0.0, f64::max);

    Some(RunMetrics {
        overshoot,
        settling_time,
        tracking_rmse,
        control_effort,
        max_torque,
        converged: settling_time.is_some(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub a: RunMetrics,
    pub b: RunMetrics,
    /// `a` has strictly lower overshoot.
    pub lower_overshoot: bool,
    /// `a` settles strictly earlier (settling at all beats never settling).
    pub lower_settling_time: bool,
    /// `a` has strictly lower tracking RMSE.
    pub lower_rmse: bool,
}

impl ComparisonReport {
    /// `a` beats `b` on both overshoot and settling time.
    pub fn a_dominates(&self) -> bool {
        self.lower_overshoot && self.lower_settling_time
    }
}

pub fn compare(a: &RunMetrics, b: &RunMetrics) -> ComparisonReport {
    let lower_settling_time = match (a.settling_time, b.settling_time) {
        (Some(x), Some(y)) => x < y,
        (Some(_), None) => true,
        _ => false,
    };
    ComparisonReport {
        a: *a,
        b: *b,
        lower_overshoot: a.overshoot < b.overshoot,
        lower_settling_time,
        lower_rmse: a.tracking_rmse < b.tracking_rmse,
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn settle(s: Option<f64>) -> String {
            use alloc::format;
            s.map_or_else(|| "not settled".into(), |t| format!("{t:.3}"))
        }
        let mark = |b: bool| if b { "a" } else { "-" };
        writeln!(f, "{:<22}{:>14}{:>14}{:>8}", "metric", "a", "b", "better")?;
        writeln!(
            f,
            "{:<22}{:>14.4}{:>14.4}{:>8}",
            "overshoot [deg]",
            self.a.overshoot,
            self.b.overshoot,
            mark(self.lower_overshoot)
        )?;
        writeln!(
            f,
            "{:<22}{:>14}{:>14}{:>8}",
            "settling time [s]",
            settle(self.a.settling_time),
            settle(self.b.settling_time),
            mark(self.lower_settling_time)
        )?;
        writeln!(
            f,
            "{:<22}{:>14.4}{:>14.4}{:>8}",
            "tracking rmse [deg]",
            self.a.tracking_rmse,
            self.b.tracking_rmse,
            mark(self.lower_rmse)
        )?;
        writeln!(
            f,
            "{:<22}{:>14.4}{:>14.4}",
            "effort [N^2 m^2 s]", self.a.control_effort, self.b.control_effort
        )?;
        writeln!(f, "{:<22}{:>14.4}{:>14.4}", "max torque [N m]", self.a.max_torque, self.b.max_torque)?;
        write!(f, "a dominates: {}", self.a_dominates())
    }
}

/// Ground-plane path `(x, y)` of the rear contact point.
pub fn trajectory_xy(trace: &RunTrace) -> Vec<[f64; 2]> {
    trace.records.iter().map(|r| [r.x, r.y]).collect()
}
