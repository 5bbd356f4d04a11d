//! TOML configuration and scenario files.
//!
//! Every section and key is optional; anything left out keeps its default.
//! Unknown keys are rejected. Angles in scenario files are given in degrees,
//! everything else in SI units.

use std::path::Path;

use bicycle_critic_core::critic::{CriticConfig, LearnConfig};
use bicycle_critic_core::dynamics::{BicycleParams, Mat2, ParamScales, YawTrig};
use bicycle_critic_core::estimation::{ImuModel, KalmanConfig};
use bicycle_critic_core::fuzzy::{InputPartition, TskRuleBase, RULES};
use bicycle_critic_core::harness::{
    Controller, LoopConfig, Reference, Scenario, Sensing, DEFAULT_SEED_KD, DEFAULT_SEED_KP,
};
use bicycle_critic_core::pid::PidConfig;
use bicycle_critic_core::{deg, to_deg};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("fuzzy.coefficients must hold {expected} values, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("unknown scenario {0:?} (not a preset and no such file)")]
    UnknownScenario(String),
    #[error(transparent)]
    Invalid(#[from] bicycle_critic_core::Error),
}

/// Bicycle matrices and geometry. The forward speed is not part of it; it
/// comes from the scenario or the stability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BicycleSection {
    pub mass: Mat2,
    pub damping: Mat2,
    pub stiffness: Mat2,
    pub speed_stiffness: Mat2,
    pub wheelbase: f64,
    pub trail: f64,
    pub steer_axis_angle: f64,
    pub yaw_trig: YawTrig,
}

impl Default for BicycleSection {
    fn default() -> Self {
        Self::from_params(&BicycleParams::experimental(0.0))
    }
}

impl BicycleSection {
    pub fn from_params(p: &BicycleParams) -> Self {
        Self {
            mass: p.mass,
            damping: p.damping,
            stiffness: p.stiffness,
            speed_stiffness: p.speed_stiffness,
            wheelbase: p.wheelbase,
            trail: p.trail,
            steer_axis_angle: p.steer_axis_angle,
            yaw_trig: p.yaw_trig,
        }
    }

    pub fn params(&self, speed: f64) -> BicycleParams {
        BicycleParams {
            mass: self.mass,
            damping: self.damping,
            stiffness: self.stiffness,
            speed_stiffness: self.speed_stiffness,
            wheelbase: self.wheelbase,
            trail: self.trail,
            steer_axis_angle: self.steer_axis_angle,
            speed,
            yaw_trig: self.yaw_trig,
        }
    }
}

/// Membership functions and the 27 consequent coefficients, ordered rule by
/// rule as `a0, a1, a2` with rules in (error label, difference label)
/// row-major order N, Z, P.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FuzzySection {
    pub error: InputPartition,
    pub difference: InputPartition,
    pub coefficients: Vec<f64>,
}

impl Default for FuzzySection {
    fn default() -> Self {
        Self::from_rule_base(&TskRuleBase::pd_seeded(DEFAULT_SEED_KP, DEFAULT_SEED_KD))
    }
}

impl FuzzySection {
    pub fn from_rule_base(rb: &TskRuleBase) -> Self {
        Self {
            error: rb.error.clone(),
            difference: rb.difference.clone(),
            coefficients: rb.coefficients().to_vec(),
        }
    }

    pub fn rule_base(&self) -> Result<TskRuleBase, ConfigError> {
        let flat: [f64; 3 * RULES] =
            self.coefficients
                .as_slice()
                .try_into()
                .map_err(|_| ConfigError::CoefficientCount {
                    expected: 3 * RULES,
                    got: self.coefficients.len(),
                })?;
        let mut rb = TskRuleBase::pd_seeded(0.0, 0.0);
        rb.error = self.error.clone();
        rb.difference = self.difference.clone();
        rb.set_coefficients(&flat);
        rb.validate()?;
        Ok(rb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Timing {
    /// RK4 step and PID sample period, s.
    pub physics_dt: f64,
    /// Fuzzy controller and learning period, s.
    pub control_dt: f64,
}

impl Default for Timing {
    fn default() -> Self {
        let s = Scenario::case1();
        Self {
            physics_dt: s.physics_dt,
            control_dt: s.control_dt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Settling band half-width, deg.
    pub band: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { band: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// `delta_ref = steer_sign * u`.
    pub steer_sign: f64,
    pub timing: Timing,
    pub bicycle: BicycleSection,
    pub fuzzy: FuzzySection,
    pub critic: CriticConfig,
    pub learning: LearnConfig,
    pub pid: PidConfig,
    /// Sensor model used with `--sensing imu`.
    pub imu: ImuModel,
    pub kalman: KalmanConfig,
    pub metrics: MetricsSection,
}

impl Default for Config {
    fn default() -> Self {
        let lc = LoopConfig::default();
        Self {
            steer_sign: lc.steer_sign,
            timing: Timing::default(),
            bicycle: BicycleSection::from_params(&lc.bicycle),
            fuzzy: FuzzySection::from_rule_base(&lc.rule_base),
            critic: lc.critic,
            learning: LearnConfig::SIMULATION,
            pid: lc.pid,
            imu: ImuModel::default(),
            kalman: lc.kalman,
            metrics: MetricsSection::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.into(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::from_toml(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn loop_config(&self) -> Result<LoopConfig, ConfigError> {
        let lc = LoopConfig {
            bicycle: self.bicycle.params(0.0),
            rule_base: self.fuzzy.rule_base()?,
            critic: self.critic,
            pid: self.pid,
            kalman: self.kalman,
            steer_sign: self.steer_sign,
        };
        lc.validate()?;
        Ok(lc)
    }

    /// Fills the timing and learning defaults of this config into a
    /// scenario.
    pub fn apply(&self, mut s: Scenario) -> Scenario {
        s.physics_dt = self.timing.physics_dt;
        s.control_dt = self.timing.control_dt;
        if let Controller::Adaptive(_) = s.controller {
            s.controller = Controller::Adaptive(self.learning);
        }
        s
    }

    pub fn imu_sensing(&self) -> Sensing {
        Sensing::Imu { model: self.imu }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ReferenceSpec {
    Constant { value_deg: f64 },
    Sine { amplitude_deg: f64, omega: f64 },
}

impl ReferenceSpec {
    pub fn to_reference(self) -> Reference {
        match self {
            ReferenceSpec::Constant { value_deg } => Reference::Constant { value: deg(value_deg) },
            ReferenceSpec::Sine { amplitude_deg, omega } => Reference::Sine {
                amplitude: deg(amplitude_deg),
                omega,
            },
        }
    }

    pub fn from_reference(r: Reference) -> Self {
        match r {
            Reference::Constant { value } => ReferenceSpec::Constant { value_deg: to_deg(value) },
            Reference::Sine { amplitude, omega } => ReferenceSpec::Sine {
                amplitude_deg: to_deg(amplitude),
                omega,
            },
        }
    }
}

/// A user-defined scenario. Timing falls back to the config when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// m/s
    pub speed: f64,
    #[serde(default)]
    pub phi0_deg: f64,
    pub duration: f64,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub param_scales: ParamScales,
    #[serde(default)]
    pub physics_dt: Option<f64>,
    #[serde(default)]
    pub control_dt: Option<f64>,
}

impl ScenarioFile {
    pub fn to_scenario(&self, cfg: &Config) -> Scenario {
        let mut s = cfg.apply(Scenario::case1());
        s.name = self.name.clone();
        s.speed = self.speed;
        s.phi0 = deg(self.phi0_deg);
        s.duration = self.duration;
        s.reference = self.reference.to_reference();
        s.param_scales = self.param_scales;
        if let Some(dt) = self.physics_dt {
            s.physics_dt = dt;
        }
        if let Some(dt) = self.control_dt {
            s.control_dt = dt;
        }
        s
    }
}

/// Resolves `name_or_path` as a preset name first, then as a scenario file.
pub fn resolve_scenario(name_or_path: &str, cfg: &Config) -> Result<Scenario, ConfigError> {
    if let Some(s) = Scenario::preset(name_or_path) {
        return Ok(cfg.apply(s));
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(ConfigError::UnknownScenario(name_or_path.into()));
    }
    let text = read(path)?;
    let file: ScenarioFile = toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    Ok(file.to_scenario(cfg))
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_exactly() {
        let cfg = Config::default();
        let back = Config::from_toml(&cfg.to_toml(), "dump").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(Config::from_toml("", "empty").unwrap(), Config::default());
    }

    #[test]
    fn partial_section_keeps_other_defaults() {
        let cfg = Config::from_toml("[pid]\nkp = 12.5\n", "partial").unwrap();
        assert_eq!(cfg.pid.kp, 12.5);
        assert_eq!(cfg.pid.kd, PidConfig::SIMULATION.kd);
        assert_eq!(cfg.critic, CriticConfig::SIMULATION);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(Config::from_toml("stear_sign = 1.0\n", "typo").is_err());
        assert!(Config::from_toml("[pid]\nkpp = 1.0\n", "typo").is_err());
        assert!(Config::from_toml("[nope]\n", "typo").is_err());
    }

    #[test]
    fn wrong_coefficient_count() {
        let cfg = Config::from_toml("[fuzzy]\ncoefficients = [1.0, 2.0]\n", "short").unwrap();
        assert!(matches!(
            cfg.loop_config(),
            Err(ConfigError::CoefficientCount { expected: 27, got: 2 })
        ));
    }

    #[test]
    fn awkward_decimals_survive() {
        let mut cfg = Config::default();
        cfg.fuzzy.coefficients[4] = 0.1 + 0.2;
        cfg.fuzzy.coefficients[26] = -1.0e-300;
        cfg.critic.k1 = f64::MIN_POSITIVE;
        let back = Config::from_toml(&cfg.to_toml(), "dump").unwrap();
        assert_eq!(back.fuzzy.coefficients, cfg.fuzzy.coefficients);
        assert_eq!(back.critic.k1, cfg.critic.k1);
    }

    #[test]
    fn scenario_file() {
        let text = r#"
name = "lean"
speed = 3.0
phi0_deg = 10.0
duration = 2.0
control_dt = 0.02

[reference]
kind = "sine"
amplitude_deg = 2.0
omega = 1.5

[param_scales]
mass = 1.1
"#;
        let file: ScenarioFile = toml::from_str(text).unwrap();
        let s = file.to_scenario(&Config::default());
        assert_eq!(s.name, "lean");
        assert_eq!(s.control_dt, 0.02);
        assert_eq!(s.physics_dt, Timing::default().physics_dt);
        assert!((s.phi0 - deg(10.0)).abs() < 1e-15);
        assert_eq!(s.param_scales.mass, 1.1);
        assert_eq!(s.param_scales.stiffness, 1.0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn presets_resolve_before_files() {
        let s = resolve_scenario("case3a", &Config::default()).unwrap();
        assert_eq!(s.speed, 1.39);
        assert!(matches!(
            resolve_scenario("no-such-scenario", &Config::default()),
            Err(ConfigError::UnknownScenario(_))
        ));
    }
}
