//! Linearized two-degree-of-freedom bicycle with yaw and planar kinematics.
//!
//! The lean/steer coordinates `q = (phi, delta)` obey
//!
//! ```text
//! M q'' + v C1 q' + (K1 + v^2 K2) q = f
//! ```
//!
//! and the heading and ground position follow from the rolling constraint
//! `psi' = (v delta + t delta') / w * sin(lambda)`, `x' = v cos psi`,
//! `y' = v sin psi`.

use num_complex::Complex64;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::{eigen, Error};

/// Row-major 2x2 matrix.
pub type Mat2 = [[f64; 2]; 2];

/// Row-major 4x4 matrix.
pub type Mat4 = [[f64; 4]; 4];

/// Trigonometric factor applied to the steer axis angle in the yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum YawTrig {
    #[default]
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BicycleParams {
    /// Mass matrix `M`.
    pub mass: Mat2,
    /// Damping matrix `C1`, multiplied by the forward speed.
    pub damping: Mat2,
    /// Speed-independent stiffness `K1`.
    pub stiffness: Mat2,
    /// Stiffness `K2`, multiplied by the squared forward speed.
    pub speed_stiffness: Mat2,
    /// Distance between the wheel contact centres, m.
    pub wheelbase: f64,
    /// Mechanical trail, m.
    pub trail: f64,
    /// Steer axis tilt, rad.
    pub steer_axis_angle: f64,
    /// Forward speed, m/s.
    pub speed: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub yaw_trig: YawTrig,
}

impl BicycleParams {
    /// Matrices of the small experimental bicycle with benchmark geometry.
    pub fn experimental(speed: f64) -> Self {
        Self {
            mass: [[1.43, 0.18], [0.18, 0.08]],
            damping: [[0.0, 2.34], [-0.32, 0.42]],
            stiffness: [[-32.53, -4.3], [-4.3, -1.6]],
            speed_stiffness: [[0.0, 4.3], [0.0, 0.6]],
            wheelbase: 1.02,
            trail: 0.08,
            steer_axis_angle: core::f64::consts::PI / 10.0,
            speed,
            yaw_trig: YawTrig::Sin,
        }
    }

    pub fn with_speed(mut self, speed: f64) -> Self {
        self.speed = speed;
        self
    }

    /// Applies per-matrix multipliers, e.g. a heavier frame.
    pub fn scaled(mut self, scales: &ParamScales) -> Self {
        scale(&mut self.mass, scales.mass);
        scale(&mut self.damping, scales.damping);
        scale(&mut self.stiffness, scales.stiffness);
        scale(&mut self.speed_stiffness, scales.speed_stiffness);
        self
    }

    pub fn validate(&self) -> Result<(), Error> {
        let all_finite = [self.mass, self.damping, self.stiffness, self.speed_stiffness]
            .iter()
            .flat_map(|m| m.iter().flatten())
            .chain([self.wheelbase, self.trail, self.steer_axis_angle, self.speed].iter())
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter("bicycle parameters must be finite"));
        }
        let m = &self.mass;
        if (m[0][1] - m[1][0]).abs() > 1e-12 * (m[0][1].abs() + m[1][0].abs()).max(1.0) {
            return Err(Error::InvalidParameter("mass matrix must be symmetric"));
        }
        if m[0][0] <= 0.0 || det2(m) <= 0.0 {
            return Err(Error::InvalidParameter("mass matrix must be positive definite"));
        }
        if self.speed < 0.0 {
            return Err(Error::InvalidParameter("forward speed must be non-negative"));
        }
        if self.wheelbase <= 0.0 {
            return Err(Error::InvalidParameter("wheelbase must be positive"));
        }
        Ok(())
    }

    /// Speed-resolved matrices ready for repeated evaluation.
    pub fn model(&self) -> Result<LinearModel, Error> {
        let mass_inv = inv2(&self.mass)?;
        let v = self.speed;
        let mut damping = self.damping;
        scale(&mut damping, v);
        let mut stiffness = self.speed_stiffness;
        scale(&mut stiffness, v * v);
        for (row, k1) in stiffness.iter_mut().zip(self.stiffness.iter()) {
            for (s, k) in row.iter_mut().zip(k1.iter()) {
                *s += k;
            }
        }
        let trig = match self.yaw_trig {
            YawTrig::Sin => libm::sin(self.steer_axis_angle),
            YawTrig::Cos => libm::cos(self.steer_axis_angle),
        };
        Ok(LinearModel {
            mass_inv,
            damping,
            stiffness,
            yaw_gain: trig / self.wheelbase,
            trail: self.trail,
            speed: v,
        })
    }
}

/// Multipliers applied to each matrix of [`BicycleParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ParamScales {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub speed_stiffness: f64,
}

impl Default for ParamScales {
    fn default() -> Self {
        Self {
            mass: 1.0,
            damping: 1.0,
            stiffness: 1.0,
            speed_stiffness: 1.0,
        }
    }
}

impl ParamScales {
    /// Mass increase by `factor`: `M` and the gravity stiffness `K1` scale,
    /// `C1` and `K2` do not.
    pub fn heavier(factor: f64) -> Self {
        Self {
            mass: factor,
            stiffness: factor,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BicycleState {
    /// Roll angle, rad.
    pub phi: f64,
    /// Steering angle, rad.
    pub delta: f64,
    pub phi_dot: f64,
    pub delta_dot: f64,
    /// Yaw angle, rad.
    pub psi: f64,
    pub x: f64,
    pub y: f64,
}

impl BicycleState {
    pub fn leaning(phi: f64) -> Self {
        Self {
            phi,
            ..Self::default()
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [self.phi, self.delta, self.phi_dot, self.delta_dot, self.psi, self.x, self.y]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        Self {
            phi: a[0],
            delta: a[1],
            phi_dot: a[2],
            delta_dot: a[3],
            psi: a[4],
            x: a[5],
            y: a[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Time derivative of a [`BicycleState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateDerivative {
    pub phi_dot: f64,
    pub delta_dot: f64,
    pub phi_ddot: f64,
    pub delta_ddot: f64,
    pub psi_dot: f64,
    pub x_dot: f64,
    pub y_dot: f64,
}

impl StateDerivative {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.phi_dot,
            self.delta_dot,
            self.phi_ddot,
            self.delta_ddot,
            self.psi_dot,
            self.x_dot,
            self.y_dot,
        ]
    }
}

/// External generalized forces on the lean and steer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneralizedForce {
    /// Lateral disturbance torque about the roll axis, N m.
    pub f_phi: f64,
    /// Steering torque from the handlebar actuator, N m.
    pub f_delta: f64,
}

impl GeneralizedForce {
    pub fn steer(torque: f64) -> Self {
        Self {
            f_phi: 0.0,
            f_delta: torque,
        }
    }
}

/// [`BicycleParams`] resolved at a fixed forward speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    mass_inv: Mat2,
    /// `v C1`
    damping: Mat2,
    /// `K1 + v^2 K2`
    stiffness: Mat2,
    yaw_gain: f64,
    trail: f64,
    speed: f64,
}

impl LinearModel {
    pub fn derivative(&self, s: &BicycleState, force: &GeneralizedForce) -> StateDerivative {
        let q = [s.phi, s.delta];
        let qd = [s.phi_dot, s.delta_dot];
        let c = mul2v(&self.damping, &qd);
        let k = mul2v(&self.stiffness, &q);
        let rhs = [force.f_phi - c[0] - k[0], force.f_delta - c[1] - k[1]];
        let qdd = mul2v(&self.mass_inv, &rhs);
        StateDerivative {
            phi_dot: s.phi_dot,
            delta_dot: s.delta_dot,
            phi_ddot: qdd[0],
            delta_ddot: qdd[1],
            psi_dot: (self.speed * s.delta + self.trail * s.delta_dot) * self.yaw_gain,
            x_dot: self.speed * libm::cos(s.psi),
            y_dot: self.speed * libm::sin(s.psi),
        }
    }

    /// One classical RK4 step with the force held constant over `dt`.
    /// `t` is only used to stamp a divergence error.
    pub fn step_rk4(
        &self,
        state: &BicycleState,
        force: &GeneralizedForce,
        t: f64,
        dt: f64,
    ) -> Result<BicycleState, Error> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("time step must be positive"));
        }
        let x0 = state.to_array();
        let shifted = |k: &[f64; 7], h: f64| {
            let mut x = x0;
            for (xi, ki) in x.iter_mut().zip(k) {
                *xi += h * ki;
            }
            BicycleState::from_array(x)
        };
        let k1 = self.derivative(state, force).to_array();
        let k2 = self.derivative(&shifted(&k1, 0.5 * dt), force).to_array();
        let k3 = self.derivative(&shifted(&k2, 0.5 * dt), force).to_array();
        let k4 = self.derivative(&shifted(&k3, dt), force).to_array();
        let mut x = x0;
        for i in 0..7 {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let next = BicycleState::from_array(x);
        if next.is_finite() {
            Ok(next)
        } else {
            Err(Error::IntegrationDiverged { time: t + dt })
        }
    }

    /// Companion-form matrix of the unforced lean/steer dynamics acting on
    /// `[phi, delta, phi', delta']`.
    pub fn system_matrix(&self) -> Mat4 {
        let mk = mul2(&self.mass_inv, &self.stiffness);
        let mc = mul2(&self.mass_inv, &self.damping);
        let mut a = [[0.0; 4]; 4];
        a[0][2] = 1.0;
        a[1][3] = 1.0;
        for i in 0..2 {
            for j in 0..2 {
                a[2 + i][j] = -mk[i][j];
                a[2 + i][2 + j] = -mc[i][j];
            }
        }
        a
    }
}

pub fn state_derivative(
    params: &BicycleParams,
    state: &BicycleState,
    force: &GeneralizedForce,
) -> Result<StateDerivative, Error> {
    Ok(params.model()?.derivative(state, force))
}

pub fn step_rk4(
    params: &BicycleParams,
    state: &BicycleState,
    force: &GeneralizedForce,
    t: f64,
    dt: f64,
) -> Result<BicycleState, Error> {
    params.model()?.step_rk4(state, force, t, dt)
}

pub fn system_matrix(params: &BicycleParams) -> Result<Mat4, Error> {
    Ok(params.model()?.system_matrix())
}

/// Eigenvalues of [`system_matrix`], sorted by real part, largest first.
/// A positive leading real part means the uncontrolled bicycle falls over.
pub fn stability_eigenvalues(params: &BicycleParams) -> Result<[Complex64; 4], Error> {
    Ok(eigen::eigenvalues4(&system_matrix(params)?))
}

fn scale(m: &mut Mat2, s: f64) {
    m.iter_mut().flatten().for_each(|x| *x *= s);
}

fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

fn inv2(m: &Mat2) -> Result<Mat2, Error> {
    let det = det2(m);
    let scale = m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if !det.is_finite() || det.abs() <= 1e-12 * scale * scale || scale == 0.0 {
        return Err(Error::DegenerateMassMatrix { det });
    }
    Ok([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn mul2v(a: &Mat2, v: &[f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}
