//! Adaptive critic-based neuro-fuzzy roll control for a linearized bicycle.
//!
//! The crate is `no_std` (with `alloc`) and contains everything that is pure
//! computation: the two-degree-of-freedom bicycle model and its RK4
//! integrator, the TSK fuzzy inference engine, the critic and its
//! gradient-descent consequent update, the inner steering PID, the
//! roll/gyro-bias Kalman filter with a synthetic IMU, and the closed-loop
//! scenario runner with its metrics.
//!
//! File formats, configuration and the command line live in the
//! `bicycle-critic` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod critic;
pub mod dynamics;
mod eigen;
mod error;
pub mod estimation;
pub mod fuzzy;
pub mod harness;
pub mod pid;

pub use error::Error;

/// Degrees to radians.
pub fn deg(x: f64) -> f64 {
    x * core::f64::consts::PI / 180.0
}

/// Radians to degrees.
pub fn to_deg(x: f64) -> f64 {
    x * 180.0 / core::f64::consts::PI
}
