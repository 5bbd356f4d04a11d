//! Critic signal and the gradient-descent update of the rule consequents.
//!
//! The critic scores the last control action with `r = k1 e + k2 de`; the
//! cost `E = r^2 / 2` is driven down by moving every consequent coefficient
//! along `eta * r * du/da`. For the TSK output the partial derivatives are
//! the normalized firing strengths times the matching input (1, e or de).

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::fuzzy::{TskRuleBase, RULES};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct CriticConfig {
    pub k1: f64,
    pub k2: f64,
}

impl CriticConfig {
    /// Weights used for the simulated cases.
    pub const SIMULATION: Self = Self { k1: 0.05, k2: 0.01 };
    /// Weights used on the test rig.
    pub const EXPERIMENT: Self = Self { k1: 0.4, k2: 0.3 };

    pub fn validate(&self) -> Result<(), Error> {
        if self.k1 > 0.0 && self.k2 > 0.0 && self.k1.is_finite() && self.k2.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter("critic weights must be positive"))
        }
    }
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self::SIMULATION
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LearnConfig {
    /// Learning rate.
    pub eta: f64,
    /// `false` freezes the rule base.
    pub adapt_enabled: bool,
    /// Optional symmetric clamp applied to every coefficient after an update.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub coefficient_bound: Option<f64>,
}

impl LearnConfig {
    pub const SIMULATION: Self = Self {
        eta: 0.5,
        adapt_enabled: true,
        coefficient_bound: None,
    };
    pub const EXPERIMENT: Self = Self {
        eta: 1.0,
        adapt_enabled: true,
        coefficient_bound: None,
    };

    pub fn validate(&self) -> Result<(), Error> {
        if self.adapt_enabled && !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be positive"));
        }
        if matches!(self.coefficient_bound, Some(b) if !(b > 0.0)) {
            return Err(Error::InvalidParameter("coefficient bound must be positive"));
        }
        Ok(())
    }
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self::SIMULATION
    }
}

pub fn critic_signal(e: f64, de: f64, cfg: &CriticConfig) -> f64 {
    cfg.k1 * e + cfg.k2 * de
}

pub fn cost(r: f64) -> f64 {
    0.5 * r * r
}

/// Applies one learning step to all rules in place.
///
/// `weights` are the normalized firing strengths from the inference that
/// produced the action being scored. Nothing changes when learning is
/// disabled.
pub fn update_consequents(
    rb: &mut TskRuleBase,
    r: f64,
    e: f64,
    de: f64,
    weights: &[f64; RULES],
    lc: &LearnConfig,
    step: u64,
) -> Result<(), Error> {
    if !lc.adapt_enabled {
        return Ok(());
    }
    if !(r.is_finite() && e.is_finite() && de.is_finite() && weights.iter().all(|w| w.is_finite())) {
        return Err(Error::LearningDiverged { step });
    }
    let gain = lc.eta * r;
    let mut next = rb.consequents;
    for (c, &w) in next.iter_mut().zip(weights) {
        c.a0 += gain * w;
        c.a1 += gain * e * w;
        c.a2 += gain * de * w;
        if let Some(b) = lc.coefficient_bound {
            c.a0 = c.a0.clamp(-b, b);
            c.a1 = c.a1.clamp(-b, b);
            c.a2 = c.a2.clamp(-b, b);
        }
        if !(c.a0.is_finite() && c.a1.is_finite() && c.a2.is_finite()) {
            return Err(Error::LearningDiverged { step });
        }
    }
    rb.consequents = next;
    Ok(())
}
