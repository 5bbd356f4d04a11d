//! First-order TSK inference over two inputs with three labels each.
//!
//! Layer by layer: membership degrees, product t-norm firing strengths,
//! normalization, linear rule consequents, weighted-average output.

use alloc::string::String;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::Error;

/// Number of rules in the 3 x 3 grid.
pub const RULES: usize = 9;

/// Total rule weight below which normalization is refused.
pub const MIN_TOTAL_WEIGHT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields))]
pub enum MembershipFn {
    /// `1 / (1 + exp(slope * (x - center)))`. A positive slope falls with
    /// `x`, a negative one rises.
    Sigmoid { slope: f64, center: f64 },
    /// `exp(-(x - center)^2 / (2 sigma^2))`
    Gaussian { center: f64, sigma: f64 },
}

impl MembershipFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            // exp overflows to +inf, which maps cleanly to 0
            MembershipFn::Sigmoid { slope, center } => 1.0 / (1.0 + libm::exp(slope * (x - center))),
            MembershipFn::Gaussian { center, sigma } => {
                let d = x - center;
                libm::exp(-d * d / (2.0 * sigma * sigma))
            }
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            MembershipFn::Sigmoid { slope, center } if slope.is_finite() && center.is_finite() => Ok(()),
            MembershipFn::Gaussian { center, sigma } if center.is_finite() && sigma.is_finite() && sigma > 0.0 => {
                Ok(())
            }
            _ => Err(Error::InvalidParameter("membership function parameters")),
        }
    }
}

pub fn mu_eval(mf: &MembershipFn, x: f64) -> f64 {
    mf.eval(x)
}

/// Linguistic labels in rule order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Negative,
    Zero,
    Positive,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Negative, Label::Zero, Label::Positive];

    pub fn short(self) -> char {
        match self {
            Label::Negative => 'N',
            Label::Zero => 'Z',
            Label::Positive => 'P',
        }
    }
}

/// Index of rule (`error` label, `difference` label) in row-major order.
pub fn rule_index(error: Label, difference: Label) -> usize {
    3 * error as usize + difference as usize
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct InputPartition {
    pub name: String,
    pub negative: MembershipFn,
    pub zero: MembershipFn,
    pub positive: MembershipFn,
}

impl InputPartition {
    /// Sigmoid shoulders at `+-shoulder` with slope 35, Gaussian zero of
    /// width `sigma`.
    pub fn symmetric(name: &str, shoulder: f64, sigma: f64) -> Self {
        Self {
            name: name.into(),
            negative: MembershipFn::Sigmoid {
                slope: 35.0,
                center: -shoulder,
            },
            zero: MembershipFn::Gaussian { center: 0.0, sigma },
            positive: MembershipFn::Sigmoid {
                slope: -35.0,
                center: shoulder,
            },
        }
    }

    /// Roll angle error partition.
    pub fn roll_error() -> Self {
        Self::symmetric("roll_error", 0.2, 0.05)
    }

    /// Partition of the per-sample roll error difference.
    pub fn roll_error_difference() -> Self {
        Self::symmetric("roll_error_difference", 0.35, 0.15)
    }

    pub fn memberships(&self, x: f64) -> [f64; 3] {
        [self.negative.eval(x), self.zero.eval(x), self.positive.eval(x)]
    }

    pub fn get(&self, label: Label) -> &MembershipFn {
        match label {
            Label::Negative => &self.negative,
            Label::Zero => &self.zero,
            Label::Positive => &self.positive,
        }
    }
}

/// Linear consequent `c = a0 + a1 e + a2 de` of one rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Consequent {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Consequent {
    pub fn eval(&self, e: f64, de: f64) -> f64 {
        self.a0 + self.a1 * e + self.a2 * de
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TskRuleBase {
    /// Partition of the error input.
    pub error: InputPartition,
    /// Partition of the error-difference input.
    pub difference: InputPartition,
    pub consequents: [Consequent; RULES],
}

impl TskRuleBase {
    /// Every rule starts as the same PD law `a1 e + a2 de`.
    pub fn pd_seeded(kp: f64, kd: f64) -> Self {
        Self {
            error: InputPartition::roll_error(),
            difference: InputPartition::roll_error_difference(),
            consequents: [Consequent {
                a0: 0.0,
                a1: kp,
                a2: kd,
            }; RULES],
        }
    }

    /// Consequents as `[a0_1, a1_1, a2_1, a0_2, ...]`.
    pub fn coefficients(&self) -> [f64; 3 * RULES] {
        let mut out = [0.0; 3 * RULES];
        for (chunk, c) in out.chunks_exact_mut(3).zip(&self.consequents) {
            chunk.copy_from_slice(&[c.a0, c.a1, c.a2]);
        }
        out
    }

    pub fn set_coefficients(&mut self, flat: &[f64; 3 * RULES]) {
        for (c, chunk) in self.consequents.iter_mut().zip(flat.chunks_exact(3)) {
            *c = Consequent {
                a0: chunk[0],
                a1: chunk[1],
                a2: chunk[2],
            };
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for p in [&self.error, &self.difference] {
            for label in Label::ALL {
                p.get(label).validate()?;
            }
        }
        if self.coefficients().iter().all(|a| a.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("rule consequents must be finite"))
        }
    }

    /// Product t-norm over the 3 x 3 grid, error label major.
    pub fn firing_strengths(&self, e: f64, de: f64) -> [f64; RULES] {
        let me = self.error.memberships(e);
        let md = self.difference.memberships(de);
        let mut w = [0.0; RULES];
        for (i, mu_e) in me.iter().enumerate() {
            for (j, mu_d) in md.iter().enumerate() {
                w[3 * i + j] = mu_e * mu_d;
            }
        }
        w
    }

    pub fn infer(&self, e: f64, de: f64) -> Result<Inference, Error> {
        let w = self.firing_strengths(e, de);
        let total: f64 = w.iter().sum();
        if !(total >= MIN_TOTAL_WEIGHT) {
            return Err(Error::DegenerateFiring { total });
        }
        let weights = w.map(|wj| wj / total);
        let u = self
            .consequents
            .iter()
            .zip(&weights)
            .map(|(c, wb)| c.eval(e, de) * wb)
            .sum();
        Ok(Inference { u, weights })
    }
}

pub fn firing_strengths(rb: &TskRuleBase, e: f64, de: f64) -> [f64; RULES] {
    rb.firing_strengths(e, de)
}

pub fn infer(rb: &TskRuleBase, e: f64, de: f64) -> Result<Inference, Error> {
    rb.infer(e, de)
}

/// Controller output and the normalized firing strengths behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference {
    pub u: f64,
    pub weights: [f64; RULES],
}
