//! Pairwise interaction potentials.
//!
//! All potentials are evaluated on `dphi = theta_j - theta_i`, the phase
//! lead of the partner over the oscillator being updated. A positive value
//! pulls oscillator `i` forward.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the coupling potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    /// Periodic sine coupling of the classic Kuramoto model.
    Kuramoto,
    /// `tanh`: attractive at every range, drives resynchronization.
    Scalable,
    /// Repulsive inside the interaction horizon `sigma`, constant pull
    /// beyond it. Adjacent oscillators settle at `2 sigma / 3`.
    Bottlenecked { sigma: f64 },
}

impl PotentialKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PotentialKind::Bottlenecked { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::Config(format!("potential.sigma must be positive and finite, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Evaluates the potential without input validation.
    #[inline]
    pub fn eval_unchecked(&self, dphi: f64) -> f64 {
        match *self {
            PotentialKind::Kuramoto => dphi.sin(),
            PotentialKind::Scalable => dphi.tanh(),
            PotentialKind::Bottlenecked { sigma } => {
                if dphi.abs() < sigma {
                    -(1.5 * PI / sigma * dphi).sin()
                } else if dphi > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Stable adjacent phase difference of a desynchronized chain, if the
    /// potential has one.
    pub fn desync_fixed_point(&self) -> Option<f64> {
        match *self {
            PotentialKind::Bottlenecked { sigma } => Some(2.0 * sigma / 3.0),
            _ => None,
        }
    }
}

/// Evaluates `V(dphi)` with `dphi = theta_j - theta_i`.
pub fn eval_potential(kind: PotentialKind, dphi: f64) -> Result<f64> {
    if !dphi.is_finite() {
        return Err(Error::InvalidInput(format!("phase difference is not finite: {dphi}")));
    }
    kind.validate().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(kind.eval_unchecked(dphi))
}
