//! Dice and cross-entropy losses and the deep-supervision combination with the
//! skeleton loss as a multiplicative modulator.
//!
//! Sums run in ascending flat-index order in `f64` so results are
//! bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Volume3D, VolumeKind};

pub const DEFAULT_DICE_EPSILON: f64 = 1e-8;
/// Probabilities are clamped to `[CE_CLAMP, 1 - CE_CLAMP]` before taking logs.
pub const CE_CLAMP: f64 = 1e-7;
pub const DEFAULT_BETA: f64 = 1.0;

fn require_binary(g: &Volume3D) -> Result<()> {
    if g.kind() != VolumeKind::Binary {
        return Err(Error::InvalidVolume(
            "ground truth must be a binary mask".into(),
        ));
    }
    Ok(())
}

/// `1 - 2 Σ p g / (Σ p² + Σ g² + eps)`.
pub fn dice_loss(p: &Volume3D, g: &Volume3D, epsilon: f64) -> Result<f64> {
    p.require_same_dims(g)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::param(
            "epsilon",
            format!("must be positive, got {epsilon}"),
        ));
    }
    let (mut inter, mut pp, mut gg) = (0.0f64, 0.0f64, 0.0f64);
    for (pi, gi) in p.data().iter().zip(g.data()) {
        let (pi, gi) = (f64::from(*pi), f64::from(*gi));
        inter += pi * gi;
        pp += pi * pi;
        gg += gi * gi;
    }
    Ok(1.0 - 2.0 * inter / (pp + gg + epsilon))
}

/// Summed binary cross-entropy, `-Σ [g ln p + (1 - g) ln(1 - p)]`.
pub fn ce_loss(p: &Volume3D, g: &Volume3D) -> Result<f64> {
    p.require_same_dims(g)?;
    require_binary(g)?;
    let mut acc = 0.0f64;
    for (pi, gi) in p.data().iter().zip(g.data()) {
        let pi = f64::from(*pi).clamp(CE_CLAMP, 1.0 - CE_CLAMP);
        acc += if *gi != 0.0 { pi.ln() } else { (1.0 - pi).ln() };
    }
    Ok(-acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepSupervisionConfig {
    pub scale_weights: Vec<f64>,
    pub beta: f64,
    pub epsilon_dice: f64,
}

impl DeepSupervisionConfig {
    /// Weights proportional to `2^-s` for `s = 0..scales`, normalized to sum to one.
    pub fn halving(scales: usize, beta: f64) -> Self {
        let raw: Vec<f64> = (0..scales).map(|s| 0.5f64.powi(s as i32)).collect();
        let sum: f64 = raw.iter().sum();
        DeepSupervisionConfig {
            scale_weights: raw.iter().map(|w| w / sum).collect(),
            beta,
            epsilon_dice: DEFAULT_DICE_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .scale_weights
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::param("scale_weights", "must be non-negative"));
        }
        if !self.scale_weights.iter().any(|w| *w > 0.0) {
            return Err(Error::param(
                "scale_weights",
                "at least one weight must be positive",
            ));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param(
                "beta",
                format!("must be non-negative, got {}", self.beta),
            ));
        }
        if !(self.epsilon_dice > 0.0 && self.epsilon_dice.is_finite()) {
            return Err(Error::param("epsilon_dice", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLoss {
    pub dice: f64,
    pub ce: f64,
    pub tasl_total: f64,
}

impl ScaleLoss {
    fn validate(&self, s: usize) -> Result<()> {
        let ok = self.dice.is_finite()
            && (0.0..=1.0).contains(&self.dice)
            && self.ce.is_finite()
            && self.ce >= 0.0
            && self.tasl_total.is_finite()
            && self.tasl_total >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::param(
                "scales",
                format!("scale {s}: need dice in [0,1], ce >= 0, tasl_total >= 0, got {self:?}"),
            ))
        }
    }
}

/// `Σ_s λ_s (1 + β·tasl_s)(dice_s + ce_s)`.
pub fn total_loss(inputs: &[ScaleLoss], cfg: &DeepSupervisionConfig) -> Result<f64> {
    cfg.validate()?;
    if inputs.len() != cfg.scale_weights.len() {
        return Err(Error::LengthMismatch {
            what: "scales",
            expected: cfg.scale_weights.len(),
            actual: inputs.len(),
        });
    }
    let mut acc = 0.0;
    for (s, (x, lambda)) in inputs.iter().zip(&cfg.scale_weights).enumerate() {
        x.validate(s)?;
        acc += lambda * (1.0 + cfg.beta * x.tasl_total) * (x.dice + x.ce);
    }
    Ok(acc)
}
