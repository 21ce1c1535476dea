//! Node-set distances between a traced morphology and its reference.
//!
//! All three metrics work on node positions. `theta` is the distance beyond
//! which a node counts as unmatched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{nearest_distances, Point};
use crate::swc::{resample, Morphology};

pub const DEFAULT_THETA: f64 = 2.0;
pub const DEFAULT_RESAMPLE_STEP: f64 = 1.0;

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "theta",
            format!("must be positive, got {theta}"),
        ))
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean distance from each predicted node to its nearest reference node.
pub fn esa_points(pred: &[Point], gt: &[Point]) -> Result<f64> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::UndefinedMetric("ESA needs two non-empty traces"));
    }
    let d = nearest_distances(pred, gt).expect("non-empty");
    Ok(mean(d.into_iter()).expect("non-empty"))
}

/// Mean over predicted nodes farther than `theta` from the reference of their
/// nearest-reference distance; zero when every node is matched.
pub fn dsa_points(pred: &[Point], gt: &[Point], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if gt.is_empty() {
        return Err(Error::UndefinedMetric("DSA needs a non-empty reference"));
    }
    let d = nearest_distances(pred, gt).expect("non-empty");
    Ok(mean(d.into_iter().filter(|x| *x > theta)).unwrap_or(0.0))
}

/// Fraction of nodes, over both traces, farther than `theta` from the other trace.
pub fn pds_points(pred: &[Point], gt: &[Point], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if pred.is_empty() && gt.is_empty() {
        return Err(Error::UndefinedMetric("PDS needs at least one node"));
    }
    let unmatched = |from: &[Point], to: &[Point]| -> usize {
        match nearest_distances(from, to) {
            Some(d) => d.into_iter().filter(|x| *x > theta).count(),
            None => from.len(),
        }
    };
    let bad = unmatched(pred, gt) + unmatched(gt, pred);
    Ok(bad as f64 / (pred.len() + gt.len()) as f64)
}

pub fn esa(pred: &Morphology, gt: &Morphology) -> Result<f64> {
    esa_points(&pred.points(), &gt.points())
}

/// Average of both directed ESA values.
pub fn esa_symmetric(pred: &Morphology, gt: &Morphology) -> Result<f64> {
    let (p, g) = (pred.points(), gt.points());
    Ok(0.5 * (esa_points(&p, &g)? + esa_points(&g, &p)?))
}

pub fn dsa(pred: &Morphology, gt: &Morphology, theta: f64) -> Result<f64> {
    dsa_points(&pred.points(), &gt.points(), theta)
}

pub fn pds(pred: &Morphology, gt: &Morphology, theta: f64) -> Result<f64> {
    pds_points(&pred.points(), &gt.points(), theta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EsaMode {
    Directed,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub theta: f64,
    pub resample_step: Option<f64>,
    pub esa_mode: EsaMode,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            theta: DEFAULT_THETA,
            resample_step: None,
            esa_mode: EsaMode::Directed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub esa: f64,
    pub esa_mode: EsaMode,
    pub dsa: f64,
    pub pds: f64,
    pub match_threshold: f64,
    pub n_pred: usize,
    pub n_gt: usize,
    pub resample_step: Option<f64>,
}

/// Optionally resamples both traces, then computes ESA, DSA and PDS.
pub fn evaluate_trace(
    pred: &Morphology,
    gt: &Morphology,
    opts: &TraceOptions,
) -> Result<TraceReport> {
    check_theta(opts.theta)?;
    let (pred, gt) = match opts.resample_step {
        Some(step) => (resample(pred, step)?, resample(gt, step)?),
        None => (pred.clone(), gt.clone()),
    };
    let esa = match opts.esa_mode {
        EsaMode::Directed => esa(&pred, &gt)?,
        EsaMode::Symmetric => esa_symmetric(&pred, &gt)?,
    };
    Ok(TraceReport {
        esa,
        esa_mode: opts.esa_mode,
        dsa: dsa(&pred, &gt, opts.theta)?,
        pds: pds(&pred, &gt, opts.theta)?,
        match_threshold: opts.theta,
        n_pred: pred.len(),
        n_gt: gt.len(),
        resample_step: opts.resample_step,
    })
}
