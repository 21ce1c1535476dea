//! Topology-aware skeleton loss: node, edge and path discrepancies between the
//! skeleton graphs of a prediction and its ground truth, and their weighted sum.
//!
//! The loss is evaluated on hard-thresholded, skeletonized volumes and yields a
//! scalar only; there is no gradient path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{
    connected_components, graph_from_skeleton, skeletonize, SkeletonGraph, DEFAULT_RADIUS,
};
use crate::spatial::nearest_distances;
use crate::volume::{binarize, Volume3D, VolumeKind, DEFAULT_TAU};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaslWeights {
    pub lambda_node: f64,
    pub lambda_edge: f64,
    pub lambda_path: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub r: f64,
}

impl Default for TaslWeights {
    fn default() -> Self {
        TaslWeights {
            lambda_node: 1.0,
            lambda_edge: 0.5,
            lambda_path: 0.5,
            epsilon: DEFAULT_EPSILON,
            tau: DEFAULT_TAU,
            r: DEFAULT_RADIUS,
        }
    }
}

impl TaslWeights {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda_node, self.lambda_edge, self.lambda_path];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::param(
                "weights",
                format!("lambdas must be non-negative, got {lambdas:?}"),
            ));
        }
        if lambdas.iter().all(|l| *l == 0.0) {
            return Err(Error::param(
                "weights",
                "at least one lambda must be positive",
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param(
                "eps",
                format!("must be positive, got {}", self.epsilon),
            ));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::param(
                "tau",
                format!("must lie in (0, 1), got {}", self.tau),
            ));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::param(
                "r",
                format!("must be positive, got {}", self.r),
            ));
        }
        Ok(())
    }

    pub fn combine(&self, l_node: f64, l_edge: f64, l_path: f64) -> f64 {
        self.lambda_node * l_node + self.lambda_edge * l_edge + self.lambda_path * l_path
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaslBreakdown {
    pub l_node: f64,
    pub l_edge: f64,
    pub l_path: f64,
    pub total: f64,
    /// Set when the ground-truth graph is empty; all terms are then zero.
    pub degenerate: bool,
}

impl TaslBreakdown {
    fn from_terms(w: &TaslWeights, l_node: f64, l_edge: f64, l_path: f64) -> Self {
        TaslBreakdown {
            l_node,
            l_edge,
            l_path,
            total: w.combine(l_node, l_edge, l_path),
            degenerate: false,
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric mean nearest-neighbour distance between the node sets, halved.
pub fn node_discrepancy(g_pred: &SkeletonGraph, g_gt: &SkeletonGraph) -> Result<f64> {
    if g_pred.is_empty() {
        return Err(Error::EmptyGraph("predicted graph has no nodes"));
    }
    if g_gt.is_empty() {
        return Err(Error::EmptyGraph("ground-truth graph has no nodes"));
    }
    let pred = g_pred.points();
    let gt = g_gt.points();
    let fwd = nearest_distances(&pred, &gt).expect("non-empty");
    let back = nearest_distances(&gt, &pred).expect("non-empty");
    Ok(0.5 * (mean(&fwd) + mean(&back)))
}

/// `| |E_pred| - |E_gt| | / (|E_gt| + eps)`.
pub fn edge_discrepancy(g_pred: &SkeletonGraph, g_gt: &SkeletonGraph, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    Ok(edge_term(g_pred.edge_count(), g_gt.edge_count(), epsilon))
}

pub(crate) fn edge_term(e_pred: usize, e_gt: usize, epsilon: f64) -> f64 {
    (e_pred as f64 - e_gt as f64).abs() / (e_gt as f64 + epsilon)
}

/// Relative difference of the mean connected-component sizes.
pub fn path_discrepancy(g_pred: &SkeletonGraph, g_gt: &SkeletonGraph, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let l_pred = connected_components(g_pred).mean_size();
    let l_gt = connected_components(g_gt).mean_size();
    Ok(path_term(l_pred, l_gt, epsilon))
}

pub(crate) fn path_term(l_pred: f64, l_gt: f64, epsilon: f64) -> f64 {
    (l_pred - l_gt).abs() / (l_gt + epsilon)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "eps",
            format!("must be positive, got {epsilon}"),
        ))
    }
}

/// Diagonal of the axis-aligned bounding box of the graph's nodes.
fn bounding_box_diameter(g: &SkeletonGraph) -> f64 {
    let pts = g.points();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &pts {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..3).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
}

/// Loss between two already-built skeleton graphs.
///
/// An empty ground truth yields an all-zero breakdown flagged `degenerate`. An
/// empty prediction saturates the node term at the ground-truth bounding-box
/// diagonal; the edge and path terms follow their formulas with zero counts.
pub fn tasl_graphs(
    g_pred: &SkeletonGraph,
    g_gt: &SkeletonGraph,
    w: &TaslWeights,
) -> Result<TaslBreakdown> {
    w.validate()?;
    if g_gt.is_empty() {
        return Ok(TaslBreakdown {
            l_node: 0.0,
            l_edge: 0.0,
            l_path: 0.0,
            total: 0.0,
            degenerate: true,
        });
    }
    let l_node = if g_pred.is_empty() {
        bounding_box_diameter(g_gt)
    } else {
        node_discrepancy(g_pred, g_gt)?
    };
    let l_edge = edge_discrepancy(g_pred, g_gt, w.epsilon)?;
    let l_path = path_discrepancy(g_pred, g_gt, w.epsilon)?;
    Ok(TaslBreakdown::from_terms(w, l_node, l_edge, l_path))
}

/// Full pipeline: threshold (for probability maps), skeletonize, build radius
/// graphs, then compare.
pub fn tasl(pred: &Volume3D, gt: &Volume3D, w: &TaslWeights) -> Result<TaslBreakdown> {
    w.validate()?;
    pred.require_same_dims(gt)?;
    let gt_mask = match gt.kind() {
        VolumeKind::Binary => gt.clone(),
        VolumeKind::Probability => {
            return Err(Error::InvalidVolume(
                "ground truth must be a binary mask".into(),
            ))
        }
    };
    let pred_mask = binarize(pred, w.tau)?;
    let g_pred = graph_from_skeleton(&skeletonize(&pred_mask), w.r)?;
    let g_gt = graph_from_skeleton(&skeletonize(&gt_mask), w.r)?;
    tasl_graphs(&g_pred, &g_gt, w)
}
