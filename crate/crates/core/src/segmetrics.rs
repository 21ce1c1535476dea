//! Voxel-wise segmentation metrics: precision, recall, F1 and the 95th
//! percentile surface distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{nearest_distances, Point};
use crate::volume::{surface_voxels, Volume3D, VoxelCoord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hd95Mode {
    /// Prediction surface to ground-truth surface only.
    Directed,
    /// Maximum of both directed values.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 as fractions in `[0, 1]`; any 0/0 is 0.
pub fn precision_recall_f1(pred: &Volume3D, gt: &Volume3D) -> Result<Prf> {
    pred.require_same_dims(gt)?;
    let mut c = Counts {
        tp: 0,
        fp: 0,
        fn_: 0,
    };
    for (p, g) in pred.data().iter().zip(gt.data()) {
        match (*p != 0.0, *g != 0.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Prf {
        precision,
        recall,
        f1,
        counts: c,
    })
}

/// Nearest-rank percentile: the `ceil(percent / 100 * n)`-th smallest value.
/// The rank is computed in integers so that e.g. `n = 20` lands exactly on 19.
pub fn nearest_rank(values: &mut [f64], percent: usize) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    let rank = (percent * n).div_ceil(100).clamp(1, n);
    Some(values[rank - 1])
}

fn scaled(v: &[VoxelCoord], spacing: [f64; 3]) -> Vec<Point> {
    v.iter()
        .map(|c| {
            [
                c.z as f64 * spacing[0],
                c.y as f64 * spacing[1],
                c.x as f64 * spacing[2],
            ]
        })
        .collect()
}

/// Directed 95th percentile distance from `from` points to their nearest `to` point.
pub fn hd95_points(from: &[Point], to: &[Point]) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::UndefinedMetric("HD95 needs two non-empty surfaces"));
    }
    let mut d = nearest_distances(from, to).expect("non-empty");
    Ok(nearest_rank(&mut d, 95).expect("non-empty"))
}

/// HD95 between surface voxel sets, in voxel units.
pub fn hd95(pred: &Volume3D, gt: &Volume3D, mode: Hd95Mode) -> Result<f64> {
    hd95_scaled(pred, gt, mode, [1.0; 3])
}

/// HD95 with distances measured in the prediction's physical spacing.
pub fn hd95_physical(pred: &Volume3D, gt: &Volume3D, mode: Hd95Mode) -> Result<f64> {
    hd95_scaled(pred, gt, mode, pred.spacing())
}

fn hd95_scaled(pred: &Volume3D, gt: &Volume3D, mode: Hd95Mode, spacing: [f64; 3]) -> Result<f64> {
    pred.require_same_dims(gt)?;
    let sp = scaled(&surface_voxels(pred), spacing);
    let sg = scaled(&surface_voxels(gt), spacing);
    let fwd = hd95_points(&sp, &sg)?;
    match mode {
        Hd95Mode::Directed => Ok(fwd),
        Hd95Mode::Symmetric => Ok(fwd.max(hd95_points(&sg, &sp)?)),
    }
}

/// Complete voxel-wise report. Percentages are in `[0, 100]`; HD95 values are
/// `None` when either mask is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hd95_directed: Option<f64>,
    pub hd95_symmetric: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

pub fn evaluate_segmentation(pred: &Volume3D, gt: &Volume3D) -> Result<SegReport> {
    let prf = precision_recall_f1(pred, gt)?;
    let sp: Vec<Point> = scaled(&surface_voxels(pred), [1.0; 3]);
    let sg: Vec<Point> = scaled(&surface_voxels(gt), [1.0; 3]);
    let (directed, symmetric) = if sp.is_empty() || sg.is_empty() {
        (None, None)
    } else {
        let fwd = hd95_points(&sp, &sg)?;
        let back = hd95_points(&sg, &sp)?;
        (Some(fwd), Some(fwd.max(back)))
    };
    Ok(SegReport {
        precision: 100.0 * prf.precision,
        recall: 100.0 * prf.recall,
        f1: 100.0 * prf.f1,
        hd95_directed: directed,
        hd95_symmetric: symmetric,
        tp: prf.counts.tp,
        fp: prf.counts.fp,
        fn_: prf.counts.fn_,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeKind;

    fn mask(dims: (usize, usize, usize), vox: &[[usize; 3]]) -> Volume3D {
        Volume3D::from_voxels(dims, vox.iter().map(|v| VoxelCoord::from(*v))).unwrap()
    }

    fn bar(len: usize) -> Vec<[usize; 3]> {
        (0..len).map(|x| [1, 1, x]).collect()
    }

    #[test]
    fn perfect_overlap() {
        let m = mask((3, 3, 10), &bar(8));
        let r = precision_recall_f1(&m, &m).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert_eq!(evaluate_segmentation(&m, &m).unwrap().f1, 100.0);
    }

    #[test]
    fn half_coverage() {
        let gt = mask((3, 3, 10), &bar(8));
        let pred = mask((3, 3, 10), &bar(4));
        let r = precision_recall_f1(&pred, &gt).unwrap();
        assert_eq!(r.precision, 1.0);
        assert_eq!(r.recall, 0.5);
        assert!((100.0 * r.f1 - 66.67).abs() <= 0.01);
    }

    #[test]
    fn disjoint_and_empty() {
        let a = mask((3, 3, 10), &[[0, 0, 0]]);
        let b = mask((3, 3, 10), &[[2, 2, 9]]);
        assert_eq!(precision_recall_f1(&a, &b).unwrap().f1, 0.0);
        let e = Volume3D::zeros((3, 3, 10), VolumeKind::Binary);
        let r = precision_recall_f1(&e, &e).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(matches!(
            hd95(&e, &a, Hd95Mode::Directed),
            Err(Error::UndefinedMetric(_))
        ));
        let rep = evaluate_segmentation(&e, &a).unwrap();
        assert_eq!(rep.hd95_directed, None);
    }

    #[test]
    fn hd95_basic() {
        let m = mask((8, 8, 8), &[[1, 1, 1], [1, 1, 2], [2, 2, 2]]);
        assert_eq!(hd95(&m, &m, Hd95Mode::Directed).unwrap(), 0.0);
        let a = mask((1, 1, 8), &[[0, 0, 1]]);
        let b = mask((1, 1, 8), &[[0, 0, 6]]);
        assert_eq!(hd95(&a, &b, Hd95Mode::Directed).unwrap(), 5.0);
        assert_eq!(hd95(&a, &b, Hd95Mode::Symmetric).unwrap(), 5.0);
    }

    #[test]
    fn nearest_rank_picks_95th_of_100() {
        // 94 points on the target, 6 at distance 10: the 95th smallest is 10
        let gt: Vec<Point> = (0..94).map(|i| [0.0, 0.0, i as f64]).collect();
        let mut pred = gt.clone();
        pred.extend((0..6).map(|i| [10.0, 0.0, i as f64]));
        let mut sorted: Vec<f64> = vec![0.0; 94];
        sorted.extend([10.0; 6]);
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted[(0.95f64 * 100.0).ceil() as usize - 1], 10.0);
        assert_eq!(hd95_points(&pred, &gt).unwrap(), 10.0);
    }

    #[test]
    fn nearest_rank_small_samples() {
        let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 95), Some(19.0));
        assert_eq!(nearest_rank(&mut [3.0], 95), Some(3.0));
        assert_eq!(nearest_rank(&mut [], 95), None);
    }

    #[test]
    fn directed_is_one_way() {
        // prediction is a subset: directed distance is zero, the reverse is not
        let gt = mask((3, 3, 30), &bar(30));
        let pred = mask((3, 3, 30), &bar(3));
        assert_eq!(hd95(&pred, &gt, Hd95Mode::Directed).unwrap(), 0.0);
        assert!(hd95(&pred, &gt, Hd95Mode::Symmetric).unwrap() > 0.0);
    }

    #[test]
    fn physical_units_scale() {
        let a = mask((1, 1, 8), &[[0, 0, 1]]);
        let b = mask((1, 1, 8), &[[0, 0, 6]]);
        let a = a.with_spacing_of([1.0, 1.0, 0.5]).unwrap();
        assert_eq!(hd95_physical(&a, &b, Hd95Mode::Directed).unwrap(), 2.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn to_mask(s: &std::collections::BTreeSet<(usize, usize, usize)>, o: usize) -> Volume3D {
            Volume3D::from_voxels(
                (10, 10, 10),
                s.iter()
                    .map(|(z, y, x)| VoxelCoord::new(z + o, y + o, x + o)),
            )
            .unwrap()
        }

        proptest! {
            #[test]
            fn metric_properties(
                a in prop::collection::btree_set((0usize..7, 0usize..7, 0usize..7), 1..80),
                b in prop::collection::btree_set((0usize..7, 0usize..7, 0usize..7), 1..80),
                off in 0usize..3,
            ) {
                let (ma, mb) = (to_mask(&a, 0), to_mask(&b, 0));
                let ab = precision_recall_f1(&ma, &mb).unwrap();
                let ba = precision_recall_f1(&mb, &ma).unwrap();
                prop_assert_eq!(ab.precision, ba.recall);
                prop_assert_eq!(ab.recall, ba.precision);
                let moved = precision_recall_f1(&to_mask(&a, off), &to_mask(&b, off)).unwrap();
                prop_assert_eq!(moved.f1, ab.f1);

                prop_assert_eq!(hd95(&ma, &ma, Hd95Mode::Directed).unwrap(), 0.0);
                let sym = hd95(&ma, &mb, Hd95Mode::Symmetric).unwrap();
                prop_assert!(sym >= hd95(&ma, &mb, Hd95Mode::Directed).unwrap());
                prop_assert!(sym >= hd95(&mb, &ma, Hd95Mode::Directed).unwrap());
            }
        }
    }
}
