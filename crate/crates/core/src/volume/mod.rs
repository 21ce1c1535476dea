//! Dense 3D scalar volumes.
//!
//! Data is stored depth-major, then row-major: the flat index of `(z, y, x)` is
//! `(z * height + y) * width + x`. All operations here are pure and leave their
//! inputs untouched.

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_volume, write_volume, VolumeFormat};

/// Threshold used to binarize probability maps unless configured otherwise.
pub const DEFAULT_TAU: f64 = 0.5;

/// What the scalar values of a volume mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Probability,
    Binary,
}

/// Integer voxel position. Ordering is lexicographic on `(z, y, x)`, which
/// matches flat-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelCoord {
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl VoxelCoord {
    pub const fn new(z: usize, y: usize, x: usize) -> Self {
        VoxelCoord { z, y, x }
    }

    pub fn to_f64(self) -> [f64; 3] {
        [self.z as f64, self.y as f64, self.x as f64]
    }
}

impl From<[usize; 3]> for VoxelCoord {
    fn from(v: [usize; 3]) -> Self {
        VoxelCoord::new(v[0], v[1], v[2])
    }
}

/// Volume extent as `(depth, height, width)`.
pub type Dims = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: [f64; 3],
    kind: VolumeKind,
    data: Vec<f32>,
}

impl Volume3D {
    /// Builds a volume with unit spacing, validating every invariant.
    pub fn new(dims: Dims, kind: VolumeKind, data: Vec<f32>) -> Result<Self> {
        Self::with_spacing(dims, [1.0; 3], kind, data)
    }

    pub fn with_spacing(
        dims: Dims,
        spacing: [f64; 3],
        kind: VolumeKind,
        data: Vec<f32>,
    ) -> Result<Self> {
        let (d, h, w) = dims;
        if d == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidVolume(format!(
                "dims must be positive, got {d}x{h}x{w}"
            )));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let n = d * h * w;
        if data.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        match kind {
            VolumeKind::Probability => {
                if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::InvalidVolume(format!(
                        "probability value {} at index {i} outside [0, 1]",
                        data[i]
                    )));
                }
            }
            VolumeKind::Binary => {
                if let Some(i) = data.iter().position(|v| *v != 0.0 && *v != 1.0) {
                    return Err(Error::InvalidVolume(format!(
                        "binary value {} at index {i} not in {{0, 1}}",
                        data[i]
                    )));
                }
            }
        }
        Ok(Volume3D {
            dims,
            spacing,
            kind,
            data,
        })
    }

    pub fn zeros(dims: Dims, kind: VolumeKind) -> Self {
        let n = dims.0 * dims.1 * dims.2;
        assert!(n > 0, "volume dims must be positive");
        Volume3D {
            dims,
            spacing: [1.0; 3],
            kind,
            data: vec![0.0; n],
        }
    }

    /// Binary mask with the listed voxels set.
    pub fn from_voxels(dims: Dims, voxels: impl IntoIterator<Item = VoxelCoord>) -> Result<Self> {
        let mut vol = Volume3D::zeros(dims, VolumeKind::Binary);
        for v in voxels {
            if !vol.contains(v) {
                return Err(Error::InvalidVolume(format!(
                    "voxel {v:?} outside volume {dims:?}"
                )));
            }
            let i = vol.index(v);
            vol.data[i] = 1.0;
        }
        Ok(vol)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn with_spacing_of(mut self, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidVolume(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        self.spacing = spacing;
        Ok(self)
    }

    #[inline]
    pub fn contains(&self, v: VoxelCoord) -> bool {
        v.z < self.dims.0 && v.y < self.dims.1 && v.x < self.dims.2
    }

    #[inline]
    pub fn index(&self, v: VoxelCoord) -> usize {
        (v.z * self.dims.1 + v.y) * self.dims.2 + v.x
    }

    #[inline]
    pub fn coord(&self, index: usize) -> VoxelCoord {
        let (_, h, w) = self.dims;
        VoxelCoord::new(index / (h * w), (index / w) % h, index % w)
    }

    #[inline]
    pub fn get(&self, v: VoxelCoord) -> f32 {
        self.data[self.index(v)]
    }

    /// Value at a signed position; anything outside the volume reads as zero.
    #[inline]
    pub fn get_signed(&self, z: isize, y: isize, x: isize) -> f32 {
        let (d, h, w) = self.dims;
        if z < 0 || y < 0 || x < 0 || z as usize >= d || y as usize >= h || x as usize >= w {
            0.0
        } else {
            self.data[(z as usize * h + y as usize) * w + x as usize]
        }
    }

    /// Foreground voxels of a binary volume (any non-zero value counts) in flat-index order.
    pub fn foreground(&self) -> Vec<VoxelCoord> {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| self.coord(i))
            .collect()
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    /// Reinterprets a binary mask as a probability map with values in {0, 1}.
    pub fn as_probability(&self) -> Volume3D {
        Volume3D {
            kind: VolumeKind::Probability,
            ..self.clone()
        }
    }

    /// Same voxels with the given ones cleared.
    pub fn without_voxels(&self, voxels: &[VoxelCoord]) -> Volume3D {
        let mut out = self.clone();
        for v in voxels {
            if out.contains(*v) {
                let i = out.index(*v);
                out.data[i] = 0.0;
            }
        }
        out
    }

    pub(crate) fn from_parts_unchecked(
        dims: Dims,
        spacing: [f64; 3],
        kind: VolumeKind,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), dims.0 * dims.1 * dims.2);
        Volume3D {
            dims,
            spacing,
            kind,
            data,
        }
    }

    pub(crate) fn require_same_dims(&self, other: &Volume3D) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch {
                left: self.dims,
                right: other.dims,
            });
        }
        Ok(())
    }
}

/// Binarizes with a strict comparison: `out[i] = 1` iff `prob[i] > tau`.
///
/// Binary inputs are accepted as well, their values being valid probabilities.
pub fn threshold(prob: &Volume3D, tau: f64) -> Result<Volume3D> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::param(
            "tau",
            format!("must lie in (0, 1), got {tau}"),
        ));
    }
    let data = prob
        .data
        .iter()
        .map(|v| if f64::from(*v) > tau { 1.0 } else { 0.0 })
        .collect();
    Ok(Volume3D::from_parts_unchecked(
        prob.dims,
        prob.spacing,
        VolumeKind::Binary,
        data,
    ))
}

/// Hard mask for a volume of either kind; binary inputs pass through unchanged.
pub fn binarize(vol: &Volume3D, tau: f64) -> Result<Volume3D> {
    match vol.kind {
        VolumeKind::Binary => Ok(vol.clone()),
        VolumeKind::Probability => threshold(vol, tau),
    }
}

pub(crate) const FACE_OFFSETS: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Foreground voxels with at least one 6-neighbour that is background or
/// outside the volume, in flat-index order.
pub fn surface_voxels(mask: &Volume3D) -> Vec<VoxelCoord> {
    mask.data
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .filter_map(|(i, _)| {
            let c = mask.coord(i);
            let (z, y, x) = (c.z as isize, c.y as isize, c.x as isize);
            FACE_OFFSETS
                .iter()
                .any(|o| mask.get_signed(z + o[0], y + o[1], x + o[2]) == 0.0)
                .then_some(c)
        })
        .collect()
}
