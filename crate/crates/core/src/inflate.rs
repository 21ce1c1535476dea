//! Lifting 2D convolution kernels to 3D, plus direct reference convolutions
//! used to check what the lifted kernels compute.
//!
//! Kernels are stored as flat `f64` arrays in `(c_out, c_in, [k_d,] k_h, k_w)`
//! order. Fields are `(channels, [depth,] height, width)`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume3D;

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    shape: [usize; 4],
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel3D {
    shape: [usize; 5],
    weights: Vec<f64>,
}

fn check_weights(shape: &[usize], weights: &[f64]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::param(
            "shape",
            format!("all extents must be positive, got {shape:?}"),
        ));
    }
    let n: usize = shape.iter().product();
    if weights.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::param("weights", "must be finite"));
    }
    Ok(())
}

impl Kernel2D {
    pub fn new(shape: [usize; 4], weights: Vec<f64>) -> Result<Self> {
        check_weights(&shape, &weights)?;
        Ok(Kernel2D { shape, weights })
    }

    /// `(c_out, c_in, k_h, k_w)`
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Kernel3D {
    pub fn new(shape: [usize; 5], weights: Vec<f64>) -> Result<Self> {
        check_weights(&shape, &weights)?;
        Ok(Kernel3D { shape, weights })
    }

    /// `(c_out, c_in, k_d, k_h, k_w)`
    pub fn shape(&self) -> [usize; 5] {
        self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    fn at(&self, o: usize, c: usize, t: usize, i: usize, j: usize) -> f64 {
        let [_, ci, kd, kh, kw] = self.shape;
        self.weights[(((o * ci + c) * kd + t) * kh + i) * kw + j]
    }

    /// Sum over the depth axis, giving back a 2D kernel.
    pub fn depth_sum(&self) -> Kernel2D {
        let [co, ci, kd, kh, kw] = self.shape;
        let mut out = vec![0.0; co * ci * kh * kw];
        for o in 0..co {
            for c in 0..ci {
                for t in 0..kd {
                    for i in 0..kh {
                        for j in 0..kw {
                            out[((o * ci + c) * kh + i) * kw + j] += self.at(o, c, t, i, j);
                        }
                    }
                }
            }
        }
        Kernel2D {
            shape: [co, ci, kh, kw],
            weights: out,
        }
    }

    /// Depth slice `t` as a 2D kernel.
    pub fn slice(&self, t: usize) -> Kernel2D {
        let [co, ci, _, kh, kw] = self.shape;
        let mut out = Vec::with_capacity(co * ci * kh * kw);
        for o in 0..co {
            for c in 0..ci {
                for i in 0..kh {
                    for j in 0..kw {
                        out.push(self.at(o, c, t, i, j));
                    }
                }
            }
        }
        Kernel2D {
            shape: [co, ci, kh, kw],
            weights: out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InflationMode {
    Center,
    Average,
}

fn check_depth(k_d: usize) -> Result<()> {
    if k_d < 1 {
        return Err(Error::param("kd", "kernel depth must be at least 1"));
    }
    Ok(())
}

fn inflate_with(k: &Kernel2D, k_d: usize, slice_scale: impl Fn(usize) -> f64) -> Kernel3D {
    let [co, ci, kh, kw] = k.shape;
    let plane = kh * kw;
    let mut weights = Vec::with_capacity(co * ci * k_d * plane);
    for oc in 0..co * ci {
        let src = &k.weights[oc * plane..(oc + 1) * plane];
        for t in 0..k_d {
            let s = slice_scale(t);
            weights.extend(src.iter().map(|w| if s == 0.0 { 0.0 } else { w * s }));
        }
    }
    Kernel3D {
        shape: [co, ci, k_d, kh, kw],
        weights,
    }
}

/// Places the 2D kernel in depth slice `k_d / 2`; every other slice is zero.
pub fn inflate_center(k: &Kernel2D, k_d: usize) -> Result<Kernel3D> {
    check_depth(k_d)?;
    let c = k_d / 2;
    Ok(inflate_with(k, k_d, |t| if t == c { 1.0 } else { 0.0 }))
}

/// Replicates the 2D kernel into every depth slice, scaled by `1 / k_d`.
pub fn inflate_average(k: &Kernel2D, k_d: usize) -> Result<Kernel3D> {
    check_depth(k_d)?;
    let [co, ci, kh, kw] = k.shape;
    let inv = k_d as f64;
    let plane = kh * kw;
    let mut weights = Vec::with_capacity(co * ci * k_d * plane);
    for oc in 0..co * ci {
        let src = &k.weights[oc * plane..(oc + 1) * plane];
        for _ in 0..k_d {
            weights.extend(src.iter().map(|w| w / inv));
        }
    }
    Ok(Kernel3D {
        shape: [co, ci, k_d, kh, kw],
        weights,
    })
}

pub fn inflate(k: &Kernel2D, k_d: usize, mode: InflationMode) -> Result<Kernel3D> {
    match mode {
        InflationMode::Center => inflate_center(k, k_d),
        InflationMode::Average => inflate_average(k, k_d),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field3D {
    pub channels: usize,
    pub depth: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Field2D {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::SizeMismatch {
                expected: channels * height * width,
                actual: data.len(),
            });
        }
        Ok(Field2D {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

impl Field3D {
    pub fn new(
        channels: usize,
        depth: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != channels * depth * height * width {
            return Err(Error::SizeMismatch {
                expected: channels * depth * height * width,
                actual: data.len(),
            });
        }
        Ok(Field3D {
            channels,
            depth,
            height,
            width,
            data,
        })
    }

    /// Volume replicated into `channels` identical channels.
    pub fn from_volume(vol: &Volume3D, channels: usize) -> Self {
        let (d, h, w) = vol.dims();
        let one: Vec<f64> = vol.data().iter().map(|v| f64::from(*v)).collect();
        let data = (0..channels).flat_map(|_| one.iter().copied()).collect();
        Field3D {
            channels,
            depth: d,
            height: h,
            width: w,
            data,
        }
    }

    #[inline]
    pub fn at(&self, c: usize, z: usize, y: usize, x: usize) -> f64 {
        self.data[((c * self.depth + z) * self.height + y) * self.width + x]
    }

    /// Depth slice `z` across all channels.
    pub fn slice(&self, z: usize) -> Field2D {
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(self.channels * plane);
        for c in 0..self.channels {
            let start = (c * self.depth + z) * plane;
            data.extend_from_slice(&self.data[start..start + plane]);
        }
        Field2D {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }
}

/// Output extent along one axis with `k / 2` zero padding on both sides.
fn out_len(n: usize, k: usize, stride: usize) -> Option<usize> {
    let padded = n + 2 * (k / 2);
    (padded >= k).then(|| (padded - k) / stride + 1)
}

fn check_stride(strides: &[usize]) -> Result<()> {
    if strides.contains(&0) {
        return Err(Error::param("stride", "must be positive"));
    }
    Ok(())
}

/// Direct 2D cross-correlation with half-kernel zero padding.
pub fn conv2d(img: &Field2D, k: &Kernel2D, stride: usize) -> Result<Field2D> {
    check_stride(&[stride])?;
    let [co, ci, kh, kw] = k.shape;
    if img.channels != ci {
        return Err(Error::LengthMismatch {
            what: "input channels",
            expected: ci,
            actual: img.channels,
        });
    }
    let (oh, ow) = match (
        out_len(img.height, kh, stride),
        out_len(img.width, kw, stride),
    ) {
        (Some(a), Some(b)) if a > 0 && b > 0 => (a, b),
        _ => return Err(Error::param("kernel", "output would be empty")),
    };
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    let plane = oh * ow;
    let mut data = vec![0.0; co * plane];
    data.par_chunks_mut(plane).enumerate().for_each(|(o, out)| {
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for c in 0..ci {
                    for i in 0..kh {
                        let sy = (y * stride) as isize - ph + i as isize;
                        if sy < 0 || sy >= img.height as isize {
                            continue;
                        }
                        for j in 0..kw {
                            let sx = (x * stride) as isize - pw + j as isize;
                            if sx < 0 || sx >= img.width as isize {
                                continue;
                            }
                            acc += k.weights[((o * ci + c) * kh + i) * kw + j]
                                * img.at(c, sy as usize, sx as usize);
                        }
                    }
                }
                out[y * ow + x] = acc;
            }
        }
    });
    Ok(Field2D {
        channels: co,
        height: oh,
        width: ow,
        data,
    })
}

/// Direct 3D cross-correlation with half-kernel zero padding on every axis.
pub fn conv3d(vol: &Field3D, k: &Kernel3D, stride: [usize; 3]) -> Result<Field3D> {
    check_stride(&stride)?;
    let [co, ci, kd, kh, kw] = k.shape;
    if vol.channels != ci {
        return Err(Error::LengthMismatch {
            what: "input channels",
            expected: ci,
            actual: vol.channels,
        });
    }
    let dims = (
        out_len(vol.depth, kd, stride[0]),
        out_len(vol.height, kh, stride[1]),
        out_len(vol.width, kw, stride[2]),
    );
    let (od, oh, ow) = match dims {
        (Some(a), Some(b), Some(c)) if a > 0 && b > 0 && c > 0 => (a, b, c),
        _ => return Err(Error::param("kernel", "output would be empty")),
    };
    let (pd, ph, pw) = ((kd / 2) as isize, (kh / 2) as isize, (kw / 2) as isize);
    let cube = od * oh * ow;
    let mut data = vec![0.0; co * cube];
    data.par_chunks_mut(cube).enumerate().for_each(|(o, out)| {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..ci {
                        for t in 0..kd {
                            let sz = (z * stride[0]) as isize - pd + t as isize;
                            if sz < 0 || sz >= vol.depth as isize {
                                continue;
                            }
                            for i in 0..kh {
                                let sy = (y * stride[1]) as isize - ph + i as isize;
                                if sy < 0 || sy >= vol.height as isize {
                                    continue;
                                }
                                for j in 0..kw {
                                    let sx = (x * stride[2]) as isize - pw + j as isize;
                                    if sx < 0 || sx >= vol.width as isize {
                                        continue;
                                    }
                                    acc += k.at(o, c, t, i, j)
                                        * vol.at(c, sz as usize, sy as usize, sx as usize);
                                }
                            }
                        }
                    }
                    out[(z * oh + y) * ow + x] = acc;
                }
            }
        }
    });
    Ok(Field3D {
        channels: co,
        depth: od,
        height: oh,
        width: ow,
        data,
    })
}

/// Residuals of the equivalences the two inflation schemes should satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationResiduals {
    /// max |conv3d(vol, center)[t] - conv2d(vol[t], k)| over every output depth.
    pub center_slice_max_abs: f64,
    /// Same comparison for the average kernel on a depth-constant copy of the
    /// input's middle slice, restricted to interior output depths.
    pub average_interior_max_abs: f64,
    /// max |depth_sum(center) - k|.
    pub center_mass_max_abs: f64,
    /// max |depth_sum(average) - k|.
    pub average_mass_max_abs: f64,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn output_slice(f: &Field3D, z: usize) -> Vec<f64> {
    f.slice(z).data
}

/// Checks both inflations of `k` at depth `k_d` against slice-wise 2D
/// convolution of `vol` (stride 1). `vol` is replicated over the kernel's input channels.
pub fn verify_inflation(k: &Kernel2D, k_d: usize, vol: &Field3D) -> Result<InflationResiduals> {
    check_depth(k_d)?;
    let center = inflate_center(k, k_d)?;
    let average = inflate_average(k, k_d)?;

    let out3 = conv3d(vol, &center, [1, 1, 1])?;
    let mut center_res = 0.0f64;
    for t in 0..vol.depth {
        let out2 = conv2d(&vol.slice(t), k, 1)?;
        center_res = center_res.max(max_abs_diff(&output_slice(&out3, t), &out2.data));
    }

    let mid = vol.slice(vol.depth / 2);
    let mut constant = Vec::with_capacity(vol.data.len());
    for c in 0..vol.channels {
        let plane = &mid.data[c * mid.height * mid.width..(c + 1) * mid.height * mid.width];
        for _ in 0..vol.depth {
            constant.extend_from_slice(plane);
        }
    }
    let constant = Field3D::new(vol.channels, vol.depth, vol.height, vol.width, constant)?;
    let out_avg = conv3d(&constant, &average, [1, 1, 1])?;
    let reference = conv2d(&mid, k, 1)?;
    let half = k_d / 2;
    let mut avg_res = 0.0f64;
    if vol.depth > 2 * half {
        for t in half..vol.depth - half {
            avg_res = avg_res.max(max_abs_diff(&output_slice(&out_avg, t), &reference.data));
        }
    }

    Ok(InflationResiduals {
        center_slice_max_abs: center_res,
        average_interior_max_abs: avg_res,
        center_mass_max_abs: max_abs_diff(&center.depth_sum().weights, &k.weights),
        average_mass_max_abs: max_abs_diff(&average.depth_sum().weights, &k.weights),
    })
}

/// Dense tensor as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TensorDtype {
    F32,
    F64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorHeader {
    shape: Vec<usize>,
    dtype: TensorDtype,
    data_file: String,
}

impl From<Kernel2D> for Tensor {
    fn from(k: Kernel2D) -> Self {
        Tensor {
            shape: k.shape.to_vec(),
            data: k.weights,
        }
    }
}

impl From<Kernel3D> for Tensor {
    fn from(k: Kernel3D) -> Self {
        Tensor {
            shape: k.shape.to_vec(),
            data: k.weights,
        }
    }
}

impl TryFrom<Tensor> for Kernel2D {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        let shape: [usize; 4] = t.shape.as_slice().try_into().map_err(|_| {
            Error::parse(
                "shape",
                format!("expected 4 axes (c_out, c_in, k_h, k_w), got {:?}", t.shape),
            )
        })?;
        Kernel2D::new(shape, t.data)
    }
}

impl TryFrom<Tensor> for Kernel3D {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        let shape: [usize; 5] = t.shape.as_slice().try_into().map_err(|_| {
            Error::parse(
                "shape",
                format!(
                    "expected 5 axes (c_out, c_in, k_d, k_h, k_w), got {:?}",
                    t.shape
                ),
            )
        })?;
        Kernel3D::new(shape, t.data)
    }
}

/// Reads a RawJson tensor sidecar. `f32` payloads are widened to `f64`.
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: TensorHeader =
        serde_json::from_str(&text).map_err(|e| Error::parse("tensor header", e.to_string()))?;
    let data_path = {
        let p = Path::new(&header.data_file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            path.parent().unwrap_or(Path::new(".")).join(p)
        }
    };
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let n: usize = header.shape.iter().product();
    let width = match header.dtype {
        TensorDtype::F32 => 4,
        TensorDtype::F64 => 8,
    };
    if bytes.len() != n * width {
        return Err(Error::SizeMismatch {
            expected: n,
            actual: bytes.len() / width,
        });
    }
    let data = match header.dtype {
        TensorDtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        TensorDtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok(Tensor {
        shape: header.shape,
        data,
    })
}

/// Writes a RawJson tensor with an `f32` payload next to the sidecar.
pub fn write_tensor(t: &Tensor, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::param("path", format!("no file name in {}", path.display())))?;
    let data_name = format!("{stem}.raw");
    let data_path = path.with_file_name(&data_name);
    let header = TensorHeader {
        shape: t.shape.clone(),
        dtype: TensorDtype::F32,
        data_file: data_name,
    };
    let payload: Vec<u8> = t
        .data
        .iter()
        .flat_map(|v| (*v as f32).to_le_bytes())
        .collect();
    fs::write(&data_path, payload).map_err(|e| Error::io(&data_path, e))?;
    let mut text = serde_json::to_string(&header).expect("header serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(rng: &mut ChaCha8Rng, shape: [usize; 4]) -> Kernel2D {
        let n = shape.iter().product();
        Kernel2D::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_field3(rng: &mut ChaCha8Rng, c: usize, d: usize, h: usize, w: usize) -> Field3D {
        Field3D::new(
            c,
            d,
            h,
            w,
            (0..c * d * h * w)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    /// Independent reference: explicit zero-padded copy, then a plain loop.
    fn oracle_conv3d(vol: &Field3D, k: &Kernel3D, s: [usize; 3]) -> Vec<f64> {
        let [co, ci, kd, kh, kw] = k.shape();
        let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
        let (dd, hh, ww) = (vol.depth + 2 * pd, vol.height + 2 * ph, vol.width + 2 * pw);
        let mut padded = vec![0.0; ci * dd * hh * ww];
        for c in 0..ci {
            for z in 0..vol.depth {
                for y in 0..vol.height {
                    for x in 0..vol.width {
                        padded[((c * dd + z + pd) * hh + y + ph) * ww + x + pw] =
                            vol.at(c, z, y, x);
                    }
                }
            }
        }
        let (od, oh, ow) = (
            (dd - kd) / s[0] + 1,
            (hh - kh) / s[1] + 1,
            (ww - kw) / s[2] + 1,
        );
        let mut out = Vec::new();
        for o in 0..co {
            for z in 0..od {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for t in 0..kd {
                                for i in 0..kh {
                                    for j in 0..kw {
                                        acc += k.weights()
                                            [(((o * ci + c) * kd + t) * kh + i) * kw + j]
                                            * padded[((c * dd + z * s[0] + t) * hh + y * s[1] + i)
                                                * ww
                                                + x * s[2]
                                                + j];
                                    }
                                }
                            }
                        }
                        out.push(acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn center_unit_depth_is_reshape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_kernel(&mut rng, [2, 3, 3, 3]);
        let c = inflate_center(&k, 1).unwrap();
        assert_eq!(c.shape(), [2, 3, 1, 3, 3]);
        assert_eq!(c.weights(), k.weights());
        assert_eq!(inflate_average(&k, 1).unwrap(), c);
    }

    #[test]
    fn center_depth_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_kernel(&mut rng, [2, 2, 3, 3]);
        let c = inflate_center(&k, 3).unwrap();
        assert_eq!(c.slice(1), k);
        for t in [0, 2] {
            assert!(c.slice(t).weights().iter().all(|w| *w == 0.0));
        }
        assert_eq!(c.depth_sum(), k);
        // even depth: centre index biased toward the later slice
        let e = inflate_center(&k, 4).unwrap();
        assert_eq!(e.slice(2), k);
    }

    #[test]
    fn average_slices() {
        let k = Kernel2D::new([1, 1, 1, 1], vec![0.7]).unwrap();
        let a = inflate_average(&k, 4).unwrap();
        assert!(a.weights().iter().all(|w| *w == 0.7 / 4.0));
        assert!((a.depth_sum().weights()[0] - 0.7).abs() <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_kernel(&mut rng, [1, 1, 3, 3]);
        let a = inflate_average(&k, 3).unwrap();
        let mut sums = vec![0.0; 9];
        for t in 0..3 {
            for (s, w) in sums.iter_mut().zip(a.slice(t).weights()) {
                *s += w;
            }
        }
        assert!(max_abs_diff(&sums, k.weights()) <= 1e-12);
    }

    #[test]
    fn zero_depth_rejected() {
        let k = Kernel2D::new([1, 1, 1, 1], vec![1.0]).unwrap();
        assert!(inflate_center(&k, 0).is_err());
        assert!(inflate_average(&k, 0).is_err());
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = Field2D::new(1, 5, 6, (0..30).map(|_| rng.gen()).collect()).unwrap();
        let k = Kernel2D::new([1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&img, &k, 1).unwrap(), img);
        let vol = random_field3(&mut rng, 1, 3, 4, 5);
        let k3 = Kernel3D::new([1, 1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv3d(&vol, &k3, [1, 1, 1]).unwrap(), vol);
    }

    #[test]
    fn impulse_response() {
        let mut data = vec![0.0; 49];
        data[3 * 7 + 3] = 1.0;
        let img = Field2D::new(1, 7, 7, data).unwrap();
        let k = Kernel2D::new([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d(&img, &k, 1).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let expected = if (2..=4).contains(&y) && (2..=4).contains(&x) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(out.at(0, y, x), expected);
            }
        }
    }

    #[test]
    fn conv3d_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for stride in [[1, 1, 1], [2, 2, 2], [1, 2, 2]] {
            let vol = random_field3(&mut rng, 2, 5, 7, 6);
            let n = 3 * 2 * 3 * 3 * 3;
            let k = Kernel3D::new(
                [3, 2, 3, 3, 3],
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let fast = conv3d(&vol, &k, stride).unwrap();
            assert!(max_abs_diff(&fast.data, &oracle_conv3d(&vol, &k, stride)) <= 1e-10);
        }
    }

    #[test]
    fn conv2d_matches_oracle_with_stride() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = Field2D::new(
            2,
            9,
            8,
            (0..144).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let k = random_kernel(&mut rng, [3, 2, 3, 3]);
        // a 2D convolution is a 3D one with a unit-depth kernel over a unit-depth volume
        let vol = Field3D::new(2, 1, 9, 8, img.data.clone()).unwrap();
        let k3 = inflate_center(&k, 1).unwrap();
        for s in [1, 2, 4] {
            let a = conv2d(&img, &k, s).unwrap();
            let b = oracle_conv3d(&vol, &k3, [1, s, s]);
            assert!(max_abs_diff(&a.data, &b) <= 1e-10);
        }
    }

    #[test]
    fn stride_two_halves_extent() {
        let img = Field2D::new(1, 32, 32, vec![1.0; 1024]).unwrap();
        let k = Kernel2D::new([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let out = conv2d(&img, &k, 2).unwrap();
        assert_eq!((out.height, out.width), (16, 16));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let img = Field2D::new(2, 3, 3, vec![0.0; 18]).unwrap();
        let k = Kernel2D::new([1, 1, 3, 3], vec![1.0; 9]).unwrap();
        assert!(matches!(
            conv2d(&img, &k, 1),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(conv2d(&Field2D::new(1, 3, 3, vec![0.0; 9]).unwrap(), &k, 0).is_err());
    }

    #[test]
    fn verify_residuals_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = random_kernel(&mut rng, [2, 2, 3, 3]);
        let vol = random_field3(&mut rng, 2, 6, 8, 8);
        for kd in [3, 5] {
            let r = verify_inflation(&k, kd, &vol).unwrap();
            assert!(r.center_slice_max_abs <= 1e-6);
            assert!(r.average_interior_max_abs <= 1e-6);
            assert_eq!(r.center_mass_max_abs, 0.0);
            assert!(r.average_mass_max_abs <= 1e-12);
        }
    }

    #[test]
    fn tensor_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        let k = Kernel2D::new([1, 2, 3, 3], (0..18).map(|i| i as f64 * 0.5).collect()).unwrap();
        write_tensor(&Tensor::from(k.clone()), &path).unwrap();
        let back: Kernel2D = read_tensor(&path).unwrap().try_into().unwrap();
        assert_eq!(back, k);
        let bad: Result<Kernel3D> = read_tensor(&path).unwrap().try_into();
        assert!(bad.is_err());
    }
}
