//! Seeded synthetic neurites: branching trees, their rasterized masks and
//! noisy probability maps, used as fixtures for metrics and losses.
//!
//! Random streams are ChaCha8 seeded from `seed`: stream 0 drives geometry,
//! stream 1 drives intensity noise, so changing `noise_sigma` never moves the
//! tree.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{dist_sq, Point};
use crate::swc::{Morphology, SwcRecord};
use crate::volume::{Dims, Volume3D, VolumeKind, VoxelCoord};

const GEOMETRY_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const PLACEMENT_ATTEMPTS: usize = 64;
/// Half-angle of the cone that child branches are drawn from, in degrees.
const BRANCH_CONE_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    /// Volume dimensions as (depth, height, width), i.e. (z, y, x).
    pub dims: Dims,
    pub n_branch_points: usize,
    pub segment_length: (f64, f64),
    pub tube_radius: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub blur_sigma: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            dims: (48, 48, 48),
            n_branch_points: 3,
            segment_length: (8.0, 14.0),
            tube_radius: 1.5,
            noise_sigma: 0.0,
            blur_sigma: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.segment_length;
        if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::param(
                "segment_length",
                format!("need 0 < min <= max, got ({lo}, {hi})"),
            ));
        }
        if !(self.tube_radius > 0.0 && self.tube_radius.is_finite()) {
            return Err(Error::param(
                "tube_radius",
                format!("must be positive, got {}", self.tube_radius),
            ));
        }
        for (name, s) in [
            ("noise_sigma", self.noise_sigma),
            ("blur_sigma", self.blur_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::param(name, format!("must be non-negative, got {s}")));
            }
        }
        let (d, h, w) = self.dims;
        if d == 0 || h == 0 || w == 0 {
            return Err(Error::param(
                "dims",
                format!("must be positive, got {d}x{h}x{w}"),
            ));
        }
        Ok(())
    }

    /// Allowed node coordinate range per SWC axis (x, y, z).
    fn bounds(&self) -> Result<[(f64, f64); 3]> {
        let m = self.tube_radius;
        let (d, h, w) = self.dims;
        let mut out = [(0.0, 0.0); 3];
        for (k, n) in [w, h, d].into_iter().enumerate() {
            let hi = n as f64 - 1.0 - m;
            if hi < m {
                return Err(Error::Generation(format!(
                    "dims {:?} leave no room for tube_radius {}",
                    self.dims, self.tube_radius
                )));
            }
            out[k] = (m, hi);
        }
        Ok(out)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

fn add(a: Point, b: Point, t: f64) -> Point {
    [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]]
}

fn unit(v: Point) -> Point {
    let n = dist_sq(&v, &[0.0; 3]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Uniform direction on the spherical cap of half-angle `max_deg` around `axis`.
fn cap_direction(rng: &mut ChaCha8Rng, axis: Point, max_deg: f64) -> Point {
    let cos_min = max_deg.to_radians().cos();
    let c: f64 = rng.gen_range(cos_min..=1.0);
    let s = (1.0 - c * c).max(0.0).sqrt();
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let helper = if axis[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let u = unit(cross(axis, helper));
    let v = cross(axis, u);
    unit([
        c * axis[0] + s * (phi.cos() * u[0] + phi.sin() * v[0]),
        c * axis[1] + s * (phi.cos() * u[1] + phi.sin() * v[1]),
        c * axis[2] + s * (phi.cos() * u[2] + phi.sin() * v[2]),
    ])
}

struct Tip {
    node: usize,
    dir: Point,
}

struct Builder {
    points: Vec<Point>,
    parents: Vec<Option<usize>>,
    bounds: [(f64, f64); 3],
    clearance: f64,
}

impl Builder {
    fn inside(&self, p: &Point) -> bool {
        p.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Nodes of a straight branch from `start`, at most one unit apart,
    /// excluding `start` itself.
    fn branch_points(start: Point, dir: Point, len: f64) -> Vec<Point> {
        let pieces = len.ceil().max(1.0) as usize;
        (1..=pieces)
            .map(|s| add(start, dir, len * s as f64 / pieces as f64))
            .collect()
    }

    /// A branch is accepted when it stays in bounds and, once it is
    /// `clearance` away from its start, keeps that distance from every other node.
    fn fits(&self, start: Point, pts: &[Point]) -> bool {
        let c2 = self.clearance * self.clearance;
        pts.iter().all(|p| {
            self.inside(p)
                && (dist_sq(p, &start) <= c2 || self.points.iter().all(|q| dist_sq(p, q) >= c2))
        })
    }

    fn grow(
        &mut self,
        rng: &mut ChaCha8Rng,
        from: usize,
        axis: Point,
        cone: f64,
        lengths: (f64, f64),
    ) -> Option<Tip> {
        let start = self.points[from];
        for _ in 0..PLACEMENT_ATTEMPTS {
            let dir = cap_direction(rng, axis, cone);
            let len = if lengths.0 < lengths.1 {
                rng.gen_range(lengths.0..=lengths.1)
            } else {
                lengths.0
            };
            let pts = Self::branch_points(start, dir, len);
            if self.fits(start, &pts) {
                let mut prev = from;
                for p in pts {
                    self.points.push(p);
                    self.parents.push(Some(prev));
                    prev = self.points.len() - 1;
                }
                return Some(Tip { node: prev, dir });
            }
        }
        None
    }

    fn into_morphology(self, radius: f64) -> Morphology {
        let records = self
            .points
            .iter()
            .zip(&self.parents)
            .enumerate()
            .map(|(k, (p, parent))| SwcRecord {
                id: k as i64 + 1,
                type_code: if parent.is_none() { 1 } else { 3 },
                x: p[0],
                y: p[1],
                z: p[2],
                radius,
                parent: parent.map_or(-1, |q| q as i64 + 1),
            })
            .collect();
        Morphology::new(records).expect("generated tree is valid")
    }
}

/// Grows a tree across the volume: a trunk aimed through the centre, then `n_branch_points`
/// bifurcations, each splitting a randomly chosen tip into two straight
/// children. Nodes are at most one unit apart along each branch.
pub fn generate_tree(spec: &SynthSpec) -> Result<Morphology> {
    spec.validate()?;
    let bounds = spec.bounds()?;
    let mut rng = spec.rng(GEOMETRY_STREAM);
    let centre = [
        0.5 * (bounds[0].0 + bounds[0].1),
        0.5 * (bounds[1].0 + bounds[1].1),
        0.5 * (bounds[2].0 + bounds[2].1),
    ];
    // root sits behind the centre so the tree grows across the volume
    let axis = cap_direction(&mut rng, [0.0, 0.0, 1.0], 180.0);
    let reach = bounds
        .iter()
        .map(|(lo, hi)| 0.5 * (hi - lo))
        .fold(f64::INFINITY, f64::min);
    let root = add(centre, axis, -0.5 * reach);
    let mut b = Builder {
        points: vec![root],
        parents: vec![None],
        bounds,
        clearance: 2.0 * spec.tube_radius + 2.0,
    };
    let infeasible = |what: &str| {
        Error::Generation(format!(
            "could not place {what} after {PLACEMENT_ATTEMPTS} attempts; dims {:?} too small for segment_length {:?}",
            spec.dims, spec.segment_length
        ))
    };
    let trunk = b
        .grow(&mut rng, 0, axis, 0.0, spec.segment_length)
        .ok_or_else(|| infeasible("trunk"))?;
    let mut tips = vec![trunk];
    for k in 0..spec.n_branch_points {
        let mut placed = false;
        // try tips in random order until one accepts two children
        let mut order: Vec<usize> = (0..tips.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for t in order {
            let snapshot = (b.points.len(), b.parents.len());
            let (node, dir) = (tips[t].node, tips[t].dir);
            let first = b.grow(&mut rng, node, dir, BRANCH_CONE_DEG, spec.segment_length);
            let second = first
                .as_ref()
                .and_then(|_| b.grow(&mut rng, node, dir, BRANCH_CONE_DEG, spec.segment_length));
            match (first, second) {
                (Some(a), Some(c)) => {
                    tips.swap_remove(t);
                    tips.push(a);
                    tips.push(c);
                    placed = true;
                    break;
                }
                _ => {
                    b.points.truncate(snapshot.0);
                    b.parents.truncate(snapshot.1);
                }
            }
        }
        if !placed {
            return Err(infeasible(&format!("branch point {}", k + 1)));
        }
    }
    Ok(b.into_morphology(spec.tube_radius))
}

/// Voxel holding an SWC position (x, y, z), clamped into the volume.
pub fn voxel_of(p: Point, dims: Dims) -> VoxelCoord {
    let snap = |v: f64, n: usize| (v.round().max(0.0) as usize).min(n - 1);
    VoxelCoord::new(snap(p[2], dims.0), snap(p[1], dims.1), snap(p[0], dims.2))
}

fn segment_dist_sq(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let len2 = dist_sq(&ab, &[0.0; 3]);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1] + (p[2] - a[2]) * ab[2]) / len2)
            .clamp(0.0, 1.0)
    };
    dist_sq(&p, &add(a, ab, t))
}

/// Binary mask of every voxel centre within `radius` of a segment (or of an
/// isolated root), with all node voxels forced on.
pub fn rasterize_mask(m: &Morphology, dims: Dims, radius: f64) -> Volume3D {
    let recs = m.records();
    let mut pieces: Vec<(Point, Point)> = m
        .segments()
        .into_iter()
        .map(|(p, c)| (recs[p].position(), recs[c].position()))
        .collect();
    if pieces.is_empty() {
        pieces.extend(recs.iter().map(|r| (r.position(), r.position())));
    }
    let r2 = radius * radius;
    let (d, h, w) = dims;
    let mut data = vec![0.0f32; d * h * w];
    for (a, b) in pieces {
        let lo = |k: usize| (a[k].min(b[k]) - radius).floor().max(0.0) as usize;
        let hi =
            |k: usize, n: usize| ((a[k].max(b[k]) + radius).ceil().max(0.0) as usize).min(n - 1);
        for z in lo(2)..=hi(2, d) {
            for y in lo(1)..=hi(1, h) {
                for x in lo(0)..=hi(0, w) {
                    if segment_dist_sq([x as f64, y as f64, z as f64], a, b) <= r2 {
                        data[(z * h + y) * w + x] = 1.0;
                    }
                }
            }
        }
    }
    for r in recs {
        let v = voxel_of(r.position(), dims);
        data[(v.z * h + v.y) * w + v.x] = 1.0;
    }
    Volume3D::new(dims, VolumeKind::Binary, data).expect("binary by construction")
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian blur with zero padding.
fn blur(data: &[f64], dims: Dims, sigma: f64) -> Vec<f64> {
    let taps = gaussian_taps(sigma);
    let half = (taps.len() / 2) as i64;
    let (d, h, w) = dims;
    let strides = [h * w, w, 1];
    let extents = [d, h, w];
    let mut cur = data.to_vec();
    for axis in 0..3 {
        let mut next = vec![0.0; cur.len()];
        for (i, out) in next.iter_mut().enumerate() {
            let pos = (i / strides[axis] % extents[axis]) as i64;
            let mut acc = 0.0;
            for (t, wt) in taps.iter().enumerate() {
                let q = pos + t as i64 - half;
                if q >= 0 && q < extents[axis] as i64 {
                    acc += wt * cur[(i as i64 + (q - pos) * strides[axis] as i64) as usize];
                }
            }
            *out = acc;
        }
        cur = next;
    }
    cur
}

/// Mask plus a probability map: the mask blurred by `blur_sigma`, with
/// additive Gaussian noise of `noise_sigma`, clamped to `[0, 1]`.
pub fn rasterize(m: &Morphology, spec: &SynthSpec) -> Result<(Volume3D, Volume3D)> {
    spec.validate()?;
    let mask = rasterize_mask(m, spec.dims, spec.tube_radius);
    let mut prob: Vec<f64> = mask.data().iter().map(|v| f64::from(*v)).collect();
    if spec.blur_sigma > 0.0 {
        prob = blur(&prob, spec.dims, spec.blur_sigma);
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::param("noise_sigma", e.to_string()))?;
        let mut rng = spec.rng(NOISE_STREAM);
        prob.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    let data = prob.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    let prob = Volume3D::new(spec.dims, VolumeKind::Probability, data)?;
    Ok((mask, prob))
}

/// Tree whose nodes sit on even lattice coordinates, consecutive nodes
/// exactly 2 apart along an axis, and no two non-adjacent nodes within 2 of
/// each other. Its radius-2 graph is the tree itself, and as a mask every node
/// is an isolated voxel, so thinning leaves it unchanged.
pub fn generate_lattice_tree(spec: &SynthSpec) -> Result<Morphology> {
    spec.validate()?;
    let mut rng = spec.rng(GEOMETRY_STREAM);
    let (d, h, w) = spec.dims;
    let even_max = |n: usize| -> i64 { (n as i64 - 1) & !1 };
    let hi = [even_max(w), even_max(h), even_max(d)];
    if hi.iter().any(|v| *v < 4) {
        return Err(Error::Generation(format!(
            "dims {:?} too small for a lattice tree",
            spec.dims
        )));
    }
    let dirs: [[i64; 3]; 6] = [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ];
    let mut occupied = std::collections::HashSet::new();
    let centre = [(hi[0] / 2) & !1, (hi[1] / 2) & !1, (hi[2] / 2) & !1];
    let mut pts: Vec<[i64; 3]> = vec![centre];
    let mut parents: Vec<Option<usize>> = vec![None];
    occupied.insert(centre);
    let steps = |rng: &mut ChaCha8Rng| -> usize {
        let (lo, hi) = spec.segment_length;
        let len = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        ((len / 2.0).round() as usize).max(1)
    };

    // one straight run of dots from `from`; None (and nothing placed) if blocked
    let run = |pts: &mut Vec<[i64; 3]>,
               parents: &mut Vec<Option<usize>>,
               occupied: &mut std::collections::HashSet<[i64; 3]>,
               from: usize,
               dir: [i64; 3],
               n: usize|
     -> Option<usize> {
        let mut cand = Vec::with_capacity(n);
        let mut cur = pts[from];
        for _ in 0..n {
            let next = [
                cur[0] + 2 * dir[0],
                cur[1] + 2 * dir[1],
                cur[2] + 2 * dir[2],
            ];
            if next.iter().zip(&hi).any(|(v, m)| *v < 0 || v > m) || occupied.contains(&next) {
                return None;
            }
            // only the predecessor may be a lattice neighbour
            let crowded = dirs.iter().any(|e| {
                let q = [next[0] + 2 * e[0], next[1] + 2 * e[1], next[2] + 2 * e[2]];
                q != cur && (occupied.contains(&q) || cand.contains(&q))
            });
            if crowded {
                return None;
            }
            cand.push(next);
            cur = next;
        }
        let mut prev = from;
        for p in cand {
            occupied.insert(p);
            pts.push(p);
            parents.push(Some(prev));
            prev = pts.len() - 1;
        }
        Some(prev)
    };

    let mut tips: Vec<(usize, usize)> = Vec::new();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let k = rng.gen_range(0..6);
        let n = steps(&mut rng);
        if let Some(t) = run(&mut pts, &mut parents, &mut occupied, 0, dirs[k], n) {
            tips.push((t, k));
            break;
        }
    }
    if tips.is_empty() {
        return Err(Error::Generation("could not place lattice trunk".into()));
    }
    for b in 0..spec.n_branch_points {
        let mut placed = false;
        'attempt: for _ in 0..PLACEMENT_ATTEMPTS {
            let t = rng.gen_range(0..tips.len());
            let (node, dir) = tips[t];
            // children go anywhere except straight back
            let back = dir ^ 1;
            let mut options: Vec<usize> = (0..6).filter(|k| *k != back).collect();
            for i in (1..options.len()).rev() {
                options.swap(i, rng.gen_range(0..=i));
            }
            let snapshot = pts.len();
            let (n1, n2) = (steps(&mut rng), steps(&mut rng));
            if let Some(a) = run(
                &mut pts,
                &mut parents,
                &mut occupied,
                node,
                dirs[options[0]],
                n1,
            ) {
                if let Some(c) = run(
                    &mut pts,
                    &mut parents,
                    &mut occupied,
                    node,
                    dirs[options[1]],
                    n2,
                ) {
                    tips.swap_remove(t);
                    tips.push((a, options[0]));
                    tips.push((c, options[1]));
                    placed = true;
                    break 'attempt;
                }
                for p in pts.drain(snapshot..) {
                    occupied.remove(&p);
                }
                parents.truncate(snapshot);
            }
        }
        if !placed {
            return Err(Error::Generation(format!(
                "could not place lattice branch point {}",
                b + 1
            )));
        }
    }
    let records = pts
        .iter()
        .zip(&parents)
        .enumerate()
        .map(|(k, (p, parent))| SwcRecord {
            id: k as i64 + 1,
            type_code: if parent.is_none() { 1 } else { 3 },
            x: p[0] as f64,
            y: p[1] as f64,
            z: p[2] as f64,
            radius: 0.5,
            parent: parent.map_or(-1, |q| q as i64 + 1),
        })
        .collect();
    Morphology::new(records)
}

/// Mask with exactly the node voxels of `m` set.
pub fn node_mask(m: &Morphology, dims: Dims) -> Result<Volume3D> {
    Volume3D::from_voxels(dims, m.points().into_iter().map(|p| voxel_of(p, dims)))
}

/// Twenty named test shapes: straight tubes, L-bends, Y-branches and blobs.
pub fn shape_corpus(seed: u64) -> Vec<(String, Volume3D)> {
    let dims = (28, 28, 28);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let chain = |pts: &[Point]| -> Morphology {
        let records = pts
            .iter()
            .enumerate()
            .map(|(k, p)| SwcRecord {
                id: k as i64 + 1,
                type_code: 3,
                x: p[0],
                y: p[1],
                z: p[2],
                radius: 1.0,
                parent: if k == 0 { -1 } else { k as i64 },
            })
            .collect();
        Morphology::new(records).expect("valid chain")
    };
    let jitter = |rng: &mut ChaCha8Rng| -> Point {
        [
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        ]
    };
    for k in 0..5 {
        let j = jitter(&mut rng);
        let a = add([5.0, 14.0, 14.0], j, 1.0);
        let b = add([22.0, 14.0 + 2.0 * k as f64 - 4.0, 14.0 - j[1]], j, 1.0);
        let r = 1.0 + 0.5 * k as f64;
        out.push((
            format!("tube-{k}"),
            rasterize_mask(&chain(&[a, b]), dims, r),
        ));
    }
    for k in 0..5 {
        let j = jitter(&mut rng);
        let pts = [
            add([5.0, 6.0, 14.0], j, 1.0),
            add([18.0, 6.0, 14.0], j, 1.0),
            add([18.0, 22.0, 14.0 + k as f64], j, 1.0),
        ];
        out.push((
            format!("lbend-{k}"),
            rasterize_mask(&chain(&pts), dims, 1.0 + 0.4 * k as f64),
        ));
    }
    for k in 0..5 {
        let spec = SynthSpec {
            seed: seed.wrapping_add(k),
            dims,
            n_branch_points: 1,
            segment_length: (6.0, 9.0),
            tube_radius: 1.0 + 0.25 * k as f64,
            ..SynthSpec::default()
        };
        let m = generate_tree(&spec).expect("corpus tree fits");
        out.push((
            format!("ybranch-{k}"),
            rasterize_mask(&m, dims, spec.tube_radius),
        ));
    }
    for k in 0..5 {
        let mut data = vec![0.0f32; dims.0 * dims.1 * dims.2];
        let balls: Vec<(Point, f64)> = (0..3 + k)
            .map(|_| {
                let c = [
                    rng.gen_range(9.0..19.0),
                    rng.gen_range(9.0..19.0),
                    rng.gen_range(9.0..19.0),
                ];
                (c, rng.gen_range(2.5..5.0))
            })
            .collect();
        for (i, v) in data.iter_mut().enumerate() {
            let p = [
                (i % dims.2) as f64,
                (i / dims.2 % dims.1) as f64,
                (i / (dims.1 * dims.2)) as f64,
            ];
            if balls.iter().any(|(c, r)| dist_sq(&p, c) <= r * r) {
                *v = 1.0;
            }
        }
        out.push((
            format!("blob-{k}"),
            Volume3D::new(dims, VolumeKind::Binary, data).expect("binary"),
        ));
    }
    out
}
