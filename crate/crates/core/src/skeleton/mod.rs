//! Skeletonization of binary masks and radius graphs over skeleton voxels.

mod thin;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{dist_sq, HashGrid, Point};
use crate::volume::{Volume3D, VoxelCoord};

pub use thin::skeletonize;

/// Adjacency radius for skeleton graphs, in voxel units.
pub const DEFAULT_RADIUS: f64 = 2.0;

/// Graph over skeleton voxels. Node ids are indices into `nodes`; edges are
/// stored as sorted `(i, j)` pairs with `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    nodes: Vec<VoxelCoord>,
    edges: Vec<(usize, usize)>,
    radius: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    r: f64,
}

impl SkeletonGraph {
    /// Validated constructor: distinct coordinates, no self-loops or duplicate
    /// edges, valid endpoints, every edge no longer than `radius`.
    pub fn new(nodes: Vec<VoxelCoord>, edges: Vec<(usize, usize)>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::param("r", format!("must be positive, got {radius}")));
        }
        let mut sorted_nodes = nodes.clone();
        sorted_nodes.sort_unstable();
        if sorted_nodes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::parse("nodes", "duplicate node coordinates"));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::parse("edges", format!("self-loop on node {a}")));
            }
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::parse(
                    "edges",
                    format!("edge ({a}, {b}) references a missing node"),
                ));
            }
            let (i, j) = (a.min(b), a.max(b));
            if dist_sq(&nodes[i].to_f64(), &nodes[j].to_f64()) > radius * radius {
                return Err(Error::parse(
                    "edges",
                    format!("edge ({i}, {j}) longer than r = {radius}"),
                ));
            }
            norm.push((i, j));
        }
        norm.sort_unstable();
        if norm.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::parse("edges", "duplicate edge"));
        }
        Ok(SkeletonGraph {
            nodes,
            edges: norm,
            radius,
        })
    }

    pub fn nodes(&self) -> &[VoxelCoord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.nodes.iter().map(|n| n.to_f64()).collect()
    }

    /// Induced subgraph without node `id`; remaining ids are shifted down to stay contiguous.
    pub fn without_node(&self, id: usize) -> SkeletonGraph {
        let shift = |k: usize| if k > id { k - 1 } else { k };
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != id)
            .map(|(_, n)| *n)
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|(a, b)| *a != id && *b != id)
            .map(|(a, b)| (shift(*a), shift(*b)))
            .collect();
        SkeletonGraph {
            nodes,
            edges,
            radius: self.radius,
        }
    }

    pub fn to_json(&self) -> String {
        let g = GraphJson {
            nodes: self.nodes.iter().map(|n| [n.z, n.y, n.x]).collect(),
            edges: self.edges.iter().map(|(a, b)| [*a, *b]).collect(),
            r: self.radius,
        };
        serde_json::to_string(&g).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: GraphJson =
            serde_json::from_str(text).map_err(|e| Error::parse("graph", e.to_string()))?;
        SkeletonGraph::new(
            g.nodes.into_iter().map(VoxelCoord::from).collect(),
            g.edges.into_iter().map(|[a, b]| (a, b)).collect(),
            g.r,
        )
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::param("r", format!("must be positive, got {r}")))
    }
}

/// Radius graph over the foreground voxels of `skel`, built with a bucket grid
/// of cell size `r`.
pub fn graph_from_skeleton(skel: &Volume3D, r: f64) -> Result<SkeletonGraph> {
    check_radius(r)?;
    Ok(graph_from_nodes(skel.foreground(), r))
}

/// Radius graph over an explicit node list (coordinates must be distinct).
pub fn graph_from_nodes(nodes: Vec<VoxelCoord>, r: f64) -> SkeletonGraph {
    let points: Vec<Point> = nodes.iter().map(|n| n.to_f64()).collect();
    let edges = HashGrid::new(&points, r).pairs_within(&points, r);
    SkeletonGraph {
        nodes,
        edges,
        radius: r,
    }
}

/// Exhaustive pairwise version of [`graph_from_skeleton`].
pub fn graph_from_skeleton_bruteforce(skel: &Volume3D, r: f64) -> Result<SkeletonGraph> {
    check_radius(r)?;
    let nodes = skel.foreground();
    let r2 = r * r;
    let mut edges = Vec::new();
    for (i, a) in nodes.iter().enumerate() {
        for (j, b) in nodes.iter().enumerate().skip(i + 1) {
            if dist_sq(&a.to_f64(), &b.to_f64()) <= r2 {
                edges.push((i, j));
            }
        }
    }
    Ok(SkeletonGraph {
        nodes,
        edges,
        radius: r,
    })
}

/// Connected components of a graph, each sorted ascending and the list sorted
/// by smallest member.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPartition {
    pub components: Vec<Vec<usize>>,
}

impl ComponentPartition {
    pub fn count(&self) -> usize {
        self.components.len()
    }

    /// Mean number of nodes per component; zero for an empty graph.
    pub fn mean_size(&self) -> f64 {
        if self.components.is_empty() {
            return 0.0;
        }
        let total: usize = self.components.iter().map(Vec::len).sum();
        total as f64 / self.components.len() as f64
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn connected_components(g: &SkeletonGraph) -> ComponentPartition {
    let n = g.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b) in &g.edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            // smaller root wins so labels follow the smallest member
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            parent[hi] = lo;
        }
    }
    let mut slot = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = components.len();
            components.push(Vec::new());
        }
        components[slot[root]].push(i);
    }
    ComponentPartition { components }
}

/// Labels the 26-connected foreground components of a mask. Labels start at 1
/// in flat-index order of each component's first voxel; background is 0.
pub fn label_components_26(mask: &Volume3D) -> (Vec<u32>, usize) {
    let (d, h, w) = mask.dims();
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if mask.data()[start] == 0.0 || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let c = mask.coord(i);
            for dz in -1isize..=1 {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (z, y, x) = (c.z as isize + dz, c.y as isize + dy, c.x as isize + dx);
                        if z < 0
                            || y < 0
                            || x < 0
                            || z >= d as isize
                            || y >= h as isize
                            || x >= w as isize
                        {
                            continue;
                        }
                        let j = (z as usize * h + y as usize) * w + x as usize;
                        if mask.data()[j] != 0.0 && labels[j] == 0 {
                            labels[j] = count;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
    }
    (labels, count as usize)
}

pub fn count_components_26(mask: &Volume3D) -> usize {
    label_components_26(mask).1
}

/// True when some 2x2x2 block of the mask is entirely foreground.
pub fn has_full_block(mask: &Volume3D) -> bool {
    let (d, h, w) = mask.dims();
    for z in 0..d.saturating_sub(1) {
        for y in 0..h.saturating_sub(1) {
            for x in 0..w.saturating_sub(1) {
                let full = (0..8).all(|k| {
                    mask.get(VoxelCoord::new(
                        z + (k >> 2),
                        y + ((k >> 1) & 1),
                        x + (k & 1),
                    )) != 0.0
                });
                if full {
                    return true;
                }
            }
        }
    }
    false
}
