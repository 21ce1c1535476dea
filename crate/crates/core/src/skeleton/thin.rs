//! Directional parallel thinning of 3D binary masks with sequential re-checking,
//! in the style of Lee, Kashyap & Chu.
//!
//! Each sub-iteration collects border points for one of the six face
//! directions that are simple and not curve endpoints, then deletes them one at
//! a time, re-testing simplicity against the partially thinned image. Deleting
//! only simple points keeps the 26-connected component count; the endpoint
//! guard keeps curve ends from being eroded away.

use crate::volume::{Volume3D, VolumeKind, FACE_OFFSETS};

/// Neighbourhood bit of the centre voxel; bit `(dz+1)*9 + (dy+1)*3 + (dx+1)`
/// holds offset `(dz, dy, dx)`.
const CENTER: usize = 13;

struct Tables {
    /// 26-adjacency between the 26 non-centre cells.
    adj26: [u32; 27],
    /// 6-adjacency between N18 cells, excluding the centre.
    adj6_n18: [u32; 27],
    /// Mask of N18 cells (faces and edges) excluding the centre.
    n18: u32,
    /// Mask of the six face neighbours.
    faces: u32,
}

fn offset_of(i: usize) -> [isize; 3] {
    [
        (i / 9) as isize - 1,
        ((i / 3) % 3) as isize - 1,
        (i % 3) as isize - 1,
    ]
}

fn build_tables() -> Tables {
    let mut adj26 = [0u32; 27];
    let mut adj6_n18 = [0u32; 27];
    let mut n18 = 0u32;
    let mut faces = 0u32;
    for i in 0..27 {
        let a = offset_of(i);
        let nz = a.iter().filter(|c| **c != 0).count();
        if i != CENTER && nz <= 2 {
            n18 |= 1 << i;
        }
        if nz == 1 {
            faces |= 1 << i;
        }
    }
    for i in 0..27 {
        if i == CENTER {
            continue;
        }
        let a = offset_of(i);
        for j in 0..27 {
            if j == CENTER || j == i {
                continue;
            }
            let b = offset_of(j);
            let d: Vec<isize> = (0..3).map(|k| (a[k] - b[k]).abs()).collect();
            if d.iter().all(|v| *v <= 1) {
                adj26[i] |= 1 << j;
                let manhattan: isize = d.iter().sum();
                if manhattan == 1 && (n18 >> i) & 1 == 1 && (n18 >> j) & 1 == 1 {
                    adj6_n18[i] |= 1 << j;
                }
            }
        }
    }
    Tables {
        adj26,
        adj6_n18,
        n18,
        faces,
    }
}

fn tables() -> &'static Tables {
    use std::sync::OnceLock;
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(build_tables)
}

/// Connected components of `set` under `adj`, returned as bitmasks.
fn components(set: u32, adj: &[u32; 27]) -> impl Iterator<Item = u32> + '_ {
    let mut remaining = set;
    std::iter::from_fn(move || {
        if remaining == 0 {
            return None;
        }
        let seed = remaining.trailing_zeros();
        let mut comp = 1u32 << seed;
        let mut frontier = comp;
        while frontier != 0 {
            let i = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let next = adj[i] & set & !comp;
            comp |= next;
            frontier |= next;
        }
        remaining &= !comp;
        Some(comp)
    })
}

/// A point is simple for (26, 6) topology iff its foreground 26-neighbourhood
/// is one 26-component and the background in N18 has exactly one 6-component
/// touching a face neighbour.
pub(crate) fn is_simple(nb: u32) -> bool {
    let t = tables();
    let fg = nb & !(1 << CENTER) & ((1 << 27) - 1);
    if components(fg, &t.adj26).take(2).count() != 1 {
        return false;
    }
    let bg = !nb & t.n18;
    components(bg, &t.adj6_n18)
        .filter(|c| c & t.faces != 0)
        .take(2)
        .count()
        == 1
}

/// Padded occupancy grid; the one-voxel halo is always background.
struct Grid {
    dims: [usize; 3],
    cells: Vec<bool>,
}

impl Grid {
    fn from_volume(vol: &Volume3D) -> Self {
        let (d, h, w) = vol.dims();
        let dims = [d + 2, h + 2, w + 2];
        let mut cells = vec![false; dims[0] * dims[1] * dims[2]];
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    if vol.data()[(z * h + y) * w + x] != 0.0 {
                        cells[((z + 1) * dims[1] + y + 1) * dims[2] + x + 1] = true;
                    }
                }
            }
        }
        Grid { dims, cells }
    }

    #[inline]
    fn offset(&self, dz: isize, dy: isize, dx: isize) -> isize {
        (dz * self.dims[1] as isize + dy) * self.dims[2] as isize + dx
    }

    fn neighbourhood(&self, i: usize) -> u32 {
        let mut nb = 0u32;
        let mut bit = 0;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let j = (i as isize + self.offset(dz, dy, dx)) as usize;
                    if self.cells[j] {
                        nb |= 1 << bit;
                    }
                    bit += 1;
                }
            }
        }
        nb
    }

    fn to_volume(&self, template: &Volume3D) -> Volume3D {
        let (d, h, w) = template.dims();
        let mut data = vec![0.0f32; d * h * w];
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    if self.cells[((z + 1) * self.dims[1] + y + 1) * self.dims[2] + x + 1] {
                        data[(z * h + y) * w + x] = 1.0;
                    }
                }
            }
        }
        Volume3D::from_parts_unchecked(
            template.dims(),
            template.spacing(),
            VolumeKind::Binary,
            data,
        )
    }
}

/// Thins a binary mask to a curve skeleton. Deterministic; the result is a
/// subset of the input with the same number of 26-connected components.
pub fn skeletonize(mask: &Volume3D) -> Volume3D {
    let mut grid = Grid::from_volume(mask);
    let mut fg: Vec<usize> = grid
        .cells
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.then_some(i))
        .collect();

    let face_offsets: Vec<isize> = FACE_OFFSETS
        .iter()
        .map(|o| grid.offset(o[0], o[1], o[2]))
        .collect();

    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for &dir in &face_offsets {
            candidates.clear();
            for &i in &fg {
                if grid.cells[(i as isize + dir) as usize] {
                    continue;
                }
                let nb = grid.neighbourhood(i);
                // endpoint: exactly one foreground neighbour
                if (nb & !(1 << CENTER)).count_ones() == 1 {
                    continue;
                }
                if is_simple(nb) {
                    candidates.push(i);
                }
            }
            for &i in &candidates {
                grid.cells[i] = false;
                if is_simple(grid.neighbourhood(i)) {
                    changed = true;
                } else {
                    grid.cells[i] = true;
                }
            }
            fg.retain(|i| grid.cells[*i]);
        }
        if !changed {
            break;
        }
    }
    grid.to_volume(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb_index(dz: isize, dy: isize, dx: isize) -> usize {
        ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1)) as usize
    }

    fn nb_from(offsets: &[[isize; 3]]) -> u32 {
        let mut nb = 1 << CENTER;
        for o in offsets {
            nb |= 1 << nb_index(o[0], o[1], o[2]);
        }
        nb
    }

    #[test]
    fn table_sizes() {
        let t = tables();
        assert_eq!(t.n18.count_ones(), 18);
        assert_eq!(t.faces.count_ones(), 6);
    }

    #[test]
    fn isolated_point_is_not_simple() {
        assert!(!is_simple(nb_from(&[])));
    }

    #[test]
    fn curve_end_is_simple_middle_is_not() {
        assert!(is_simple(nb_from(&[[0, 0, 1]])));
        assert!(!is_simple(nb_from(&[[0, 0, 1], [0, 0, -1]])));
    }

    #[test]
    fn interior_point_is_not_simple() {
        let all: Vec<[isize; 3]> = (0..27).filter(|i| *i != CENTER).map(offset_of).collect();
        // removing it would create a cavity
        assert!(!is_simple(nb_from(&all)));
    }

    #[test]
    fn corner_of_block_is_simple() {
        let block: Vec<[isize; 3]> = (0..27)
            .map(offset_of)
            .filter(|o| o.iter().all(|c| *c >= 0) && *o != [0, 0, 0])
            .collect();
        assert!(is_simple(nb_from(&block)));
    }

    #[test]
    fn ring_point_is_not_simple() {
        // centre of a flat 3x3 patch: removing it punches a hole
        let plane: Vec<[isize; 3]> = (0..27)
            .map(offset_of)
            .filter(|o| o[0] == 0 && *o != [0, 0, 0])
            .collect();
        assert!(!is_simple(nb_from(&plane)));
    }
}
