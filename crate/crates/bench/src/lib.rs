//! Shared inputs for the benchmarks under `benches/`.

use skeltop_core::synth::{generate_tree, rasterize, SynthSpec};
use skeltop_core::{Morphology, Volume3D};

/// A branching tree in a cube of side `side`, with its mask and noisy probability map.
pub fn tree_fixture(seed: u64, side: usize) -> (Morphology, Volume3D, Volume3D) {
    let spec = SynthSpec {
        seed,
        dims: (side, side, side),
        n_branch_points: 4,
        segment_length: (side as f64 / 6.0, side as f64 / 4.0),
        tube_radius: 2.0,
        noise_sigma: 0.05,
        blur_sigma: 0.5,
    };
    let m = generate_tree(&spec).expect("bench tree fits");
    let (mask, prob) = rasterize(&m, &spec).expect("valid spec");
    (m, mask, prob)
}
