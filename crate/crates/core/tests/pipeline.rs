use skeltop_core::segmetrics::evaluate_segmentation;
use skeltop_core::skeleton::{connected_components, graph_from_skeleton, SkeletonGraph};
use skeltop_core::swc::{parse_swc, resample, write_swc};
use skeltop_core::synth::{generate_tree, rasterize, rasterize_mask, SynthSpec};
use skeltop_core::tasl::{tasl, TaslWeights};
use skeltop_core::tracemetrics::{evaluate_trace, EsaMode, TraceOptions};
use skeltop_core::volume::{read_volume, threshold, write_volume, VolumeFormat};
use skeltop_core::{skeletonize, VolumeKind};

fn spec(seed: u64) -> SynthSpec {
    SynthSpec {
        seed,
        dims: (36, 36, 36),
        n_branch_points: 2,
        segment_length: (6.0, 9.0),
        tube_radius: 1.5,
        noise_sigma: 0.05,
        blur_sigma: 0.5,
    }
}

#[test]
fn volumes_survive_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(1);
    let (mask, prob) = rasterize(&generate_tree(&s).unwrap(), &s).unwrap();
    for (name, fmt) in [
        ("v.json", VolumeFormat::RawJson),
        ("v.nrrd", VolumeFormat::Nrrd),
    ] {
        for vol in [&mask, &prob] {
            let path = dir.path().join(name);
            write_volume(vol, &path, fmt).unwrap();
            assert_eq!(&read_volume(&path, fmt).unwrap(), vol, "{name}");
        }
    }
}

#[test]
fn thresholded_probability_scores_like_the_mask() {
    let s = spec(2);
    let (mask, prob) = rasterize(&generate_tree(&s).unwrap(), &s).unwrap();
    let pred = threshold(&prob, 0.5).unwrap();
    let rep = evaluate_segmentation(&pred, &mask).unwrap();
    assert!(rep.f1 >= 99.0, "{rep:?}");
    assert!(rep.hd95_symmetric.unwrap() <= 1.0);
    let w = TaslWeights::default();
    let b = tasl(&prob, &mask, &w).unwrap();
    assert!(!b.degenerate);
    assert!((b.total - w.combine(b.l_node, b.l_edge, b.l_path)).abs() < 1e-12);
}

#[test]
fn skeleton_of_a_tree_is_one_graph_component() {
    for seed in 0..10 {
        let s = spec(seed);
        let mask = rasterize_mask(&generate_tree(&s).unwrap(), s.dims, s.tube_radius);
        let g: SkeletonGraph = graph_from_skeleton(&skeletonize(&mask), 2.0).unwrap();
        assert_eq!(connected_components(&g).count(), 1, "seed {seed}");
        assert_eq!(skeletonize(&mask).kind(), VolumeKind::Binary);
    }
}

#[test]
fn trace_metrics_after_resampling() {
    let s = spec(3);
    let m = generate_tree(&s).unwrap();
    let coarse = parse_swc(&write_swc(&m)).unwrap();
    let fine = resample(&coarse, 0.5).unwrap();
    assert!(fine.len() > coarse.len());
    let opts = TraceOptions {
        resample_step: Some(0.5),
        esa_mode: EsaMode::Symmetric,
        ..TraceOptions::default()
    };
    let r = evaluate_trace(&coarse, &fine, &opts).unwrap();
    assert_eq!(r.esa, 0.0);
    assert_eq!(r.pds, 0.0);

    let other = generate_tree(&spec(4)).unwrap();
    let r = evaluate_trace(&other, &m, &TraceOptions::default()).unwrap();
    assert!(r.esa > 0.0 && r.pds > 0.0);
}
