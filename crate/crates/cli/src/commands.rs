use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skeltop_core::inflate::{self, InflationMode, InflationResiduals, Kernel2D, Tensor};
use skeltop_core::losses::{total_loss, DeepSupervisionConfig, ScaleLoss, DEFAULT_BETA};
use skeltop_core::segmetrics::{evaluate_segmentation, SegReport};
use skeltop_core::skeleton::{connected_components, graph_from_skeleton};
use skeltop_core::swc::{parse_swc, write_swc};
use skeltop_core::synth::{generate_tree, rasterize, SynthSpec};
use skeltop_core::tasl::{tasl as tasl_pipeline, TaslBreakdown, TaslWeights};
use skeltop_core::tracemetrics::{evaluate_trace, EsaMode, TraceOptions, TraceReport};
use skeltop_core::volume::{binarize, read_volume, write_volume, VolumeFormat};
use skeltop_core::{skeletonize as thin, Error, Morphology, Volume3D};

use crate::batch::{evaluate, pair_dirs, Entry};
use crate::failure::Failure;
use crate::{
    EsaModeArg, GraphArgs, InflateArgs, InflateCommand, InflationModeArg, LossArgs, PairArgs,
    SegEvalArgs, SkeletonizeArgs, SynthArgs, TaslArgs, TraceEvalArgs, VolumeFormatArg,
};

pub const SCHEMA: u32 = 1;
const VOLUME_EXTENSIONS: &[&str] = &["json", "nrrd"];
const SWC_EXTENSIONS: &[&str] = &["swc"];

/// JSON printed on stdout plus the exit code to finish with.
pub struct Output {
    pub json: String,
    pub code: u8,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    schema: u32,
    command: &'a str,
    #[serde(flatten)]
    body: T,
}

fn render<T: Serialize>(command: &str, body: T) -> String {
    serde_json::to_string_pretty(&Envelope {
        schema: SCHEMA,
        command,
        body,
    })
    .expect("reports serialize")
}

fn done<T: Serialize>(command: &str, body: T) -> Result<Output, Failure> {
    Ok(Output {
        json: render(command, body),
        code: 0,
    })
}

fn read_vol(path: &Path) -> Result<Volume3D, Failure> {
    read_volume(path, VolumeFormat::from_path(path)).map_err(Failure::at(path))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|source| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn read_swc(path: &Path) -> Result<Morphology, Failure> {
    parse_swc(&read_text(path)?).map_err(Failure::at(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| {
        Failure::at(path)(Error::Parse {
            field: what.to_string(),
            reason: e.to_string(),
        })
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|source| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

#[derive(Serialize)]
struct Single<T> {
    pred: String,
    gt: String,
    #[serde(flatten)]
    report: T,
}

#[derive(Serialize)]
struct Batch<T> {
    entries: Vec<Entry<T>>,
}

/// Runs `f` on the single pair or on every stem-matched pair of the directories.
fn run_pairs<T, F>(
    command: &str,
    pair: &PairArgs,
    extensions: &[&str],
    f: F,
) -> Result<Output, Failure>
where
    T: Serialize + Send,
    F: Fn(&Path, &Path) -> Result<T, Failure> + Sync,
{
    match (&pair.pred, &pair.gt, &pair.pred_dir, &pair.gt_dir) {
        (Some(p), Some(g), None, None) => done(
            command,
            Single {
                pred: p.display().to_string(),
                gt: g.display().to_string(),
                report: f(p, g)?,
            },
        ),
        (None, None, Some(pd), Some(gd)) => {
            let (entries, code) = evaluate(pair_dirs(pd, gd, extensions)?, f);
            Ok(Output {
                json: render(command, Batch { entries }),
                code,
            })
        }
        _ => Err(Failure::usage(
            "give either --pred/--gt or --pred-dir/--gt-dir",
        )),
    }
}

fn check_tau(tau: f64) -> Result<(), Failure> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Failure::param(
            "tau",
            format!("must lie in (0, 1), got {tau}"),
        ))
    }
}

#[derive(Serialize)]
struct SegOut {
    tau: f64,
    #[serde(flatten)]
    report: SegReport,
}

pub fn seg_eval(a: &SegEvalArgs) -> Result<Output, Failure> {
    check_tau(a.tau)?;
    run_pairs("seg-eval", &a.pair, VOLUME_EXTENSIONS, |p, g| {
        let pred = binarize(&read_vol(p)?, a.tau).map_err(Failure::at(p))?;
        let gt = binarize(&read_vol(g)?, a.tau).map_err(Failure::at(g))?;
        let report = evaluate_segmentation(&pred, &gt).map_err(Failure::at(p))?;
        Ok(SegOut { tau: a.tau, report })
    })
}

pub fn trace_eval(a: &TraceEvalArgs) -> Result<Output, Failure> {
    let opts = TraceOptions {
        theta: a.theta,
        resample_step: a.resample,
        esa_mode: match a.esa {
            EsaModeArg::Directed => EsaMode::Directed,
            EsaModeArg::Symmetric => EsaMode::Symmetric,
        },
    };
    run_pairs(
        "trace-eval",
        &a.pair,
        SWC_EXTENSIONS,
        |p, g| -> Result<TraceReport, Failure> {
            let pred = read_swc(p)?;
            let gt = read_swc(g)?;
            evaluate_trace(&pred, &gt, &opts).map_err(Failure::at(p))
        },
    )
}

fn parse_weights(text: &str) -> Result<[f64; 3], Failure> {
    let expected = "expected three comma-separated numbers such as 1.0,0.5,0.5";
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::param("weights", format!("{expected}, got {text:?}")))?;
    parts
        .try_into()
        .map_err(|_| Failure::param("weights", format!("{expected}, got {text:?}")))
}

#[derive(Serialize)]
struct TaslOut {
    weights: TaslWeights,
    #[serde(flatten)]
    breakdown: TaslBreakdown,
}

pub fn tasl(a: &TaslArgs) -> Result<Output, Failure> {
    let [lambda_node, lambda_edge, lambda_path] = parse_weights(&a.weights)?;
    let w = TaslWeights {
        lambda_node,
        lambda_edge,
        lambda_path,
        epsilon: a.eps,
        tau: a.tau,
        r: a.r,
    };
    w.validate()?;
    run_pairs("tasl", &a.pair, VOLUME_EXTENSIONS, |p, g| {
        let pred = read_vol(p)?;
        let gt = read_vol(g)?;
        let breakdown = tasl_pipeline(&pred, &gt, &w).map_err(Failure::at(p))?;
        Ok(TaslOut {
            weights: w,
            breakdown,
        })
    })
}

/// Input of the `loss` command. Scale weights default to halving per scale.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LossInput {
    scales: Vec<ScaleLoss>,
    #[serde(default)]
    scale_weights: Option<Vec<f64>>,
    #[serde(default)]
    beta: Option<f64>,
}

#[derive(Serialize)]
struct LossOut {
    total: f64,
    beta: f64,
    scale_weights: Vec<f64>,
    scales: Vec<ScaleLoss>,
}

pub fn loss(a: &LossArgs) -> Result<Output, Failure> {
    let input: LossInput = read_json(&a.scales, "scales")?;
    let beta = input.beta.unwrap_or(DEFAULT_BETA);
    let mut cfg = DeepSupervisionConfig::halving(input.scales.len(), beta);
    if let Some(w) = input.scale_weights {
        cfg.scale_weights = w;
    }
    let total = total_loss(&input.scales, &cfg).map_err(Failure::at(&a.scales))?;
    done(
        "loss",
        LossOut {
            total,
            beta,
            scale_weights: cfg.scale_weights,
            scales: input.scales,
        },
    )
}

#[derive(Serialize)]
struct SkeletonOut {
    input: String,
    out: String,
    dims: (usize, usize, usize),
    foreground_voxels: usize,
    skeleton_voxels: usize,
}

pub fn skeletonize(a: &SkeletonizeArgs) -> Result<Output, Failure> {
    check_tau(a.tau)?;
    let vol = read_vol(&a.input)?;
    let mask = binarize(&vol, a.tau).map_err(Failure::at(&a.input))?;
    let skel = thin(&mask);
    write_volume(&skel, &a.out, VolumeFormat::from_path(&a.out)).map_err(Failure::at(&a.out))?;
    done(
        "skeletonize",
        SkeletonOut {
            input: a.input.display().to_string(),
            out: a.out.display().to_string(),
            dims: mask.dims(),
            foreground_voxels: mask.foreground_count(),
            skeleton_voxels: skel.foreground_count(),
        },
    )
}

#[derive(Serialize)]
struct GraphOut {
    input: String,
    out: String,
    r: f64,
    nodes: usize,
    edges: usize,
    components: usize,
}

pub fn graph(a: &GraphArgs) -> Result<Output, Failure> {
    check_tau(a.tau)?;
    let vol = read_vol(&a.input)?;
    let mask = binarize(&vol, a.tau).map_err(Failure::at(&a.input))?;
    let g = graph_from_skeleton(&mask, a.r)?;
    write_text(&a.out, &g.to_json())?;
    done(
        "graph",
        GraphOut {
            input: a.input.display().to_string(),
            out: a.out.display().to_string(),
            r: a.r,
            nodes: g.node_count(),
            edges: g.edge_count(),
            components: connected_components(&g).count(),
        },
    )
}

fn read_kernel2d(path: &Path) -> Result<Kernel2D, Failure> {
    let t = inflate::read_tensor(path).map_err(Failure::at(path))?;
    Kernel2D::try_from(t).map_err(Failure::at(path))
}

#[derive(Serialize)]
struct InflateOut {
    kernel: String,
    out: String,
    mode: &'static str,
    kd: usize,
    shape: [usize; 5],
}

#[derive(Serialize)]
struct VerifyOut {
    kernel: String,
    volume: String,
    kd: usize,
    #[serde(flatten)]
    residuals: InflationResiduals,
}

pub fn inflate(a: InflateArgs) -> Result<Output, Failure> {
    if let Some(InflateCommand::Verify { kernel, kd, volume }) = a.verify {
        let k = read_kernel2d(&kernel)?;
        let vol = read_vol(&volume)?;
        let field = inflate::Field3D::from_volume(&vol, k.shape()[1]);
        let residuals = inflate::verify_inflation(&k, kd, &field).map_err(Failure::at(&kernel))?;
        return done(
            "inflate-verify",
            VerifyOut {
                kernel: kernel.display().to_string(),
                volume: volume.display().to_string(),
                kd,
                residuals,
            },
        );
    }
    // clap enforces these when no subcommand is given
    let (kernel, kd, mode, out): (PathBuf, usize, InflationModeArg, PathBuf) =
        match (a.kernel, a.kd, a.mode, a.out) {
            (Some(k), Some(d), Some(m), Some(o)) => (k, d, m, o),
            _ => {
                return Err(Failure::usage(
                    "inflate needs --kernel, --kd, --mode and --out",
                ))
            }
        };
    let k = read_kernel2d(&kernel)?;
    let (mode, name) = match mode {
        InflationModeArg::Center => (InflationMode::Center, "center"),
        InflationModeArg::Average => (InflationMode::Average, "average"),
    };
    let k3 = inflate::inflate(&k, kd, mode)?;
    let shape = k3.shape();
    inflate::write_tensor(&Tensor::from(k3), &out).map_err(Failure::at(&out))?;
    done(
        "inflate",
        InflateOut {
            kernel: kernel.display().to_string(),
            out: out.display().to_string(),
            mode: name,
            kd,
            shape,
        },
    )
}

#[derive(Serialize)]
struct SynthOut {
    spec: SynthSpec,
    swc: String,
    mask: String,
    prob: String,
    nodes: usize,
    mask_voxels: usize,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn synth(a: &SynthArgs) -> Result<Output, Failure> {
    let spec: SynthSpec = read_json(&a.spec, "synth spec")?;
    let m = generate_tree(&spec).map_err(Failure::at(&a.spec))?;
    let (mask, prob) = rasterize(&m, &spec).map_err(Failure::at(&a.spec))?;
    let (ext, format) = match a.format {
        VolumeFormatArg::Raw => ("json", VolumeFormat::RawJson),
        VolumeFormatArg::Nrrd => ("nrrd", VolumeFormat::Nrrd),
    };
    let swc_path = with_suffix(&a.out_prefix, ".swc");
    let mask_path = with_suffix(&a.out_prefix, &format!("_mask.{ext}"));
    let prob_path = with_suffix(&a.out_prefix, &format!("_prob.{ext}"));
    write_text(&swc_path, &write_swc(&m))?;
    write_volume(&mask, &mask_path, format).map_err(Failure::at(&mask_path))?;
    write_volume(&prob, &prob_path, format).map_err(Failure::at(&prob_path))?;
    done(
        "synth",
        SynthOut {
            nodes: m.len(),
            mask_voxels: mask.foreground_count(),
            spec,
            swc: swc_path.display().to_string(),
            mask: mask_path.display().to_string(),
            prob: prob_path.display().to_string(),
        },
    )
}
