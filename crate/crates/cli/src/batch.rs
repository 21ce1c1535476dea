use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use skeltop_core::Error;

use crate::failure::{Failure, FailureReport};

/// Files from two directories matched by stem. Either side may be missing.
pub struct Pair {
    pub name: String,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
}

fn list(dir: &Path, extensions: &[&str]) -> Result<BTreeMap<String, PathBuf>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| {
        Failure::from(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| {
                Failure::from(Error::Io {
                    path: dir.to_path_buf(),
                    source: e,
                })
            })?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !path.is_file() || !extensions.contains(&ext) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

/// Pairs every stem present in either directory, sorted by stem.
pub fn pair_dirs(
    pred_dir: &Path,
    gt_dir: &Path,
    extensions: &[&str],
) -> Result<Vec<Pair>, Failure> {
    let mut pred = list(pred_dir, extensions)?;
    let mut gt = list(gt_dir, extensions)?;
    let mut names: Vec<String> = pred.keys().chain(gt.keys()).cloned().collect();
    names.sort();
    names.dedup();
    Ok(names
        .into_iter()
        .map(|name| Pair {
            pred: pred.remove(&name),
            gt: gt.remove(&name),
            name,
        })
        .collect())
}

#[derive(Serialize)]
pub struct Entry<T> {
    pub name: String,
    pub pred: Option<String>,
    pub gt: Option<String>,
    #[serde(flatten)]
    pub report: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<FailureReport>,
}

fn file_name(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
}

/// Evaluates every pair in parallel. Results keep the input order; the
/// returned code is the worst exit code among failed entries (0 if none).
pub fn evaluate<T, F>(pairs: Vec<Pair>, f: F) -> (Vec<Entry<T>>, u8)
where
    T: Send,
    F: Fn(&Path, &Path) -> Result<T, Failure> + Sync,
{
    let entries: Vec<(Entry<T>, u8)> = pairs
        .into_par_iter()
        .map(|pair| {
            let outcome = match (&pair.pred, &pair.gt) {
                (Some(p), Some(g)) => f(p, g),
                (None, _) => Err(Failure::param(
                    "pair",
                    format!("no prediction file for `{}`", pair.name),
                )),
                (_, None) => Err(Failure::param(
                    "pair",
                    format!("no ground-truth file for `{}`", pair.name),
                )),
            };
            let (report, error, code) = match outcome {
                Ok(r) => (Some(r), None, 0),
                Err(e) => (None, Some(e.report()), e.exit_code()),
            };
            let entry = Entry {
                name: pair.name.clone(),
                pred: file_name(&pair.pred),
                gt: file_name(&pair.gt),
                report,
                error,
            };
            (entry, code)
        })
        .collect();
    let code = entries.iter().map(|(_, c)| *c).max().unwrap_or(0);
    (entries.into_iter().map(|(e, _)| e).collect(), code)
}
