//! Removal of small predicted objects and the search for the removal cutoffs.

mod components;
mod cutoffs;
mod optimize;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

pub use components::{class_components, connected_components, Component, ComponentSet, Connectivity};
pub use cutoffs::{apply_cutoffs, ClassCutoff, Cutoff, CutoffMode, CutoffTable};
pub use optimize::{
    candidates, case_curves, optimize_cutoffs, select_class_cutoff, select_cutoffs, CaseCurve,
    OptimizeOptions,
};

pub(crate) use components::label_components;

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::manifest::{CaseRecord, Manifest, Source};
use crate::metrics::{class_means, evaluate_case, CaseEvaluation, MetricOptions};
use crate::nifti::{read_label_volume, write_label_volume};

fn require<'a>(path: &'a Option<PathBuf>, what: &str, case: &CaseRecord) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| {
        Error::InvalidManifest(format!("case {:?} has no {what} path", case.case_id))
    })
}

/// Optimizes cutoffs on the manifest cases matching `source` (all cases when
/// `None`). Cases are loaded one at a time per worker.
pub fn optimize_cutoffs_for_manifest(
    manifest: &Manifest,
    source: Option<Source>,
    classes: &ClassTable,
    opts: &OptimizeOptions,
) -> Result<CutoffTable> {
    let cases: Vec<&CaseRecord> = manifest
        .cases
        .iter()
        .filter(|c| source.is_none_or(|s| c.source == s))
        .collect();
    if cases.is_empty() {
        return Err(Error::InvalidManifest(match source {
            Some(s) => format!("no cases with source {s}"),
            None => "no cases".into(),
        }));
    }
    let curves = cases
        .par_iter()
        .map(|c| {
            let pred = read_label_volume(require(&c.prediction_path, "prediction", c)?)?;
            let gt = read_label_volume(require(&c.label_path, "labels", c)?)?;
            case_curves(&pred, &gt, classes, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    select_cutoffs(&curves, classes, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassChange {
    pub label: u32,
    pub dice_before: f64,
    pub dice_after: f64,
    pub hd95_before: f64,
    pub hd95_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PostprocessSummary {
    pub cases_written: usize,
    /// Number of cases with ground truth that went into `classes`.
    pub cases_scored: usize,
    pub outputs: Vec<PathBuf>,
    pub classes: Vec<ClassChange>,
}

/// Applies `cutoffs` to every prediction in the manifest, writing
/// `<out_dir>/<case_id>.nii`. Cases with ground truth are scored before and
/// after.
pub fn postprocess_dataset(
    manifest: &Manifest,
    cutoffs: &CutoffTable,
    out_dir: &Path,
    classes: &ClassTable,
    opts: &MetricOptions,
) -> Result<PostprocessSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    type Scored = Option<(CaseEvaluation, CaseEvaluation)>;
    let results: Vec<(PathBuf, Scored)> = manifest
        .cases
        .par_iter()
        .map(|c| {
            let pred = read_label_volume(require(&c.prediction_path, "prediction", c)?)?;
            let post = apply_cutoffs(&pred, cutoffs)?;
            let out = out_dir.join(format!("{}.nii", c.case_id));
            write_label_volume(&post, &out)?;
            let scored = match &c.label_path {
                Some(p) => {
                    let gt = read_label_volume(p)?;
                    Some((
                        evaluate_case(&c.case_id, &pred, &gt, classes, opts)?,
                        evaluate_case(&c.case_id, &post, &gt, classes, opts)?,
                    ))
                }
                None => None,
            };
            Ok((out, scored))
        })
        .collect::<Result<_>>()?;

    let (before, after): (Vec<_>, Vec<_>) = results.iter().filter_map(|(_, s)| s.clone()).unzip();
    let changes = class_means(&before)
        .into_iter()
        .zip(class_means(&after))
        .map(|((label, db, hb), (_, da, ha))| ClassChange {
            label,
            dice_before: db,
            dice_after: da,
            hd95_before: hb,
            hd95_after: ha,
        })
        .collect();
    Ok(PostprocessSummary {
        cases_written: results.len(),
        cases_scored: before.len(),
        outputs: results.into_iter().map(|(p, _)| p).collect(),
        classes: changes,
    })
}
