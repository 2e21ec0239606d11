//! Per-class Dice and HD95 with the challenge's empty-mask rules.
//!
//! * both masks empty: Dice 1, HD95 0 (true negative)
//! * exactly one empty: Dice 0, HD95 = configured penalty
//!
//! HD95 pools the directed surface-to-surface nearest distances in both
//! directions and takes the nearest-rank percentile. Distances are exact
//! (see [`edt`]) and in millimeters; Dice is computed on voxel counts.

pub mod edt;
mod surface;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::nifti::read_label_volume;
use crate::volume::{LabelVolume, Mask, Region, Spacing};

pub use edt::edt_sq;
pub use surface::extract_surface;
pub(crate) use surface::surface_indices;

/// Distance reported when exactly one of the two masks is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPenalty {
    /// Physical diagonal of the image grid, `sqrt(sum((n_i * s_i)^2))`.
    ImageDiagonal,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub empty_penalty: EmptyPenalty,
    /// In (0, 1]; 0.95 for HD95.
    pub percentile: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            empty_penalty: EmptyPenalty::ImageDiagonal,
            percentile: 0.95,
        }
    }
}

impl MetricOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "percentile {} outside (0, 1]",
                self.percentile
            )));
        }
        if let EmptyPenalty::Fixed(v) = self.empty_penalty {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fixed empty penalty must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn penalty(&self, dims: [usize; 3], spacing: Spacing) -> f64 {
        match self.empty_penalty {
            EmptyPenalty::Fixed(v) => v,
            EmptyPenalty::ImageDiagonal => (0..3)
                .map(|a| {
                    let e = dims[a] as f64 * spacing.0[a];
                    e * e
                })
                .sum::<f64>()
                .sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: u32,
    pub dice: f64,
    pub hd95: f64,
    pub gt_empty: bool,
    pub pred_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEvaluation {
    pub case_id: String,
    pub classes: Vec<ClassMetrics>,
}

/// 1-based nearest rank `ceil(p * m)`, clamped to `1..=m`. A tiny slack absorbs
/// representation error in `p` (0.95 * 20 must be rank 19, not 20).
pub fn nearest_rank(p: f64, m: usize) -> usize {
    let r = (p * m as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(m)
}

/// Nearest-rank percentile of unsorted values. Panics on empty input.
pub(crate) fn percentile_nearest_rank(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    let k = nearest_rank(p, values.len()) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *v
}

pub fn dice_from_counts(intersection: u64, pred: u64, gt: u64) -> f64 {
    if pred + gt == 0 {
        1.0
    } else {
        2.0 * intersection as f64 / (pred + gt) as f64
    }
}

pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::DimMismatch(pred.dims(), gt.dims()));
    }
    let (mut i, mut a, mut b) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        a += p as u64;
        b += g as u64;
        i += (p && g) as u64;
    }
    Ok(dice_from_counts(i, a, b))
}

/// Bounding box of the `true` voxels.
pub(crate) fn mask_region(mask: &Mask) -> Region {
    let [nx, ny, _] = mask.dims();
    let mut r = Region::empty();
    for (i, &b) in mask.data().iter().enumerate() {
        if b {
            r.include([i % nx, (i / nx) % ny, i / (nx * ny)]);
        }
    }
    r
}

/// Directed nearest distances (mm) from each voxel in `from` to the nearest
/// `true` voxel of `targets`. `targets` must contain at least one voxel.
pub(crate) fn directed_distances(
    dims: [usize; 3],
    spacing: Spacing,
    targets: &[bool],
    from: &[usize],
) -> Vec<f64> {
    let sq = edt::edt_sq_raw(dims, spacing, targets);
    from.iter().map(|&i| sq[i].sqrt()).collect()
}

pub(crate) fn indicator(n: usize, idx: &[usize]) -> Vec<bool> {
    let mut v = vec![false; n];
    for &i in idx {
        v[i] = true;
    }
    v
}

/// Pooled nearest-rank surface distance between two non-empty masks on the
/// same grid.
pub(crate) fn surface_percentile(
    dims: [usize; 3],
    spacing: Spacing,
    a: &[bool],
    b: &[bool],
    p: f64,
) -> f64 {
    let n = a.len();
    let sa = surface_indices(dims, a);
    let sb = surface_indices(dims, b);
    let mut d = directed_distances(dims, spacing, &indicator(n, &sb), &sa);
    d.extend(directed_distances(dims, spacing, &indicator(n, &sa), &sb));
    percentile_nearest_rank(&mut d, p)
}

/// Percentile surface distance with the empty-mask rules applied.
pub fn hd95(pred: &Mask, gt: &Mask, opts: &MetricOptions) -> Result<f64> {
    pred.check_same_grid(gt)?;
    opts.validate()?;
    let rp = mask_region(pred);
    let rg = mask_region(gt);
    match (rp.is_empty(), rg.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(opts.penalty(gt.dims(), gt.spacing())),
        _ => {}
    }
    let region = rp.union(&rg);
    let a = pred.crop(&region);
    let b = gt.crop(&region);
    Ok(surface_percentile(
        region.dims(),
        gt.spacing(),
        a.data(),
        b.data(),
        opts.percentile,
    ))
}

/// Per-label voxel counts, bounding boxes and overlap of a prediction/GT pair.
pub(crate) struct PairStats {
    pub pred_count: Vec<u64>,
    pub gt_count: Vec<u64>,
    pub overlap: Vec<u64>,
    pub pred_region: Vec<Region>,
    pub gt_region: Vec<Region>,
}

/// Labels above `max_label` are ignored.
pub(crate) fn pair_stats(pred: &LabelVolume, gt: &LabelVolume, max_label: u32) -> PairStats {
    let n = max_label as usize + 1;
    let mut s = PairStats {
        pred_count: vec![0; n],
        gt_count: vec![0; n],
        overlap: vec![0; n],
        pred_region: vec![Region::empty(); n],
        gt_region: vec![Region::empty(); n],
    };
    let [nx, ny, nz] = pred.dims();
    let (pd, gd) = (pred.data(), gt.data());
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            for x in 0..nx {
                let (p, g) = (pd[row + x] as usize, gd[row + x] as usize);
                if p != 0 && p < n {
                    s.pred_count[p] += 1;
                    s.pred_region[p].include([x, y, z]);
                }
                if g != 0 && g < n {
                    s.gt_count[g] += 1;
                    s.gt_region[g].include([x, y, z]);
                    if p == g {
                        s.overlap[g] += 1;
                    }
                }
            }
        }
    }
    s
}

/// `vol == label` restricted to `region`.
pub(crate) fn crop_label_mask(vol: &LabelVolume, label: u32, region: &Region) -> Vec<bool> {
    let d = region.dims();
    let mut out = Vec::with_capacity(region.len());
    for z in region.lo[2]..region.hi[2] {
        for y in region.lo[1]..region.hi[1] {
            let start = vol.index(region.lo[0], y, z);
            out.extend(vol.data()[start..start + d[0]].iter().map(|&v| v == label));
        }
    }
    out
}

fn class_metrics(
    pred: &LabelVolume,
    gt: &LabelVolume,
    stats: &PairStats,
    label: u32,
    opts: &MetricOptions,
) -> ClassMetrics {
    let l = label as usize;
    let (pc, gc) = (stats.pred_count[l], stats.gt_count[l]);
    let pred_empty = pc == 0;
    let gt_empty = gc == 0;
    let dice = dice_from_counts(stats.overlap[l], pc, gc);
    let hd95 = match (pred_empty, gt_empty) {
        (true, true) => 0.0,
        (true, false) | (false, true) => opts.penalty(gt.dims(), gt.spacing()),
        (false, false) => {
            let region = stats.pred_region[l].union(&stats.gt_region[l]);
            let a = crop_label_mask(pred, label, &region);
            let b = crop_label_mask(gt, label, &region);
            surface_percentile(region.dims(), gt.spacing(), &a, &b, opts.percentile)
        }
    };
    ClassMetrics {
        label,
        dice,
        hd95,
        gt_empty,
        pred_empty,
    }
}

pub(crate) fn check_case(
    pred: &LabelVolume,
    gt: &LabelVolume,
    classes: &ClassTable,
    opts: &MetricOptions,
) -> Result<()> {
    pred.check_same_grid(gt)?;
    opts.validate()?;
    let max = classes.max_label() as usize;
    let mut known = vec![false; max + 1];
    known[0] = true;
    for l in classes.labels() {
        known[l as usize] = true;
    }
    for vol in [pred, gt] {
        if let Some(&bad) = vol
            .data()
            .iter()
            .find(|&&v| v as usize > max || !known[v as usize])
        {
            return Err(Error::UnknownLabel(bad));
        }
    }
    Ok(())
}

/// Dice and HD95 for every class in `classes`, in table order.
pub fn evaluate_case(
    case_id: &str,
    pred: &LabelVolume,
    gt: &LabelVolume,
    classes: &ClassTable,
    opts: &MetricOptions,
) -> Result<CaseEvaluation> {
    evaluate_case_with(case_id, pred, gt, classes, opts, false)
}

/// Like [`evaluate_case`], optionally spreading classes over the current
/// rayon pool. Output is identical either way.
pub fn evaluate_case_with(
    case_id: &str,
    pred: &LabelVolume,
    gt: &LabelVolume,
    classes: &ClassTable,
    opts: &MetricOptions,
    parallel_classes: bool,
) -> Result<CaseEvaluation> {
    check_case(pred, gt, classes, opts)?;
    let stats = pair_stats(pred, gt, classes.max_label());
    let labels: Vec<u32> = classes.labels().collect();
    let per_class = if parallel_classes {
        labels
            .par_iter()
            .map(|&l| class_metrics(pred, gt, &stats, l, opts))
            .collect()
    } else {
        labels
            .iter()
            .map(|&l| class_metrics(pred, gt, &stats, l, opts))
            .collect()
    };
    Ok(CaseEvaluation {
        case_id: case_id.to_string(),
        classes: per_class,
    })
}

/// Per-class arithmetic means over cases, in table order:
/// `(label, mean dice, mean hd95)`.
pub fn class_means(evals: &[CaseEvaluation]) -> Vec<(u32, f64, f64)> {
    let Some(first) = evals.first() else {
        return Vec::new();
    };
    let n = evals.len() as f64;
    first
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let (mut d, mut h) = (0.0, 0.0);
            for e in evals {
                d += e.classes[k].dice;
                h += e.classes[k].hd95;
            }
            (c.label, d / n, h / n)
        })
        .collect()
}

/// Evaluates `(case_id, prediction, ground truth)` triples produced by
/// `load(k)` for `k in 0..n`. Cases run on the current rayon pool; classes
/// are spread as well when there are fewer cases than threads. The result
/// is in case order whatever the completion order.
pub fn evaluate_cases<F>(
    n: usize,
    load: F,
    classes: &ClassTable,
    opts: &MetricOptions,
) -> Result<Vec<CaseEvaluation>>
where
    F: Fn(usize) -> Result<(String, LabelVolume, LabelVolume)> + Sync,
{
    let spread = n < rayon::current_num_threads();
    (0..n)
        .into_par_iter()
        .map(|k| {
            let (id, pred, gt) = load(k)?;
            evaluate_case_with(&id, &pred, &gt, classes, opts, spread)
        })
        .collect()
}

/// Evaluates every manifest case; each needs a prediction and labels.
pub fn evaluate_manifest(
    manifest: &Manifest,
    classes: &ClassTable,
    opts: &MetricOptions,
) -> Result<Vec<CaseEvaluation>> {
    let need = |p: &Option<std::path::PathBuf>, what: &str, id: &str| {
        p.clone().ok_or_else(|| {
            Error::InvalidManifest(format!("case {id:?} has no {what} path"))
        })
    };
    for c in &manifest.cases {
        need(&c.prediction_path, "prediction", &c.case_id)?;
        need(&c.label_path, "labels", &c.case_id)?;
    }
    evaluate_cases(
        manifest.cases.len(),
        |k| {
            let c = &manifest.cases[k];
            let pred = read_label_volume(need(&c.prediction_path, "prediction", &c.case_id)?)?;
            let gt = read_label_volume(need(&c.label_path, "labels", &c.case_id)?)?;
            Ok((c.case_id.clone(), pred, gt))
        },
        classes,
        opts,
    )
}

/// `case_id,label_id,dice,hd95,gt_empty,pred_empty`, one row per case and class.
pub fn write_evaluations_csv<W: std::io::Write>(evals: &[CaseEvaluation], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["case_id", "label_id", "dice", "hd95", "gt_empty", "pred_empty"])?;
    for e in evals {
        for c in &e.classes {
            wr.write_record([
                e.case_id.clone(),
                c.label.to_string(),
                c.dice.to_string(),
                c.hd95.to_string(),
                c.gt_empty.to_string(),
                c.pred_empty.to_string(),
            ])?;
        }
    }
    wr.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub label: u32,
    pub mean_dice: f64,
    pub mean_hd95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub cases: usize,
    pub classes: Vec<ClassSummary>,
}

pub fn summarize(evals: &[CaseEvaluation]) -> EvaluationSummary {
    EvaluationSummary {
        cases: evals.len(),
        classes: class_means(evals)
            .into_iter()
            .map(|(label, mean_dice, mean_hd95)| ClassSummary {
                label,
                mean_dice,
                mean_hd95,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    fn sp(s: f64) -> Spacing {
        Spacing::isotropic(s).unwrap()
    }

    fn mask_with(dims: [usize; 3], s: Spacing, on: &[[usize; 3]]) -> Mask {
        let mut m = Mask::filled(dims, s, false).into_data();
        for p in on {
            m[p[0] + dims[0] * (p[1] + dims[1] * p[2])] = true;
        }
        Volume::new(dims, s, m).unwrap()
    }

    #[test]
    fn nearest_rank_rule() {
        assert_eq!(nearest_rank(0.95, 1), 1);
        assert_eq!(nearest_rank(0.95, 20), 19);
        assert_eq!(nearest_rank(0.95, 21), 20);
        assert_eq!(nearest_rank(0.95, 100), 95);
        assert_eq!(nearest_rank(1.0, 7), 7);
    }

    #[test]
    fn dice_cases() {
        let d = [4, 4, 1];
        let e = mask_with(d, sp(1.0), &[]);
        assert_eq!(dice(&e, &e).unwrap(), 1.0);
        let a = mask_with(d, sp(1.0), &[[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        let b = mask_with(d, sp(1.0), &[[1, 0, 0], [2, 0, 0], [1, 1, 0], [2, 1, 0]]);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(dice(&a, &e).unwrap(), 0.0);
        let other = mask_with([4, 4, 2], sp(1.0), &[]);
        assert!(dice(&a, &other).is_err());
    }

    #[test]
    fn hd95_edge_rules() {
        let opts = MetricOptions::default();
        let d = [4, 5, 6];
        let e = mask_with(d, sp(0.5), &[]);
        let a = mask_with(d, sp(0.5), &[[1, 1, 1]]);
        assert_eq!(hd95(&e, &e, &opts).unwrap(), 0.0);
        let diag = ((2.0f64 * 2.0) + 2.5 * 2.5 + 3.0 * 3.0).sqrt();
        assert_eq!(hd95(&a, &e, &opts).unwrap(), diag);
        assert_eq!(hd95(&e, &a, &opts).unwrap(), diag);
        let fixed = MetricOptions {
            empty_penalty: EmptyPenalty::Fixed(373.13),
            ..opts
        };
        assert_eq!(hd95(&e, &a, &fixed).unwrap(), 373.13);
        assert_eq!(hd95(&a, &a, &opts).unwrap(), 0.0);
    }

    #[test]
    fn hd95_two_voxels() {
        let d = [1, 1, 8];
        let a = mask_with(d, sp(0.3), &[[0, 0, 0]]);
        let b = mask_with(d, sp(0.3), &[[0, 0, 5]]);
        assert!((hd95(&a, &b, &MetricOptions::default()).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_options() {
        let opts = MetricOptions {
            empty_penalty: EmptyPenalty::Fixed(0.0),
            percentile: 0.95,
        };
        assert!(opts.validate().is_err());
        let opts = MetricOptions {
            percentile: 0.0,
            ..Default::default()
        };
        assert!(opts.validate().is_err());
    }

    #[test]
    fn evaluate_case_rules() {
        let classes = ClassTable::from_labels([1, 2, 3]).unwrap();
        let mut gt = vec![0u32; 64];
        gt[5] = 1;
        gt[6] = 1;
        gt[40] = 2;
        let gt = LabelVolume::new([4, 4, 4], sp(0.3), gt).unwrap();
        let e = evaluate_case("c", &gt, &gt, &classes, &MetricOptions::default()).unwrap();
        assert_eq!(e.classes.len(), 3);
        for c in &e.classes {
            assert_eq!((c.dice, c.hd95), (1.0, 0.0));
        }
        assert!(e.classes[2].gt_empty && e.classes[2].pred_empty);

        let mut pred = gt.data().to_vec();
        pred[40] = 0;
        let pred = gt.with_data(pred).unwrap();
        let e = evaluate_case("c", &pred, &gt, &classes, &MetricOptions::default()).unwrap();
        let c2 = e.classes[1];
        assert_eq!(c2.dice, 0.0);
        assert_eq!(c2.hd95, MetricOptions::default().penalty(gt.dims(), gt.spacing()));
        assert!(c2.pred_empty && !c2.gt_empty);

        let mut bad = gt.data().to_vec();
        bad[0] = 9;
        let bad = gt.with_data(bad).unwrap();
        assert!(matches!(
            evaluate_case("c", &bad, &gt, &classes, &MetricOptions::default()),
            Err(Error::UnknownLabel(9))
        ));
    }
}
