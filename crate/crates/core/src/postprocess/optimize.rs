//! Per-class cutoff search.
//!
//! For one class in one case, removing objects below a threshold `t` keeps the
//! objects of size `>= t`. Sorting the objects by size, every threshold maps to
//! a removal count `r`, so a case is summarized by a short step function
//! `r -> (dice, hd95)`. Candidates are then scored by averaging the step
//! functions over cases, which costs O(#cases) per candidate.
//!
//! In per-component mode the step function is built incrementally from the
//! largest component down: the GT-surface distance transform is computed once
//! and each component's own distances to the GT surface are fixed, so only the
//! GT-to-prediction direction has to be updated as components are added back.

use rayon::prelude::*;

use super::components::{label_components, Connectivity};
use super::cutoffs::{ClassCutoff, Cutoff, CutoffMode, CutoffTable};
use crate::classes::ClassTable;
use crate::error::{Error, Result};
use crate::metrics::edt::{axis_term, edt_sq_raw};
use crate::metrics::{
    check_case, crop_label_mask, dice_from_counts, indicator, pair_stats,
    percentile_nearest_rank, surface_indices, surface_percentile, MetricOptions, PairStats,
};
use crate::volume::{LabelVolume, Region, Spacing};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub mode: CutoffMode,
    pub connectivity: Connectivity,
    pub metrics: MetricOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            mode: CutoffMode::PerComponent,
            connectivity: Connectivity::TwentySix,
            metrics: MetricOptions::default(),
        }
    }
}

/// Score of one class in one case as a function of the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseCurve {
    /// Object sizes, ascending.
    sizes: Vec<u64>,
    /// `(dice, hd95)` after removing the `r` smallest objects, for every
    /// reachable `r` in `0..=sizes.len()`.
    values: Vec<(f64, f64)>,
}

impl CaseCurve {
    fn removed(&self, t: Cutoff) -> usize {
        match t {
            Cutoff::Voxels(t) => self.sizes.partition_point(|&s| s < t),
            Cutoff::Infinite => self.sizes.len(),
        }
    }

    pub fn at(&self, t: Cutoff) -> (f64, f64) {
        self.values[self.removed(t)]
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }
}

fn reachable(sizes: &[u64], r: usize) -> bool {
    r == 0 || r == sizes.len() || sizes[r - 1] < sizes[r]
}

fn empty_pred_value(gt_count: u64, penalty: f64) -> (f64, f64) {
    if gt_count == 0 {
        (1.0, 0.0)
    } else {
        (0.0, penalty)
    }
}

fn whole_class_curve(
    pred: &LabelVolume,
    gt: &LabelVolume,
    stats: &PairStats,
    label: u32,
    opts: &MetricOptions,
    penalty: f64,
) -> CaseCurve {
    let l = label as usize;
    let (pc, gc) = (stats.pred_count[l], stats.gt_count[l]);
    let removed = empty_pred_value(gc, penalty);
    if pc == 0 {
        return CaseCurve {
            sizes: Vec::new(),
            values: vec![removed],
        };
    }
    let kept = if gc == 0 {
        (0.0, penalty)
    } else {
        let region = stats.pred_region[l].union(&stats.gt_region[l]);
        let a = crop_label_mask(pred, label, &region);
        let b = crop_label_mask(gt, label, &region);
        (
            dice_from_counts(stats.overlap[l], pc, gc),
            surface_percentile(region.dims(), gt.spacing(), &a, &b, opts.percentile),
        )
    };
    CaseCurve {
        sizes: vec![pc],
        values: vec![kept, removed],
    }
}

/// Distances from every point of `to` to the nearest point of `from`, folded
/// into `best` with `min`. Uses brute force when that is cheaper than a
/// distance transform over the region; both give identical values.
fn fold_min_distances(
    dims: [usize; 3],
    spacing: Spacing,
    from: &[usize],
    to: &[usize],
    best: &mut [f64],
) {
    let n: usize = dims.iter().product();
    if from.len().saturating_mul(to.len()) <= 8 * n {
        let c = |i: usize| [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
        let from_c: Vec<[usize; 3]> = from.iter().map(|&i| c(i)).collect();
        for (b, &g) in best.iter_mut().zip(to) {
            let p = c(g);
            let mut m = f64::INFINITY;
            for q in &from_c {
                let d = (axis_term(p[0].abs_diff(q[0]), spacing.0[0])
                    + axis_term(p[1].abs_diff(q[1]), spacing.0[1]))
                    + axis_term(p[2].abs_diff(q[2]), spacing.0[2]);
                if d < m {
                    m = d;
                }
            }
            let m = m.sqrt();
            if m < *b {
                *b = m;
            }
        }
    } else {
        let sq = edt_sq_raw(dims, spacing, &indicator(n, from));
        for (b, &g) in best.iter_mut().zip(to) {
            let m = sq[g].sqrt();
            if m < *b {
                *b = m;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn per_component_curve(
    pred: &LabelVolume,
    gt: &LabelVolume,
    stats: &PairStats,
    label: u32,
    opts: &MetricOptions,
    conn: Connectivity,
    penalty: f64,
) -> CaseCurve {
    let l = label as usize;
    let (pc, gc) = (stats.pred_count[l], stats.gt_count[l]);
    if pc == 0 {
        return CaseCurve {
            sizes: Vec::new(),
            values: vec![empty_pred_value(gc, penalty)],
        };
    }
    let region: Region = stats.pred_region[l].union(&stats.gt_region[l]);
    let dims = region.dims();
    let pm = crop_label_mask(pred, label, &region);
    let (ids, comp_sizes) = label_components(dims, &pm, conn);
    let m = comp_sizes.len();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&k| (comp_sizes[k], k));
    let sizes: Vec<u64> = order.iter().map(|&k| comp_sizes[k]).collect();
    let mut values = vec![(0.0, 0.0); m + 1];
    values[m] = empty_pred_value(gc, penalty);

    if gc == 0 {
        for v in &mut values[..m] {
            *v = (0.0, penalty);
        }
        return CaseCurve { sizes, values };
    }

    let gm = crop_label_mask(gt, label, &region);
    let mut overlap = vec![0u64; m];
    for (i, &id) in ids.iter().enumerate() {
        if id != 0 && gm[i] {
            overlap[id as usize - 1] += 1;
        }
    }

    // A component's surface is intrinsic: distinct components are never
    // 6-adjacent under either connectivity.
    let mut comp_surface: Vec<Vec<usize>> = vec![Vec::new(); m];
    for i in surface_indices(dims, &pm) {
        comp_surface[ids[i] as usize - 1].push(i);
    }
    let gt_surface = surface_indices(dims, &gm);
    let spacing = gt.spacing();
    let to_gt = edt_sq_raw(dims, spacing, &indicator(pm.len(), &gt_surface));
    let comp_to_gt: Vec<Vec<f64>> = comp_surface
        .iter()
        .map(|s| s.iter().map(|&i| to_gt[i].sqrt()).collect())
        .collect();

    let mut gt_to_kept = vec![f64::INFINITY; gt_surface.len()];
    let (mut kept_overlap, mut kept_size) = (0u64, 0u64);
    let mut pool = Vec::new();
    for r in (0..m).rev() {
        let k = order[r];
        fold_min_distances(dims, spacing, &comp_surface[k], &gt_surface, &mut gt_to_kept);
        kept_overlap += overlap[k];
        kept_size += comp_sizes[k];
        if !reachable(&sizes, r) {
            continue;
        }
        pool.clear();
        for &kk in &order[r..] {
            pool.extend_from_slice(&comp_to_gt[kk]);
        }
        pool.extend_from_slice(&gt_to_kept);
        let hd = percentile_nearest_rank(&mut pool, opts.percentile);
        values[r] = (dice_from_counts(kept_overlap, kept_size, gc), hd);
    }
    CaseCurve { sizes, values }
}

/// Step functions for every class of `classes`, in table order.
pub fn case_curves(
    pred: &LabelVolume,
    gt: &LabelVolume,
    classes: &ClassTable,
    opts: &OptimizeOptions,
) -> Result<Vec<CaseCurve>> {
    check_case(pred, gt, classes, &opts.metrics)?;
    let stats = pair_stats(pred, gt, classes.max_label());
    let penalty = opts.metrics.penalty(gt.dims(), gt.spacing());
    Ok(classes
        .labels()
        .map(|label| match opts.mode {
            CutoffMode::WholeClass => {
                whole_class_curve(pred, gt, &stats, label, &opts.metrics, penalty)
            }
            CutoffMode::PerComponent => per_component_curve(
                pred,
                gt,
                &stats,
                label,
                &opts.metrics,
                opts.connectivity,
                penalty,
            ),
        })
        .collect())
}

/// Candidate cutoffs for one class: 0, every observed size + 1, and infinity.
pub fn candidates<'a>(curves: impl IntoIterator<Item = &'a CaseCurve>) -> Vec<Cutoff> {
    let mut sizes: Vec<u64> = curves
        .into_iter()
        .flat_map(|c| c.sizes.iter().copied())
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = Vec::with_capacity(sizes.len() + 2);
    out.push(Cutoff::Voxels(0));
    out.extend(sizes.iter().map(|&s| Cutoff::Voxels(s + 1)));
    out.push(Cutoff::Infinite);
    out
}

/// Picks the per-metric optima for one class from its per-case curves.
/// Ties go to the smallest candidate; a finite winner that already removes
/// every observed object is reported as [`Cutoff::Infinite`].
pub fn select_class_cutoff(curves: &[&CaseCurve]) -> Result<ClassCutoff> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("no cases to optimize on".into()));
    }
    let n = curves.len() as f64;
    let cands = candidates(curves.iter().copied());
    let max_size = curves.iter().filter_map(|c| c.sizes.last()).max().copied();

    let mut best_dice = (f64::NEG_INFINITY, Cutoff::Voxels(0));
    let mut best_hd = (f64::INFINITY, Cutoff::Voxels(0));
    for &t in &cands {
        let (mut d, mut h) = (0.0, 0.0);
        for c in curves {
            let (cd, ch) = c.at(t);
            d += cd;
            h += ch;
        }
        let (d, h) = (d / n, h / n);
        if d > best_dice.0 {
            best_dice = (d, t);
        }
        if h < best_hd.0 {
            best_hd = (h, t);
        }
    }
    let collapse = |t: Cutoff| match (t, max_size) {
        (Cutoff::Voxels(v), Some(m)) if v > m => Cutoff::Infinite,
        _ => t,
    };
    Ok(ClassCutoff::from_metrics(
        collapse(best_dice.1),
        collapse(best_hd.1),
    ))
}

/// Builds a table from case-major curves (`curves[case][class]`).
pub fn select_cutoffs(
    curves: &[Vec<CaseCurve>],
    classes: &ClassTable,
    opts: &OptimizeOptions,
) -> Result<CutoffTable> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument(
            "cutoff optimization needs at least one case".into(),
        ));
    }
    let labels: Vec<u32> = classes.labels().collect();
    let per_class: Vec<ClassCutoff> = (0..labels.len())
        .into_par_iter()
        .map(|k| {
            let col: Vec<&CaseCurve> = curves.iter().map(|c| &c[k]).collect();
            select_class_cutoff(&col)
        })
        .collect::<Result<_>>()?;
    Ok(CutoffTable {
        mode: opts.mode,
        connectivity: opts.connectivity,
        classes: labels.into_iter().zip(per_class).collect(),
    })
}

/// Optimizes cutoffs on in-memory `(prediction, ground truth)` pairs.
pub fn optimize_cutoffs(
    cases: &[(LabelVolume, LabelVolume)],
    classes: &ClassTable,
    opts: &OptimizeOptions,
) -> Result<CutoffTable> {
    if cases.is_empty() {
        return Err(Error::InvalidArgument(
            "cutoff optimization needs at least one case".into(),
        ));
    }
    let curves = cases
        .par_iter()
        .map(|(p, g)| case_curves(p, g, classes, opts))
        .collect::<Result<Vec<_>>>()?;
    select_cutoffs(&curves, classes, opts)
}
