mod common;

use cbctseg::metrics::{dice, hd95, MetricOptions};
use cbctseg::postprocess::{
    apply_cutoffs, connected_components, optimize_cutoffs, ClassCutoff, Connectivity, Cutoff,
    CutoffMode, CutoffTable, OptimizeOptions,
};
use cbctseg::synth::synth_case;
use cbctseg::{class_mask, ClassTable, LabelVolume, Spacing};
use common::*;
use proptest::prelude::*;

#[test]
fn ccl_matches_flood_fill() {
    let mut r = rng(11);
    let sp = Spacing::isotropic(1.0).unwrap();
    for k in 0..100 {
        let fill = [0.2, 0.35, 0.5, 0.65][k % 4];
        let m = random_mask_dims(&mut r, [20, 20, 20], sp, fill);
        for (conn, c26) in [(Connectivity::Six, false), (Connectivity::TwentySix, true)] {
            let cs = connected_components(&m, conn);
            let oracle = flood_fill_labels(&m, c26);
            let mut mine = vec![usize::MAX; m.len()];
            for c in &cs.components {
                assert_eq!(c.voxel_count as usize, c.voxels.len());
                for &v in &c.voxels {
                    assert_eq!(mine[v], usize::MAX, "components overlap");
                    mine[v] = c.id as usize - 1;
                }
            }
            // both number components by first voxel, so ids agree directly
            assert_eq!(mine, oracle, "mask {k}, conn {conn:?}");
        }
    }
}

/// Observed object sizes of `label` in `pred`: component sizes or the class
/// volume.
fn observed_sizes(pred: &LabelVolume, label: u32, mode: CutoffMode) -> Vec<u64> {
    let (m, count) = class_mask(pred, label);
    if count == 0 {
        return vec![];
    }
    match mode {
        CutoffMode::WholeClass => vec![count as u64],
        CutoffMode::PerComponent => {
            let ids = flood_fill_labels(&m, true);
            let n = ids.iter().filter(|&&i| i != usize::MAX).max().unwrap() + 1;
            let mut sizes = vec![0u64; n];
            for &i in ids.iter().filter(|&&i| i != usize::MAX) {
                sizes[i] += 1;
            }
            sizes
        }
    }
}

/// Exhaustive search by full re-scoring of every candidate.
fn exhaustive(
    cases: &[(LabelVolume, LabelVolume)],
    classes: &ClassTable,
    mode: CutoffMode,
    opts: &MetricOptions,
) -> CutoffTable {
    let labels: Vec<u32> = classes.labels().collect();
    let mut table = CutoffTable::uniform(mode, labels.clone(), Cutoff::Voxels(0));
    for &c in &labels {
        let mut sizes: Vec<u64> = cases
            .iter()
            .flat_map(|(p, _)| observed_sizes(p, c, mode))
            .collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut cands = vec![Cutoff::Voxels(0)];
        cands.extend(sizes.iter().map(|s| Cutoff::Voxels(s + 1)));
        cands.push(Cutoff::Infinite);

        let mut best_d = (f64::NEG_INFINITY, Cutoff::Voxels(0));
        let mut best_h = (f64::INFINITY, Cutoff::Voxels(0));
        for &t in &cands {
            let mut trial = CutoffTable::uniform(mode, labels.clone(), Cutoff::Voxels(0));
            trial.classes.insert(c, ClassCutoff::uniform(t));
            let (mut sd, mut sh) = (0.0, 0.0);
            for (p, g) in cases {
                let post = apply_cutoffs(p, &trial).unwrap();
                let (pm, _) = class_mask(&post, c);
                let (gm, _) = class_mask(g, c);
                sd += dice(&pm, &gm).unwrap();
                sh += hd95(&pm, &gm, opts).unwrap();
            }
            let n = cases.len() as f64;
            if sd / n > best_d.0 {
                best_d = (sd / n, t);
            }
            if sh / n < best_h.0 {
                best_h = (sh / n, t);
            }
        }
        let collapse = |t: Cutoff| match (t, sizes.last()) {
            (Cutoff::Voxels(v), Some(&m)) if v > m => Cutoff::Infinite,
            _ => t,
        };
        table.classes.insert(
            c,
            ClassCutoff::from_metrics(collapse(best_d.1), collapse(best_h.1)),
        );
    }
    table
}

fn class_mean_dice(cases: &[(LabelVolume, LabelVolume)], label: u32) -> f64 {
    cases
        .iter()
        .map(|(p, g)| dice(&class_mask(p, label).0, &class_mask(g, label).0).unwrap())
        .sum::<f64>()
        / cases.len() as f64
}

#[test]
fn optimizer_matches_exhaustive_search() {
    let sp = Spacing::new(0.3, 0.3, 0.45).unwrap();
    let classes = ClassTable::from_labels([1, 2, 3, 4, 5]).unwrap();
    let labels: Vec<u32> = classes.labels().collect();
    let cases: Vec<_> = (0..30)
        .map(|s| synth_case(1000 + s, [20, 18, 16], sp, &labels).unwrap())
        .collect();
    for mode in [CutoffMode::PerComponent, CutoffMode::WholeClass] {
        let opts = OptimizeOptions {
            mode,
            ..Default::default()
        };
        let got = optimize_cutoffs(&cases, &classes, &opts).unwrap();
        let want = exhaustive(&cases, &classes, mode, &opts.metrics);
        assert_eq!(got.classes, want.classes, "mode {mode:?}");
        // the fixture must exercise non-trivial removals
        assert!(got.classes.values().any(|c| c.cutoff != Cutoff::Voxels(0)));

        let post: Vec<_> = cases
            .iter()
            .map(|(p, g)| (apply_cutoffs(p, &got).unwrap(), g.clone()))
            .collect();
        for &c in &labels {
            assert!(class_mean_dice(&post, c) >= class_mean_dice(&cases, c));
        }
    }
}

#[test]
fn fixed_penalty_changes_nothing_structural() {
    let sp = Spacing::isotropic(0.3).unwrap();
    let classes = ClassTable::from_labels([1, 2, 3]).unwrap();
    let cases: Vec<_> = (0..8)
        .map(|s| synth_case(50 + s, [14, 14, 14], sp, &[1, 2, 3]).unwrap())
        .collect();
    let mut opts = OptimizeOptions::default();
    opts.metrics.empty_penalty = cbctseg::metrics::EmptyPenalty::Fixed(373.13);
    let got = optimize_cutoffs(&cases, &classes, &opts).unwrap();
    let want = exhaustive(&cases, &classes, CutoffMode::PerComponent, &opts.metrics);
    assert_eq!(got.classes, want.classes);
}

#[test]
fn always_false_positive_whole_class_is_infinite() {
    let sp = Spacing::isotropic(0.3).unwrap();
    let classes = ClassTable::from_labels([7]).unwrap();
    let cases: Vec<_> = (0..5u32)
        .map(|k| {
            let mut p = vec![0u32; 6 * 6 * 6];
            p[..(k as usize + 1) * 3].fill(7);
            (
                LabelVolume::new([6, 6, 6], sp, p).unwrap(),
                LabelVolume::new([6, 6, 6], sp, vec![0; 216]).unwrap(),
            )
        })
        .collect();
    let opts = OptimizeOptions {
        mode: CutoffMode::WholeClass,
        ..Default::default()
    };
    let t = optimize_cutoffs(&cases, &classes, &opts).unwrap();
    assert_eq!(t.get(7), Some(Cutoff::Infinite));
}

fn arb_labels() -> impl Strategy<Value = LabelVolume> {
    (1usize..8, 1usize..8, 1usize..6, any::<u64>()).prop_map(|(x, y, z, seed)| {
        use rand::Rng;
        let mut r = rng(seed);
        let data = (0..x * y * z)
            .map(|_| if r.random_bool(0.5) { 0 } else { r.random_range(1..=3) })
            .collect();
        LabelVolume::new([x, y, z], Spacing::isotropic(1.0).unwrap(), data).unwrap()
    })
}

fn arb_cutoff() -> impl Strategy<Value = Cutoff> {
    prop_oneof![(0u64..12).prop_map(Cutoff::Voxels), Just(Cutoff::Infinite)]
}

proptest! {
    #[test]
    fn apply_is_idempotent_and_shrinking(
        v in arb_labels(),
        cuts in proptest::collection::vec(arb_cutoff(), 3),
        whole in any::<bool>(),
        six in any::<bool>(),
    ) {
        let mode = if whole { CutoffMode::WholeClass } else { CutoffMode::PerComponent };
        let mut t = CutoffTable::uniform(mode, [1, 2, 3], Cutoff::Voxels(0));
        if six {
            t.connectivity = Connectivity::Six;
        }
        for (k, c) in cuts.into_iter().enumerate() {
            t.classes.insert(k as u32 + 1, ClassCutoff::uniform(c));
        }
        let once = apply_cutoffs(&v, &t).unwrap();
        let twice = apply_cutoffs(&once, &t).unwrap();
        prop_assert_eq!(&once, &twice);
        for (a, b) in v.data().iter().zip(once.data()) {
            prop_assert!(*b == *a || *b == 0);
        }
    }

    #[test]
    fn class_order_does_not_matter(seed in 0u64..500) {
        let sp = Spacing::isotropic(0.3).unwrap();
        let cases: Vec<_> = (0..3)
            .map(|s| synth_case(seed * 7 + s, [10, 10, 10], sp, &[1, 2, 3]).unwrap())
            .collect();
        let a = ClassTable::from_labels([1, 2, 3]).unwrap();
        let b = ClassTable::from_labels([3, 1, 2]).unwrap();
        let opts = OptimizeOptions::default();
        prop_assert_eq!(
            optimize_cutoffs(&cases, &a, &opts).unwrap(),
            optimize_cutoffs(&cases, &b, &opts).unwrap()
        );
    }
}
