mod common;

use std::io::Write;

use cbctseg::ensemble::{average_argmax, majority_vote, ProbStack};
use cbctseg::nifti::{
    label_volume_to_bytes, labels_from_bytes, read_label_volume, write_label_volume,
};
use cbctseg::{LabelVolume, Spacing};
use flate2::write::GzEncoder;
use flate2::Compression;
use proptest::prelude::*;
use rand::Rng;

fn random_stack(r: &mut impl Rng, dims: [usize; 3], channels: usize) -> ProbStack {
    let n: usize = dims.iter().product();
    let mut data = vec![0.0; n * channels];
    for i in 0..n {
        // coarse weights make exact ties between models likely
        let w: Vec<f64> = (0..channels).map(|_| r.random_range(0..4) as f64 + 0.5).collect();
        let s: f64 = w.iter().sum();
        for c in 0..channels {
            data[c * n + i] = w[c] / s;
        }
    }
    ProbStack::new(dims, Spacing::isotropic(0.3).unwrap(), channels, data).unwrap()
}

#[test]
fn argmax_matches_direct_recomputation() {
    let mut r = common::rng(5);
    for _ in 0..50 {
        let stacks = [random_stack(&mut r, [4, 4, 4], 3), random_stack(&mut r, [4, 4, 4], 3)];
        let out = average_argmax(&stacks, None).unwrap();
        for i in 0..64 {
            let mean: Vec<f64> = (0..3)
                .map(|c| (stacks[0].data[c * 64 + i] + stacks[1].data[c * 64 + i]) / 2.0)
                .collect();
            let mut best = 0;
            for c in 1..3 {
                if mean[c] > mean[best] {
                    best = c;
                }
            }
            assert_eq!(out.data()[i], best as u32);
        }
    }
}

#[test]
fn single_model_is_its_own_argmax() {
    let mut r = common::rng(6);
    let s = random_stack(&mut r, [5, 3, 2], 4);
    let out = average_argmax(std::slice::from_ref(&s), None).unwrap();
    let twice = average_argmax(&[s.clone(), s], None).unwrap();
    assert_eq!(out, twice);
}

#[test]
fn vote_shape_errors() {
    let sp = Spacing::isotropic(0.3).unwrap();
    let a = LabelVolume::new([2, 1, 1], sp, vec![1, 2]).unwrap();
    let b = LabelVolume::new([1, 2, 1], sp, vec![1, 2]).unwrap();
    assert!(majority_vote(&[a.clone(), b], None).is_err());
    let c = LabelVolume::new([2, 1, 1], Spacing::isotropic(0.4).unwrap(), vec![1, 2]).unwrap();
    assert!(majority_vote(&[a, c], None).is_err());
}

fn arb_votes() -> impl Strategy<Value = Vec<LabelVolume>> {
    (2usize..6, 1usize..40, any::<u64>()).prop_map(|(m, n, seed)| {
        let mut r = common::rng(seed);
        (0..m)
            .map(|_| {
                let d = (0..n).map(|_| r.random_range(0..4)).collect();
                LabelVolume::new([n, 1, 1], Spacing::isotropic(1.0).unwrap(), d).unwrap()
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn vote_picks_a_maximal_label(v in arb_votes()) {
        let out = majority_vote(&v, None).unwrap();
        for i in 0..out.len() {
            let o = out.data()[i];
            let count = |l: u32| v.iter().filter(|x| x.data()[i] == l).count();
            let max = v.iter().map(|x| count(x.data()[i])).max().unwrap();
            prop_assert_eq!(count(o), max);
            // the first voter (in input order) with a maximal label decides
            let first = v.iter().map(|x| x.data()[i]).find(|&l| count(l) == max).unwrap();
            prop_assert_eq!(o, first);
        }
    }

    #[test]
    fn vote_priority_is_a_permutation_of_inputs(v in arb_votes()) {
        let n = v.len();
        let prio: Vec<usize> = (0..n).rev().collect();
        let reversed: Vec<LabelVolume> = v.iter().rev().cloned().collect();
        prop_assert_eq!(
            majority_vote(&v, Some(&prio)).unwrap(),
            majority_vote(&reversed, None).unwrap()
        );
    }
}

#[test]
fn label_io_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = common::rng(9);
    for k in 0..50 {
        let dims = [r.random_range(1..12), r.random_range(1..12), r.random_range(1..12)];
        let max = if k % 2 == 0 { 48 } else { 3000 };
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| r.random_range(0..=max)).collect();
        let sp = Spacing::new(0.3, 0.25, 0.5).unwrap();
        let v = LabelVolume::new(dims, sp, data).unwrap();
        let p = dir.path().join(format!("v{k}.nii"));
        write_label_volume(&v, &p).unwrap();
        let back = read_label_volume(&p).unwrap();
        assert_eq!(back, v);

        let bytes = label_volume_to_bytes(&v).unwrap();
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&bytes).unwrap();
        let gz = dir.path().join(format!("v{k}.nii.gz"));
        std::fs::write(&gz, enc.finish().unwrap()).unwrap();
        assert_eq!(read_label_volume(&gz).unwrap(), v);
        assert_eq!(labels_from_bytes(&bytes).unwrap(), v);
    }
}
