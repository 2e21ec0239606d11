#![allow(dead_code)]

//! Independent brute-force oracles and random fixtures shared by the
//! integration tests. Nothing here calls into the implementation paths it
//! checks.

use cbctseg::{Mask, Spacing, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn idx(dims: [usize; 3], p: [usize; 3]) -> usize {
    p[0] + dims[0] * (p[1] + dims[1] * p[2])
}

pub fn coords(dims: [usize; 3], i: usize) -> [usize; 3] {
    [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])]
}

/// Random dims in `1..=max` per axis and a mask with the given fill rate.
pub fn random_mask(r: &mut ChaCha8Rng, max: usize, spacing: Spacing, fill: f64) -> Mask {
    let dims = [
        r.random_range(1..=max),
        r.random_range(1..=max),
        r.random_range(1..=max),
    ];
    random_mask_dims(r, dims, spacing, fill)
}

pub fn random_mask_dims(r: &mut ChaCha8Rng, dims: [usize; 3], spacing: Spacing, fill: f64) -> Mask {
    let n = dims.iter().product();
    let data = (0..n).map(|_| r.random_bool(fill)).collect();
    Volume::new(dims, spacing, data).unwrap()
}

/// `((dx*sx)^2 + (dy*sy)^2) + (dz*sz)^2` from integer offsets.
pub fn sq_dist(a: [usize; 3], b: [usize; 3], s: Spacing) -> f64 {
    let t = |k: usize| {
        let v = a[k].abs_diff(b[k]) as f64 * s.0[k];
        v * v
    };
    (t(0) + t(1)) + t(2)
}

/// O(n^2) squared EDT.
pub fn brute_edt_sq(m: &Mask) -> Vec<f64> {
    let d = m.dims();
    let src: Vec<[usize; 3]> = (0..m.len()).filter(|&i| m.data()[i]).map(|i| coords(d, i)).collect();
    (0..m.len())
        .map(|i| {
            let p = coords(d, i);
            src.iter()
                .map(|&q| sq_dist(p, q, m.spacing()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Foreground voxels with a 6-neighbour that is background or out of bounds.
pub fn brute_surface(m: &Mask) -> Vec<[usize; 3]> {
    let d = m.dims();
    let on = |p: [isize; 3]| -> bool {
        (0..3).all(|k| p[k] >= 0 && (p[k] as usize) < d[k])
            && m.data()[idx(d, [p[0] as usize, p[1] as usize, p[2] as usize])]
    };
    let mut out = Vec::new();
    for i in 0..m.len() {
        if !m.data()[i] {
            continue;
        }
        let c = coords(d, i);
        let c = [c[0] as isize, c[1] as isize, c[2] as isize];
        let offs = [
            [1, 0, 0],
            [-1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ];
        if offs
            .iter()
            .any(|o| !on([c[0] + o[0], c[1] + o[1], c[2] + o[2]]))
        {
            out.push(coords(d, i));
        }
    }
    out
}

pub fn nearest_rank_oracle(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let k = ((p * m as f64 - 1e-9).ceil().max(1.0) as usize).min(m);
    sorted[k - 1]
}

/// Pairwise-distance HD95 between two non-empty masks.
pub fn brute_hd(a: &Mask, b: &Mask, p: f64) -> f64 {
    let s = a.spacing();
    let sa = brute_surface(a);
    let sb = brute_surface(b);
    let directed = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|&x| {
                to.iter()
                    .map(|&y| sq_dist(x, y, s))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .collect()
    };
    let mut all = directed(&sa, &sb);
    all.extend(directed(&sb, &sa));
    all.sort_by(|x, y| x.total_cmp(y));
    nearest_rank_oracle(&all, p)
}

/// Flood-fill partition: component id per voxel (usize::MAX for background),
/// ids by first-seen linear index.
pub fn flood_fill_labels(m: &Mask, conn26: bool) -> Vec<usize> {
    let d = m.dims();
    let mut lab = vec![usize::MAX; m.len()];
    let mut next = 0;
    let mut offs = Vec::new();
    for dz in -1isize..=1 {
        for dy in -1isize..=1 {
            for dx in -1isize..=1 {
                let nz = (dx != 0) as u8 + (dy != 0) as u8 + (dz != 0) as u8;
                if nz == 0 || (!conn26 && nz > 1) {
                    continue;
                }
                offs.push([dx, dy, dz]);
            }
        }
    }
    for start in 0..m.len() {
        if !m.data()[start] || lab[start] != usize::MAX {
            continue;
        }
        lab[start] = next;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let c = coords(d, i);
            for o in &offs {
                let q = [c[0] as isize + o[0], c[1] as isize + o[1], c[2] as isize + o[2]];
                if (0..3).any(|k| q[k] < 0 || q[k] as usize >= d[k]) {
                    continue;
                }
                let j = idx(d, [q[0] as usize, q[1] as usize, q[2] as usize]);
                if m.data()[j] && lab[j] == usize::MAX {
                    lab[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    lab
}

/// True when `a` and `b` have the same background and a one-to-one id map.
pub fn same_up_to_relabeling(a: &[u32], b: &[u32]) -> bool {
    use std::collections::HashMap;
    let mut fwd = HashMap::new();
    let mut back = HashMap::new();
    a.iter().zip(b).all(|(&x, &y)| {
        if (x == 0) != (y == 0) {
            return false;
        }
        x == 0 || (*fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
    })
}
