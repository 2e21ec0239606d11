//! Seeded synthetic volumes for tests, benchmarks and demos.
//!
//! Everything is driven by a ChaCha8 stream seeded with an explicit `u64`,
//! so outputs are identical across platforms and runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume, Spacing};

fn check_dims(dims: [usize; 3], min: usize) -> Result<()> {
    if dims.iter().any(|&d| d < min) {
        return Err(Error::InvalidArgument(format!(
            "synthetic volumes need every extent >= {min}, got {dims:?}"
        )));
    }
    Ok(())
}

/// Half-open box `lo..hi` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Box3 {
    lo: [usize; 3],
    hi: [usize; 3],
}

impl Box3 {
    fn random(r: &mut ChaCha8Rng, dims: [usize; 3], min: usize, max: usize) -> Box3 {
        let mut lo = [0; 3];
        let mut hi = [0; 3];
        for a in 0..3 {
            let ext = r.random_range(min..=max.max(min)).min(dims[a]);
            lo[a] = r.random_range(0..=dims[a] - ext);
            hi[a] = lo[a] + ext;
        }
        Box3 { lo, hi }
    }

    fn shifted(self, r: &mut ChaCha8Rng, dims: [usize; 3]) -> Box3 {
        let mut b = self;
        for a in 0..3 {
            let d = r.random_range(-1i64..=1) as isize;
            let ext = b.hi[a] - b.lo[a];
            let lo = (b.lo[a] as isize + d).clamp(0, (dims[a] - ext) as isize) as usize;
            b.lo[a] = lo;
            b.hi[a] = lo + ext;
        }
        b
    }

    /// Chebyshev gap between the two boxes in voxels (0 when they overlap).
    fn gap(&self, o: &Box3) -> usize {
        (0..3)
            .map(|a| {
                if self.hi[a] <= o.lo[a] {
                    o.lo[a] - self.hi[a] + 1
                } else if o.hi[a] <= self.lo[a] {
                    self.lo[a] - o.hi[a] + 1
                } else {
                    0
                }
            })
            .max()
            .unwrap()
    }

    fn paint(&self, dims: [usize; 3], data: &mut [u32], value: u32) {
        for z in self.lo[2]..self.hi[2] {
            for y in self.lo[1]..self.hi[1] {
                let row = dims[0] * (y + dims[1] * z);
                data[row + self.lo[0]..row + self.hi[0]].fill(value);
            }
        }
    }
}

/// A `(prediction, ground truth)` pair with a mix of true positives, shifted
/// detections, misses, whole-class false positives and small spurious
/// fragments for each label.
pub fn synth_case(
    seed: u64,
    dims: [usize; 3],
    spacing: Spacing,
    labels: &[u32],
) -> Result<(LabelVolume, LabelVolume)> {
    check_dims(dims, 4)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let mut gt = vec![0u32; n];
    let mut pred = vec![0u32; n];
    let big = (dims.iter().min().unwrap() / 3).max(3);
    for &label in labels {
        if r.random_bool(0.6) {
            let b = Box3::random(&mut r, dims, 3, big);
            b.paint(dims, &mut gt, label);
            if r.random_bool(0.85) {
                b.shifted(&mut r, dims).paint(dims, &mut pred, label);
            }
        } else if r.random_bool(0.4) {
            Box3::random(&mut r, dims, 2, big).paint(dims, &mut pred, label);
        }
        for _ in 0..r.random_range(0..=3) {
            Box3::random(&mut r, dims, 1, 2).paint(dims, &mut pred, label);
        }
    }
    Ok((
        LabelVolume::new(dims, spacing, pred)?,
        LabelVolume::new(dims, spacing, gt)?,
    ))
}

/// An instance map of up to `max_instances` blobs. Each blob is the union of
/// two boxes sharing at least a 3x3x3 block, every box extent is >= 3, and
/// distinct blobs are separated by at least one background voxel (Chebyshev
/// gap >= 2). Instance ids are random, non-contiguous positive integers.
pub fn synth_instances(
    seed: u64,
    dims: [usize; 3],
    spacing: Spacing,
    max_instances: usize,
) -> Result<LabelVolume> {
    check_dims(dims, 3)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let mut data = vec![0u32; n];
    let max_ext = (dims.iter().min().unwrap() / 2).max(3);
    let mut placed: Vec<[Box3; 2]> = Vec::new();
    let mut next_id = 0u32;
    for _ in 0..max_instances * 20 {
        if placed.len() == max_instances {
            break;
        }
        let a = Box3::random(&mut r, dims, 3, max_ext);
        // second box: grown from a 3x3x3 block inside `a`
        let mut b = a;
        for ax in 0..3 {
            let start = r.random_range(a.lo[ax]..=a.hi[ax] - 3);
            let lo = start.saturating_sub(r.random_range(0..=3));
            let hi = (start + 3 + r.random_range(0..=3)).min(dims[ax]);
            b.lo[ax] = lo;
            b.hi[ax] = hi;
        }
        let ok = placed
            .iter()
            .all(|p| p.iter().all(|q| q.gap(&a) >= 2 && q.gap(&b) >= 2));
        if !ok {
            continue;
        }
        next_id += r.random_range(1..=3);
        a.paint(dims, &mut data, next_id);
        b.paint(dims, &mut data, next_id);
        placed.push([a, b]);
    }
    LabelVolume::new(dims, spacing, data)
}

/// CT-like intensities in roughly [-1100, 3600].
pub fn synth_ct(seed: u64, dims: [usize; 3], spacing: Spacing) -> Result<ScalarVolume> {
    check_dims(dims, 1)?;
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = dims.iter().product();
    let data = (0..n).map(|_| r.random_range(-1100.0..3600.0)).collect();
    ScalarVolume::new(dims, spacing, data)
}
