//! Border-core instance representation.
//!
//! `encode` turns an instance map into {0 background, 1 core, 2 border};
//! `decode` recovers instances from the cores and hands every border voxel to
//! the nearest core by breadth-first propagation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::postprocess::{label_components, Connectivity};
use crate::volume::LabelVolume;

pub const BACKGROUND: u32 = 0;
pub const CORE: u32 = 1;
pub const BORDER: u32 = 2;

pub const DEFAULT_BORDER_WIDTH: usize = 1;
pub const DEFAULT_MIN_ORPHAN_SIZE: u64 = 10;

/// One separable pass along `axis`: `ok[i]` stays true iff every voxel within
/// `w` steps along the axis is in bounds, carries the same label as `i`, and
/// was itself `ok` before the pass.
fn uniform_pass(dims: [usize; 3], labels: &[u32], ok: &mut [bool], axis: usize, w: usize) {
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let len = dims[axis];
    let (outer_a, outer_b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let prev = ok.to_vec();
    for b in 0..dims[outer_b] {
        for a in 0..dims[outer_a] {
            let mut p = [0; 3];
            p[outer_a] = a;
            p[outer_b] = b;
            let start = p[0] + dims[0] * (p[1] + dims[1] * p[2]);
            let at = |k: usize| start + k * stride;
            let mut s = 0;
            while s < len {
                // maximal run of ok voxels with one label
                let l = labels[at(s)];
                let mut e = s;
                while e < len && prev[at(e)] && labels[at(e)] == l {
                    e += 1;
                }
                if e == s {
                    ok[at(s)] = false;
                    s += 1;
                    continue;
                }
                for k in s..e {
                    ok[at(k)] = k >= s + w && k + w < e;
                }
                s = e;
            }
        }
    }
}

/// A foreground voxel is border when any voxel within Chebyshev radius
/// `border_width` is out of bounds or carries a different value.
pub fn encode(inst: &LabelVolume, border_width: usize) -> Result<LabelVolume> {
    if border_width == 0 {
        return Err(Error::InvalidArgument("border width must be >= 1".into()));
    }
    let dims = inst.dims();
    let labels = inst.data();
    let mut ok: Vec<bool> = labels.iter().map(|&l| l != 0).collect();
    for axis in 0..3 {
        uniform_pass(dims, labels, &mut ok, axis, border_width);
    }
    let out = labels
        .iter()
        .zip(&ok)
        .map(|(&l, &c)| match (l, c) {
            (0, _) => BACKGROUND,
            (_, true) => CORE,
            (_, false) => BORDER,
        })
        .collect();
    inst.with_data(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecodeReport {
    /// Instances grown from cores (ids `1..=core_instances`).
    pub core_instances: u32,
    /// Core-less border components kept as instances.
    pub promoted_orphans: u32,
    pub dropped_orphans: u32,
    pub dropped_voxels: u64,
}

const SIX: [[isize; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Recovers instances: 26-connected core components numbered by first voxel,
/// border voxels claimed level by level through 6-neighbour steps (lower id
/// wins a tie), then unreachable border components either promoted (size >=
/// `min_orphan_size`) or dropped.
pub fn decode(bc: &LabelVolume, min_orphan_size: u64) -> Result<(LabelVolume, DecodeReport)> {
    if let Some(&v) = bc.data().iter().find(|&&v| v > BORDER) {
        return Err(Error::InvalidArgument(format!(
            "border-core maps hold only 0, 1, 2; found {v}"
        )));
    }
    let dims = bc.dims();
    let [nx, ny, nz] = dims;
    let d = bc.data();
    let core: Vec<bool> = d.iter().map(|&v| v == CORE).collect();
    let (mut ids, sizes) = label_components(dims, &core, Connectivity::TwentySix);
    let core_instances = sizes.len() as u32;

    let mut frontier: Vec<usize> = (0..d.len()).filter(|&i| ids[i] != 0).collect();
    let mut tentative = vec![u32::MAX; d.len()];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &i in &frontier {
            let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
            for o in &SIX {
                let (qx, qy, qz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                if qx < 0 || qy < 0 || qz < 0 || qx >= nx as isize || qy >= ny as isize || qz >= nz as isize {
                    continue;
                }
                let j = qx as usize + nx * (qy as usize + ny * qz as usize);
                if d[j] != BORDER || ids[j] != 0 {
                    continue;
                }
                if tentative[j] == u32::MAX {
                    next.push(j);
                }
                tentative[j] = tentative[j].min(ids[i]);
            }
        }
        for &j in &next {
            ids[j] = tentative[j];
        }
        frontier = next;
    }

    let orphan: Vec<bool> = d
        .iter()
        .zip(&ids)
        .map(|(&v, &id)| v == BORDER && id == 0)
        .collect();
    let mut report = DecodeReport {
        core_instances,
        promoted_orphans: 0,
        dropped_orphans: 0,
        dropped_voxels: 0,
    };
    if orphan.iter().any(|&b| b) {
        let (oids, osizes) = label_components(dims, &orphan, Connectivity::TwentySix);
        let mut new_id = vec![0u32; osizes.len()];
        let mut next_id = core_instances;
        for (k, &s) in osizes.iter().enumerate() {
            if s >= min_orphan_size {
                next_id += 1;
                new_id[k] = next_id;
                report.promoted_orphans += 1;
            } else {
                report.dropped_orphans += 1;
                report.dropped_voxels += s;
            }
        }
        for (id, &o) in ids.iter_mut().zip(&oids) {
            if o != 0 {
                *id = new_id[o as usize - 1];
            }
        }
    }
    Ok((bc.with_data(ids)?, report))
}
