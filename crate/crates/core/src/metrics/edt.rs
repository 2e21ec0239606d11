//! Exact anisotropic squared Euclidean distance transform.
//!
//! Separable: an exact 1D scan along x, then lower-envelope-of-parabolas
//! passes along y and z. Every output value is the float minimum, over all
//! source voxels, of
//!
//! ```text
//! ((dx*sx)^2 + (dy*sy)^2) + (dz*sz)^2
//! ```
//!
//! evaluated in exactly that order. Float addition is monotone, so taking the
//! float minimum one axis at a time yields the global float minimum, provided
//! each 1D pass is itself exact. The envelope is built with a small tolerance
//! so that near-tied parabolas are kept, and at evaluation time every envelope
//! entry whose interval touches the query position is evaluated directly.

use crate::error::{Error, Result};
use crate::volume::{Mask, ScalarVolume, Spacing, Volume};

/// Squared distance contribution of an integer offset along one axis.
#[inline]
pub(crate) fn axis_term(d: usize, s: f64) -> f64 {
    let t = d as f64 * s;
    t * t
}

/// Envelope entries are dropped only when clearly dominated.
const DROP_TOL: f64 = 1e-6;
/// Half-width of the position window in which envelope entries are evaluated.
const EVAL_WINDOW: f64 = 1e-3;

pub(crate) struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
    line: Vec<f64>,
}

impl Envelope {
    pub(crate) fn new() -> Self {
        Envelope {
            v: Vec::new(),
            z: Vec::new(),
            line: Vec::new(),
        }
    }

    /// In place: `f[p] <- min_q fl(f[q] + (|p-q|*s)^2)`, with `inf` meaning no source.
    pub(crate) fn transform(&mut self, f: &mut [f64], s: f64) {
        let n = f.len();
        let w = s * s;
        self.v.clear();
        self.z.clear();
        for q in 0..n {
            let fq = f[q];
            if !fq.is_finite() {
                continue;
            }
            let qf = q as f64;
            loop {
                let Some(&last) = self.v.last() else {
                    self.v.push(q);
                    self.z.push(f64::NEG_INFINITY);
                    break;
                };
                let lf = last as f64;
                let x = ((fq + w * qf * qf) - (f[last] + w * lf * lf)) / (2.0 * w * (qf - lf));
                let k = self.v.len() - 1;
                if k > 0 && x < self.z[k] - DROP_TOL {
                    self.v.pop();
                    self.z.pop();
                    continue;
                }
                self.v.push(q);
                self.z.push(x);
                break;
            }
        }
        if self.v.is_empty() {
            return;
        }

        self.line.clear();
        self.line.extend_from_slice(f);
        let src = &self.line;
        let len = self.v.len();
        let mut k0 = 0;
        for (p, out) in f.iter_mut().enumerate() {
            let pf = p as f64;
            while k0 + 1 < len && self.z[k0 + 1] < pf - EVAL_WINDOW {
                k0 += 1;
            }
            let mut best = f64::INFINITY;
            let mut k = k0;
            while k < len && (k == k0 || self.z[k] <= pf + EVAL_WINDOW) {
                let q = self.v[k];
                let val = src[q] + axis_term(p.abs_diff(q), s);
                if val < best {
                    best = val;
                }
                k += 1;
            }
            *out = best;
        }
    }
}

/// Exact 1D nearest-source distance along x, written as `axis_term`.
fn scan_x(src: &[bool], out: &mut [f64], s: f64) {
    let n = src.len();
    let mut last: Option<usize> = None;
    let mut dist = vec![usize::MAX; n];
    for i in 0..n {
        if src[i] {
            last = Some(i);
        }
        if let Some(l) = last {
            dist[i] = i - l;
        }
    }
    last = None;
    for i in (0..n).rev() {
        if src[i] {
            last = Some(i);
        }
        if let Some(l) = last {
            dist[i] = dist[i].min(l - i);
        }
    }
    for (o, d) in out.iter_mut().zip(dist) {
        *o = if d == usize::MAX {
            f64::INFINITY
        } else {
            axis_term(d, s)
        };
    }
}

/// Squared distances (mm²) from every voxel to the nearest `true` voxel of
/// `src`. Voxels are in x-fastest order over `dims`. All-false input yields
/// all-infinite output.
pub(crate) fn edt_sq_raw(dims: [usize; 3], spacing: Spacing, src: &[bool]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let n = nx * ny * nz;
    debug_assert_eq!(src.len(), n);
    let mut out = vec![f64::INFINITY; n];
    if n == 0 {
        return out;
    }
    for row in 0..ny * nz {
        let r = row * nx..(row + 1) * nx;
        scan_x(&src[r.clone()], &mut out[r], spacing.0[0]);
    }

    let mut env = Envelope::new();
    let mut buf = Vec::new();
    if ny > 1 {
        buf.resize(ny, 0.0);
        for z in 0..nz {
            for x in 0..nx {
                let base = x + nx * ny * z;
                let mut any = false;
                for (y, b) in buf.iter_mut().enumerate() {
                    *b = out[base + nx * y];
                    any |= b.is_finite();
                }
                if !any {
                    continue;
                }
                env.transform(&mut buf, spacing.0[1]);
                for (y, b) in buf.iter().enumerate() {
                    out[base + nx * y] = *b;
                }
            }
        }
    }
    if nz > 1 {
        buf.resize(nz, 0.0);
        let plane = nx * ny;
        for base in 0..plane {
            let mut any = false;
            for (z, b) in buf.iter_mut().enumerate() {
                *b = out[base + plane * z];
                any |= b.is_finite();
            }
            if !any {
                continue;
            }
            env.transform(&mut buf, spacing.0[2]);
            for (z, b) in buf.iter().enumerate() {
                out[base + plane * z] = *b;
            }
        }
    }
    out
}

/// Squared Euclidean distance (mm²) from each voxel to the nearest foreground
/// voxel of `mask`. Foreground voxels map to 0.
pub fn edt_sq(mask: &Mask) -> Result<ScalarVolume> {
    if !mask.data().iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    let d = edt_sq_raw(mask.dims(), mask.spacing(), mask.data());
    Volume::new(mask.dims(), mask.spacing(), d)
}
