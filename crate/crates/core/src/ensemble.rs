//! Combining several model outputs into one label map.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti::{read_4d_channels, write_4d_channels};
use crate::volume::{LabelVolume, Spacing};

/// Allowed deviation of a voxel's channel sum from 1.
pub const PROB_SUM_TOLERANCE: f64 = 1e-3;

const CHUNK: usize = 1 << 14;

fn check_priority(priority: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if priority.len() != n {
        return Err(Error::InvalidEnsemble(format!(
            "priority lists {} models, expected {n}",
            priority.len()
        )));
    }
    for &p in priority {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidEnsemble(format!(
                "priority {priority:?} is not a permutation of 0..{n}"
            )));
        }
    }
    Ok(())
}

/// Per-voxel most frequent label. On a tie the label of the earliest model in
/// `priority` (indices into `preds`) that voted for a maximal-count label
/// wins; `None` means input order.
pub fn majority_vote(preds: &[LabelVolume], priority: Option<&[usize]>) -> Result<LabelVolume> {
    if preds.len() < 2 {
        return Err(Error::InvalidEnsemble(format!(
            "voting needs at least 2 label maps, got {}",
            preds.len()
        )));
    }
    for p in &preds[1..] {
        preds[0].check_same_grid(p)?;
    }
    let order: Vec<usize> = match priority {
        Some(p) => {
            check_priority(p, preds.len())?;
            p.to_vec()
        }
        None => (0..preds.len()).collect(),
    };
    let data: Vec<&[u32]> = order.iter().map(|&k| preds[k].data()).collect();
    let mut out = vec![0u32; preds[0].len()];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (j, o) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let mut best = (0usize, 0u32);
            for (k, d) in data.iter().enumerate() {
                let l = d[i];
                // counted already through an earlier, higher-priority voter
                if data[..k].iter().any(|e| e[i] == l) {
                    continue;
                }
                let n = data[k..].iter().filter(|e| e[i] == l).count();
                if n > best.0 {
                    best = (n, l);
                }
            }
            *o = best.1;
        }
    });
    preds[0].with_data(out)
}

/// Per-class probabilities of one model, channel-major:
/// `data[c * n_voxels + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbStack {
    pub dims: [usize; 3],
    pub spacing: Spacing,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ProbStack {
    pub fn new(dims: [usize; 3], spacing: Spacing, channels: usize, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if channels == 0 || data.len() != n * channels {
            return Err(Error::InvalidEnsemble(format!(
                "stack of {channels} channels over {dims:?} needs {} values, got {}",
                n * channels,
                data.len()
            )));
        }
        Ok(ProbStack {
            dims,
            spacing,
            channels,
            data,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.n_voxels();
        &self.data[c * n..(c + 1) * n]
    }

    /// First voxel whose channel sum is off by more than the tolerance.
    pub fn check_normalized(&self) -> Result<()> {
        let n = self.n_voxels();
        for i in 0..n {
            let s: f64 = (0..self.channels).map(|c| self.data[c * n + i]).sum();
            // NaN sums fail too
            if (s - 1.0).abs().is_nan() || (s - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::InvalidEnsemble(format!(
                    "voxel {i}: channel sum {s} is not within {PROB_SUM_TOLERANCE} of 1"
                )));
            }
        }
        Ok(())
    }
}

/// Mean of the models' probabilities per channel, then per-voxel argmax; ties
/// go to the lowest channel. The output value is the channel index, or
/// `channel_labels[c]` when a mapping is given.
pub fn average_argmax(stacks: &[ProbStack], channel_labels: Option<&[u32]>) -> Result<LabelVolume> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::InvalidEnsemble("no probability stacks".into()))?;
    for s in stacks {
        if s.dims != first.dims {
            return Err(Error::DimMismatch(first.dims, s.dims));
        }
        if s.spacing != first.spacing {
            return Err(Error::SpacingMismatch(first.spacing.0, s.spacing.0));
        }
        if s.channels != first.channels {
            return Err(Error::InvalidEnsemble(format!(
                "channel counts differ: {} vs {}",
                first.channels, s.channels
            )));
        }
    }
    if let Some(l) = channel_labels {
        if l.len() != first.channels {
            return Err(Error::InvalidEnsemble(format!(
                "{} channel labels for {} channels",
                l.len(),
                first.channels
            )));
        }
    }
    stacks.par_iter().try_for_each(ProbStack::check_normalized)?;

    let n = first.n_voxels();
    let m = stacks.len() as f64;
    let mut out = vec![0u32; n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let base = c * CHUNK;
        for (j, o) in chunk.iter_mut().enumerate() {
            let i = base + j;
            let mut best = (f64::NEG_INFINITY, 0usize);
            for ch in 0..first.channels {
                let mean = stacks.iter().map(|s| s.data[ch * n + i]).sum::<f64>() / m;
                if mean > best.0 {
                    best = (mean, ch);
                }
            }
            *o = match channel_labels {
                Some(l) => l[best.1],
                None => best.1 as u32,
            };
        }
    });
    LabelVolume::new(first.dims, first.spacing, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSidecar {
    pub channels: usize,
    pub layout: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
}

pub const CHANNEL_MAJOR: &str = "channel_major";

/// `case.nii.gz` -> `case.json`.
pub fn sidecar_path(stack: &Path) -> PathBuf {
    let name = stack
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(&name);
    stack.with_file_name(format!("{stem}.json"))
}

/// Reads a 4D stack and its sidecar.
pub fn read_prob_stack(path: &Path) -> Result<(ProbStack, StackSidecar)> {
    let sc_path = sidecar_path(path);
    let text = std::fs::read_to_string(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
    let sc: StackSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&sc_path, e))?;
    if sc.layout != CHANNEL_MAJOR {
        return Err(Error::InvalidEnsemble(format!(
            "{}: layout {:?} is not supported, expected {CHANNEL_MAJOR:?}",
            sc_path.display(),
            sc.layout
        )));
    }
    let (data, dims, spacing, channels) = read_4d_channels(path)?;
    if channels != sc.channels {
        return Err(Error::InvalidEnsemble(format!(
            "{}: sidecar declares {} channels, file has {channels}",
            path.display(),
            sc.channels
        )));
    }
    if sc.labels.as_ref().is_some_and(|l| l.len() != channels) {
        return Err(Error::InvalidEnsemble(format!(
            "{}: sidecar label list does not match {channels} channels",
            sc_path.display()
        )));
    }
    Ok((ProbStack::new(dims, spacing, channels, data)?, sc))
}

/// Writes the stack as 4D float32 plus its sidecar.
pub fn write_prob_stack(stack: &ProbStack, labels: Option<&[u32]>, path: &Path) -> Result<()> {
    write_4d_channels(path, &stack.data, stack.dims, stack.spacing, stack.channels)?;
    let sc = StackSidecar {
        channels: stack.channels,
        layout: CHANNEL_MAJOR.into(),
        labels: labels.map(<[u32]>::to_vec),
    };
    let sc_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sc).expect("sidecar serializes") + "\n";
    std::fs::write(&sc_path, text).map_err(|e| Error::io(&sc_path, e))
}
