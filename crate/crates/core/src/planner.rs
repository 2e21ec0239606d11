//! U-Net topology derivation from a patch size.
//!
//! Each axis is halved while its extent is strictly greater than
//! `2 * min_edge`; axes stop independently and the deepest axis sets the
//! stage count.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::volume::NormalizationScheme;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub patch_size: [usize; 3],
    #[serde(default)]
    pub median_image_size: Option<[usize; 3]>,
    pub min_edge: usize,
    pub max_features: usize,
    pub base_features: usize,
    /// Blocks per encoder stage; the last entry repeats for deeper stages.
    pub encoder_blocks_schedule: Vec<usize>,
    pub mirror_axes: Vec<usize>,
    pub normalization: NormalizationScheme,
    pub batch_size: u32,
    pub epochs: u32,
}

impl PlanRequest {
    pub fn new(patch_size: [usize; 3]) -> Self {
        PlanRequest {
            patch_size,
            median_image_size: None,
            min_edge: 4,
            max_features: 320,
            base_features: 32,
            encoder_blocks_schedule: vec![1, 3, 4, 6, 6, 6],
            mirror_axes: vec![0, 1, 2],
            normalization: NormalizationScheme::toothfairy2_ct(),
            batch_size: 2,
            epochs: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPlan(m));
        if self.min_edge == 0 || self.base_features == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("min_edge, base_features, batch_size and epochs must be positive".into());
        }
        if self.max_features < self.base_features {
            return bad(format!(
                "max_features {} is below base_features {}",
                self.max_features, self.base_features
            ));
        }
        if self.encoder_blocks_schedule.is_empty() || self.encoder_blocks_schedule.contains(&0) {
            return bad("encoder block schedule must be non-empty and positive".into());
        }
        if let Some(a) = self.patch_size.iter().position(|&p| p < self.min_edge) {
            return bad(format!(
                "patch size {:?} is below min_edge {} on axis {a}",
                self.patch_size, self.min_edge
            ));
        }
        let mut axes = self.mirror_axes.clone();
        axes.sort_unstable();
        axes.dedup();
        if axes.len() != self.mirror_axes.len() || axes.iter().any(|&a| a > 2) {
            return bad(format!(
                "mirror axes {:?} must be distinct values in 0..=2",
                self.mirror_axes
            ));
        }
        self.normalization.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkPlan {
    pub patch_size: [usize; 3],
    pub n_stages: usize,
    /// Per stage, per axis: 1 or 2. Stage 0 is always 1.
    pub strides: Vec<[usize; 3]>,
    pub bottleneck_stride: [usize; 3],
    pub features_per_stage: Vec<usize>,
    pub encoder_blocks: Vec<usize>,
    /// One convolution per decoder stage (`n_stages - 1` stages).
    pub decoder_convs: Vec<usize>,
    pub mirror_axes: Vec<usize>,
    pub normalization: NormalizationScheme,
    pub batch_size: u32,
    pub epochs: u32,
}

/// Number of halvings of `extent` while it stays above `2 * min_edge`.
pub fn pool_count(extent: usize, min_edge: usize) -> usize {
    // extent / 2^k > 2 * min_edge, compared without rounding
    let mut k = 0;
    while extent as u128 > (2 * min_edge as u128) << k {
        k += 1;
    }
    k
}

pub fn plan_topology(req: &PlanRequest) -> Result<NetworkPlan> {
    req.validate()?;
    let pools = req.patch_size.map(|p| pool_count(p, req.min_edge));
    let n_stages = 1 + pools.iter().max().copied().unwrap();
    let bottleneck_stride = pools.map(|k| 1usize << k);
    for a in 0..3 {
        if !req.patch_size[a].is_multiple_of(bottleneck_stride[a]) {
            let s = bottleneck_stride[a];
            let down = req.patch_size[a] / s * s;
            return Err(Error::InvalidPlan(format!(
                "patch extent {} on axis {a} is not divisible by its stride {s} (try {} or {})",
                req.patch_size[a],
                down,
                down + s
            )));
        }
    }
    let strides = (0..n_stages)
        .map(|s| pools.map(|k| if s >= 1 && s <= k { 2 } else { 1 }))
        .collect();
    let features_per_stage = (0..n_stages)
        .map(|s| {
            req.base_features
                .checked_shl(s as u32)
                .filter(|f| f >> s == req.base_features)
                .map_or(req.max_features, |f| f.min(req.max_features))
        })
        .collect();
    let sched = &req.encoder_blocks_schedule;
    let encoder_blocks = (0..n_stages)
        .map(|s| sched[s.min(sched.len() - 1)])
        .collect();
    let mut mirror_axes = req.mirror_axes.clone();
    mirror_axes.sort_unstable();
    Ok(NetworkPlan {
        patch_size: req.patch_size,
        n_stages,
        strides,
        bottleneck_stride,
        features_per_stage,
        encoder_blocks,
        decoder_convs: vec![1; n_stages - 1],
        mirror_axes,
        normalization: req.normalization,
        batch_size: req.batch_size,
        epochs: req.epochs,
    })
}

impl NetworkPlan {
    /// Checks internal consistency (used after loading a file).
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidPlan(m.into()));
        let n = self.n_stages;
        if n == 0
            || self.strides.len() != n
            || self.features_per_stage.len() != n
            || self.encoder_blocks.len() != n
            || self.decoder_convs.len() != n - 1
        {
            return bad("per-stage lists do not match n_stages");
        }
        if self.strides[0] != [1, 1, 1] {
            return bad("stage 0 must have stride 1");
        }
        for a in 0..3 {
            let mut prod = 1;
            for s in &self.strides {
                if s[a] != 1 && s[a] != 2 {
                    return bad("strides must be 1 or 2");
                }
                prod *= s[a];
            }
            if prod != self.bottleneck_stride[a] {
                return bad("bottleneck stride is not the product of the stage strides");
            }
            if !self.patch_size[a].is_multiple_of(prod) {
                return bad("patch size is not divisible by the bottleneck stride");
            }
        }
        if self.mirror_axes.iter().any(|&a| a > 2) {
            return bad("mirror axes must be in 0..=2");
        }
        self.normalization.validate()
    }

    pub fn to_canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("plan serializes");
        let mut s = String::new();
        write_canonical(&v, 0, &mut s);
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let p: NetworkPlan =
            serde_json::from_str(s).map_err(|e| Error::InvalidPlan(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }
}

/// Pretty JSON with object keys sorted and short numeric arrays on one line.
fn write_canonical(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push_str(": ");
                write_canonical(&m[key.as_str()], indent + 1, out);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            let items: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            out.push('[');
            out.push_str(&items.join(", "));
            out.push(']');
        }
        Value::Array(a) => {
            out.push_str("[\n");
            for (k, x) in a.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_canonical(x, indent + 1, out);
                out.push_str(if k + 1 < a.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

pub fn emit_plan(plan: &NetworkPlan, path: &Path) -> Result<()> {
    std::fs::write(path, plan.to_canonical_json()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PatchWarning {
    pub axis: usize,
    pub patch: usize,
    pub median: usize,
}

impl fmt::Display for PatchWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "axis {}: patch extent {} exceeds the median image extent {}; \
             instance normalization statistics may degrade",
            self.axis, self.patch, self.median
        )
    }
}

/// One warning per axis where the patch is larger than the median image.
pub fn validate_patch_size(patch: [usize; 3], median: [usize; 3]) -> Vec<PatchWarning> {
    (0..3)
        .filter(|&a| patch[a] > median[a])
        .map(|a| PatchWarning {
            axis: a,
            patch: patch[a],
            median: median[a],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_counts() {
        assert_eq!(pool_count(8, 4), 0);
        assert_eq!(pool_count(9, 4), 1);
        assert_eq!(pool_count(112, 4), 4);
        assert_eq!(pool_count(256, 4), 5);
        assert_eq!(pool_count(320, 4), 6);
        assert_eq!(pool_count(usize::MAX, 4), 61);
    }

    #[test]
    fn strides_layout() {
        let p = plan_topology(&PlanRequest::new([112, 224, 256])).unwrap();
        assert_eq!(p.strides[0], [1, 1, 1]);
        assert_eq!(p.strides[4], [2, 2, 2]);
        assert_eq!(p.strides[5], [1, 2, 2]);
        assert_eq!(p.decoder_convs, vec![1; 5]);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(plan_topology(&PlanRequest::new([3, 8, 8])).is_err());
        assert!(plan_topology(&PlanRequest::new([9, 8, 8])).is_err());
        let mut r = PlanRequest::new([8, 8, 8]);
        r.mirror_axes = vec![0, 0];
        assert!(plan_topology(&r).is_err());
        r.mirror_axes = vec![3];
        assert!(plan_topology(&r).is_err());
    }

    #[test]
    fn canonical_json_sorted() {
        let p = plan_topology(&PlanRequest::new([160, 320, 320])).unwrap();
        let s = p.to_canonical_json();
        let keys: Vec<&str> = s
            .lines()
            .filter(|l| l.starts_with("  \""))
            .map(|l| l.trim().split('"').nth(1).unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(NetworkPlan::from_json_str(&s).unwrap(), p);
    }
}
