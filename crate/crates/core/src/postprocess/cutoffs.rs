use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::components::{label_components, Connectivity};
use crate::error::{Error, Result};
use crate::metrics::crop_label_mask;
use crate::volume::{LabelVolume, Region};

/// Minimum size (in voxels) an object needs to survive. `Infinite` removes
/// unconditionally. Ordered with every finite value below `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cutoff {
    Voxels(u64),
    Infinite,
}

impl Cutoff {
    #[inline]
    pub fn removes(self, size: u64) -> bool {
        match self {
            Cutoff::Voxels(t) => size < t,
            Cutoff::Infinite => true,
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::Voxels(v) => write!(f, "{v}"),
            Cutoff::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cutoff::Voxels(v) => s.serialize_u64(*v),
            Cutoff::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(Cutoff::Voxels(v)),
            Raw::Str(s) if s == "inf" => Ok(Cutoff::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "cutoff must be a non-negative integer or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// What a cutoff is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    /// Each connected component of the class is removed if it is too small.
    PerComponent,
    /// The whole class is removed if its total volume is too small.
    WholeClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCutoff {
    pub cutoff: Cutoff,
    pub cutoff_dice: Cutoff,
    pub cutoff_hd95: Cutoff,
}

impl ClassCutoff {
    /// The smaller of the two per-metric optima.
    pub fn from_metrics(cutoff_dice: Cutoff, cutoff_hd95: Cutoff) -> Self {
        ClassCutoff {
            cutoff: cutoff_dice.min(cutoff_hd95),
            cutoff_dice,
            cutoff_hd95,
        }
    }

    pub fn uniform(c: Cutoff) -> Self {
        Self::from_metrics(c, c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffTable {
    pub mode: CutoffMode,
    #[serde(default)]
    pub connectivity: Connectivity,
    pub classes: BTreeMap<u32, ClassCutoff>,
}

impl CutoffTable {
    pub fn uniform(
        mode: CutoffMode,
        labels: impl IntoIterator<Item = u32>,
        cutoff: Cutoff,
    ) -> Self {
        CutoffTable {
            mode,
            connectivity: Connectivity::default(),
            classes: labels
                .into_iter()
                .map(|l| (l, ClassCutoff::uniform(cutoff)))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, c) in &self.classes {
            if *label == 0 {
                return Err(Error::InvalidCutoffs(
                    "background (label 0) cannot carry a cutoff".into(),
                ));
            }
            if c.cutoff != c.cutoff_dice.min(c.cutoff_hd95) {
                return Err(Error::InvalidCutoffs(format!(
                    "class {label}: cutoff {} is not min({}, {})",
                    c.cutoff, c.cutoff_dice, c.cutoff_hd95
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let t: CutoffTable =
            serde_json::from_str(s).map_err(|e| Error::InvalidCutoffs(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("cutoff table serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, label: u32) -> Option<Cutoff> {
        self.classes.get(&label).map(|c| c.cutoff)
    }
}

/// Removes small predictions: replaces them with background.
pub fn apply_cutoffs(pred: &LabelVolume, table: &CutoffTable) -> Result<LabelVolume> {
    table.validate()?;
    let mut counts: BTreeMap<u32, (u64, Region)> = BTreeMap::new();
    let [nx, ny, nz] = pred.dims();
    let d = pred.data();
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            for x in 0..nx {
                let l = d[row + x];
                if l == 0 {
                    continue;
                }
                let e = counts.entry(l).or_insert((0, Region::empty()));
                e.0 += 1;
                e.1.include([x, y, z]);
            }
        }
    }
    for &l in counts.keys() {
        if !table.classes.contains_key(&l) {
            return Err(Error::InvalidCutoffs(format!(
                "label {l} present in prediction but missing from the cutoff table"
            )));
        }
    }

    let mut out = d.to_vec();
    for (&label, &(count, region)) in &counts {
        let cutoff = table.classes[&label].cutoff;
        match table.mode {
            CutoffMode::WholeClass => {
                if cutoff.removes(count) {
                    for v in out.iter_mut().filter(|v| **v == label) {
                        *v = 0;
                    }
                }
            }
            CutoffMode::PerComponent => {
                if cutoff == Cutoff::Voxels(0) {
                    continue;
                }
                let mask = crop_label_mask(pred, label, &region);
                let (ids, sizes) = label_components(region.dims(), &mask, table.connectivity);
                if !sizes.iter().any(|&s| cutoff.removes(s)) {
                    continue;
                }
                let rd = region.dims();
                for (k, &id) in ids.iter().enumerate() {
                    if id != 0 && cutoff.removes(sizes[id as usize - 1]) {
                        let (cx, cy, cz) = (k % rd[0], (k / rd[0]) % rd[1], k / (rd[0] * rd[1]));
                        let gi = pred.index(
                            region.lo[0] + cx,
                            region.lo[1] + cy,
                            region.lo[2] + cz,
                        );
                        out[gi] = 0;
                    }
                }
            }
        }
    }
    pred.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Spacing;

    fn vol(dims: [usize; 3], data: Vec<u32>) -> LabelVolume {
        LabelVolume::new(dims, Spacing::isotropic(0.3).unwrap(), data).unwrap()
    }

    #[test]
    fn json_format() {
        let mut t = CutoffTable::uniform(CutoffMode::PerComponent, [1, 2], Cutoff::Voxels(0));
        t.classes.insert(
            3,
            ClassCutoff::from_metrics(Cutoff::Infinite, Cutoff::Voxels(17)),
        );
        let s = t.to_json_string();
        assert!(s.contains("\"per_component\""));
        assert!(s.contains("\"3\""));
        assert!(s.contains("\"inf\""));
        let back = CutoffTable::from_json_str(&s).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.get(3), Some(Cutoff::Voxels(17)));

        let bad = r#"{"mode": "whole_class", "classes": {"1": {"cutoff": 5, "cutoff_dice": 5, "cutoff_hd95": 9}}}"#;
        assert!(CutoffTable::from_json_str(bad).is_ok());
        let bad = r#"{"mode": "whole_class", "classes": {"1": {"cutoff": 9, "cutoff_dice": 5, "cutoff_hd95": 9}}}"#;
        assert!(CutoffTable::from_json_str(bad).is_err());
        let bad = r#"{"mode": "whole_class", "classes": {"1": {"cutoff": "x", "cutoff_dice": 5, "cutoff_hd95": 9}}}"#;
        assert!(CutoffTable::from_json_str(bad).is_err());
    }

    #[test]
    fn ordering() {
        assert!(Cutoff::Voxels(u64::MAX) < Cutoff::Infinite);
        assert_eq!(Cutoff::Voxels(3).min(Cutoff::Infinite), Cutoff::Voxels(3));
        assert!(Cutoff::Infinite.removes(u64::MAX));
        assert!(!Cutoff::Voxels(0).removes(0));
    }

    #[test]
    fn zero_is_identity() {
        let v = vol([4, 1, 1], vec![1, 0, 2, 2]);
        for mode in [CutoffMode::PerComponent, CutoffMode::WholeClass] {
            let t = CutoffTable::uniform(mode, [1, 2], Cutoff::Voxels(0));
            assert_eq!(apply_cutoffs(&v, &t).unwrap(), v);
        }
    }

    #[test]
    fn whole_class_removal() {
        let mut d = vec![0u32; 40];
        d[..10].fill(3);
        let v = vol([40, 1, 1], d);
        let t = CutoffTable::uniform(CutoffMode::WholeClass, [3], Cutoff::Voxels(25));
        assert!(apply_cutoffs(&v, &t).unwrap().data().iter().all(|&x| x == 0));
    }

    #[test]
    fn per_component_removal() {
        // sizes 3 and 400 in a 410 x 1 x 1 line, separated by background
        let mut d = vec![0u32; 410];
        d[0..3].fill(4);
        d[5..405].fill(4);
        let v = vol([410, 1, 1], d);
        let t = CutoffTable::uniform(CutoffMode::PerComponent, [4], Cutoff::Voxels(25));
        let out = apply_cutoffs(&v, &t).unwrap();
        assert!(out.data()[0..3].iter().all(|&x| x == 0));
        assert_eq!(out.data().iter().filter(|&&x| x == 4).count(), 400);
    }

    #[test]
    fn missing_class_is_error() {
        let v = vol([2, 1, 1], vec![1, 5]);
        let t = CutoffTable::uniform(CutoffMode::PerComponent, [1], Cutoff::Voxels(0));
        assert!(apply_cutoffs(&v, &t).is_err());
    }
}
