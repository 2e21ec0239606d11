//! Dense 3D volumes in x-fastest linear order.
//!
//! Linear index of voxel `(x, y, z)` is `x + nx * (y + ny * z)`, which is the
//! on-disk order of NIfTI payloads, so reading and writing never reshuffles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical voxel size in millimeters along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spacing(pub [f64; 3]);

impl Spacing {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Result<Self> {
        let s = [sx, sy, sz];
        if s.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(Spacing(s))
        } else {
            Err(Error::InvalidSpacing(s))
        }
    }

    pub fn isotropic(s: f64) -> Result<Self> {
        Self::new(s, s, s)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.0[0] * k, self.0[1] * k, self.0[2] * k)
    }

    #[inline]
    pub fn get(&self, axis: usize) -> f64 {
        self.0[axis]
    }
}

/// Half-open voxel box `lo..hi` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Region {
    pub fn full(dims: [usize; 3]) -> Self {
        Region {
            lo: [0; 3],
            hi: dims,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    pub fn len(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn union(&self, other: &Region) -> Region {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        let mut r = *self;
        for a in 0..3 {
            r.lo[a] = r.lo[a].min(other.lo[a]);
            r.hi[a] = r.hi[a].max(other.hi[a]);
        }
        r
    }

    /// Grow to include voxel `p`.
    pub(crate) fn include(&mut self, p: [usize; 3]) {
        if self.is_empty() {
            self.lo = p;
            self.hi = [p[0] + 1, p[1] + 1, p[2] + 1];
            return;
        }
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(p[a]);
            self.hi[a] = self.hi[a].max(p[a] + 1);
        }
    }

    pub(crate) fn empty() -> Self {
        Region {
            lo: [0; 3],
            hi: [0; 3],
        }
    }
}

/// A dense 3D grid with physical spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T> {
    dims: [usize; 3],
    spacing: Spacing,
    data: Vec<T>,
}

pub type LabelVolume = Volume<u32>;
pub type ScalarVolume = Volume<f64>;
pub type Mask = Volume<bool>;

impl<T> Volume<T> {
    pub fn new(dims: [usize; 3], spacing: Spacing, data: Vec<T>) -> Result<Self> {
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::DataLength {
                dims,
                expected,
                actual: data.len(),
            });
        }
        Ok(Volume {
            dims,
            spacing,
            data,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index(x, y, z)]
    }

    /// Checks that `other` lives on the same grid.
    pub fn check_same_grid<U>(&self, other: &Volume<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(self.dims, other.dims));
        }
        if self.spacing != other.spacing {
            return Err(Error::SpacingMismatch(self.spacing.0, other.spacing.0));
        }
        Ok(())
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Volume<U> {
        Volume {
            dims: self.dims,
            spacing: self.spacing,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Physical extent of the grid in mm (`n * s` per axis) as a diagonal length.
    pub fn diagonal_mm(&self) -> f64 {
        (0..3)
            .map(|a| {
                let e = self.dims[a] as f64 * self.spacing.0[a];
                e * e
            })
            .sum::<f64>()
            .sqrt()
    }
}

impl<T: Clone> Volume<T> {
    pub fn filled(dims: [usize; 3], spacing: Spacing, value: T) -> Self {
        Volume {
            dims,
            spacing,
            data: vec![value; dims.iter().product()],
        }
    }

    /// Copies the voxels inside `region` into a new volume.
    pub fn crop(&self, region: &Region) -> Volume<T> {
        let d = region.dims();
        let mut data = Vec::with_capacity(region.len());
        for z in region.lo[2]..region.hi[2] {
            for y in region.lo[1]..region.hi[1] {
                let start = self.index(region.lo[0], y, z);
                data.extend_from_slice(&self.data[start..start + d[0]]);
            }
        }
        Volume {
            dims: d,
            spacing: self.spacing,
            data,
        }
    }
}

impl<T: Copy> Volume<T> {
    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        Volume::new(self.dims, self.spacing, data)
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Reverses voxel order along `axis`.
pub fn flip_axis<T: Copy>(vol: &Volume<T>, axis: usize) -> Result<Volume<T>> {
    if axis > 2 {
        return Err(Error::InvalidAxis(axis));
    }
    let [nx, ny, nz] = vol.dims;
    let mut out = Vec::with_capacity(vol.len());
    for z in 0..nz {
        for y in 0..ny {
            match axis {
                0 => {
                    let start = vol.index(0, y, z);
                    out.extend(vol.data[start..start + nx].iter().rev());
                }
                1 => {
                    let start = vol.index(0, ny - 1 - y, z);
                    out.extend_from_slice(&vol.data[start..start + nx]);
                }
                _ => {
                    let start = vol.index(0, y, nz - 1 - z);
                    out.extend_from_slice(&vol.data[start..start + nx]);
                }
            }
        }
    }
    Ok(Volume {
        dims: vol.dims,
        spacing: vol.spacing,
        data: out,
    })
}

/// Binary mask of `label`, with its voxel count.
pub fn class_mask(vol: &LabelVolume, label: u32) -> (Mask, usize) {
    let data: Vec<bool> = vol.data.iter().map(|&v| v == label).collect();
    let count = data.iter().filter(|&&b| b).count();
    let mask = Volume {
        dims: vol.dims,
        spacing: vol.spacing,
        data,
    };
    (mask, count)
}

/// Clip-shift-scale intensity normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationScheme {
    pub clip_lower: f64,
    pub clip_upper: f64,
    pub shift: f64,
    pub scale: f64,
}

impl NormalizationScheme {
    pub fn new(clip_lower: f64, clip_upper: f64, shift: f64, scale: f64) -> Result<Self> {
        let s = NormalizationScheme {
            clip_lower,
            clip_upper,
            shift,
            scale,
        };
        s.validate()?;
        Ok(s)
    }

    /// CT scheme with the ToothFairy2 foreground statistics.
    pub fn toothfairy2_ct() -> Self {
        NormalizationScheme {
            clip_lower: -992.0,
            clip_upper: 3513.0,
            shift: 811.0,
            scale: 1001.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.clip_lower, self.clip_upper, self.shift, self.scale]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidScheme("non-finite parameter".into()));
        }
        if self.clip_lower >= self.clip_upper {
            return Err(Error::InvalidScheme(format!(
                "clip_lower {} must be < clip_upper {}",
                self.clip_lower, self.clip_upper
            )));
        }
        if self.scale <= 0.0 {
            return Err(Error::InvalidScheme(format!(
                "scale {} must be > 0",
                self.scale
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v.clamp(self.clip_lower, self.clip_upper) - self.shift) / self.scale
    }
}

pub fn normalize_ct(vol: &ScalarVolume, scheme: &NormalizationScheme) -> Result<ScalarVolume> {
    scheme.validate()?;
    Ok(vol.map(|&v| scheme.apply(v)))
}
