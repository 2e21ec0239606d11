//! A little-endian NIfTI-1 single-file subset.
//!
//! Only the 348-byte header, the 4-byte extension flag and the raw payload are
//! understood. Orientation (qform/sform) is ignored: spacing comes from
//! `pixdim[1..=3]` and the voxel grid is taken as-is. Files may be gzip
//! compressed; the writer always emits uncompressed data.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume, Spacing, Volume};

pub const HEADER_SIZE: usize = 348;
pub const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_UINT16: i16 = 512;

fn bytes_per_voxel(datatype: i16) -> Result<usize> {
    Ok(match datatype {
        DT_UINT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::UnsupportedDatatype(other)),
    })
}

fn is_integer_type(datatype: i16) -> bool {
    matches!(datatype, DT_UINT8 | DT_INT16 | DT_INT32 | DT_UINT16)
}

/// The header fields this crate consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub dim: [i16; 8],
    pub datatype: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

impl Header {
    fn parse(b: &[u8]) -> Result<Self> {
        if b.len() < HEADER_SIZE {
            return Err(Error::InvalidNifti(format!(
                "file is {} bytes, shorter than the {HEADER_SIZE}-byte header",
                b.len()
            )));
        }
        let i16_at = |o: usize| i16::from_le_bytes([b[o], b[o + 1]]);
        let i32_at = |o: usize| i32::from_le_bytes([b[o], b[o + 1], b[o + 2], b[o + 3]]);
        let f32_at = |o: usize| f32::from_le_bytes([b[o], b[o + 1], b[o + 2], b[o + 3]]);

        let sizeof_hdr = i32_at(0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
                return Err(Error::InvalidNifti(
                    "big-endian files are not supported".into(),
                ));
            }
            return Err(Error::InvalidNifti(format!(
                "sizeof_hdr is {sizeof_hdr}, expected {HEADER_SIZE}"
            )));
        }
        if &b[344..348] != MAGIC {
            return Err(Error::InvalidNifti(
                "magic is not \"n+1\\0\" (only single-file NIfTI-1 is supported)".into(),
            ));
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = i16_at(40 + 2 * i);
        }
        if !(1..=7).contains(&dim[0]) {
            return Err(Error::InvalidNifti(format!(
                "dim[0] = {} outside 1..=7 (wrong endianness?)",
                dim[0]
            )));
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = f32_at(76 + 4 * i);
        }
        Ok(Header {
            dim,
            datatype: i16_at(70),
            pixdim,
            vox_offset: f32_at(108),
            scl_slope: f32_at(112),
            scl_inter: f32_at(116),
        })
    }

    fn spatial_dims(&self) -> Result<[usize; 3]> {
        let mut d = [0usize; 3];
        for (a, out) in d.iter_mut().enumerate() {
            let v = self.dim[a + 1];
            if v < 1 {
                return Err(Error::InvalidNifti(format!("dim[{}] = {v}", a + 1)));
            }
            *out = v as usize;
        }
        Ok(d)
    }

    /// pixdim is stored as f32; widening goes through the shortest decimal
    /// form so a written 0.3 reads back as 0.3 rather than 0.30000001192...
    fn spacing(&self) -> Result<Spacing> {
        let widen = |v: f32| -> f64 { v.to_string().parse().unwrap_or(v as f64) };
        Spacing::new(
            widen(self.pixdim[1]),
            widen(self.pixdim[2]),
            widen(self.pixdim[3]),
        )
    }

    fn has_scaling(&self) -> bool {
        self.scl_slope != 0.0 && self.scl_slope.is_finite()
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    decompress_if_gzip(raw).map_err(|e| Error::io(path, e))
}

fn decompress_if_gzip(raw: Vec<u8>) -> std::io::Result<Vec<u8>> {
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        MultiGzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Decodes `n` voxels of `datatype` starting at the payload offset.
fn decode_payload(h: &Header, b: &[u8], n: usize) -> Result<Vec<f64>> {
    let bpv = bytes_per_voxel(h.datatype)?;
    let offset = if h.vox_offset.is_finite() && h.vox_offset >= HEADER_SIZE as f32 {
        h.vox_offset as usize
    } else {
        VOX_OFFSET
    };
    let end = offset + n * bpv;
    if b.len() < end {
        return Err(Error::InvalidNifti(format!(
            "truncated payload: need {end} bytes, file has {}",
            b.len()
        )));
    }
    let p = &b[offset..end];
    let values = match h.datatype {
        DT_UINT8 => p.iter().map(|&v| v as f64).collect(),
        DT_INT16 => p
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        DT_UINT16 => p
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        DT_INT32 => p
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DT_FLOAT32 => p
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DT_FLOAT64 => p
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        other => return Err(Error::UnsupportedDatatype(other)),
    };
    Ok(values)
}

fn parse_3d(b: &[u8]) -> Result<(Header, [usize; 3], Spacing)> {
    let h = Header::parse(b)?;
    if h.dim[0] != 3 {
        return Err(Error::InvalidNifti(format!(
            "expected a 3D volume, dim[0] = {}",
            h.dim[0]
        )));
    }
    bytes_per_voxel(h.datatype)?;
    let dims = h.spatial_dims()?;
    let spacing = h.spacing()?;
    Ok((h, dims, spacing))
}

/// Parses an in-memory image as intensities, applying `scl_slope`/`scl_inter`.
pub fn scalar_from_bytes(bytes: &[u8]) -> Result<ScalarVolume> {
    let (h, dims, spacing) = parse_3d(bytes)?;
    let mut values = decode_payload(&h, bytes, dims.iter().product())?;
    if h.has_scaling() {
        let (m, c) = (h.scl_slope as f64, h.scl_inter as f64);
        values.iter_mut().for_each(|v| *v = m * *v + c);
    }
    Volume::new(dims, spacing, values)
}

/// Parses an in-memory image as a label map.
pub fn labels_from_bytes(bytes: &[u8]) -> Result<LabelVolume> {
    let (h, dims, spacing) = parse_3d(bytes)?;
    if !is_integer_type(h.datatype) {
        return Err(Error::InvalidNifti(format!(
            "label volumes need an integer datatype, found code {}",
            h.datatype
        )));
    }
    let unit_slope = h.scl_slope == 0.0 || h.scl_slope == 1.0;
    if !unit_slope || h.scl_inter != 0.0 {
        return Err(Error::InvalidNifti(format!(
            "label volumes need scl_slope in {{0, 1}} and scl_inter 0, found {} / {}",
            h.scl_slope, h.scl_inter
        )));
    }
    let values = decode_payload(&h, bytes, dims.iter().product())?;
    let mut data = Vec::with_capacity(values.len());
    for v in values {
        if v < 0.0 {
            return Err(Error::InvalidNifti(format!("negative label {v}")));
        }
        data.push(v as u32);
    }
    Volume::new(dims, spacing, data)
}

pub fn read_scalar_volume(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    let path = path.as_ref();
    scalar_from_bytes(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

pub fn read_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    labels_from_bytes(&read_bytes(path)?).map_err(|e| with_path(e, path))
}

/// Either kind of volume, decided by the on-disk datatype.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedVolume {
    Labels(LabelVolume),
    Scalars(ScalarVolume),
}

/// Integer files without scaling and without negative values load as labels;
/// everything else loads as intensities.
pub fn read_volume(path: impl AsRef<Path>) -> Result<LoadedVolume> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let (h, _, _) = parse_3d(&bytes).map_err(|e| with_path(e, path))?;
    let label_like = is_integer_type(h.datatype)
        && (h.scl_slope == 0.0 || h.scl_slope == 1.0)
        && h.scl_inter == 0.0;
    if label_like {
        if let Ok(v) = labels_from_bytes(&bytes) {
            return Ok(LoadedVolume::Labels(v));
        }
    }
    scalar_from_bytes(&bytes)
        .map(LoadedVolume::Scalars)
        .map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::InvalidNifti(msg) => Error::InvalidNifti(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn header_bytes(
    dims: &[usize],
    spacing: Spacing,
    datatype: i16,
    bitpix: i16,
    scl_slope: f32,
) -> Result<Vec<u8>> {
    let mut h = vec![0u8; VOX_OFFSET];
    let put_i16 = |h: &mut [u8], o: usize, v: i16| h[o..o + 2].copy_from_slice(&v.to_le_bytes());
    let put_i32 = |h: &mut [u8], o: usize, v: i32| h[o..o + 4].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8], o: usize, v: f32| h[o..o + 4].copy_from_slice(&v.to_le_bytes());

    put_i32(&mut h, 0, HEADER_SIZE as i32);
    h[38] = b'r';
    put_i16(&mut h, 40, dims.len() as i16);
    for i in 0..7 {
        let d = dims.get(i).copied().unwrap_or(1);
        let d = i16::try_from(d)
            .map_err(|_| Error::InvalidNifti(format!("dimension {d} exceeds NIfTI-1 limits")))?;
        put_i16(&mut h, 42 + 2 * i, d);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0);
    for a in 0..3 {
        put_f32(&mut h, 80 + 4 * a, spacing.0[a] as f32);
    }
    for i in 4..8 {
        put_f32(&mut h, 76 + 4 * i, 1.0);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, scl_slope);
    put_f32(&mut h, 116, 0.0);
    h[123] = 2; // mm
    put_i16(&mut h, 252, 1); // qform: identity rotation scaled by pixdim
    h[344..348].copy_from_slice(MAGIC);
    Ok(h)
}

/// Serializes labels as u8 when every label is < 256, else u16.
pub fn label_volume_to_bytes(vol: &LabelVolume) -> Result<Vec<u8>> {
    let max = vol.data().iter().copied().max().unwrap_or(0);
    if max > u16::MAX as u32 {
        return Err(Error::LabelOverflow(max));
    }
    let (datatype, bitpix) = if max < 256 {
        (DT_UINT8, 8)
    } else {
        (DT_UINT16, 16)
    };
    let mut out = header_bytes(&vol.dims(), vol.spacing(), datatype, bitpix, 1.0)?;
    if datatype == DT_UINT8 {
        out.extend(vol.data().iter().map(|&v| v as u8));
    } else {
        out.reserve(vol.len() * 2);
        for &v in vol.data() {
            out.extend_from_slice(&(v as u16).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_label_volume(vol: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = label_volume_to_bytes(vol)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes intensities as float32.
pub fn write_scalar_volume(vol: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = header_bytes(&vol.dims(), vol.spacing(), DT_FLOAT32, 32, 0.0)?;
    out.reserve(vol.len() * 4);
    for &v in vol.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a 4D file whose fourth axis holds channels. Returns the spatial dims,
/// spacing, channel count and the channel-major float payload.
pub(crate) fn read_4d_channels(path: &Path) -> Result<(Vec<f64>, [usize; 3], Spacing, usize)> {
    let bytes = read_bytes(path)?;
    let h = Header::parse(&bytes).map_err(|e| with_path(e, path))?;
    if h.dim[0] != 4 {
        return Err(Error::InvalidNifti(format!(
            "{}: expected a 4D channel stack, dim[0] = {}",
            path.display(),
            h.dim[0]
        )));
    }
    let dims = h.spatial_dims()?;
    let channels = h.dim[4].max(1) as usize;
    let spacing = h.spacing()?;
    let mut values = decode_payload(&h, &bytes, dims.iter().product::<usize>() * channels)
        .map_err(|e| with_path(e, path))?;
    if h.has_scaling() {
        let (m, c) = (h.scl_slope as f64, h.scl_inter as f64);
        values.iter_mut().for_each(|v| *v = m * *v + c);
    }
    Ok((values, dims, spacing, channels))
}

pub(crate) fn write_4d_channels(
    path: &Path,
    data: &[f64],
    dims: [usize; 3],
    spacing: Spacing,
    channels: usize,
) -> Result<()> {
    let mut out = header_bytes(
        &[dims[0], dims[1], dims[2], channels],
        spacing,
        DT_FLOAT32,
        32,
        0.0,
    )?;
    for &v in data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn sp() -> Spacing {
        Spacing::isotropic(0.3).unwrap()
    }

    fn gzip(b: &[u8]) -> Vec<u8> {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(b).unwrap();
        enc.finish().unwrap()
    }

    #[test]
    fn u8_fixture() {
        let v = LabelVolume::new([2, 2, 2], sp(), (0..8).collect()).unwrap();
        let bytes = label_volume_to_bytes(&v).unwrap();
        assert_eq!(bytes.len(), VOX_OFFSET + 8);
        assert_eq!(i16::from_le_bytes([bytes[70], bytes[71]]), DT_UINT8);
        let back = labels_from_bytes(&bytes).unwrap();
        assert_eq!(back.dims(), [2, 2, 2]);
        assert_eq!(back.data(), v.data());
        assert_eq!(back.spacing().0[0], 0.3);

        let gz = decompress_if_gzip(gzip(&bytes)).unwrap();
        assert_eq!(labels_from_bytes(&gz).unwrap(), back);
    }

    #[test]
    fn width_rule() {
        let mut data = vec![0u32; 8];
        data[3] = 41;
        let v = LabelVolume::new([2, 2, 2], sp(), data.clone()).unwrap();
        let b = label_volume_to_bytes(&v).unwrap();
        assert_eq!(i16::from_le_bytes([b[70], b[71]]), DT_UINT8);

        data[5] = 300;
        let v = LabelVolume::new([2, 2, 2], sp(), data).unwrap();
        let b = label_volume_to_bytes(&v).unwrap();
        assert_eq!(i16::from_le_bytes([b[70], b[71]]), DT_UINT16);
        assert_eq!(labels_from_bytes(&b).unwrap().data()[5], 300);

        let v = LabelVolume::new([1, 1, 1], sp(), vec![70_000]).unwrap();
        assert!(matches!(
            label_volume_to_bytes(&v),
            Err(Error::LabelOverflow(70_000))
        ));
    }

    fn f32_file(values: &[f32], slope: f32, inter: f32) -> Vec<u8> {
        let mut b = header_bytes(&[values.len(), 1, 1], sp(), DT_FLOAT32, 32, slope).unwrap();
        b[116..120].copy_from_slice(&inter.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn slope_and_intercept() {
        let b = f32_file(&[3.0], 2.0, 1.0);
        assert_eq!(scalar_from_bytes(&b).unwrap().data(), &[7.0]);
        // float data cannot be read as labels
        assert!(labels_from_bytes(&b).is_err());
    }

    #[test]
    fn rejects_bad_headers() {
        let v = LabelVolume::new([2, 2, 2], sp(), (0..8).collect()).unwrap();
        let good = label_volume_to_bytes(&v).unwrap();

        let mut b = good.clone();
        b[70..72].copy_from_slice(&1i16.to_le_bytes()); // binary
        assert!(matches!(
            labels_from_bytes(&b),
            Err(Error::UnsupportedDatatype(1))
        ));

        let mut b = good.clone();
        b[40..42].copy_from_slice(&4i16.to_le_bytes());
        assert!(labels_from_bytes(&b).is_err());

        let mut b = good.clone();
        b.truncate(VOX_OFFSET + 4);
        let err = labels_from_bytes(&b).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        let mut b = good.clone();
        b[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_be_bytes());
        let err = labels_from_bytes(&b).unwrap_err().to_string();
        assert!(err.contains("big-endian"), "{err}");

        let mut b = good.clone();
        b[40..42].copy_from_slice(&3i16.to_be_bytes());
        assert!(labels_from_bytes(&b).is_err());

        let mut b = good;
        b[345] = b'i';
        assert!(labels_from_bytes(&b).is_err());
    }

    #[test]
    fn negative_integers_are_not_labels() {
        let mut b = header_bytes(&[2, 1, 1], sp(), DT_INT16, 16, 0.0).unwrap();
        b.extend_from_slice(&(-5i16).to_le_bytes());
        b.extend_from_slice(&7i16.to_le_bytes());
        assert!(labels_from_bytes(&b).is_err());
        assert_eq!(scalar_from_bytes(&b).unwrap().data(), &[-5.0, 7.0]);
    }
}
