//! C ABI over the cbctseg library.
//!
//! Every function returns a `CbctStatus`; on failure the message is kept in
//! thread-local storage and read back with `cbct_last_error_message`. Objects
//! cross the boundary as opaque pointers that the caller releases with the
//! matching `*_free` function. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cbctseg::metrics::{dice, hd95, EmptyPenalty, MetricOptions};
use cbctseg::nifti::{read_label_volume, write_label_volume};
use cbctseg::planner::{plan_topology, NetworkPlan, PlanRequest};
use cbctseg::postprocess::{apply_cutoffs, CutoffTable};
use cbctseg::{bordercore, class_mask, Error, LabelVolume, Spacing};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CbctStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Bad value, shape mismatch or malformed input data.
    InvalidArgument = 2,
    /// File could not be read or written.
    Io = 3,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 4,
    /// Internal panic caught at the boundary.
    Internal = 5,
}

/// Label volume (u32 voxels, x fastest).
pub struct CbctVolume(LabelVolume);

/// Per-class removal cutoffs.
pub struct CbctCutoffTable(CutoffTable);

/// Derived network topology.
pub struct CbctPlan(NetworkPlan);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(CbctStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = if e.is_io() {
            CbctStatus::Io
        } else {
            CbctStatus::InvalidArgument
        };
        Fail(code, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CbctStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CbctStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CbctStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            CbctStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    Ok(PathBuf::from(str_arg(p, "path")?))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CbctStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

unsafe fn put_val<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = v;
    Ok(())
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cbct_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cbct_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `nx*ny*nz` labels from `data` into a new volume.
///
/// # Safety
/// `data` must point to `nx*ny*nz` readable `uint32_t`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_volume_new(
    nx: usize,
    ny: usize,
    nz: usize,
    sx: f64,
    sy: f64,
    sz: f64,
    data: *const u32,
    out: *mut *mut CbctVolume,
) -> CbctStatus {
    guard(|| {
        let n = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Fail(CbctStatus::InvalidArgument, "dimensions overflow".into()))?;
        if data.is_null() && n > 0 {
            return Err(null("data"));
        }
        let v = if n == 0 { Vec::new() } else { std::slice::from_raw_parts(data, n).to_vec() };
        let vol = LabelVolume::new([nx, ny, nz], Spacing::new(sx, sy, sz)?, v)?;
        put(out, CbctVolume(vol))
    })
}

/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_volume_read(path: *const c_char, out: *mut *mut CbctVolume) -> CbctStatus {
    guard(|| {
        let v = read_label_volume(path_arg(path)?)?;
        put(out, CbctVolume(v))
    })
}

/// Writes the volume; a `.gz` suffix selects gzip.
///
/// # Safety
/// `vol` comes from this library; `path` is a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn cbct_volume_write(vol: *const CbctVolume, path: *const c_char) -> CbctStatus {
    guard(|| {
        let v = obj(vol, "volume")?;
        write_label_volume(&v.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `vol` is null or came from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cbct_volume_free(vol: *mut CbctVolume) {
    if !vol.is_null() {
        drop(Box::from_raw(vol));
    }
}

/// # Safety
/// `vol` comes from this library; `dims` and `spacing` are null or hold 3 slots.
#[no_mangle]
pub unsafe extern "C" fn cbct_volume_shape(
    vol: *const CbctVolume,
    dims: *mut usize,
    spacing: *mut f64,
) -> CbctStatus {
    guard(|| {
        let v = &obj(vol, "volume")?.0;
        if !dims.is_null() {
            std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&v.dims());
        }
        if !spacing.is_null() {
            std::slice::from_raw_parts_mut(spacing, 3).copy_from_slice(&v.spacing().0);
        }
        Ok(())
    })
}

/// Borrowed pointer to the voxel labels, valid while `vol` lives. Null when
/// `vol` is null. `len` (if non-null) receives the voxel count.
///
/// # Safety
/// `vol` is null or came from this library.
#[no_mangle]
pub unsafe extern "C" fn cbct_volume_data(vol: *const CbctVolume, len: *mut usize) -> *const u32 {
    match vol.as_ref() {
        Some(v) => {
            if !len.is_null() {
                *len = v.0.len();
            }
            v.0.data().as_ptr()
        }
        None => ptr::null(),
    }
}

fn masks(pred: &LabelVolume, gt: &LabelVolume, label: u32) -> (cbctseg::Mask, cbctseg::Mask) {
    (class_mask(pred, label).0, class_mask(gt, label).0)
}

/// Dice of one label; 1 when both volumes lack it.
///
/// # Safety
/// Handles come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_dice(
    pred: *const CbctVolume,
    gt: *const CbctVolume,
    label: u32,
    out: *mut f64,
) -> CbctStatus {
    guard(|| {
        let (p, g) = masks(&obj(pred, "pred")?.0, &obj(gt, "gt")?.0, label);
        put_val(out, dice(&p, &g)?)
    })
}

/// 95th-percentile Hausdorff distance in mm for one label. When exactly one
/// side is empty the result is `empty_penalty_mm`, or the image diagonal if
/// that argument is not positive.
///
/// # Safety
/// Handles come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_hd95(
    pred: *const CbctVolume,
    gt: *const CbctVolume,
    label: u32,
    empty_penalty_mm: f64,
    out: *mut f64,
) -> CbctStatus {
    guard(|| {
        let (p, g) = masks(&obj(pred, "pred")?.0, &obj(gt, "gt")?.0, label);
        let opts = MetricOptions {
            empty_penalty: if empty_penalty_mm > 0.0 {
                EmptyPenalty::Fixed(empty_penalty_mm)
            } else {
                EmptyPenalty::ImageDiagonal
            },
            ..Default::default()
        };
        put_val(out, hd95(&p, &g, &opts)?)
    })
}

/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_cutoffs_load(path: *const c_char, out: *mut *mut CbctCutoffTable) -> CbctStatus {
    guard(|| {
        let t = CutoffTable::load(&path_arg(path)?)?;
        put(out, CbctCutoffTable(t))
    })
}

/// # Safety
/// `json` is a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_cutoffs_from_json(json: *const c_char, out: *mut *mut CbctCutoffTable) -> CbctStatus {
    guard(|| {
        let t = CutoffTable::from_json_str(str_arg(json, "json")?)?;
        put(out, CbctCutoffTable(t))
    })
}

/// # Safety
/// `table` is null or came from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cbct_cutoffs_free(table: *mut CbctCutoffTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Removes objects below their class cutoff into a new volume.
///
/// # Safety
/// Handles come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_apply_cutoffs(
    pred: *const CbctVolume,
    table: *const CbctCutoffTable,
    out: *mut *mut CbctVolume,
) -> CbctStatus {
    guard(|| {
        let v = apply_cutoffs(&obj(pred, "pred")?.0, &obj(table, "cutoff table")?.0)?;
        put(out, CbctVolume(v))
    })
}

/// Border-core encoding of an instance map.
///
/// # Safety
/// `inst` comes from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_bordercore_encode(
    inst: *const CbctVolume,
    border_width: usize,
    out: *mut *mut CbctVolume,
) -> CbctStatus {
    guard(|| {
        let v = bordercore::encode(&obj(inst, "instances")?.0, border_width)?;
        put(out, CbctVolume(v))
    })
}

/// Instance recovery from a border-core map. `dropped_orphans` (if non-null)
/// receives the number of discarded core-less border components.
///
/// # Safety
/// `bc` comes from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_bordercore_decode(
    bc: *const CbctVolume,
    min_orphan_size: u64,
    out: *mut *mut CbctVolume,
    dropped_orphans: *mut u32,
) -> CbctStatus {
    guard(|| {
        let (v, rep) = bordercore::decode(&obj(bc, "border-core map")?.0, min_orphan_size)?;
        if !dropped_orphans.is_null() {
            *dropped_orphans = rep.dropped_orphans;
        }
        put(out, CbctVolume(v))
    })
}

/// Plans a topology for a patch size with default settings otherwise.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_plan_new(px: usize, py: usize, pz: usize, out: *mut *mut CbctPlan) -> CbctStatus {
    guard(|| {
        let p = plan_topology(&PlanRequest::new([px, py, pz]))?;
        put(out, CbctPlan(p))
    })
}

/// # Safety
/// `plan` comes from this library.
#[no_mangle]
pub unsafe extern "C" fn cbct_plan_n_stages(plan: *const CbctPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.0.n_stages)
}

/// Canonical JSON of the plan; release with `cbct_string_free`.
///
/// # Safety
/// `plan` comes from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cbct_plan_to_json(plan: *const CbctPlan, out: *mut *mut c_char) -> CbctStatus {
    guard(|| {
        let s = obj(plan, "plan")?.0.to_canonical_json();
        put_val(out, CString::new(s).expect("JSON has no NUL").into_raw())
    })
}

/// # Safety
/// `plan` is null or came from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn cbct_plan_free(plan: *mut CbctPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// # Safety
/// `s` is null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cbct_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
