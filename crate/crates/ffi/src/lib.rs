//! C ABI over the repalign core: feature matrices and RDMs behind opaque
//! handles, Spearman RSA, cosine distance and saliency maps.
//!
//! Every fallible call returns an [`RaStatus`]; on failure the message is
//! available from [`ra_last_error`] on the same thread. Panics are caught at
//! the boundary and reported as [`RaStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use repalign::repsim::{self, RepSimError};
use repalign::saliency::{self, SaliencyError, MAP_SIZE};
use repalign::tensorio::{self, FeatureMatrix, TensorIoError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    InvalidData = 4,
    Degenerate = 5,
    ItemMismatch = 6,
    BufferSize = 7,
    Panic = 99,
}

/// Feature matrix: rows are items, columns are features.
pub struct RaFeatureMatrix(FeatureMatrix);

/// Cosine-distance representational dissimilarity matrix.
pub struct RaRdm(repsim::Rdm);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: RaStatus, msg: impl Into<String>) -> RaStatus {
    set_error(msg);
    status
}

trait ToStatus {
    fn status(&self) -> RaStatus;
}

impl ToStatus for TensorIoError {
    fn status(&self) -> RaStatus {
        match self {
            TensorIoError::MissingFile(_) | TensorIoError::Io { .. } => RaStatus::Io,
            TensorIoError::IdMismatch { .. } => RaStatus::ItemMismatch,
            _ => RaStatus::InvalidData,
        }
    }
}

impl ToStatus for RepSimError {
    fn status(&self) -> RaStatus {
        match self {
            RepSimError::Degenerate | RepSimError::ZeroNorm(_) => RaStatus::Degenerate,
            RepSimError::ItemMismatch => RaStatus::ItemMismatch,
            RepSimError::LengthMismatch(..) | RepSimError::TooShort { .. } => RaStatus::InvalidArgument,
            RepSimError::Io(e) => e.status(),
            _ => RaStatus::InvalidData,
        }
    }
}

impl ToStatus for SaliencyError {
    fn status(&self) -> RaStatus {
        match self {
            SaliencyError::Undersized { .. } | SaliencyError::TooSmall { .. } => RaStatus::InvalidArgument,
            _ => RaStatus::InvalidData,
        }
    }
}

fn report<E: ToStatus + std::fmt::Display>(e: E) -> RaStatus {
    fail(e.status(), e.to_string())
}

/// Runs `f`, turning a panic into [`RaStatus::Panic`].
fn guard(f: impl FnOnce() -> RaStatus) -> RaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == RaStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(RaStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, RaStatus> {
    if p.is_null() {
        return Err(fail(RaStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| fail(RaStatus::InvalidArgument, "path is not valid UTF-8"))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], RaStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(RaStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `n_items` ids and an `n_items * dim` row-major matrix into a new
/// handle.
///
/// # Safety
/// `ids` must point to `n_items` NUL-terminated strings, `data` to
/// `n_items * dim` doubles and `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ra_features_new(
    ids: *const *const c_char,
    n_items: usize,
    data: *const f64,
    dim: usize,
    out: *mut *mut RaFeatureMatrix,
) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        let id_ptrs = try_ffi!(slice_arg(ids, n_items, "ids"));
        let mut items = Vec::with_capacity(n_items);
        for &p in id_ptrs {
            if p.is_null() {
                return fail(RaStatus::NullPointer, "an id is NULL");
            }
            match CStr::from_ptr(p).to_str() {
                Ok(s) => items.push(s.to_string()),
                Err(_) => return fail(RaStatus::InvalidArgument, "id is not valid UTF-8"),
            }
        }
        let Some(len) = n_items.checked_mul(dim) else {
            return fail(RaStatus::InvalidArgument, "matrix size overflows");
        };
        let values = try_ffi!(slice_arg(data, len, "data")).to_vec();
        match FeatureMatrix::new(items, values, dim, "ffi") {
            Ok(m) => {
                *out = Box::into_raw(Box::new(RaFeatureMatrix(m)));
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Loads `path` (`.npy`) and its `.ids.txt` sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_features_load(path: *const c_char, out: *mut *mut RaFeatureMatrix) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        let path = try_ffi!(path_arg(path));
        match tensorio::load_feature_matrix(&path, None) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(RaFeatureMatrix(m)));
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ra_features_save(m: *const RaFeatureMatrix, path: *const c_char) -> RaStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(RaStatus::NullPointer, "matrix is NULL");
        };
        let path = try_ffi!(path_arg(path));
        match tensorio::save_feature_matrix(&path, &m.0) {
            Ok(()) => RaStatus::Ok,
            Err(e) => report(e),
        }
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ra_features_n_items(m: *const RaFeatureMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_items())
}

/// Number of columns, or 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ra_features_dim(m: *const RaFeatureMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ra_features_free(m: *mut RaFeatureMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Cosine-distance RDM of the rows of `m`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_build(m: *const RaFeatureMatrix, out: *mut *mut RaRdm) -> RaStatus {
    guard(|| {
        let Some(m) = m.as_ref() else {
            return fail(RaStatus::NullPointer, "matrix is NULL");
        };
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        match repsim::build_rdm(&m.0) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(RaRdm(r)));
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_load(path: *const c_char, out: *mut *mut RaRdm) -> RaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        let path = try_ffi!(path_arg(path));
        match repsim::Rdm::load(&path) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(RaRdm(r)));
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// # Safety
/// `rdm` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_save(rdm: *const RaRdm, path: *const c_char) -> RaStatus {
    guard(|| {
        let Some(r) = rdm.as_ref() else {
            return fail(RaStatus::NullPointer, "rdm is NULL");
        };
        let path = try_ffi!(path_arg(path));
        match r.0.save(&path) {
            Ok(()) => RaStatus::Ok,
            Err(e) => report(e),
        }
    })
}

/// Number of items, or 0 for NULL.
///
/// # Safety
/// `rdm` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_size(rdm: *const RaRdm) -> usize {
    rdm.as_ref().map_or(0, |r| r.0.n())
}

/// Cell `(i, j)`.
///
/// # Safety
/// `rdm` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_get(rdm: *const RaRdm, i: usize, j: usize, out: *mut f64) -> RaStatus {
    guard(|| {
        let Some(r) = rdm.as_ref() else {
            return fail(RaStatus::NullPointer, "rdm is NULL");
        };
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        let n = r.0.n();
        if i >= n || j >= n {
            return fail(RaStatus::InvalidArgument, format!("({i}, {j}) outside {n}x{n}"));
        }
        *out = r.0.get(i, j);
        RaStatus::Ok
    })
}

/// Writes the `n(n-1)/2` strictly upper cells, row-major, into `buf`.
/// `len` must equal that count.
///
/// # Safety
/// `rdm` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_upper_triangle(rdm: *const RaRdm, buf: *mut f64, len: usize) -> RaStatus {
    guard(|| {
        let Some(r) = rdm.as_ref() else {
            return fail(RaStatus::NullPointer, "rdm is NULL");
        };
        let n = r.0.n();
        let want = n * (n - 1) / 2;
        if len != want {
            return fail(RaStatus::BufferSize, format!("buffer holds {len}, need {want}"));
        }
        if buf.is_null() {
            return fail(RaStatus::NullPointer, "buf is NULL");
        }
        let tri = repsim::upper_triangle(&r.0);
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(&tri);
        RaStatus::Ok
    })
}

/// # Safety
/// `rdm` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ra_rdm_free(rdm: *mut RaRdm) {
    if !rdm.is_null() {
        drop(Box::from_raw(rdm));
    }
}

/// Spearman correlation of the upper triangles of two RDMs over the same
/// ordered items.
///
/// # Safety
/// `a` and `b` must be live handles and `rho` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_rsa(a: *const RaRdm, b: *const RaRdm, rho: *mut f64) -> RaStatus {
    guard(|| {
        let (Some(a), Some(b)) = (a.as_ref(), b.as_ref()) else {
            return fail(RaStatus::NullPointer, "rdm is NULL");
        };
        if rho.is_null() {
            return fail(RaStatus::NullPointer, "rho is NULL");
        }
        match repsim::rsa(&a.0, &b.0) {
            Ok(s) => {
                *rho = s.rho;
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// `|rsa(dist, target) - rsa(base, target)|`.
///
/// # Safety
/// All handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_delta_rsa(
    base: *const RaRdm,
    dist: *const RaRdm,
    target: *const RaRdm,
    out: *mut f64,
) -> RaStatus {
    guard(|| {
        let (Some(base), Some(dist), Some(target)) = (base.as_ref(), dist.as_ref(), target.as_ref()) else {
            return fail(RaStatus::NullPointer, "rdm is NULL");
        };
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        let scores = repsim::rsa(&base.0, &target.0).and_then(|b| {
            let d = repsim::rsa(&dist.0, &target.0)?;
            repsim::delta_rsa(&b, &d.as_dist(repalign::DistractorClass::Control))
        });
        match scores {
            Ok(v) => {
                *out = v;
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Spearman rank correlation with average ranks for ties.
///
/// # Safety
/// `x` and `y` must point to `n` doubles and `rho` be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_spearman_rho(x: *const f64, y: *const f64, n: usize, rho: *mut f64) -> RaStatus {
    guard(|| {
        let x = try_ffi!(slice_arg(x, n, "x"));
        let y = try_ffi!(slice_arg(y, n, "y"));
        if rho.is_null() {
            return fail(RaStatus::NullPointer, "rho is NULL");
        }
        match repsim::spearman_rho(x, y) {
            Ok(v) => {
                *rho = v;
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
///
/// # Safety
/// `u` and `v` must point to `n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn ra_cosine_distance(u: *const f64, v: *const f64, n: usize, out: *mut f64) -> RaStatus {
    guard(|| {
        let u = try_ffi!(slice_arg(u, n, "u"));
        let v = try_ffi!(slice_arg(v, n, "v"));
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        match repsim::cosine_distance(u, v) {
            Ok(d) => {
                *out = d;
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}

/// Side length of the maps written by [`ra_saliency_from_rgb`].
#[no_mangle]
pub extern "C" fn ra_saliency_map_size() -> usize {
    MAP_SIZE
}

/// Saliency map of an interleaved 8-bit RGB image (`width * height * 3`
/// bytes, rows top to bottom). Writes `256 * 256` doubles row-major.
///
/// # Safety
/// `rgb` must hold `width * height * 3` bytes and `out` be writable for
/// `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ra_saliency_from_rgb(
    rgb: *const u8,
    width: u32,
    height: u32,
    out: *mut f64,
    out_len: usize,
) -> RaStatus {
    guard(|| {
        let len = width as usize * height as usize * 3;
        let bytes = try_ffi!(slice_arg(rgb, len, "rgb"));
        if out_len != MAP_SIZE * MAP_SIZE {
            return fail(
                RaStatus::BufferSize,
                format!("buffer holds {out_len}, need {}", MAP_SIZE * MAP_SIZE),
            );
        }
        if out.is_null() {
            return fail(RaStatus::NullPointer, "out is NULL");
        }
        let Some(img) = saliency::RgbImage::from_raw(width, height, bytes.to_vec()) else {
            return fail(RaStatus::InvalidArgument, "pixel buffer does not match dimensions");
        };
        match saliency::compute_saliency(&img, &saliency::SaliencyConfig::default()) {
            Ok(m) => {
                std::slice::from_raw_parts_mut(out, out_len).copy_from_slice(m.grid());
                RaStatus::Ok
            }
            Err(e) => report(e),
        }
    })
}
