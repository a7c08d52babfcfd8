//! C ABI over the dimension-pruning core: embedding-matrix handles,
//! importance estimation, noise-floor selection, and masked scoring.
//!
//! Conventions: every fallible function returns an [`RdimeStatus`] and
//! writes results through out-pointers; callers own all buffers except
//! matrix internals, which stay valid until [`rdime_matrix_free`].
//! Panics are caught at the boundary and reported as
//! `RDIME_STATUS_PANIC`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use rdime_core::dime::{kernel_dime, kernel_weights, single_doc_dime, WeightScheme, WeightVector};
use rdime_core::engine::masked_score;
use rdime_core::selection::{estimate_noise, rdime_select, topk_select, SelectionMask};
use rdime_core::store::{load_embeddings, EmbeddingMatrix};
use rdime_core::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RdimeStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A value violated a documented precondition.
    InvalidArgument = 2,
    /// Paired buffers disagree on length.
    DimMismatch = 3,
    Io = 4,
    /// Malformed embedding, qrels, or run data.
    Parse = 5,
    /// Id or row not present.
    NotFound = 6,
    /// A string was not valid UTF-8.
    Utf8 = 7,
    /// Internal panic caught at the boundary.
    Panic = 8,
}

fn status_of(err: &Error) -> RdimeStatus {
    match err {
        Error::Io { .. } => RdimeStatus::Io,
        Error::BadMagic { .. }
        | Error::Truncated { .. }
        | Error::DuplicateId { .. }
        | Error::Parse { .. } => RdimeStatus::Parse,
        Error::NonFinite { .. } | Error::InvalidArgument(_) => RdimeStatus::InvalidArgument,
        Error::DimMismatch { .. } => RdimeStatus::DimMismatch,
        Error::UnknownDocId(_) => RdimeStatus::NotFound,
    }
}

/// Opaque embedding-matrix handle.
pub struct RdimeMatrix {
    inner: EmbeddingMatrix,
    /// NUL-terminated copies of the row ids, for stable `const char *`
    /// returns.
    ids_z: Vec<Vec<u8>>,
}

fn guarded(body: impl FnOnce() -> RdimeStatus) -> RdimeStatus {
    catch_unwind(AssertUnwindSafe(body)).unwrap_or(RdimeStatus::Panic)
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if ptr.is_null() {
        None
    } else {
        Some(slice::from_raw_parts(ptr, len))
    }
}

unsafe fn out_arg<'a, T>(ptr: *mut T) -> Option<&'a mut T> {
    if ptr.is_null() {
        None
    } else {
        Some(&mut *ptr)
    }
}

fn fill_mask(mask: &SelectionMask, out: &mut [u8]) {
    for (slot, &kept) in out.iter_mut().zip(mask.as_slice()) {
        *slot = u8::from(kept);
    }
}

/// Static name for a status code; never null.
#[no_mangle]
pub extern "C" fn rdime_status_name(status: RdimeStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        RdimeStatus::Ok => b"ok\0",
        RdimeStatus::NullArgument => b"null argument\0",
        RdimeStatus::InvalidArgument => b"invalid argument\0",
        RdimeStatus::DimMismatch => b"dimension mismatch\0",
        RdimeStatus::Io => b"i/o error\0",
        RdimeStatus::Parse => b"parse error\0",
        RdimeStatus::NotFound => b"not found\0",
        RdimeStatus::Utf8 => b"invalid utf-8\0",
        RdimeStatus::Panic => b"internal panic\0",
    };
    name.as_ptr().cast()
}

/// Loads an embedding matrix from a file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be a valid
/// pointer. On success `*out` owns the matrix and must be released with
/// [`rdime_matrix_free`].
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_load(
    path: *const c_char,
    out: *mut *mut RdimeMatrix,
) -> RdimeStatus {
    guarded(|| {
        let (Some(out), false) = (out_arg(out), path.is_null()) else {
            return RdimeStatus::NullArgument;
        };
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return RdimeStatus::Utf8;
        };
        match load_embeddings(path) {
            Ok(inner) => {
                let ids_z = inner
                    .ids()
                    .iter()
                    .map(|id| {
                        let mut z = id.as_bytes().to_vec();
                        z.push(0);
                        z
                    })
                    .collect();
                *out = Box::into_raw(Box::new(RdimeMatrix { inner, ids_z }));
                RdimeStatus::Ok
            }
            Err(e) => {
                *out = ptr::null_mut();
                status_of(&e)
            }
        }
    })
}

/// Releases a matrix handle; a null pointer is a no-op.
///
/// # Safety
/// `matrix` must have come from [`rdime_matrix_load`] and not been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_free(matrix: *mut RdimeMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Number of rows.
///
/// # Safety
/// `matrix` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_rows(
    matrix: *const RdimeMatrix,
    out: *mut usize,
) -> RdimeStatus {
    guarded(|| {
        let (Some(m), Some(out)) = (matrix.as_ref(), out_arg(out)) else {
            return RdimeStatus::NullArgument;
        };
        *out = m.inner.len();
        RdimeStatus::Ok
    })
}

/// Embedding dimension.
///
/// # Safety
/// `matrix` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_dim(
    matrix: *const RdimeMatrix,
    out: *mut usize,
) -> RdimeStatus {
    guarded(|| {
        let (Some(m), Some(out)) = (matrix.as_ref(), out_arg(out)) else {
            return RdimeStatus::NullArgument;
        };
        *out = m.inner.dim();
        RdimeStatus::Ok
    })
}

/// Borrows one row; the pointer stays valid until the matrix is freed.
///
/// # Safety
/// `matrix` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_row(
    matrix: *const RdimeMatrix,
    row: usize,
    out: *mut *const f32,
) -> RdimeStatus {
    guarded(|| {
        let (Some(m), Some(out)) = (matrix.as_ref(), out_arg(out)) else {
            return RdimeStatus::NullArgument;
        };
        if row >= m.inner.len() {
            return RdimeStatus::NotFound;
        }
        *out = m.inner.row(row).as_ptr();
        RdimeStatus::Ok
    })
}

/// Borrows one row id as a NUL-terminated string; valid until the
/// matrix is freed.
///
/// # Safety
/// `matrix` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_id(
    matrix: *const RdimeMatrix,
    row: usize,
    out: *mut *const c_char,
) -> RdimeStatus {
    guarded(|| {
        let (Some(m), Some(out)) = (matrix.as_ref(), out_arg(out)) else {
            return RdimeStatus::NullArgument;
        };
        let Some(id) = m.ids_z.get(row) else {
            return RdimeStatus::NotFound;
        };
        *out = id.as_ptr().cast();
        RdimeStatus::Ok
    })
}

/// Row index of an id.
///
/// # Safety
/// `matrix`, `id`, and `out` must be valid pointers; `id` must be
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rdime_matrix_find(
    matrix: *const RdimeMatrix,
    id: *const c_char,
    out: *mut usize,
) -> RdimeStatus {
    guarded(|| {
        let (Some(m), Some(out), false) = (matrix.as_ref(), out_arg(out), id.is_null()) else {
            return RdimeStatus::NullArgument;
        };
        let Ok(id) = CStr::from_ptr(id).to_str() else {
            return RdimeStatus::Utf8;
        };
        match m.inner.find(id) {
            Some(row) => {
                *out = row;
                RdimeStatus::Ok
            }
            None => RdimeStatus::NotFound,
        }
    })
}

unsafe fn weights_for_scheme(
    scheme: &WeightScheme,
    query: *const f64,
    dim: usize,
    docs: *const f64,
    num_docs: usize,
    out: *mut f64,
) -> RdimeStatus {
    let (Some(query), Some(docs)) = (slice_arg(query, dim), slice_arg(docs, num_docs * dim))
    else {
        return RdimeStatus::NullArgument;
    };
    if out.is_null() {
        return RdimeStatus::NullArgument;
    }
    let doc_rows: Vec<Vec<f64>> = docs.chunks_exact(dim).map(<[f64]>::to_vec).collect();
    match kernel_weights(query, &doc_rows, scheme) {
        Ok(weights) => {
            slice::from_raw_parts_mut(out, num_docs).copy_from_slice(weights.as_slice());
            RdimeStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Uniform kernel weights (1/num_docs each).
///
/// # Safety
/// `out` must hold `num_docs` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdime_uniform_weights(num_docs: usize, out: *mut f64) -> RdimeStatus {
    guarded(|| {
        if out.is_null() {
            return RdimeStatus::NullArgument;
        }
        if num_docs == 0 {
            return RdimeStatus::InvalidArgument;
        }
        let w = vec![1.0 / num_docs as f64; num_docs];
        slice::from_raw_parts_mut(out, num_docs).copy_from_slice(&w);
        RdimeStatus::Ok
    })
}

/// Softmax-of-dot-products kernel weights at the given temperature.
///
/// # Safety
/// `query` holds `dim` doubles, `docs` holds `num_docs * dim` doubles
/// row-major, `out` holds `num_docs` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdime_softmax_weights(
    query: *const f64,
    dim: usize,
    docs: *const f64,
    num_docs: usize,
    temperature: f64,
    out: *mut f64,
) -> RdimeStatus {
    guarded(|| {
        weights_for_scheme(
            &WeightScheme::SoftmaxScores { temperature },
            query,
            dim,
            docs,
            num_docs,
            out,
        )
    })
}

/// Gaussian-kernel weights exp(−gamma·‖q−d‖²), normalized.
///
/// # Safety
/// Same buffer contracts as [`rdime_softmax_weights`].
#[no_mangle]
pub unsafe extern "C" fn rdime_rbf_weights(
    query: *const f64,
    dim: usize,
    docs: *const f64,
    num_docs: usize,
    gamma: f64,
    out: *mut f64,
) -> RdimeStatus {
    guarded(|| weights_for_scheme(&WeightScheme::Rbf { gamma }, query, dim, docs, num_docs, out))
}

/// Inverse-variance weights from per-document noise scales.
///
/// # Safety
/// `sigmas` and `out` must hold `num_docs` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdime_inverse_variance_weights(
    sigmas: *const f64,
    num_docs: usize,
    out: *mut f64,
) -> RdimeStatus {
    guarded(|| {
        let Some(sigmas) = slice_arg(sigmas, num_docs) else {
            return RdimeStatus::NullArgument;
        };
        if out.is_null() {
            return RdimeStatus::NullArgument;
        }
        let scheme = WeightScheme::InverseVariance {
            sigmas: sigmas.to_vec(),
        };
        // The scheme ignores the query and documents; feed stand-ins of
        // the right shape.
        let query = vec![0.0; 1];
        let docs = vec![vec![0.0; 1]; num_docs];
        match kernel_weights(&query, &docs, &scheme) {
            Ok(weights) => {
                slice::from_raw_parts_mut(out, num_docs).copy_from_slice(weights.as_slice());
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Element-wise importance q ⊙ d of a single document.
///
/// # Safety
/// `query`, `doc`, and `out` must hold `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdime_single_doc_importance(
    query: *const f64,
    doc: *const f64,
    dim: usize,
    out: *mut f64,
) -> RdimeStatus {
    guarded(|| {
        let (Some(query), Some(doc)) = (slice_arg(query, dim), slice_arg(doc, dim)) else {
            return RdimeStatus::NullArgument;
        };
        if out.is_null() {
            return RdimeStatus::NullArgument;
        }
        match single_doc_dime(query, doc) {
            Ok(scores) => {
                slice::from_raw_parts_mut(out, dim).copy_from_slice(scores.as_slice());
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Kernel importance q ⊙ Σ wᵢ d⁽ⁱ⁾ with caller-supplied weights.
///
/// # Safety
/// `query` and `out` hold `dim` doubles; `docs` holds
/// `num_docs * dim` doubles row-major; `weights` holds `num_docs`
/// doubles summing to 1.
#[no_mangle]
pub unsafe extern "C" fn rdime_kernel_importance(
    query: *const f64,
    dim: usize,
    docs: *const f64,
    num_docs: usize,
    weights: *const f64,
    out: *mut f64,
) -> RdimeStatus {
    guarded(|| {
        let (Some(query), Some(docs), Some(weights)) = (
            slice_arg(query, dim),
            slice_arg(docs, num_docs * dim),
            slice_arg(weights, num_docs),
        ) else {
            return RdimeStatus::NullArgument;
        };
        if out.is_null() {
            return RdimeStatus::NullArgument;
        }
        let weights = match WeightVector::new(weights.to_vec()) {
            Ok(w) => w,
            Err(e) => return status_of(&e),
        };
        let doc_rows: Vec<Vec<f64>> = docs.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        match kernel_dime(query, &doc_rows, &weights) {
            Ok(scores) => {
                slice::from_raw_parts_mut(out, dim).copy_from_slice(scores.as_slice());
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Estimated noise floor mean(q² − u), clamped at zero; `raw` (may be
/// null) receives the unclamped value.
///
/// # Safety
/// `query` and `importance` hold `dim` doubles; `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rdime_noise_floor(
    query: *const f64,
    importance: *const f64,
    dim: usize,
    value: *mut f64,
    raw: *mut f64,
) -> RdimeStatus {
    guarded(|| {
        let (Some(query), Some(importance), Some(value)) = (
            slice_arg(query, dim),
            slice_arg(importance, dim),
            out_arg(value),
        ) else {
            return RdimeStatus::NullArgument;
        };
        match estimate_noise(query, importance) {
            Ok(noise) => {
                *value = noise.value;
                if let Some(raw) = out_arg(raw) {
                    *raw = noise.raw;
                }
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Noise-threshold selection: `mask_out[i]` is 1 where the dimension is
/// retained. `fell_back` (may be null) is set to 1 when the threshold
/// retained nothing and the full mask was substituted.
///
/// # Safety
/// `query` and `importance` hold `dim` doubles; `mask_out` holds `dim`
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn rdime_select_threshold(
    query: *const f64,
    importance: *const f64,
    dim: usize,
    mask_out: *mut u8,
    fell_back: *mut u8,
) -> RdimeStatus {
    guarded(|| {
        let (Some(query), Some(importance)) =
            (slice_arg(query, dim), slice_arg(importance, dim))
        else {
            return RdimeStatus::NullArgument;
        };
        if mask_out.is_null() {
            return RdimeStatus::NullArgument;
        }
        match rdime_select(query, importance) {
            Ok(mask) => {
                fill_mask(&mask, slice::from_raw_parts_mut(mask_out, dim));
                if let Some(flag) = out_arg(fell_back) {
                    *flag = u8::from(mask.tag() == "rdime-fallback");
                }
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Fixed-fraction selection keeping max(1, floor(k·dim)) dimensions by
/// score (absolute value when `use_absolute` is nonzero).
///
/// # Safety
/// `scores` holds `dim` doubles; `mask_out` holds `dim` bytes.
#[no_mangle]
pub unsafe extern "C" fn rdime_select_topk(
    scores: *const f64,
    dim: usize,
    k: f64,
    use_absolute: u8,
    mask_out: *mut u8,
) -> RdimeStatus {
    guarded(|| {
        let Some(scores) = slice_arg(scores, dim) else {
            return RdimeStatus::NullArgument;
        };
        if mask_out.is_null() {
            return RdimeStatus::NullArgument;
        }
        match topk_select(scores, k, use_absolute != 0) {
            Ok(mask) => {
                fill_mask(&mask, slice::from_raw_parts_mut(mask_out, dim));
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Dot product restricted to masked-in dimensions, accumulated in f64.
///
/// # Safety
/// `query` and `doc` hold `dim` floats; `mask` holds `dim` bytes.
#[no_mangle]
pub unsafe extern "C" fn rdime_masked_dot(
    query: *const f32,
    doc: *const f32,
    mask: *const u8,
    dim: usize,
    out: *mut f64,
) -> RdimeStatus {
    guarded(|| {
        let (Some(query), Some(doc), Some(mask), Some(out)) = (
            slice_arg(query, dim),
            slice_arg(doc, dim),
            slice_arg(mask, dim),
            out_arg(out),
        ) else {
            return RdimeStatus::NullArgument;
        };
        let retained: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b != 0).then_some(i))
            .collect();
        let mask = match SelectionMask::from_indices(dim, &retained, "ffi") {
            Ok(m) => m,
            Err(e) => return status_of(&e),
        };
        match masked_score(query, doc, &mask) {
            Ok(score) => {
                *out = score;
                RdimeStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}
