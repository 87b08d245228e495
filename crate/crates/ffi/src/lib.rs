//! C ABI over the `hmmgmr` library.
//!
//! Models cross the boundary as opaque [`HmmgmrModel`] handles. Every fallible
//! function returns an [`HmmgmrStatus`]; on failure the message is available
//! from [`hmmgmr_last_error`] on the same thread. Frame data is passed as
//! row-major `T x D` arrays of `double`. Panics never unwind into the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hmmgmr::inference::posteriors_frames;
use hmmgmr::learning::{fit, InitMethod, TrainingConfig};
use hmmgmr::model::{deserialize_model, serialize_model};
use hmmgmr::regression::{gmm_gmr_predict, predict_sequence};
use hmmgmr::{Error, EventSequence, FeatureSchema, FrameMatrix, Model};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmmgmrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Numeric = 4,
    Panic = 5,
}

/// Initialization method for [`hmmgmr_fit`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmmgmrInit {
    KBins = 0,
    KMeans = 1,
}

/// Opaque trained model (HMM or GMM).
pub struct HmmgmrModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(HmmgmrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) | Error::Dimension(_) | Error::InvalidSchema(_) => HmmgmrStatus::InvalidArgument,
            e if e.is_numeric() => HmmgmrStatus::Numeric,
            Error::Init(_) => HmmgmrStatus::Numeric,
            _ => HmmgmrStatus::Data,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HmmgmrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(HmmgmrStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> HmmgmrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HmmgmrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HmmgmrStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(m: *const HmmgmrModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn frames_from(data: *const f64, t: usize, d: usize) -> Result<FrameMatrix, Fail> {
    if data.is_null() {
        return Err(null("frame data"));
    }
    let n = t.checked_mul(d).ok_or_else(|| invalid("frame array size overflows"))?;
    let slice = std::slice::from_raw_parts(data, n);
    Ok(FrameMatrix::new(d, slice.to_vec())?)
}

unsafe fn out_slice<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hmmgmr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hmmgmr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a model document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_model_from_json(json: *const c_char, out: *mut *mut HmmgmrModel) -> HmmgmrStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|_| invalid("json is not UTF-8"))?;
        let inner = deserialize_model(text)?;
        *out = Box::into_raw(Box::new(HmmgmrModel { inner }));
        Ok(())
    })
}

/// Serializes a model; free the string with [`hmmgmr_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_model_to_json(model: *const HmmgmrModel, out: *mut *mut c_char) -> HmmgmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serialize_model(m)?;
        *out = CString::new(text).map_err(|_| invalid("document contains NUL"))?.into_raw();
        Ok(())
    })
}

/// Releases a model handle. NULL is ignored.
///
/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_model_free(model: *mut HmmgmrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of states, feature dimension, input count and output count.
///
/// # Safety
/// `model` must be a live handle; each non-NULL out pointer must be valid.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_model_shape(
    model: *const HmmgmrModel,
    n_states: *mut usize,
    dim: *mut usize,
    n_inputs: *mut usize,
    n_outputs: *mut usize,
) -> HmmgmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let s = m.schema();
        for (p, v) in [
            (n_states, m.n_states()),
            (dim, s.dim()),
            (n_inputs, s.input_indices().len()),
            (n_outputs, s.output_indices().len()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Log-likelihood of one `t x dim` sequence under an HMM. When `gamma` is
/// non-NULL it receives the `t x K` state posteriors, row-major.
///
/// # Safety
/// `frames` must hold `t * dim` doubles, `log_likelihood` must be valid and
/// `gamma`, if non-NULL, must have room for `t * K` doubles.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_posteriors(
    model: *const HmmgmrModel,
    frames: *const f64,
    t: usize,
    dim: usize,
    log_likelihood: *mut f64,
    gamma: *mut f64,
) -> HmmgmrStatus {
    guard(|| {
        let Model::Hmm(m) = model_ref(model)? else {
            return Err(invalid("posteriors need an HMM"));
        };
        if log_likelihood.is_null() {
            return Err(null("log_likelihood"));
        }
        let x = frames_from(frames, t, dim)?;
        let fb = posteriors_frames(m, &x)?;
        *log_likelihood = fb.log_likelihood;
        if !gamma.is_null() {
            let k = m.n_states();
            let g = out_slice(gamma, t * k, "gamma")?;
            for s in 0..t {
                for j in 0..k {
                    g[s * k + j] = fb.gamma[(s, j)];
                }
            }
        }
        Ok(())
    })
}

/// HMM-GMR (or GMM-GMR for a mixture handle) over a `t x n_inputs` input
/// stream. Writes the `t x n_outputs` point estimates and, when `beliefs` is
/// non-NULL, the `t x K` state beliefs.
///
/// # Safety
/// `inputs` must hold `t * n_inputs` doubles, `estimates` must have room for
/// `t * n_outputs` doubles and `beliefs`, if non-NULL, for `t * K`.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_predict(
    model: *const HmmgmrModel,
    inputs: *const f64,
    t: usize,
    n_inputs: usize,
    estimates: *mut f64,
    beliefs: *mut f64,
) -> HmmgmrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = frames_from(inputs, t, n_inputs)?;
        let (b, p) = match m {
            Model::Hmm(h) => predict_sequence(h, &x)?,
            Model::Gmm(g) => gmm_gmr_predict(g, &x)?,
        };
        let o = p.point_estimate.ncols();
        let est = out_slice(estimates, t * o, "estimates")?;
        for s in 0..t {
            for j in 0..o {
                est[s * o + j] = p.point_estimate[(s, j)];
            }
        }
        if !beliefs.is_null() {
            let k = m.n_states();
            let out = out_slice(beliefs, t * k, "beliefs")?;
            for s in 0..t {
                for j in 0..k {
                    out[s * k + j] = b.h[(s, j)];
                }
            }
        }
        Ok(())
    })
}

/// Fits a `k`-state HMM by EM to `n_seq` sequences stored back to back in
/// `frames` (row-major, `dim` columns); `lengths[i]` is the frame count of
/// sequence `i`. The last `n_outputs` columns are outputs. `names` is a
/// comma-separated list of `dim` feature names, or NULL for `f0, f1, ...`.
///
/// # Safety
/// `frames` must hold `sum(lengths) * dim` doubles, `lengths` must hold
/// `n_seq` entries, `names` must be NULL or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn hmmgmr_fit(
    frames: *const f64,
    lengths: *const usize,
    n_seq: usize,
    dim: usize,
    names: *const c_char,
    n_outputs: usize,
    k: usize,
    init: HmmgmrInit,
    seed: u64,
    out: *mut *mut HmmgmrModel,
) -> HmmgmrStatus {
    guard(|| {
        if lengths.is_null() {
            return Err(null("lengths"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 || n_outputs == 0 || n_outputs > dim {
            return Err(invalid(format!("cannot take {n_outputs} outputs from {dim} features")));
        }
        let names: Vec<String> = if names.is_null() {
            (0..dim).map(|i| format!("f{i}")).collect()
        } else {
            let s = CStr::from_ptr(names).to_str().map_err(|_| invalid("names are not UTF-8"))?;
            s.split(',').map(|p| p.trim().to_string()).collect()
        };
        if names.len() != dim {
            return Err(invalid(format!("{} names for {dim} features", names.len())));
        }
        let schema = FeatureSchema::new(&names, &names[dim - n_outputs..])?;
        let lengths = std::slice::from_raw_parts(lengths, n_seq);
        let total: usize = lengths.iter().sum();
        let all = frames_from(frames, total, dim)?;
        let mut seqs = Vec::with_capacity(n_seq);
        let mut start = 0;
        for (i, &len) in lengths.iter().enumerate() {
            let data = all.as_slice()[start * dim..(start + len) * dim].to_vec();
            let f = FrameMatrix::new(dim, data)?;
            seqs.push(EventSequence::with_uniform_time(format!("seq{i}"), f, schema.clone())?);
            start += len;
        }
        let cfg = TrainingConfig {
            k,
            init: match init {
                HmmgmrInit::KBins => InitMethod::KBins,
                HmmgmrInit::KMeans => InitMethod::KMeans,
            },
            seed,
            ..TrainingConfig::default()
        };
        let (m, _) = fit(&seqs, &cfg)?;
        *out = Box::into_raw(Box::new(HmmgmrModel { inner: Model::Hmm(m) }));
        Ok(())
    })
}
