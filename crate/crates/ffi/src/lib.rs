//! C interface to `sparsegp`.
//!
//! Objects are opaque handles created by `sgp_*_new`/`sgp_fit` and released
//! with the matching `sgp_*_free`. Every fallible call returns an
//! [`SgpStatus`]; on failure `sgp_last_error()` describes the error until the
//! next failing call on the same thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use sparsegp::bayes::{predict_conditional, Dataset, PosteriorSampleSet};
use sparsegp::cli::{fit, RunConfig};
use sparsegp::kernels::{y_kernel_eval, Inputs, KernelHyperparameters, Point};
use sparsegp::linalg::{assemble_covariance, minres_solve, AssemblyPlan, SolverSettings, SparseSymmetricMatrix};
use sparsegp::Error;

/// Result of every fallible call. Codes 2-4 match the command-line exit
/// statuses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Numerical = 4,
    Panic = 5,
}

/// Covariance hyperparameters.
pub struct SgpKernel {
    theta: KernelHyperparameters,
}

/// Sparse symmetric matrix in CSR form.
pub struct SgpMatrix {
    inner: SparseSymmetricMatrix,
}

/// Posterior draws together with the data they were fitted to.
pub struct SgpPosterior {
    data: Dataset,
    samples: PosteriorSampleSet,
    settings: SolverSettings,
    seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SgpStatus {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::UnsupportedSmoothness(_) => SgpStatus::Config,
        Error::Data(_)
        | Error::DimensionMismatch { .. }
        | Error::IndexOutOfRange { .. }
        | Error::Io { .. }
        | Error::MatrixMarket(_) => SgpStatus::Data,
        _ => SgpStatus::Numerical,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SgpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgpStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SgpStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SgpStatus::Panic
        }
    }
}

unsafe fn slice_in<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn str_in<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(Error::Config(format!("{what} is not valid UTF-8"))))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

fn out_ptr<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    // SAFETY: checked non-null; the caller provides a writable slot.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    Ok(())
}

fn inputs(n: usize, dim: usize, coords: &[f64]) -> Result<Inputs, Error> {
    if coords.len() != n * dim {
        return Err(Error::DimensionMismatch {
            expected: n * dim,
            found: coords.len(),
        });
    }
    Inputs::new(dim, coords.to_vec())
}

/// Message for the last failed call on this thread, or null. Owned by the
/// library; valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn sgp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sgp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses hyperparameters from their JSON form.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sgp_kernel_new(json: *const c_char, out: *mut *mut SgpKernel) -> SgpStatus {
    guard(|| {
        let text = str_in(json, "json")?;
        let theta: KernelHyperparameters =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("hyperparameters: {e}")))?;
        out_ptr(out, SgpKernel { theta })
    })
}

/// # Safety
/// `kernel` must come from `sgp_kernel_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sgp_kernel_free(kernel: *mut SgpKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// `C_y(x, x2)` for two `dim`-dimensional points.
///
/// # Safety
/// `x` and `x2` must each hold `dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_kernel_eval(
    kernel: *const SgpKernel,
    dim: usize,
    x: *const f64,
    x2: *const f64,
    out: *mut f64,
) -> SgpStatus {
    guard(|| {
        let k = handle(kernel, "kernel")?;
        let a = slice_in(x, dim, "x")?;
        let b = slice_in(x2, dim, "x2")?;
        k.theta.validate(dim)?;
        let v = y_kernel_eval(&k.theta, Point::new(a), Point::new(b));
        *out.as_mut().ok_or(Failure::Null("out"))? = v;
        Ok(())
    })
}

/// Assembles the covariance at `n` points stored row-major in `coords`,
/// with the noise variance on the diagonal when `include_noise` is nonzero.
///
/// # Safety
/// `coords` must hold `n * dim` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sgp_kernel_assemble(
    kernel: *const SgpKernel,
    n: usize,
    dim: usize,
    coords: *const f64,
    include_noise: i32,
    workers: usize,
    out: *mut *mut SgpMatrix,
) -> SgpStatus {
    guard(|| {
        let k = handle(kernel, "kernel")?;
        let pts = inputs(n, dim, slice_in(coords, n * dim, "coords")?)?;
        k.theta.validate(dim)?;
        let plan = AssemblyPlan::new(AssemblyPlan::default().batch_size, workers.max(1))?;
        let inner = assemble_covariance(&pts, &k.theta, &plan, include_noise != 0)?;
        out_ptr(out, SgpMatrix { inner })
    })
}

/// # Safety
/// `matrix` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sgp_matrix_free(matrix: *mut SgpMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Order of the matrix; 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgp_matrix_dim(matrix: *const SgpMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.dim())
}

/// Stored entries (both triangles); 0 for a null handle.
///
/// # Safety
/// `matrix` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgp_matrix_nnz(matrix: *const SgpMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.inner.nnz())
}

/// Copies the CSR arrays: `row_offsets` needs `dim + 1` slots, `cols` and
/// `values` need `nnz` slots each.
///
/// # Safety
/// The buffers must have the sizes above.
#[no_mangle]
pub unsafe extern "C" fn sgp_matrix_csr(
    matrix: *const SgpMatrix,
    row_offsets: *mut usize,
    cols: *mut usize,
    values: *mut f64,
) -> SgpStatus {
    guard(|| {
        let m = &handle(matrix, "matrix")?.inner;
        slice_out(row_offsets, m.dim() + 1, "row_offsets")?.copy_from_slice(m.row_offsets());
        slice_out(cols, m.nnz(), "cols")?.copy_from_slice(m.col_indices());
        slice_out(values, m.nnz(), "values")?.copy_from_slice(m.values());
        Ok(())
    })
}

/// Solves `A x = rhs` by MINRES to relative residual `tol`.
///
/// # Safety
/// `rhs` and `x` must each hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn sgp_matrix_solve(
    matrix: *const SgpMatrix,
    rhs: *const f64,
    tol: f64,
    x: *mut f64,
) -> SgpStatus {
    guard(|| {
        let m = &handle(matrix, "matrix")?.inner;
        let b = slice_in(rhs, m.dim(), "rhs")?;
        let dst = slice_out(x, m.dim(), "x")?;
        let (sol, report) = minres_solve(m, b, tol, 10 * m.dim().max(1))?;
        if !report.converged {
            return Err(Error::NoConvergence {
                iterations: report.iterations,
                residual: report.final_residual_norm,
            }
            .into());
        }
        dst.copy_from_slice(&sol);
        Ok(())
    })
}

/// Fits the model described by `config_toml` (the same document the
/// command-line tool reads; null for defaults) to `n` observations `z` at
/// row-major `coords`, with a constant prior mean.
///
/// # Safety
/// `coords` must hold `n * dim` values and `z` `n` values.
#[no_mangle]
pub unsafe extern "C" fn sgp_fit(
    n: usize,
    dim: usize,
    coords: *const f64,
    z: *const f64,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut SgpPosterior,
) -> SgpStatus {
    guard(|| {
        let pts = inputs(n, dim, slice_in(coords, n * dim, "coords")?)?;
        let z = slice_in(z, n, "z")?.to_vec();
        let config = if config_toml.is_null() {
            RunConfig::default()
        } else {
            RunConfig::parse(str_in(config_toml, "config_toml")?)?
        };
        let workers = config.solver.workers.max(1);
        let data = Dataset::with_constant_mean(pts, z)?;
        let samples = fit(&config, &data, seed, workers)?;
        let settings = config.solver.settings(workers)?;
        out_ptr(
            out,
            SgpPosterior {
                data,
                samples,
                settings,
                seed,
            },
        )
    })
}

/// # Safety
/// `posterior` must come from `sgp_fit` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sgp_posterior_free(posterior: *mut SgpPosterior) {
    if !posterior.is_null() {
        drop(Box::from_raw(posterior));
    }
}

/// Retained (post burn-in) draws; 0 for a null handle.
///
/// # Safety
/// `posterior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgp_posterior_len(posterior: *const SgpPosterior) -> usize {
    posterior.as_ref().map_or(0, |p| p.samples.retained().len())
}

/// Number of bumps, `n1 * n2`; 0 without a sparse factor.
///
/// # Safety
/// `posterior` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sgp_posterior_bumps(posterior: *const SgpPosterior) -> usize {
    posterior.as_ref().map_or(0, |p| p.samples.inclusion_frequencies().len())
}

/// Share of retained draws with each bump switched on.
///
/// # Safety
/// `out` must hold `sgp_posterior_bumps(posterior)` values.
#[no_mangle]
pub unsafe extern "C" fn sgp_posterior_inclusion(posterior: *const SgpPosterior, out: *mut f64) -> SgpStatus {
    guard(|| {
        let f = handle(posterior, "posterior")?.samples.inclusion_frequencies();
        slice_out(out, f.len(), "out")?.copy_from_slice(&f);
        Ok(())
    })
}

/// Posterior predictive mean and standard deviation of the latent process
/// at `m` query points, using at most `max_draws` evenly spaced draws (0 for
/// all).
///
/// # Safety
/// `coords` must hold `m * dim` values with `dim` the fitted dimension;
/// `mean` and `sd` must hold `m` values.
#[no_mangle]
pub unsafe extern "C" fn sgp_posterior_predict(
    posterior: *const SgpPosterior,
    m: usize,
    coords: *const f64,
    max_draws: usize,
    mean: *mut f64,
    sd: *mut f64,
) -> SgpStatus {
    guard(|| {
        let p = handle(posterior, "posterior")?;
        let dim = p.data.dim();
        let q = inputs(m, dim, slice_in(coords, m * dim, "coords")?)?;
        let mean = slice_out(mean, m, "mean")?;
        let sd = slice_out(sd, m, "sd")?;
        if m == 0 {
            return Ok(());
        }
        let kept = p.samples.retained();
        let take = if max_draws == 0 || max_draws >= kept.len() { kept.len() } else { max_draws };
        let draws: Vec<_> = (0..take).map(|i| kept[i * kept.len() / take.max(1)].clone()).collect();
        let w = DMatrix::from_element(m, 1, 1.0);
        let r = predict_conditional(&draws, &p.data, &q, &w, 0, p.seed, &p.settings)?;
        mean.copy_from_slice(&r.mean);
        sd.copy_from_slice(&r.sd);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_arguments_are_reported() {
        let mut k: *mut SgpKernel = ptr::null_mut();
        let st = unsafe { sgp_kernel_new(ptr::null(), &mut k) };
        assert_eq!(st, SgpStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(sgp_last_error()) }.to_str().unwrap();
        assert!(msg.contains("json"));
        assert!(k.is_null());
    }

    #[test]
    fn bad_json_is_a_config_error() {
        let mut k: *mut SgpKernel = ptr::null_mut();
        let json = CString::new("{\"core\": 3}").unwrap();
        assert_eq!(unsafe { sgp_kernel_new(json.as_ptr(), &mut k) }, SgpStatus::Config);
    }

    #[test]
    fn version_is_nul_terminated() {
        let v = unsafe { CStr::from_ptr(sgp_version()) };
        assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}
