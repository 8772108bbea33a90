//! C ABI for the polyads estimator.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible entry point returns a
//! [`PolyadsStatus`]; on failure [`polyads_last_error`] describes the error
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use polyads::enumeration::{EnumerationConfig, DEFAULT_MAX_RECORDS};
use polyads::estimator::{fit, FitConfig};
use polyads::variance::{covariance, CovarianceResult, VarianceConfig, DEFAULT_MAX_PAIR_WORK};
use polyads::{
    build_incidence, enumerate_active_with, CovariateProvider, DenseCovariates, PolyadsError,
    SparseCountGraph,
};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolyadsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidGraph = 4,
    MissingCovariates = 5,
    CollinearFeatures = 6,
    ResourceGuard = 7,
    /// The fit handle is still returned, without covariance estimates.
    NotConverged = 8,
    /// The requested estimate was not computed (see the error message).
    Unavailable = 9,
    Internal = 10,
    Panic = 11,
}

/// Which sandwich estimate an accessor reads.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolyadsSandwich {
    /// Meat from squared per-edge scores.
    EdgeScore = 0,
    /// Meat from pairs of polyads sharing an edge.
    SharedEdge = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PolyadsFitConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub truncation_l: u64,
    pub ridge_epsilon: f64,
    pub damped: bool,
    pub ci_level: f64,
    pub max_pair_work: u64,
    pub max_records: usize,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct PolyadsMetaResult {
    pub pooled: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub tau2: f64,
    /// `false` when the Paule–Mandel iteration failed and the
    /// DerSimonian–Laird moment estimate was used.
    pub paule_mandel: bool,
    pub iterations: usize,
}

/// Count graph handle.
pub struct PolyadsGraph(SparseCountGraph);

/// Covariate provider handle.
pub struct PolyadsCovariates(Box<dyn CovariateProvider + Send>);

/// Fitted model handle.
pub struct PolyadsFit {
    beta: Vec<f64>,
    converged: bool,
    newton_steps: usize,
    loss: f64,
    n_canonical: usize,
    covariance: Option<CovarianceResult>,
}

/// Fills `out[0..p]` with the features of the edge `coords[0..d]` (1-based
/// node labels). Returns `false` when the edge has no covariates. May be
/// called concurrently from several threads.
pub type PolyadsCovariateCallback = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        coords: *const u32,
        d: usize,
        out: *mut f64,
        p: usize,
    ) -> bool,
>;

struct Callback {
    f: unsafe extern "C" fn(*mut c_void, *const u32, usize, *mut f64, usize) -> bool,
    user_data: *mut c_void,
    p: usize,
}

// SAFETY: the caller of `polyads_covariates_from_callback` promises that the
// callback and its user data are safe to use from any thread.
unsafe impl Send for Callback {}
unsafe impl Sync for Callback {}

impl CovariateProvider for Callback {
    fn dim(&self) -> usize {
        self.p
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        // SAFETY: both buffers are valid for the lengths passed.
        unsafe {
            (self.f)(
                self.user_data,
                edge.as_ptr(),
                edge.len(),
                out.as_mut_ptr(),
                out.len(),
            )
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &PolyadsError) -> PolyadsStatus {
    match err {
        PolyadsError::DimensionMismatch(_) => PolyadsStatus::DimensionMismatch,
        PolyadsError::InvalidGraph(_)
        | PolyadsError::InvalidPolyad(_)
        | PolyadsError::NegativeCount { .. } => PolyadsStatus::InvalidGraph,
        PolyadsError::MissingCovariates { .. } => PolyadsStatus::MissingCovariates,
        PolyadsError::CollinearFeatures { .. } => PolyadsStatus::CollinearFeatures,
        PolyadsError::ResourceGuard(_) => PolyadsStatus::ResourceGuard,
        PolyadsError::InvalidParameter(_) | PolyadsError::Meta(_) | PolyadsError::Parse { .. } => {
            PolyadsStatus::InvalidArgument
        }
        _ => PolyadsStatus::Internal,
    }
}

struct Failure(PolyadsStatus, String);

impl From<PolyadsError> for Failure {
    fn from(e: PolyadsError) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(PolyadsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, recording any error or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<PolyadsStatus, Failure>) -> PolyadsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            PolyadsStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or valid for `len` reads.
unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

/// # Safety
/// `ptr` must be null or valid for `len` writes.
unsafe fn output<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

/// Message of the last error on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn polyads_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn polyads_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn polyads_fit_config_default() -> PolyadsFitConfig {
    let fit = FitConfig::default();
    let var = VarianceConfig::default();
    PolyadsFitConfig {
        max_iterations: fit.max_iterations,
        gradient_tolerance: fit.gradient_tolerance,
        truncation_l: fit.truncation_l,
        ridge_epsilon: fit.ridge_epsilon,
        damped: fit.damped,
        ci_level: var.ci_level,
        max_pair_work: u64::try_from(DEFAULT_MAX_PAIR_WORK).unwrap_or(u64::MAX),
        max_records: DEFAULT_MAX_RECORDS,
    }
}

/// Builds a count graph from `n_edges` edges. `coords` holds `n_edges × d`
/// 1-based node labels, edge by edge; `counts` holds the positive counts.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn polyads_graph_new(
    d: usize,
    dims: *const u32,
    n_edges: usize,
    coords: *const u32,
    counts: *const u64,
    out: *mut *mut PolyadsGraph,
) -> PolyadsStatus {
    guard(|| {
        let out = output(out, 1, "out")?;
        let dims = input(dims, d, "dims")?;
        let len = n_edges.checked_mul(d).ok_or_else(|| {
            Failure(
                PolyadsStatus::InvalidArgument,
                "edge buffer size overflows".into(),
            )
        })?;
        let coords = input(coords, len, "coords")?;
        let counts = input(counts, n_edges, "counts")?;
        let edges = counts
            .iter()
            .enumerate()
            .map(|(k, &y)| (&coords[k * d..(k + 1) * d], y));
        let g = SparseCountGraph::new(dims, edges)?;
        out[0] = Box::into_raw(Box::new(PolyadsGraph(g)));
        Ok(PolyadsStatus::Ok)
    })
}

/// # Safety
/// `graph` must be null or a handle from [`polyads_graph_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn polyads_graph_free(graph: *mut PolyadsGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Number of positive edges, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn polyads_graph_num_edges(graph: *const PolyadsGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_edges())
}

/// Dense covariates on the full grid. `values` holds `p` features per cell,
/// cells in row-major order of their 1-based labels (last dimension fastest).
///
/// # Safety
/// `dims` must hold `d` entries and `values` `p × Π dims` entries.
#[no_mangle]
pub unsafe extern "C" fn polyads_covariates_dense(
    d: usize,
    dims: *const u32,
    p: usize,
    values: *const f64,
    out: *mut *mut PolyadsCovariates,
) -> PolyadsStatus {
    guard(|| {
        let out = output(out, 1, "out")?;
        let dims = input(dims, d, "dims")?;
        let cells = dims
            .iter()
            .try_fold(p, |acc, &n| acc.checked_mul(n as usize))
            .ok_or_else(|| {
                Failure(
                    PolyadsStatus::InvalidArgument,
                    "covariate buffer size overflows".into(),
                )
            })?;
        let values = input(values, cells, "values")?;
        let cov = DenseCovariates::new(dims, p, values.to_vec())?;
        out[0] = Box::into_raw(Box::new(PolyadsCovariates(Box::new(cov))));
        Ok(PolyadsStatus::Ok)
    })
}

/// Covariates computed on demand by `callback`.
///
/// # Safety
/// `callback` and `user_data` must stay valid and thread-safe until the
/// handle is freed.
#[no_mangle]
pub unsafe extern "C" fn polyads_covariates_from_callback(
    p: usize,
    callback: PolyadsCovariateCallback,
    user_data: *mut c_void,
    out: *mut *mut PolyadsCovariates,
) -> PolyadsStatus {
    guard(|| {
        let out = output(out, 1, "out")?;
        let f = callback.ok_or_else(|| null("callback"))?;
        if p == 0 {
            return Err(Failure(
                PolyadsStatus::InvalidArgument,
                "p must be positive".into(),
            ));
        }
        let cov = Callback { f, user_data, p };
        out[0] = Box::into_raw(Box::new(PolyadsCovariates(Box::new(cov))));
        Ok(PolyadsStatus::Ok)
    })
}

/// # Safety
/// `cov` must be null or a covariate handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn polyads_covariates_free(cov: *mut PolyadsCovariates) {
    if !cov.is_null() {
        drop(Box::from_raw(cov));
    }
}

fn to_configs(c: &PolyadsFitConfig) -> (FitConfig, VarianceConfig, EnumerationConfig) {
    let fit = FitConfig {
        max_iterations: c.max_iterations,
        gradient_tolerance: c.gradient_tolerance,
        truncation_l: c.truncation_l,
        ridge_epsilon: c.ridge_epsilon,
        damped: c.damped,
        ..FitConfig::default()
    };
    let var = VarianceConfig {
        ci_level: c.ci_level,
        max_pair_work: c.max_pair_work as u128,
        truncation_l: c.truncation_l,
    };
    let en = EnumerationConfig {
        max_records: c.max_records,
        ..EnumerationConfig::default()
    };
    (fit, var, en)
}

/// Enumerates active polyads, runs Newton from zero and computes both
/// sandwich estimates. On `NotConverged` the handle is still written and
/// carries the last iterate but no covariance. A null `config` uses the
/// defaults.
///
/// # Safety
/// `graph` and `cov` must be live handles; `config` null or valid; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit(
    graph: *const PolyadsGraph,
    cov: *const PolyadsCovariates,
    config: *const PolyadsFitConfig,
    out: *mut *mut PolyadsFit,
) -> PolyadsStatus {
    guard(|| {
        let out = output(out, 1, "out")?;
        let graph = &graph.as_ref().ok_or_else(|| null("graph"))?.0;
        let cov = &*cov.as_ref().ok_or_else(|| null("covariates"))?.0;
        let config = config
            .as_ref()
            .copied()
            .unwrap_or_else(|| polyads_fit_config_default());
        let (fit_cfg, var_cfg, en_cfg) = to_configs(&config);
        let p = cov.dim();
        let records = enumerate_active_with(graph, cov, &en_cfg)?.records;
        let res = fit(&records, p, &fit_cfg, &vec![0.0; p])?;
        let covariance = if res.converged {
            let inc = build_incidence(&records);
            Some(covariance(&records, &inc, &res.beta_hat, &var_cfg)?)
        } else {
            set_error(format!(
                "Newton stopped after {} steps with gradient norm {:e}",
                res.newton_steps(),
                res.gradient_norm
            ));
            None
        };
        let status = if res.converged {
            PolyadsStatus::Ok
        } else {
            PolyadsStatus::NotConverged
        };
        out[0] = Box::into_raw(Box::new(PolyadsFit {
            beta: res.beta_hat.clone(),
            converged: res.converged,
            newton_steps: res.newton_steps(),
            loss: res.loss,
            n_canonical: res.n_canonical,
            covariance,
        }));
        Ok(status)
    })
}

/// # Safety
/// `fit` must be null or a fit handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_free(fit: *mut PolyadsFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of features, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_num_features(fit: *const PolyadsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.beta.len())
}

/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_converged(fit: *const PolyadsFit) -> bool {
    fit.as_ref().is_some_and(|f| f.converged)
}

/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_newton_steps(fit: *const PolyadsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.newton_steps)
}

/// Loss at the returned coefficients, NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_loss(fit: *const PolyadsFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.loss)
}

/// Number of canonical active polyads.
///
/// # Safety
/// `fit` must be null or a live fit handle.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_num_polyads(fit: *const PolyadsFit) -> usize {
    fit.as_ref().map_or(0, |f| f.n_canonical)
}

fn check_len(len: usize, want: usize) -> Result<(), Failure> {
    if len != want {
        return Err(Failure(
            PolyadsStatus::DimensionMismatch,
            format!("buffer has {len} entries, expected {want}"),
        ));
    }
    Ok(())
}

/// Copies the `p` coefficients into `out`.
///
/// # Safety
/// `fit` must be a live fit handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_beta(
    fit: *const PolyadsFit,
    out: *mut f64,
    len: usize,
) -> PolyadsStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        check_len(len, f.beta.len())?;
        output(out, len, "out")?.copy_from_slice(&f.beta);
        Ok(PolyadsStatus::Ok)
    })
}

fn sandwich(
    f: &PolyadsFit,
    which: PolyadsSandwich,
) -> Result<(&nalgebra::DMatrix<f64>, &[(f64, f64)]), Failure> {
    let c = f.covariance.as_ref().ok_or_else(|| {
        Failure(
            PolyadsStatus::Unavailable,
            "no covariance: the fit did not converge".into(),
        )
    })?;
    match which {
        PolyadsSandwich::EdgeScore => Ok((&c.sigma_hat, &c.ci)),
        PolyadsSandwich::SharedEdge => match (&c.sigma_prime_hat, &c.ci_prime) {
            (Some(s), Some(ci)) => Ok((s, ci)),
            _ => Err(Failure(
                PolyadsStatus::Unavailable,
                "shared-edge covariance skipped by the pair-work guard".into(),
            )),
        },
    }
}

/// Copies the `p × p` covariance matrix (row-major) into `out`.
///
/// # Safety
/// `fit` must be a live fit handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_covariance(
    fit: *const PolyadsFit,
    which: PolyadsSandwich,
    out: *mut f64,
    len: usize,
) -> PolyadsStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        let p = f.beta.len();
        check_len(len, p * p)?;
        let (sigma, _) = sandwich(f, which)?;
        let out = output(out, len, "out")?;
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = sigma[(i, j)];
            }
        }
        Ok(PolyadsStatus::Ok)
    })
}

/// Copies the per-coefficient interval bounds into `lower` and `upper`.
///
/// # Safety
/// `fit` must be a live fit handle; `lower` and `upper` valid for `len`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn polyads_fit_ci(
    fit: *const PolyadsFit,
    which: PolyadsSandwich,
    lower: *mut f64,
    upper: *mut f64,
    len: usize,
) -> PolyadsStatus {
    guard(|| {
        let f = fit.as_ref().ok_or_else(|| null("fit"))?;
        check_len(len, f.beta.len())?;
        let (_, ci) = sandwich(f, which)?;
        let lower = output(lower, len, "lower")?;
        let upper = output(upper, len, "upper")?;
        for (k, &(lo, hi)) in ci.iter().enumerate() {
            lower[k] = lo;
            upper[k] = hi;
        }
        Ok(PolyadsStatus::Ok)
    })
}

/// Random-effects pooling of `k` estimates with their variances.
///
/// # Safety
/// `betas` and `variances` must hold `k` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn polyads_meta_analysis(
    k: usize,
    betas: *const f64,
    variances: *const f64,
    out: *mut PolyadsMetaResult,
) -> PolyadsStatus {
    guard(|| {
        let out = output(out, 1, "out")?;
        let betas = input(betas, k, "betas")?;
        let variances = input(variances, k, "variances")?;
        let studies: Vec<(f64, f64)> = betas
            .iter()
            .copied()
            .zip(variances.iter().copied())
            .collect();
        let m = polyads::meta::meta_analysis(&studies)?;
        out[0] = PolyadsMetaResult {
            pooled: m.pooled,
            se: m.se,
            ci_lower: m.ci.0,
            ci_upper: m.ci.1,
            tau2: m.tau2,
            paule_mandel: m.method == polyads::meta::TauMethod::PauleMandel,
            iterations: m.iterations,
        };
        Ok(PolyadsStatus::Ok)
    })
}

/// Reads the last error as an owned string (for tests and Rust callers).
pub fn last_error_string() -> Option<String> {
    let p = polyads_last_error();
    // SAFETY: non-null pointers come from the thread-local CString.
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}
