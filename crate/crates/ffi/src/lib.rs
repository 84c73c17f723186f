//! C ABI for the mgising library.
//!
//! Conventions: objects are opaque handles created and freed by this library;
//! functions return [`MgiStatus`] and write results through out-pointers. On
//! any failure the per-thread error message is set and can be fetched with
//! [`mgi_last_error_message`]. Strings returned by this library are freed
//! with [`mgi_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use mgising::learner::{run_online, GraphInit, LearnerConfig, OnlineResult};
use mgising::select::EvalWindow;
use mgising::{BinaryRaster, Error, FilterSettings, GraphMatrix};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MgiStatus {
    MgiOk = 0,
    MgiErrNullPointer = 1,
    MgiErrInvalidArgument = 2,
    MgiErrDimensionMismatch = 3,
    MgiErrEnumerationLimit = 4,
    MgiErrNumeric = 5,
    MgiErrNoConvergence = 6,
    MgiErrIo = 7,
    MgiErrParse = 8,
    MgiErrInternal = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> MgiStatus {
    match err {
        Error::InvalidArgument(_) | Error::EmptyRaster => MgiStatus::MgiErrInvalidArgument,
        Error::DimensionMismatch(_) => MgiStatus::MgiErrDimensionMismatch,
        Error::EnumerationLimit { .. } => MgiStatus::MgiErrEnumerationLimit,
        Error::Numeric(_) | Error::DegenerateColumn { .. } => MgiStatus::MgiErrNumeric,
        Error::NoConvergence { .. } => MgiStatus::MgiErrNoConvergence,
        Error::Parse { .. } => MgiStatus::MgiErrParse,
        Error::Io(_) => MgiStatus::MgiErrIo,
        Error::AtTime { source, .. } => status_of(source),
    }
}

fn fail(err: Error) -> MgiStatus {
    let code = status_of(&err);
    set_error(err.to_string());
    code
}

/// Run a closure, translating errors and panics into status codes.
fn guarded(f: impl FnOnce() -> Result<MgiStatus, Error>) -> MgiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_error("internal panic".to_string());
            MgiStatus::MgiErrInternal
        }
    }
}

macro_rules! require_nonnull {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(format!("null pointer argument `{}`", stringify!($ptr)));
            return MgiStatus::MgiErrNullPointer;
        }
    };
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, Error> {
    let s = unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| Error::invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

/// A binary raster (time bins x nodes).
pub struct MgiRaster {
    inner: BinaryRaster,
}

/// A graph matrix (canonical parameter rows x graph columns).
pub struct MgiGraphs {
    inner: GraphMatrix,
}

/// The result of one online fit.
pub struct MgiFit {
    inner: OnlineResult,
}

/// Options for [`mgi_fit_run`]. Initialize with [`mgi_fit_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MgiFitOptions {
    pub num_graphs: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub mc_samples: usize,
    pub seed: u64,
    pub scale_columns: bool,
    pub compensate_state: bool,
    pub prior_mean: f64,
    pub prior_var: f64,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
}

/// Version string of the library; static storage, do not free.
#[no_mangle]
pub extern "C" fn mgi_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent error on this thread, or NULL if none. The
/// caller frees it with [`mgi_string_free`].
#[no_mangle]
pub extern "C" fn mgi_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |c| c.clone().into_raw())
    })
}

/// Free a string returned by this library. NULL is accepted.
///
/// # Safety
/// `s` must have been returned by a function of this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn mgi_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Read a raster CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_raster_read_csv(
    path: *const c_char,
    out: *mut *mut MgiRaster,
) -> MgiStatus {
    require_nonnull!(path);
    require_nonnull!(out);
    guarded(|| {
        let p = unsafe { path_arg(path) }?;
        let raster = mgising::io::read_raster_csv(&p)?;
        unsafe { *out = Box::into_raw(Box::new(MgiRaster { inner: raster })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// Build a raster from row-major 0/1 bytes (`bins` rows of `nodes` entries).
///
/// # Safety
/// `data` must point to `bins * nodes` readable bytes; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mgi_raster_new(
    data: *const u8,
    bins: usize,
    nodes: usize,
    out: *mut *mut MgiRaster,
) -> MgiStatus {
    require_nonnull!(data);
    require_nonnull!(out);
    guarded(|| {
        let slice = unsafe { std::slice::from_raw_parts(data, bins.saturating_mul(nodes)) };
        let raster = BinaryRaster::new(nodes, slice.to_vec(), None)?;
        if raster.len() != bins {
            return Err(Error::dims("row count disagrees with the data length"));
        }
        unsafe { *out = Box::into_raw(Box::new(MgiRaster { inner: raster })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// # Safety
/// `raster` must be a live handle from this library (or NULL).
#[no_mangle]
pub unsafe extern "C" fn mgi_raster_free(raster: *mut MgiRaster) {
    if !raster.is_null() {
        drop(unsafe { Box::from_raw(raster) });
    }
}

/// Number of time bins; 0 on NULL.
///
/// # Safety
/// `raster` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_raster_len(raster: *const MgiRaster) -> usize {
    unsafe { raster.as_ref() }.map_or(0, |r| r.inner.len())
}

/// Number of nodes; 0 on NULL.
///
/// # Safety
/// `raster` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_raster_node_count(raster: *const MgiRaster) -> usize {
    unsafe { raster.as_ref() }.map_or(0, |r| r.inner.node_count())
}

/// Write a raster to CSV.
///
/// # Safety
/// `raster` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mgi_raster_write_csv(
    raster: *const MgiRaster,
    path: *const c_char,
) -> MgiStatus {
    require_nonnull!(raster);
    require_nonnull!(path);
    guarded(|| {
        let p = unsafe { path_arg(path) }?;
        mgising::io::write_raster_csv(&p, &unsafe { &*raster }.inner)?;
        Ok(MgiStatus::MgiOk)
    })
}

/// Read a graph matrix CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_read_csv(
    path: *const c_char,
    out: *mut *mut MgiGraphs,
) -> MgiStatus {
    require_nonnull!(path);
    require_nonnull!(out);
    guarded(|| {
        let p = unsafe { path_arg(path) }?;
        let graphs = mgising::io::read_graphs_csv(&p)?;
        unsafe { *out = Box::into_raw(Box::new(MgiGraphs { inner: graphs })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// Write a graph matrix to CSV.
///
/// # Safety
/// `graphs` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_write_csv(
    graphs: *const MgiGraphs,
    path: *const c_char,
) -> MgiStatus {
    require_nonnull!(graphs);
    require_nonnull!(path);
    guarded(|| {
        let p = unsafe { path_arg(path) }?;
        mgising::io::write_graphs_csv(&p, &unsafe { &*graphs }.inner)?;
        Ok(MgiStatus::MgiOk)
    })
}

/// Build a graph matrix from column-major values: `param_dim(node_count)`
/// rows by `graph_count` columns.
///
/// # Safety
/// `values` must point to `param_dim(node_count) * graph_count` readable
/// doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_new(
    node_count: usize,
    graph_count: usize,
    values: *const f64,
    out: *mut *mut MgiGraphs,
) -> MgiStatus {
    require_nonnull!(values);
    require_nonnull!(out);
    guarded(|| {
        let d = mgising::ising::param_dim(node_count);
        let slice =
            unsafe { std::slice::from_raw_parts(values, d.saturating_mul(graph_count)) };
        let matrix = mgising::nalgebra::DMatrix::from_column_slice(d, graph_count, slice);
        let graphs = GraphMatrix::new(node_count, matrix)?;
        unsafe { *out = Box::into_raw(Box::new(MgiGraphs { inner: graphs })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// Graph matrix with i.i.d. standard normal entries.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_random(
    node_count: usize,
    graph_count: usize,
    seed: u64,
    out: *mut *mut MgiGraphs,
) -> MgiStatus {
    require_nonnull!(out);
    guarded(|| {
        let graphs = GraphMatrix::random_gaussian(node_count, graph_count, seed)?;
        unsafe { *out = Box::into_raw(Box::new(MgiGraphs { inner: graphs })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// The bundled 9-node demonstration pair (plus sign and letter T).
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_plus_t(out: *mut *mut MgiGraphs) -> MgiStatus {
    require_nonnull!(out);
    guarded(|| {
        unsafe {
            *out = Box::into_raw(Box::new(MgiGraphs {
                inner: mgising::synth::plus_t_graphs(),
            }))
        };
        Ok(MgiStatus::MgiOk)
    })
}

/// # Safety
/// `graphs` must be a live handle from this library (or NULL).
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_free(graphs: *mut MgiGraphs) {
    if !graphs.is_null() {
        drop(unsafe { Box::from_raw(graphs) });
    }
}

/// Nodes per graph; 0 on NULL.
///
/// # Safety
/// `graphs` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_node_count(graphs: *const MgiGraphs) -> usize {
    unsafe { graphs.as_ref() }.map_or(0, |g| g.inner.node_count())
}

/// Parameter rows per graph; 0 on NULL.
///
/// # Safety
/// `graphs` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_param_dim(graphs: *const MgiGraphs) -> usize {
    unsafe { graphs.as_ref() }.map_or(0, |g| g.inner.param_dim())
}

/// Number of graph columns; 0 on NULL.
///
/// # Safety
/// `graphs` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_count(graphs: *const MgiGraphs) -> usize {
    unsafe { graphs.as_ref() }.map_or(0, |g| g.inner.graph_count())
}

/// Copy the matrix out in column-major order.
///
/// # Safety
/// `graphs` must be a live handle; `values` must point to
/// `param_dim * graph_count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mgi_graphs_copy_values(
    graphs: *const MgiGraphs,
    values: *mut f64,
) -> MgiStatus {
    require_nonnull!(graphs);
    require_nonnull!(values);
    guarded(|| {
        let inner = &unsafe { &*graphs }.inner;
        let total = inner.param_dim() * inner.graph_count();
        let dst = unsafe { std::slice::from_raw_parts_mut(values, total) };
        dst.copy_from_slice(inner.values().as_slice());
        Ok(MgiStatus::MgiOk)
    })
}

/// Cosine similarity between column `col_a` of `a` and column `col_b` of `b`.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mgi_column_correlation(
    a: *const MgiGraphs,
    col_a: usize,
    b: *const MgiGraphs,
    col_b: usize,
    out: *mut f64,
) -> MgiStatus {
    require_nonnull!(a);
    require_nonnull!(b);
    require_nonnull!(out);
    guarded(|| {
        let ca = unsafe { &*a }.inner.column(col_a)?;
        let cb = unsafe { &*b }.inner.column(col_b)?;
        unsafe { *out = mgising::learner::column_correlation(&ca, &cb)? };
        Ok(MgiStatus::MgiOk)
    })
}

/// Exact samples from the weighted model, written row-major into `out`
/// (`count` rows of `node_count` 0/1 bytes). Deterministic given the seed.
///
/// # Safety
/// `graphs` must be a live handle, `theta` must point to `graph_count`
/// doubles, and `out` to `count * node_count` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mgi_sample_patterns(
    graphs: *const MgiGraphs,
    theta: *const f64,
    count: usize,
    seed: u64,
    out: *mut u8,
) -> MgiStatus {
    require_nonnull!(graphs);
    require_nonnull!(theta);
    require_nonnull!(out);
    guarded(|| {
        let inner = &unsafe { &*graphs }.inner;
        let weights = mgising::nalgebra::DVector::from_column_slice(unsafe {
            std::slice::from_raw_parts(theta, inner.graph_count())
        });
        let samples = mgising::ising::sample_patterns(&weights, inner, count, seed)?;
        let n = inner.node_count();
        let dst = unsafe { std::slice::from_raw_parts_mut(out, count * n) };
        for (i, s) in samples.iter().enumerate() {
            dst[i * n..(i + 1) * n].copy_from_slice(s.bits());
        }
        Ok(MgiStatus::MgiOk)
    })
}

/// Log normalizer of the weighted model.
///
/// # Safety
/// `graphs` must be a live handle, `theta` must point to `graph_count`
/// doubles, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mgi_log_partition(
    graphs: *const MgiGraphs,
    theta: *const f64,
    out: *mut f64,
) -> MgiStatus {
    require_nonnull!(graphs);
    require_nonnull!(theta);
    require_nonnull!(out);
    guarded(|| {
        let inner = &unsafe { &*graphs }.inner;
        let weights = mgising::nalgebra::DVector::from_column_slice(unsafe {
            std::slice::from_raw_parts(theta, inner.graph_count())
        });
        let combined = inner.combine(&weights)?;
        unsafe { *out = mgising::ising::log_partition(&combined)? };
        Ok(MgiStatus::MgiOk)
    })
}

/// Defaults mirroring the CLI: lambda 1000, epsilon 1e-3, 100 posterior
/// samples, column rescaling with state compensation.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_options_default(out: *mut MgiFitOptions) -> MgiStatus {
    require_nonnull!(out);
    unsafe {
        *out = MgiFitOptions {
            num_graphs: 1,
            lambda: 1000.0,
            epsilon: 1e-3,
            mc_samples: 100,
            seed: 0,
            scale_columns: true,
            compensate_state: true,
            prior_mean: 0.0,
            prior_var: 1.0,
            snapshot_every: 0,
        }
    };
    MgiStatus::MgiOk
}

/// Run the online fit on a raster. `init` may be NULL for the default random
/// standard-normal initialization from the seed.
///
/// # Safety
/// `raster` must be a live handle, `options` a valid pointer, `init` a live
/// handle or NULL, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_run(
    raster: *const MgiRaster,
    options: *const MgiFitOptions,
    init: *const MgiGraphs,
    out: *mut *mut MgiFit,
) -> MgiStatus {
    require_nonnull!(raster);
    require_nonnull!(options);
    require_nonnull!(out);
    guarded(|| {
        let opts = unsafe { *options };
        let settings = FilterSettings {
            lambda: opts.lambda,
            prior_mean: opts.prior_mean,
            prior_var: opts.prior_var,
            ..FilterSettings::new(opts.lambda)
        };
        let fcfg = settings.config_for(opts.num_graphs)?;
        let lcfg = LearnerConfig {
            epsilon: opts.epsilon,
            mc_samples: opts.mc_samples,
            scale_columns: opts.scale_columns,
            compensate_state: opts.compensate_state,
            seed: opts.seed,
            snapshot_every: (opts.snapshot_every > 0).then_some(opts.snapshot_every),
        };
        let graph_init = match unsafe { init.as_ref() } {
            Some(g) => GraphInit::Matrix(g.inner.clone()),
            None => GraphInit::Seed(opts.seed),
        };
        let result = run_online(
            &unsafe { &*raster }.inner,
            opts.num_graphs,
            &fcfg,
            &lcfg,
            graph_init,
        )?;
        unsafe { *out = Box::into_raw(Box::new(MgiFit { inner: result })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// # Safety
/// `fit` must be a live handle from this library (or NULL).
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_free(fit: *mut MgiFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Number of fitted time bins; 0 on NULL.
///
/// # Safety
/// `fit` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_len(fit: *const MgiFit) -> usize {
    unsafe { fit.as_ref() }.map_or(0, |f| f.inner.trace.len())
}

/// Number of graphs in the fit; 0 on NULL.
///
/// # Safety
/// `fit` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_graph_count(fit: *const MgiFit) -> usize {
    unsafe { fit.as_ref() }.map_or(0, |f| f.inner.trace.graph_count())
}

/// One trace row by 0-based index: filtered mean, filtered variance diagonal
/// (each `graph_count` doubles) and the per-step marginal log-likelihood.
/// Any out-pointer may be NULL to skip that field.
///
/// # Safety
/// `fit` must be a live handle; non-NULL out-pointers must have room for
/// `graph_count` doubles (`loglik`: one double).
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_trace_row(
    fit: *const MgiFit,
    row: usize,
    mean: *mut f64,
    variance: *mut f64,
    loglik: *mut f64,
) -> MgiStatus {
    require_nonnull!(fit);
    guarded(|| {
        let trace = &unsafe { &*fit }.inner.trace;
        let rec = trace
            .records()
            .get(row)
            .ok_or_else(|| Error::invalid(format!("row {row} out of range 0..{}", trace.len())))?;
        let d = trace.graph_count();
        if !mean.is_null() {
            unsafe { std::slice::from_raw_parts_mut(mean, d) }
                .copy_from_slice(rec.weight_mean.as_slice());
        }
        if !variance.is_null() {
            unsafe { std::slice::from_raw_parts_mut(variance, d) }
                .copy_from_slice(rec.weight_var.as_slice());
        }
        if !loglik.is_null() {
            unsafe { *loglik = rec.loglik };
        }
        Ok(MgiStatus::MgiOk)
    })
}

/// Clone the final learned graphs out of a fit.
///
/// # Safety
/// `fit` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_final_graphs(
    fit: *const MgiFit,
    out: *mut *mut MgiGraphs,
) -> MgiStatus {
    require_nonnull!(fit);
    require_nonnull!(out);
    guarded(|| {
        let graphs = unsafe { &*fit }.inner.final_graphs.clone();
        unsafe { *out = Box::into_raw(Box::new(MgiGraphs { inner: graphs })) };
        Ok(MgiStatus::MgiOk)
    })
}

/// Write the fit trace as CSV.
///
/// # Safety
/// `fit` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_write_trace_csv(
    fit: *const MgiFit,
    path: *const c_char,
) -> MgiStatus {
    require_nonnull!(fit);
    require_nonnull!(path);
    guarded(|| {
        let p = unsafe { path_arg(path) }?;
        mgising::io::write_trace_csv(&p, &unsafe { &*fit }.inner.trace)?;
        Ok(MgiStatus::MgiOk)
    })
}

/// Sum of the per-step marginal log-likelihoods over the evaluation window:
/// the last `epoch_len` bins, or the latter half when `epoch_len` is 0.
///
/// # Safety
/// `fit` must be a live handle, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mgi_fit_window_loglik(
    fit: *const MgiFit,
    epoch_len: usize,
    out: *mut f64,
) -> MgiStatus {
    require_nonnull!(fit);
    require_nonnull!(out);
    guarded(|| {
        let window = if epoch_len == 0 {
            EvalWindow::LatterHalf
        } else {
            EvalWindow::LastEpoch { epoch_len }
        };
        unsafe { *out = mgising::select::window_loglik(&(*fit).inner.trace, window)? };
        Ok(MgiStatus::MgiOk)
    })
}

/// Akaike information criterion: -2 loglik + 2 m.
#[no_mangle]
pub extern "C" fn mgi_aic(window_loglik: f64, free_params: usize) -> f64 {
    mgising::select::aic(window_loglik, free_params.max(1))
}
