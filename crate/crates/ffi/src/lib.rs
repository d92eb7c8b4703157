//! C interface to `dynrecon`.
//!
//! Objects are opaque handles created by `dr_*_new`/`dr_*_build` functions
//! and released with the matching `dr_*_free`. Every fallible call returns a
//! [`DrStatus`]; the message of the most recent failure on the calling thread
//! is available through [`dr_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use dynrecon::cocycle::{lyapunov_spectrum, JacobianGenerator};
use dynrecon::embedding::{DelayEmbedder, EmbeddedSeries, Embedder};
use dynrecon::forecast::ReconstructedMap;
use dynrecon::learning::{fit_feedback, training_pairs, HypothesisSpace};
use dynrecon::markov::{build_partition, stationary_distribution, transition_matrix, BoxPartition, TransitionMatrix};
use dynrecon::systems::{generate_trajectory, MeasurementMap, State, SystemKind, SystemSpec, Trajectory};
use dynrecon::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrSystemKind {
    Torus = 0,
    Lorenz63 = 1,
    L63Rot = 2,
}

/// A reference system.
pub struct DrSystem {
    spec: SystemSpec,
}

/// A sampled orbit with its full-state measurement.
pub struct DrTrajectory {
    inner: Trajectory,
}

/// A fitted one-step model on a delay embedding.
pub struct DrModel {
    map: ReconstructedMap,
    lift: EmbeddedSeries,
}

/// An Ulam transition matrix with its partition.
pub struct DrTransition {
    partition: BoxPartition,
    matrix: TransitionMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

struct Failure(DrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io(_) => DrStatus::Io,
            ref e if e.is_numerical() => DrStatus::Numerical,
            _ => DrStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DrStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(DrStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DrStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the buffer size needed for the full message.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn dr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Create a system with default parameters.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_system_new(kind: DrSystemKind, out: *mut *mut DrSystem) -> DrStatus {
    guard(|| {
        let spec = SystemSpec::for_kind(match kind {
            DrSystemKind::Torus => SystemKind::TorusRotation,
            DrSystemKind::Lorenz63 => SystemKind::Lorenz63,
            DrSystemKind::L63Rot => SystemKind::L63Rot,
        });
        put(out, DrSystem { spec })
    })
}

/// # Safety
/// `system` must be null or a handle from [`dr_system_new`], freed once.
#[no_mangle]
pub unsafe extern "C" fn dr_system_free(system: *mut DrSystem) {
    free(system)
}

/// Set the per-step rotation vector.
///
/// # Safety
/// `system` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_system_set_rotation(system: *mut DrSystem, rho1: f64, rho2: f64) -> DrStatus {
    guard(|| {
        let s = system.as_mut().ok_or_else(|| null("system"))?;
        let mut spec = s.spec.clone();
        spec.rotation = [rho1, rho2];
        spec.validate()?;
        s.spec = spec;
        Ok(())
    })
}

/// State dimension, or 0 for a null handle.
///
/// # Safety
/// `system` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_system_state_dim(system: *const DrSystem) -> usize {
    system.as_ref().map_or(0, |s| s.spec.state_dim())
}

/// Advance `state` (length `len`) by one step into `out`.
///
/// # Safety
/// `state` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_system_step(
    system: *const DrSystem,
    state: *const f64,
    out: *mut f64,
    len: usize,
) -> DrStatus {
    guard(|| {
        let s = as_ref(system, "system")?;
        if len != s.spec.state_dim() {
            return Err(invalid(format!("state length {len} != {}", s.spec.state_dim())));
        }
        let x = State::from_column_slice(slice(state, len, "state")?);
        let next = s.spec.step(&x)?;
        slice_mut(out, len, "out")?.copy_from_slice(next.as_slice());
        Ok(())
    })
}

/// Leading `count` Lyapunov exponents per time unit from `steps` QR steps
/// along the default orbit.
///
/// # Safety
/// `exponents` must point to `count` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_system_lyapunov(
    system: *const DrSystem,
    steps: usize,
    exponents: *mut f64,
    count: usize,
) -> DrStatus {
    guard(|| {
        let s = as_ref(system, "system")?;
        let out = slice_mut(exponents, count, "exponents")?;
        if count == 0 || count > s.spec.state_dim() {
            return Err(invalid(format!("count must lie in 1..={}", s.spec.state_dim())));
        }
        let orbit = generate_trajectory(&s.spec, &s.spec.default_initial_state(), steps.max(1), &MeasurementMap::full_state())?;
        let est = lyapunov_spectrum(&JacobianGenerator { spec: &s.spec }, &orbit.states, steps, count, s.spec.dt)?;
        out.copy_from_slice(&est.per_time);
        Ok(())
    })
}

/// Sample `n` states with a full-state measurement. A null `initial` uses
/// the system's default initial state (with spin-up).
///
/// # Safety
/// `initial` must be null or point to `state_dim` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dr_trajectory_generate(
    system: *const DrSystem,
    initial: *const f64,
    n: usize,
    out: *mut *mut DrTrajectory,
) -> DrStatus {
    guard(|| {
        let s = as_ref(system, "system")?;
        let x0 = if initial.is_null() {
            s.spec.default_initial_state()
        } else {
            State::from_column_slice(slice(initial, s.spec.state_dim(), "initial")?)
        };
        let inner = generate_trajectory(&s.spec, &x0, n, &MeasurementMap::full_state())?;
        put(out, DrTrajectory { inner })
    })
}

/// # Safety
/// `trajectory` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn dr_trajectory_free(trajectory: *mut DrTrajectory) {
    free(trajectory)
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_trajectory_len(trajectory: *const DrTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.inner.len())
}

/// Dimension of the measured values, or 0 for a null handle.
///
/// # Safety
/// `trajectory` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_trajectory_dim(trajectory: *const DrTrajectory) -> usize {
    trajectory.as_ref().map_or(0, |t| t.inner.measurement_dim())
}

/// Rescale the measured series to zero mean and unit RMS over
/// `[start, end)`.
///
/// # Safety
/// `trajectory` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_trajectory_normalize(trajectory: *mut DrTrajectory, start: usize, end: usize) -> DrStatus {
    guard(|| {
        let t = trajectory.as_mut().ok_or_else(|| null("trajectory"))?;
        if start >= end || end > t.inner.len() {
            return Err(invalid("normalization range must be non-empty and inside the trajectory"));
        }
        t.inner.normalize_on(start..end)?;
        Ok(())
    })
}

/// Copy the measured series row by row into `out` (`len = samples * dim`).
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_trajectory_measured(trajectory: *const DrTrajectory, out: *mut f64, len: usize) -> DrStatus {
    guard(|| {
        let t = as_ref(trajectory, "trajectory")?;
        let d = t.inner.measurement_dim();
        if len != t.inner.len() * d {
            return Err(invalid(format!("buffer length {len} != {}", t.inner.len() * d)));
        }
        let buf = slice_mut(out, len, "out")?;
        for (row, x) in buf.chunks_mut(d).zip(&t.inner.measured) {
            row.copy_from_slice(x.as_slice());
        }
        Ok(())
    })
}

/// Fitting options for [`dr_model_fit`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DrFitOptions {
    /// Number of delays (at least 1).
    pub q: usize,
    /// Gaussian centers; 0 selects the affine hypothesis space.
    pub centers: usize,
    /// Bandwidth relative to the median pairwise distance.
    pub bandwidth_scale: f64,
    /// Ridge parameter; negative selects the trace-scaled default.
    pub ridge: f64,
    /// Training uses samples before this index.
    pub train_end: usize,
}

/// Fit `ŵ` on a delay embedding of the measured series.
///
/// # Safety
/// `trajectory` and `options` must be valid; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dr_model_fit(
    trajectory: *const DrTrajectory,
    options: *const DrFitOptions,
    out: *mut *mut DrModel,
) -> DrStatus {
    guard(|| {
        let t = as_ref(trajectory, "trajectory")?;
        let o = *as_ref(options, "options")?;
        let d = t.inner.measurement_dim();
        let embedder = Embedder::Delay(DelayEmbedder::new(o.q, d)?);
        let lift = embedder.lift(&t.inner.measured)?;
        if o.train_end <= lift.start + 1 || o.train_end > t.inner.len() {
            return Err(invalid("train_end must leave training pairs inside the trajectory"));
        }
        let (inputs, targets) = training_pairs(&lift, &t.inner.measured, lift.start..o.train_end, 1)?;
        let space = if o.centers == 0 {
            HypothesisSpace::affine(embedder.dim())
        } else {
            HypothesisSpace::gaussian_from_data(&inputs, o.centers, o.bandwidth_scale, true)?
        };
        let ridge = (o.ridge >= 0.0).then_some(o.ridge);
        let model = fit_feedback(&inputs, &targets, 1, Arc::new(space), ridge)?;
        let map = ReconstructedMap::new(model, embedder)?;
        put(out, DrModel { map, lift })
    })
}

/// # Safety
/// `model` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn dr_model_free(model: *mut DrModel) {
    free(model)
}

/// Projection error `δ` of the fit, or NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_model_delta(model: *const DrModel) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.map.model.delta)
}

/// Iterate the model `n` steps from sample `start` of the trajectory it was
/// fitted on, writing `u_0, …, u_n` row by row (`len = (n + 1) * dim`).
/// Divergent rollouts are padded with NaN.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_model_forecast(
    model: *const DrModel,
    trajectory: *const DrTrajectory,
    start: usize,
    n: usize,
    out: *mut f64,
    len: usize,
) -> DrStatus {
    guard(|| {
        let m = as_ref(model, "model")?;
        let t = as_ref(trajectory, "trajectory")?;
        let d = t.inner.measurement_dim();
        if len != (n + 1) * d {
            return Err(invalid(format!("buffer length {len} != {}", (n + 1) * d)));
        }
        let y0 = m
            .lift
            .at(start)
            .ok_or_else(|| invalid(format!("start {start} has no embedded point")))?;
        let u0 = t.inner.measured.get(start).ok_or_else(|| invalid("start outside the trajectory"))?;
        let roll = m.map.iterate(u0, y0, n, 1e6)?;
        let buf = slice_mut(out, len, "out")?;
        buf.fill(f64::NAN);
        for (row, u) in buf.chunks_mut(d).zip(&roll.u) {
            row.copy_from_slice(u.as_slice());
        }
        Ok(())
    })
}

/// Ulam matrix of the trajectory states on a box partition of the listed
/// coordinates (angle coordinates of the system are treated as periodic).
///
/// # Safety
/// `coordinates` and `resolution` must point to `count` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_build(
    trajectory: *const DrTrajectory,
    coordinates: *const usize,
    resolution: *const usize,
    count: usize,
    out: *mut *mut DrTransition,
) -> DrStatus {
    guard(|| {
        let t = as_ref(trajectory, "trajectory")?;
        if count == 0 {
            return Err(invalid("count must be positive"));
        }
        if coordinates.is_null() {
            return Err(null("coordinates"));
        }
        if resolution.is_null() {
            return Err(null("resolution"));
        }
        let coords = std::slice::from_raw_parts(coordinates, count);
        let res = std::slice::from_raw_parts(resolution, count);
        let kind = t.inner.system.kind;
        let angular: Vec<bool> = coords.iter().map(|c| kind.is_angular(*c)).collect();
        let partition = build_partition(&t.inner.states, coords, res, &angular)?;
        let matrix = transition_matrix(&t.inner.states, &partition)?;
        put(out, DrTransition { partition, matrix })
    })
}

/// # Safety
/// `transition` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_free(transition: *mut DrTransition) {
    free(transition)
}

/// Number of cells, or 0 for a null handle.
///
/// # Safety
/// `transition` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_size(transition: *const DrTransition) -> usize {
    transition.as_ref().map_or(0, |t| t.matrix.size())
}

/// Entry `P_ij`.
///
/// # Safety
/// `value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_get(
    transition: *const DrTransition,
    i: usize,
    j: usize,
    value: *mut f64,
) -> DrStatus {
    guard(|| {
        let t = as_ref(transition, "transition")?;
        if i >= t.matrix.size() || j >= t.matrix.size() {
            return Err(invalid("index out of range"));
        }
        let v = value.as_mut().ok_or_else(|| null("value"))?;
        *v = t.matrix.get(i, j);
        Ok(())
    })
}

/// Cell of a state, or -1 when the state lies outside the partition.
///
/// # Safety
/// `state` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_locate(transition: *const DrTransition, state: *const f64, len: usize) -> i64 {
    let Some(t) = transition.as_ref() else { return -1 };
    if state.is_null() {
        return -1;
    }
    let x = State::from_column_slice(std::slice::from_raw_parts(state, len));
    t.partition.locate(&x).map_or(-1, |c| c as i64)
}

/// Stationary distribution into `pi` (`len` = number of cells). Returns
/// `Numerical` when the iteration does not reach `tol`.
///
/// # Safety
/// `pi` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_stationary(
    transition: *const DrTransition,
    tol: f64,
    max_iters: usize,
    pi: *mut f64,
    len: usize,
) -> DrStatus {
    guard(|| {
        let t = as_ref(transition, "transition")?;
        if len != t.matrix.size() {
            return Err(invalid(format!("buffer length {len} != {}", t.matrix.size())));
        }
        let out = slice_mut(pi, len, "pi")?;
        let s = stationary_distribution(&t.matrix, tol, max_iters)?;
        out.copy_from_slice(&s.pi);
        if !s.converged {
            return Err(Failure(
                DrStatus::Numerical,
                format!("no convergence after {} iterations (residual {:e})", s.iterations, s.residual),
            ));
        }
        Ok(())
    })
}

/// Write the matrix in coordinate-list text form to `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dr_transition_write_coo(transition: *const DrTransition, path: *const c_char) -> DrStatus {
    guard(|| {
        let t = as_ref(transition, "transition")?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| invalid("path is not UTF-8"))?;
        std::fs::write(path, t.matrix.matrix.to_coo()).map_err(Error::from)?;
        Ok(())
    })
}
