//! C ABI over `pnr-tomo`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new`-style function and released by the matching `*_free`. Fallible
//! calls return a [`PnrStatus`]; on failure the message is available from
//! [`pnr_last_error_message`] on the same thread. Panics are caught and
//! reported as [`PnrStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pnr_tomo::{
    fidelity, q_function, reconstruct, run_experiment, CoherentProbe, DetectorParams, Error,
    GatingPolicy, OutcomeStats, PovmMatrix, ReconstructionConfig, ReconstructionResult,
    SimulationConfig, BRANCHES, OUTCOMES,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PnrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    DimensionMismatch = 3,
    MalformedData = 4,
    Config = 5,
    Io = 6,
    /// The solver stopped early; the output handle still holds its best iterate.
    NotConverged = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PnrGating {
    Smart = 0,
    Naive = 1,
    Ideal = 2,
}

/// Detector parameters.
pub struct PnrDetector(DetectorParams);

/// POVM matrix, `5 x (M + 1)`.
pub struct PnrPovm(PovmMatrix);

/// Per-probe outcome counts.
pub struct PnrStats(OutcomeStats);

/// Reconstruction output.
pub struct PnrReconstruction(ReconstructionResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> PnrStatus {
    match err {
        Error::Parameter(_) => PnrStatus::InvalidParameter,
        Error::Dimension(_) => PnrStatus::DimensionMismatch,
        Error::Schema(_) => PnrStatus::MalformedData,
        Error::Config(_) => PnrStatus::Config,
        Error::Io { .. } => PnrStatus::Io,
        Error::NotConverged { .. } => PnrStatus::NotConverged,
    }
}

fn fail(status: PnrStatus, msg: impl Into<String>) -> PnrStatus {
    set_error(msg.into());
    status
}

/// Runs `f`, converting panics and recording error messages.
fn guard(f: impl FnOnce() -> Result<(), PnrStatus>) -> PnrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PnrStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(PnrStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn lift<T>(r: pnr_tomo::Result<T>) -> Result<T, PnrStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, PnrStatus> {
    p.as_ref()
        .ok_or_else(|| fail(PnrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, PnrStatus> {
    p.as_mut()
        .ok_or_else(|| fail(PnrStatus::NullPointer, format!("{what} is null")))
}

unsafe fn array<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], PnrStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(PnrStatus::NullPointer, format!("{what} is null")));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `len - 1` bytes) and returns the full message length, or 0
/// when there is no error. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pnr_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Detector with the calibrated efficiencies and dark-count probabilities.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnr_detector_calibrated(out: *mut *mut PnrDetector) -> PnrStatus {
    guard(|| {
        *out_ptr(out, "out")? = boxed(PnrDetector(DetectorParams::calibrated()));
        Ok(())
    })
}

/// Detector with per-branch efficiencies `eta[4]`, dark-click probabilities
/// `p_dark[4]` and splitting ratios `split[4]` (null for an even split).
///
/// # Safety
/// `eta` and `p_dark` must point to 4 doubles; `split` must be null or point
/// to 4 doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnr_detector_new(
    eta: *const f64,
    p_dark: *const f64,
    split: *const f64,
    out: *mut *mut PnrDetector,
) -> PnrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let eta: [f64; BRANCHES] = array(eta, BRANCHES, "eta")?.try_into().unwrap();
        let p_dark: [f64; BRANCHES] = array(p_dark, BRANCHES, "p_dark")?.try_into().unwrap();
        let mut params = lift(DetectorParams::new(eta, p_dark))?;
        if !split.is_null() {
            let split: [f64; BRANCHES] = array(split, BRANCHES, "split")?.try_into().unwrap();
            params = lift(params.with_split(split))?;
        }
        *out = boxed(PnrDetector(params));
        Ok(())
    })
}

/// # Safety
/// `detector` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pnr_detector_free(detector: *mut PnrDetector) {
    free(detector);
}

/// Analytic POVM up to photon number `truncation`.
///
/// # Safety
/// `detector` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnr_detector_theoretical_povm(
    detector: *const PnrDetector,
    truncation: usize,
    out: *mut *mut PnrPovm,
) -> PnrStatus {
    guard(|| {
        let d = deref(detector, "detector")?;
        let out = out_ptr(out, "out")?;
        *out = boxed(PnrPovm(d.0.theoretical_povm(truncation)));
        Ok(())
    })
}

/// Largest photon number `M` of the POVM, or 0 for a null handle.
///
/// # Safety
/// `povm` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_povm_truncation(povm: *const PnrPovm) -> usize {
    povm.as_ref().map_or(0, |p| p.0.truncation())
}

/// Writes `Xi[n][m]` to `value`.
///
/// # Safety
/// `povm` must be a valid handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnr_povm_get(
    povm: *const PnrPovm,
    n: usize,
    m: usize,
    value: *mut f64,
) -> PnrStatus {
    guard(|| {
        let p = deref(povm, "povm")?;
        let value = out_ptr(value, "value")?;
        if n >= OUTCOMES || m > p.0.truncation() {
            return Err(fail(
                PnrStatus::DimensionMismatch,
                format!("index ({n}, {m}) outside 5 x {}", p.0.truncation() + 1),
            ));
        }
        *value = p.0.get(n, m);
        Ok(())
    })
}

/// # Safety
/// `povm` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pnr_povm_free(povm: *mut PnrPovm) {
    free(povm);
}

/// Simulates `count` coherent probes with the given mean photon numbers,
/// `pulses` gated pulses each.
///
/// # Safety
/// `detector` must be valid, `means` must point to `count` doubles and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnr_simulate(
    detector: *const PnrDetector,
    means: *const f64,
    count: usize,
    pulses: u64,
    dead_time: u32,
    gating: PnrGating,
    seed: u64,
    out: *mut *mut PnrStats,
) -> PnrStatus {
    guard(|| {
        let d = deref(detector, "detector")?;
        let out = out_ptr(out, "out")?;
        let probes: Vec<_> = array(means, count, "means")?
            .iter()
            .map(|&m| CoherentProbe::new(m))
            .collect();
        let sim = SimulationConfig {
            pulses_per_probe: pulses,
            dead_time,
            gating: match gating {
                PnrGating::Smart => GatingPolicy::Smart,
                PnrGating::Naive => GatingPolicy::Naive,
                PnrGating::Ideal => GatingPolicy::Ideal,
            },
            seed,
            ..SimulationConfig::default()
        };
        *out = boxed(PnrStats(lift(run_experiment(&d.0, &probes, &sim))?));
        Ok(())
    })
}

/// Builds statistics from `count` probe means and a row-major `count x 5`
/// array of outcome counts.
///
/// # Safety
/// `means` must point to `count` doubles, `counts` to `5 * count` integers,
/// and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnr_stats_new(
    means: *const f64,
    counts: *const u64,
    count: usize,
    out: *mut *mut PnrStats,
) -> PnrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let means = array(means, count, "means")?.to_vec();
        let flat = array(counts, count * OUTCOMES, "counts")?;
        let rows = flat
            .chunks_exact(OUTCOMES)
            .map(|c| c.try_into().unwrap())
            .collect();
        *out = boxed(PnrStats(lift(OutcomeStats::from_counts(means, rows))?));
        Ok(())
    })
}

/// Number of probes, or 0 for a null handle.
///
/// # Safety
/// `stats` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_stats_probes(stats: *const PnrStats) -> usize {
    stats.as_ref().map_or(0, |s| s.0.probes())
}

/// Writes the number of gated pulses of probe `j` that gave `n` clicks.
///
/// # Safety
/// `stats` must be a valid handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnr_stats_count(
    stats: *const PnrStats,
    j: usize,
    n: usize,
    value: *mut u64,
) -> PnrStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        let value = out_ptr(value, "value")?;
        if j >= s.0.probes() || n >= OUTCOMES {
            return Err(fail(
                PnrStatus::DimensionMismatch,
                format!("index ({j}, {n}) outside {} x 5", s.0.probes()),
            ));
        }
        *value = s.0.counts[j][n];
        Ok(())
    })
}

/// # Safety
/// `stats` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pnr_stats_free(stats: *mut PnrStats) {
    free(stats);
}

/// Reconstructs the POVM with default solver settings and the given
/// smoothing weight. On [`PnrStatus::NotConverged`] `out` still receives the
/// best iterate.
///
/// # Safety
/// `stats` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnr_reconstruct(
    stats: *const PnrStats,
    smoothing_weight: f64,
    out: *mut *mut PnrReconstruction,
) -> PnrStatus {
    guard(|| {
        let s = deref(stats, "stats")?;
        let out = out_ptr(out, "out")?;
        let config = ReconstructionConfig {
            smoothing_weight,
            ..ReconstructionConfig::default()
        };
        match reconstruct(&s.0, &config) {
            Ok(r) => {
                *out = boxed(PnrReconstruction(r));
                Ok(())
            }
            Err(Error::NotConverged {
                iterations,
                kkt_residual,
                best,
            }) => {
                *out = boxed(PnrReconstruction(*best));
                Err(fail(
                    PnrStatus::NotConverged,
                    format!("solver stopped after {iterations} iterations, KKT residual {kkt_residual:.3e}"),
                ))
            }
            Err(e) => Err(fail(status_of(&e), e.to_string())),
        }
    })
}

/// New POVM handle holding a copy of the reconstructed POVM.
///
/// # Safety
/// `rec` must be a valid handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pnr_reconstruction_povm(
    rec: *const PnrReconstruction,
    out: *mut *mut PnrPovm,
) -> PnrStatus {
    guard(|| {
        let r = deref(rec, "reconstruction")?;
        *out_ptr(out, "out")? = boxed(PnrPovm(r.0.povm.clone()));
        Ok(())
    })
}

/// Objective value at the solution, NaN for a null handle.
///
/// # Safety
/// `rec` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_reconstruction_objective(rec: *const PnrReconstruction) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.0.objective_value)
}

/// Projected-gradient KKT residual at the solution, NaN for a null handle.
///
/// # Safety
/// `rec` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_reconstruction_kkt_residual(rec: *const PnrReconstruction) -> f64 {
    rec.as_ref().map_or(f64::NAN, |r| r.0.kkt_residual)
}

/// # Safety
/// `rec` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pnr_reconstruction_free(rec: *mut PnrReconstruction) {
    free(rec);
}

/// Overlap `sum_i sqrt(p_i q_i)` of two distributions of length `len`.
///
/// # Safety
/// `p` and `q` must point to `len` doubles and `value` must be valid.
#[no_mangle]
pub unsafe extern "C" fn pnr_fidelity(
    p: *const f64,
    q: *const f64,
    len: usize,
    value: *mut f64,
) -> PnrStatus {
    guard(|| {
        let (p, q) = (array(p, len, "p")?, array(q, len, "q")?);
        *out_ptr(value, "value")? = lift(fidelity(p, q))?;
        Ok(())
    })
}

/// Q-function of every outcome at `|alpha|^2 = mean_photons`, written to
/// `values[5]`. `truncated_tail` (nullable) receives the Poisson mass beyond
/// the POVM truncation.
///
/// # Safety
/// `povm` must be valid, `values` must point to 5 writable doubles and
/// `truncated_tail` must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn pnr_q_function(
    povm: *const PnrPovm,
    mean_photons: f64,
    values: *mut f64,
    truncated_tail: *mut f64,
) -> PnrStatus {
    guard(|| {
        let p = deref(povm, "povm")?;
        if values.is_null() {
            return Err(fail(PnrStatus::NullPointer, "values is null"));
        }
        let q = lift(q_function(&p.0, mean_photons))?;
        slice::from_raw_parts_mut(values, OUTCOMES).copy_from_slice(&q.values);
        if let Some(tail) = truncated_tail.as_mut() {
            *tail = q.truncated_tail;
        }
        Ok(())
    })
}
