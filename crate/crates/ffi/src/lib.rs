//! C ABI for the siqrng toolkit.
//!
//! Exposes the bias-free operating-point solver, the entropy certification
//! arithmetic, and the Toeplitz extractor behind a flat function surface
//! with integer error codes and an opaque extractor handle. The header is
//! generated by cbindgen into `include/siqrng.h` at build time.
//!
//! Conventions: every fallible call returns a `SiqrngStatus`; outputs go
//! through pointers that must be non-null; packed bit buffers are MSB-first
//! within each byte, matching the core crate's stream format.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use siqrng::bitstream::BitBuffer;
use siqrng::entropy;
use siqrng::extractor::{size_output, ExtractorConfig, ToeplitzHasher};
use siqrng::optical::{solve_compensation_phase, solve_routine, Routine};
use siqrng::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiqrngStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    NoSolution = 3,
    InvalidState = 4,
    DegenerateInput = 5,
    LengthMismatch = 6,
    NoExtractableOutput = 7,
    InsufficientData = 8,
    Internal = 9,
}

fn status_of(err: &Error) -> SiqrngStatus {
    match err {
        Error::InvalidParameter(_) | Error::Config(_) => SiqrngStatus::InvalidParameter,
        Error::NoSolution(_) => SiqrngStatus::NoSolution,
        Error::InvalidState(_) => SiqrngStatus::InvalidState,
        Error::DegenerateInput(_) => SiqrngStatus::DegenerateInput,
        Error::LengthMismatch { .. } => SiqrngStatus::LengthMismatch,
        Error::NoExtractableOutput(_) => SiqrngStatus::NoExtractableOutput,
        Error::InsufficientData(_) => SiqrngStatus::InsufficientData,
        _ => SiqrngStatus::Internal,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn siqrng_version() -> *const c_char {
    static VERSION: &CStr = c"0.1.0";
    VERSION.as_ptr()
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn siqrng_strerror(status: SiqrngStatus) -> *const c_char {
    let s: &'static CStr = match status {
        SiqrngStatus::Ok => c"ok",
        SiqrngStatus::NullPointer => c"null pointer argument",
        SiqrngStatus::InvalidParameter => c"invalid parameter",
        SiqrngStatus::NoSolution => c"no solution for the given coefficients",
        SiqrngStatus::InvalidState => c"invalid state (shot-noise calibration inconsistent)",
        SiqrngStatus::DegenerateInput => c"degenerate statistical input",
        SiqrngStatus::LengthMismatch => c"bit-length mismatch",
        SiqrngStatus::NoExtractableOutput => c"leftover-hash bound admits no output",
        SiqrngStatus::InsufficientData => c"insufficient data",
        SiqrngStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// One measurement setting of a solved routine.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SiqrngSetting {
    pub delta_phi: f64,
    pub xi: f64,
    pub phi: f64,
}

/// Solved operating points of one routine: the X-measuring and P-measuring
/// settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SiqrngRoutineSolution {
    pub routine_id: u8,
    pub x: SiqrngSetting,
    pub p: SiqrngSetting,
}

/// Solve one routine's bias-free operating points from the gain aggregates
/// `(a, b, c)`.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_solve_routine(
    routine_id: u8,
    a: f64,
    b: f64,
    c: f64,
    out: *mut SiqrngRoutineSolution,
) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    let routine = match Routine::from_id(routine_id) {
        Ok(r) => r,
        Err(e) => return status_of(&e),
    };
    match solve_routine(routine, a, b, c) {
        Ok(cfg) => {
            let setting = |s: siqrng::optical::MeasurementSetting| SiqrngSetting {
                delta_phi: s.delta_phi,
                xi: s.xi,
                phi: s.phi,
            };
            unsafe {
                *out = SiqrngRoutineSolution {
                    routine_id,
                    x: setting(cfg.x),
                    p: setting(cfg.p),
                };
            }
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Compensation phase cancelling the DC bracket at splitting ratio `xi`.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_compensation_phase(
    a: f64,
    b: f64,
    c: f64,
    xi: f64,
    out: *mut f64,
) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    match solve_compensation_phase(a, b, c, xi) {
        Ok(phase) => {
            unsafe { *out = phase };
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Entropy bound of a Gaussian state with symplectic-like parameter
/// `lambda >= 1`, in bits.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_holevo_bound(lambda: f64, out: *mut f64) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    match entropy::holevo_bound(lambda) {
        Ok(s) => {
            unsafe { *out = s };
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Switching cost `ceil(log2 C(n_tot, n_c))` in bits.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_switching_cost(
    n_tot: u64,
    n_c: u64,
    out: *mut u64,
) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    match entropy::switching_cost(n_tot, n_c) {
        Ok(t) => {
            unsafe { *out = t };
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Certification result from precomputed statistics.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SiqrngCertification {
    pub lambda: f64,
    pub s_holevo: f64,
    pub r_per_sample: f64,
    pub r_dis_avg: f64,
    pub t_switch: u64,
    /// 1 when `r_dis_avg > 0`.
    pub certifiable: u8,
}

/// Certify extractable randomness from worst-cased variances (in shot-noise
/// units) and the measured code entropy.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_certify(
    v_x_bar_snu: f64,
    v_p_bar_snu: f64,
    h_axi: f64,
    n_tot: u64,
    n_c: u64,
    out: *mut SiqrngCertification,
) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    let snu = entropy::SnuCalibration::identity("ffi caller-normalized input");
    match entropy::certify_from_stats(v_x_bar_snu, v_p_bar_snu, h_axi, n_tot, n_c, snu) {
        Ok(report) => {
            unsafe {
                *out = SiqrngCertification {
                    lambda: report.covariance.lambda,
                    s_holevo: report.s_holevo,
                    r_per_sample: report.r_per_sample,
                    r_dis_avg: report.r_dis_avg,
                    t_switch: report.t_switch,
                    certifiable: report.certifiable as u8,
                };
            }
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Leftover-hash output bound for `k` input bits at `r_dis_avg` certified
/// bits per `bits_per_sample`-bit sample and collision budget
/// `2^-epsilon_log2`.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_output_bound(
    k: u64,
    r_dis_avg: f64,
    bits_per_sample: u32,
    epsilon_log2: u32,
    out: *mut u64,
) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    match size_output(k as usize, r_dis_avg, bits_per_sample, epsilon_log2) {
        Ok(bound) => {
            unsafe { *out = bound as u64 };
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Opaque Toeplitz extractor handle.
pub struct SiqrngExtractor {
    hasher: ToeplitzHasher,
    input_bytes: usize,
    output_bytes: usize,
}

/// Create an extractor from explicit seed bits (packed MSB-first; the buffer
/// must hold at least `k + j - 1` bits). On success `*out` owns the handle;
/// release it with `siqrng_extractor_free`.
/// # Safety
/// `seed` must point to `seed_len` readable bytes and `out` must be a
/// valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_extractor_new(
    k: u64,
    j: u64,
    epsilon_log2: u32,
    seed: *const u8,
    seed_len: usize,
    out: *mut *mut SiqrngExtractor,
) -> SiqrngStatus {
    if out.is_null() || seed.is_null() {
        return SiqrngStatus::NullPointer;
    }
    let (k, j) = (k as usize, j as usize);
    let need_bits = match (k.checked_add(j)).and_then(|v| v.checked_sub(1)) {
        Some(n) => n,
        None => return SiqrngStatus::InvalidParameter,
    };
    if seed_len.saturating_mul(8) < need_bits {
        return SiqrngStatus::LengthMismatch;
    }
    let seed_bytes = unsafe { std::slice::from_raw_parts(seed, seed_len) };
    let bits = BitBuffer::from_bytes(seed_bytes, need_bits);
    match ExtractorConfig::new(k, j, epsilon_log2, bits) {
        Ok(cfg) => {
            let handle = Box::new(SiqrngExtractor {
                hasher: ToeplitzHasher::new(cfg),
                input_bytes: k.div_ceil(8),
                output_bytes: j.div_ceil(8),
            });
            unsafe { *out = Box::into_raw(handle) };
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Create an extractor with its seed drawn from a 64-bit seed value.
/// # Safety
/// `out` must be a valid writable pointer.
#[no_mangle]
pub unsafe extern "C" fn siqrng_extractor_seeded(
    k: u64,
    j: u64,
    epsilon_log2: u32,
    seed: u64,
    out: *mut *mut SiqrngExtractor,
) -> SiqrngStatus {
    if out.is_null() {
        return SiqrngStatus::NullPointer;
    }
    match ExtractorConfig::with_random_seed(k as usize, j as usize, epsilon_log2, seed) {
        Ok(cfg) => {
            let handle = Box::new(SiqrngExtractor {
                hasher: ToeplitzHasher::new(cfg),
                input_bytes: (k as usize).div_ceil(8),
                output_bytes: (j as usize).div_ceil(8),
            });
            unsafe { *out = Box::into_raw(handle) };
            SiqrngStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Bytes expected per input block (`ceil(k / 8)`).
/// # Safety
/// `handle` must be null or a live handle from a constructor.
#[no_mangle]
pub unsafe extern "C" fn siqrng_extractor_input_bytes(handle: *const SiqrngExtractor) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { (*handle).input_bytes }
}

/// Bytes produced per output block (`ceil(j / 8)`).
/// # Safety
/// `handle` must be null or a live handle from a constructor.
#[no_mangle]
pub unsafe extern "C" fn siqrng_extractor_output_bytes(handle: *const SiqrngExtractor) -> usize {
    if handle.is_null() {
        return 0;
    }
    unsafe { (*handle).output_bytes }
}

/// Hash one `k`-bit block (packed MSB-first, `ceil(k/8)` bytes) into
/// `ceil(j/8)` output bytes; trailing padding bits are zero.
/// # Safety
/// `handle` must be a live handle; `input` and `output` must point to
/// `input_len` readable and `output_len` writable bytes respectively.
#[no_mangle]
pub unsafe extern "C" fn siqrng_extractor_extract(
    handle: *const SiqrngExtractor,
    input: *const u8,
    input_len: usize,
    output: *mut u8,
    output_len: usize,
) -> SiqrngStatus {
    if handle.is_null() || input.is_null() || output.is_null() {
        return SiqrngStatus::NullPointer;
    }
    let ext = unsafe { &*handle };
    if input_len != ext.input_bytes || output_len != ext.output_bytes {
        return SiqrngStatus::LengthMismatch;
    }
    let input = unsafe { std::slice::from_raw_parts(input, input_len) };
    let result = catch_unwind(AssertUnwindSafe(|| {
        let bits = BitBuffer::from_bytes(input, ext.hasher.config().k);
        ext.hasher.extract_block(&bits).map(|out| out.to_bytes())
    }));
    match result {
        Ok(Ok(bytes)) => {
            debug_assert_eq!(bytes.len(), output_len);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), output, output_len);
            }
            SiqrngStatus::Ok
        }
        Ok(Err(e)) => status_of(&e),
        Err(_) => SiqrngStatus::Internal,
    }
}

/// Release an extractor handle. Passing null is a no-op.
/// # Safety
/// `handle` must be null or a live handle not freed before; the handle is
/// invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn siqrng_extractor_free(handle: *mut SiqrngExtractor) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}
