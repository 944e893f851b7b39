//! C ABI for the polarflip decoder.
//!
//! Fallible functions return a [`PfStatus`]. After a failure the message is
//! available from [`pf_last_error`] on the same thread. Handles are opaque;
//! release each with its `_free` function. A decoder handle must not be used
//! from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use polarflip::code::CodeDescription;
use polarflip::flip::sclf_decode;
use polarflip::lstm::count_ops;
use polarflip::{
    BitVector, CodeError, CrcSpec, DecodeError, FlipContext, FlipError, LstmError, LstmWeights, PolarCode, Strategy,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Code = 3,
    Decode = 4,
    Flip = 5,
    Weights = 6,
    Io = 7,
    Panic = 8,
}

/// CRC choices for [`pf_code_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfCrc {
    None = 0,
    Crc8 = 1,
    Crc16 = 2,
    Crc24a = 3,
}

/// Flip ranking strategies for [`pf_decoder_new`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfStrategy {
    PathConfidence = 0,
    ExactRatio = 1,
    Simplified = 2,
    Lstm = 3,
    Genie = 4,
}

/// Polar code with its CRC.
pub struct PfCode {
    inner: PolarCode,
}

/// Recurrent ranker weights checked against a code and list size.
pub struct PfWeights {
    inner: LstmWeights,
    list_size: usize,
}

/// CA-SCL decoder with optional bit flipping.
pub struct PfDecoder {
    code: PolarCode,
    weights: Option<LstmWeights>,
    list_size: usize,
    t_max: usize,
    strategy: Strategy,
}

/// Per-frame summary written by [`pf_decoder_decode`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PfDecodeInfo {
    pub crc_ok: bool,
    /// Extra decoding attempts after the initial one.
    pub attempts_used: u32,
    /// 0 when the initial decode passed, t when flip t passed, -1 otherwise.
    pub success_trial: i32,
}

/// Closed-form ranker cost per step.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PfOpCount {
    pub adds: u64,
    pub mults: u64,
    pub memory: u64,
}

struct Failure {
    status: PfStatus,
    message: String,
}

impl Failure {
    fn new(status: PfStatus, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl From<CodeError> for Failure {
    fn from(e: CodeError) -> Self {
        Self::new(PfStatus::Code, e.to_string())
    }
}

impl From<DecodeError> for Failure {
    fn from(e: DecodeError) -> Self {
        Self::new(PfStatus::Decode, e.to_string())
    }
}

impl From<FlipError> for Failure {
    fn from(e: FlipError) -> Self {
        let status = match e {
            FlipError::Decode(_) => PfStatus::Decode,
            _ => PfStatus::Flip,
        };
        Self::new(status, e.to_string())
    }
}

impl From<LstmError> for Failure {
    fn from(e: LstmError) -> Self {
        let status = match e {
            LstmError::Io(_) => PfStatus::Io,
            _ => PfStatus::Weights,
        };
        Self::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

/// Run `body`, turning errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => PfStatus::Ok,
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(payload) => {
            let what = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("internal panic: {what}"));
            PfStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(PfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn borrow<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path_arg(ptr: *const c_char) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let text =
        CStr::from_ptr(ptr).to_str().map_err(|_| Failure::new(PfStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(text))
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), Failure> {
    if expected == got {
        Ok(())
    } else {
        Err(Failure::new(PfStatus::InvalidArgument, format!("{what}: expected length {expected}, got {got}")))
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn crc_from(value: i32) -> Result<Option<CrcSpec>, Failure> {
    match value {
        v if v == PfCrc::None as i32 => Ok(None),
        v if v == PfCrc::Crc8 as i32 => Ok(Some(CrcSpec::crc8())),
        v if v == PfCrc::Crc16 as i32 => Ok(Some(CrcSpec::crc16())),
        v if v == PfCrc::Crc24a as i32 => Ok(Some(CrcSpec::crc24a())),
        v => Err(Failure::new(PfStatus::InvalidArgument, format!("unknown crc {v}"))),
    }
}

fn strategy_from(value: i32) -> Result<Strategy, Failure> {
    Ok(match value {
        v if v == PfStrategy::PathConfidence as i32 => Strategy::PathConfidence,
        v if v == PfStrategy::ExactRatio as i32 => Strategy::ExactRatio,
        v if v == PfStrategy::Simplified as i32 => Strategy::Simplified,
        v if v == PfStrategy::Lstm as i32 => Strategy::Lstm,
        v if v == PfStrategy::Genie as i32 => Strategy::Genie,
        v => return Err(Failure::new(PfStatus::InvalidArgument, format!("unknown strategy {v}"))),
    })
}

/// Message of the last failed call on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pf_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version, static string.
#[no_mangle]
pub extern "C" fn pf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a code by Gaussian-approximation construction. `crc` is a [`PfCrc`] value.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_code_new(
    n_bits: usize,
    k_info: usize,
    crc: i32,
    design_snr_db: f64,
    out: *mut *mut PfCode,
) -> PfStatus {
    guard(|| {
        let code = PolarCode::construct(n_bits, k_info, crc_from(crc)?, design_snr_db)?;
        put(out, PfCode { inner: code })
    })
}

/// Load a code from a JSON description file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_code_load(path: *const c_char, out: *mut *mut PfCode) -> PfStatus {
    guard(|| {
        let path = path_arg(path)?;
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::new(PfStatus::Io, format!("{}: {e}", path.display())))?;
        let desc: CodeDescription = serde_json::from_str(&text)
            .map_err(|e| Failure::new(PfStatus::Code, format!("{}: {e}", path.display())))?;
        put(out, PfCode { inner: PolarCode::from_description(&desc)? })
    })
}

/// # Safety
/// `code` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pf_code_free(code: *mut PfCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Block length N, or 0 for a null handle.
///
/// # Safety
/// `code` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_code_n_bits(code: *const PfCode) -> usize {
    code.as_ref().map_or(0, |c| c.inner.n_bits())
}

/// Information length K, CRC included; 0 for a null handle.
///
/// # Safety
/// `code` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_code_k_info(code: *const PfCode) -> usize {
    code.as_ref().map_or(0, |c| c.inner.k_info())
}

/// Number of payload bits before the CRC is attached.
///
/// # Safety
/// `code` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_code_payload_len(code: *const PfCode) -> usize {
    code.as_ref().map_or(0, |c| c.inner.payload_len())
}

/// Copy the 1-based information set (K entries) into `out`.
///
/// # Safety
/// `out` must hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn pf_code_info_set(code: *const PfCode, out: *mut usize, len: usize) -> PfStatus {
    guard(|| {
        let code = borrow(code, "code")?;
        check_len("info set", code.inner.k_info(), len)?;
        slice_mut(out, len, "out")?.copy_from_slice(code.inner.info_set());
        Ok(())
    })
}

/// Size of the critical set; 0 for a null handle.
///
/// # Safety
/// `code` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pf_code_critical_set_len(code: *const PfCode) -> usize {
    code.as_ref().map_or(0, |c| c.inner.critical_set().len())
}

/// Attach the CRC to `payload_len` bits, writing K bits to `message`.
///
/// # Safety
/// `payload` and `message` must hold `payload_len` and `message_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pf_code_crc_attach(
    code: *const PfCode,
    payload: *const u8,
    payload_len: usize,
    message: *mut u8,
    message_len: usize,
) -> PfStatus {
    guard(|| {
        let code = borrow(code, "code")?;
        check_len("message", code.inner.k_info(), message_len)?;
        let bits = BitVector::new(slice(payload, payload_len, "payload")?.to_vec())?;
        let full = code.inner.crc_attach(&bits)?;
        slice_mut(message, message_len, "message")?.copy_from_slice(full.as_slice());
        Ok(())
    })
}

/// Encode K message bits (0/1 bytes) into N codeword bits.
///
/// # Safety
/// `message` and `codeword` must hold `message_len` and `codeword_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn pf_code_encode(
    code: *const PfCode,
    message: *const u8,
    message_len: usize,
    codeword: *mut u8,
    codeword_len: usize,
) -> PfStatus {
    guard(|| {
        let code = borrow(code, "code")?;
        check_len("codeword", code.inner.n_bits(), codeword_len)?;
        let bits = BitVector::new(slice(message, message_len, "message")?.to_vec())?;
        let cw = code.inner.encode(&bits)?;
        slice_mut(codeword, codeword_len, "codeword")?.copy_from_slice(cw.as_slice());
        Ok(())
    })
}

/// Load ranker weights and check them against `code` and `list_size`.
///
/// # Safety
/// `path` must be a NUL-terminated string, `code` a live handle, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_weights_load(
    path: *const c_char,
    code: *const PfCode,
    list_size: usize,
    out: *mut *mut PfWeights,
) -> PfStatus {
    guard(|| {
        let path = path_arg(path)?;
        let code = borrow(code, "code")?;
        let inner = LstmWeights::load(&path, &code.inner, list_size)?;
        put(out, PfWeights { inner, list_size })
    })
}

/// # Safety
/// `weights` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pf_weights_free(weights: *mut PfWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

/// Create a decoder. `strategy` is a [`PfStrategy`] value; `t_max` 0 gives
/// plain CA-SCL. `weights` may be null unless the strategy needs them; they
/// are copied.
///
/// # Safety
/// `code` must be a live handle, `weights` null or live, `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pf_decoder_new(
    code: *const PfCode,
    list_size: usize,
    t_max: usize,
    strategy: i32,
    weights: *const PfWeights,
    out: *mut *mut PfDecoder,
) -> PfStatus {
    guard(|| {
        let code = borrow(code, "code")?;
        let strategy = strategy_from(strategy)?;
        if !list_size.is_power_of_two() {
            return Err(DecodeError::ListSize(list_size).into());
        }
        let weights = match weights.as_ref() {
            Some(w) => {
                w.inner.check_compatible(&code.inner, list_size)?;
                if w.list_size != list_size {
                    return Err(Failure::new(PfStatus::Weights, "weights were loaded for another list size"));
                }
                Some(w.inner.clone())
            }
            None if strategy == Strategy::Lstm && t_max > 0 => {
                return Err(FlipError::MissingWeights(strategy).into());
            }
            None => None,
        };
        put(out, PfDecoder { code: code.inner.clone(), weights, list_size, t_max, strategy })
    })
}

/// # Safety
/// `decoder` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn pf_decoder_free(decoder: *mut PfDecoder) {
    if !decoder.is_null() {
        drop(Box::from_raw(decoder));
    }
}

/// Decode N channel LLRs (positive favours 0) into K message bits.
/// `truth` holds the K transmitted bits for the genie strategy and may be
/// null otherwise. `info` may be null.
///
/// # Safety
/// Buffers must hold their stated lengths; `truth` must hold K bytes if non-null.
#[no_mangle]
pub unsafe extern "C" fn pf_decoder_decode(
    decoder: *mut PfDecoder,
    llrs: *const f64,
    llr_len: usize,
    truth: *const u8,
    message: *mut u8,
    message_len: usize,
    info: *mut PfDecodeInfo,
) -> PfStatus {
    guard(|| {
        let dec = borrow(decoder.cast_const(), "decoder")?;
        let k = dec.code.k_info();
        check_len("llrs", dec.code.n_bits(), llr_len)?;
        check_len("message", k, message_len)?;
        let llrs = slice(llrs, llr_len, "llrs")?;
        let truth = if truth.is_null() { None } else { Some(BitVector::new(slice(truth, k, "truth")?.to_vec())?) };
        let ctx = FlipContext { weights: dec.weights.as_ref(), truth: truth.as_ref() };
        let result = sclf_decode(&dec.code, llrs, dec.list_size, dec.t_max, dec.strategy, &ctx)?;
        slice_mut(message, message_len, "message")?.copy_from_slice(result.outcome.message.as_slice());
        if let Some(info) = info.as_mut() {
            *info = PfDecodeInfo {
                crc_ok: result.outcome.crc_ok,
                attempts_used: result.attempts_used as u32,
                success_trial: result.success_trial.map_or(-1, |t| t as i32),
            };
        }
        Ok(())
    })
}

/// Closed-form per-step cost of the compact ranker (`with_domain_knowledge`)
/// or of an LLR-fed ranker.
#[no_mangle]
pub extern "C" fn pf_count_ops(
    hidden: u64,
    buckets: u64,
    list_size: u64,
    k_info: u64,
    with_domain_knowledge: bool,
) -> PfOpCount {
    let c = count_ops(hidden, buckets, list_size, k_info, with_domain_knowledge);
    PfOpCount { adds: c.adds, mults: c.mults, memory: c.memory }
}
