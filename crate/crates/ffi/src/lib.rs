//! C ABI for `cmc-core`.
//!
//! Every fallible function returns a [`CmcStatus`]; on failure the message
//! is kept per thread and can be copied out with
//! [`cmc_last_error_message`]. Results are written through out-pointers.
//! Array outputs take a capacity: when it is too small the required length
//! is still written to `out_len` and `CMC_STATUS_BUFFER_TOO_SMALL` is
//! returned, so callers may query with a null buffer and zero capacity.
//!
//! Recordings, tree models and controllers are opaque handles created by
//! `*_new`/`*_load` functions and released with the matching `*_free`.
//! No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cmc_core::cmc::{coherence, coherence_threshold_with, significant_area_with, ThresholdForm};
use cmc_core::signal_io::{load_recording, recording_paths, Recording};
use cmc_core::spectral::{band_power, welch_psd, BandSpec, WelchConfig};
use cmc_core::state_engine::{
    step_controller, tree_classify, AssistanceMode, ControllerState, FeatureVector, State, StateLabel, TreeModel,
};
use cmc_core::stats::{mann_whitney_u_with, Alternative, Method};
use cmc_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Schema = 4,
    Data = 5,
    NotFound = 6,
    Ambiguous = 7,
    Singular = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmcState {
    Intuitive = 0,
    Intellectual = 1,
    Unknown = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmcMode {
    Minimal = 0,
    DecisionSupport = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmcAlternative {
    TwoSided = 0,
    Greater = 1,
    Less = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmcThresholdForm {
    Printed = 0,
    Conventional = 1,
}

/// Mann-Whitney result; `exact` is false for the normal approximation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmcMannWhitney {
    pub u_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub exact: bool,
}

/// Band feature of one EEG/EMG pair.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmcBandCoherence {
    pub threshold: f64,
    pub significant_area: f64,
    pub n_significant_bins: usize,
    pub mean_coherence: f64,
    pub n_segments: usize,
}

/// Opaque recording handle.
pub struct CmcRecording {
    inner: Recording,
}

/// Opaque decision tree handle.
pub struct CmcTreeModel {
    inner: TreeModel,
    channels: Vec<String>,
}

/// Opaque assistance controller handle.
pub struct CmcController {
    inner: ControllerState,
}

struct Failure {
    status: CmcStatus,
    message: String,
}

impl Failure {
    fn new(status: CmcStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Failure::new(CmcStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Argument(_) => CmcStatus::InvalidArgument,
            Error::Format { .. } => CmcStatus::Format,
            Error::Schema(_) => CmcStatus::Schema,
            Error::Data(_) => CmcStatus::Data,
            Error::NotFound(_) => CmcStatus::NotFound,
            Error::Ambiguous(_) => CmcStatus::Ambiguous,
            Error::Singular(_) => CmcStatus::Singular,
            Error::Io { .. } => CmcStatus::Io,
        };
        Failure::new(status, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Outcome) -> CmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            CmcStatus::Ok
        }
        Ok(Err(failure)) => {
            set_last_error(failure.message);
            failure.status
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {text}"));
            CmcStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| Failure::new(CmcStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn out<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    ptr.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| Failure::null(what))
}

/// Copy `src` into `dst[..capacity]`, reporting the needed length.
unsafe fn fill(src: &[f64], dst: *mut f64, capacity: usize, out_len: *mut usize) -> Outcome {
    *out(out_len, "out_len")? = src.len();
    if capacity < src.len() {
        return Err(Failure::new(
            CmcStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if dst.is_null() {
            return Err(Failure::null("output buffer"));
        }
        std::ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

fn threshold_form(form: CmcThresholdForm) -> ThresholdForm {
    match form {
        CmcThresholdForm::Printed => ThresholdForm::Printed,
        CmcThresholdForm::Conventional => ThresholdForm::Conventional,
    }
}

fn welch(segment_len: usize, overlap: f64, sample_rate_hz: f64, n: usize) -> Result<WelchConfig, Failure> {
    let cfg = if segment_len == 0 {
        WelchConfig::eighths(n, sample_rate_hz)?
    } else {
        WelchConfig::new(segment_len, overlap, sample_rate_hz)?
    };
    Ok(cfg)
}

fn state_to_c(s: State) -> CmcState {
    match s {
        State::Intuitive => CmcState::Intuitive,
        State::Intellectual => CmcState::Intellectual,
        State::Unknown => CmcState::Unknown,
    }
}

fn mode_to_c(m: AssistanceMode) -> CmcMode {
    match m {
        AssistanceMode::Minimal => CmcMode::Minimal,
        AssistanceMode::DecisionSupport => CmcMode::DecisionSupport,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (always
/// NUL-terminated when `capacity > 0`). Returns the full message length
/// excluding the NUL, 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `capacity` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cmc_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buf.is_null() && capacity > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Coherence significance threshold for `n_segments` segments.
///
/// # Safety
/// `out_threshold` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmc_coherence_threshold(
    alpha: f64,
    n_segments: usize,
    form: CmcThresholdForm,
    out_threshold: *mut f64,
) -> CmcStatus {
    guard(|| {
        let out = out(out_threshold, "out_threshold")?;
        *out = coherence_threshold_with(alpha, n_segments, threshold_form(form))?;
        Ok(())
    })
}

/// Welch PSD of `x`. `segment_len` 0 selects eighths of the record with
/// 50% overlap. Writes `segment_len/2 + 1` frequencies and densities.
///
/// # Safety
/// `x` must point to `n` doubles; the output buffers to `capacity` doubles
/// (or be null with capacity 0); `out_len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_welch_psd(
    x: *const f64,
    n: usize,
    sample_rate_hz: f64,
    segment_len: usize,
    overlap: f64,
    out_freqs: *mut f64,
    out_psd: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> CmcStatus {
    guard(|| {
        let x = slice(x, n, "x")?;
        let cfg = welch(segment_len, overlap, sample_rate_hz, n)?;
        let psd = welch_psd(x, &cfg)?;
        fill(&psd.freqs_hz, out_freqs, capacity, out_len)?;
        fill(&psd.values, out_psd, capacity, out_len)
    })
}

/// Integrated Welch power of `x` over `[lo_hz, hi_hz]`.
///
/// # Safety
/// `x` must point to `n` doubles and `out_power` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_band_power(
    x: *const f64,
    n: usize,
    sample_rate_hz: f64,
    segment_len: usize,
    overlap: f64,
    lo_hz: f64,
    hi_hz: f64,
    out_power: *mut f64,
) -> CmcStatus {
    guard(|| {
        let x = slice(x, n, "x")?;
        let out = out(out_power, "out_power")?;
        let cfg = welch(segment_len, overlap, sample_rate_hz, n)?;
        let psd = welch_psd(x, &cfg)?;
        *out = band_power(&psd, &BandSpec::new("band", lo_hz, hi_hz)?)?;
        Ok(())
    })
}

/// Magnitude-squared coherence spectrum of `x` and `y`.
///
/// # Safety
/// `x` and `y` must point to `n` doubles each; the output buffers to
/// `capacity` doubles (or be null with capacity 0); `out_len` must be valid;
/// `out_n_segments` may be null.
#[no_mangle]
pub unsafe extern "C" fn cmc_coherence(
    x: *const f64,
    y: *const f64,
    n: usize,
    sample_rate_hz: f64,
    segment_len: usize,
    overlap: f64,
    out_freqs: *mut f64,
    out_coherence: *mut f64,
    capacity: usize,
    out_len: *mut usize,
    out_n_segments: *mut usize,
) -> CmcStatus {
    guard(|| {
        let x = slice(x, n, "x")?;
        let y = slice(y, n, "y")?;
        let cfg = welch(segment_len, overlap, sample_rate_hz, n)?;
        let coh = coherence(x, y, &cfg)?;
        if let Some(k) = out_n_segments.as_mut() {
            *k = coh.n_segments;
        }
        fill(&coh.freqs_hz, out_freqs, capacity, out_len)?;
        fill(&coh.coherence, out_coherence, capacity, out_len)
    })
}

fn band_coherence(
    x: &[f64],
    y: &[f64],
    cfg: &WelchConfig,
    band: &BandSpec,
    alpha: f64,
    form: ThresholdForm,
) -> Result<CmcBandCoherence, Failure> {
    let coh = coherence(x, y, cfg)?;
    let feat = significant_area_with(&coh, band, alpha, form)?;
    Ok(CmcBandCoherence {
        threshold: feat.threshold,
        significant_area: feat.significant_area,
        n_significant_bins: feat.n_significant_bins,
        mean_coherence: coh.band_mean(band)?,
        n_segments: coh.n_segments,
    })
}

/// Significant coherence area of `x` and `y` over `[lo_hz, hi_hz]`.
///
/// # Safety
/// `x` and `y` must point to `n` doubles each and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_band_coherence(
    x: *const f64,
    y: *const f64,
    n: usize,
    sample_rate_hz: f64,
    segment_len: usize,
    overlap: f64,
    lo_hz: f64,
    hi_hz: f64,
    alpha: f64,
    form: CmcThresholdForm,
    out: *mut CmcBandCoherence,
) -> CmcStatus {
    guard(|| {
        let x = slice(x, n, "x")?;
        let y = slice(y, n, "y")?;
        let dst = self::out(out, "out")?;
        let cfg = welch(segment_len, overlap, sample_rate_hz, n)?;
        *dst = band_coherence(
            x,
            y,
            &cfg,
            &BandSpec::new("band", lo_hz, hi_hz)?,
            alpha,
            threshold_form(form),
        )?;
        Ok(())
    })
}

/// Mann-Whitney U test of `a` against `b`.
///
/// # Safety
/// `a` and `b` must point to `n1` and `n2` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_mann_whitney(
    a: *const f64,
    n1: usize,
    b: *const f64,
    n2: usize,
    alternative: CmcAlternative,
    out: *mut CmcMannWhitney,
) -> CmcStatus {
    guard(|| {
        let a = slice(a, n1, "a")?;
        let b = slice(b, n2, "b")?;
        let dst = self::out(out, "out")?;
        let alt = match alternative {
            CmcAlternative::TwoSided => Alternative::TwoSided,
            CmcAlternative::Greater => Alternative::Greater,
            CmcAlternative::Less => Alternative::Less,
        };
        let r = mann_whitney_u_with(a, b, alt)?;
        *dst = CmcMannWhitney {
            u_statistic: r.u_statistic,
            p_value: r.p_value,
            n1: r.n1,
            n2: r.n2,
            exact: r.method == Method::Exact,
        };
        Ok(())
    })
}

/// Load a recording from its metadata JSON and data CSV. `data_path` may be
/// null, in which case `path` is a stem or either file of the pair.
///
/// # Safety
/// `path` must be a NUL-terminated string, `data_path` null or one, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cmc_recording_load(
    path: *const c_char,
    data_path: *const c_char,
    out: *mut *mut CmcRecording,
) -> CmcStatus {
    guard(|| {
        let dst = self::out(out, "out")?;
        *dst = std::ptr::null_mut();
        let path = Path::new(text(path, "path")?);
        let rec = if data_path.is_null() {
            let (meta, data) = recording_paths(path);
            load_recording(&meta, &data)?
        } else {
            load_recording(path, Path::new(text(data_path, "data_path")?))?
        };
        *dst = Box::into_raw(Box::new(CmcRecording { inner: rec }));
        Ok(())
    })
}

/// # Safety
/// `rec` must be null or a handle from [`cmc_recording_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cmc_recording_free(rec: *mut CmcRecording) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// Sample rate, sample count and channel count of a recording.
///
/// # Safety
/// `rec` must be a live handle; each out-pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn cmc_recording_info(
    rec: *const CmcRecording,
    out_sample_rate_hz: *mut f64,
    out_n_samples: *mut usize,
    out_n_channels: *mut usize,
) -> CmcStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        if let Some(v) = out_sample_rate_hz.as_mut() {
            *v = rec.sample_rate_hz();
        }
        if let Some(v) = out_n_samples.as_mut() {
            *v = rec.n_samples();
        }
        if let Some(v) = out_n_channels.as_mut() {
            *v = rec.n_channels();
        }
        Ok(())
    })
}

/// Samples of the named channel.
///
/// # Safety
/// `rec` must be a live handle, `name` a NUL-terminated string, `buf` null
/// or `capacity` writable doubles, `out_len` valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_recording_channel(
    rec: *const CmcRecording,
    name: *const c_char,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> CmcStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        let column = rec.channel_by_name(text(name, "name")?)?;
        fill(column, buf, capacity, out_len)
    })
}

/// Band coherence feature between two channels of a recording, Welch
/// segments of one eighth of the record.
///
/// # Safety
/// `rec` must be a live handle, `eeg` and `emg` NUL-terminated strings and
/// `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_recording_band_coherence(
    rec: *const CmcRecording,
    eeg: *const c_char,
    emg: *const c_char,
    lo_hz: f64,
    hi_hz: f64,
    alpha: f64,
    out: *mut CmcBandCoherence,
) -> CmcStatus {
    guard(|| {
        let rec = &handle(rec, "rec")?.inner;
        let dst = self::out(out, "out")?;
        let x = rec.channel_by_name(text(eeg, "eeg")?)?;
        let y = rec.channel_by_name(text(emg, "emg")?)?;
        let cfg = WelchConfig::eighths(rec.n_samples(), rec.sample_rate_hz())?;
        *dst = band_coherence(
            x,
            y,
            &cfg,
            &BandSpec::new("band", lo_hz, hi_hz)?,
            alpha,
            ThresholdForm::Printed,
        )?;
        Ok(())
    })
}

/// Parse a tree model from its JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_tree_from_json(json: *const c_char, out: *mut *mut CmcTreeModel) -> CmcStatus {
    guard(|| {
        let dst = self::out(out, "out")?;
        *dst = std::ptr::null_mut();
        let model = TreeModel::from_json(text(json, "json")?)?;
        let channels = model.channels()?;
        *dst = Box::into_raw(Box::new(CmcTreeModel { inner: model, channels }));
        Ok(())
    })
}

/// Read a tree model JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_tree_load(path: *const c_char, out: *mut *mut CmcTreeModel) -> CmcStatus {
    guard(|| {
        let dst = self::out(out, "out")?;
        *dst = std::ptr::null_mut();
        let path = text(path, "path")?;
        let json = std::fs::read_to_string(path).map_err(|e| {
            Failure::from(Error::Io {
                path: path.into(),
                source: e,
            })
        })?;
        let model = TreeModel::from_json(&json)?;
        let channels = model.channels()?;
        *dst = Box::into_raw(Box::new(CmcTreeModel { inner: model, channels }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a live tree handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_tree_free(model: *mut CmcTreeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of features the tree expects.
///
/// # Safety
/// `model` must be a live handle and `out_n` valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_tree_n_features(model: *const CmcTreeModel, out_n: *mut usize) -> CmcStatus {
    guard(|| {
        *out(out_n, "out_n")? = handle(model, "model")?.inner.feature_names.len();
        Ok(())
    })
}

/// Classify one feature vector laid out in the tree's schema order.
///
/// # Safety
/// `model` must be a live handle, `values` point to `n` doubles and the
/// out-pointers be valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_tree_classify(
    model: *const CmcTreeModel,
    values: *const f64,
    n: usize,
    out_state: *mut CmcState,
    out_confidence: *mut f64,
) -> CmcStatus {
    guard(|| {
        let model = handle(model, "model")?;
        let values = slice(values, n, "values")?;
        let state = out(out_state, "out_state")?;
        let confidence = out(out_confidence, "out_confidence")?;
        let fv = FeatureVector::new(model.channels.clone(), values.to_vec(), 0.0)?;
        let label = tree_classify(&model.inner, &fv)?;
        *state = state_to_c(label.state);
        *confidence = label.confidence;
        Ok(())
    })
}

/// New controller in `initial_mode` with a switch after `hysteresis_k`
/// contradicting labels.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_controller_new(
    hysteresis_k: usize,
    initial_mode: CmcMode,
    out: *mut *mut CmcController,
) -> CmcStatus {
    guard(|| {
        let dst = self::out(out, "out")?;
        *dst = std::ptr::null_mut();
        let mode = match initial_mode {
            CmcMode::Minimal => AssistanceMode::Minimal,
            CmcMode::DecisionSupport => AssistanceMode::DecisionSupport,
        };
        let inner = ControllerState::new(mode, hysteresis_k)?;
        *dst = Box::into_raw(Box::new(CmcController { inner }));
        Ok(())
    })
}

/// # Safety
/// `ctl` must be null or a live controller handle.
#[no_mangle]
pub unsafe extern "C" fn cmc_controller_free(ctl: *mut CmcController) {
    if !ctl.is_null() {
        drop(Box::from_raw(ctl));
    }
}

/// Feed one label; writes the mode after the step.
///
/// # Safety
/// `ctl` must be a live handle and `out_mode` valid.
#[no_mangle]
pub unsafe extern "C" fn cmc_controller_step(
    ctl: *mut CmcController,
    state: CmcState,
    confidence: f64,
    out_mode: *mut CmcMode,
) -> CmcStatus {
    guard(|| {
        let ctl = ctl.as_mut().ok_or_else(|| Failure::null("ctl"))?;
        let mode_out = out(out_mode, "out_mode")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Failure::new(
                CmcStatus::InvalidArgument,
                "confidence must lie in [0, 1]",
            ));
        }
        let state = match state {
            CmcState::Intuitive => State::Intuitive,
            CmcState::Intellectual => State::Intellectual,
            CmcState::Unknown => State::Unknown,
        };
        let (next, mode) = step_controller(ctl.inner, &StateLabel { state, confidence });
        ctl.inner = next;
        *mode_out = mode_to_c(mode);
        Ok(())
    })
}

/// Current mode and contradiction streak.
///
/// # Safety
/// `ctl` must be a live handle; out-pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn cmc_controller_get(
    ctl: *const CmcController,
    out_mode: *mut CmcMode,
    out_streak: *mut usize,
) -> CmcStatus {
    guard(|| {
        let ctl = handle(ctl, "ctl")?;
        if let Some(m) = out_mode.as_mut() {
            *m = mode_to_c(ctl.inner.mode);
        }
        if let Some(s) = out_streak.as_mut() {
            *s = ctl.inner.streak;
        }
        Ok(())
    })
}
