//! C ABI over the evpose core.
//!
//! Objects cross the boundary as opaque handles created by `*_new` /
//! `*_parse` functions and released by the matching `*_free`. Every fallible
//! call returns an [`EvposeStatus`]; on failure the message is available from
//! [`evpose_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use evpose::event::{
    parse_stream, read_stream_file, serialize_stream, Event, EventStream, Polarity, SensorGeometry,
};
use evpose::gating::{schedule_masks, MaskPlan, MaskPredictor};
use evpose::mask::BinaryMask;
use evpose::metrics;
use evpose::pose::{Pose3D, JOINT_COUNT};
use evpose::tore::{tore_value, ToreConfig, ToreState, ToreVolume};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvposeStatus {
    Ok = 0,
    NullArgument = 1,
    ConfigError = 2,
    DataError = 3,
    InternalError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Parsed event stream.
pub struct EvposeStream(EventStream);

/// Streaming TORE state.
pub struct EvposeTore(ToreState);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn fail(status: EvposeStatus, msg: impl Into<String>) -> EvposeStatus {
    set_error(msg);
    status
}

fn from_error(e: evpose::Error) -> EvposeStatus {
    let status = match e.exit_code() {
        evpose::EXIT_CONFIG => EvposeStatus::ConfigError,
        evpose::EXIT_INTERNAL => EvposeStatus::InternalError,
        _ => EvposeStatus::DataError,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> EvposeStatus) -> EvposeStatus {
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(EvposeStatus::Panic, "panic inside evpose"))
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(EvposeStatus::NullArgument, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message of the last failed call on this thread. Never null; owned by the library.
#[no_mangle]
pub extern "C" fn evpose_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evpose_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Normalized TORE value for an event age of `delta_us` microseconds.
#[no_mangle]
pub extern "C" fn evpose_tore_value(delta_us: f64, tau_us: f64) -> f64 {
    tore_value(delta_us, tau_us)
}

// ---------------------------------------------------------------------------
// Streams

/// Parses an EVT1 buffer.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_parse(
    bytes: *const u8,
    len: usize,
    out: *mut *mut EvposeStream,
) -> EvposeStatus {
    non_null!(bytes, out);
    guard(|| {
        let data = std::slice::from_raw_parts(bytes, len);
        match parse_stream(data) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(EvposeStream(s)));
                EvposeStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Reads an EVT1 file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_read_file(
    path: *const c_char,
    out: *mut *mut EvposeStream,
) -> EvposeStatus {
    non_null!(path, out);
    guard(|| {
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(EvposeStatus::ConfigError, "path is not UTF-8");
        };
        match read_stream_file(Path::new(p)) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(EvposeStream(s)));
                EvposeStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Builds a stream from parallel arrays; events must be in time order.
///
/// # Safety
/// Each array must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_from_arrays(
    width: u16,
    height: u16,
    t: *const u64,
    x: *const u16,
    y: *const u16,
    p: *const i8,
    n: usize,
    out: *mut *mut EvposeStream,
) -> EvposeStatus {
    non_null!(out);
    if n > 0 {
        non_null!(t, x, y, p);
    }
    guard(|| {
        let geometry = match SensorGeometry::new(width, height) {
            Ok(g) => g,
            Err(e) => return from_error(e.into()),
        };
        let mut events = Vec::with_capacity(n);
        for i in 0..n {
            let Some(pol) = Polarity::from_i8(*p.add(i)) else {
                return fail(
                    EvposeStatus::DataError,
                    format!("event {i}: polarity must be +1 or -1"),
                );
            };
            events.push(Event::new(*t.add(i), *x.add(i), *y.add(i), pol));
        }
        match EventStream::new(geometry, events) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(EvposeStream(s)));
                EvposeStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// # Safety
/// `s` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_free(s: *mut EvposeStream) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_len(s: *const EvposeStream) -> usize {
    s.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `s` must be a live handle; `width` and `height` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_geometry(
    s: *const EvposeStream,
    width: *mut u16,
    height: *mut u16,
) -> EvposeStatus {
    non_null!(s, width, height);
    let g = (*s).0.geometry();
    *width = g.width() as u16;
    *height = g.height() as u16;
    EvposeStatus::Ok
}

/// Copies event `index`.
///
/// # Safety
/// `s` must be a live handle; output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_event(
    s: *const EvposeStream,
    index: usize,
    t: *mut u64,
    x: *mut u16,
    y: *mut u16,
    p: *mut i8,
) -> EvposeStatus {
    non_null!(s, t, x, y, p);
    let Some(e) = (*s).0.events().get(index) else {
        return fail(
            EvposeStatus::ConfigError,
            format!("index {index} out of range"),
        );
    };
    *t = e.t;
    *x = e.x;
    *y = e.y;
    *p = e.polarity.as_i8();
    EvposeStatus::Ok
}

/// Serializes to EVT1. With `buf` null (or too small) only `*written` is set
/// to the required size, and `BufferTooSmall` is returned if `buf` was given.
///
/// # Safety
/// `s` must be a live handle; `buf` must hold `cap` bytes when non-null.
#[no_mangle]
pub unsafe extern "C" fn evpose_stream_serialize(
    s: *const EvposeStream,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> EvposeStatus {
    non_null!(s, written);
    guard(|| {
        let bytes = serialize_stream(&(*s).0);
        *written = bytes.len();
        if buf.is_null() {
            return EvposeStatus::Ok;
        }
        if cap < bytes.len() {
            return fail(
                EvposeStatus::BufferTooSmall,
                format!("need {} bytes, have {cap}", bytes.len()),
            );
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        EvposeStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// TORE

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_tore_new(
    width: u16,
    height: u16,
    depth: usize,
    tau_us: u64,
    out: *mut *mut EvposeTore,
) -> EvposeStatus {
    non_null!(out);
    let geometry = match SensorGeometry::new(width, height) {
        Ok(g) => g,
        Err(e) => return fail(EvposeStatus::ConfigError, e.to_string()),
    };
    match ToreConfig::new(depth, tau_us) {
        Ok(c) => {
            *out = Box::into_raw(Box::new(EvposeTore(ToreState::new(geometry, c))));
            EvposeStatus::Ok
        }
        Err(e) => from_error(e.into()),
    }
}

/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evpose_tore_free(t: *mut EvposeTore) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Channel count (`2 × depth`).
///
/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn evpose_tore_channels(t: *const EvposeTore) -> usize {
    t.as_ref().map_or(0, |t| t.0.config().channels())
}

/// # Safety
/// `t` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn evpose_tore_ingest(
    t: *mut EvposeTore,
    time_us: u64,
    x: u16,
    y: u16,
    polarity: i8,
) -> EvposeStatus {
    non_null!(t);
    let Some(p) = Polarity::from_i8(polarity) else {
        return fail(EvposeStatus::DataError, "polarity must be +1 or -1");
    };
    match (*t).0.ingest(&Event::new(time_us, x, y, p)) {
        Ok(()) => EvposeStatus::Ok,
        Err(e) => from_error(e.into()),
    }
}

/// Ingests every event of a stream.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn evpose_tore_ingest_stream(
    t: *mut EvposeTore,
    s: *const EvposeStream,
) -> EvposeStatus {
    non_null!(t, s);
    match (*t).0.ingest_all((*s).0.events()) {
        Ok(()) => EvposeStatus::Ok,
        Err(e) => from_error(e.into()),
    }
}

/// Writes the `channels × height × width` volume at `t_query_us` into `buf`.
///
/// # Safety
/// `t` must be live; `buf` must hold `cap` floats; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_tore_materialize(
    t: *const EvposeTore,
    t_query_us: u64,
    buf: *mut f32,
    cap: usize,
    written: *mut usize,
) -> EvposeStatus {
    non_null!(t, buf, written);
    guard(|| {
        let vol: ToreVolume = match (*t).0.materialize(t_query_us) {
            Ok(v) => v,
            Err(e) => return from_error(e.into()),
        };
        let data = vol.data();
        *written = data.len();
        if cap < data.len() {
            return fail(
                EvposeStatus::BufferTooSmall,
                format!("need {} floats, have {cap}", data.len()),
            );
        }
        std::ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        EvposeStatus::Ok
    })
}

// ---------------------------------------------------------------------------
// Metrics on flat `13 × 3` arrays (x, y, z per joint, millimeters)

unsafe fn pose_from(ptr: *const f64) -> Result<Pose3D, EvposeStatus> {
    let flat = std::slice::from_raw_parts(ptr, JOINT_COUNT * 3);
    Pose3D::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
        .map_err(|e| fail(EvposeStatus::DataError, e.to_string()))
}

unsafe fn metric(
    pred: *const f64,
    gt: *const f64,
    out: *mut f64,
    f: impl FnOnce(&Pose3D, &Pose3D) -> Result<f64, metrics::MetricsError>,
) -> EvposeStatus {
    non_null!(pred, gt, out);
    let (p, g) = match (pose_from(pred), pose_from(gt)) {
        (Ok(p), Ok(g)) => (p, g),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match f(&p, &g) {
        Ok(v) => {
            *out = v;
            EvposeStatus::Ok
        }
        Err(e) => from_error(e.into()),
    }
}

/// # Safety
/// `pred` and `gt` must hold 39 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn evpose_mpjpe(
    pred: *const f64,
    gt: *const f64,
    out: *mut f64,
) -> EvposeStatus {
    metric(pred, gt, out, metrics::mpjpe)
}

/// # Safety
/// As [`evpose_mpjpe`].
#[no_mangle]
pub unsafe extern "C" fn evpose_pck(
    pred: *const f64,
    gt: *const f64,
    alpha_mm: f64,
    out: *mut f64,
) -> EvposeStatus {
    metric(pred, gt, out, |p, g| metrics::pck(p, g, alpha_mm))
}

/// # Safety
/// As [`evpose_mpjpe`].
#[no_mangle]
pub unsafe extern "C" fn evpose_auc(
    pred: *const f64,
    gt: *const f64,
    out: *mut f64,
) -> EvposeStatus {
    metric(pred, gt, out, metrics::auc)
}

// ---------------------------------------------------------------------------
// Scheduling

struct FixedScores(Vec<f64>);

impl MaskPredictor for FixedScores {
    fn horizon(&self) -> usize {
        self.0.len()
    }

    fn predict(
        &self,
        vol: &ToreVolume,
        frame: usize,
    ) -> Result<MaskPlan, evpose::gating::GatingError> {
        let m = BinaryMask::filled(vol.geometry(), true);
        MaskPlan::new(vec![m; self.0.len()], self.0.clone(), frame)
    }
}

/// Runs the reuse scheduler over `frames` frames with a backend whose plans
/// always carry `scores` (one per offset). Writes the number of backend calls
/// and, when `recompute` is non-null, one 0/1 flag per frame.
///
/// # Safety
/// `scores` must hold `horizon` doubles; `recompute`, if non-null, `frames` bytes.
#[no_mangle]
pub unsafe extern "C" fn evpose_schedule_fixed(
    scores: *const f64,
    horizon: usize,
    frames: usize,
    beta: f64,
    calls: *mut usize,
    recompute: *mut u8,
) -> EvposeStatus {
    non_null!(calls);
    if horizon > 0 {
        non_null!(scores);
    }
    guard(|| {
        let s = if horizon == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(scores, horizon).to_vec()
        };
        let g = SensorGeometry::new(1, 1).expect("1x1");
        let vols = vec![ToreVolume::zeros(g, 2, 0); frames];
        match schedule_masks(&vols, &FixedScores(s), beta) {
            Ok(sched) => {
                *calls = sched.backend_calls();
                if !recompute.is_null() {
                    for (i, r) in sched.recompute_pattern().into_iter().enumerate() {
                        *recompute.add(i) = u8::from(r);
                    }
                }
                EvposeStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}
