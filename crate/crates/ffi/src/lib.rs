//! C ABI over the gridloop simulator.
//!
//! Every function returns a [`GlStatus`]. On failure a human-readable message
//! is kept per thread and can be fetched with [`gl_last_error_message`].
//! Handles are opaque; free them with [`gl_simulation_free`]. No function
//! panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gridloop::devices::{decode_meter_frame, encode_meter_frame, RegisterId, TelemetryFrame};
use gridloop::engine::{Scenario, Simulation};
use gridloop::service::protocol::parse_command;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    /// An injected command was refused; the run is unchanged.
    Rejected = 4,
    /// The run has no periods left.
    Finished = 5,
    /// The run stopped early; see the last error message.
    Diverged = 6,
    /// No frame has been produced yet.
    NoFrame = 7,
    BufferTooSmall = 8,
    /// A meter frame failed to encode or decode.
    FrameError = 9,
    Panic = 10,
}

/// Opaque simulation handle.
pub struct GlSimulation {
    sim: Simulation,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlGenerator {
    pub terminal_voltage_rms: f64,
    pub stator_current_rms: f64,
    pub real_power: f64,
    pub reactive_power: f64,
    pub speed_rpm: f64,
    pub torque: f64,
    pub frequency: f64,
    pub phase_angle: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlLoadBus {
    pub voltage_rms: f64,
    pub current_rms: f64,
    pub real_power: f64,
    pub reactive_power: f64,
    pub frequency: f64,
    pub phase_angle: f64,
}

/// Flattened telemetry frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlFrame {
    pub timestamp: f64,
    pub generators: [GlGenerator; 2],
    pub load_bus: GlLoadBus,
    pub field_voltage: [f64; 2],
    pub field_current: [f64; 2],
    /// Bit i set when switch i is closed, in frame order: BRK1, BRK2, then
    /// the load relays in scenario order.
    pub closed_mask: u32,
    pub switch_count: u32,
}

/// One scaled reading to put in a meter frame.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlReading {
    pub register_id: u8,
    pub value: f64,
}

/// One decoded register. `value` is NaN for register ids with no known scale.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GlRegister {
    pub register_id: u8,
    pub raw: u16,
    pub value: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GlMeterHeader {
    pub device_id: u8,
    pub sequence: u8,
    pub register_count: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: GlStatus, msg: impl Into<String>) -> GlStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> GlStatus) -> GlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(GlStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, GlStatus> {
    if p.is_null() {
        return Err(fail(GlStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(GlStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn write_str(s: &str, buf: *mut c_char, len: usize) -> GlStatus {
    if buf.is_null() {
        return fail(GlStatus::NullArgument, "null output buffer");
    }
    if len < s.len() + 1 {
        return fail(GlStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf.cast::<u8>(), s.len());
    *buf.add(s.len()) = 0;
    GlStatus::Ok
}

fn flatten(f: &TelemetryFrame) -> GlFrame {
    let g = |k: usize| {
        let g = &f.generators[k];
        GlGenerator {
            terminal_voltage_rms: g.terminal_voltage_rms,
            stator_current_rms: g.stator_current_rms,
            real_power: g.real_power,
            reactive_power: g.reactive_power,
            speed_rpm: g.speed_rpm,
            torque: g.torque,
            frequency: g.frequency,
            phase_angle: g.phase_angle,
        }
    };
    let l = &f.load_bus;
    let closed_mask = f
        .switches
        .iter()
        .take(32)
        .enumerate()
        .filter(|(_, s)| s.state.is_closed())
        .fold(0u32, |m, (i, _)| m | (1 << i));
    GlFrame {
        timestamp: f.timestamp,
        generators: [g(0), g(1)],
        load_bus: GlLoadBus {
            voltage_rms: l.voltage_rms,
            current_rms: l.current_rms,
            real_power: l.real_power,
            reactive_power: l.reactive_power,
            frequency: l.frequency,
            phase_angle: l.phase_angle,
        },
        field_voltage: [f.dc_rails[0].field_voltage, f.dc_rails[1].field_voltage],
        field_current: [f.dc_rails[0].field_current, f.dc_rails[1].field_current],
        closed_mask,
        switch_count: f.switches.len() as u32,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`.
///
/// Returns the number of bytes the message needs including the NUL, or 0
/// when there is none. Nothing is written if `len` is too small.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if e.is_empty() {
            return 0;
        }
        if !buf.is_null() && len > e.len() {
            write_str(&e, buf, len);
        }
        e.len() + 1
    })
}

/// Parses and validates a TOML scenario and creates a run at t = 0.
///
/// # Safety
/// `scenario_toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_new(scenario_toml: *const c_char, out: *mut *mut GlSimulation) -> GlStatus {
    guard(|| {
        if out.is_null() {
            return fail(GlStatus::NullArgument, "null output handle");
        }
        *out = std::ptr::null_mut();
        let text = match str_arg(scenario_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let sim = match Scenario::from_toml(text).and_then(Simulation::new) {
            Ok(s) => s,
            Err(e) => return fail(GlStatus::InvalidScenario, e.to_string()),
        };
        *out = Box::into_raw(Box::new(GlSimulation { sim }));
        GlStatus::Ok
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `sim` must come from [`gl_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_free(sim: *mut GlSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances up to `periods` control periods.
///
/// `stepped` (optional) receives the number actually run. Returns
/// `Finished` when the run had nothing left and `Diverged` if it stopped
/// early.
///
/// # Safety
/// `sim` must be a live handle; `stepped` null or writable.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_step(sim: *mut GlSimulation, periods: u64, stepped: *mut u64) -> GlStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(GlStatus::NullArgument, "null handle");
        };
        let was_finished = h.sim.finished();
        let mut n = 0;
        while n < periods && h.sim.step_period().is_some() {
            n += 1;
        }
        if !stepped.is_null() {
            *stepped = n;
        }
        if let Some(d) = h.sim.diagnostic() {
            return fail(GlStatus::Diverged, d);
        }
        if was_finished && periods > 0 {
            return fail(GlStatus::Finished, "run finished");
        }
        GlStatus::Ok
    })
}

/// Time of the next control-period boundary, s. NaN for a null handle.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_time(sim: *const GlSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |h| h.sim.time())
}

/// True once every period has run or the run stopped early.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_finished(sim: *const GlSimulation) -> bool {
    sim.as_ref().is_none_or(|h| h.sim.finished())
}

/// Copies the most recent telemetry frame.
///
/// # Safety
/// `sim` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_latest_frame(sim: *const GlSimulation, out: *mut GlFrame) -> GlStatus {
    guard(|| {
        let (Some(h), false) = (sim.as_ref(), out.is_null()) else {
            return fail(GlStatus::NullArgument, "null argument");
        };
        match h.sim.frames().last() {
            Some(f) => {
                *out = flatten(f);
                GlStatus::Ok
            }
            None => fail(GlStatus::NoFrame, "no frame yet"),
        }
    })
}

/// Writes the most recent decision-log line.
///
/// # Safety
/// `sim` must be a live handle; `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_last_decision(sim: *const GlSimulation, buf: *mut c_char, len: usize) -> GlStatus {
    guard(|| {
        let Some(h) = sim.as_ref() else {
            return fail(GlStatus::NullArgument, "null handle");
        };
        match h.sim.decisions().last() {
            Some(d) => write_str(&d.log_line(), buf, len),
            None => fail(GlStatus::NoFrame, "no decision yet"),
        }
    })
}

/// Queues a JSON command for the next period boundary. Accepts the same
/// command objects as the TCP service, for example
/// `{"kind":"relay_set","device":"R1","state":"open"}`.
///
/// # Safety
/// `sim` must be a live handle; `command_json` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_inject_json(sim: *mut GlSimulation, command_json: *const c_char) -> GlStatus {
    guard(|| {
        let Some(h) = sim.as_mut() else {
            return fail(GlStatus::NullArgument, "null handle");
        };
        let text = match str_arg(command_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let value: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => return fail(GlStatus::Rejected, format!("malformed JSON: {e}")),
        };
        let kind = match parse_command(&value) {
            Ok(k) => k,
            Err(e) => return fail(GlStatus::Rejected, e),
        };
        match h.sim.inject(kind) {
            Ok(()) => GlStatus::Ok,
            Err(e) => fail(GlStatus::Rejected, e.to_string()),
        }
    })
}

/// Writes the 64-character hex digest of the run so far; `len` must be at
/// least 65.
///
/// # Safety
/// `sim` must be a live handle; `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gl_simulation_digest(sim: *const GlSimulation, buf: *mut c_char, len: usize) -> GlStatus {
    guard(|| match sim.as_ref() {
        Some(h) => write_str(&h.sim.digest(), buf, len),
        None => fail(GlStatus::NullArgument, "null handle"),
    })
}

/// Encodes readings into one meter frame.
///
/// # Safety
/// `readings` must hold `count` items; `out` must be valid for `cap` bytes;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gl_meter_encode(
    device_id: u8,
    sequence: u8,
    readings: *const GlReading,
    count: usize,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> GlStatus {
    guard(|| {
        if (readings.is_null() && count > 0) || out.is_null() || written.is_null() {
            return fail(GlStatus::NullArgument, "null argument");
        }
        let input = if count == 0 { &[][..] } else { std::slice::from_raw_parts(readings, count) };
        let mut pairs = Vec::with_capacity(count);
        for r in input {
            match RegisterId::from_u8(r.register_id) {
                Some(id) => pairs.push((id, r.value)),
                None => return fail(GlStatus::FrameError, format!("unknown register 0x{:02X}", r.register_id)),
            }
        }
        let bytes = match encode_meter_frame(&pairs, device_id, sequence) {
            Ok(b) => b,
            Err(e) => return fail(GlStatus::FrameError, e.to_string()),
        };
        *written = bytes.len();
        if bytes.len() > cap {
            return fail(GlStatus::BufferTooSmall, format!("need {} bytes", bytes.len()));
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        GlStatus::Ok
    })
}

/// Decodes one meter frame from the front of `bytes`.
///
/// `consumed` receives the frame length. Registers beyond `cap` are counted
/// in the header but not written, and `BufferTooSmall` is returned.
///
/// # Safety
/// `bytes` must be valid for `len` bytes; `registers` for `cap` items;
/// `header` and `consumed` writable.
#[no_mangle]
pub unsafe extern "C" fn gl_meter_decode(
    bytes: *const u8,
    len: usize,
    header: *mut GlMeterHeader,
    registers: *mut GlRegister,
    cap: usize,
    consumed: *mut usize,
) -> GlStatus {
    guard(|| {
        if (bytes.is_null() && len > 0) || header.is_null() || consumed.is_null() || (registers.is_null() && cap > 0) {
            return fail(GlStatus::NullArgument, "null argument");
        }
        let input = if len == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, len) };
        let (frame, n) = match decode_meter_frame(input) {
            Ok(f) => f,
            Err(e) => return fail(GlStatus::FrameError, e.to_string()),
        };
        *consumed = n;
        *header = GlMeterHeader {
            device_id: frame.device_id,
            sequence: frame.sequence,
            register_count: frame.payload.len() as u8,
        };
        for (i, r) in frame.payload.iter().take(cap).enumerate() {
            *registers.add(i) = GlRegister {
                register_id: r.id,
                raw: r.value,
                value: RegisterId::from_u8(r.id).map_or(f64::NAN, |id| id.decode(r.value)),
            };
        }
        if frame.payload.len() > cap {
            return fail(GlStatus::BufferTooSmall, format!("frame has {} registers", frame.payload.len()));
        }
        GlStatus::Ok
    })
}
