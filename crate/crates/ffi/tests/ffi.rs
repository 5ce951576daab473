use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use gridloop::engine::{run_scenario, Scenario};
use gridloop_ffi::*;

const SCENARIO: &str = "schema_version = 1\nname = \"ffi\"\nseed = 9\nduration = 0.2\n";

fn last_error() -> String {
    let mut buf = [0 as c_char; 512];
    let n = unsafe { gl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned()
}

struct Handle(*mut GlSimulation);

impl Handle {
    fn new(toml: &str) -> Result<Self, (GlStatus, String)> {
        let text = CString::new(toml).unwrap();
        let mut h = ptr::null_mut();
        match unsafe { gl_simulation_new(text.as_ptr(), &mut h) } {
            GlStatus::Ok => Ok(Self(h)),
            s => {
                assert!(h.is_null());
                Err((s, last_error()))
            }
        }
    }

    fn step(&self, n: u64) -> (GlStatus, u64) {
        let mut done = 0;
        let s = unsafe { gl_simulation_step(self.0, n, &mut done) };
        (s, done)
    }

    fn inject(&self, json: &str) -> GlStatus {
        let c = CString::new(json).unwrap();
        unsafe { gl_simulation_inject_json(self.0, c.as_ptr()) }
    }

    fn digest(&self) -> String {
        let mut buf = [0 as c_char; 65];
        assert_eq!(unsafe { gl_simulation_digest(self.0, buf.as_mut_ptr(), buf.len()) }, GlStatus::Ok);
        unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned()
    }

    fn frame(&self) -> GlFrame {
        let mut f = GlFrame::default();
        assert_eq!(unsafe { gl_simulation_latest_frame(self.0, &mut f) }, GlStatus::Ok);
        f
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        unsafe { gl_simulation_free(self.0) };
    }
}

#[test]
fn handle_run_matches_library_run() {
    let h = Handle::new(SCENARIO).unwrap();
    let mut f = GlFrame::default();
    assert_eq!(unsafe { gl_simulation_latest_frame(h.0, &mut f) }, GlStatus::NoFrame);
    assert_eq!(h.step(50), (GlStatus::Ok, 50));
    assert!((unsafe { gl_simulation_time(h.0) } - 0.05).abs() < 1e-12);
    assert_eq!(h.step(1000), (GlStatus::Ok, 150));
    assert!(unsafe { gl_simulation_finished(h.0) });
    assert_eq!(h.step(1), (GlStatus::Finished, 0));

    let expected = run_scenario(&Scenario::from_toml(SCENARIO).unwrap()).unwrap();
    assert_eq!(h.digest(), expected.digest);
    let last = expected.frames.last().unwrap();
    let f = h.frame();
    assert_eq!(f.timestamp, last.timestamp);
    assert_eq!(f.load_bus.voltage_rms, last.load_bus.voltage_rms);
    assert_eq!(f.generators[1].speed_rpm, last.generators[1].speed_rpm);
    assert_eq!(f.field_current[0], last.dc_rails[0].field_current);
    assert_eq!((f.switch_count, f.closed_mask), (5, 0b11111));

    let mut line = [0 as c_char; 1024];
    assert_eq!(
        unsafe { gl_simulation_last_decision(h.0, line.as_mut_ptr(), line.len()) },
        GlStatus::Ok
    );
    let line = unsafe { CStr::from_ptr(line.as_ptr()) }.to_str().unwrap();
    assert_eq!(line, expected.decisions.last().unwrap().log_line());
}

#[test]
fn injected_commands_apply_or_reject() {
    let h = Handle::new(SCENARIO).unwrap();
    h.step(10);
    assert_eq!(h.inject(r#"{"kind":"relay_force","device":"R2","state":"open"}"#), GlStatus::Ok);
    h.step(2);
    assert_eq!(h.frame().closed_mask & (1 << 3), 0);

    let before = h.digest();
    assert_eq!(h.inject(r#"{"kind":"relay_set","device":"R9","state":"open"}"#), GlStatus::Rejected);
    assert!(last_error().contains("R9"));
    assert_eq!(h.inject("{not json"), GlStatus::Rejected);
    assert!(last_error().contains("malformed"));
    assert_eq!(h.inject(r#"{"kind":"warp"}"#), GlStatus::Rejected);
    assert_eq!(h.digest(), before);
}

#[test]
fn bad_inputs_return_error_codes() {
    let (s, msg) = Handle::new("schema_version = 1\nname = \"x\"\nduration = -1.0\n").err().unwrap();
    assert_eq!(s, GlStatus::InvalidScenario);
    assert!(msg.contains("duration"));
    assert_eq!(Handle::new("not toml at all [").err().unwrap().0, GlStatus::InvalidScenario);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { gl_simulation_new(ptr::null(), &mut out) }, GlStatus::NullArgument);
    let bad = [0xFFu8, 0xFE, 0];
    assert_eq!(
        unsafe { gl_simulation_new(bad.as_ptr().cast(), &mut out) },
        GlStatus::InvalidUtf8
    );
    assert_eq!(unsafe { gl_simulation_step(ptr::null_mut(), 1, ptr::null_mut()) }, GlStatus::NullArgument);
    assert!(unsafe { gl_simulation_time(ptr::null()) }.is_nan());
    unsafe { gl_simulation_free(ptr::null_mut()) };

    let h = Handle::new(SCENARIO).unwrap();
    let mut small = [0 as c_char; 10];
    assert_eq!(
        unsafe { gl_simulation_digest(h.0, small.as_mut_ptr(), small.len()) },
        GlStatus::BufferTooSmall
    );
}

#[test]
fn divergence_is_reported() {
    let mut s = Scenario::nominal("diverge", 0.5);
    s.plant_step = 1e-3;
    for m in &mut s.plant.machines {
        m.generator.inertia = 1e-9;
    }
    let h = Handle::new(&s.to_toml().unwrap()).unwrap();
    let (status, done) = h.step(500);
    assert_eq!(status, GlStatus::Diverged);
    assert!(done < 500);
    assert!(last_error().contains("diverged"));
    assert!(unsafe { gl_simulation_finished(h.0) });
}

#[test]
fn meter_frames_round_trip_and_reject_corruption() {
    let readings = [
        GlReading { register_id: 0x01, value: 231.4 },
        GlReading { register_id: 0x07, value: -3.25 },
    ];
    let mut buf = [0u8; 64];
    let mut written = 0;
    let s = unsafe { gl_meter_encode(3, 200, readings.as_ptr(), 2, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, GlStatus::Ok);
    assert_eq!(written, 4 + 2 * 4 + 2);
    assert_eq!(buf[0], 0xA5);

    let mut h = GlMeterHeader::default();
    let mut regs = [GlRegister::default(); 2];
    let mut used = 0;
    let s = unsafe { gl_meter_decode(buf.as_ptr(), written, &mut h, regs.as_mut_ptr(), 2, &mut used) };
    assert_eq!(s, GlStatus::Ok);
    assert_eq!((h.device_id, h.sequence, h.register_count, used), (3, 200, 2, written));
    assert!((regs[0].value - 231.4).abs() < 1e-9);
    assert!((regs[1].value + 3.25).abs() < 1e-9);

    let mut one = [GlRegister::default(); 1];
    let s = unsafe { gl_meter_decode(buf.as_ptr(), written, &mut h, one.as_mut_ptr(), 1, &mut used) };
    assert_eq!(s, GlStatus::BufferTooSmall);
    assert_eq!(one[0].register_id, 0x01);

    buf[6] ^= 0x01;
    let s = unsafe { gl_meter_decode(buf.as_ptr(), written, &mut h, regs.as_mut_ptr(), 2, &mut used) };
    assert_eq!(s, GlStatus::FrameError);
    assert!(last_error().contains("crc"));

    let s = unsafe { gl_meter_decode(buf.as_ptr(), 3, &mut h, regs.as_mut_ptr(), 2, &mut used) };
    assert_eq!(s, GlStatus::FrameError);

    let out_of_range = [GlReading { register_id: 0x01, value: 1e9 }];
    let s = unsafe { gl_meter_encode(3, 0, out_of_range.as_ptr(), 1, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, GlStatus::FrameError);
    let unknown = [GlReading { register_id: 0x42, value: 1.0 }];
    let s = unsafe { gl_meter_encode(3, 0, unknown.as_ptr(), 1, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, GlStatus::FrameError);
    let s = unsafe { gl_meter_encode(3, 0, readings.as_ptr(), 2, buf.as_mut_ptr(), 4, &mut written) };
    assert_eq!(s, GlStatus::BufferTooSmall);
    assert_eq!(written, 14);
}

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libgridloop_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let out = tempfile_path("gridloop_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status();
    let Ok(status) = status else {
        eprintln!("no C compiler available; skipping");
        return;
    };
    assert!(status.success(), "C smoke test failed to build");
    let run = Command::new(&out).output().unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")));
}

fn tempfile_path(stem: &str) -> PathBuf {
    std::env::temp_dir().join(format!("{stem}-{}", std::process::id()))
}
