use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use losnav_ffi::*;

const FIG: &str =
    "bounds -1.5 -1.5 6.5 6.5\nmrp 0 0 0 0.15\nrect 2 2 3 3\ntarget 5 5\ntarget 0 0\nseed 3\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(losnav_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn parse(text: &str) -> *mut LosnavScenario {
    let c = CString::new(text).unwrap();
    let mut scn = ptr::null_mut();
    assert_eq!(
        unsafe { losnav_scenario_parse(c.as_ptr(), &mut scn) },
        LosnavStatus::Ok,
        "{}",
        last_error()
    );
    scn
}

fn csv(run: *const LosnavRun, which: LosnavLog) -> String {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { losnav_run_csv(run, which, &mut out) },
        LosnavStatus::Ok
    );
    let s = unsafe { CStr::from_ptr(out) }
        .to_string_lossy()
        .into_owned();
    unsafe { losnav_string_free(out) };
    s
}

#[test]
fn run_through_handles_matches_library() {
    let scn = parse(FIG);
    assert_eq!(unsafe { losnav_scenario_target_count(scn) }, 2);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { losnav_run(scn, &mut run) }, LosnavStatus::Ok);
    let mut s = LosnavSummary::default();
    assert_eq!(unsafe { losnav_run_summary(run, &mut s) }, LosnavStatus::Ok);
    assert_eq!((s.arrived, s.legs, s.collided), (2, 2, false));

    let direct = losnav::sim::run(&losnav::sim::parse_scenario(FIG).unwrap());
    assert_eq!(
        csv(run, LosnavLog::Trajectory),
        direct.log.trajectory_csv().unwrap()
    );
    assert_eq!(
        csv(run, LosnavLog::Transitions),
        direct.log.transitions_csv().unwrap()
    );
    assert!(csv(run, LosnavLog::Events).contains("avoid_start"));

    let mut leg = LosnavLegOutcome::Failed;
    assert_eq!(
        unsafe { losnav_run_leg(run, 1, &mut leg) },
        LosnavStatus::Ok
    );
    assert_eq!(leg, LosnavLegOutcome::Arrived);
    unsafe {
        losnav_run_free(run);
        losnav_scenario_free(scn);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut scn = ptr::null_mut();
    let bad = CString::new("bounds 0 0 4 4\nmrp 1 1 0 0.15\ntarget x 1\n").unwrap();
    assert_eq!(
        unsafe { losnav_scenario_parse(bad.as_ptr(), &mut scn) },
        LosnavStatus::Parse
    );
    assert!(scn.is_null());
    assert!(last_error().contains("line 3"), "{}", last_error());

    let invalid = CString::new("bounds 0 0 4 4\nmrp 1 1 0 0.15\ntarget 9 9\n").unwrap();
    assert_eq!(
        unsafe { losnav_scenario_parse(invalid.as_ptr(), &mut scn) },
        LosnavStatus::InvalidScenario
    );

    let missing = CString::new("/nonexistent/x.scn").unwrap();
    assert_eq!(
        unsafe { losnav_scenario_load(missing.as_ptr(), &mut scn) },
        LosnavStatus::Io
    );

    assert_eq!(
        unsafe { losnav_scenario_parse(ptr::null(), &mut scn) },
        LosnavStatus::NullPointer
    );
    let not_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { losnav_scenario_parse(not_utf8.as_ptr().cast(), &mut scn) },
        LosnavStatus::InvalidUtf8
    );
    assert_eq!(
        unsafe { losnav_run(ptr::null(), &mut ptr::null_mut()) },
        LosnavStatus::NullPointer
    );

    let mut w = 0.0;
    assert_eq!(
        unsafe { losnav_wrap_angle(f64::NAN, &mut w) },
        LosnavStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { losnav_wrap_angle(-std::f64::consts::PI, &mut w) },
        LosnavStatus::Ok
    );
    assert_eq!(w, std::f64::consts::PI);
    assert_eq!(last_error(), "");

    unsafe {
        losnav_scenario_free(ptr::null_mut());
        losnav_run_free(ptr::null_mut());
        losnav_string_free(ptr::null_mut());
    }
}

#[test]
fn load_from_file_and_line_of_sight() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.scn");
    std::fs::write(&path, FIG).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut scn = ptr::null_mut();
    assert_eq!(
        unsafe { losnav_scenario_load(c.as_ptr(), &mut scn) },
        LosnavStatus::Ok
    );
    let mut los = true;
    assert_eq!(
        unsafe { losnav_line_of_sight(scn, 0.0, 0.0, 5.0, 5.0, &mut los) },
        LosnavStatus::Ok
    );
    assert!(!los);
    assert_eq!(
        unsafe { losnav_line_of_sight(scn, 0.0, 0.0, 5.0, 0.0, &mut los) },
        LosnavStatus::Ok
    );
    assert!(los);
    assert_eq!(
        unsafe { losnav_scenario_set_seed(scn, 9) },
        LosnavStatus::Ok
    );
    unsafe { losnav_scenario_free(scn) };
}

#[test]
fn datagram_helpers_round_trip() {
    let mut len = 0usize;
    assert_eq!(
        unsafe { losnav_encode_target_request(4, 100, 1.5, -2.0, ptr::null_mut(), 0, &mut len) },
        LosnavStatus::BufferTooSmall
    );
    let mut buf = vec![0u8; len];
    assert_eq!(
        unsafe {
            losnav_encode_target_request(4, 100, 1.5, -2.0, buf.as_mut_ptr(), buf.len(), &mut len)
        },
        LosnavStatus::Ok
    );
    let expected = losnav::protocol::encode(&losnav::protocol::WireMessage::TargetRequest(
        losnav::protocol::TargetRequest {
            seq: 4,
            timestamp_ms: 100,
            x: 1.5,
            y: -2.0,
        },
    ))
    .unwrap();
    assert_eq!(buf, expected);

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { losnav_canonicalize(buf.as_ptr(), buf.len(), &mut out) },
        LosnavStatus::Ok
    );
    assert_eq!(unsafe { CStr::from_ptr(out) }.to_bytes(), &expected[..]);
    unsafe { losnav_string_free(out) };

    let junk = b"{not json";
    assert_eq!(
        unsafe { losnav_canonicalize(junk.as_ptr(), junk.len(), &mut out) },
        LosnavStatus::Decode
    );
    assert!(out.is_null());
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(losnav_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn c_program_links_against_generated_header() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib_dir = target_dir();
    assert!(
        lib_dir.join("liblosnav_ffi.so").exists() || lib_dir.join("liblosnav_ffi.dylib").exists()
    );
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("c_smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c_smoke.c"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-llosnav_ffi")
        .arg("-o")
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&exe)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .env("DYLD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
