use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use evpose_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(evpose_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn stream_round_trip_through_handles() {
    let t = [1u64, 5, 5, 9];
    let x = [0u16, 3, 2, 1];
    let y = [0u16, 1, 1, 0];
    let p = [1i8, -1, 1, -1];
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(
            evpose_stream_from_arrays(
                4,
                2,
                t.as_ptr(),
                x.as_ptr(),
                y.as_ptr(),
                p.as_ptr(),
                4,
                &mut s
            ),
            EvposeStatus::Ok
        );
        let mut need = 0;
        assert_eq!(
            evpose_stream_serialize(s, ptr::null_mut(), 0, &mut need),
            EvposeStatus::Ok
        );
        let mut small = vec![0u8; need - 1];
        assert_eq!(
            evpose_stream_serialize(s, small.as_mut_ptr(), small.len(), &mut need),
            EvposeStatus::BufferTooSmall
        );
        let mut buf = vec![0u8; need];
        assert_eq!(
            evpose_stream_serialize(s, buf.as_mut_ptr(), buf.len(), &mut need),
            EvposeStatus::Ok
        );

        let mut back = ptr::null_mut();
        assert_eq!(
            evpose_stream_parse(buf.as_ptr(), buf.len(), &mut back),
            EvposeStatus::Ok
        );
        assert_eq!(evpose_stream_len(back), 4);
        let (mut et, mut ex, mut ey, mut ep) = (0, 0, 0, 0);
        assert_eq!(
            evpose_stream_event(back, 1, &mut et, &mut ex, &mut ey, &mut ep),
            EvposeStatus::Ok
        );
        assert_eq!((et, ex, ey, ep), (5, 3, 1, -1));
        assert_eq!(
            evpose_stream_event(back, 4, &mut et, &mut ex, &mut ey, &mut ep),
            EvposeStatus::ConfigError
        );
        let (mut w, mut h) = (0, 0);
        assert_eq!(
            evpose_stream_geometry(back, &mut w, &mut h),
            EvposeStatus::Ok
        );
        assert_eq!((w, h), (4, 2));
        evpose_stream_free(back);
        evpose_stream_free(s);
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(
            evpose_stream_parse(b"EVT2".as_ptr(), 4, &mut s),
            EvposeStatus::DataError
        );
        assert!(!last_error().is_empty());
        assert_eq!(
            evpose_stream_parse(ptr::null(), 0, &mut s),
            EvposeStatus::NullArgument
        );
        assert!(last_error().contains("bytes"));
        let t = [5u64, 4];
        let xy = [0u16, 0];
        let p = [1i8, 1];
        assert_eq!(
            evpose_stream_from_arrays(
                2,
                2,
                t.as_ptr(),
                xy.as_ptr(),
                xy.as_ptr(),
                p.as_ptr(),
                2,
                &mut s
            ),
            EvposeStatus::DataError
        );
        let bad_p = [1i8, 0];
        let t = [1u64, 2];
        assert_eq!(
            evpose_stream_from_arrays(
                2,
                2,
                t.as_ptr(),
                xy.as_ptr(),
                xy.as_ptr(),
                bad_p.as_ptr(),
                2,
                &mut s
            ),
            EvposeStatus::DataError
        );
        evpose_stream_free(ptr::null_mut());
    }
}

#[test]
fn tore_handle_matches_core() {
    use evpose::event::{Event, EventStream, Polarity, SensorGeometry};
    use evpose::tore::{build_tore, ToreConfig};
    let g = SensorGeometry::new(3, 2).unwrap();
    let events = vec![
        Event::new(10, 0, 0, Polarity::Positive),
        Event::new(400, 2, 1, Polarity::Negative),
        Event::new(900, 0, 0, Polarity::Positive),
    ];
    let cfg = ToreConfig::new(2, 1_000_000).unwrap();
    let want = build_tore(&EventStream::new(g, events.clone()).unwrap(), cfg, 1000).unwrap();
    unsafe {
        let mut tore = ptr::null_mut();
        assert_eq!(
            evpose_tore_new(3, 2, 2, 1_000_000, &mut tore),
            EvposeStatus::Ok
        );
        assert_eq!(evpose_tore_channels(tore), 4);
        for e in &events {
            assert_eq!(
                evpose_tore_ingest(tore, e.t, e.x, e.y, e.polarity.as_i8()),
                EvposeStatus::Ok
            );
        }
        assert_eq!(
            evpose_tore_ingest(tore, 5, 0, 0, 1),
            EvposeStatus::DataError
        );
        let mut buf = vec![0f32; 24];
        let mut n = 0;
        assert_eq!(
            evpose_tore_materialize(tore, 1000, buf.as_mut_ptr(), 24, &mut n),
            EvposeStatus::Ok
        );
        assert_eq!(n, 24);
        assert_eq!(buf, want.data());
        assert_eq!(
            evpose_tore_materialize(tore, 1000, buf.as_mut_ptr(), 3, &mut n),
            EvposeStatus::BufferTooSmall
        );
        evpose_tore_free(tore);
    }
    assert_eq!(evpose_tore_value(1.0, 5e6), 1.0);
}

#[test]
fn metrics_and_schedule() {
    let gt = [0.0f64; 39];
    let mut pred = gt;
    pred[12] = 3.0;
    pred[13] = 4.0;
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            evpose_mpjpe(pred.as_ptr(), gt.as_ptr(), &mut out),
            EvposeStatus::Ok
        );
        assert_eq!(out, 5.0 / 13.0);
        assert_eq!(
            evpose_pck(pred.as_ptr(), gt.as_ptr(), 5.0, &mut out),
            EvposeStatus::Ok
        );
        assert_eq!(out, 12.0 / 13.0);
        assert_eq!(
            evpose_pck(pred.as_ptr(), gt.as_ptr(), -1.0, &mut out),
            EvposeStatus::ConfigError
        );
        assert_eq!(
            evpose_auc(gt.as_ptr(), gt.as_ptr(), &mut out),
            EvposeStatus::Ok
        );
        assert_eq!(out, 29.0 / 30.0);

        let scores = [0.5, 1.0, 0.9, 0.5];
        let mut calls = 0;
        let mut flags = [9u8; 6];
        assert_eq!(
            evpose_schedule_fixed(scores.as_ptr(), 4, 6, 0.95, &mut calls, flags.as_mut_ptr()),
            EvposeStatus::Ok
        );
        assert_eq!(flags, [1, 0, 1, 0, 1, 0]);
        assert_eq!(calls, 3);
        assert_eq!(
            evpose_schedule_fixed(ptr::null(), 0, 3, 0.5, &mut calls, ptr::null_mut()),
            EvposeStatus::DataError
        );
    }
}

/// Compiles the C smoke program against the generated header and the shared library.
#[test]
fn c_program_links_against_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("evpose.h").exists());
    // test binaries live in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libevpose_ffi.so").exists() {
        eprintln!(
            "skipping: shared library not found in {}",
            lib_dir.display()
        );
        return;
    }
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let out = std::env::temp_dir().join(format!("evpose_smoke_{}", std::process::id()));
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&out)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-levpose_ffi")
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler");
        return;
    };
    assert!(status.success(), "C compile failed");
    let run = Command::new(&out)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    let _ = std::fs::remove_file(&out);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
