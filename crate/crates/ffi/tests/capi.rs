use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use thermotier_ffi::*;

fn last_error() -> String {
    let p = tt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn record_lifecycle() {
    let p = tt_temperature_params_default();
    assert_eq!(p.window, 300);
    let mut r = TtTemperatureRecord {
        last_query_ts: 0,
        temperature: 0.0,
        pending_accesses: 0,
        tracked: false,
    };
    unsafe {
        assert_eq!(tt_record_init(600, &p, &mut r), TtStatus::Ok);
        assert_eq!(r.temperature, 2.0);
        assert_eq!(tt_record_access(&mut r), TtStatus::Ok);
        assert_eq!(tt_record_access(&mut r), TtStatus::Ok);
        assert_eq!(tt_record_update(&mut r, 900, &p), TtStatus::Ok);
        assert!((r.temperature - (2.0 * (-0.1f64).exp() + 2.0 * 16.0 / 300.0)).abs() < 1e-12);
        assert_eq!(r.pending_accesses, 0);

        let before = r;
        assert_eq!(tt_record_update(&mut r, 1000, &p), TtStatus::Contract);
        assert_eq!(r, before);
        assert!(last_error().contains("window"));

        let bad = TtTemperatureParams { window: 0, ..p };
        assert_eq!(tt_record_update(&mut r, 1200, &bad), TtStatus::InvalidArgument);
    }
}

#[test]
fn encoding_round_trip_and_errors() {
    let r = TtTemperatureRecord {
        last_query_ts: 1_406_851_200,
        temperature: 0.5,
        pending_accesses: 0,
        tracked: true,
    };
    let mut buf = [0u8; 8];
    let mut back = r;
    back.temperature = 0.0;
    unsafe {
        assert_eq!(tt_record_encoded_len(), 8);
        assert_eq!(tt_record_encode(&r, buf.as_mut_ptr(), 7), TtStatus::BufferTooSmall);
        assert_eq!(tt_record_encode(&r, buf.as_mut_ptr(), 8), TtStatus::Ok);
        assert_eq!(tt_record_decode(buf.as_ptr(), 8, &mut back), TtStatus::Ok);
        assert_eq!(back, r);
        assert_eq!(tt_record_decode(buf.as_ptr(), 9, &mut back), TtStatus::Encoding);
        let negative = TtTemperatureRecord { last_query_ts: -1, ..r };
        assert_eq!(tt_record_encode(&negative, buf.as_mut_ptr(), 8), TtStatus::Encoding);
    }
}

#[test]
fn heat_increment_and_dtw() {
    let mut h = 0.0;
    let mut d = 0.0;
    unsafe {
        assert_eq!(tt_heat_increment(2.0, 3, 300.0, 1.0, &mut h), TtStatus::Ok);
        assert!((h - 48.0 / 300.0).abs() < 1e-15);
        assert_eq!(tt_heat_increment(2.0, 3, 0.0, 1.0, &mut h), TtStatus::InvalidArgument);

        let a = [1.0, 2.0, 3.0];
        let b = [1.0, 3.0];
        assert_eq!(tt_dtw_distance(a.as_ptr(), 3, b.as_ptr(), 2, &mut d), TtStatus::Ok);
        assert_eq!(d, 1.0);
        assert_eq!(
            tt_dtw_distance(ptr::null(), 0, b.as_ptr(), 2, &mut d),
            TtStatus::InvalidArgument
        );
        assert_eq!(
            tt_dtw_distance(ptr::null(), 3, b.as_ptr(), 2, &mut d),
            TtStatus::NullPointer
        );
    }
}

#[test]
fn counter_table_handle() {
    let mut t = ptr::null_mut();
    let mut c = 0;
    unsafe {
        assert_eq!(tt_counter_table_new(0, &mut t), TtStatus::InvalidArgument);
        assert!(t.is_null());
        assert_eq!(tt_counter_table_new(2, &mut t), TtStatus::Ok);
        for e in [4, 4, 4, 1, 4] {
            assert_eq!(tt_counter_table_process(t, e), TtStatus::Ok);
        }
        assert_eq!(tt_counter_table_counter(t, 4, &mut c), TtStatus::Ok);
        assert_eq!(c, 3);
        assert_eq!(tt_counter_table_len(t), 1);
        assert_eq!(tt_counter_table_processed(t), 5);
        tt_counter_table_free(t);
        tt_counter_table_free(ptr::null_mut());
        assert_eq!(tt_counter_table_process(ptr::null_mut(), 1), TtStatus::NullPointer);
    }
}

#[test]
fn forecaster_fit_predict_snapshot() {
    let history: Vec<f64> = (0..240).map(|t| [0.0, 1.0, 4.0, 1.0][t % 4]).collect();
    let mut f = ptr::null_mut();
    unsafe {
        assert_eq!(
            tt_forecaster_fit(history.as_ptr(), 10, 12, 4, 5, 1, &mut f),
            TtStatus::InvalidArgument
        );
        assert_eq!(
            tt_forecaster_fit(history.as_ptr(), history.len(), 12, 4, 5, 1, &mut f),
            TtStatus::Ok
        );
        let mut out = [0.0; 8];
        assert_eq!(
            tt_forecaster_predict(f, history.as_ptr(), history.len(), 8, out.as_mut_ptr(), 4),
            TtStatus::BufferTooSmall
        );
        assert_eq!(
            tt_forecaster_predict(f, history.as_ptr(), history.len(), 8, out.as_mut_ptr(), 8),
            TtStatus::Ok
        );
        for (i, v) in out.iter().enumerate() {
            assert!((v - [0.0, 1.0, 4.0, 1.0][i % 4]).abs() < 0.5, "step {i}: {v}");
        }
        let (mut wl, mut wm) = (0.0, 0.0);
        assert_eq!(tt_forecaster_weights(f, &mut wl, &mut wm), TtStatus::Ok);
        assert!((wl + wm - 1.0).abs() < 1e-12);

        let mut need = 0;
        assert_eq!(
            tt_forecaster_snapshot(f, ptr::null_mut(), 0, &mut need),
            TtStatus::BufferTooSmall
        );
        let mut buf = vec![0 as std::ffi::c_char; need];
        assert_eq!(
            tt_forecaster_snapshot(f, buf.as_mut_ptr(), need, &mut need),
            TtStatus::Ok
        );
        let mut g = ptr::null_mut();
        assert_eq!(tt_forecaster_from_snapshot(buf.as_ptr(), &mut g), TtStatus::Ok);
        let mut again = [0.0; 8];
        assert_eq!(
            tt_forecaster_predict(g, history.as_ptr(), history.len(), 8, again.as_mut_ptr(), 8),
            TtStatus::Ok
        );
        assert_eq!(out, again);

        let junk = CString::new("not a snapshot").unwrap();
        let mut h = ptr::null_mut();
        assert_ne!(tt_forecaster_from_snapshot(junk.as_ptr(), &mut h), TtStatus::Ok);
        assert!(h.is_null());
        tt_forecaster_free(f);
        tt_forecaster_free(g);
    }
}

#[test]
fn experiment_runs_and_reports_config_errors() {
    let bad = CString::new("no_such_key = 1").unwrap();
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(tt_experiment_new(bad.as_ptr(), &mut e), TtStatus::Config);
        assert!(last_error().contains("no_such_key"));

        let text = CString::new(
            "dataset_series = 4\ndataset_points = 2000\ndataset_days = 6\nsim_days = 4\nwarmup_days = 2\n\
             durations = 3600,21600\ntemplates_per_kind = 1\n",
        )
        .unwrap();
        assert_eq!(tt_experiment_new(text.as_ptr(), &mut e), TtStatus::Ok);
        let points = tt_experiment_dataset_points(e);
        assert_eq!(points, 8000);

        let policy = CString::new("lru").unwrap();
        let mut s = TtRunSummary::default();
        assert_eq!(tt_experiment_run(e, policy.as_ptr(), points, &mut s), TtStatus::Ok);
        assert_eq!(s.capacity, points);
        assert!(s.queries > 0 && s.hits + s.misses == s.queries);
        assert_eq!(s.forecast_calls, 0);
        assert!((s.hit_rate - s.hits as f64 / s.queries as f64).abs() < 1e-12);

        let unknown = CString::new("MRU").unwrap();
        assert_eq!(tt_experiment_run(e, unknown.as_ptr(), points, &mut s), TtStatus::Config);
        tt_experiment_free(e);
    }
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/capi-<hash>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_header_and_static_library() {
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libthermotier_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("capi");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/capi.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success(), "compiling tests/capi.c failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
