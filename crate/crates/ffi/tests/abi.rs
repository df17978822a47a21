use std::ffi::{CStr, CString};
use std::ptr;

use npa_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(npa_last_error_message()) }.to_string_lossy().into_owned()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_string_lossy().into_owned();
    npa_string_free(s);
    out
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn structure_handle() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(npa_structure_new(3, 2, 2, &mut s), NpaStatus::Ok);
        assert_eq!(npa_structure_dim(s), 22);
        assert_eq!(npa_structure_num_observables(s), 26);
        assert_eq!(npa_structure_num_freevars(s), 30);
        let mut json = ptr::null_mut();
        assert_eq!(npa_structure_to_json(s, &mut json), NpaStatus::Ok);
        assert!(take(json).contains("\"dim\": 22"));
        npa_structure_free(s);

        assert_eq!(npa_structure_new(0, 2, 2, &mut s), NpaStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(npa_structure_new(3, 2, 0, &mut s), NpaStatus::Structure);
        assert_eq!(npa_structure_new(3, 2, 2, ptr::null_mut()), NpaStatus::NullPointer);
        assert_eq!(npa_structure_dim(ptr::null()), 0);
    }
}

#[test]
fn simulate_analyze_recheck() {
    unsafe {
        let mut t = ptr::null_mut();
        let (w, suite) = (c("w"), c("w"));
        assert_eq!(npa_table_simulate(w.as_ptr(), suite.as_ptr(), 1.0, 3, 2, 2, &mut t), NpaStatus::Ok);
        assert_eq!(last_error(), "");
        assert_eq!(npa_table_len(t), 26);

        let mut opts = npa_solver_options_default();
        opts.max_iters = 400;
        let all = c("all");
        let mut r = ptr::null_mut();
        assert_eq!(npa_analyze_table(t, 2, all.as_ptr(), &opts, &mut r), NpaStatus::Ok);
        let mut verdict = NpaVerdict::Inconclusive;
        assert_eq!(npa_report_verdict(r, &mut verdict), NpaStatus::Ok);
        assert_eq!(verdict, NpaVerdict::Nonlocal);
        assert!(npa_report_lambda_star(r) < -0.1);

        let mut json = ptr::null_mut();
        assert_eq!(npa_report_to_json(r, &mut json), NpaStatus::Ok);
        let doc = c(&take(json));
        let mut back = ptr::null_mut();
        assert_eq!(npa_report_from_json(doc.as_ptr(), &mut back), NpaStatus::Ok);
        let mut ok = false;
        assert_eq!(npa_report_recheck(back, &mut ok), NpaStatus::Ok);
        assert!(ok);
        assert_eq!(npa_report_lambda_star(back), npa_report_lambda_star(r));

        npa_report_free(back);
        npa_report_free(r);
        npa_table_free(t);
    }
}

#[test]
fn table_json_round_trip_and_errors() {
    unsafe {
        let mut t = ptr::null_mut();
        let (ghz, suite) = (c("ghz"), c("ghz"));
        assert_eq!(npa_table_simulate(ghz.as_ptr(), suite.as_ptr(), 0.5, 3, 2, 2, &mut t), NpaStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(npa_table_to_json(t, &mut json), NpaStatus::Ok);
        let text = take(json);
        let doc = c(&text);
        let mut back = ptr::null_mut();
        assert_eq!(npa_table_from_json(doc.as_ptr(), &mut back), NpaStatus::Ok);
        let mut json2 = ptr::null_mut();
        assert_eq!(npa_table_to_json(back, &mut json2), NpaStatus::Ok);
        assert_eq!(take(json2), text);
        npa_table_free(back);

        let bad = c(&text.replacen("\"value\": 0.0", "\"value\": 2.0", 1));
        assert_eq!(npa_table_from_json(bad.as_ptr(), &mut back), NpaStatus::Parse);
        assert!(last_error().contains("outside [-1, 1]"), "{}", last_error());

        let garbage = c("{ not json");
        assert_eq!(npa_table_from_json(garbage.as_ptr(), &mut back), NpaStatus::Parse);
        assert!(last_error().contains("line 1"));

        let policy = c("some");
        let mut r = ptr::null_mut();
        assert_eq!(npa_analyze_table(t, 2, policy.as_ptr(), ptr::null(), &mut r), NpaStatus::InvalidArgument);
        let all = c("all");
        let sparse = c(r#"{"schema_version":1,"scenario":{"parties":2,"settings":2,"outcomes":2},"moments":[{"parties":[1],"settings":[0],"value":0.5}]}"#);
        let mut partial = ptr::null_mut();
        assert_eq!(npa_table_from_json(sparse.as_ptr(), &mut partial), NpaStatus::Ok);
        assert_eq!(npa_analyze_table(partial, 2, all.as_ptr(), ptr::null(), &mut r), NpaStatus::Assembly);
        assert!(last_error().starts_with("assembly:"), "{}", last_error());
        npa_table_free(partial);
        assert_eq!(npa_analyze_table(ptr::null(), 2, all.as_ptr(), ptr::null(), &mut r), NpaStatus::NullPointer);

        let (x, w) = (c("x"), c("w"));
        assert_eq!(npa_table_simulate(x.as_ptr(), w.as_ptr(), 1.0, 3, 2, 2, &mut t), NpaStatus::InvalidArgument);
        assert_eq!(npa_table_simulate(w.as_ptr(), w.as_ptr(), 2.0, 3, 2, 2, &mut t), NpaStatus::Simulation);
        assert_eq!(npa_table_simulate(ptr::null(), w.as_ptr(), 1.0, 3, 2, 2, &mut t), NpaStatus::NullPointer);
        npa_table_free(t);
        npa_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(npa_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
