//! Builds and runs a small C program against the generated header and the
//! shared library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "npa.h"

int main(void) {
    NpaStructure *s = NULL;
    if (npa_structure_new(2, 2, 2, &s) != NPA_STATUS_OK) return 10;
    if (npa_structure_dim(s) != 11 || npa_structure_num_freevars(s) != 7) return 11;
    npa_structure_free(s);

    if (npa_structure_new(0, 2, 2, &s) != NPA_STATUS_INVALID_ARGUMENT) return 12;
    if (strlen(npa_last_error_message()) == 0) return 13;

    NpaTable *t = NULL;
    if (npa_table_simulate("ghz", "ghz", 1.0, 3, 2, 2, &t) != NPA_STATUS_OK) return 14;
    NpaSolverOptions opts = npa_solver_options_default();
    opts.max_iters = 300;
    NpaReport *r = NULL;
    if (npa_analyze_table(t, 2, "all", &opts, &r) != NPA_STATUS_OK) return 15;
    NpaVerdict v;
    if (npa_report_verdict(r, &v) != NPA_STATUS_OK || v != NPA_VERDICT_NONLOCAL) return 16;
    char *json = NULL;
    if (npa_report_to_json(r, &json) != NPA_STATUS_OK) return 17;
    printf("%.6f %s\n", npa_report_lambda_star(r), npa_version());
    npa_string_free(json);
    npa_report_free(r);
    npa_table_free(t);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<this test> → target/<profile>
    let exe = std::env::current_exe().unwrap();
    let libdir = exe.parent().unwrap().parent().unwrap().to_path_buf();
    assert!(libdir.join("libnpa_ffi.so").exists() || libdir.join("libnpa_ffi.dylib").exists());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg("-L")
        .arg(&libdir)
        .arg("-lnpa_ffi")
        .arg(format!("-Wl,-rpath,{}", libdir.display()))
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let lambda: f64 = text.split_whitespace().next().unwrap().parse().unwrap();
    assert!(lambda < -0.05, "{text}");
}
