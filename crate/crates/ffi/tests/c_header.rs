//! Compiles and runs a small C program against the generated header and the
//! static library, proving the ABI is usable from C as shipped.

use std::path::PathBuf;
use std::process::Command;

const C_SMOKE: &str = r#"
#include <assert.h>
#include <stdio.h>
#include <string.h>
#include "siqrng.h"

int main(void) {
    SiqrngRoutineSolution sol;
    SiqrngStatus st = siqrng_solve_routine(2, 19.4730, 11.5700, 1871.2, &sol);
    assert(st == SiqrngStatus_Ok);
    assert(sol.x.xi > 0.59 && sol.x.xi < 0.60);

    double s = 0.0;
    st = siqrng_holevo_bound(3.0, &s);
    assert(st == SiqrngStatus_Ok && s == 2.0);

    uint64_t bound = 0;
    st = siqrng_output_bound(3072, 7.9102, 12, 100, &bound);
    assert(st == SiqrngStatus_Ok && bound == 1825);

    SiqrngExtractor *ext = NULL;
    st = siqrng_extractor_seeded(3072, 1792, 100, 7, &ext);
    assert(st == SiqrngStatus_Ok && ext != NULL);
    assert(siqrng_extractor_input_bytes(ext) == 384);
    assert(siqrng_extractor_output_bytes(ext) == 224);

    uint8_t input[384];
    uint8_t output[224];
    memset(input, 0, sizeof input);
    memset(output, 0xff, sizeof output);
    st = siqrng_extractor_extract(ext, input, sizeof input, output, sizeof output);
    assert(st == SiqrngStatus_Ok);
    for (size_t i = 0; i < sizeof output; i++) {
        assert(output[i] == 0);
    }
    siqrng_extractor_free(ext);
    printf("c-smoke-ok\n");
    return 0;
}
"#;

#[test]
fn c_program_links_against_generated_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    assert!(
        include_dir.join("siqrng.h").exists(),
        "generated header missing"
    );
    // `cargo test` links tests against the rlib only; refresh the staticlib
    // artifact so we link the code under test, not a stale build.
    let mut lib_dir = std::env::current_exe().unwrap();
    lib_dir.pop(); // deps/
    lib_dir.pop(); // debug/ or release/
    let mut build = Command::new(env!("CARGO"));
    build.args(["build", "-p", "siqrng-ffi", "--quiet"]);
    if lib_dir.ends_with("release") {
        build.arg("--release");
    }
    let status = build.status().expect("cargo build for staticlib");
    assert!(status.success(), "staticlib rebuild failed");
    let lib = lib_dir.join("libsiqrng_ffi.a");
    assert!(lib.exists(), "staticlib not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();

    let compile = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("cc not available");
    assert!(
        compile.status.success(),
        "compile failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "c-smoke-ok");
}
