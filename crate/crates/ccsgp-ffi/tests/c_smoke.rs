//! Compile and run a small C client against the generated header and the
//! built shared library, proving the ABI from the consumer side.

use std::path::PathBuf;
use std::process::Command;

const CLIENT: &str = r#"
#include <stdio.h>
#include <math.h>
#include "ccsgp.h"

int main(void) {
    double states[16];
    size_t lengths[2] = {8, 8};
    size_t i, t;
    for (i = 0; i < 2; i++) {
        double x = i == 0 ? 10.0 : 60.0;
        for (t = 0; t < 8; t++) {
            states[i * 8 + t] = x;
            x = x + 0.1 * x * (1.0 - x / 100.0) + 0.05 * sin(3.7 * (double)t);
        }
    }

    CcsgpFitOptions opts;
    if (ccsgp_fit_options_default(&opts) != CcsgpStatus_Ok) return 10;
    opts.iterations = 2;
    opts.n_starts = 1;
    opts.max_opt_iters = 40;

    CcsgpModel *model = NULL;
    CcsgpStatus status = ccsgp_fit(states, 2, lengths, 1, CcsgpMethod_Ccs, &opts, &model);
    if (status != CcsgpStatus_Ok) {
        fprintf(stderr, "fit: %s (%s)\n", ccsgp_strerror(status), ccsgp_last_error_message());
        return 11;
    }
    if (ccsgp_model_state_dim(model) != 1) return 12;

    double x = 50.0, mean = 0.0, var = 0.0;
    status = ccsgp_predict(model, &x, &mean, &var);
    if (status != CcsgpStatus_Ok) {
        fprintf(stderr, "predict: %s\n", ccsgp_strerror(status));
        return 13;
    }
    if (fabs(mean - 52.5) > 0.5 || var < 0.0) {
        fprintf(stderr, "mean %f var %f\n", mean, var);
        return 14;
    }

    status = ccsgp_predict(NULL, &x, &mean, &var);
    if (status != CcsgpStatus_NullPointer) return 15;

    ccsgp_model_free(model);
    printf("mean %.3f\n", mean);
    return 0;
}
"#;

#[test]
fn c_client_links_and_runs() {
    if Command::new("gcc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler available");
        return;
    }

    // target/debug, derived from the test executable's own location.
    let mut lib_dir = std::env::current_exe().expect("test exe path");
    lib_dir.pop();
    if lib_dir.ends_with("deps") {
        lib_dir.pop();
    }
    let so = lib_dir.join("libccsgp_ffi.so");
    assert!(so.exists(), "shared library missing at {}", so.display());

    let include_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let work = tempfile::tempdir_in(&lib_dir).expect("tempdir");
    let src = work.path().join("client.c");
    let bin = work.path().join("client");
    std::fs::write(&src, CLIENT).unwrap();

    let compile = Command::new("gcc")
        .arg(&src)
        .arg("-o")
        .arg(&bin)
        .arg(format!("-I{}", include_dir.display()))
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lccsgp_ffi")
        .arg("-lm")
        .arg("-Wall")
        .arg("-Werror")
        .output()
        .expect("gcc runs");
    assert!(
        compile.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().expect("client runs");
    assert!(
        run.status.success(),
        "client exited {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("mean 52."));
}
