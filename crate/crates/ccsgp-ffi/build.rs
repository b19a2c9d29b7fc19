use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("manifest dir"));
    let header = crate_dir.join("include").join("ccsgp.h");

    let mut enumeration = cbindgen::EnumConfig::default();
    enumeration.prefix_with_name = true;
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("CCSGP_H".to_string()),
        cpp_compat: true,
        documentation: true,
        enumeration,
        header: Some(
            "/* C interface of the ccsgp Gaussian-process system-identification library. */"
                .to_string(),
        ),
        ..cbindgen::Config::default()
    };

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("cbindgen generates the C header")
        .write_to_file(header);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=build.rs");
}
