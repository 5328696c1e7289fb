use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out_dir = PathBuf::from(env::var("OUT_DIR").unwrap());
    let header = out_dir.join("datg.h");

    match cbindgen::generate(&crate_dir) {
        Ok(bindings) => {
            bindings.write_to_file(&header);
            // Keep the committed header in sync; ignore failures in
            // read-only build environments.
            let committed = PathBuf::from(&crate_dir).join("include/datg.h");
            let fresh = std::fs::read(&header).ok();
            let existing = std::fs::read(&committed).ok();
            if fresh.is_some() && fresh != existing {
                let _ = std::fs::create_dir_all(committed.parent().unwrap());
                let _ = std::fs::copy(&header, &committed);
            }
        }
        Err(err) => println!("cargo:warning=cbindgen failed: {err}"),
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
