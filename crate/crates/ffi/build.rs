use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out_path = PathBuf::from(env::var("OUT_DIR").unwrap()).join("mgising.h");

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let config = cbindgen::Config::from_root_or_default(&crate_dir);
    match cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
    {
        Ok(bindings) => {
            bindings.write_to_file(&out_path);
            let committed = PathBuf::from(&crate_dir).join("include").join("mgising.h");
            std::fs::create_dir_all(committed.parent().unwrap()).unwrap();
            std::fs::copy(&out_path, &committed).unwrap();
        }
        Err(e) => {
            // Keep the committed header usable when cbindgen cannot run.
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
}
