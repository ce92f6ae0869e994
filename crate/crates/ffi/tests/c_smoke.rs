//! Compiles `tests/smoke.c` against the generated header and the shared
//! library, then runs it. Skipped when no C compiler or library is found.

use std::path::PathBuf;
use std::process::Command;

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let libdir = deps.parent().unwrap().to_path_buf();
    let lib = ["libdevperf_ffi.so", "libdevperf_ffi.dylib"].iter().map(|n| libdir.join(n)).find(|p| p.exists());
    let Some(lib) = lib else {
        eprintln!("skipping: shared library not found in {}", libdir.display());
        return;
    };
    let exe = std::env::temp_dir().join(format!("devperf_smoke_{}", std::process::id()));
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg("-L")
        .arg(&libdir)
        .arg("-ldevperf_ffi")
        .arg("-o")
        .arg(&exe)
        .status();
    let Ok(status) = status else {
        eprintln!("skipping: no C compiler `{cc}`");
        return;
    };
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe)
        .env("LD_LIBRARY_PATH", lib.parent().unwrap())
        .env("DYLD_LIBRARY_PATH", lib.parent().unwrap())
        .output()
        .unwrap();
    let _ = std::fs::remove_file(&exe);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
