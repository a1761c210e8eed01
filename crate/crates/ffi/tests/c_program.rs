//! Compiles a small C program against the generated header and the static
//! library, then runs it.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "locksim.h"

int main(void) {
    LockSim *sim = NULL;
    if (locksim_new(NULL, &sim) != LOCKSIM_STATUS_OK) return 10;
    locksim_advance_ms(sim, 10);
    const char *pw = "0000000000D";
    for (const char *k = pw; *k; k++) {
        if (locksim_tap(sim, *k, 60) != LOCKSIM_STATUS_OK) return 11;
        locksim_advance_ms(sim, 120);
    }
    char row[64];
    if (locksim_lcd_row(sim, 0, row, sizeof row) != LOCKSIM_STATUS_OK) return 12;
    bool open = false;
    locksim_lock_open(sim, &open);
    if (locksim_release(sim, '7') != LOCKSIM_STATUS_CONFLICT) return 13;
    printf("%s|%d|%s|%s\n", row, open, locksim_mode(sim), locksim_last_error_message());
    locksim_free(sim);
    return 0;
}
"#;

#[test]
fn c_program_links_and_unlocks() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // test binaries sit in <profile>/deps, the library in <profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("liblocksim_ffi.a");
    assert!(
        lib.exists(),
        "static library not found at {}",
        lib.display()
    );

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is installed");
    assert!(status.success());

    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<_> = stdout.trim_end().split('|').collect();
    assert_eq!(fields[0], "verify successfully ");
    assert_eq!(fields[1], "1");
    assert_eq!(fields[2], "UNLOCKED");
    assert!(fields[3].contains('7'));
}
