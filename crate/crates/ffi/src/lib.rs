//! C ABI over `locksim-core`.
//!
//! A simulation lives behind an opaque `LockSim` handle created with
//! `locksim_new` and released with `locksim_free`. Every fallible call
//! returns a `LocksimStatus`; on anything but `LOCKSIM_STATUS_OK` a
//! description is available from `locksim_last_error_message` on the same
//! thread. Strings returned through out-parameters are owned by the caller
//! and must be released with `locksim_string_free`.
//!
//! Time only moves through `locksim_advance_ms`; key events are scheduled
//! at the current simulated time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use locksim_core::config::LockConfig;
use locksim_core::eeprom::{EepromImage, EEPROM_SIZE};
use locksim_core::keypad::{KeySymbol, KeypadError};
use locksim_core::scenario::{parse_scenario, run, RunOptions};
use locksim_core::{FirmwareMode, Simulation};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocksimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Press of a held key or release of a key that is not held.
    Conflict = 3,
    BufferTooSmall = 4,
    ParseError = 5,
    Panic = 6,
}

/// Opaque simulation handle.
pub struct LockSim {
    sim: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: LocksimStatus, msg: impl Into<String>) -> LocksimStatus {
    set_error(msg);
    status
}

/// Runs `f`, turning a panic into `LOCKSIM_STATUS_PANIC`.
fn guard(f: impl FnOnce() -> LocksimStatus) -> LocksimStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(LocksimStatus::Panic, "internal panic"),
    }
}

unsafe fn handle<'a>(h: *mut LockSim) -> Result<&'a mut LockSim, LocksimStatus> {
    h.as_mut()
        .ok_or_else(|| fail(LocksimStatus::NullPointer, "null LockSim handle"))
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, LocksimStatus> {
    if s.is_null() {
        return Err(fail(LocksimStatus::NullPointer, format!("null {what}")));
    }
    CStr::from_ptr(s).to_str().map_err(|_| {
        fail(
            LocksimStatus::InvalidArgument,
            format!("{what} is not UTF-8"),
        )
    })
}

fn symbol(key: c_char) -> Result<KeySymbol, LocksimStatus> {
    KeySymbol::from_char(key as u8 as char)
        .map_err(|e| fail(LocksimStatus::InvalidArgument, e.to_string()))
}

fn key_status(r: Result<(), KeypadError>) -> LocksimStatus {
    match r {
        Ok(()) => LocksimStatus::Ok,
        Err(e) => fail(LocksimStatus::Conflict, e.to_string()),
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(status) => return status,
        }
    };
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn locksim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Creates a simulation booted at t = 0 with the factory EEPROM image.
///
/// # Safety
/// `config_text` is NULL or a NUL-terminated `key = value` config; `out`
/// must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn locksim_new(
    config_text: *const c_char,
    out: *mut *mut LockSim,
) -> LocksimStatus {
    guard(|| {
        if out.is_null() {
            return fail(LocksimStatus::NullPointer, "null out pointer");
        }
        let config = if config_text.is_null() {
            LockConfig::default()
        } else {
            let text = try_ffi!(c_str(config_text, "config text"));
            match LockConfig::parse(text) {
                Ok(c) => c,
                Err(e) => return fail(LocksimStatus::ParseError, e.to_string()),
            }
        };
        let sim = Simulation::new(config, EepromImage::factory());
        *out = Box::into_raw(Box::new(LockSim { sim }));
        LocksimStatus::Ok
    })
}

/// # Safety
/// `h` is NULL or a handle from `locksim_new` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn locksim_free(h: *mut LockSim) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn locksim_press(h: *mut LockSim, key: c_char) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        let sym = try_ffi!(symbol(key));
        let now = h.sim.now_us();
        key_status(h.sim.press(sym, now, None))
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn locksim_release(h: *mut LockSim, key: c_char) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        let sym = try_ffi!(symbol(key));
        let now = h.sim.now_us();
        key_status(h.sim.release(sym, now, None))
    })
}

/// Presses `key` now and releases it `hold_ms` later. Time does not move.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn locksim_tap(h: *mut LockSim, key: c_char, hold_ms: u32) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        let sym = try_ffi!(symbol(key));
        let now = h.sim.now_us();
        key_status(h.sim.tap(sym, now, u64::from(hold_ms) * 1_000))
    })
}

/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn locksim_advance_ms(h: *mut LockSim, ms: u64) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        h.sim.advance_ms(ms);
        LocksimStatus::Ok
    })
}

/// # Safety
/// `h` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn locksim_now_ms(h: *mut LockSim, out: *mut u64) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        let Some(out) = out.as_mut() else {
            return fail(LocksimStatus::NullPointer, "null out pointer");
        };
        *out = h.sim.now_us() / 1_000;
        LocksimStatus::Ok
    })
}

/// Copies LCD row 0 or 1 as NUL-terminated UTF-8. Rows are 20 characters;
/// unprintable cells are U+00B7, so 61 bytes always suffice.
///
/// # Safety
/// `h` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn locksim_lcd_row(
    h: *mut LockSim,
    row: u32,
    buf: *mut c_char,
    len: usize,
) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        if buf.is_null() {
            return fail(LocksimStatus::NullPointer, "null buffer");
        }
        if row > 1 {
            return fail(LocksimStatus::InvalidArgument, format!("no LCD row {row}"));
        }
        let frame = h.sim.frame();
        let text = frame.row(row as usize).as_bytes();
        if text.len() + 1 > len {
            return fail(
                LocksimStatus::BufferTooSmall,
                format!("row needs {} bytes", text.len() + 1),
            );
        }
        ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
        *buf.add(text.len()) = 0;
        LocksimStatus::Ok
    })
}

/// # Safety
/// `h` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn locksim_lock_open(h: *mut LockSim, out: *mut bool) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        let Some(out) = out.as_mut() else {
            return fail(LocksimStatus::NullPointer, "null out pointer");
        };
        *out = h.sim.lock_open();
        LocksimStatus::Ok
    })
}

/// # Safety
/// `h` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn locksim_buzzer_on(h: *mut LockSim, out: *mut bool) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        let Some(out) = out.as_mut() else {
            return fail(LocksimStatus::NullPointer, "null out pointer");
        };
        *out = h.sim.buzzer_on();
        LocksimStatus::Ok
    })
}

fn mode_name(m: FirmwareMode) -> &'static CStr {
    match m {
        FirmwareMode::Boot => c"BOOT",
        FirmwareMode::Sleeping => c"SLEEPING",
        FirmwareMode::Scanning => c"SCANNING",
        FirmwareMode::Entering => c"ENTERING",
        FirmwareMode::Verifying => c"VERIFYING",
        FirmwareMode::Unlocked => c"UNLOCKED",
        FirmwareMode::ChangeEntry => c"CHANGE_ENTRY",
        FirmwareMode::Alarm => c"ALARM",
    }
}

/// Current firmware mode as a static string, or NULL for a NULL handle.
///
/// # Safety
/// `h` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn locksim_mode(h: *const LockSim) -> *const c_char {
    match h.as_ref() {
        Some(h) => mode_name(h.sim.mode()).as_ptr(),
        None => ptr::null(),
    }
}

/// Copies the 128-byte EEPROM image into `buf`.
///
/// # Safety
/// `h` must be a live handle and `buf` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn locksim_eeprom_get(
    h: *mut LockSim,
    buf: *mut u8,
    len: usize,
) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        if buf.is_null() {
            return fail(LocksimStatus::NullPointer, "null buffer");
        }
        if len < EEPROM_SIZE {
            return fail(
                LocksimStatus::BufferTooSmall,
                format!("need {EEPROM_SIZE} bytes"),
            );
        }
        let image = h.sim.board().eeprom.image();
        ptr::copy_nonoverlapping(image.0.as_ptr(), buf, EEPROM_SIZE);
        LocksimStatus::Ok
    })
}

/// Replaces the EEPROM image (exactly 128 bytes) and reboots the firmware.
///
/// # Safety
/// `h` must be a live handle and `data` valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn locksim_eeprom_set(
    h: *mut LockSim,
    data: *const u8,
    len: usize,
) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        if data.is_null() {
            return fail(LocksimStatus::NullPointer, "null data");
        }
        let bytes = std::slice::from_raw_parts(data, len);
        match EepromImage::from_bytes(bytes) {
            Ok(image) => {
                h.sim.power_cycle_with(image);
                LocksimStatus::Ok
            }
            Err(e) => fail(LocksimStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Reboots the firmware with the current EEPROM contents.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn locksim_reset(h: *mut LockSim) -> LocksimStatus {
    guard(|| {
        let h = try_ffi!(handle(h));
        h.sim.power_cycle();
        LocksimStatus::Ok
    })
}

/// Parses and runs a scenario script, writing the JSON report to
/// `*out_json`. A script whose expectations fail still returns OK; check
/// the report's `passed` field. Relative `eeprom load` paths resolve
/// against the working directory.
///
/// # Safety
/// `script` must be NUL-terminated and `out_json` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn locksim_run_scenario(
    script: *const c_char,
    seed: u64,
    out_json: *mut *mut c_char,
) -> LocksimStatus {
    guard(|| {
        if out_json.is_null() {
            return fail(LocksimStatus::NullPointer, "null out pointer");
        }
        let text = try_ffi!(c_str(script, "script"));
        let parsed = match parse_scenario(text) {
            Ok(s) => s,
            Err(e) => return fail(LocksimStatus::ParseError, e.to_string()),
        };
        let report = run(
            &parsed,
            &RunOptions {
                seed,
                ..RunOptions::default()
            },
        );
        let json = CString::new(report.to_json()).expect("JSON has no NUL bytes");
        *out_json = json.into_raw();
        LocksimStatus::Ok
    })
}

/// # Safety
/// `s` is NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn locksim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
