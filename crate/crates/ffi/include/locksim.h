#ifndef LOCKSIM_H
#define LOCKSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LocksimStatus {
  LOCKSIM_STATUS_OK = 0,
  LOCKSIM_STATUS_NULL_POINTER = 1,
  LOCKSIM_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Press of a held key or release of a key that is not held.
   */
  LOCKSIM_STATUS_CONFLICT = 3,
  LOCKSIM_STATUS_BUFFER_TOO_SMALL = 4,
  LOCKSIM_STATUS_PARSE_ERROR = 5,
  LOCKSIM_STATUS_PANIC = 6,
} LocksimStatus;

/**
 * Opaque simulation handle.
 */
typedef struct LockSim LockSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *locksim_last_error_message(void);

/**
 * Creates a simulation booted at t = 0 with the factory EEPROM image.
 *
 * # Safety
 * `config_text` is NULL or a NUL-terminated `key = value` config; `out`
 * must be valid for writing a pointer.
 */
enum LocksimStatus locksim_new(const char *config_text, struct LockSim **out);

/**
 * # Safety
 * `h` is NULL or a handle from `locksim_new` that has not been freed.
 */
void locksim_free(struct LockSim *h);

/**
 * # Safety
 * `h` must be a live handle.
 */
enum LocksimStatus locksim_press(struct LockSim *h, char key);

/**
 * # Safety
 * `h` must be a live handle.
 */
enum LocksimStatus locksim_release(struct LockSim *h, char key);

/**
 * Presses `key` now and releases it `hold_ms` later. Time does not move.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum LocksimStatus locksim_tap(struct LockSim *h, char key, uint32_t hold_ms);

/**
 * # Safety
 * `h` must be a live handle.
 */
enum LocksimStatus locksim_advance_ms(struct LockSim *h, uint64_t ms);

/**
 * # Safety
 * `h` must be a live handle and `out` valid for writing.
 */
enum LocksimStatus locksim_now_ms(struct LockSim *h, uint64_t *out);

/**
 * Copies LCD row 0 or 1 as NUL-terminated UTF-8. Rows are 20 characters;
 * unprintable cells are U+00B7, so 61 bytes always suffice.
 *
 * # Safety
 * `h` must be a live handle and `buf` valid for `len` bytes.
 */
enum LocksimStatus locksim_lcd_row(struct LockSim *h, uint32_t row, char *buf, size_t len);

/**
 * # Safety
 * `h` must be a live handle and `out` valid for writing.
 */
enum LocksimStatus locksim_lock_open(struct LockSim *h, bool *out);

/**
 * # Safety
 * `h` must be a live handle and `out` valid for writing.
 */
enum LocksimStatus locksim_buzzer_on(struct LockSim *h, bool *out);

/**
 * Current firmware mode as a static string, or NULL for a NULL handle.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
const char *locksim_mode(const struct LockSim *h);

/**
 * Copies the 128-byte EEPROM image into `buf`.
 *
 * # Safety
 * `h` must be a live handle and `buf` valid for `len` bytes.
 */
enum LocksimStatus locksim_eeprom_get(struct LockSim *h, uint8_t *buf, size_t len);

/**
 * Replaces the EEPROM image (exactly 128 bytes) and reboots the firmware.
 *
 * # Safety
 * `h` must be a live handle and `data` valid for `len` bytes.
 */
enum LocksimStatus locksim_eeprom_set(struct LockSim *h, const uint8_t *data, size_t len);

/**
 * Reboots the firmware with the current EEPROM contents.
 *
 * # Safety
 * `h` must be a live handle.
 */
enum LocksimStatus locksim_reset(struct LockSim *h);

/**
 * Parses and runs a scenario script, writing the JSON report to
 * `*out_json`. A script whose expectations fail still returns OK; check
 * the report's `passed` field. Relative `eeprom load` paths resolve
 * against the working directory.
 *
 * # Safety
 * `script` must be NUL-terminated and `out_json` valid for writing.
 */
enum LocksimStatus locksim_run_scenario(const char *script, uint64_t seed, char **out_json);

/**
 * # Safety
 * `s` is NULL or a string returned by this library, not yet freed.
 */
void locksim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOCKSIM_H */
