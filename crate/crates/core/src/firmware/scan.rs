//! Keypad scanning and debounce.
//!
//! `row_scan` pulls one row low at a time and hands over to `col_scan`,
//! which looks for a column that dropped to LOW. With the per-pin strategy
//! only the column under test is an input; every other column is an output.

use serde::Serialize;

use crate::board::Board;
use crate::config::ScanStrategy;
use crate::gpio::{Level, PinConfig};
use crate::keypad::{col_pin, keymap, row_pin, KeyPosition, KeySymbol};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScanCursor {
    /// 4·row, advanced once per row.
    pub key_index: u8,
    pub row: u8,
    pub col: u8,
    /// Column handed from `col_scan` to `find_key`.
    pub working_value: u8,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScanCounters {
    pub scans: u64,
    pub column_checks: u64,
}

/// Rows are outputs parked LOW and columns are inputs with pull-ups, so that
/// any key press changes a PORTB input level.
pub fn idle_config(board: &mut Board) {
    for r in 0..4 {
        board.configure(row_pin(r), PinConfig::output(Level::Low));
    }
    for c in 0..4 {
        board.configure(col_pin(c), PinConfig::input(true));
    }
}

pub fn col_scan(
    board: &mut Board,
    strategy: ScanStrategy,
    counters: &mut ScanCounters,
) -> Option<u8> {
    for c in 0..4u8 {
        let pin = col_pin(c);
        counters.column_checks += 1;
        let level = match strategy {
            ScanStrategy::PerPin => {
                board.configure(pin, PinConfig::input(true));
                let level = board.sample_column(pin);
                board.configure(pin, PinConfig::output(Level::High));
                level
            }
            ScanStrategy::Conventional => board.sample_column(pin),
        };
        if level == Level::Low {
            return Some(c);
        }
    }
    None
}

/// One pass over all four rows. Returns the first pressed position in
/// row-major order and leaves the keypad in the idle configuration.
pub fn row_scan(
    board: &mut Board,
    strategy: ScanStrategy,
    counters: &mut ScanCounters,
) -> Option<ScanCursor> {
    counters.scans += 1;
    for r in 0..4 {
        board.configure(row_pin(r), PinConfig::output(Level::High));
    }
    for c in 0..4 {
        let cfg = match strategy {
            ScanStrategy::PerPin => PinConfig::output(Level::High),
            ScanStrategy::Conventional => PinConfig::input(true),
        };
        board.configure(col_pin(c), cfg);
    }
    let mut cursor = ScanCursor::default();
    let mut found = None;
    for r in 0..4u8 {
        cursor.row = r;
        board
            .drive(row_pin(r), Level::Low)
            .expect("rows are outputs");
        let hit = col_scan(board, strategy, counters);
        board
            .drive(row_pin(r), Level::High)
            .expect("rows are outputs");
        if let Some(c) = hit {
            cursor.col = c;
            cursor.working_value = c;
            found = Some(cursor);
            break;
        }
        cursor.key_index += 4;
    }
    idle_config(board);
    found
}

pub fn find_key(cursor: &ScanCursor) -> KeySymbol {
    let index = cursor.key_index + cursor.working_value;
    keymap(KeyPosition::new(index / 4, index % 4))
}

/// Accepts a position once it has read the same on every scan for at least
/// the debounce window; a new key needs a scan with nothing pressed first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Debouncer {
    window_us: u64,
    candidate: Option<(KeyPosition, u64)>,
    awaiting_release: bool,
}

impl Debouncer {
    pub fn new(window_us: u64) -> Self {
        Self {
            window_us,
            candidate: None,
            awaiting_release: false,
        }
    }

    pub fn reset(&mut self) {
        self.candidate = None;
        self.awaiting_release = false;
    }

    pub fn update(&mut self, raw: Option<KeyPosition>, now: u64) -> Option<KeyPosition> {
        let Some(pos) = raw else {
            self.reset();
            return None;
        };
        if self.awaiting_release {
            return None;
        }
        match self.candidate {
            Some((held, since)) if held == pos => {
                if now.saturating_sub(since) >= self.window_us {
                    self.candidate = None;
                    self.awaiting_release = true;
                    Some(pos)
                } else {
                    None
                }
            }
            _ => {
                self.candidate = Some((pos, now));
                if self.window_us == 0 {
                    self.candidate = None;
                    self.awaiting_release = true;
                    Some(pos)
                } else {
                    None
                }
            }
        }
    }
}
