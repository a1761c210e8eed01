//! Bit-banged 4-bit LCD driver.

use crate::board::Board;
use crate::gpio::Level;
use crate::hd44780::{RegisterSelect, COLS, ROW_BASE};

const E_PULSE_US: u64 = 1;
const SHORT_DELAY_US: u64 = 40;
const LONG_DELAY_US: u64 = 1_640;

fn set(board: &mut Board, pin: crate::gpio::PinId, level: Level) {
    board
        .drive(pin, level)
        .expect("LCD pins are configured as outputs");
}

fn put_nibble(board: &mut Board, nibble: u8) {
    let data = board.pins().lcd_data;
    for (bit, pin) in data.into_iter().enumerate() {
        set(board, pin, Level::from(nibble & (1 << bit) != 0));
    }
}

fn rs_level(rs: RegisterSelect) -> Level {
    match rs {
        RegisterSelect::Command => Level::Low,
        RegisterSelect::Data => Level::High,
    }
}

/// A lone nibble transfer, used only before 4-bit mode is active.
pub fn send_nibble(board: &mut Board, rs: RegisterSelect, nibble: u8) {
    let (e, rs_pin) = (board.pins().lcd_e, board.pins().lcd_rs);
    set(board, e, Level::Low);
    set(board, rs_pin, rs_level(rs));
    set(board, e, Level::High);
    put_nibble(board, nibble);
    board.delay_us(E_PULSE_US);
    set(board, e, Level::Low);
}

/// Sends one byte as two nibbles:
///
/// 1. E low
/// 2. RS high for data, low for a command
/// 3. E high
/// 4. high nibble on DB4..DB7
/// 5. E low
/// 6. E high
/// 7. low nibble on DB4..DB7
/// 8. E low, and E stays low until the next byte
pub fn send_word(board: &mut Board, rs: RegisterSelect, byte: u8) {
    let (e, rs_pin) = (board.pins().lcd_e, board.pins().lcd_rs);
    set(board, e, Level::Low);
    set(board, rs_pin, rs_level(rs));
    set(board, e, Level::High);
    put_nibble(board, byte >> 4);
    board.delay_us(E_PULSE_US);
    set(board, e, Level::Low);
    set(board, e, Level::High);
    put_nibble(board, byte & 0x0F);
    board.delay_us(E_PULSE_US);
    set(board, e, Level::Low);
}

pub fn command(board: &mut Board, byte: u8) {
    send_word(board, RegisterSelect::Command, byte);
    let wait = if matches!(byte, 0x01..=0x03) {
        LONG_DELAY_US
    } else {
        SHORT_DELAY_US
    };
    board.delay_us(wait);
}

pub fn data(board: &mut Board, byte: u8) {
    send_word(board, RegisterSelect::Data, byte);
    board.delay_us(SHORT_DELAY_US);
}

/// 0x20 then 0x28: 4-bit interface, two lines. Then display on, increment
/// entry mode, clear.
pub fn init(board: &mut Board) {
    send_nibble(board, RegisterSelect::Command, 0x2);
    board.delay_us(SHORT_DELAY_US);
    command(board, 0x28);
    command(board, 0x0C);
    command(board, 0x06);
    command(board, 0x01);
}

pub fn set_address(board: &mut Board, addr: u8) {
    command(board, 0x80 | addr);
}

pub fn write_at(board: &mut Board, row: usize, col: usize, text: &str) {
    set_address(board, ROW_BASE[row] + col as u8);
    for b in text.bytes() {
        data(board, b);
    }
}

/// Clears the display and writes up to two lines.
pub fn show(board: &mut Board, row0: &str, row1: &str) {
    command(board, 0x01);
    for b in row0.bytes() {
        data(board, b);
    }
    if !row1.is_empty() {
        write_at(board, 1, 0, row1);
    }
}

/// Rewrites a whole row, blank-padded to the panel width.
pub fn replace_row(board: &mut Board, row: usize, text: &str) {
    let padded = format!("{text:<COLS$}");
    write_at(board, row, 0, &padded[..COLS]);
}
