//! HD44780-compatible character LCD controller, as seen from its bus pins.
//!
//! The controller captures DB7..DB4 and RS on each falling edge of E. In
//! 4-bit mode two consecutive captures form one byte, high nibble first.
//! Before 4-bit mode is selected the controller is in its power-on 8-bit
//! mode, where each capture is a complete byte with the low nibble reading 0.
//! This accepts both the minimal `0x2` switch and the longer
//! `0x3, 0x3, 0x3, 0x2` initialisation.
//!
//! The panel is 20×2: row 0 shows DDRAM 0x00..0x13 and row 1 shows
//! 0x40..0x53.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const COLS: usize = 20;
pub const ROWS: usize = 2;
pub const ROW_BASE: [u8; ROWS] = [0x00, 0x40];
/// Addresses per row band.
pub const ROW_SPAN: u8 = 0x28;
/// Rendering of non-printable DDRAM bytes.
pub const UNPRINTABLE: char = '·';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegisterSelect {
    #[serde(rename = "C")]
    Command,
    #[serde(rename = "D")]
    Data,
}

impl RegisterSelect {
    pub fn letter(self) -> char {
        match self {
            RegisterSelect::Command => 'C',
            RegisterSelect::Data => 'D',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LcdBusSample {
    pub rs: RegisterSelect,
    /// DB7..DB4
    pub nibble: u8,
    pub t_us: u64,
}

/// One decoded bus transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_us: u64,
    pub rs: RegisterSelect,
    pub byte: u8,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} RS={} byte=0x{:02X}",
            self.t_us,
            self.rs.letter(),
            self.byte
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LcdDiagnostic {
    /// RS changed between the two nibbles of one byte; the byte was dropped.
    ProtocolViolation {
        t_us: u64,
    },
    UnsupportedCommand {
        t_us: u64,
        byte: u8,
    },
    InvalidAddress {
        t_us: u64,
        address: u8,
    },
    DataBeforeInit {
        t_us: u64,
        byte: u8,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LcdFrame {
    pub rows: [String; ROWS],
}

impl LcdFrame {
    pub fn blank() -> Self {
        Self {
            rows: [" ".repeat(COLS), " ".repeat(COLS)],
        }
    }

    pub fn row(&self, r: usize) -> &str {
        &self.rows[r]
    }

    /// Pads (or truncates) `text` to exactly one row.
    pub fn pad(text: &str) -> String {
        let mut s: String = text.chars().take(COLS).collect();
        let n = s.chars().count();
        s.extend(std::iter::repeat_n(' ', COLS - n));
        s
    }
}

impl fmt::Display for LcdFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "+{}+", "-".repeat(COLS))?;
        for row in &self.rows {
            writeln!(f, "|{row}|")?;
        }
        write!(f, "+{}+", "-".repeat(COLS))
    }
}

pub fn render_byte(b: u8) -> char {
    if (0x20..=0x7E).contains(&b) {
        b as char
    } else {
        UNPRINTABLE
    }
}

/// Maps a DDRAM address to its storage slot, or `None` if unmapped.
fn ddram_slot(addr: u8) -> Option<usize> {
    match addr {
        0x00..=0x27 => Some(addr as usize),
        0x40..=0x67 => Some(addr as usize - 0x40 + 0x28),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcdState {
    pub four_bit_mode: bool,
    pub two_lines: bool,
    pub display_on: bool,
    pub entry_increment: bool,
    pub ddram: [u8; 80],
    pub address_counter: u8,
    pub pending_nibble: Option<(RegisterSelect, u8)>,
}

impl Default for LcdState {
    /// Power-on reset: 8-bit, one line, display off, increment.
    fn default() -> Self {
        Self {
            four_bit_mode: false,
            two_lines: false,
            display_on: false,
            entry_increment: true,
            ddram: [b' '; 80],
            address_counter: 0,
            pending_nibble: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Hd44780 {
    state: LcdState,
    initialized: bool,
    samples: u64,
    trace: Vec<TraceRecord>,
    record_trace: bool,
    diagnostics: Vec<LcdDiagnostic>,
}

impl Hd44780 {
    pub fn new() -> Self {
        Self {
            record_trace: true,
            ..Self::default()
        }
    }

    /// Rebuilds a controller by executing a decoded trace byte by byte.
    pub fn from_trace(trace: &[TraceRecord]) -> Self {
        let mut lcd = Self::new();
        for rec in trace {
            lcd.dispatch(rec.rs, rec.byte, rec.t_us);
        }
        lcd
    }

    /// Disables trace recording. Used where the history would only grow.
    pub fn set_trace_recording(&mut self, on: bool) {
        self.record_trace = on;
        if !on {
            self.trace.clear();
        }
    }

    pub fn state(&self) -> &LcdState {
        &self.state
    }

    pub fn diagnostics(&self) -> &[LcdDiagnostic] {
        &self.diagnostics
    }

    pub fn sample_count(&self) -> u64 {
        self.samples
    }

    pub fn enable_falling_edge(&mut self, sample: LcdBusSample) {
        self.samples += 1;
        let nibble = sample.nibble & 0x0F;
        if !self.state.four_bit_mode {
            // 8-bit mode with DB3..DB0 unconnected
            self.dispatch(sample.rs, nibble << 4, sample.t_us);
            return;
        }
        match self.state.pending_nibble.take() {
            None => self.state.pending_nibble = Some((sample.rs, nibble)),
            Some((rs, high)) if rs == sample.rs => {
                self.dispatch(rs, (high << 4) | nibble, sample.t_us);
            }
            Some(_) => self
                .diagnostics
                .push(LcdDiagnostic::ProtocolViolation { t_us: sample.t_us }),
        }
    }

    fn dispatch(&mut self, rs: RegisterSelect, byte: u8, t_us: u64) {
        if self.record_trace {
            self.trace.push(TraceRecord { t_us, rs, byte });
        }
        match rs {
            RegisterSelect::Command => self.execute_at(byte, t_us),
            RegisterSelect::Data => self.write_data_at(byte, t_us),
        }
    }

    pub fn execute_command(&mut self, byte: u8) {
        self.execute_at(byte, 0);
    }

    fn execute_at(&mut self, byte: u8, t_us: u64) {
        let st = &mut self.state;
        match byte {
            0x01 => {
                st.ddram = [b' '; 80];
                st.address_counter = 0;
                st.entry_increment = true;
            }
            0x02 | 0x03 => st.address_counter = 0,
            0x04..=0x07 => {
                st.entry_increment = byte & 0x02 != 0;
                if byte & 0x01 != 0 {
                    // display shift is not emulated
                    self.diagnostics
                        .push(LcdDiagnostic::UnsupportedCommand { t_us, byte });
                }
            }
            0x08..=0x0F => st.display_on = byte & 0x04 != 0,
            0x20..=0x3F => {
                st.four_bit_mode = byte & 0x10 == 0;
                st.two_lines = byte & 0x08 != 0;
                st.pending_nibble = None;
                self.initialized = true;
            }
            0x80..=0xFF => {
                let addr = byte & 0x7F;
                if ddram_slot(addr).is_some() {
                    st.address_counter = addr;
                } else {
                    self.diagnostics.push(LcdDiagnostic::InvalidAddress {
                        t_us,
                        address: addr,
                    });
                }
            }
            _ => self
                .diagnostics
                .push(LcdDiagnostic::UnsupportedCommand { t_us, byte }),
        }
    }

    pub fn write_data(&mut self, byte: u8) {
        self.write_data_at(byte, 0);
    }

    fn write_data_at(&mut self, byte: u8, t_us: u64) {
        if !self.initialized {
            self.diagnostics
                .push(LcdDiagnostic::DataBeforeInit { t_us, byte });
        }
        let st = &mut self.state;
        let ac = st.address_counter;
        st.ddram[ddram_slot(ac).expect("address counter is always valid")] = byte;
        let band = if ac >= 0x40 { 0x40 } else { 0x00 };
        let offset = ac - band;
        let next = if st.entry_increment {
            (offset + 1) % ROW_SPAN
        } else {
            (offset + ROW_SPAN - 1) % ROW_SPAN
        };
        st.address_counter = band + next;
    }

    pub fn frame(&self) -> LcdFrame {
        let mut frame = LcdFrame::blank();
        if !self.state.display_on {
            return frame;
        }
        for (r, row) in frame.rows.iter_mut().enumerate() {
            if r == 1 && !self.state.two_lines {
                continue;
            }
            let base = ddram_slot(ROW_BASE[r]).unwrap();
            *row = self.state.ddram[base..base + COLS]
                .iter()
                .map(|&b| render_byte(b))
                .collect();
        }
        frame
    }

    pub fn bus_trace(&self) -> &[TraceRecord] {
        &self.trace
    }
}

/// One record per line: `t_us RS=<C|D> byte=0xHH`.
pub fn format_trace(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for rec in trace {
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

/// JSON array of `{"t_us":N,"rs":"C"|"D","byte":N}` objects.
pub fn format_trace_json(trace: &[TraceRecord]) -> String {
    serde_json::to_string(trace).expect("trace serialises")
}

pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || format!("line {}: malformed trace record `{line}`", i + 1);
            let mut parts = line.split_whitespace();
            let t_us = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let rs = match parts.next() {
                Some("RS=C") => RegisterSelect::Command,
                Some("RS=D") => RegisterSelect::Data,
                _ => return Err(bad()),
            };
            let byte = parts
                .next()
                .and_then(|s| s.strip_prefix("byte=0x"))
                .filter(|h| h.len() == 2)
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(bad)?;
            if parts.next().is_some() {
                return Err(bad());
            }
            Ok(TraceRecord { t_us, rs, byte })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use RegisterSelect::{Command as C, Data as D};

    fn feed(lcd: &mut Hd44780, rs: RegisterSelect, nibble: u8) {
        let t = lcd.sample_count();
        lcd.enable_falling_edge(LcdBusSample {
            rs,
            nibble,
            t_us: t,
        });
    }

    fn send(lcd: &mut Hd44780, rs: RegisterSelect, byte: u8) {
        feed(lcd, rs, byte >> 4);
        feed(lcd, rs, byte & 0x0F);
    }

    fn booted() -> Hd44780 {
        let mut lcd = Hd44780::new();
        feed(&mut lcd, C, 0x2);
        send(&mut lcd, C, 0x28);
        send(&mut lcd, C, 0x0C);
        send(&mut lcd, C, 0x06);
        send(&mut lcd, C, 0x01);
        lcd
    }

    #[test]
    fn minimal_init_selects_four_bit_two_lines() {
        let mut lcd = Hd44780::new();
        feed(&mut lcd, C, 0x2);
        assert!(lcd.state().four_bit_mode);
        assert!(!lcd.state().two_lines);
        send(&mut lcd, C, 0x28);
        assert!(lcd.state().four_bit_mode && lcd.state().two_lines);
        let bytes: Vec<u8> = lcd.bus_trace().iter().map(|r| r.byte).collect();
        assert_eq!(bytes, [0x20, 0x28]);
    }

    #[test]
    fn long_init_is_tolerated() {
        let mut lcd = Hd44780::new();
        for n in [0x3, 0x3, 0x3, 0x2] {
            feed(&mut lcd, C, n);
        }
        send(&mut lcd, C, 0x28);
        assert!(lcd.state().four_bit_mode && lcd.state().two_lines);
        assert!(lcd.diagnostics().is_empty());
    }

    #[test]
    fn data_nibbles_assemble_a_byte() {
        let mut lcd = booted();
        feed(&mut lcd, D, 0x4);
        assert_eq!(lcd.state().pending_nibble, Some((D, 0x4)));
        feed(&mut lcd, D, 0x8);
        assert_eq!(lcd.state().ddram[0], b'H');
        assert_eq!(lcd.frame().row(0), "H                   ");
    }

    #[test]
    fn rs_change_mid_byte_drops_it() {
        let mut lcd = booted();
        let before = lcd.state().clone();
        feed(&mut lcd, D, 0x4);
        feed(&mut lcd, C, 0x8);
        assert_eq!(lcd.state(), &before);
        assert!(matches!(
            lcd.diagnostics().last(),
            Some(LcdDiagnostic::ProtocolViolation { .. })
        ));
        // the next byte pairs normally again
        send(&mut lcd, D, b'x');
        assert_eq!(lcd.state().ddram[0], b'x');
    }

    #[test]
    fn clear_blanks_everything() {
        let mut lcd = booted();
        for b in b"hello" {
            send(&mut lcd, D, *b);
        }
        send(&mut lcd, C, 0x01);
        assert_eq!(lcd.frame(), LcdFrame::blank());
        assert_eq!(lcd.state().address_counter, 0);
    }

    #[test]
    fn set_address_row_one() {
        let mut lcd = booted();
        send(&mut lcd, C, 0x80 | 0x40);
        assert_eq!(lcd.state().address_counter, 0x40);
        send(&mut lcd, D, b'*');
        assert_eq!(lcd.frame().row(1), "*                   ");
    }

    #[test]
    fn invalid_address_is_ignored() {
        let mut lcd = booted();
        send(&mut lcd, C, 0x80 | 0x30);
        assert_eq!(lcd.state().address_counter, 0);
        assert!(matches!(
            lcd.diagnostics().last(),
            Some(LcdDiagnostic::InvalidAddress { address: 0x30, .. })
        ));
    }

    #[test]
    fn writes_past_column_twenty_go_off_screen() {
        let mut lcd = booted();
        for i in 0..21u8 {
            send(&mut lcd, D, b'a' + i);
        }
        assert_eq!(lcd.state().ddram[0x14], b'a' + 20);
        assert_eq!(lcd.frame().row(0), "abcdefghijklmnopqrst");
        assert_eq!(lcd.state().address_counter, 0x15);
    }

    #[test]
    fn row_band_wraps() {
        let mut lcd = booted();
        send(&mut lcd, C, 0x80 | 0x27);
        send(&mut lcd, D, b'z');
        assert_eq!(lcd.state().address_counter, 0x00);
        send(&mut lcd, C, 0x80 | 0x67);
        send(&mut lcd, D, b'z');
        assert_eq!(lcd.state().address_counter, 0x40);
    }

    #[test]
    fn decrement_entry_mode() {
        let mut lcd = booted();
        send(&mut lcd, C, 0x04);
        send(&mut lcd, C, 0x80 | 0x05);
        send(&mut lcd, D, b'b');
        send(&mut lcd, D, b'a');
        assert_eq!(lcd.state().address_counter, 0x03);
        assert_eq!(lcd.frame().row(0), "    ab              ");
        send(&mut lcd, C, 0x80);
        send(&mut lcd, D, b'q');
        assert_eq!(lcd.state().address_counter, 0x27);
    }

    #[test]
    fn unprintable_bytes_render_as_dot() {
        let mut lcd = booted();
        send(&mut lcd, D, 0x07);
        assert_eq!(lcd.frame().row(0).chars().next(), Some(UNPRINTABLE));
        assert_eq!(lcd.state().ddram[0], 0x07);
    }

    #[test]
    fn unsupported_command_changes_nothing() {
        let mut lcd = booted();
        let before = lcd.state().clone();
        send(&mut lcd, C, 0x18);
        send(&mut lcd, C, 0x40);
        assert_eq!(lcd.state(), &before);
        assert_eq!(lcd.diagnostics().len(), 2);
    }

    #[test]
    fn trace_replay_reproduces_frame() {
        let mut lcd = booted();
        for b in b"Enter Password:" {
            send(&mut lcd, D, *b);
        }
        send(&mut lcd, C, 0xC0);
        send(&mut lcd, D, b'*');
        let replayed = Hd44780::from_trace(lcd.bus_trace());
        assert_eq!(replayed.frame(), lcd.frame());
        assert!(Hd44780::new().bus_trace().is_empty());
    }

    #[test]
    fn trace_text_format() {
        let trace = [
            TraceRecord {
                t_us: 0,
                rs: C,
                byte: 0x20,
            },
            TraceRecord {
                t_us: 1712,
                rs: D,
                byte: b'E',
            },
        ];
        let text = format_trace(&trace);
        assert_eq!(text, "0 RS=C byte=0x20\n1712 RS=D byte=0x45\n");
        assert_eq!(parse_trace(&text).unwrap(), trace);
        assert_eq!(
            format_trace_json(&trace),
            r#"[{"t_us":0,"rs":"C","byte":32},{"t_us":1712,"rs":"D","byte":69}]"#
        );
        assert!(parse_trace("12 RS=X byte=0x20").is_err());
    }
}
