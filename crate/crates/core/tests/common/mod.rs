//! Independent reference models shared by the integration suites.

#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

use locksim_core::board::Board;
use locksim_core::config::LockConfig;
use locksim_core::eeprom::{EepromImage, EEPROM_SIZE};
use locksim_core::firmware::{Firmware, FirmwareMode, LogicState};
use locksim_core::hd44780::{Hd44780, LcdBusSample, LcdFrame, RegisterSelect};
use locksim_core::keypad::KeySymbol;
use locksim_core::sim::Simulation;

/// Two 40-cell lines and a (line, cell) cursor. Knows only the commands the
/// lock firmware uses.
#[derive(Debug, Clone)]
pub struct NaiveLcd {
    lines: [[u8; 40]; 2],
    line: usize,
    cell: usize,
    forward: bool,
    on: bool,
    two_lines: bool,
}

impl NaiveLcd {
    /// State right after the lone 0x2 nibble that selects 4-bit mode.
    pub fn after_bus_width_nibble() -> Self {
        Self {
            lines: [[b' '; 40]; 2],
            line: 0,
            cell: 0,
            forward: true,
            on: false,
            two_lines: false,
        }
    }

    pub fn command(&mut self, c: u8) {
        if c == 0x01 {
            self.lines = [[b' '; 40]; 2];
            self.line = 0;
            self.cell = 0;
            self.forward = true;
        } else if c == 0x02 || c == 0x03 {
            self.line = 0;
            self.cell = 0;
        } else if c == 0x04 || c == 0x06 {
            self.forward = c == 0x06;
        } else if (0x08..0x10).contains(&c) {
            self.on = c & 0b100 != 0;
        } else if c == 0x20 || c == 0x28 {
            self.two_lines = c == 0x28;
        } else if c >= 0x80 {
            let a = (c & 0x7F) as usize;
            if a < 40 {
                self.line = 0;
                self.cell = a;
            } else if (64..104).contains(&a) {
                self.line = 1;
                self.cell = a - 64;
            } else {
                panic!("generator produced an unmapped address {a:#x}");
            }
        } else {
            panic!("generator produced unsupported command {c:#x}");
        }
    }

    pub fn data(&mut self, d: u8) {
        self.lines[self.line][self.cell] = d;
        self.cell = if self.forward {
            if self.cell == 39 {
                0
            } else {
                self.cell + 1
            }
        } else if self.cell == 0 {
            39
        } else {
            self.cell - 1
        };
    }

    pub fn rows(&self) -> [String; 2] {
        let show = |line: usize| -> String {
            let visible = self.on && (line == 0 || self.two_lines);
            (0..20)
                .map(|i| {
                    if !visible {
                        return ' ';
                    }
                    let b = self.lines[line][i];
                    if (0x20..0x7F).contains(&b) {
                        b as char
                    } else {
                        '·'
                    }
                })
                .collect()
        };
        [show(0), show(1)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcdOp {
    Command(u8),
    Data(u8),
}

pub fn random_lcd_op<R: rand::Rng>(rng: &mut R) -> LcdOp {
    match rng.random_range(0..10) {
        0 => LcdOp::Command(0x01),
        1 => LcdOp::Command(*[0x02u8, 0x03].get(rng.random_range(0..2)).unwrap()),
        2 => LcdOp::Command(if rng.random_bool(0.5) { 0x06 } else { 0x04 }),
        3 => LcdOp::Command(0x08 | rng.random_range(0..8)),
        4 => LcdOp::Command(if rng.random_bool(0.8) { 0x28 } else { 0x20 }),
        5 => {
            let a = rng.random_range(0..80u8);
            LcdOp::Command(0x80 | if a < 40 { a } else { a - 40 + 0x40 })
        }
        _ => LcdOp::Data(if rng.random_bool(0.9) {
            rng.random_range(0x20..0x7F)
        } else {
            rng.random()
        }),
    }
}

/// Drives ops nibble by nibble over the bus, after the 4-bit handshake.
pub fn lcd_over_bus(ops: &[LcdOp]) -> Hd44780 {
    let mut lcd = Hd44780::new();
    let mut t = 0;
    let mut edge = |lcd: &mut Hd44780, rs, nibble| {
        t += 50;
        lcd.enable_falling_edge(LcdBusSample {
            rs,
            nibble,
            t_us: t,
        });
    };
    edge(&mut lcd, RegisterSelect::Command, 0x2);
    for op in ops {
        let (rs, b) = match *op {
            LcdOp::Command(c) => (RegisterSelect::Command, c),
            LcdOp::Data(d) => (RegisterSelect::Data, d),
        };
        edge(&mut lcd, rs, b >> 4);
        edge(&mut lcd, rs, b & 0x0F);
    }
    lcd
}

pub fn naive_frame(ops: &[LcdOp]) -> [String; 2] {
    let mut m = NaiveLcd::after_bus_width_nibble();
    for op in ops {
        match *op {
            LcdOp::Command(c) => m.command(c),
            LcdOp::Data(d) => m.data(d),
        }
    }
    m.rows()
}

pub fn frame_rows(f: &LcdFrame) -> [String; 2] {
    [f.row(0).to_string(), f.row(1).to_string()]
}

/// Reference data EEPROM with the arming rule as an explicit table:
/// 0 = idle, 1 = 0xAA seen, 2 = armed.
#[derive(Debug, Clone)]
pub struct RefEeprom {
    pub bytes: [u8; EEPROM_SIZE],
    arming: u8,
}

#[derive(Debug, Clone, Copy)]
pub enum EepromOp {
    Control(u8),
    Write(usize, u8),
    Read(usize),
}

impl RefEeprom {
    pub fn new(bytes: [u8; EEPROM_SIZE]) -> Self {
        Self { bytes, arming: 0 }
    }

    /// Returns whether a write was accepted.
    pub fn apply(&mut self, op: EepromOp) -> bool {
        match op {
            EepromOp::Control(v) => {
                self.arming = match (self.arming, v) {
                    (0, 0xAA) => 1,
                    (1, 0x55) => 2,
                    _ => 0,
                };
                false
            }
            EepromOp::Write(addr, v) => {
                let armed = self.arming == 2;
                self.arming = 0;
                if armed && addr < EEPROM_SIZE {
                    self.bytes[addr] = v;
                    true
                } else {
                    false
                }
            }
            EepromOp::Read(_) => false,
        }
    }
}

pub fn random_eeprom_op<R: rand::Rng>(rng: &mut R) -> EepromOp {
    let addr = |rng: &mut R| {
        if rng.random_bool(0.95) {
            rng.random_range(0..EEPROM_SIZE)
        } else {
            rng.random_range(EEPROM_SIZE..300)
        }
    };
    match rng.random_range(0..10) {
        0..=2 => EepromOp::Control(0xAA),
        3..=4 => EepromOp::Control(0x55),
        5 => EepromOp::Control(rng.random()),
        6..=8 => {
            let a = addr(rng);
            EepromOp::Write(a, rng.random())
        }
        _ => EepromOp::Read(addr(rng)),
    }
}

pub fn sim() -> Simulation {
    sim_with(LockConfig::default(), EepromImage::factory())
}

pub fn sim_with(config: LockConfig, image: EepromImage) -> Simulation {
    let mut s = Simulation::new(config, image);
    s.advance_ms(10);
    s
}

/// Taps each symbol for 60 ms, one every 120 ms.
pub fn type_keys(s: &mut Simulation, keys: &str) {
    for c in keys.chars() {
        let sym = KeySymbol::from_char(c).unwrap();
        let t = s.now_us();
        s.tap(sym, t, 60_000).unwrap();
        s.advance_ms(120);
    }
}

pub fn image_with_password(pw: &[u8]) -> EepromImage {
    let mut img = EepromImage::factory();
    img.0[..pw.len()].copy_from_slice(pw);
    img
}

#[derive(Debug, Clone)]
pub struct Counterexample {
    pub inputs: Vec<KeySymbol>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub distinct_states: usize,
    pub transitions: u64,
    pub max_depth: usize,
    pub counterexamples: Vec<Counterexample>,
}

#[derive(Clone)]
struct Node {
    board: Board,
    firmware: Firmware,
    now: u64,
    inputs: Vec<KeySymbol>,
}

const GAP_US: u64 = 1_000_000;

/// Breadth-first search over every input sequence up to `max_len` keys,
/// with one second between keys. States that agree on the controller's
/// logical state and the stored password are merged, which keeps the
/// search exhaustive: their futures are identical.
pub fn model_check(
    alphabet: &[KeySymbol],
    password: &[u8],
    config: &LockConfig,
    max_len: usize,
) -> CheckReport {
    let n = config.password_len;
    let mut board = Board::new(config, image_with_password(password), 0);
    board.lcd.set_trace_recording(false);
    let mut firmware = Firmware::new(config);
    firmware.boot(&mut board, 0);

    let key = |node: &Node| -> (LogicState, Vec<u8>) {
        (
            node.firmware.logic_state(node.now),
            node.board.eeprom.image().0[..n].to_vec(),
        )
    };
    let root = Node {
        board,
        firmware,
        now: 0,
        inputs: Vec::new(),
    };
    let mut seen = HashSet::new();
    seen.insert(key(&root));
    let mut queue = VecDeque::from([root]);
    let mut report = CheckReport::default();

    while let Some(node) = queue.pop_front() {
        if node.inputs.len() == max_len {
            continue;
        }
        for &sym in alphabet {
            let mut next = node.clone();
            next.inputs.push(sym);
            report.transitions += 1;
            let before_mode = node.firmware.mode();
            let before_lock = node.firmware.lock_output();
            let entered = node.firmware.buffer().bytes();
            let stored = node.board.eeprom.image().0[..n].to_vec();

            next.firmware.handle_symbol(&mut next.board, sym, next.now);
            let opened_now = !before_lock && next.firmware.lock_output();
            next.now += GAP_US;
            next.firmware.update_timers(&mut next.board, next.now);

            let lock = next.firmware.lock_output();
            let mut fail = |reason: String| {
                report.counterexamples.push(Counterexample {
                    inputs: next.inputs.clone(),
                    reason,
                })
            };
            if lock && next.firmware.mode() != FirmwareMode::Unlocked {
                fail(format!("lock open in {}", next.firmware.mode()));
            }
            if opened_now {
                let legit = sym == KeySymbol::Enter
                    && matches!(before_mode, FirmwareMode::Scanning | FirmwareMode::Entering)
                    && entered.len() == n
                    && entered.iter().zip(&stored).all(|(a, b)| a == b);
                if !legit {
                    fail(format!(
                        "opened on {sym} from {before_mode} with entry {:?}",
                        String::from_utf8_lossy(&entered)
                    ));
                }
            }
            if !before_lock && lock && !opened_now {
                fail("opened by a timer".into());
            }

            report.max_depth = report.max_depth.max(next.inputs.len());
            if seen.insert(key(&next)) {
                queue.push_back(next);
            }
        }
    }
    report.distinct_states = seen.len();
    report
}

/// Plain depth-first enumeration without merging, for cross-checking the
/// merged search on shorter sequences. Returns (sequences, violations).
pub fn brute_force(
    alphabet: &[KeySymbol],
    password: &[u8],
    config: &LockConfig,
    max_len: usize,
) -> (u64, u64) {
    let n = config.password_len;
    let mut board = Board::new(config, image_with_password(password), 0);
    board.lcd.set_trace_recording(false);
    let mut firmware = Firmware::new(config);
    firmware.boot(&mut board, 0);
    let root = Node {
        board,
        firmware,
        now: 0,
        inputs: Vec::new(),
    };
    let mut sequences = 0;
    let mut violations = 0;
    let mut stack = vec![root];
    while let Some(node) = stack.pop() {
        sequences += 1;
        if node.inputs.len() == max_len {
            continue;
        }
        for &sym in alphabet {
            let mut next = node.clone();
            next.inputs.push(sym);
            let entered = node.firmware.buffer().bytes();
            let stored = node.board.eeprom.image().0[..n].to_vec();
            let was_locked = !node.firmware.lock_output();
            next.firmware.handle_symbol(&mut next.board, sym, next.now);
            next.now += GAP_US;
            next.firmware.update_timers(&mut next.board, next.now);
            if was_locked
                && next.firmware.lock_output()
                && !(sym == KeySymbol::Enter && entered == stored)
            {
                violations += 1;
            }
            stack.push(next);
        }
    }
    (sequences, violations)
}

pub fn check_config() -> LockConfig {
    LockConfig {
        password_len: 3,
        alarm_duration_ms: 2_000,
        ..LockConfig::default()
    }
}
