//! The lock controller, expressed as a state machine over the board.
//!
//! Each call to [`Firmware::tick`] is one pass of the main loop: while asleep
//! it only checks for a PORTB change; otherwise it services timers, scans the
//! keypad once, feeds the debouncer and handles at most one accepted key.

pub mod lcd;
pub mod password;
pub mod scan;

use serde::{Deserialize, Serialize};

use crate::board::Board;
use crate::config::{LockConfig, PinMap, ScanStrategy};
use crate::gpio::{Level, PinConfig, PinId, PortMark};
use crate::keypad::{KeyPosition, KeySymbol};

use password::{
    read_password_from_eeprom, verify_password, write_password_to_eeprom, AttemptCounter,
    PasswordBuffer,
};
use scan::{Debouncer, ScanCounters, ScanCursor};

pub const PROMPT: &str = "Enter Password:";
pub const UNLOCKED_MSG: &str = "verify successfully";
pub const WRONG_MSG: &str = "Wrong Password!";
pub const CHANGE_PROMPT: &str = "New Password:";
pub const CHANGED_MSG: &str = "Password Changed";
pub const REJECTED_MSG: &str = "Change Rejected";
pub const ALARM_MSG: &str = "ALARM!";

/// Buzzer toggles every 250 ms: a 2 Hz pattern.
const BUZZER_HALF_PERIOD_US: u64 = 250_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FirmwareMode {
    Boot,
    Sleeping,
    Scanning,
    Entering,
    Verifying,
    Unlocked,
    ChangeEntry,
    Alarm,
}

impl FirmwareMode {
    pub const ALL: [FirmwareMode; 8] = [
        FirmwareMode::Boot,
        FirmwareMode::Sleeping,
        FirmwareMode::Scanning,
        FirmwareMode::Entering,
        FirmwareMode::Verifying,
        FirmwareMode::Unlocked,
        FirmwareMode::ChangeEntry,
        FirmwareMode::Alarm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FirmwareMode::Boot => "BOOT",
            FirmwareMode::Sleeping => "SLEEPING",
            FirmwareMode::Scanning => "SCANNING",
            FirmwareMode::Entering => "ENTERING",
            FirmwareMode::Verifying => "VERIFYING",
            FirmwareMode::Unlocked => "UNLOCKED",
            FirmwareMode::ChangeEntry => "CHANGE_ENTRY",
            FirmwareMode::Alarm => "ALARM",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }

    /// Locked, waiting for a password.
    fn is_locked_entry(self) -> bool {
        matches!(self, FirmwareMode::Scanning | FirmwareMode::Entering)
    }
}

impl std::fmt::Display for FirmwareMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FirmwareStats {
    pub scans_executed: u64,
    pub column_checks: u64,
    pub symbols_accepted: u64,
    pub verifications: u64,
    pub sleeps: u64,
    pub wakes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Alarm {
    until: Option<u64>,
    next_toggle: u64,
    level: Level,
}

/// Everything that determines the controller's future behaviour, with
/// timers expressed relative to a reference instant.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LogicState {
    pub mode: FirmwareMode,
    pub buffer: Vec<KeySymbol>,
    pub attempts: u8,
    pub lock_output: bool,
    pub buzzer_output: bool,
    pub alarm_remaining_us: Option<u64>,
    pub message_remaining_us: Option<u64>,
}

#[derive(Debug, Clone)]
struct Settings {
    pins: PinMap,
    strategy: ScanStrategy,
    idle_timeout_us: u64,
    alarm_duration_us: u64,
    alarm_latch: bool,
    message_hold_us: u64,
    password_len: usize,
}

#[derive(Debug, Clone)]
pub struct Firmware {
    settings: Settings,
    mode: FirmwareMode,
    buffer: PasswordBuffer,
    attempts: AttemptCounter,
    debouncer: Debouncer,
    idle_since: u64,
    sleep_mark: Option<PortMark>,
    alarm: Option<Alarm>,
    message_until: Option<u64>,
    lock_output: bool,
    buzzer_output: bool,
    counters: ScanCounters,
    stats: FirmwareStats,
    symbol_log: Vec<(u64, KeySymbol)>,
}

impl Firmware {
    pub fn new(config: &LockConfig) -> Self {
        Self {
            settings: Settings {
                pins: config.pins,
                strategy: config.scan_strategy,
                idle_timeout_us: config.idle_timeout_ms * 1_000,
                alarm_duration_us: config.alarm_duration_ms * 1_000,
                alarm_latch: config.alarm_latch,
                message_hold_us: config.message_hold_ms * 1_000,
                password_len: config.password_len,
            },
            mode: FirmwareMode::Boot,
            buffer: PasswordBuffer::new(config.password_len),
            attempts: AttemptCounter::default(),
            debouncer: Debouncer::new(config.debounce_ms * 1_000),
            idle_since: 0,
            sleep_mark: None,
            alarm: None,
            message_until: None,
            lock_output: false,
            buzzer_output: false,
            counters: ScanCounters::default(),
            stats: FirmwareStats::default(),
            symbol_log: Vec::new(),
        }
    }

    pub fn mode(&self) -> FirmwareMode {
        self.mode
    }

    pub fn is_sleeping(&self) -> bool {
        self.mode == FirmwareMode::Sleeping
    }

    pub fn lock_output(&self) -> bool {
        self.lock_output
    }

    pub fn buzzer_output(&self) -> bool {
        self.buzzer_output
    }

    pub fn attempts(&self) -> u8 {
        self.attempts.get()
    }

    pub fn buffer(&self) -> &PasswordBuffer {
        &self.buffer
    }

    pub fn password_len(&self) -> usize {
        self.settings.password_len
    }

    pub fn stats(&self) -> FirmwareStats {
        FirmwareStats {
            scans_executed: self.counters.scans,
            column_checks: self.counters.column_checks,
            ..self.stats
        }
    }

    /// Debounced keys in acceptance order.
    pub fn symbol_log(&self) -> &[(u64, KeySymbol)] {
        &self.symbol_log
    }

    pub fn logic_state(&self, now: u64) -> LogicState {
        LogicState {
            mode: self.mode,
            buffer: self.buffer.symbols().to_vec(),
            attempts: self.attempts.get(),
            lock_output: self.lock_output,
            buzzer_output: self.buzzer_output,
            alarm_remaining_us: self
                .alarm
                .map(|a| a.until.map_or(u64::MAX, |u| u.saturating_sub(now))),
            message_remaining_us: self.message_until.map(|u| u.saturating_sub(now)),
        }
    }

    /// Configures the ports, initialises the LCD and shows the prompt.
    pub fn boot(&mut self, board: &mut Board, now: u64) {
        board.begin_slice(now);
        let pins = self.settings.pins;
        for pin in pins.lcd_data.into_iter().chain([pins.lcd_rs, pins.lcd_e]) {
            board.configure(pin, PinConfig::output(Level::Low));
        }
        for pin in [pins.actuator, pins.buzzer] {
            board.configure(pin, output_config(pin, Level::Low));
        }
        scan::idle_config(board);
        lcd::init(board);
        lcd::show(board, PROMPT, "");
        self.mode = FirmwareMode::Scanning;
        self.idle_since = now;
    }

    /// One main-loop iteration.
    pub fn tick(&mut self, board: &mut Board, now: u64) {
        board.begin_slice(now);
        if self.mode == FirmwareMode::Boot {
            return;
        }
        if self.mode == FirmwareMode::Sleeping {
            match self.sleep_mark {
                Some(mark) if board.gpio.portb_changed_since(mark) => self.wake(now),
                _ => return,
            }
        }
        self.update_timers(board, now);

        let raw = self.row_scan(board);
        let pos = raw.map(|c| KeyPosition::new(c.row, c.col));
        if pos.is_some() {
            self.idle_since = now;
        }
        if let Some(accepted) = self.debouncer.update(pos, now) {
            let cursor = raw.expect("accepted key was just scanned");
            debug_assert_eq!((cursor.row, cursor.col), (accepted.row, accepted.col));
            let sym = self.find_key(&cursor);
            self.symbol_log.push((now, sym));
            self.stats.symbols_accepted += 1;
            self.handle_symbol(board, sym, now);
        }

        if self.mode.is_locked_entry()
            && self.message_until.is_none()
            && now.saturating_sub(self.idle_since) >= self.settings.idle_timeout_us
        {
            self.sleep(board);
        }
    }

    pub fn row_scan(&mut self, board: &mut Board) -> Option<ScanCursor> {
        scan::row_scan(board, self.settings.strategy, &mut self.counters)
    }

    pub fn find_key(&self, cursor: &ScanCursor) -> KeySymbol {
        scan::find_key(cursor)
    }

    fn sleep(&mut self, board: &mut Board) {
        if !self.buffer.is_empty() {
            self.buffer.clear();
            lcd::show(board, PROMPT, "");
        }
        self.debouncer.reset();
        scan::idle_config(board);
        self.sleep_mark = Some(board.gpio.portb_mark());
        self.mode = FirmwareMode::Sleeping;
        self.stats.sleeps += 1;
    }

    fn wake(&mut self, now: u64) {
        self.mode = FirmwareMode::Scanning;
        self.sleep_mark = None;
        self.idle_since = now;
        self.stats.wakes += 1;
    }

    /// Runs the alarm pattern and expires transient messages.
    pub fn update_timers(&mut self, board: &mut Board, now: u64) {
        if let Some(mut alarm) = self.alarm {
            let buzzer = self.settings.pins.buzzer;
            while alarm.next_toggle <= now {
                alarm.level = !alarm.level;
                alarm.next_toggle += BUZZER_HALF_PERIOD_US;
                board
                    .drive(buzzer, alarm.level)
                    .expect("buzzer pin is an output");
            }
            self.alarm = Some(alarm);
            if alarm.until.is_some_and(|u| u <= now) {
                self.end_alarm(board);
                self.idle_since = now;
            }
        }
        if self.message_until.is_some_and(|u| u <= now) {
            self.restore_prompt(board);
        }
    }

    /// Processes one debounced key.
    pub fn handle_symbol(&mut self, board: &mut Board, sym: KeySymbol, now: u64) {
        board.begin_slice(now);
        use FirmwareMode::*;
        match (self.mode, sym) {
            (Scanning | Entering | ChangeEntry, s) if s.is_password_symbol() => {
                self.append(board, s)
            }
            (Scanning | Entering | ChangeEntry, KeySymbol::Backspace) => self.backspace(board),
            (Scanning | Entering, KeySymbol::Enter) => self.submit(board, now),
            (ChangeEntry, KeySymbol::Enter) => self.commit_change(board, now),
            (ChangeEntry, KeySymbol::Lock) => self.relock(board),
            (Unlocked, KeySymbol::Lock) => self.relock(board),
            (Unlocked, KeySymbol::Modify) => self.begin_change(board),
            _ => {}
        }
    }

    fn append(&mut self, board: &mut Board, sym: KeySymbol) {
        if self.message_until.is_some() {
            self.restore_prompt(board);
        }
        if !self.buffer.push(sym) {
            return;
        }
        if self.mode == FirmwareMode::Scanning {
            self.mode = FirmwareMode::Entering;
        }
        lcd::write_at(board, 1, self.buffer.len() - 1, "*");
    }

    fn backspace(&mut self, board: &mut Board) {
        if self.message_until.is_some() {
            self.restore_prompt(board);
        }
        if self.buffer.pop().is_some() {
            lcd::write_at(board, 1, self.buffer.len(), " ");
        }
    }

    fn submit(&mut self, board: &mut Board, now: u64) {
        self.mode = FirmwareMode::Verifying;
        self.stats.verifications += 1;
        let n = self.settings.password_len;
        let ok = self.buffer.len() == n && {
            let stored = read_password_from_eeprom(&mut board.eeprom, n);
            verify_password(&self.buffer.bytes(), &stored).matched
        };
        self.on_verify_result(board, ok, now);
    }

    pub fn on_verify_result(&mut self, board: &mut Board, ok: bool, now: u64) {
        self.buffer.clear();
        self.message_until = None;
        if ok {
            self.attempts.reset();
            self.mode = FirmwareMode::Unlocked;
            self.set_lock(board, true);
            lcd::show(board, UNLOCKED_MSG, "");
        } else if self.attempts.fail() {
            self.start_alarm(board, now);
        } else {
            self.mode = FirmwareMode::Scanning;
            lcd::show(board, WRONG_MSG, "");
            self.message_until = Some(now + self.settings.message_hold_us);
        }
    }

    fn relock(&mut self, board: &mut Board) {
        self.buffer.clear();
        self.message_until = None;
        self.set_lock(board, false);
        self.mode = FirmwareMode::Scanning;
        lcd::show(board, PROMPT, "");
    }

    fn begin_change(&mut self, board: &mut Board) {
        self.buffer.clear();
        self.set_lock(board, false);
        self.mode = FirmwareMode::ChangeEntry;
        lcd::show(board, CHANGE_PROMPT, "");
    }

    fn commit_change(&mut self, board: &mut Board, now: u64) {
        let new_password = self.buffer.bytes();
        self.buffer.clear();
        let hold = Some(now + self.settings.message_hold_us);
        match write_password_to_eeprom(&mut board.eeprom, &new_password, self.settings.password_len)
        {
            Ok(()) => {
                self.mode = FirmwareMode::Scanning;
                lcd::show(board, CHANGED_MSG, "");
            }
            Err(_) => lcd::show(board, REJECTED_MSG, ""),
        }
        self.message_until = hold;
    }

    fn start_alarm(&mut self, board: &mut Board, now: u64) {
        self.mode = FirmwareMode::Alarm;
        self.buzzer_output = true;
        self.alarm = Some(Alarm {
            until: (!self.settings.alarm_latch).then(|| now + self.settings.alarm_duration_us),
            next_toggle: now + BUZZER_HALF_PERIOD_US,
            level: Level::High,
        });
        board
            .drive(self.settings.pins.buzzer, Level::High)
            .expect("buzzer pin is an output");
        lcd::show(board, ALARM_MSG, "");
    }

    fn end_alarm(&mut self, board: &mut Board) {
        self.alarm = None;
        self.buzzer_output = false;
        board
            .drive(self.settings.pins.buzzer, Level::Low)
            .expect("buzzer pin is an output");
        self.attempts.reset();
        self.mode = FirmwareMode::Scanning;
        lcd::show(board, PROMPT, "");
    }

    fn restore_prompt(&mut self, board: &mut Board) {
        self.message_until = None;
        let text = if self.mode == FirmwareMode::ChangeEntry {
            CHANGE_PROMPT
        } else {
            PROMPT
        };
        lcd::replace_row(board, 0, text);
    }

    fn set_lock(&mut self, board: &mut Board, open: bool) {
        self.lock_output = open;
        board
            .drive(self.settings.pins.actuator, Level::from(open))
            .expect("actuator pin is an output");
    }
}

/// RA4 is an open-drain output on this part.
fn output_config(pin: PinId, latch: Level) -> PinConfig {
    if pin == PinId::a(4) {
        PinConfig::open_drain(latch)
    } else {
        PinConfig::output(latch)
    }
}
