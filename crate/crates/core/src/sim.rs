//! Whole-system simulation: board plus firmware on one timeline.
//!
//! Switch transitions and firmware ticks are interleaved in timestamp order.
//! A transition scheduled at the same instant as a tick is visible to that
//! tick.

use serde::{Deserialize, Serialize};

use crate::board::Board;
use crate::config::LockConfig;
use crate::eeprom::EepromImage;
use crate::firmware::{Firmware, FirmwareMode};
use crate::hd44780::LcdFrame;
use crate::keypad::{BounceProfile, KeySymbol, KeypadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LockState {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuzzerState {
    On,
    Off,
}

/// A coherent view taken between ticks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub lcd: [String; 2],
    pub lock: LockState,
    pub buzzer: BuzzerState,
    pub mode: FirmwareMode,
    pub t_ms: u64,
    pub sleeping: bool,
    pub attempts: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    StateChanged,
    LcdChanged,
    Buzzer,
    Lock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    #[serde(rename = "type")]
    pub kind: EventKind,
    pub snapshot: StateSnapshot,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    config: LockConfig,
    board: Board,
    firmware: Firmware,
    next_tick: u64,
    last: StateSnapshot,
    events: Vec<SimEvent>,
}

impl Simulation {
    /// Powers the board up at t = 0 and boots the firmware.
    pub fn new(config: LockConfig, image: EepromImage) -> Self {
        Self::boot_at(config, image, 0)
    }

    fn boot_at(config: LockConfig, image: EepromImage, t_us: u64) -> Self {
        let mut board = Board::new(&config, image, t_us);
        let mut firmware = Firmware::new(&config);
        firmware.boot(&mut board, t_us);
        let next_tick = t_us + config.tick_us;
        let last = snapshot_of(&board, &firmware);
        Self {
            config,
            board,
            firmware,
            next_tick,
            last,
            events: Vec::new(),
        }
    }

    /// Reboots with the current EEPROM contents; the clock keeps running.
    pub fn power_cycle(&mut self) {
        let image = *self.board.eeprom.image();
        self.power_cycle_with(image);
    }

    pub fn power_cycle_with(&mut self, image: EepromImage) {
        let now = self.now_us();
        let events = std::mem::take(&mut self.events);
        let before = self.last.clone();
        *self = Self::boot_at(self.config.clone(), image, now);
        self.events = events;
        self.last = before;
        self.record_changes();
    }

    pub fn config(&self) -> &LockConfig {
        &self.config
    }

    pub fn board(&self) -> &Board {
        &self.board
    }

    pub fn board_mut(&mut self) -> &mut Board {
        &mut self.board
    }

    pub fn firmware(&self) -> &Firmware {
        &self.firmware
    }

    /// Split borrow for driving the firmware by hand.
    pub fn parts_mut(&mut self) -> (&mut Board, &mut Firmware) {
        (&mut self.board, &mut self.firmware)
    }

    pub fn now_us(&self) -> u64 {
        self.board.now()
    }

    pub fn frame(&self) -> LcdFrame {
        self.board.lcd.frame()
    }

    pub fn mode(&self) -> FirmwareMode {
        self.firmware.mode()
    }

    pub fn lock_open(&self) -> bool {
        self.firmware.lock_output()
    }

    pub fn buzzer_on(&self) -> bool {
        self.firmware.buzzer_output()
    }

    pub fn scans_executed(&self) -> u64 {
        self.firmware.stats().scans_executed
    }

    pub fn snapshot(&self) -> StateSnapshot {
        snapshot_of(&self.board, &self.firmware)
    }

    /// Drains externally visible changes recorded since the last call.
    pub fn take_events(&mut self) -> Vec<SimEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn press(
        &mut self,
        sym: KeySymbol,
        at_us: u64,
        bounce: Option<&BounceProfile>,
    ) -> Result<(), KeypadError> {
        let Board { gpio, keypad, .. } = &mut self.board;
        keypad.press(gpio, sym, at_us, bounce)
    }

    pub fn release(
        &mut self,
        sym: KeySymbol,
        at_us: u64,
        bounce: Option<&BounceProfile>,
    ) -> Result<(), KeypadError> {
        let Board { gpio, keypad, .. } = &mut self.board;
        keypad.release(gpio, sym, at_us, bounce)
    }

    /// Press at `at_us`, release `hold_us` later.
    pub fn tap(&mut self, sym: KeySymbol, at_us: u64, hold_us: u64) -> Result<(), KeypadError> {
        self.press(sym, at_us, None)?;
        self.release(sym, at_us + hold_us, None)
    }

    pub fn is_held(&self, sym: KeySymbol) -> bool {
        self.board.keypad.is_held(sym)
    }

    pub fn advance_ms(&mut self, ms: u64) {
        self.advance_us(ms * 1_000);
    }

    pub fn advance_us(&mut self, dt: u64) {
        let target = self.now_us().saturating_add(dt);
        self.advance_to_us(target);
    }

    /// Runs every switch transition and firmware tick up to and including
    /// `t_us`.
    pub fn advance_to_us(&mut self, t_us: u64) {
        while self.next_tick <= t_us {
            let t = self.next_tick;
            self.board.gpio.advance_to(t);
            self.firmware.tick(&mut self.board, t);
            self.record_changes();
            self.next_tick += self.config.tick_us;
        }
        self.board.gpio.advance_to(t_us);
    }

    fn record_changes(&mut self) {
        let now = self.snapshot();
        let prev = &self.last;
        let mut kinds = Vec::new();
        if now.lcd != prev.lcd {
            kinds.push(EventKind::LcdChanged);
        }
        if now.lock != prev.lock {
            kinds.push(EventKind::Lock);
        }
        if now.buzzer != prev.buzzer {
            kinds.push(EventKind::Buzzer);
        }
        if (now.mode, now.sleeping, now.attempts) != (prev.mode, prev.sleeping, prev.attempts) {
            kinds.push(EventKind::StateChanged);
        }
        for kind in kinds {
            self.events.push(SimEvent {
                kind,
                snapshot: now.clone(),
            });
        }
        self.last = now;
    }
}

fn snapshot_of(board: &Board, firmware: &Firmware) -> StateSnapshot {
    let frame = board.lcd.frame();
    let [r0, r1] = frame.rows;
    StateSnapshot {
        lcd: [r0, r1],
        lock: if firmware.lock_output() {
            LockState::Open
        } else {
            LockState::Closed
        },
        buzzer: if firmware.buzzer_output() {
            BuzzerState::On
        } else {
            BuzzerState::Off
        },
        mode: firmware.mode(),
        t_ms: board.now() / 1_000,
        sleeping: firmware.is_sleeping(),
        attempts: firmware.attempts(),
    }
}
