//! 4×4 keypad matrix wired to PORTB.
//!
//! Rows sit on RB0..RB3 and columns on RB4..RB7. Each key is a switch between
//! its row pin and its column pin. Presses and releases are scheduled on the
//! GPIO event queue, optionally as a bounce train.
//!
//! The coupled-input fault model reproduces the interference seen on real
//! hardware when several column pins are inputs at the same time.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gpio::{Direction, Gpio, Level, PinId, SwitchId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeySymbol {
    Digit0,
    Digit1,
    Digit2,
    Digit3,
    Digit4,
    Digit5,
    Digit6,
    Digit7,
    Digit8,
    Digit9,
    Star,
    Hash,
    /// 'A'
    Backspace,
    /// 'B'
    Lock,
    /// 'C'
    Modify,
    /// 'D'
    Enter,
}

const GRID: [[KeySymbol; 4]; 4] = {
    use KeySymbol::*;
    [
        [Digit1, Digit2, Digit3, Backspace],
        [Digit4, Digit5, Digit6, Lock],
        [Digit7, Digit8, Digit9, Modify],
        [Star, Digit0, Hash, Enter],
    ]
};

impl KeySymbol {
    pub const ALL: [KeySymbol; 16] = {
        use KeySymbol::*;
        [
            Digit0, Digit1, Digit2, Digit3, Digit4, Digit5, Digit6, Digit7, Digit8, Digit9, Star,
            Hash, Backspace, Lock, Modify, Enter,
        ]
    };

    pub fn as_char(self) -> char {
        use KeySymbol::*;
        match self {
            Digit0 => '0',
            Digit1 => '1',
            Digit2 => '2',
            Digit3 => '3',
            Digit4 => '4',
            Digit5 => '5',
            Digit6 => '6',
            Digit7 => '7',
            Digit8 => '8',
            Digit9 => '9',
            Star => '*',
            Hash => '#',
            Backspace => 'A',
            Lock => 'B',
            Modify => 'C',
            Enter => 'D',
        }
    }

    /// Case-insensitive for the letter keys.
    pub fn from_char(c: char) -> Result<Self, KeypadError> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_char() == c.to_ascii_uppercase())
            .ok_or(KeypadError::UnknownKey(c.to_string()))
    }

    /// Symbols that may be stored in a password.
    pub fn is_password_symbol(self) -> bool {
        !matches!(
            self,
            KeySymbol::Backspace | KeySymbol::Lock | KeySymbol::Modify | KeySymbol::Enter
        )
    }

    pub fn position(self) -> KeyPosition {
        key_position(self)
    }
}

impl fmt::Display for KeySymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl std::str::FromStr for KeySymbol {
    type Err = KeypadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => KeySymbol::from_char(c),
            _ => Err(KeypadError::UnknownKey(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyPosition {
    pub row: u8,
    pub col: u8,
}

impl KeyPosition {
    pub fn new(row: u8, col: u8) -> Self {
        assert!(row < 4 && col < 4, "key position out of range");
        Self { row, col }
    }

    pub fn index(self) -> usize {
        4 * self.row as usize + self.col as usize
    }

    pub fn row_pin(self) -> PinId {
        row_pin(self.row)
    }

    pub fn col_pin(self) -> PinId {
        col_pin(self.col)
    }

    pub fn all() -> impl Iterator<Item = KeyPosition> {
        (0..4).flat_map(|r| (0..4).map(move |c| KeyPosition::new(r, c)))
    }
}

pub fn row_pin(row: u8) -> PinId {
    PinId::b(row)
}

pub fn col_pin(col: u8) -> PinId {
    PinId::b(4 + col)
}

pub fn keymap(pos: KeyPosition) -> KeySymbol {
    GRID[pos.row as usize][pos.col as usize]
}

pub fn key_position(sym: KeySymbol) -> KeyPosition {
    for pos in KeyPosition::all() {
        if keymap(pos) == sym {
            return pos;
        }
    }
    unreachable!("every symbol appears in the grid")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeypadError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key {0} is already pressed")]
    AlreadyPressed(KeySymbol),
    #[error("key {0} is not pressed")]
    NotPressed(KeySymbol),
    #[error("key {sym} event at {at_us} us precedes its last scheduled event at {last_us} us")]
    OutOfOrder {
        sym: KeySymbol,
        at_us: u64,
        last_us: u64,
    },
    #[error("invalid bounce profile: {0}")]
    BadBounce(&'static str),
}

/// A contact bounce train. Offsets are relative to the press/release time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BounceProfile {
    transitions: Vec<(u64, bool)>,
}

impl BounceProfile {
    pub fn new(transitions: Vec<(u64, bool)>) -> Result<Self, KeypadError> {
        if transitions.is_empty() {
            return Err(KeypadError::BadBounce("empty transition list"));
        }
        if transitions.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(KeypadError::BadBounce(
                "offsets must be strictly increasing",
            ));
        }
        Ok(Self { transitions })
    }

    /// `count` alternating transitions spread over at most `max_span_us`,
    /// ending in `final_closed`. The first transition is at offset 0.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        final_closed: bool,
        count: usize,
        max_span_us: u64,
    ) -> Self {
        let count = count.max(1);
        assert!(
            max_span_us as usize >= count,
            "span too short for transition count"
        );
        let mut offsets: Vec<u64> = Vec::with_capacity(count);
        offsets.push(0);
        while offsets.len() < count {
            let o = rng.random_range(1..=max_span_us);
            if !offsets.contains(&o) {
                offsets.push(o);
            }
        }
        offsets.sort_unstable();
        let transitions = offsets
            .into_iter()
            .enumerate()
            .map(|(i, o)| (o, (count - 1 - i).is_multiple_of(2) == final_closed))
            .collect();
        Self { transitions }
    }

    /// Preset: 2..=10 transitions within 5 ms.
    pub fn preset<R: Rng + ?Sized>(rng: &mut R, final_closed: bool) -> Self {
        let n = rng.random_range(2..=10);
        Self::random(rng, final_closed, n, 5_000)
    }

    pub fn transitions(&self) -> &[(u64, bool)] {
        &self.transitions
    }

    pub fn final_state(&self) -> bool {
        self.transitions.last().map(|t| t.1).unwrap_or(false)
    }

    pub fn total_span_us(&self) -> u64 {
        self.transitions.last().map(|t| t.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorruptionRule {
    /// A coupled column reads whatever its neighbouring input column reads.
    FollowNeighbor,
    /// If any coupled column is LOW, all coupled columns read LOW.
    ForceLow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultModel {
    pub coupled_inputs_enabled: bool,
    pub corruption_rule: CorruptionRule,
}

impl Default for FaultModel {
    fn default() -> Self {
        Self {
            coupled_inputs_enabled: true,
            corruption_rule: CorruptionRule::ForceLow,
        }
    }
}

impl FaultModel {
    pub fn disabled() -> Self {
        Self {
            coupled_inputs_enabled: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct KeyTrack {
    /// State after every already-scheduled transition has fired.
    scheduled_closed: bool,
    last_at: u64,
}

#[derive(Debug, Clone)]
pub struct Keypad {
    switches: [SwitchId; 16],
    keys: [KeyTrack; 16],
    faults: FaultModel,
}

impl Keypad {
    /// Registers the 16 key switches on `gpio`.
    pub fn attach(gpio: &mut Gpio, faults: FaultModel) -> Self {
        let mut switches = [SwitchId(0); 16];
        for pos in KeyPosition::all() {
            switches[pos.index()] = gpio.register_switch(pos.row_pin(), pos.col_pin());
        }
        Self {
            switches,
            keys: [KeyTrack::default(); 16],
            faults,
        }
    }

    pub fn faults(&self) -> FaultModel {
        self.faults
    }

    pub fn set_faults(&mut self, faults: FaultModel) {
        self.faults = faults;
    }

    pub fn switch_of(&self, sym: KeySymbol) -> SwitchId {
        self.switches[sym.position().index()]
    }

    /// Whether `sym` will be held once every scheduled transition has fired.
    pub fn is_held(&self, sym: KeySymbol) -> bool {
        self.keys[sym.position().index()].scheduled_closed
    }

    /// Time of the last transition scheduled for `sym`.
    pub fn last_scheduled_us(&self, sym: KeySymbol) -> u64 {
        self.keys[sym.position().index()].last_at
    }

    pub fn press(
        &mut self,
        gpio: &mut Gpio,
        sym: KeySymbol,
        at: u64,
        bounce: Option<&BounceProfile>,
    ) -> Result<(), KeypadError> {
        self.transition(gpio, sym, true, at, bounce)
    }

    pub fn release(
        &mut self,
        gpio: &mut Gpio,
        sym: KeySymbol,
        at: u64,
        bounce: Option<&BounceProfile>,
    ) -> Result<(), KeypadError> {
        self.transition(gpio, sym, false, at, bounce)
    }

    fn transition(
        &mut self,
        gpio: &mut Gpio,
        sym: KeySymbol,
        closed: bool,
        at: u64,
        bounce: Option<&BounceProfile>,
    ) -> Result<(), KeypadError> {
        let idx = sym.position().index();
        let track = self.keys[idx];
        if track.scheduled_closed == closed {
            return Err(if closed {
                KeypadError::AlreadyPressed(sym)
            } else {
                KeypadError::NotPressed(sym)
            });
        }
        let at = at.max(gpio.now());
        if at < track.last_at {
            return Err(KeypadError::OutOfOrder {
                sym,
                at_us: at,
                last_us: track.last_at,
            });
        }
        if let Some(b) = bounce {
            if b.final_state() != closed {
                return Err(KeypadError::BadBounce("profile ends in the wrong state"));
            }
        }
        let sw = self.switches[idx];
        let mut last = at;
        match bounce {
            Some(b) => {
                for &(offset, state) in b.transitions() {
                    last = at + offset;
                    gpio.set_switch(sw, state, last)
                        .expect("keypad switch is registered");
                }
            }
            None => gpio
                .set_switch(sw, closed, at)
                .expect("keypad switch is registered"),
        }
        self.keys[idx] = KeyTrack {
            scheduled_closed: closed,
            last_at: last,
        };
        Ok(())
    }

    /// Samples `pin` through the fault model. Non-column pins and the
    /// disabled model defer to the plain resolved level.
    pub fn corrupted_sample(&self, gpio: &mut Gpio, pin: PinId) -> Level {
        let true_level = gpio.sample(pin);
        let Some(col) = (0..4u8).find(|&c| col_pin(c) == pin) else {
            return true_level;
        };
        if !self.faults.coupled_inputs_enabled {
            return true_level;
        }
        let inputs: Vec<u8> = (0..4u8)
            .filter(|&c| gpio.config(col_pin(c)).direction == Direction::Input)
            .collect();
        if inputs.len() < 2 || !inputs.contains(&col) {
            return true_level;
        }
        match self.faults.corruption_rule {
            CorruptionRule::ForceLow => {
                if inputs.iter().any(|&c| gpio.peek(col_pin(c)) == Level::Low) {
                    Level::Low
                } else {
                    Level::High
                }
            }
            CorruptionRule::FollowNeighbor => {
                // nearest other input column below, wrapping around
                let pos = inputs.iter().position(|&c| c == col).unwrap();
                let neighbor = inputs[(pos + inputs.len() - 1) % inputs.len()];
                gpio.peek(col_pin(neighbor))
            }
        }
    }
}
