//! Password buffer, comparison and EEPROM storage routines.

use serde::Serialize;
use thiserror::Error;

use crate::eeprom::{Eeprom, PASSWORD_BASE};
use crate::keypad::KeySymbol;

pub const MAX_PASSWORD_LEN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PasswordError {
    #[error("new password has {got} symbols, {need} required")]
    ChangeRejected { got: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PasswordBuffer {
    symbols: Vec<KeySymbol>,
    capacity: usize,
}

impl PasswordBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity <= MAX_PASSWORD_LEN);
        Self {
            symbols: Vec::with_capacity(capacity),
            capacity,
        }
    }

    /// Returns false if the buffer is full or `sym` is a control key.
    pub fn push(&mut self, sym: KeySymbol) -> bool {
        if !sym.is_password_symbol() || self.symbols.len() >= self.capacity {
            return false;
        }
        self.symbols.push(sym);
        true
    }

    pub fn pop(&mut self) -> Option<KeySymbol> {
        self.symbols.pop()
    }

    pub fn clear(&mut self) {
        self.symbols.clear();
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[KeySymbol] {
        &self.symbols
    }

    pub fn bytes(&self) -> Vec<u8> {
        self.symbols.iter().map(|s| s.as_char() as u8).collect()
    }

    pub fn masked(&self) -> String {
        "*".repeat(self.symbols.len())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct AttemptCounter(u8);

pub const ALARM_THRESHOLD: u8 = 3;

impl AttemptCounter {
    pub fn get(self) -> u8 {
        self.0
    }

    /// Records a failure; true when this one reaches the alarm threshold.
    pub fn fail(&mut self) -> bool {
        self.0 = (self.0 + 1).min(ALARM_THRESHOLD);
        self.0 == ALARM_THRESHOLD
    }

    pub fn reset(&mut self) {
        self.0 = 0;
    }
}

/// Registers used while walking the two arrays with a single indirect
/// pointer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerifyCursor {
    pub count: u8,
    pub fsr: usize,
    pub save1: usize,
    pub save2: usize,
    pub data1: u8,
    pub data2: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub matched: bool,
    pub comparisons: usize,
    pub cursor: VerifyCursor,
}

/// Compares the entered symbols with the stored ones through one pointer
/// that alternates between the two arrays, saving and restoring its position
/// for each. Both arrays live back to back in one register file. A length
/// mismatch fails without any comparison.
pub fn verify_password(entered: &[u8], stored: &[u8]) -> VerifyOutcome {
    let mut cur = VerifyCursor::default();
    let n = stored.len();
    if entered.len() != n || n == 0 {
        return VerifyOutcome {
            matched: false,
            comparisons: 0,
            cursor: cur,
        };
    }
    let mut file = [0u8; 2 * MAX_PASSWORD_LEN];
    let (first, second) = (0, n);
    file[first..first + n].copy_from_slice(entered);
    file[second..second + n].copy_from_slice(stored);

    let mut comparisons = 0;
    cur.count = n as u8;
    cur.fsr = first;
    let mut first_pass = true;
    loop {
        cur.data1 = file[cur.fsr];
        cur.fsr += 1;
        cur.save1 = cur.fsr;
        if first_pass {
            cur.fsr = second;
            first_pass = false;
        } else {
            cur.fsr = cur.save2;
        }
        cur.data2 = file[cur.fsr];
        cur.fsr += 1;
        cur.save2 = cur.fsr;
        cur.fsr = cur.save1;
        comparisons += 1;
        if cur.data1 != cur.data2 {
            return VerifyOutcome {
                matched: false,
                comparisons,
                cursor: cur,
            };
        }
        cur.count -= 1;
        if cur.count == 0 {
            return VerifyOutcome {
                matched: true,
                comparisons,
                cursor: cur,
            };
        }
    }
}

/// Reads `len` bytes from the password region with a count-down loop.
pub fn read_password_from_eeprom(eeprom: &mut Eeprom, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut count = len;
    let mut ptr = PASSWORD_BASE as usize;
    while count > 0 {
        out.push(
            eeprom
                .read(ptr)
                .expect("password region lies inside the EEPROM"),
        );
        ptr += 1;
        count -= 1;
    }
    out
}

/// Arms and writes each byte in turn. Nothing is written unless the new
/// password has exactly `len` symbols.
pub fn write_password_to_eeprom(
    eeprom: &mut Eeprom,
    new_password: &[u8],
    len: usize,
) -> Result<(), PasswordError> {
    if new_password.len() != len {
        return Err(PasswordError::ChangeRejected {
            got: new_password.len(),
            need: len,
        });
    }
    for (ptr, &b) in (PASSWORD_BASE as usize..).zip(new_password) {
        eeprom.write_control(0xAA);
        eeprom.write_control(0x55);
        eeprom
            .write(ptr, b)
            .expect("write is armed and inside the EEPROM");
    }
    Ok(())
}
