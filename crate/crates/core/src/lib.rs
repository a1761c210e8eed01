//! Deterministic behavioural simulator of a PIC16F628A keypad/LCD electronic
//! lock.
//!
//! The crate is layered bottom-up:
//!
//! * [`gpio`]: simulated clock, pin configuration and switch nets
//! * [`keypad`], [`hd44780`], [`eeprom`]: the peripherals
//! * [`board`]: the peripherals wired to the MCU pins
//! * [`firmware`]: the lock controller state machine
//! * [`sim`]: board and firmware on one timeline
//! * [`scenario`]: scripted runs with expectations
//! * [`service`]: HTTP+JSON front end for a live simulation

pub mod board;
pub mod config;
pub mod eeprom;
pub mod firmware;
pub mod gpio;
pub mod hd44780;
pub mod keypad;
pub mod scenario;
pub mod service;
pub mod sim;

pub use config::{LockConfig, ScanStrategy};
pub use eeprom::EepromImage;
pub use firmware::FirmwareMode;
pub use keypad::KeySymbol;
pub use sim::{Simulation, StateSnapshot};
