//! The assembled circuit: MCU pins, keypad, LCD module and data EEPROM.
//!
//! The LCD module listens to the MCU's RS/E/DB4..DB7 pins and latches a
//! nibble whenever E goes from HIGH to LOW.

use crate::config::{LockConfig, PinMap};
use crate::eeprom::{Eeprom, EepromImage};
use crate::gpio::{Gpio, GpioError, Level, PinConfig, PinId};
use crate::hd44780::{Hd44780, LcdBusSample, RegisterSelect};
use crate::keypad::Keypad;

#[derive(Debug, Clone)]
pub struct Board {
    pub gpio: Gpio,
    pub keypad: Keypad,
    pub lcd: Hd44780,
    pub eeprom: Eeprom,
    pins: PinMap,
    /// Firmware execution time, which runs ahead of the clock while the
    /// firmware waits out LCD delays inside a tick.
    cpu_time_us: u64,
}

impl Board {
    pub fn new(config: &LockConfig, image: EepromImage, start_us: u64) -> Self {
        let mut gpio = Gpio::with_floating_default(config.floating_default).starting_at(start_us);
        let keypad = Keypad::attach(&mut gpio, config.fault_model);
        Self {
            gpio,
            keypad,
            lcd: Hd44780::new(),
            eeprom: Eeprom::new(image),
            pins: config.pins,
            cpu_time_us: start_us,
        }
    }

    pub fn pins(&self) -> &PinMap {
        &self.pins
    }

    pub fn now(&self) -> u64 {
        self.gpio.now()
    }

    /// Starts a firmware execution slice at `now`, or later if the previous
    /// slice overran.
    pub fn begin_slice(&mut self, now: u64) {
        self.cpu_time_us = self.cpu_time_us.max(now);
    }

    pub fn delay_us(&mut self, us: u64) {
        self.cpu_time_us += us;
    }

    pub fn cpu_time(&self) -> u64 {
        self.cpu_time_us
    }

    pub fn configure(&mut self, pin: PinId, cfg: PinConfig) {
        self.gpio.configure_pin(pin, cfg);
    }

    pub fn drive(&mut self, pin: PinId, level: Level) -> Result<(), GpioError> {
        let falling_e = pin == self.pins.lcd_e
            && self.gpio.config(pin).latch == Level::High
            && level == Level::Low;
        self.gpio.drive(pin, level)?;
        if falling_e {
            self.latch_lcd();
        }
        Ok(())
    }

    fn latch_lcd(&mut self) {
        let rs = match self.gpio.peek(self.pins.lcd_rs) {
            Level::High => RegisterSelect::Data,
            Level::Low => RegisterSelect::Command,
        };
        let nibble = self
            .pins
            .lcd_data
            .iter()
            .enumerate()
            .fold(0u8, |acc, (bit, &pin)| {
                acc | (u8::from(self.gpio.peek(pin).is_high()) << bit)
            });
        self.lcd.enable_falling_edge(LcdBusSample {
            rs,
            nibble,
            t_us: self.cpu_time_us,
        });
    }

    /// Samples a keypad column through the coupled-input fault model.
    pub fn sample_column(&mut self, pin: PinId) -> Level {
        self.keypad.corrupted_sample(&mut self.gpio, pin)
    }

    pub fn actuator_latch(&self) -> Level {
        self.gpio.config(self.pins.actuator).latch
    }
}
