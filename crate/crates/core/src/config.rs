//! `key=value` configuration for the simulated lock.
//!
//! ```text
//! # timing
//! idle_timeout_ms = 5000
//! debounce_ms = 20
//! scan_strategy = per_pin
//! pin.lcd_rs = RA6
//! ```

use serde::Serialize;
use thiserror::Error;

use crate::gpio::{Level, PinId, Port};
use crate::keypad::{CorruptionRule, FaultModel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid pin map: {0}")]
    PinMap(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScanStrategy {
    /// One column pin is an input at a time.
    PerPin,
    /// All four column pins are inputs together.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PinMap {
    /// DB4..DB7
    pub lcd_data: [PinId; 4],
    pub lcd_rs: PinId,
    pub lcd_e: PinId,
    /// Lock relay: steady HIGH while unlocked.
    pub actuator: PinId,
    /// Alarm output; shares the actuator pin by default.
    pub buzzer: PinId,
}

impl Default for PinMap {
    fn default() -> Self {
        Self {
            lcd_data: [PinId::a(0), PinId::a(1), PinId::a(2), PinId::a(3)],
            lcd_rs: PinId::a(6),
            lcd_e: PinId::a(7),
            actuator: PinId::a(4),
            buzzer: PinId::a(4),
        }
    }
}

impl PinMap {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let lcd: Vec<PinId> = self
            .lcd_data
            .iter()
            .copied()
            .chain([self.lcd_rs, self.lcd_e])
            .collect();
        let mut outputs = lcd.clone();
        outputs.push(self.actuator);
        outputs.push(self.buzzer);
        for pin in &outputs {
            if pin.port == Port::B {
                return Err(ConfigError::PinMap(format!(
                    "{pin} is reserved for the keypad"
                )));
            }
            if *pin == PinId::a(5) {
                return Err(ConfigError::PinMap("RA5 is input-only".into()));
            }
        }
        for (i, a) in lcd.iter().enumerate() {
            if lcd[i + 1..].contains(a) || *a == self.actuator || *a == self.buzzer {
                return Err(ConfigError::PinMap(format!("{a} is assigned twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LockConfig {
    pub pins: PinMap,
    pub tick_us: u64,
    pub idle_timeout_ms: u64,
    pub debounce_ms: u64,
    pub alarm_duration_ms: u64,
    /// Alarm stays on until reset instead of timing out.
    pub alarm_latch: bool,
    /// How long transient messages stay before the prompt returns.
    pub message_hold_ms: u64,
    pub fault_model: FaultModel,
    pub scan_strategy: ScanStrategy,
    pub password_len: usize,
    pub floating_default: Level,
    /// Hold time used by scenario `tap` directives.
    pub tap_ms: u64,
}

impl Default for LockConfig {
    fn default() -> Self {
        Self {
            pins: PinMap::default(),
            tick_us: 5_000,
            idle_timeout_ms: 5_000,
            debounce_ms: 20,
            alarm_duration_ms: 10_000,
            alarm_latch: false,
            message_hold_ms: 1_500,
            fault_model: FaultModel::default(),
            scan_strategy: ScanStrategy::PerPin,
            password_len: 10,
            floating_default: Level::High,
            tap_ms: 60,
        }
    }
}

fn parse_num(key: &str, value: &str) -> Result<u64, ConfigError> {
    value
        .parse()
        .map_err(|e: std::num::ParseIntError| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: e.to_string(),
        })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected on/off".into(),
        }),
    }
}

/// Splits `key = value` lines, checking each against a default config.
pub fn config_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut probe = LockConfig::default();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (key, value) = (key.trim(), value.trim());
        probe.set(key, value)?;
        out.push((key.to_string(), value.to_string()));
    }
    Ok(out)
}

impl LockConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value) in config_pairs(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        };
        match key {
            "tick_us" => {
                self.tick_us = parse_num(key, value)?;
                if self.tick_us == 0 {
                    return Err(bad("must be positive"));
                }
            }
            "idle_timeout_ms" => self.idle_timeout_ms = parse_num(key, value)?,
            "debounce_ms" => self.debounce_ms = parse_num(key, value)?,
            "alarm_duration_ms" => self.alarm_duration_ms = parse_num(key, value)?,
            "alarm_latch" => self.alarm_latch = parse_bool(key, value)?,
            "message_hold_ms" => self.message_hold_ms = parse_num(key, value)?,
            "tap_ms" => self.tap_ms = parse_num(key, value)?,
            "password_len" => {
                let n = parse_num(key, value)? as usize;
                if !(1..=10).contains(&n) {
                    return Err(bad("must be between 1 and 10"));
                }
                self.password_len = n;
            }
            "fault_model" => self.fault_model.coupled_inputs_enabled = parse_bool(key, value)?,
            "corruption_rule" => {
                self.fault_model.corruption_rule = match value {
                    "force_low" => CorruptionRule::ForceLow,
                    "follow_neighbor" => CorruptionRule::FollowNeighbor,
                    _ => return Err(bad("expected force_low or follow_neighbor")),
                }
            }
            "scan_strategy" | "scan-strategy" => {
                self.scan_strategy = match value {
                    "per_pin" => ScanStrategy::PerPin,
                    "conventional" => ScanStrategy::Conventional,
                    _ => return Err(bad("expected per_pin or conventional")),
                }
            }
            "floating_default" => {
                self.floating_default = match value.to_ascii_lowercase().as_str() {
                    "high" => Level::High,
                    "low" => Level::Low,
                    _ => return Err(bad("expected high or low")),
                }
            }
            _ if key.starts_with("pin.") => {
                let pin: PinId = value.parse().map_err(|e: String| bad(&e))?;
                let mut pins = self.pins;
                match &key[4..] {
                    "lcd_d4" => pins.lcd_data[0] = pin,
                    "lcd_d5" => pins.lcd_data[1] = pin,
                    "lcd_d6" => pins.lcd_data[2] = pin,
                    "lcd_d7" => pins.lcd_data[3] = pin,
                    "lcd_rs" => pins.lcd_rs = pin,
                    "lcd_e" => pins.lcd_e = pin,
                    "actuator" => pins.actuator = pin,
                    "buzzer" => pins.buzzer = pin,
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
                pins.validate()?;
                self.pins = pins;
            }
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = LockConfig::default();
        assert_eq!(c.debounce_ms, 20);
        assert_eq!(c.idle_timeout_ms, 5_000);
        assert_eq!(c.password_len, 10);
        assert_eq!(c.scan_strategy, ScanStrategy::PerPin);
        c.pins.validate().unwrap();
    }

    #[test]
    fn parses_file() {
        assert!(matches!(
            LockConfig::parse("pin.buzzer = RA5"),
            Err(ConfigError::PinMap(_))
        ));
        let c = LockConfig::parse(
            "# comment\nidle_timeout_ms = 2000\nscan_strategy=conventional\n\nfault_model = off # trailing\nalarm_latch=on\n",
        )
        .unwrap();
        assert_eq!(c.idle_timeout_ms, 2000);
        assert_eq!(c.scan_strategy, ScanStrategy::Conventional);
        assert!(!c.fault_model.coupled_inputs_enabled);
        assert!(c.alarm_latch);
        assert!(matches!(
            LockConfig::parse("pin.actuator = RB0"),
            Err(ConfigError::PinMap(_))
        ));
    }

    #[test]
    fn errors() {
        assert_eq!(
            LockConfig::parse("nonsense"),
            Err(ConfigError::Syntax { line: 1 })
        );
        assert_eq!(
            LockConfig::parse("colour = red"),
            Err(ConfigError::UnknownKey("colour".into()))
        );
        assert!(matches!(
            LockConfig::parse("debounce_ms = soon"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            LockConfig::parse("pin.lcd_e = RA0"),
            Err(ConfigError::PinMap(_))
        ));
        assert!(matches!(
            LockConfig::parse("password_len = 11"),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
