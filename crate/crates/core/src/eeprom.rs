//! 128-byte data EEPROM with the EECON2 write-arming sequence.
//!
//! A byte write is only accepted immediately after `0xAA` then `0x55` have
//! been written to the control register. Each write attempt consumes the
//! arming, whether it succeeds or not.
//!
//! Images persist either as a raw 128-byte binary file or as a text file of
//! 256 hex digits (whitespace ignored, case-insensitive).

use std::fs;
use std::path::Path;

use thiserror::Error;

pub const EEPROM_SIZE: usize = 128;
pub const PASSWORD_BASE: u8 = 0x00;
pub const FACTORY_PASSWORD: &[u8; 10] = b"0000000000";

#[derive(Debug, Error)]
pub enum EepromError {
    #[error("address 0x{0:02X} is outside the 128-byte EEPROM")]
    AddressOutOfRange(usize),
    #[error("write attempted without the 0xAA/0x55 arming sequence")]
    WriteNotArmed,
    #[error("image must be exactly 128 bytes, got {0}")]
    BadImageSize(usize),
    #[error("bad hex image: {0}")]
    BadHex(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ArmState {
    #[default]
    Idle,
    AaSeen,
    Armed,
}

impl ArmState {
    pub fn next(self, value: u8) -> ArmState {
        match (self, value) {
            (ArmState::Idle, 0xAA) => ArmState::AaSeen,
            (ArmState::AaSeen, 0x55) => ArmState::Armed,
            _ => ArmState::Idle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EepromImage(pub [u8; EEPROM_SIZE]);

impl Default for EepromImage {
    fn default() -> Self {
        Self::factory()
    }
}

impl EepromImage {
    /// Password "0000000000" at 0x00..0x09, erased (0xFF) elsewhere.
    pub fn factory() -> Self {
        let mut bytes = [0xFF; EEPROM_SIZE];
        bytes[..FACTORY_PASSWORD.len()].copy_from_slice(FACTORY_PASSWORD);
        Self(bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EepromError> {
        let arr: [u8; EEPROM_SIZE] = bytes
            .try_into()
            .map_err(|_| EepromError::BadImageSize(bytes.len()))?;
        Ok(Self(arr))
    }

    pub fn from_hex(text: &str) -> Result<Self, EepromError> {
        let digits: Vec<u8> = text
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| {
                c.to_digit(16)
                    .map(|d| d as u8)
                    .ok_or_else(|| EepromError::BadHex(format!("invalid character `{c}`")))
            })
            .collect::<Result<_, _>>()?;
        if digits.len() % 2 == 1 {
            return Err(EepromError::BadHex(format!(
                "odd number of hex digits ({})",
                digits.len()
            )));
        }
        if digits.len() != 2 * EEPROM_SIZE {
            return Err(EepromError::BadImageSize(digits.len() / 2));
        }
        let bytes: Vec<u8> = digits.chunks(2).map(|p| (p[0] << 4) | p[1]).collect();
        Self::from_bytes(&bytes)
    }

    /// 256 uppercase hex digits, no separators.
    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02X}")).collect()
    }

    /// The `.eep.hex` file layout: 8 lines of 32 uppercase digits.
    pub fn to_hex_lines(&self) -> String {
        let mut out = String::with_capacity(8 * 33);
        for chunk in self.0.chunks(16) {
            for b in chunk {
                out.push_str(&format!("{b:02X}"));
            }
            out.push('\n');
        }
        out
    }

    /// Files ending in `.hex` are read as text, anything else as raw binary.
    pub fn load(path: &Path) -> Result<Self, EepromError> {
        if is_hex_path(path) {
            Self::from_hex(&fs::read_to_string(path)?)
        } else {
            Self::from_bytes(&fs::read(path)?)
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), EepromError> {
        if is_hex_path(path) {
            fs::write(path, self.to_hex_lines())?;
        } else {
            fs::write(path, self.0)?;
        }
        Ok(())
    }
}

fn is_hex_path(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("hex"))
}

#[derive(Debug, Clone)]
pub struct Eeprom {
    image: EepromImage,
    arm: ArmState,
    write_count: u64,
    read_count: u64,
}

impl Default for Eeprom {
    fn default() -> Self {
        Self::new(EepromImage::factory())
    }
}

impl Eeprom {
    pub fn new(image: EepromImage) -> Self {
        Self {
            image,
            arm: ArmState::Idle,
            write_count: 0,
            read_count: 0,
        }
    }

    pub fn image(&self) -> &EepromImage {
        &self.image
    }

    pub fn arm_state(&self) -> ArmState {
        self.arm
    }

    pub fn write_count(&self) -> u64 {
        self.write_count
    }

    pub fn read_count(&self) -> u64 {
        self.read_count
    }

    pub fn read(&mut self, addr: usize) -> Result<u8, EepromError> {
        let v = *self
            .image
            .0
            .get(addr)
            .ok_or(EepromError::AddressOutOfRange(addr))?;
        self.read_count += 1;
        Ok(v)
    }

    pub fn write_control(&mut self, value: u8) {
        self.arm = self.arm.next(value);
    }

    pub fn write(&mut self, addr: usize, value: u8) -> Result<(), EepromError> {
        let armed = std::mem::take(&mut self.arm) == ArmState::Armed;
        if addr >= EEPROM_SIZE {
            return Err(EepromError::AddressOutOfRange(addr));
        }
        if !armed {
            return Err(EepromError::WriteNotArmed);
        }
        self.image.0[addr] = value;
        self.write_count += 1;
        Ok(())
    }
}
