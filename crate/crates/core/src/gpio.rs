//! Virtual time base and pin-level electrical fabric.
//!
//! The fabric models the 16 I/O pins of the controller (PORTA and PORTB),
//! their direction/latch/pull-up configuration, and mechanical switches that
//! short two pins together. Level resolution on a net follows a fixed
//! priority: a strong LOW driver wins, then a strong HIGH driver, then a weak
//! pull-up, and finally the configurable floating default.
//!
//! Switch transitions are scheduled on a single timestamp-ordered queue and
//! applied as the clock advances.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PIN_COUNT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Port {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PinId {
    pub port: Port,
    pub index: u8,
}

impl PinId {
    pub const fn new(port: Port, index: u8) -> Self {
        assert!(index < 8, "pin index out of range");
        Self { port, index }
    }

    pub const fn a(index: u8) -> Self {
        Self::new(Port::A, index)
    }

    pub const fn b(index: u8) -> Self {
        Self::new(Port::B, index)
    }

    /// Dense index 0..16, PORTA first.
    pub const fn slot(self) -> usize {
        match self.port {
            Port::A => self.index as usize,
            Port::B => 8 + self.index as usize,
        }
    }

    pub fn from_slot(slot: usize) -> Self {
        if slot < 8 {
            Self::a(slot as u8)
        } else {
            Self::b((slot - 8) as u8)
        }
    }

    pub fn all() -> impl Iterator<Item = PinId> {
        (0..PIN_COUNT).map(PinId::from_slot)
    }
}

impl fmt::Display for PinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let port = match self.port {
            Port::A => 'A',
            Port::B => 'B',
        };
        write!(f, "R{}{}", port, self.index)
    }
}

impl std::str::FromStr for PinId {
    type Err = String;

    /// Accepts `RA4`, `rb0`, `A4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let up = s.trim().to_ascii_uppercase();
        let rest = up.strip_prefix('R').unwrap_or(&up);
        let mut chars = rest.chars();
        let port = match chars.next() {
            Some('A') => Port::A,
            Some('B') => Port::B,
            _ => return Err(format!("bad pin name `{s}`")),
        };
        let index: u8 = chars
            .as_str()
            .parse()
            .map_err(|_| format!("bad pin name `{s}`"))?;
        if index > 7 {
            return Err(format!("pin index out of range in `{s}`"));
        }
        Ok(PinId::new(port, index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub fn is_high(self) -> bool {
        self == Level::High
    }
}

impl From<bool> for Level {
    fn from(high: bool) -> Self {
        if high {
            Level::High
        } else {
            Level::Low
        }
    }
}

impl std::ops::Not for Level {
    type Output = Level;

    fn not(self) -> Level {
        match self {
            Level::Low => Level::High,
            Level::High => Level::Low,
        }
    }
}

/// TRIS semantics: a set bit means input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PinConfig {
    pub direction: Direction,
    pub latch: Level,
    /// Only has an effect while the pin is an input.
    pub weak_pullup: bool,
    /// An open-drain output only ever sinks; a HIGH latch leaves the pin undriven.
    pub open_drain: bool,
}

impl PinConfig {
    pub const fn input(weak_pullup: bool) -> Self {
        Self {
            direction: Direction::Input,
            latch: Level::Low,
            weak_pullup,
            open_drain: false,
        }
    }

    pub const fn output(latch: Level) -> Self {
        Self {
            direction: Direction::Output,
            latch,
            weak_pullup: false,
            open_drain: false,
        }
    }

    pub const fn open_drain(latch: Level) -> Self {
        Self {
            direction: Direction::Output,
            latch,
            weak_pullup: false,
            open_drain: true,
        }
    }

    /// Power-on state: input, no pull-up.
    pub const fn reset() -> Self {
        Self::input(false)
    }

    /// What this pin contributes to its net as a driver.
    fn strong_drive(&self) -> Option<Level> {
        match (self.direction, self.open_drain, self.latch) {
            (Direction::Input, _, _) => None,
            (Direction::Output, true, Level::High) => None,
            (Direction::Output, _, level) => Some(level),
        }
    }

    fn pulls_up(&self) -> bool {
        self.direction == Direction::Input && self.weak_pullup
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchId(pub u16);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchNet {
    pub switch_id: SwitchId,
    pub endpoints: (PinId, PinId),
    pub closed: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GpioError {
    #[error("pin {0} is configured as input and cannot be driven")]
    DrivingInputPin(PinId),
    #[error("unknown switch {0:?}")]
    UnknownSwitch(SwitchId),
}

/// Monotonic simulated time in microseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimClock {
    t_us: u64,
}

impl SimClock {
    pub fn now(&self) -> u64 {
        self.t_us
    }

    fn set(&mut self, t_us: u64) {
        debug_assert!(t_us >= self.t_us, "clock must not run backwards");
        self.t_us = self.t_us.max(t_us);
    }
}

/// Opaque marker for PORTB change detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortMark(u64);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GpioDiagnostics {
    /// Samples that resolved to the floating default.
    pub float_reads: u64,
    /// Samples of a net with both strong HIGH and strong LOW drivers.
    pub bus_contention: u64,
}

/// An applied switch transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SwitchEvent {
    pub t_us: u64,
    pub switch_id: SwitchId,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Pending {
    at: u64,
    seq: u64,
    switch: u16,
    closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Resolution {
    level: Level,
    floating: bool,
    contention: bool,
}

/// Sampled levels of PORTB pins that are inputs; `None` for outputs.
type PortbSignature = [Option<Level>; 8];

#[derive(Debug, Clone)]
pub struct Gpio {
    clock: SimClock,
    pins: [PinConfig; PIN_COUNT],
    switches: Vec<SwitchNet>,
    queue: BinaryHeap<Reverse<Pending>>,
    next_seq: u64,
    floating_default: Level,
    diagnostics: GpioDiagnostics,
    portb_signature: PortbSignature,
    portb_changes: u64,
    portb_history: Option<Vec<(u64, PortbSignature)>>,
    switch_log: Vec<SwitchEvent>,
}

impl Default for Gpio {
    fn default() -> Self {
        Self::new()
    }
}

impl Gpio {
    pub fn new() -> Self {
        Self::with_floating_default(Level::High)
    }

    pub fn with_floating_default(floating_default: Level) -> Self {
        let mut gpio = Self {
            clock: SimClock::default(),
            pins: [PinConfig::reset(); PIN_COUNT],
            switches: Vec::new(),
            queue: BinaryHeap::new(),
            next_seq: 0,
            floating_default,
            diagnostics: GpioDiagnostics::default(),
            portb_signature: [None; 8],
            portb_changes: 0,
            portb_history: None,
            switch_log: Vec::new(),
        };
        gpio.portb_signature = gpio.compute_portb_signature();
        gpio
    }

    /// Starts the clock at `t_us` instead of zero (used when power-cycling a
    /// running simulation).
    pub fn starting_at(mut self, t_us: u64) -> Self {
        self.clock.set(t_us);
        self
    }

    /// Keep a full PORTB level history (off by default; it grows unbounded).
    pub fn record_history(&mut self, on: bool) {
        self.portb_history = on.then(Vec::new);
    }

    pub fn portb_history(&self) -> Option<&[(u64, PortbSignature)]> {
        self.portb_history.as_deref()
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn diagnostics(&self) -> GpioDiagnostics {
        self.diagnostics
    }

    pub fn floating_default(&self) -> Level {
        self.floating_default
    }

    pub fn config(&self, pin: PinId) -> PinConfig {
        self.pins[pin.slot()]
    }

    pub fn configure_pin(&mut self, pin: PinId, cfg: PinConfig) {
        self.pins[pin.slot()] = cfg;
        self.refresh_portb();
    }

    pub fn drive(&mut self, pin: PinId, level: Level) -> Result<(), GpioError> {
        let cfg = &mut self.pins[pin.slot()];
        if cfg.direction == Direction::Input {
            return Err(GpioError::DrivingInputPin(pin));
        }
        cfg.latch = level;
        self.refresh_portb();
        Ok(())
    }

    /// Reads the resolved level of `pin`'s net and updates diagnostics.
    pub fn sample(&mut self, pin: PinId) -> Level {
        let r = self.resolve(pin);
        if r.floating {
            self.diagnostics.float_reads += 1;
        }
        if r.contention {
            self.diagnostics.bus_contention += 1;
        }
        r.level
    }

    /// Same as [`Gpio::sample`] without touching the diagnostics counters.
    pub fn peek(&self, pin: PinId) -> Level {
        self.resolve(pin).level
    }

    pub fn register_switch(&mut self, a: PinId, b: PinId) -> SwitchId {
        let id = SwitchId(self.switches.len() as u16);
        self.switches.push(SwitchNet {
            switch_id: id,
            endpoints: (a, b),
            closed: false,
        });
        id
    }

    pub fn switch(&self, id: SwitchId) -> Option<&SwitchNet> {
        self.switches.get(id.0 as usize)
    }

    /// Schedules a switch transition. Times in the past are applied at the
    /// current instant; a transition at or before `now` takes effect
    /// immediately.
    pub fn set_switch(&mut self, id: SwitchId, closed: bool, at: u64) -> Result<(), GpioError> {
        if id.0 as usize >= self.switches.len() {
            return Err(GpioError::UnknownSwitch(id));
        }
        let at = at.max(self.now());
        self.queue.push(Reverse(Pending {
            at,
            seq: self.next_seq,
            switch: id.0,
            closed,
        }));
        self.next_seq += 1;
        if at == self.now() {
            self.fire_due();
        }
        Ok(())
    }

    pub fn next_event_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(p)| p.at)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn advance(&mut self, dt_us: u64) {
        let target = self.now().saturating_add(dt_us);
        self.advance_to(target);
    }

    /// Moves the clock to `t_us`, firing every scheduled transition up to and
    /// including that instant in timestamp order.
    pub fn advance_to(&mut self, t_us: u64) {
        let t_us = t_us.max(self.now());
        while let Some(at) = self.next_event_time() {
            if at > t_us {
                break;
            }
            self.clock.set(at);
            self.fire_due();
        }
        self.clock.set(t_us);
    }

    fn fire_due(&mut self) {
        let now = self.now();
        while let Some(Reverse(p)) = self.queue.peek().copied() {
            if p.at > now {
                break;
            }
            self.queue.pop();
            let sw = &mut self.switches[p.switch as usize];
            if sw.closed != p.closed {
                sw.closed = p.closed;
                self.switch_log.push(SwitchEvent {
                    t_us: now,
                    switch_id: SwitchId(p.switch),
                    closed: p.closed,
                });
                self.refresh_portb();
            }
        }
    }

    /// Every switch transition that actually changed topology, in order.
    pub fn switch_log(&self) -> &[SwitchEvent] {
        &self.switch_log
    }

    pub fn portb_mark(&self) -> PortMark {
        PortMark(self.portb_changes)
    }

    /// True if any PORTB input level changed after `mark` was taken.
    pub fn portb_changed_since(&self, mark: PortMark) -> bool {
        self.portb_changes > mark.0
    }

    pub fn portb_signature(&self) -> PortbSignature {
        self.portb_signature
    }

    /// Bitmask of pins electrically joined to `pin` through closed switches.
    fn net_mask(&self, pin: PinId) -> u16 {
        let mut mask = 1u16 << pin.slot();
        loop {
            let before = mask;
            for sw in self.switches.iter().filter(|s| s.closed) {
                let a = 1u16 << sw.endpoints.0.slot();
                let b = 1u16 << sw.endpoints.1.slot();
                if mask & (a | b) != 0 {
                    mask |= a | b;
                }
            }
            if mask == before {
                return mask;
            }
        }
    }

    fn resolve(&self, pin: PinId) -> Resolution {
        let mask = self.net_mask(pin);
        let mut low = false;
        let mut high = false;
        let mut pulled = false;
        for slot in 0..PIN_COUNT {
            if mask & (1 << slot) == 0 {
                continue;
            }
            let cfg = &self.pins[slot];
            match cfg.strong_drive() {
                Some(Level::Low) => low = true,
                Some(Level::High) => high = true,
                None => pulled |= cfg.pulls_up(),
            }
        }
        let (level, floating) = if low {
            (Level::Low, false)
        } else if high || pulled {
            (Level::High, false)
        } else {
            (self.floating_default, true)
        };
        Resolution {
            level,
            floating,
            contention: low && high,
        }
    }

    fn compute_portb_signature(&self) -> PortbSignature {
        let mut sig = [None; 8];
        for (i, slot) in sig.iter_mut().enumerate() {
            let pin = PinId::b(i as u8);
            if self.pins[pin.slot()].direction == Direction::Input {
                *slot = Some(self.resolve(pin).level);
            }
        }
        sig
    }

    fn refresh_portb(&mut self) {
        let sig = self.compute_portb_signature();
        if sig != self.portb_signature {
            self.portb_signature = sig;
            self.portb_changes += 1;
            let now = self.now();
            if let Some(h) = self.portb_history.as_mut() {
                h.push((now, sig));
            }
        }
    }
}
