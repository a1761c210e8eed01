//! Scripted scenarios: timed key events plus expectations, run against a
//! fresh simulation.
//!
//! ```text
//! # unlock with the factory password
//! config idle_timeout_ms 8000
//! at 0 tap 0
//! at 100 tap 0
//! at 1000 tap D
//! at 1200 expect lcd 0 "verify successfully"
//! at 1200 expect lock open
//! ```
//!
//! `tap` expands into a press and a release `tap_ms` later (60 ms unless a
//! preceding `config tap_ms` line says otherwise). `press`, `release` and
//! `tap` accept a trailing `bounce` that adds a seeded contact-bounce train.
//! `config` and `eeprom load` lines must precede every `at` line.
//!
//! Key events at time `t` are visible to the firmware tick at `t`;
//! expectations at `t` observe the state after that tick. At equal times,
//! key events are applied before expectations.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::LockConfig;
use crate::eeprom::EepromImage;
use crate::firmware::FirmwareMode;
use crate::hd44780::{LcdFrame, TraceRecord, COLS};
use crate::keypad::{BounceProfile, KeySymbol};
use crate::sim::{BuzzerState, LockState, SimEvent, Simulation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct SyntaxError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyAction {
    Press,
    Release,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// Text is stored blank-padded to the row width.
    Lcd {
        row: usize,
        text: String,
    },
    Lock(LockState),
    Buzzer(BuzzerState),
    Mode(FirmwareMode),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Directive {
    Key {
        at_ms: u64,
        action: KeyAction,
        sym: KeySymbol,
        bounce: bool,
    },
    Expect {
        at_ms: u64,
        what: Expectation,
    },
    AdvanceTo {
        at_ms: u64,
    },
    EepromLoad(String),
    SetConfig {
        key: String,
        value: String,
    },
}

impl Directive {
    pub fn at_ms(&self) -> Option<u64> {
        match self {
            Directive::Key { at_ms, .. }
            | Directive::Expect { at_ms, .. }
            | Directive::AdvanceTo { at_ms } => Some(*at_ms),
            _ => None,
        }
    }
}

fn quote(text: &str) -> String {
    let mut out = String::from("\"");
    for c in text.trim_end().chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for Directive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Directive::Key {
                at_ms,
                action,
                sym,
                bounce,
            } => {
                let verb = match action {
                    KeyAction::Press => "press",
                    KeyAction::Release => "release",
                };
                write!(f, "at {at_ms} {verb} {sym}")?;
                if *bounce {
                    write!(f, " bounce")?;
                }
                Ok(())
            }
            Directive::Expect { at_ms, what } => {
                write!(f, "at {at_ms} expect ")?;
                match what {
                    Expectation::Lcd { row, text } => write!(f, "lcd {row} {}", quote(text)),
                    Expectation::Lock(LockState::Open) => write!(f, "lock open"),
                    Expectation::Lock(LockState::Closed) => write!(f, "lock closed"),
                    Expectation::Buzzer(BuzzerState::On) => write!(f, "buzzer on"),
                    Expectation::Buzzer(BuzzerState::Off) => write!(f, "buzzer off"),
                    Expectation::Mode(m) => write!(f, "mode {}", m.name().to_ascii_lowercase()),
                }
            }
            Directive::AdvanceTo { at_ms } => write!(f, "at {at_ms} advance"),
            Directive::EepromLoad(path) => write!(f, "eeprom load {path}"),
            Directive::SetConfig { key, value } => write!(f, "config {key} {value}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Step {
    pub line: usize,
    pub directive: Directive,
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioScript {
    pub steps: Vec<Step>,
}

/// Scripts are equal when their directives are; source lines are ignored.
impl PartialEq for ScenarioScript {
    fn eq(&self, other: &Self) -> bool {
        self.steps.len() == other.steps.len()
            && self
                .steps
                .iter()
                .zip(&other.steps)
                .all(|(a, b)| a.directive == b.directive)
    }
}

impl Eq for ScenarioScript {}

impl fmt::Display for ScenarioScript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            writeln!(f, "{}", step.directive)?;
        }
        Ok(())
    }
}

impl ScenarioScript {
    pub fn directives(&self) -> impl Iterator<Item = &Directive> {
        self.steps.iter().map(|s| &s.directive)
    }
}

fn unquote(raw: &str) -> Result<String, String> {
    let inner = raw
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or("LCD text must be in double quotes")?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some(e @ ('"' | '\\')) => out.push(e),
                _ => return Err("bad escape in LCD text".into()),
            },
            '"' => return Err("unescaped quote in LCD text".into()),
            c => out.push(c),
        }
    }
    if out.chars().count() > COLS {
        return Err(format!("LCD text longer than {COLS} characters"));
    }
    Ok(LcdFrame::pad(&out))
}

fn parse_timed(rest: &str, tap_ms: u64) -> Result<Vec<Directive>, String> {
    let mut words = rest.splitn(3, char::is_whitespace);
    let at_ms: u64 = words
        .next()
        .and_then(|w| w.parse().ok())
        .ok_or("expected a time in milliseconds after `at`")?;
    let verb = words.next().ok_or("missing directive after time")?;
    let args = words.next().unwrap_or("").trim();
    let key_args = |args: &str| -> Result<(KeySymbol, bool), String> {
        let mut it = args.split_whitespace();
        let sym: KeySymbol = it
            .next()
            .ok_or("missing key symbol")?
            .parse()
            .map_err(|e: crate::keypad::KeypadError| e.to_string())?;
        let bounce = match it.next() {
            None => false,
            Some("bounce") => true,
            Some(other) => return Err(format!("unexpected `{other}`")),
        };
        if let Some(extra) = it.next() {
            return Err(format!("unexpected `{extra}`"));
        }
        Ok((sym, bounce))
    };
    let key = |action, sym, bounce, at_ms| Directive::Key {
        at_ms,
        action,
        sym,
        bounce,
    };
    Ok(match verb {
        "press" => {
            let (sym, bounce) = key_args(args)?;
            vec![key(KeyAction::Press, sym, bounce, at_ms)]
        }
        "release" => {
            let (sym, bounce) = key_args(args)?;
            vec![key(KeyAction::Release, sym, bounce, at_ms)]
        }
        "tap" => {
            let (sym, bounce) = key_args(args)?;
            vec![
                key(KeyAction::Press, sym, bounce, at_ms),
                key(KeyAction::Release, sym, bounce, at_ms + tap_ms),
            ]
        }
        "advance" if args.is_empty() => vec![Directive::AdvanceTo { at_ms }],
        "expect" => {
            let (what, arg) = args
                .split_once(char::is_whitespace)
                .ok_or("incomplete expectation")?;
            let arg = arg.trim();
            let what = match what {
                "lcd" => {
                    let (row, text) = arg
                        .split_once(char::is_whitespace)
                        .ok_or("expected `lcd <row> \"text\"`")?;
                    let row: usize = row.parse().map_err(|_| format!("bad LCD row `{row}`"))?;
                    if row > 1 {
                        return Err(format!("LCD row {row} does not exist"));
                    }
                    Expectation::Lcd {
                        row,
                        text: unquote(text.trim())?,
                    }
                }
                "lock" => Expectation::Lock(match arg {
                    "open" => LockState::Open,
                    "closed" => LockState::Closed,
                    _ => return Err(format!("expected open or closed, got `{arg}`")),
                }),
                "buzzer" => Expectation::Buzzer(match arg {
                    "on" => BuzzerState::On,
                    "off" => BuzzerState::Off,
                    _ => return Err(format!("expected on or off, got `{arg}`")),
                }),
                "mode" => Expectation::Mode(
                    FirmwareMode::from_name(arg).ok_or_else(|| format!("unknown mode `{arg}`"))?,
                ),
                other => return Err(format!("unknown expectation `{other}`")),
            };
            vec![Directive::Expect { at_ms, what }]
        }
        other => return Err(format!("unknown directive `{other}`")),
    })
}

pub fn parse_scenario(text: &str) -> Result<ScenarioScript, SyntaxError> {
    let mut steps: Vec<Step> = Vec::new();
    let mut config = LockConfig::default();
    let mut last_at: Option<u64> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| SyntaxError { line, reason };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (head, rest) = trimmed
            .split_once(char::is_whitespace)
            .map(|(h, r)| (h, r.trim()))
            .unwrap_or((trimmed, ""));
        match head {
            "at" => {
                let directives = parse_timed(rest, config.tap_ms).map_err(err)?;
                let at = directives[0].at_ms().unwrap();
                if last_at.is_some_and(|l| at < l) {
                    return Err(err(format!("time {at} ms goes backwards")));
                }
                last_at = Some(at);
                steps.extend(
                    directives
                        .into_iter()
                        .map(|directive| Step { line, directive }),
                );
            }
            "config" | "eeprom" if last_at.is_some() => {
                return Err(err(format!("`{head}` must come before any `at` line")));
            }
            "config" => {
                let (key, value) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("expected `config <key> <value>`".into()))?;
                let value = value.trim();
                config.set(key, value).map_err(|e| err(e.to_string()))?;
                steps.push(Step {
                    line,
                    directive: Directive::SetConfig {
                        key: key.into(),
                        value: value.into(),
                    },
                });
            }
            "eeprom" => {
                let path = rest
                    .strip_prefix("load")
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .ok_or_else(|| err("expected `eeprom load <path>`".into()))?;
                steps.push(Step {
                    line,
                    directive: Directive::EepromLoad(path.into()),
                });
            }
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    // releases produced by `tap` land in time order; at equal times key
    // events go first, otherwise file order is kept
    steps.sort_by_key(|s| {
        let d = &s.directive;
        (d.at_ms(), !matches!(d, Directive::Key { .. }))
    });
    Ok(ScenarioScript { steps })
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Applied after the script's own `config` lines.
    pub config_overrides: Vec<(String, String)>,
    /// Replaces any `eeprom load` in the script.
    pub eeprom: Option<EepromImage>,
    /// Directory that relative `eeprom load` paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub line: usize,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogEntry {
    pub t_ms: u64,
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub passed: bool,
    pub failures: Vec<Failure>,
    pub lcd: [String; 2],
    pub lock: LockState,
    pub buzzer: BuzzerState,
    pub t_ms: u64,
    pub scans_executed: u64,
    #[serde(skip)]
    pub events: Vec<LogEntry>,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn frame(&self) -> LcdFrame {
        LcdFrame {
            rows: self.lcd.clone(),
        }
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", if self.passed { "PASS" } else { "FAIL" })?;
        for fl in &self.failures {
            writeln!(f, "line {}:", fl.line)?;
            writeln!(f, "  - expected: {}", fl.expected)?;
            writeln!(f, "  + actual:   {}", fl.actual)?;
        }
        writeln!(f, "events:")?;
        for e in &self.events {
            writeln!(f, "  {:>8} ms  {}", e.t_ms, e.what)?;
        }
        writeln!(
            f,
            "t_ms={} lock={} buzzer={} scans_executed={}",
            self.t_ms,
            lock_word(self.lock),
            buzzer_word(self.buzzer),
            self.scans_executed
        )?;
        writeln!(f, "{}", self.frame())
    }
}

fn lock_word(l: LockState) -> &'static str {
    match l {
        LockState::Open => "open",
        LockState::Closed => "closed",
    }
}

fn buzzer_word(b: BuzzerState) -> &'static str {
    match b {
        BuzzerState::On => "on",
        BuzzerState::Off => "off",
    }
}

fn describe(ev: &SimEvent) -> String {
    use crate::sim::EventKind::*;
    let s = &ev.snapshot;
    match ev.kind {
        LcdChanged => format!("lcd [{}|{}]", s.lcd[0], s.lcd[1]),
        Lock => format!("lock {}", lock_word(s.lock)),
        Buzzer => format!("buzzer {}", buzzer_word(s.buzzer)),
        StateChanged => format!("mode {} attempts {}", s.mode, s.attempts),
    }
}

fn resolve(base: Option<&Path>, path: &str) -> PathBuf {
    let p = Path::new(path);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p.to_path_buf(),
    }
}

/// Runs `script` to its last directive. Failed expectations and rejected
/// key events are reported, not raised.
pub fn run(script: &ScenarioScript, opts: &RunOptions) -> RunReport {
    let mut failures = Vec::new();
    let mut config = LockConfig::default();
    let mut image = EepromImage::factory();
    for step in &script.steps {
        match &step.directive {
            Directive::SetConfig { key, value } => {
                if let Err(e) = config.set(key, value) {
                    failures.push(Failure {
                        line: step.line,
                        expected: format!("valid config `{key} {value}`"),
                        actual: e.to_string(),
                    });
                }
            }
            Directive::EepromLoad(path) if opts.eeprom.is_none() => {
                match EepromImage::load(&resolve(opts.base_dir.as_deref(), path)) {
                    Ok(img) => image = img,
                    Err(e) => failures.push(Failure {
                        line: step.line,
                        expected: format!("loadable EEPROM image `{path}`"),
                        actual: e.to_string(),
                    }),
                }
            }
            _ => {}
        }
    }
    for (key, value) in &opts.config_overrides {
        if let Err(e) = config.set(key, value) {
            failures.push(Failure {
                line: 0,
                expected: format!("valid config `{key} {value}`"),
                actual: e.to_string(),
            });
        }
    }
    if let Some(img) = opts.eeprom {
        image = img;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sim = Simulation::new(config, image);
    let mut events = Vec::new();
    let drain = |sim: &mut Simulation, events: &mut Vec<LogEntry>| {
        events.extend(sim.take_events().iter().map(|e| LogEntry {
            t_ms: e.snapshot.t_ms,
            what: describe(e),
        }));
    };

    for step in &script.steps {
        let Some(at_ms) = step.directive.at_ms() else {
            continue;
        };
        // a key event at a tick instant is seen by that tick; an
        // expectation sees the state after it
        let at_us = at_ms * 1_000;
        match step.directive {
            Directive::Key { .. } => sim.advance_to_us(at_us.saturating_sub(1)),
            _ => sim.advance_to_us(at_us),
        }
        drain(&mut sim, &mut events);
        match &step.directive {
            Directive::Key {
                action,
                sym,
                bounce,
                ..
            } => {
                let closed = *action == KeyAction::Press;
                let profile = bounce.then(|| BounceProfile::preset(&mut rng, closed));
                let at = at_ms * 1_000;
                let result = match action {
                    KeyAction::Press => sim.press(*sym, at, profile.as_ref()),
                    KeyAction::Release => sim.release(*sym, at, profile.as_ref()),
                };
                if let Err(e) = result {
                    failures.push(Failure {
                        line: step.line,
                        expected: step.directive.to_string(),
                        actual: e.to_string(),
                    });
                }
            }
            Directive::Expect { what, .. } => {
                if let Some((expected, actual)) = check(&sim, what) {
                    failures.push(Failure {
                        line: step.line,
                        expected,
                        actual,
                    });
                }
            }
            _ => {}
        }
    }
    drain(&mut sim, &mut events);

    let snap = sim.snapshot();
    RunReport {
        passed: failures.is_empty(),
        failures,
        lcd: snap.lcd,
        lock: snap.lock,
        buzzer: snap.buzzer,
        t_ms: snap.t_ms,
        scans_executed: sim.scans_executed(),
        events,
        trace: sim.board().lcd.bus_trace().to_vec(),
    }
}

/// `Some((expected, actual))` when the expectation does not hold.
fn check(sim: &Simulation, what: &Expectation) -> Option<(String, String)> {
    let snap = sim.snapshot();
    let (expected, actual) = match what {
        Expectation::Lcd { row, text } => (
            format!("lcd {row} \"{text}\""),
            format!("lcd {row} \"{}\"", snap.lcd[*row]),
        ),
        Expectation::Lock(l) => (
            format!("lock {}", lock_word(*l)),
            format!("lock {}", lock_word(snap.lock)),
        ),
        Expectation::Buzzer(b) => (
            format!("buzzer {}", buzzer_word(*b)),
            format!("buzzer {}", buzzer_word(snap.buzzer)),
        ),
        Expectation::Mode(m) => (format!("mode {m}"), format!("mode {}", snap.mode)),
    };
    (expected != actual).then_some((expected, actual))
}
