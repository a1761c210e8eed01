//! One line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use locksim_core::config::{LockConfig, ScanStrategy};
use locksim_core::eeprom::{ArmState, Eeprom, EepromImage};
use locksim_core::firmware::password::verify_password;
use locksim_core::keypad::{keymap, BounceProfile, KeyPosition, KeySymbol};
use locksim_core::scenario::{parse_scenario, run, RunOptions};
use locksim_core::sim::{BuzzerState, LockState};
use locksim_core::FirmwareMode;

type Outcome = Result<String, String>;

const ALPHABET: &[u8; 12] = b"0123456789*#";

fn keymap_fidelity() -> Outcome {
    let table = ["123A", "456B", "789C", "*0#D"];
    let mut matched = 0;
    for (r, row) in table.iter().enumerate() {
        for (c, ch) in row.chars().enumerate() {
            let got = keymap(KeyPosition::new(r as u8, c as u8));
            if got.as_char() != ch {
                return Err(format!("({r},{c}) maps to {got}, expected {ch}"));
            }
            matched += 1;
        }
    }
    Ok(format!("{matched}/16 positions match"))
}

fn script_report(text: &str) -> locksim_core::scenario::RunReport {
    run(&parse_scenario(text).unwrap(), &RunOptions::default())
}

fn taps(start_ms: u64, keys: &str) -> (String, u64) {
    let mut out = String::new();
    let mut t = start_ms;
    for c in keys.chars() {
        out.push_str(&format!("at {t} tap {c}\n"));
        t += 120;
    }
    (out, t)
}

fn happy_path() -> Outcome {
    let (mut script, t) = taps(0, "0000000000D");
    script.push_str(&format!(
        "at {t} expect lcd 0 \"verify successfully\"\nat {t} expect lock open\n"
    ));
    let report = script_report(&script);
    if !report.passed {
        return Err(format!("{:?}", report.failures));
    }
    if report.lcd[0] != "verify successfully " || report.lock != LockState::Open {
        return Err(format!("final frame {:?}", report.lcd));
    }
    Ok("row 0 \"verify successfully \", lock open".into())
}

fn submissions(entries: &[&str], expect: &str) -> locksim_core::scenario::RunReport {
    let mut script = String::new();
    let mut t = 0;
    for entry in entries {
        let (s, end) = taps(t, entry);
        script.push_str(&s);
        t = end + 2_000;
    }
    for line in expect.lines() {
        script.push_str(&format!("at {} expect {line}\n", t - 1_800));
    }
    script_report(&script)
}

fn three_strikes() -> Outcome {
    let wrong = ["1111111111D", "2222222222D", "3333333333D"];
    let report = submissions(
        &wrong,
        "buzzer on\nmode alarm\nlock closed\nlcd 0 \"ALARM!\"",
    );
    if !report.passed {
        return Err(format!("3 wrong: {:?}", report.failures));
    }
    let report = submissions(
        &["1111111111D", "2222222222D", "0000000000D"],
        "buzzer off\nmode unlocked\nlock open",
    );
    if !report.passed || report.buzzer != BuzzerState::Off {
        return Err(format!("2 wrong + 1 right: {:?}", report.failures));
    }
    Ok("3 wrong -> ALARM, buzzer on, lock closed; 2 wrong + right -> UNLOCKED, buzzer off".into())
}

fn verify_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut mismatches = 0;
    let mut equal_pairs = 0;
    let random_pw = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        (0..10).map(|_| ALPHABET[rng.random_range(0..12)]).collect()
    };
    for i in 0..10_000 {
        let a = random_pw(&mut rng);
        // every tenth pair is identical so both outcomes are exercised
        let b = if i % 10 == 0 {
            a.clone()
        } else {
            random_pw(&mut rng)
        };
        equal_pairs += usize::from(a == b);
        if verify_password(&a, &b).matched != (a == b) {
            mismatches += 1;
        }
    }
    let mut structured = 0;
    for (k, &s) in ALPHABET.iter().enumerate() {
        let base = vec![s; 10];
        for pos in 0..10 {
            let mut other = base.clone();
            other[pos] = ALPHABET[(k + 1) % 12];
            structured += 1;
            let out = verify_password(&other, &base);
            if out.matched || out.comparisons != pos + 1 {
                mismatches += 1;
            }
        }
    }
    if mismatches > 0 {
        return Err(format!("{mismatches} mismatches"));
    }
    Ok(format!(
        "10000 random pairs ({equal_pairs} equal) + {structured} one-position differences, 0 mismatches"
    ))
}

fn eeprom_arming() -> Outcome {
    let mut armed_pairs = Vec::new();
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            let mut e = Eeprom::default();
            e.write_control(a);
            e.write_control(b);
            if e.arm_state() == ArmState::Armed {
                armed_pairs.push((a, b));
            }
        }
    }
    if armed_pairs != [(0xAA, 0x55)] {
        return Err(format!("armed by {armed_pairs:x?}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0xEE);
    let mut violations = 0;
    let mut accepted_writes = 0u64;
    for _ in 0..100_000 {
        let mut start = [0u8; 128];
        rng.fill(&mut start[..]);
        let mut dut = Eeprom::new(EepromImage(start));
        let mut reference = RefEeprom::new(start);
        for _ in 0..rng.random_range(1..=12) {
            let op = random_eeprom_op(&mut rng);
            let before = *dut.image();
            let dut_ok = match op {
                EepromOp::Control(v) => {
                    dut.write_control(v);
                    false
                }
                EepromOp::Write(addr, v) => dut.write(addr, v).is_ok(),
                EepromOp::Read(addr) => {
                    let _ = dut.read(addr);
                    false
                }
            };
            let ref_ok = reference.apply(op);
            accepted_writes += u64::from(ref_ok);
            let changed = *dut.image() != before;
            if dut_ok != ref_ok || dut.image().0 != reference.bytes || (changed && !ref_ok) {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        return Err(format!("{violations} violations in fuzzing"));
    }
    Ok(format!(
        "65536 control pairs, only (AA,55) arms; 100000 fuzz sequences ({accepted_writes} armed writes), 0 violations"
    ))
}

fn change_persistence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("lock.hex");
    let mut s = sim();
    type_keys(&mut s, "0000000000DC");
    type_keys(&mut s, "4711#*0815D");
    if s.frame().row(0).trim_end() != "Password Changed" {
        return Err(format!("after change: {}", s.frame()));
    }
    s.board()
        .eeprom
        .image()
        .save(&path)
        .map_err(|e| e.to_string())?;
    drop(s);

    let image = EepromImage::load(&path).map_err(|e| e.to_string())?;
    let mut s = sim_with(LockConfig::default(), image);
    type_keys(&mut s, "0000000000D");
    if s.lock_open() {
        return Err("old password still opens".into());
    }
    s.advance_ms(2_000);
    type_keys(&mut s, "4711#*0815D");
    if !s.lock_open() {
        return Err(format!("new password rejected: {}", s.frame()));
    }
    Ok("new password opens after save/restart/load, old one fails".into())
}

fn debounce() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut wrong = Vec::new();
    for i in 0..200 {
        let mut s = sim();
        let sym = KeySymbol::ALL[rng.random_range(0..16)];
        let n_press = rng.random_range(2..=10);
        let n_release = rng.random_range(2..=10);
        let press = BounceProfile::random(&mut rng, true, n_press, 19_999);
        let release = BounceProfile::random(&mut rng, false, n_release, 19_999);
        let t = s.now_us() + rng.random_range(0..5_000);
        s.press(sym, t, Some(&press)).unwrap();
        s.release(sym, t + 100_000, Some(&release)).unwrap();
        s.advance_ms(300);
        let log = s.firmware().symbol_log();
        if log.len() != 1 || log[0].1 != sym {
            wrong.push((i, log.len()));
        }
    }
    if !wrong.is_empty() {
        return Err(format!("profiles with wrong counts: {wrong:?}"));
    }

    // press at each phase relative to the 5 ms scan tick, starting on a
    // tick instant the firmware has not run yet
    let mut phases = 0;
    for phase_us in (0..5_000).step_by(500) {
        let mut s = sim();
        let t = s.now_us() + s.config().tick_us + phase_us;
        s.tap(KeySymbol::Digit6, t, 25_000).unwrap();
        s.tap(KeySymbol::Digit6, t + 50_000, 25_000).unwrap();
        s.advance_ms(200);
        let n = s.firmware().symbol_log().len();
        if n != 2 {
            return Err(format!(
                "25 ms double tap at phase {phase_us} us gave {n} events"
            ));
        }
        phases += 1;
    }
    Ok(format!(
        "200/200 bounced presses -> 1 event each; 25 ms double tap -> 2 events at {phases}/{phases} tick phases"
    ))
}

fn identified(strategy: ScanStrategy) -> (usize, Vec<String>) {
    let config = LockConfig {
        scan_strategy: strategy,
        ..LockConfig::default()
    };
    let mut correct = 0;
    let mut misreads = Vec::new();
    for sym in KeySymbol::ALL {
        let mut s = sim_with(config.clone(), EepromImage::factory());
        let t = s.now_us();
        s.tap(sym, t, 60_000).unwrap();
        s.advance_ms(150);
        let seen: Vec<_> = s.firmware().symbol_log().iter().map(|&(_, k)| k).collect();
        if seen == [sym] {
            correct += 1;
        } else {
            misreads.push(format!("{sym}->{seen:?}"));
        }
    }
    (correct, misreads)
}

fn conclusion() -> Outcome {
    if !LockConfig::default().fault_model.coupled_inputs_enabled {
        return Err("fault model is not on".into());
    }
    let (per_pin, per_pin_bad) = identified(ScanStrategy::PerPin);
    let (conv, conv_bad) = identified(ScanStrategy::Conventional);
    if per_pin != 16 {
        return Err(format!("per_pin misread {per_pin_bad:?}"));
    }
    if conv == 16 {
        return Err("conventional scan read every key correctly".into());
    }
    Ok(format!(
        "per_pin 16/16 correct; conventional {conv}/16 correct, misread: {}",
        conv_bad.join(" ")
    ))
}

fn sleep_power() -> Outcome {
    let mut s = sim();
    s.advance_ms(5_000);
    if s.mode() != FirmwareMode::Sleeping {
        return Err(format!("not asleep after idle timeout: {}", s.mode()));
    }
    let frozen = s.scans_executed();
    s.advance_ms(10_000);
    let later = s.scans_executed();
    if later != frozen {
        return Err(format!("scan counter moved {frozen} -> {later}"));
    }
    let t = s.now_us();
    s.press(KeySymbol::Digit2, t, None).unwrap();
    s.advance_us(s.config().tick_us);
    if s.mode() == FirmwareMode::Sleeping || s.scans_executed() != frozen + 1 {
        return Err(format!(
            "one tick after press: {} with {} scans",
            s.mode(),
            s.scans_executed()
        ));
    }
    Ok(format!(
        "scans held at {frozen} for 10 s asleep; resumed on the next tick"
    ))
}

fn lcd_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x44780);
    let mut diffs = 0;
    let mut ops_total = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=60);
        let mut ops = vec![LcdOp::Command(0x28), LcdOp::Command(0x0C)];
        ops.extend((0..len).map(|_| random_lcd_op(&mut rng)));
        ops_total += ops.len();
        let lcd = lcd_over_bus(&ops);
        if frame_rows(&lcd.frame()) != naive_frame(&ops) {
            diffs += 1;
        }
    }
    if diffs > 0 {
        return Err(format!("{diffs} frame diffs"));
    }
    let init = lcd_over_bus(&[LcdOp::Command(0x28)]);
    let st = init.state();
    if !(st.four_bit_mode && st.two_lines) {
        return Err("0x20,0x28 did not select 4-bit/2-line".into());
    }
    Ok(format!(
        "10000 sequences ({ops_total} ops) over the 4-bit bus, 0 frame diffs; init 0x20,0x28 -> 4-bit/2-line"
    ))
}

fn security() -> Outcome {
    use KeySymbol::*;
    let config = check_config();
    let runs: [(&[KeySymbol], &[u8]); 2] = [
        (&[Digit1, Digit2, Backspace, Enter], b"121"),
        (&[Digit1, Modify, Lock, Enter], b"111"),
    ];
    let mut summary = Vec::new();
    for (alphabet, pw) in runs {
        let report = model_check(alphabet, pw, &config, 12);
        if let Some(cx) = report.counterexamples.first() {
            return Err(format!("{}: {:?}", cx.reason, cx.inputs));
        }
        let letters: String = alphabet.iter().map(|k| k.as_char()).collect();
        summary.push(format!(
            "{{{letters}}} pw {}: {} states, {} transitions",
            String::from_utf8_lossy(pw),
            report.distinct_states,
            report.transitions
        ));
    }
    let (seqs, violations) = brute_force(&[Digit1, Digit2, Backspace, Enter], b"121", &config, 8);
    if violations > 0 {
        return Err(format!("{violations} brute-force violations"));
    }
    Ok(format!(
        "len<=12, 0 counterexamples; {}; unmerged cross-check {seqs} sequences len<=8",
        summary.join("; ")
    ))
}

fn main() {
    type Check = (&'static str, fn() -> Outcome);
    let criteria: [Check; 11] = [
        ("keymap fidelity", keymap_fidelity),
        ("happy-path unlock", happy_path),
        ("three-strike alarm", three_strikes),
        ("verify_password oracle", verify_oracle),
        ("eeprom arming", eeprom_arming),
        ("password change persistence", change_persistence),
        ("debounce", debounce),
        ("scan strategy conclusion", conclusion),
        ("sleep/power", sleep_power),
        ("hd44780 oracle", lcd_oracle),
        ("security model-check", security),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
