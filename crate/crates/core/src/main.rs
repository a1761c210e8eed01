use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use locksim_core::config::{config_pairs, LockConfig};
use locksim_core::eeprom::EepromImage;
use locksim_core::hd44780::{format_trace, format_trace_json};
use locksim_core::scenario::{parse_scenario, run, RunOptions};
use locksim_core::service::{serve, ServiceOptions, DEFAULT_BIND};

#[derive(Parser)]
#[command(name = "locksim", version, about = "Keypad door-lock simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario script and report pass/fail.
    Run {
        script: PathBuf,
        /// EEPROM image (.hex text or 128-byte binary); replaces `eeprom load`.
        #[arg(long)]
        eeprom: Option<PathBuf>,
        /// `key = value` config file, applied after the script's config lines.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Write the LCD bus trace here (JSON if the name ends in .json).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Serve a live simulation over HTTP.
    Serve {
        #[arg(long, default_value = DEFAULT_BIND)]
        bind: SocketAddr,
        /// Advance time only through POST /api/clock.
        #[arg(long)]
        manual_clock: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eeprom: Option<PathBuf>,
    },
}

const EXIT_USAGE: u8 = 2;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_image(path: &Path) -> Result<EepromImage, String> {
    EepromImage::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_cmd(
    script: &Path,
    eeprom: Option<&Path>,
    config: Option<&Path>,
    seed: u64,
    json: bool,
    trace: Option<&Path>,
) -> Result<bool, String> {
    let text = read(script)?;
    let parsed = parse_scenario(&text).map_err(|e| format!("{}: {e}", script.display()))?;
    let config_overrides = match config {
        Some(p) => config_pairs(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        None => Vec::new(),
    };
    let opts = RunOptions {
        seed,
        config_overrides,
        eeprom: eeprom.map(load_image).transpose()?,
        base_dir: script.parent().map(Path::to_path_buf),
    };
    let report = run(&parsed, &opts);
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{report}");
    }
    if let Some(out) = trace {
        let body = if out.extension().is_some_and(|e| e == "json") {
            format_trace_json(&report.trace)
        } else {
            format_trace(&report.trace)
        };
        std::fs::write(out, body).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    Ok(report.passed)
}

fn serve_cmd(
    bind: SocketAddr,
    manual_clock: bool,
    config: Option<&Path>,
    eeprom: Option<&Path>,
) -> Result<(), String> {
    let config = match config {
        Some(p) => LockConfig::parse(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))?,
        None => LockConfig::default(),
    };
    let eeprom = match eeprom {
        Some(p) => load_image(p)?,
        None => EepromImage::factory(),
    };
    let opts = ServiceOptions {
        config,
        eeprom,
        manual_clock,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    eprintln!("locksim listening on http://{bind}");
    rt.block_on(serve(bind, opts)).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Run {
            script,
            eeprom,
            config,
            seed,
            json,
            trace,
        } => match run_cmd(
            &script,
            eeprom.as_deref(),
            config.as_deref(),
            seed,
            json,
            trace.as_deref(),
        ) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::FAILURE,
            Err(e) => {
                eprintln!("locksim: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        },
        Cmd::Serve {
            bind,
            manual_clock,
            config,
            eeprom,
        } => match serve_cmd(bind, manual_clock, config.as_deref(), eeprom.as_deref()) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("locksim: {e}");
                ExitCode::FAILURE
            }
        },
    }
}
