//! `underlay` — CDMA-underlay IoT link tool.
//!
//! Subcommands: `tx` (build packets into an IQ file), `rx` (detect and
//! decode packets from an IQ file), `sweep` (Monte Carlo PER/detection
//! sweeps from a config file to CSV), `calibrate` (CFAR threshold from
//! noise-only windows).
//!
//! Exit codes: `rx` returns 0 when at least one frame decodes, 1 when
//! none does, 2 on I/O or format errors. Other subcommands return 0 on
//! success and 2 on any error.

mod config;
mod iq;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use underlay_core::{
    build_packet_train, calibrate_threshold, detect_and_decode, hadamard_row, run_coexistence_sweep,
    run_multi_ue_sweep, run_single_link_sweep, DetectorConfig, MacFrame, ScenarioConfig,
    SweepResult, TxConfig, DEFAULT_ORDER, PREAMBLE_ROW,
};

#[derive(Parser)]
#[command(name = "underlay", version, about = "CDMA-underlay IoT uplink link tool")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one or more packets and write them as an IQ file
    Tx(TxArgs),
    /// Detect and decode packets from an IQ file
    Rx(RxArgs),
    /// Run a Monte Carlo sweep from a scenario config, writing CSV
    Sweep(SweepArgs),
    /// Calibrate the detection threshold from noise-only windows
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct TxArgs {
    /// Source address, e.g. 0x2A or 42
    #[arg(long, value_parser = parse_u8_maybe_hex, default_value = "0x01")]
    addr: u8,
    /// Payload as hex, e.g. 0x0102 (empty for a header-only frame)
    #[arg(long, default_value = "")]
    payload: String,
    /// Spreading code row (2..order-1; rows 0 and 1 are reserved)
    #[arg(long, default_value_t = 2)]
    code: usize,
    /// Zero samples between packets
    #[arg(long, default_value_t = 0)]
    gap: usize,
    /// Number of identical packets in the train
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Chips per bit (Hadamard order)
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Samples per chip
    #[arg(long, default_value_t = 1)]
    spc: usize,
    /// Per-sample amplitude
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Output IQ file path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RxArgs {
    /// Input IQ file path
    #[arg(long = "in")]
    input: PathBuf,
    /// Candidate code rows, comma-separated, e.g. 2,5,7
    #[arg(long, value_delimiter = ',', default_value = "2")]
    codes: Vec<usize>,
    /// Detection threshold in (0,1], or `auto` to calibrate
    #[arg(long, default_value = "auto")]
    threshold: String,
    /// Correlation window length in samples
    #[arg(long, default_value_t = 10_000)]
    window: usize,
    /// Chips per bit (Hadamard order)
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
    /// Samples per chip
    #[arg(long, default_value_t = 1)]
    spc: usize,
    /// Detection tolerance in samples
    #[arg(long, default_value_t = 2)]
    tolerance: usize,
    /// False-alarm target per window for auto calibration
    #[arg(long, default_value_t = 1e-4)]
    fa_target: f64,
    /// Noise windows for auto calibration (0 = minimum for the target)
    #[arg(long, default_value_t = 0)]
    cal_windows: usize,
    /// Seed for auto calibration
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Scenario config file (flat key=value)
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores; any value yields identical output)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Window length in samples
    #[arg(long, default_value_t = 10_000)]
    window: usize,
    /// False-alarm target per window
    #[arg(long, default_value_t = 1e-4)]
    fa_target: f64,
    /// Number of noise windows (0 = minimum for the target)
    #[arg(long, default_value_t = 0)]
    windows: usize,
    /// RNG seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Chips per bit (Hadamard order)
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tx(args) => cmd_tx(args),
        Command::Rx(args) => return cmd_rx(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Calibrate(args) => cmd_calibrate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_u8_maybe_hex(s: &str) -> Result<u8, String> {
    let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u8::from_str_radix(hex, 16)
    } else {
        s.parse()
    };
    parsed.map_err(|_| format!("`{s}` is not an 8-bit address"))
}

fn parse_hex_payload(s: &str) -> Result<Vec<u8>> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if digits.is_empty() {
        return Ok(Vec::new());
    }
    if !digits.len().is_multiple_of(2) || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        bail!("payload `{s}` is not an even-length hex string");
    }
    (0..digits.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&digits[i..i + 2], 16).map_err(Into::into))
        .collect()
}

fn cmd_tx(args: TxArgs) -> Result<()> {
    let payload = parse_hex_payload(&args.payload)?;
    let frame = MacFrame::new(args.addr, payload).map_err(|e| anyhow!(e))?;
    let ue_code = hadamard_row(args.order, args.code).map_err(|e| anyhow!(e))?;
    let preamble = hadamard_row(args.order, PREAMBLE_ROW).map_err(|e| anyhow!(e))?;
    let cfg =
        TxConfig::with_parts(ue_code, preamble, args.spc, args.amplitude).map_err(|e| anyhow!(e))?;
    if args.count == 0 {
        bail!("--count must be at least 1");
    }
    let frames = vec![frame; args.count];
    let signal = build_packet_train(&frames, args.gap, &cfg);
    iq::write_iq(&args.out, &signal)?;
    println!(
        "wrote {} samples ({} bytes) to {}",
        signal.len(),
        signal.len() * 8,
        args.out.display()
    );
    println!(
        "nominal bit rate: {} bit/s at {} Sps",
        cfg.nominal_bit_rate(signal.sample_rate_hz),
        signal.sample_rate_hz
    );
    Ok(())
}

fn cmd_rx(args: RxArgs) -> ExitCode {
    match try_rx(args) {
        Ok(decoded_any) => {
            if decoded_any {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn try_rx(args: RxArgs) -> Result<bool> {
    let stream = iq::read_iq(&args.input)?;
    let preamble = hadamard_row(args.order, PREAMBLE_ROW).map_err(|e| anyhow!(e))?;
    let threshold = match args.threshold.as_str() {
        "auto" => {
            let n = if args.cal_windows == 0 {
                (10.0 / args.fa_target).ceil() as usize
            } else {
                args.cal_windows
            };
            calibrate_threshold(&preamble, args.window, args.fa_target, n, args.seed)
                .map_err(|e| anyhow!(e))?
        }
        s => s
            .parse::<f64>()
            .with_context(|| format!("threshold `{s}` is neither a number nor `auto`"))?,
    };
    let codes = args
        .codes
        .iter()
        .map(|&r| hadamard_row(args.order, r).map_err(|e| anyhow!(e)))
        .collect::<Result<Vec<_>>>()?;
    let mut det =
        DetectorConfig::new(preamble, codes, args.window, threshold).map_err(|e| anyhow!(e))?;
    det.detection_tolerance_samples = args.tolerance;
    det.samples_per_chip = args.spc;

    let events = detect_and_decode(&stream, &det);
    let mut decoded_any = false;
    for e in &events {
        let (code, addr, len, crc) = match (&e.decoded, e.matched_code_row) {
            (Some(frame), Some(row)) => (
                row.to_string(),
                format!("0x{:02x}", frame.source_address()),
                frame.payload().len().to_string(),
                "ok".to_string(),
            ),
            _ => (
                "-".into(),
                "-".into(),
                "-".into(),
                if e.crc_attempted { "fail" } else { "-" }.to_string(),
            ),
        };
        println!(
            "t={} peak={:.6} code={} addr={} len={} crc={}",
            e.start_index, e.peak_value, code, addr, len, crc
        );
        if let Some(frame) = &e.decoded {
            decoded_any = true;
            let hex: String = frame.payload().iter().map(|b| format!("{b:02x}")).collect();
            println!(
                "addr=0x{:02x} len={} payload={} crc=ok",
                frame.source_address(),
                frame.payload().len(),
                hex
            );
        }
    }
    Ok(decoded_any)
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let cfg = config::parse(&text).map_err(|e| anyhow!(e))?;

    let run = |cfg: &ScenarioConfig| -> Result<SweepResult> {
        if cfg.interferer.is_some() {
            run_coexistence_sweep(cfg).map_err(|e| anyhow!(e))
        } else if cfg.n_ues == 1 {
            run_single_link_sweep(cfg).map_err(|e| anyhow!(e))
        } else {
            // per-UE results pooled into the fixed CSV layout
            Ok(SweepResult::pooled(
                &run_multi_ue_sweep(cfg).map_err(|e| anyhow!(e))?,
            ))
        }
    };

    let result = match args.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .context("building thread pool")?;
            pool.install(|| run(&cfg))?
        }
        None => run(&cfg)?,
    };

    for p in &result.points {
        println!(
            "sinr={} dB: detection={:.4} per={:.4} fa={:.6} trials={}",
            p.sinr_db,
            p.detection_rate(),
            p.packet_error_rate(),
            p.false_alarm_rate(),
            p.trials
        );
    }
    std::fs::write(&args.out, result.to_csv())
        .with_context(|| format!("writing {}", args.out.display()))?;
    // canonical config echo (defaults resolved) for reproducibility
    let mut echo = args.out.as_os_str().to_owned();
    echo.push(".config");
    std::fs::write(&echo, config::serialize(&cfg))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let preamble = hadamard_row(args.order, PREAMBLE_ROW).map_err(|e| anyhow!(e))?;
    let n = if args.windows == 0 {
        (10.0 / args.fa_target).ceil() as usize
    } else {
        args.windows
    };
    let threshold = calibrate_threshold(&preamble, args.window, args.fa_target, n, args.seed)
        .map_err(|e| anyhow!(e))?;
    println!("{threshold:.9}");
    Ok(())
}
