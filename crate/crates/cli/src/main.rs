use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use pfcnoise::harness::{run_scenario, sweep, synthesize, Scenario};
use pfcnoise::rxdsp::{Receiver, ScanConfig};
use pfcnoise::signal::SignalTrace;
use pfcnoise::txmod::{format_bits, parse_bits, FrameSpec};
use pfcnoise::Error;

#[derive(Parser)]
#[command(
    name = "pfcnoise",
    version,
    about = "Power-line switching-noise channel simulator and receiver"
)]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormat {
    Bin,
    Csv,
}

#[derive(clap::Args)]
struct FrameArgs {
    /// Pilot bit pattern.
    #[arg(long, default_value = "110010")]
    pilot: String,
    /// Symbol duration in milliseconds.
    #[arg(long, default_value_t = 33.0)]
    symbol_ms: f64,
    #[arg(long, default_value_t = 94)]
    payload_bits: usize,
}

impl FrameArgs {
    fn spec(&self) -> pfcnoise::Result<FrameSpec> {
        FrameSpec::new(parse_bits(&self.pilot)?, self.payload_bits, self.symbol_ms / 1e3)
    }
}

#[derive(clap::Args)]
struct RangeArgs {
    #[arg(long, default_value_t = 20e3)]
    f_lo: f64,
    #[arg(long, default_value_t = 150e3)]
    f_hi: f64,
}

impl RangeArgs {
    fn config(&self) -> ScanConfig {
        ScanConfig {
            f_lo_hz: self.f_lo,
            f_hi_hz: self.f_hi,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs a scenario and prints the per-transmitter report as CSV.
    Simulate {
        config: PathBuf,
        /// Writes the CSV report here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Writes one JSON record per frame here.
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Blind decode of a recorded trace.
    Decode {
        trace: PathBuf,
        #[command(flatten)]
        frame: FrameArgs,
        #[command(flatten)]
        range: RangeArgs,
    },
    /// Band scan for a pilot starting at a known time; prints the band.
    Scan {
        trace: PathBuf,
        #[command(flatten)]
        frame: FrameArgs,
        #[command(flatten)]
        range: RangeArgs,
        /// Pilot start within the trace, seconds.
        #[arg(long, default_value_t = 0.0)]
        pilot_start_s: f64,
    },
    /// Repeats a scenario over values of one numeric parameter.
    Sweep {
        config: PathBuf,
        /// Dotted path into the scenario, or a bare field name.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
        /// Independent runs per value.
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        jsonl: Option<PathBuf>,
    },
    /// Writes the synthesized receiver trace of a scenario.
    ExportTrace {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "bin")]
        format: TraceFormat,
    },
}

fn load_scenario(path: &Path, seed: Option<u64>) -> anyhow::Result<Scenario> {
    let mut s = Scenario::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(s)
}

fn emit(text: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Ok(false) means the command ran but no pilot was found.
fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate { config, csv, jsonl } => {
            let s = load_scenario(&config, cli.seed)?;
            let report = run_scenario(&s)?;
            log::info!("run took {:.2} s", report.runtime_s);
            emit(&report.to_csv(), csv.as_deref())?;
            if let Some(p) = jsonl {
                report
                    .write_jsonl(&p)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(report.transmitters.iter().all(|t| t.missed < t.frames.len()))
        }
        Command::Decode { trace, frame, range } => {
            let v = SignalTrace::load(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let rx = Receiver::new(&v, range.config())?;
            let spec = frame.spec()?;
            let acq = rx.acquire(&spec)?;
            println!("lb_hz,ub_hz,frame_start_s,inverted,bits");
            for a in &acq {
                let r = rx.demodulate_in(&a.passband, &spec, None, a.sync.frame_start_s, a.sync.frame_start_s)?;
                println!(
                    "{},{},{},{},{}",
                    a.passband.lb_hz,
                    a.passband.ub_hz,
                    r.frame_start_s,
                    r.inverted,
                    format_bits(&r.bits)
                );
            }
            Ok(!acq.is_empty())
        }
        Command::Scan {
            trace,
            frame,
            range,
            pilot_start_s,
        } => {
            let v = SignalTrace::load(&trace).with_context(|| format!("reading {}", trace.display()))?;
            let band = Receiver::new(&v, range.config())?.scan_at(pilot_start_s, &frame.spec()?)?;
            println!("{},{}", band.lb_hz, band.ub_hz);
            Ok(true)
        }
        Command::Sweep {
            config,
            axis,
            values,
            frames,
            csv,
            jsonl,
        } => {
            let s = load_scenario(&config, cli.seed)?;
            let table = sweep(&s, &axis, &values, frames)?;
            emit(&table.to_csv(), csv.as_deref())?;
            if let Some(p) = jsonl {
                table
                    .write_jsonl(&p)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(true)
        }
        Command::ExportTrace { config, output, format } => {
            let s = load_scenario(&config, cli.seed)?;
            let syn = synthesize(&s)?;
            match format {
                TraceFormat::Bin => syn.trace.save(&output),
                TraceFormat::Csv => syn.trace.save_csv(&output),
            }
            .with_context(|| format!("writing {}", output.display()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            let pilot = e.downcast_ref::<Error>().is_some_and(Error::is_pilot_failure);
            ExitCode::from(if pilot { 2 } else { 1 })
        }
    }
}
