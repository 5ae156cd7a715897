//! `hbc`: sweeps, fits, amplitude estimation, de-embedding and curve
//! comparison from the command line.
//!
//! Exit codes: 0 ok, 1 comparison failed, 2 input error, 3 numeric error,
//! 4 fit error, 5 estimation error.

use clap::{Args, Parser, Subcommand};
use hbc_core::config::{ConfigError, RunConfig};
use hbc_core::estimation::{fit_body_ground_capacitance, fit_return_capacitance, EstimationError, FitResult};
use hbc_core::io::{self, compare, Curve, IoError};
use hbc_core::model::{channel_loss, ChannelConfig, ModelError};
use hbc_core::sampling::{estimate_amplitude, sample_signal, synthesize_square, EstimatorOptions, SamplingError};
use hbc_core::units::{format_quantity, parse_quantity, Unit};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Directory searched for config files given by a relative path that does
/// not exist in the working directory.
const CONFIG_DIR_ENV: &str = "HBC_CONFIG_DIR";

#[derive(Parser)]
#[command(name = "hbc", version, about = "Human body communication channel toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a channel and write a frequency_hz,loss_db,phase_deg curve.
    Sweep {
        /// Run configuration (TOML). Defaults to the probe-10x preset.
        config: Option<PathBuf>,
        /// Use a built-in preset instead of the config's channel.
        #[arg(long)]
        preset: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fit the total return capacitance from c_expt_farads,loss_ratio rows.
    FitReturnCap {
        csv: PathBuf,
        /// Load capacitance, e.g. 13pF.
        #[arg(long)]
        cl: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fit the body-to-ground capacitance from r_ext_ohms,tau_seconds rows.
    FitBodyCap {
        csv: PathBuf,
        /// Load capacitance, e.g. 13pF.
        #[arg(long)]
        cl: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate a square-wave amplitude from a t_seconds,v_volts trace.
    EstimateAmplitude {
        trace: PathBuf,
        #[arg(long, default_value_t = hbc_core::sampling::DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = hbc_core::sampling::DEFAULT_REPETITIONS)]
        reps: usize,
        /// Zero-exclusion threshold, e.g. 50mV. Defaults to 10% of the
        /// largest difference.
        #[arg(long)]
        exclude: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Remove the receive chain given in the config from a measured curve.
    Deembed {
        curve: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare two curves on the same grid.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        tol_db: f64,
    },
    /// Write a synthetic sampled square-wave trace.
    SynthTrace {
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct OutArg {
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WaveArgs {
    /// Peak-to-peak amplitude, e.g. 300mV.
    #[arg(long)]
    amplitude: String,
    /// Square-wave frequency, e.g. 1MHz.
    #[arg(long)]
    frequency: String,
    /// Sampling rate in samples per second, e.g. 300kHz.
    #[arg(long)]
    rate: String,
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    /// Timing jitter as a fraction of the sampling period, in [0, 0.5).
    #[arg(long, default_value_t = 0.45)]
    jitter: f64,
    /// Gaussian noise standard deviation, e.g. 6mV.
    #[arg(long, default_value = "0V")]
    noise: String,
    #[arg(long, default_value_t = 0.5)]
    duty: f64,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl ToString) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

const INPUT: u8 = 2;
const NUMERIC: u8 = 3;
const FIT: u8 = 4;
const ESTIMATION: u8 = 5;

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(INPUT, e)
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Deembed(_) => NUMERIC,
            _ => INPUT,
        };
        Failure::new(code, e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        let code = match e {
            ModelError::Circuit(_) => NUMERIC,
            _ => INPUT,
        };
        Failure::new(code, e)
    }
}

impl From<EstimationError> for Failure {
    fn from(e: EstimationError) -> Self {
        Failure::new(FIT, e)
    }
}

impl From<SamplingError> for Failure {
    fn from(e: SamplingError) -> Self {
        let code = match e {
            SamplingError::NoTransitions | SamplingError::AllNoise => ESTIMATION,
            _ => INPUT,
        };
        Failure::new(code, e)
    }
}

fn quantity(flag: &str, text: &str, unit: Unit) -> Result<f64, Failure> {
    parse_quantity(text, unit)
        .or_else(|_| text.trim().parse::<f64>())
        .map_err(|_| Failure::new(INPUT, format!("--{flag}: cannot parse `{text}` as a {unit:?} quantity")))
}

fn resolve_config(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(CONFIG_DIR_ENV) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
        let with_ext = candidate.with_extension("toml");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let resolved = resolve_config(path);
    log::info!("loading config {}", resolved.display());
    Ok(RunConfig::load(&resolved)?)
}

fn emit(out: &OutArg, bytes: &[u8]) -> Result<(), Failure> {
    let result = match &out.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(bytes).map_err(|e| e.to_string()),
    };
    result.map_err(|m| Failure::new(INPUT, m))
}

fn emit_curve(out: &OutArg, curve: &Curve) -> Result<(), Failure> {
    let mut buf = Vec::new();
    curve.to_writer(&mut buf)?;
    emit(out, &buf)
}

/// An empty measurement file is a fit failure, not a malformed input.
fn measurements<T>(read: Result<Vec<T>, IoError>) -> Result<Vec<T>, Failure> {
    match read {
        Err(IoError::Empty) => Err(Failure::new(FIT, EstimationError::InsufficientData { needed: 1, got: 0 })),
        other => Ok(other?),
    }
}

fn fit_report(name: &str, fit: &FitResult) -> String {
    let mut s = String::new();
    writeln!(s, "{name} = {}", format_quantity(fit.estimate, Unit::Farad)).unwrap();
    writeln!(s, "estimate_farads = {:e}", fit.estimate).unwrap();
    writeln!(s, "rms_residual = {:e}", fit.rms_residual).unwrap();
    writeln!(s, "iterations = {}", fit.iterations).unwrap();
    let residuals: Vec<String> = fit.residuals.iter().map(|r| format!("{r:e}")).collect();
    writeln!(s, "residuals = [{}]", residuals.join(", ")).unwrap();
    s
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Sweep { config, preset, out } => {
            let mut cfg = match config {
                Some(path) => load_config(&path)?,
                None => RunConfig::default(),
            };
            if let Some(name) = preset {
                cfg.channel = ChannelConfig::preset(&name)?;
            }
            log::info!("sweeping {} frequencies", cfg.frequencies.len());
            let response = channel_loss(&cfg.channel, &cfg.frequencies)?;
            emit_curve(&out, &Curve::from_response(&response))?;
        }
        Command::FitReturnCap { csv, cl, out } => {
            let c_load = quantity("cl", &cl, Unit::Farad)?;
            let data = measurements(io::read_return_cap_file(&csv))?;
            let fit = fit_return_capacitance(&data, c_load)?;
            emit(&out, fit_report("c_ret", &fit).as_bytes())?;
        }
        Command::FitBodyCap { csv, cl, out } => {
            let c_load = quantity("cl", &cl, Unit::Farad)?;
            let data = measurements(io::read_time_constant_file(&csv))?;
            let fit = fit_body_ground_capacitance(&data, c_load)?;
            emit(&out, fit_report("c_body", &fit).as_bytes())?;
        }
        Command::EstimateAmplitude {
            trace,
            bins,
            reps,
            exclude,
            out,
        } => {
            let zero_exclusion = exclude.map(|x| quantity("exclude", &x, Unit::Volt)).transpose()?;
            let trace = io::read_trace_file(&trace)?;
            let est = estimate_amplitude(
                &trace,
                &EstimatorOptions {
                    bins,
                    zero_exclusion,
                    repetitions: reps,
                },
            )?;
            let mut s = String::new();
            writeln!(s, "amplitude = {}", format_quantity(est.amplitude, Unit::Volt)).unwrap();
            writeln!(s, "amplitude_volts = {:e}", est.amplitude).unwrap();
            writeln!(s, "bin_width_volts = {:e}", est.bin_width).unwrap();
            writeln!(s, "spread_volts = {:e}", est.spread).unwrap();
            writeln!(s, "histograms_averaged = {}", est.histograms_averaged).unwrap();
            emit(&out, s.as_bytes())?;
        }
        Command::Deembed { curve, config, out } => {
            let cfg = load_config(&config)?;
            let chain = cfg.chain.ok_or_else(|| {
                Failure::new(INPUT, format!("{}: no [[chain]] stages to de-embed", config.display()))
            })?;
            let measured = Curve::read_csv(&curve)?;
            emit_curve(&out, &measured.deembed(&chain, cfg.min_chain_magnitude)?)?;
        }
        Command::Compare { a, b, tol_db } => {
            if !(tol_db.is_finite() && tol_db >= 0.0) {
                return Err(Failure::new(INPUT, format!("--tol-db must be >= 0, got {tol_db}")));
            }
            let report = compare(&Curve::read_csv(&a)?, &Curve::read_csv(&b)?, tol_db)?;
            println!(
                "{}: max |diff| = {:.6} dB at {} Hz (tol {} dB)",
                if report.passed { "PASS" } else { "FAIL" },
                report.max_abs_diff_db,
                report.worst_frequency,
                report.tol_db
            );
            return Ok(if report.passed { 0 } else { 1 });
        }
        Command::SynthTrace { wave, seed, out } => {
            let amplitude = quantity("amplitude", &wave.amplitude, Unit::Volt)?;
            let frequency = quantity("frequency", &wave.frequency, Unit::Hertz)?;
            let rate = quantity("rate", &wave.rate, Unit::Hertz)?;
            let noise = quantity("noise", &wave.noise, Unit::Volt)?;
            let duration = wave.samples as f64 / rate;
            let signal = synthesize_square(amplitude, frequency, wave.duty, noise, duration)?;
            let trace = sample_signal(&signal, rate, wave.jitter, wave.samples, seed)?;
            let mut buf = Vec::new();
            io::write_trace_csv(&trace, &mut buf)?;
            emit(&out, &buf)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
