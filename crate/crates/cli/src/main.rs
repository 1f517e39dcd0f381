//! `cfosim` — reproducible CFO-estimation experiments with CSV/JSON output.
//!
//! Every file-producing subcommand writes a JSON manifest next to its
//! output recording the fully resolved parameter set; re-running a manifest
//! configuration reproduces the output byte-identically.

mod manifest;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfosim::analysis::{max_error_at_confidence, min_snr_for_target, ErrorModelInput};
use cfosim::linksim::{
    histogram, run_decode_sweep, run_estimator_trials, EstimatorConfig, SchemeMode, TrialConfig,
};
use cfosim::waveform::{Numerology, PilotLayout};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "cfosim", version, about = "OFDM carrier-frequency-offset estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo histogram of one estimator's output vs the analytic density
    Histogram(HistogramArgs),
    /// Evaluate the decoding criterion, or solve for the minimum SNR
    Criterion(CriterionArgs),
    /// Decode-rate sweep of the two-step scheme over an SNR grid
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Cp,
    Preamble,
    Pilot,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    TwoStep,
    CoarseOnly,
    ResidualOnly,
}

impl From<ModeArg> for SchemeMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::TwoStep => SchemeMode::TwoStep,
            ModeArg::CoarseOnly => SchemeMode::CoarseOnly,
            ModeArg::ResidualOnly => SchemeMode::ResidualOnly,
        }
    }
}

#[derive(Debug, Args)]
struct NumerologyArgs {
    /// Subcarrier spacing in Hz
    #[arg(long, default_value_t = 15_000.0)]
    scs_hz: f64,
    /// DFT size (power of two)
    #[arg(long, default_value_t = 128)]
    n_fft: usize,
    /// Cyclic-prefix length in samples
    #[arg(long, default_value_t = 9)]
    cp_len: usize,
}

impl NumerologyArgs {
    fn build(&self) -> Result<Numerology, CliError> {
        Numerology::new(self.scs_hz, self.n_fft, self.cp_len)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
struct HistogramArgs {
    /// Which estimator to exercise
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    /// Per-sample channel SNR in dB ("inf" disables noise)
    #[arg(long)]
    snr_db: f64,
    /// True carrier frequency offset in Hz
    #[arg(long)]
    cfo_hz: f64,
    /// Number of Monte Carlo trials
    #[arg(long)]
    trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Histogram bin width in Hz (default: model std / 4)
    #[arg(long)]
    bin_width_hz: Option<f64>,
    /// OFDM symbols correlated by the CP estimator
    #[arg(long, default_value_t = 5)]
    cp_symbols: usize,
    #[command(flatten)]
    numerology: NumerologyArgs,
}

#[derive(Debug, Args)]
struct CriterionArgs {
    /// Target decoding error probability, in (0,1)
    #[arg(long)]
    pe: f64,
    /// Maximum tolerable offset error in Hz
    #[arg(long)]
    delta_fmax_hz: f64,
    /// Estimator measurement interval in microseconds
    #[arg(long)]
    delta_t_us: f64,
    /// Solve for the minimum effective SNR instead of tabulating
    #[arg(long)]
    solve_min_snr: bool,
    /// Effective-SNR grid for the table, as LO:HI:STEP in dB
    #[arg(long, default_value = "0:30:1")]
    snr_grid_db: String,
    /// Optional CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Which stages the scheme runs
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// True carrier frequency offset in Hz
    #[arg(long)]
    cfo_hz: f64,
    /// Per-sample channel SNR grid, as LO:HI:STEP in dB
    #[arg(long)]
    snr_db_grid: String,
    /// Monte Carlo trials per grid point
    #[arg(long)]
    trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    /// Payload bits per block
    #[arg(long, default_value_t = 64)]
    payload_bits: usize,
    /// Odd repetition factor of the coding stand-in
    #[arg(long, default_value_t = 3)]
    repetition: usize,
    #[command(flatten)]
    numerology: NumerologyArgs,
}

/// Usage errors exit 2, runtime errors exit 1.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<cfosim::Error> for CliError {
    fn from(e: cfosim::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Histogram(args) => cmd_histogram(&args),
        Command::Criterion(args) => cmd_criterion(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

/// Parse an inclusive LO:HI:STEP grid specification.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!("grid must be LO:HI:STEP, got '{spec}'")));
    }
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| CliError::Usage(format!("invalid grid number '{s}'")))
    };
    let (lo, hi, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
    if step <= 0.0 || hi < lo {
        return Err(CliError::Usage(format!("grid must satisfy lo <= hi, step > 0, got '{spec}'")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

fn desk_pilot_layout(seed: u64) -> PilotLayout {
    PilotLayout {
        pilot_symbol_indices: (0, 4),
        pilot_subcarriers: (0..72).step_by(6).collect(),
        seed,
    }
}

fn cmd_histogram(args: &HistogramArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let num = args.numerology.build()?;
    let config = match args.estimator {
        EstimatorArg::Cp => {
            EstimatorConfig::Cp { n_symbols: args.cp_symbols, n_subcarriers: 72.min(num.n_fft) }
        }
        EstimatorArg::Preamble => EstimatorConfig::Preamble,
        EstimatorArg::Pilot => EstimatorConfig::Pilot {
            layout: desk_pilot_layout(args.seed),
            n_subcarriers: 72.min(num.n_fft),
        },
    };

    let run = run_estimator_trials(&config, &num, args.cfo_hz, args.snr_db, args.trials, args.seed)?;
    if !run.model_std_hz.is_finite() {
        return Err(CliError::Usage(
            "histogram output needs a finite --snr-db for the model overlay".into(),
        ));
    }
    let model = ErrorModelInput::new(run.snr_e, run.spec.delta_t_s, args.cfo_hz)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let bin_width = args.bin_width_hz.unwrap_or(run.model_std_hz / 4.0);
    let hist = histogram(&run.samples, bin_width, &model)?;

    let mut csv = String::from("bin_lo_hz,bin_hi_hz,count,model_density\n");
    for (i, count) in hist.counts.iter().enumerate() {
        writeln!(
            csv,
            "{:.6},{:.6},{},{:.9e}",
            hist.bin_edges[i],
            hist.bin_edges[i + 1],
            count,
            hist.model_density[i]
        )
        .expect("write to string");
    }
    std::fs::write(&args.out, csv)?;

    let manifest = RunManifest::new("histogram", args.seed, &args.out)
        .param("estimator", format!("{:?}", args.estimator).to_lowercase())
        .param("snr_db", args.snr_db)
        .param("cfo_hz", args.cfo_hz)
        .param("trials", args.trials)
        .param("bin_width_hz", bin_width)
        .param("cp_symbols", args.cp_symbols)
        .param("scs_hz", num.scs_hz)
        .param("n_fft", num.n_fft)
        .param("cp_len", num.cp_len)
        .param("delta_t_s", run.spec.delta_t_s)
        .param("snr_e", run.snr_e)
        .param("model_std_hz", run.model_std_hz);
    manifest.write()?;

    println!(
        "{} trials: mean_err {:.3} Hz, std {:.3} Hz, model std {:.3} Hz, P(|err|>300) {:.4}",
        run.trials, run.mean_err_hz, run.std_err_hz, run.model_std_hz, run.p_exceed_300
    );
    Ok(())
}

fn cmd_criterion(args: &CriterionArgs) -> Result<(), CliError> {
    if !(args.pe > 0.0 && args.pe < 1.0) {
        return Err(CliError::Usage(format!("--pe must be in (0,1), got {}", args.pe)));
    }
    if args.delta_fmax_hz <= 0.0 || args.delta_t_us <= 0.0 {
        return Err(CliError::Usage("--delta-fmax-hz and --delta-t-us must be positive".into()));
    }
    let delta_t_s = args.delta_t_us * 1e-6;

    let mut csv = String::new();
    if args.solve_min_snr {
        let snr = min_snr_for_target(args.pe, args.delta_fmax_hz, delta_t_s)?;
        let snr_db = 10.0 * snr.log10();
        println!(
            "min_snr_db = {snr_db:.2} (pe {}, delta_fmax {} Hz, delta_t {} us)",
            args.pe, args.delta_fmax_hz, args.delta_t_us
        );
        csv.push_str("pe,delta_fmax_hz,delta_t_us,min_snr_db\n");
        writeln!(csv, "{},{},{},{snr_db:.4}", args.pe, args.delta_fmax_hz, args.delta_t_us)
            .expect("write to string");
    } else {
        let grid = parse_grid(&args.snr_grid_db)?;
        println!("snr_e_db  max_error_hz  meets_{}_hz", args.delta_fmax_hz);
        csv.push_str("snr_e_db,max_error_hz,satisfied\n");
        for snr_db in grid {
            let err = max_error_at_confidence(args.pe, delta_t_s, 10f64.powf(snr_db / 10.0))?;
            let ok = err <= args.delta_fmax_hz;
            println!("{snr_db:8.2}  {err:12.2}  {ok}");
            writeln!(csv, "{snr_db:.2},{err:.4},{ok}").expect("write to string");
        }
    }

    if let Some(out) = &args.out {
        std::fs::write(out, csv)?;
        RunManifest::new("criterion", 0, out)
            .param("pe", args.pe)
            .param("delta_fmax_hz", args.delta_fmax_hz)
            .param("delta_t_us", args.delta_t_us)
            .param("solve_min_snr", args.solve_min_snr)
            .param("snr_grid_db", args.snr_grid_db.clone())
            .write()?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be >= 1".into()));
    }
    let num = args.numerology.build()?;
    let grid = parse_grid(&args.snr_db_grid)?;
    let mode = SchemeMode::from(args.mode);
    let cfg = TrialConfig {
        numerology: num,
        pilot_layout: desk_pilot_layout(args.seed),
        n_subcarriers: 72.min(num.n_fft),
        block_symbols: 4,
        payload_bits: args.payload_bits,
        repetition: args.repetition,
        cfo_hz: args.cfo_hz,
        snr_db: grid[0],
        scheme_mode: mode,
        trials: args.trials,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let summary = run_decode_sweep(&cfg, &grid)?;
    let mut csv = String::from(
        "snr_db,cfo_hz,mode,mean_err_hz,std_err_hz,model_std_hz,p_exceed_300,decode_rate,ci_lo,ci_hi,trials\n",
    );
    for p in &summary.points {
        writeln!(
            csv,
            "{:.4},{:.4},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            p.snr_db,
            p.cfo_hz,
            p.mode,
            p.mean_err_hz,
            p.std_err_hz,
            p.model_std_hz,
            p.p_exceed_300,
            p.decode_rate,
            p.ci_lo,
            p.ci_hi,
            p.trials
        )
        .expect("write to string");
    }
    std::fs::write(&args.out, csv)?;

    RunManifest::new("sweep", args.seed, &args.out)
        .param("mode", mode.to_string())
        .param("cfo_hz", args.cfo_hz)
        .param("snr_db_grid", args.snr_db_grid.clone())
        .param("trials", args.trials)
        .param("payload_bits", args.payload_bits)
        .param("repetition", args.repetition)
        .param("scs_hz", num.scs_hz)
        .param("n_fft", num.n_fft)
        .param("cp_len", num.cp_len)
        .param("n_subcarriers", cfg.n_subcarriers)
        .param("block_symbols", cfg.block_symbols)
        .write()?;

    for p in &summary.points {
        println!(
            "snr {:5.1} dB: decode rate {:.4} [{:.4}, {:.4}], err std {:.1} Hz (model {:.1})",
            p.snr_db, p.decode_rate, p.ci_lo, p.ci_hi, p.std_err_hz, p.model_std_hz
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:20:2").unwrap().len(), 11);
        assert_eq!(parse_grid("5:5:1").unwrap(), vec![5.0]);
        assert!(parse_grid("3:1:1").is_err());
        assert!(parse_grid("0:10:0").is_err());
        assert!(parse_grid("0:10").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }
}
