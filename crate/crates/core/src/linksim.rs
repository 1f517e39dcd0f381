//! Monte Carlo link simulation: estimator error statistics over noisy
//! trials, a PBCH-like QPSK block decoder, and decode-rate sweeps over SNR
//! grids.
//!
//! Every run is a pure function of its configuration including the master
//! seed: per-trial RNG seeds are derived as `hash(master_seed, trial_index)`
//! so results do not depend on execution order, and trials run in parallel.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::analysis::{cfo_variance, normal_density, ErrorModelInput};
use crate::channel::{transmit, ChannelConfig};
use crate::error::{Error, Result};
use crate::estimators::{estimate_cp, estimate_pilot, estimate_preamble, EstimatorSpec};
use crate::scheme::{run_two_step, TwoStepConfig};
use crate::waveform::{
    make_pilot_sequence, make_preamble, ofdm_demodulate, ofdm_modulate, Numerology, PilotLayout,
    PilotMap, ResourceGrid, TimeSignal,
};

/// Error-exceedance threshold reported in every sweep row, the working
/// maximum tolerable offset for PBCH-style QPSK decoding.
pub const EXCEED_THRESHOLD_HZ: f64 = 300.0;

const WILSON_Z95: f64 = 1.959963985;

const SALT_PAYLOAD: u64 = 0x70_61_79_6c_6f_61_64;
const SALT_FILLER: u64 = 0x66_69_6c_6c_65_72;
const SALT_PREAMBLE: u64 = 0x70_72_65_61_6d;

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial RNG seed, independent of execution order.
pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial_index.wrapping_mul(0xA24B_AED4_963E_E407))
}

// ---------------------------------------------------------------------------
// Block layout and coding stand-in
// ---------------------------------------------------------------------------

/// Placement of one simulated broadcast block: pilot layout, grid width, and
/// the payload region (`block_symbols` OFDM symbols starting at the first
/// pilot symbol, mirroring PBCH next to its reference symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    pub pilot: PilotLayout,
    pub n_subcarriers: usize,
    pub block_symbols: usize,
}

impl BlockLayout {
    pub fn new(pilot: PilotLayout, n_subcarriers: usize, block_symbols: usize) -> Result<Self> {
        let layout = Self { pilot, n_subcarriers, block_symbols };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_symbols == 0 {
            return Err(Error::InvalidConfig("block_symbols must be nonzero".into()));
        }
        self.pilot.validate_for_grid(self.total_symbols(), self.n_subcarriers)
    }

    /// Symbols the simulated grid spans: enough for the payload region and
    /// both pilot symbols.
    pub fn total_symbols(&self) -> usize {
        let (first, second) = self.pilot.pilot_symbol_indices;
        (second + 1).max(first + self.block_symbols)
    }

    /// Payload resource elements in fill order (row-major over the payload
    /// region, skipping pilot positions).
    pub fn payload_positions(&self) -> Vec<(usize, usize)> {
        let start = self.pilot.pilot_symbol_indices.0;
        let (p1, p2) = self.pilot.pilot_symbol_indices;
        let mut out = Vec::new();
        for symbol in start..start + self.block_symbols {
            for sc in 0..self.n_subcarriers {
                let is_pilot =
                    (symbol == p1 || symbol == p2) && self.pilot.pilot_subcarriers.contains(&sc);
                if !is_pilot {
                    out.push((symbol, sc));
                }
            }
        }
        out
    }

    /// QPSK bit capacity of the payload region.
    pub fn capacity_bits(&self) -> usize {
        2 * self.payload_positions().len()
    }
}

/// Deterministic payload bits for a block, derived from the layout seed.
pub fn make_payload_bits(seed: u64, n_bits: usize) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_bits).map(|_| rng.gen()).collect()
}

fn qpsk_symbol(b0: bool, b1: bool) -> Complex64 {
    let level = |b: bool| if b { -std::f64::consts::FRAC_1_SQRT_2 } else { std::f64::consts::FRAC_1_SQRT_2 };
    Complex64::new(level(b0), level(b1))
}

fn random_qpsk(rng: &mut ChaCha8Rng) -> Complex64 {
    qpsk_symbol(rng.gen(), rng.gen())
}

/// Build the transmit grid for one block: pilots, repetition-coded QPSK
/// payload, and seeded QPSK filler on every remaining resource element (so
/// CP correlation sees signal in every symbol). Returns the grid and the
/// payload bits it encodes.
pub fn build_block(
    numerology: &Numerology,
    layout: &BlockLayout,
    payload_bits: usize,
    repetition: usize,
) -> Result<(ResourceGrid, Vec<bool>)> {
    layout.validate()?;
    let positions = layout.payload_positions();
    if payload_bits * repetition > 2 * positions.len() {
        return Err(Error::InvalidConfig(format!(
            "{payload_bits} bits x{repetition} exceed payload capacity of {} bits",
            2 * positions.len()
        )));
    }

    let bits = make_payload_bits(splitmix64(layout.pilot.seed ^ SALT_PAYLOAD), payload_bits);
    let mut coded: Vec<bool> = Vec::with_capacity(payload_bits * repetition + 1);
    for _ in 0..repetition {
        coded.extend_from_slice(&bits);
    }
    if coded.len() % 2 == 1 {
        coded.push(false);
    }

    let mut grid = ResourceGrid::new(*numerology, layout.total_symbols(), layout.n_subcarriers)?;
    let mut filler = ChaCha8Rng::seed_from_u64(splitmix64(layout.pilot.seed ^ SALT_FILLER));
    for l in 0..grid.n_symbols() {
        for k in 0..grid.n_subcarriers() {
            grid.set(l, k, random_qpsk(&mut filler));
        }
    }
    for (i, pair) in coded.chunks(2).enumerate() {
        let (l, k) = positions[i];
        grid.set(l, k, qpsk_symbol(pair[0], pair[1]));
    }
    for (&(l, k), &v) in &make_pilot_sequence(&layout.pilot) {
        grid.set(l, k, v);
    }
    Ok((grid, bits))
}

/// Outcome of decoding one block.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub bits: Vec<bool>,
    pub bit_errors: usize,
    pub decode_ok: bool,
}

/// Pilot-equalized QPSK hard decision with repetition majority vote.
///
/// The channel gain is estimated as the mean of `Y/X` over the pilot
/// resource elements of both pilot symbols; payload symbols are divided by
/// it before the minimum-distance decision. `decode_ok` means every payload
/// bit matched the known transmitted bits.
pub fn decode_block(
    grid: &ResourceGrid,
    pilots: &PilotMap,
    layout: &BlockLayout,
    payload_bits: usize,
    repetition: usize,
) -> Result<DecodeResult> {
    let (p1, p2) = layout.pilot.pilot_symbol_indices;
    layout
        .pilot
        .validate_for_grid(grid.n_symbols(), grid.n_subcarriers())
        .map_err(|e| Error::MissingPilots(e.to_string()))?;

    let mut gain = Complex64::new(0.0, 0.0);
    let mut count = 0usize;
    for &symbol in &[p1, p2] {
        for &sc in &layout.pilot.pilot_subcarriers {
            let x = pilots
                .get(&(symbol, sc))
                .ok_or_else(|| Error::MissingPilots(format!("no pilot value at ({symbol}, {sc})")))?;
            gain += grid.get(symbol, sc) / x;
            count += 1;
        }
    }
    gain /= count as f64;
    if gain.norm() == 0.0 {
        return Err(Error::ZeroInput);
    }

    let coded_len = payload_bits * repetition;
    let n_symbols_used = (coded_len + 1) / 2;
    let positions = layout.payload_positions();
    let mut coded = Vec::with_capacity(n_symbols_used * 2);
    for &(l, k) in positions.iter().take(n_symbols_used) {
        let eq = grid.get(l, k) / gain;
        coded.push(eq.re < 0.0);
        coded.push(eq.im < 0.0);
    }

    let expected = make_payload_bits(splitmix64(layout.pilot.seed ^ SALT_PAYLOAD), payload_bits);
    let mut bits = Vec::with_capacity(payload_bits);
    let mut bit_errors = 0usize;
    for i in 0..payload_bits {
        let votes = (0..repetition).filter(|r| coded[r * payload_bits + i]).count();
        let bit = 2 * votes > repetition;
        if bit != expected[i] {
            bit_errors += 1;
        }
        bits.push(bit);
    }
    Ok(DecodeResult { bits, bit_errors, decode_ok: bit_errors == 0 })
}

// ---------------------------------------------------------------------------
// Estimator trials
// ---------------------------------------------------------------------------

/// Concrete configuration for Monte Carlo trials of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorConfig {
    /// CP correlation over a QPSK data block.
    Cp { n_symbols: usize, n_subcarriers: usize },
    /// Known-preamble half correlation.
    Preamble,
    /// Pilot phase tracking; the trial waveform repeats the first pilot
    /// symbol's content on the second so the noiseless estimate is exact.
    Pilot { layout: PilotLayout, n_subcarriers: usize },
}

impl EstimatorConfig {
    pub fn spec(&self, numerology: &Numerology) -> EstimatorSpec {
        match self {
            EstimatorConfig::Cp { n_symbols, .. } => EstimatorSpec::cp(numerology, *n_symbols),
            EstimatorConfig::Preamble => EstimatorSpec::preamble(numerology),
            EstimatorConfig::Pilot { layout, .. } => EstimatorSpec::pilot(numerology, layout),
        }
    }

    /// Effective SNR of this estimator at a given per-sample channel SNR.
    ///
    /// Preamble and CP correlate time-domain samples, so their per-pair SNR
    /// is the channel SNR itself. The pilot estimator works on demodulated
    /// resource elements, where occupying `n_sc` of `n_fft` bins raises the
    /// per-element SNR by `n_fft/n_sc`.
    pub fn effective_snr(&self, numerology: &Numerology, raw_snr: f64) -> f64 {
        let m = self.spec(numerology).n_pairs as f64;
        match self {
            EstimatorConfig::Cp { .. } | EstimatorConfig::Preamble => m * raw_snr,
            EstimatorConfig::Pilot { n_subcarriers, .. } => {
                m * raw_snr * numerology.n_fft as f64 / *n_subcarriers as f64
            }
        }
    }
}

/// Result of a batch of estimator trials at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRun {
    pub spec: EstimatorSpec,
    /// Effective SNR used for the model column (linear).
    pub snr_e: f64,
    /// One estimate per trial, in Hz.
    pub samples: Vec<f64>,
    pub mean_err_hz: f64,
    pub std_err_hz: f64,
    /// `sqrt` of the model variance at `snr_e`; NaN for noiseless runs.
    pub model_std_hz: f64,
    pub p_exceed_300: f64,
    pub trials: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn trial_channel(cfo_hz: f64, snr_db: f64, master_seed: u64, trial: u64) -> ChannelConfig {
    let mut phase_rng = ChaCha8Rng::seed_from_u64(trial_seed(master_seed, 2 * trial + 1));
    ChannelConfig {
        cfo_hz,
        phase_rad: phase_rng.gen_range(0.0..TAU),
        gain: 1.0,
        snr_db,
        seed: trial_seed(master_seed, 2 * trial),
    }
}

/// Run `trials` independent noisy trials of one estimator and summarize the
/// estimate distribution. Deterministic in `(seed, trial_index)`; trials run
/// in parallel.
pub fn run_estimator_trials(
    config: &EstimatorConfig,
    numerology: &Numerology,
    cfo_hz: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<EstimatorRun> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be >= 1".into()));
    }
    let spec = config.spec(numerology);

    enum Reference {
        Time { base: TimeSignal, n_symbols: usize },
        Preamble { base: TimeSignal },
        Grid { base: TimeSignal, layout: PilotLayout, pilots: PilotMap, n_symbols: usize },
    }

    let reference = match config {
        EstimatorConfig::Cp { n_symbols, n_subcarriers } => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ SALT_FILLER));
            let mut grid = ResourceGrid::new(*numerology, *n_symbols, *n_subcarriers)?;
            for l in 0..*n_symbols {
                for k in 0..*n_subcarriers {
                    grid.set(l, k, random_qpsk(&mut rng));
                }
            }
            Reference::Time { base: ofdm_modulate(&grid), n_symbols: *n_symbols }
        }
        EstimatorConfig::Preamble => {
            Reference::Preamble { base: make_preamble(numerology, splitmix64(seed ^ SALT_PREAMBLE)) }
        }
        EstimatorConfig::Pilot { layout, n_subcarriers } => {
            let block = BlockLayout::new(layout.clone(), *n_subcarriers, 1)?;
            let (mut grid, _) = build_block(numerology, &block, 0, 1)?;
            // repeat the first pilot symbol's whole row on the second so
            // both measurements see identical content
            let (p1, p2) = layout.pilot_symbol_indices;
            for k in 0..*n_subcarriers {
                grid.set(p2, k, grid.get(p1, k));
            }
            let mut pilots = make_pilot_sequence(layout);
            for &sc in &layout.pilot_subcarriers {
                let v = pilots[&(p1, sc)];
                pilots.insert((p2, sc), v);
            }
            Reference::Grid {
                base: ofdm_modulate(&grid),
                layout: layout.clone(),
                pilots,
                n_symbols: block.total_symbols(),
            }
        }
    };

    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let cfg = trial_channel(cfo_hz, snr_db, seed, t);
            let estimate = match &reference {
                Reference::Time { base, n_symbols } => {
                    estimate_cp(&transmit(base, &cfg)?, numerology, *n_symbols)?
                }
                Reference::Preamble { base } => estimate_preamble(&transmit(base, &cfg)?, base)?,
                Reference::Grid { base, layout, pilots, n_symbols } => {
                    let grid = ofdm_demodulate(&transmit(base, &cfg)?, numerology, *n_symbols)?;
                    estimate_pilot(&grid, layout, pilots, numerology)?
                }
            };
            Ok(estimate.f_hat_hz)
        })
        .collect::<Result<Vec<_>>>()?;

    let errors: Vec<f64> = samples.iter().map(|f| f - cfo_hz).collect();
    let (mean_err, std_err) = mean_std(&errors);
    let p_exceed =
        errors.iter().filter(|e| e.abs() > EXCEED_THRESHOLD_HZ).count() as f64 / trials as f64;

    let raw_snr = 10f64.powf(snr_db / 10.0);
    let (snr_e, model_std) = if snr_db.is_finite() {
        let snr_e = config.effective_snr(numerology, raw_snr);
        let model = ErrorModelInput::new(snr_e, spec.delta_t_s, 0.0)?;
        (snr_e, cfo_variance(&model)?.sqrt())
    } else {
        (f64::INFINITY, f64::NAN)
    };

    Ok(EstimatorRun {
        spec,
        snr_e,
        samples,
        mean_err_hz: mean_err,
        std_err_hz: std_err,
        model_std_hz: model_std,
        p_exceed_300: p_exceed,
        trials,
    })
}

/// Monte Carlo of the generalized two-moment estimator itself: two unit
/// symbols `delta_t` apart with complex Gaussian noise at the given
/// effective SNR, estimate from the correlation angle. This is the
/// independent oracle for the closed-form variance model.
pub fn run_two_moment_trials(
    delta_t_s: f64,
    snr_e: f64,
    f_e_hz: f64,
    trials: usize,
    seed: u64,
) -> Vec<f64> {
    let sigma = (1.0 / snr_e).sqrt();
    let dphi = TAU * f_e_hz * delta_t_s;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, t));
            let phase: f64 = rng.gen_range(0.0..TAU);
            let noise = |rng: &mut ChaCha8Rng| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex64::new(re, im) * (sigma / std::f64::consts::SQRT_2)
            };
            let r1 = Complex64::from_polar(1.0, phase) + noise(&mut rng);
            let r2 = Complex64::from_polar(1.0, phase + dphi) + noise(&mut rng);
            (r1.conj() * r2).arg() / (TAU * delta_t_s)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Decode sweeps
// ---------------------------------------------------------------------------

/// Which stages of the two-step scheme a sweep exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeMode {
    TwoStep,
    CoarseOnly,
    ResidualOnly,
}

impl SchemeMode {
    pub fn enables(&self) -> (bool, bool) {
        match self {
            SchemeMode::TwoStep => (true, true),
            SchemeMode::CoarseOnly => (true, false),
            SchemeMode::ResidualOnly => (false, true),
        }
    }
}

impl std::fmt::Display for SchemeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SchemeMode::TwoStep => "two_step",
            SchemeMode::CoarseOnly => "coarse_only",
            SchemeMode::ResidualOnly => "residual_only",
        })
    }
}

/// Full configuration of one decode grid point (or, with a grid of SNRs, a
/// sweep).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub numerology: Numerology,
    pub pilot_layout: PilotLayout,
    pub n_subcarriers: usize,
    /// Payload block length in OFDM symbols.
    pub block_symbols: usize,
    pub payload_bits: usize,
    /// Odd repetition count of the coding stand-in.
    pub repetition: usize,
    pub cfo_hz: f64,
    pub snr_db: f64,
    pub scheme_mode: SchemeMode,
    pub trials: usize,
    pub seed: u64,
}

impl TrialConfig {
    /// Desk-scale defaults: LTE-like numerology, 72 subcarriers, pilots on
    /// symbols 0 and 4 every 6th subcarrier, 4-symbol payload of 64 bits
    /// with 3-fold repetition.
    pub fn desk(mode: SchemeMode, cfo_hz: f64, snr_db: f64, trials: usize, seed: u64) -> Self {
        Self {
            numerology: Numerology::lte_desk(),
            pilot_layout: PilotLayout {
                pilot_symbol_indices: (0, 4),
                pilot_subcarriers: (0..72).step_by(6).collect(),
                seed,
            },
            n_subcarriers: 72,
            block_symbols: 4,
            payload_bits: 64,
            repetition: 3,
            cfo_hz,
            snr_db,
            scheme_mode: mode,
            trials,
            seed,
        }
    }

    pub fn block_layout(&self) -> BlockLayout {
        BlockLayout {
            pilot: self.pilot_layout.clone(),
            n_subcarriers: self.n_subcarriers,
            block_symbols: self.block_symbols,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.repetition % 2 == 0 || self.repetition == 0 {
            return Err(Error::InvalidConfig(format!(
                "repetition must be odd, got {}",
                self.repetition
            )));
        }
        if self.payload_bits == 0 {
            return Err(Error::InvalidConfig("payload_bits must be >= 1".into()));
        }
        let layout = self.block_layout();
        layout.validate()?;
        if self.payload_bits * self.repetition > layout.capacity_bits() {
            return Err(Error::InvalidConfig(format!(
                "{} bits x{} exceed payload capacity of {} bits",
                self.payload_bits,
                self.repetition,
                layout.capacity_bits()
            )));
        }
        Ok(())
    }

    fn two_step_config(&self) -> TwoStepConfig {
        let (coarse, residual) = self.scheme_mode.enables();
        TwoStepConfig {
            numerology: self.numerology,
            pilot_layout: self.pilot_layout.clone(),
            n_symbols: self.block_layout().total_symbols(),
            enable_coarse: coarse,
            enable_residual: residual,
        }
    }

    /// Model std of the final error for the active stage: the residual
    /// pilot stage for modes that run it, otherwise the coarse CP stage.
    pub fn model_std_hz(&self) -> Result<f64> {
        if !self.snr_db.is_finite() {
            return Ok(f64::NAN);
        }
        let raw = 10f64.powf(self.snr_db / 10.0);
        let config = match self.scheme_mode {
            SchemeMode::CoarseOnly => EstimatorConfig::Cp {
                n_symbols: self.block_layout().total_symbols(),
                n_subcarriers: self.n_subcarriers,
            },
            _ => EstimatorConfig::Pilot {
                layout: self.pilot_layout.clone(),
                n_subcarriers: self.n_subcarriers,
            },
        };
        let spec = config.spec(&self.numerology);
        let snr_e = config.effective_snr(&self.numerology, raw);
        let model = ErrorModelInput::new(snr_e, spec.delta_t_s, 0.0)?;
        Ok(cfo_variance(&model)?.sqrt())
    }
}

/// One Monte Carlo trial's estimates, residual error, and decode outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub f_coarse_hz: Option<f64>,
    pub f_residual_hz: Option<f64>,
    /// `cfo_hz - f_total`.
    pub final_error_hz: f64,
    pub bit_errors: usize,
    pub decode_ok: bool,
}

/// Aggregate statistics of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub mode: SchemeMode,
    pub mean_err_hz: f64,
    pub std_err_hz: f64,
    pub model_std_hz: f64,
    pub p_exceed_300: f64,
    pub decode_rate: f64,
    /// Wilson 95% interval on the decode rate.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub trials: usize,
}

/// A sweep over an SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Run all trials of one decode grid point, returning the per-trial records
/// and their summary.
pub fn run_decode_point(cfg: &TrialConfig) -> Result<(Vec<TrialRecord>, SweepPoint)> {
    cfg.validate()?;
    let layout = cfg.block_layout();
    let (grid, _bits) = build_block(&cfg.numerology, &layout, cfg.payload_bits, cfg.repetition)?;
    let base = ofdm_modulate(&grid);
    let pilots = make_pilot_sequence(&cfg.pilot_layout);
    let scheme_cfg = cfg.two_step_config();

    let records: Vec<TrialRecord> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<TrialRecord> {
            let channel = trial_channel(cfg.cfo_hz, cfg.snr_db, cfg.seed, t);
            let rx = transmit(&base, &channel)?;
            let result = run_two_step(&rx, &scheme_cfg, &pilots)?;
            let decoded = decode_block(
                &result.compensated_grid,
                &pilots,
                &layout,
                cfg.payload_bits,
                cfg.repetition,
            )?;
            Ok(TrialRecord {
                trial_index: t as usize,
                f_coarse_hz: result.f_coarse_hz,
                f_residual_hz: result.f_residual_hz,
                final_error_hz: cfg.cfo_hz - result.f_total_hz,
                bit_errors: decoded.bit_errors,
                decode_ok: decoded.decode_ok,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let errors: Vec<f64> = records.iter().map(|r| r.final_error_hz).collect();
    let (mean_err, std_err) = mean_std(&errors);
    let successes = records.iter().filter(|r| r.decode_ok).count();
    let (ci_lo, ci_hi) = wilson_interval(successes, cfg.trials, WILSON_Z95);
    let point = SweepPoint {
        snr_db: cfg.snr_db,
        cfo_hz: cfg.cfo_hz,
        mode: cfg.scheme_mode,
        mean_err_hz: mean_err,
        std_err_hz: std_err,
        model_std_hz: cfg.model_std_hz()?,
        p_exceed_300: errors.iter().filter(|e| e.abs() > EXCEED_THRESHOLD_HZ).count() as f64
            / cfg.trials as f64,
        decode_rate: successes as f64 / cfg.trials as f64,
        ci_lo,
        ci_hi,
        trials: cfg.trials,
    };
    Ok((records, point))
}

/// Sweep the decode simulation over an SNR grid (dB values), one
/// [`SweepPoint`] per grid entry.
pub fn run_decode_sweep(cfg: &TrialConfig, snr_db_grid: &[f64]) -> Result<SweepSummary> {
    let mut points = Vec::with_capacity(snr_db_grid.len());
    for &snr_db in snr_db_grid {
        let point_cfg = TrialConfig { snr_db, ..cfg.clone() };
        points.push(run_decode_point(&point_cfg)?.1);
    }
    Ok(SweepSummary { points })
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

/// Histogram of estimate samples with the analytic density overlaid.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` edges; bins aligned to multiples of the width.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Gaussian model density evaluated at each bin center.
    pub model_density: Vec<f64>,
}

impl Histogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Bin the samples at the given width and overlay the model density
/// (Gaussian with mean `model.f_e_hz` and the closed-form variance).
/// Requires at least 100 samples; every sample lands in exactly one bin.
pub fn histogram(samples: &[f64], bin_width_hz: f64, model: &ErrorModelInput) -> Result<Histogram> {
    if samples.len() < 100 {
        return Err(Error::TooFewSamples { needed: 100, got: samples.len() });
    }
    if !(bin_width_hz.is_finite() && bin_width_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "bin width must be positive, got {bin_width_hz}"
        )));
    }
    let min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = (min / bin_width_hz).floor() * bin_width_hz;
    let n_bins = (((max - lo) / bin_width_hz).floor() as usize + 1).max(1);

    let mut counts = vec![0u64; n_bins];
    for &s in samples {
        let idx = (((s - lo) / bin_width_hz).floor() as usize).min(n_bins - 1);
        counts[idx] += 1;
    }

    let variance = cfo_variance(model)?;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + i as f64 * bin_width_hz).collect();
    let model_density = bin_edges
        .windows(2)
        .map(|w| normal_density(0.5 * (w[0] + w[1]), model.f_e_hz, variance))
        .collect();
    Ok(Histogram { bin_edges, counts, model_density })
}
