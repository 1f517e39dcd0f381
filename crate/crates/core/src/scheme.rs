//! Two-step CFO estimation and compensation: a coarse CP-based pass in the
//! time domain, then a residual pilot-based pass after demodulation.
//!
//! The coarse stage covers a wide range (short interval) and the residual
//! stage refines it (long interval, narrow range). Residual compensation is
//! applied back in the time domain followed by re-demodulation, so the
//! correction is exact rather than a per-symbol phase ramp.

use crate::analysis::{cfo_variance, effective_snr, ErrorModelInput};
use crate::error::{Error, Result};
use crate::estimators::{compensate, estimate_cp, estimate_pilot, CfoEstimate};
use crate::waveform::{ofdm_demodulate, Numerology, PilotLayout, PilotMap, ResourceGrid, TimeSignal};

/// Configuration of the two-step pipeline over one block of OFDM symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepConfig {
    pub numerology: Numerology,
    pub pilot_layout: PilotLayout,
    /// Block length in OFDM symbols; must contain both pilot symbols.
    pub n_symbols: usize,
    pub enable_coarse: bool,
    pub enable_residual: bool,
}

impl TwoStepConfig {
    pub fn new(
        numerology: Numerology,
        pilot_layout: PilotLayout,
        n_symbols: usize,
        enable_coarse: bool,
        enable_residual: bool,
    ) -> Result<Self> {
        let cfg = Self { numerology, pilot_layout, n_symbols, enable_coarse, enable_residual };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pilot_layout.validate()?;
        if self.pilot_layout.pilot_symbol_indices.1 >= self.n_symbols {
            return Err(Error::InvalidConfig(format!(
                "pilot symbol {} outside block of {} symbols",
                self.pilot_layout.pilot_symbol_indices.1, self.n_symbols
            )));
        }
        if !self.enable_coarse && !self.enable_residual {
            return Err(Error::InvalidConfig("at least one stage must be enabled".into()));
        }
        Ok(())
    }

    /// Measurement interval of the residual stage.
    pub fn residual_delta_t_s(&self) -> f64 {
        self.pilot_layout.pilot_interval_s(&self.numerology)
    }
}

/// Which stage a diagnostic record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Coarse,
    Residual,
}

/// Per-stage outcome; `estimate` is `None` when the stage ran but was
/// skipped (zero correlation magnitude).
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub estimate: Option<CfoEstimate>,
}

/// Result of one two-step run: the per-stage estimates, their sum, and the
/// final compensated grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepResult {
    pub f_coarse_hz: Option<f64>,
    pub f_residual_hz: Option<f64>,
    /// Sum of all corrections actually applied.
    pub f_total_hz: f64,
    pub compensated_grid: ResourceGrid,
    pub diagnostics: Vec<StageRecord>,
}

/// Run the enabled stages over one block.
///
/// Coarse: CP-estimate over the block, compensate in time. Demodulate.
/// Residual: pilot-estimate on the grid, compensate the time signal again,
/// re-demodulate. A residual stage with zero correlation magnitude is
/// recorded as skipped rather than raised.
pub fn run_two_step(
    signal: &TimeSignal,
    cfg: &TwoStepConfig,
    pilots: &PilotMap,
) -> Result<TwoStepResult> {
    cfg.validate()?;
    let num = &cfg.numerology;
    let mut working = signal.clone();
    let mut diagnostics = Vec::new();
    let mut f_total = 0.0;

    let f_coarse = if cfg.enable_coarse {
        let est = estimate_cp(&working, num, cfg.n_symbols)?;
        working = compensate(&working, est.f_hat_hz);
        f_total += est.f_hat_hz;
        diagnostics.push(StageRecord { stage: Stage::Coarse, estimate: Some(est) });
        Some(est.f_hat_hz)
    } else {
        None
    };

    let mut grid = ofdm_demodulate(&working, num, cfg.n_symbols)?;

    let f_residual = if cfg.enable_residual {
        match estimate_pilot(&grid, &cfg.pilot_layout, pilots, num) {
            Ok(est) => {
                working = compensate(&working, est.f_hat_hz);
                grid = ofdm_demodulate(&working, num, cfg.n_symbols)?;
                f_total += est.f_hat_hz;
                diagnostics.push(StageRecord { stage: Stage::Residual, estimate: Some(est) });
                Some(est.f_hat_hz)
            }
            Err(Error::ZeroCorrelation) => {
                diagnostics.push(StageRecord { stage: Stage::Residual, estimate: None });
                None
            }
            Err(other) => return Err(other),
        }
    } else {
        None
    };

    Ok(TwoStepResult {
        f_coarse_hz: f_coarse,
        f_residual_hz: f_residual,
        f_total_hz: f_total,
        compensated_grid: grid,
        diagnostics,
    })
}

/// Predicted standard deviation of the final offset error when both stages
/// run: the residual-stage model std `sqrt(V)` at
/// `snr_e = n_pilots * raw_snr` and the residual interval.
///
/// `raw_snr` is the per-resource-element SNR at the residual estimator's
/// input (the demodulated grid). The prediction holds while the coarse
/// stage keeps `|f_e - f_coarse|` inside the residual range.
pub fn predict_final_error_std(cfg: &TwoStepConfig, raw_snr: f64) -> Result<f64> {
    if !(cfg.enable_coarse && cfg.enable_residual) {
        return Err(Error::StageDisabled("prediction requires both stages enabled"));
    }
    let snr_e = effective_snr(raw_snr, cfg.pilot_layout.pilot_subcarriers.len());
    let model = ErrorModelInput::new(snr_e, cfg.residual_delta_t_s(), 0.0)?;
    Ok(cfo_variance(&model)?.sqrt())
}
