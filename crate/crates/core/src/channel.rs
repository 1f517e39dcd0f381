//! Channel impairments: carrier frequency offset, static phase/gain, and
//! AWGN at a prescribed per-sample SNR.
//!
//! One sign convention holds end-to-end: positive `cfo_hz` rotates the
//! received signal forward, `exp(+j*2*pi*f*n/fs)`, and every estimator
//! returns positive estimates for positive offsets.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::waveform::TimeSignal;

/// One realization of the channel: offset, static phase rotation, amplitude
/// gain, noise level, and the noise seed.
///
/// `snr_db` is defined per time-domain sample against the measured mean
/// signal power. `f64::INFINITY` disables noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub cfo_hz: f64,
    pub phase_rad: f64,
    pub gain: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(cfo_hz: f64, phase_rad: f64, gain: f64, snr_db: f64, seed: u64) -> Result<Self> {
        if !cfo_hz.is_finite() {
            return Err(Error::InvalidConfig(format!("cfo_hz must be finite, got {cfo_hz}")));
        }
        if !(gain.is_finite() && gain > 0.0) {
            return Err(Error::InvalidConfig(format!("gain must be positive, got {gain}")));
        }
        if snr_db.is_nan() || !phase_rad.is_finite() {
            return Err(Error::InvalidConfig("snr_db / phase_rad must not be NaN".into()));
        }
        Ok(Self { cfo_hz, phase_rad, gain, snr_db, seed })
    }

    /// Identity channel: no offset, no rotation, unit gain, no noise.
    pub fn clean() -> Self {
        Self { cfo_hz: 0.0, phase_rad: 0.0, gain: 1.0, snr_db: f64::INFINITY, seed: 0 }
    }

    /// Noiseless channel applying only a frequency offset.
    pub fn offset_only(cfo_hz: f64) -> Self {
        Self { cfo_hz, ..Self::clean() }
    }
}

/// Rotate sample `n` by `2*pi*cfo_hz*n/fs + start_phase_rad`. The phase is
/// continuous across the whole buffer, matching a physical oscillator
/// offset; per-sample magnitude is preserved exactly.
pub fn apply_cfo(signal: &TimeSignal, cfo_hz: f64, start_phase_rad: f64) -> TimeSignal {
    let rate = cfo_hz / signal.sample_rate_hz;
    let samples = signal
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| s * Complex64::from_polar(1.0, TAU * rate * n as f64 + start_phase_rad))
        .collect();
    TimeSignal { samples, sample_rate_hz: signal.sample_rate_hz }
}

/// Add circularly-symmetric complex Gaussian noise with per-sample variance
/// `measured_power / 10^(snr_db/10)`; deterministic in `seed`.
/// `snr_db = +inf` returns the signal unchanged.
pub fn apply_awgn(signal: &TimeSignal, snr_db: f64, seed: u64) -> Result<TimeSignal> {
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    let power = signal.mean_power();
    if power == 0.0 {
        return Err(Error::ZeroPowerSignal);
    }
    let sigma2 = power / 10f64.powf(snr_db / 10.0);
    let scale = (sigma2 / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = signal
        .samples
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            s + Complex64::new(scale * re, scale * im)
        })
        .collect();
    Ok(TimeSignal { samples, sample_rate_hz: signal.sample_rate_hz })
}

/// Apply the full channel: `gain * exp(j*phase)` and the frequency offset,
/// then AWGN.
pub fn transmit(signal: &TimeSignal, cfg: &ChannelConfig) -> Result<TimeSignal> {
    let mut rotated = apply_cfo(signal, cfg.cfo_hz, cfg.phase_rad);
    if cfg.gain != 1.0 {
        for s in rotated.samples.iter_mut() {
            *s *= cfg.gain;
        }
    }
    apply_awgn(&rotated, cfg.snr_db, cfg.seed)
}
