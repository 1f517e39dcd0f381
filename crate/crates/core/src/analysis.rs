//! Closed-form error model for phase-difference CFO estimators and the
//! decoding-performance criterion built on it.
//!
//! The model treats any estimator that measures phase at two moments
//! `delta_t` apart through an effective post-estimator SNR. The estimate
//! variance is
//!
//! ```text
//! V[f_hat] = (1/(2*pi*delta_t))^2 * (1/(2*snr_e^2) + 1/snr_e)
//!            / cos^4(2*pi*f_e*delta_t)
//! ```
//!
//! valid in the small-residual regime `|2*pi*f_e*delta_t| << 1`. The
//! criterion then bounds the estimation error exceeded with probability
//! `p_e` by `q_inv(p_e/2) * sqrt(V)` with the `cos^4` factor at 1.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Gaussian tail machinery
// ---------------------------------------------------------------------------

// Rational-approximation erfc (Cody's SPECFUN coefficients), relative error
// below 1e-15 across the three ranges.
const ERF_A: [f64; 5] = [
    3.16112374387056560e0,
    1.13864154151050156e2,
    3.77485237685302021e2,
    3.20937758913846947e3,
    1.85777706184603153e-1,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e1,
    2.44024637934444173e2,
    1.28261652607737228e3,
    2.84423683343917062e3,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-1,
    8.88314979438837594e0,
    6.61191906371416295e1,
    2.98635138197400131e2,
    8.81952221241769090e2,
    1.71204761263407058e3,
    2.05107837782607147e3,
    1.23033935479799725e3,
    2.15311535474403846e-8,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e1,
    1.17693950891312499e2,
    5.37181101862009858e2,
    1.62138957456669019e3,
    3.29079923573345963e3,
    4.36261909014324716e3,
    3.43936767414372164e3,
    1.23033935480374942e3,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-1,
    3.60344899949804439e-1,
    1.25781726111229246e-1,
    1.60837851487422766e-2,
    6.58749161529837803e-4,
    1.63153871373020978e-2,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e0,
    1.87295284992346047e0,
    5.27905102951428412e-1,
    6.05183413124413191e-2,
    2.33520497626869185e-3,
];
const FRAC_1_SQRT_PI: f64 = 5.641895835477562869e-1;

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let result = if y <= 0.46875 {
        let z = y * y;
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        return 1.0 - x * (num + ERF_A[3]) / (den + ERF_B[3]);
    } else if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        scaled_exp(y) * (num + ERF_C[7]) / (den + ERF_D[7])
    } else if y < 26.6 {
        let z = 1.0 / (y * y);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        scaled_exp(y) * (FRAC_1_SQRT_PI - r) / y
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

// exp(-y^2) split to avoid cancellation in the argument.
fn scaled_exp(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Gaussian upper-tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse Gaussian tail: the `x` with `Q(x) = p`, by bisection to
/// `|dx| <= 1e-9`.
pub fn q_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("q_inv needs p in (0,1), got {p}")));
    }
    let mut lo = -40.0f64;
    let mut hi = 40.0f64;
    // q is strictly decreasing: q(lo) > p > q(hi) for non-degenerate p
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Standard normal density with the given mean and variance.
pub fn normal_density(x: f64, mean: f64, variance: f64) -> f64 {
    let z = (x - mean) * (x - mean) / variance;
    (-0.5 * z).exp() / (TAU * variance).sqrt()
}

// ---------------------------------------------------------------------------
// Estimator error model
// ---------------------------------------------------------------------------

/// Parameters of the analytic distribution of an estimate: effective SNR
/// after the estimator's averaging, measurement interval, and true offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModelInput {
    /// Effective SNR, linear.
    pub snr_e: f64,
    /// Measurement interval in seconds.
    pub delta_t_s: f64,
    /// True offset in Hz; enters only through the `cos^4` factor.
    pub f_e_hz: f64,
}

impl ErrorModelInput {
    pub fn new(snr_e: f64, delta_t_s: f64, f_e_hz: f64) -> Result<Self> {
        let input = Self { snr_e, delta_t_s, f_e_hz };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr_e.is_finite() && self.snr_e > 0.0) {
            return Err(Error::DomainError(format!("snr_e must be positive, got {}", self.snr_e)));
        }
        if !(self.delta_t_s.is_finite() && self.delta_t_s > 0.0) {
            return Err(Error::DomainError(format!(
                "delta_t_s must be positive, got {}",
                self.delta_t_s
            )));
        }
        let phase = TAU * self.f_e_hz * self.delta_t_s;
        if !(phase.abs() < FRAC_PI_2) {
            return Err(Error::DomainError(format!(
                "|2*pi*f_e*delta_t| = {} must stay below pi/2",
                phase.abs()
            )));
        }
        Ok(())
    }
}

/// Variance of the estimated offset, in Hz^2.
pub fn cfo_variance(input: &ErrorModelInput) -> Result<f64> {
    input.validate()?;
    let c = (TAU * input.f_e_hz * input.delta_t_s).cos();
    if c <= 0.0 {
        return Err(Error::DomainError("cos(2*pi*f_e*delta_t) must be positive".into()));
    }
    let scale = 1.0 / (TAU * input.delta_t_s);
    let noise = 1.0 / (2.0 * input.snr_e * input.snr_e) + 1.0 / input.snr_e;
    Ok(scale * scale * noise / c.powi(4))
}

/// Largest estimation error not exceeded with probability `1 - p_e`:
/// `q_inv(p_e/2) * sqrt(V)` with the `cos^4` factor taken as 1.
pub fn max_error_at_confidence(p_e: f64, delta_t_s: f64, snr_e: f64) -> Result<f64> {
    let model = ErrorModelInput::new(snr_e, delta_t_s, 0.0)?;
    Ok(q_inv(p_e / 2.0)? * cfo_variance(&model)?.sqrt())
}

/// Smallest effective SNR (linear) for which the maximum error at
/// confidence `1 - p_e` stays within `delta_fmax_hz`. The expression is
/// monotone in SNR; solved by bisection in dB to 1e-4 dB.
pub fn min_snr_for_target(p_e: f64, delta_fmax_hz: f64, delta_t_s: f64) -> Result<f64> {
    if !(delta_fmax_hz.is_finite() && delta_fmax_hz > 0.0) {
        return Err(Error::DomainError(format!(
            "delta_fmax_hz must be positive, got {delta_fmax_hz}"
        )));
    }
    let err_at = |snr_db: f64| max_error_at_confidence(p_e, delta_t_s, 10f64.powf(snr_db / 10.0));

    let mut lo = -100.0;
    let mut hi = 0.0;
    while err_at(hi)? > delta_fmax_hz {
        hi += 10.0;
        if hi > 300.0 {
            return Err(Error::DomainError("criterion not satisfiable below 300 dB".into()));
        }
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if err_at(mid)? > delta_fmax_hz {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10f64.powf(0.5 * (lo + hi) / 10.0))
}

/// Effective SNR after coherently combining `n_pairs` correlated pairs:
/// `n_pairs * raw_snr`.
///
/// The mapping is exact for single-accumulation estimators (preamble). For
/// product-form estimators (CP, pilot) the quadratic noise term deviates
/// when the per-pair SNR drops below ~0 dB; the Monte Carlo suite checks
/// the mapping per estimator in its valid regime.
pub fn effective_snr(raw_snr: f64, n_pairs: usize) -> f64 {
    raw_snr * n_pairs as f64
}

/// Unambiguous half-range of an estimator with interval `delta_t`:
/// `1/(2*delta_t)` Hz.
pub fn estimation_range(delta_t_s: f64) -> f64 {
    1.0 / (2.0 * delta_t_s)
}

/// Maximum tolerable offset for QPSK detection over an `n_symbols`-long
/// block, as `scs / (2 * n_symbols * 8)`.
///
/// See [`qpsk_fmax_phase_margin`] for the direct phase-margin algebra,
/// which lands a factor 2 higher.
pub fn qpsk_fmax(scs_hz: f64, n_symbols: usize) -> f64 {
    scs_hz / (2.0 * n_symbols as f64 * 8.0)
}

/// Offset at which the phase drift over `n_symbols` symbol durations
/// (`n_symbols / scs` seconds) reaches the QPSK decision margin `pi/4`:
/// `(pi/4) / (2*pi*n_symbols/scs) = scs / (8*n_symbols)`.
pub fn qpsk_fmax_phase_margin(scs_hz: f64, n_symbols: usize) -> f64 {
    scs_hz / (8.0 * n_symbols as f64)
}

// ---------------------------------------------------------------------------
// Criterion
// ---------------------------------------------------------------------------

/// The decoding-performance criterion: does an estimator with effective SNR
/// `snr_e` and interval `delta_t_s` keep the estimation error within
/// `delta_fmax_hz`, except with probability `p_e`?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionInput {
    pub p_e: f64,
    pub delta_fmax_hz: f64,
    pub delta_t_s: f64,
    pub snr_e: f64,
}

impl CriterionInput {
    pub fn new(p_e: f64, delta_fmax_hz: f64, delta_t_s: f64, snr_e: f64) -> Result<Self> {
        if !(p_e > 0.0 && p_e < 1.0) {
            return Err(Error::DomainError(format!("p_e must be in (0,1), got {p_e}")));
        }
        if !(delta_fmax_hz > 0.0) {
            return Err(Error::DomainError(format!(
                "delta_fmax_hz must be positive, got {delta_fmax_hz}"
            )));
        }
        ErrorModelInput::new(snr_e, delta_t_s, 0.0)?;
        Ok(Self { p_e, delta_fmax_hz, delta_t_s, snr_e })
    }

    /// True when the maximum error at confidence `1 - p_e` is within
    /// `delta_fmax_hz`.
    pub fn satisfied(&self) -> Result<bool> {
        Ok(max_error_at_confidence(self.p_e, self.delta_t_s, self.snr_e)? <= self.delta_fmax_hz)
    }
}
