//! Phase-difference CFO estimators.
//!
//! All three estimators share one core: accumulate a complex correlation
//! between measurements separated by a known interval, then read the offset
//! from the principal angle of the sum,
//! `f_hat = angle(C) / (2*pi*delta_t)`. Taking the angle of the summed
//! correlation (rather than summing per-pair angles) averages the noise
//! coherently before the nonlinearity.
//!
//! The conjugation order is `conj(early) * late` everywhere, so a positive
//! injected offset always yields a positive estimate. Principal-angle
//! arithmetic confines every estimate to the unambiguous range
//! `+-1/(2*delta_t)`; true offsets outside it alias modulo `1/delta_t`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::channel::apply_cfo;
use crate::error::{Error, Result};
use crate::waveform::{Numerology, PilotLayout, PilotMap, ResourceGrid, TimeSignal};

/// An estimated offset together with the measurement interval that produced
/// it and the unambiguous range that interval implies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfoEstimate {
    /// Estimated offset in Hz; always within `+-range_hz`.
    pub f_hat_hz: f64,
    /// Interval between the two phase measurements, in seconds.
    pub delta_t_s: f64,
    /// Half-width of the unambiguous range, exactly `1/(2*delta_t)`.
    pub range_hz: f64,
    /// Magnitude of the accumulated correlation (confidence proxy).
    pub corr_mag: f64,
    /// Number of correlated sample or symbol pairs.
    pub n_pairs: usize,
}

impl CfoEstimate {
    fn from_correlation(corr: Complex64, delta_t_s: f64, n_pairs: usize) -> Result<Self> {
        if corr.norm() == 0.0 {
            return Err(Error::ZeroCorrelation);
        }
        Ok(Self {
            f_hat_hz: corr.arg() / (TAU * delta_t_s),
            delta_t_s,
            range_hz: 1.0 / (2.0 * delta_t_s),
            corr_mag: corr.norm(),
            n_pairs,
        })
    }
}

/// Which concrete estimator a configuration refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Cp,
    Preamble,
    Pilot,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Cp => "cp",
            EstimatorKind::Preamble => "preamble",
            EstimatorKind::Pilot => "pilot",
        })
    }
}

/// Static description of an estimator instance: its measurement interval
/// and how many pairs it averages.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub delta_t_s: f64,
    pub n_pairs: usize,
    pub description: String,
}

impl EstimatorSpec {
    /// CP correlation over `n_symbols` OFDM symbols.
    pub fn cp(numerology: &Numerology, n_symbols: usize) -> Self {
        Self {
            kind: EstimatorKind::Cp,
            delta_t_s: numerology.cp_pair_interval_s(),
            n_pairs: n_symbols * numerology.cp_len,
            description: format!("cp correlation over {n_symbols} symbols"),
        }
    }

    /// Half-symbol correlation against a known preamble.
    pub fn preamble(numerology: &Numerology) -> Self {
        Self {
            kind: EstimatorKind::Preamble,
            delta_t_s: numerology.n_fft as f64 / 2.0 / numerology.sample_rate_hz(),
            n_pairs: numerology.n_fft / 2,
            description: "preamble half correlation".into(),
        }
    }

    /// Channel-phase tracking across the two pilot symbols of a layout.
    pub fn pilot(numerology: &Numerology, layout: &PilotLayout) -> Self {
        Self {
            kind: EstimatorKind::Pilot,
            delta_t_s: layout.pilot_interval_s(numerology),
            n_pairs: layout.pilot_subcarriers.len(),
            description: format!(
                "pilot phase tracking, symbols {} and {}",
                layout.pilot_symbol_indices.0, layout.pilot_symbol_indices.1
            ),
        }
    }

    /// Unambiguous half-range of this estimator.
    pub fn range_hz(&self) -> f64 {
        1.0 / (2.0 * self.delta_t_s)
    }
}

/// Principal phase difference `angle(conj(r1) * r2)` in `(-pi, pi]`.
pub fn phase_diff(r1: Complex64, r2: Complex64) -> Result<f64> {
    if r1.norm() == 0.0 || r2.norm() == 0.0 {
        return Err(Error::ZeroInput);
    }
    Ok((r1.conj() * r2).arg())
}

/// CP-based estimator: correlate each symbol's cyclic prefix with the tail
/// samples it repeats, accumulated over `n_symbols` symbols.
///
/// `C = sum over symbols, sum over k < cp_len of conj(r[k]) * r[k + n_fft]`,
/// `f_hat = angle(C) / (2*pi * n_fft/fs)`. Symbol boundaries are assumed at
/// index 0.
pub fn estimate_cp(
    signal: &TimeSignal,
    numerology: &Numerology,
    n_symbols: usize,
) -> Result<CfoEstimate> {
    let needed = n_symbols * numerology.symbol_len();
    if signal.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: signal.len() });
    }
    let mut corr = Complex64::new(0.0, 0.0);
    for l in 0..n_symbols {
        let start = l * numerology.symbol_len();
        for k in 0..numerology.cp_len {
            corr += signal.samples[start + k].conj() * signal.samples[start + k + numerology.n_fft];
        }
    }
    CfoEstimate::from_correlation(corr, numerology.cp_pair_interval_s(), n_symbols * numerology.cp_len)
}

/// Preamble-based estimator: correlate the received signal against the known
/// reference over each half, then read the phase advance between halves.
///
/// `A = sum_{k < N/2} r[k] * conj(p[k])`, `B = sum_{k >= N/2} r[k] * conj(p[k])`,
/// `f_hat = angle(conj(A) * B) / (2*pi * (N/2)/fs)`. Any global phase on the
/// received signal cancels in `conj(A) * B`.
pub fn estimate_preamble(signal: &TimeSignal, reference: &TimeSignal) -> Result<CfoEstimate> {
    let n = reference.len();
    if signal.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: signal.len() });
    }
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidConfig(format!("preamble length must be even, got {n}")));
    }
    let half = n / 2;
    let mut a = Complex64::new(0.0, 0.0);
    let mut b = Complex64::new(0.0, 0.0);
    for k in 0..half {
        a += signal.samples[k] * reference.samples[k].conj();
        b += signal.samples[half + k] * reference.samples[half + k].conj();
    }
    let delta_t = half as f64 / reference.sample_rate_hz;
    CfoEstimate::from_correlation(a.conj() * b, delta_t, half)
}

/// Pilot-based estimator: track the phase advance of the channel estimate
/// `H = Y/X` between the two pilot-bearing symbols.
///
/// `f_hat = angle(sum_i conj(H1(i)) * H2(i)) / (2*pi*delta_t)` with `delta_t`
/// the pilot-symbol spacing in time. A flat channel gain common to both
/// symbols cancels.
pub fn estimate_pilot(
    grid: &ResourceGrid,
    layout: &PilotLayout,
    pilots: &PilotMap,
    numerology: &Numerology,
) -> Result<CfoEstimate> {
    let (first, second) = layout.pilot_symbol_indices;
    layout
        .validate_for_grid(grid.n_symbols(), grid.n_subcarriers())
        .map_err(|e| Error::MissingPilots(e.to_string()))?;

    let mut corr = Complex64::new(0.0, 0.0);
    for &sc in &layout.pilot_subcarriers {
        let x1 = pilots
            .get(&(first, sc))
            .ok_or_else(|| Error::MissingPilots(format!("no pilot value at ({first}, {sc})")))?;
        let x2 = pilots
            .get(&(second, sc))
            .ok_or_else(|| Error::MissingPilots(format!("no pilot value at ({second}, {sc})")))?;
        if x1.norm() == 0.0 || x2.norm() == 0.0 {
            return Err(Error::ZeroInput);
        }
        let h1 = grid.get(first, sc) / x1;
        let h2 = grid.get(second, sc) / x2;
        corr += h1.conj() * h2;
    }
    CfoEstimate::from_correlation(
        corr,
        layout.pilot_interval_s(numerology),
        layout.pilot_subcarriers.len(),
    )
}

/// Undo an estimated offset: `apply_cfo(signal, -f_hat, 0)`.
pub fn compensate(signal: &TimeSignal, f_hat_hz: f64) -> TimeSignal {
    apply_cfo(signal, -f_hat_hz, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply_cfo;
    use crate::waveform::{make_pilot_sequence, make_preamble, ofdm_demodulate, ofdm_modulate, ResourceGrid};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn desk() -> Numerology {
        Numerology::lte_desk()
    }

    fn data_block(num: Numerology, n_symbols: usize, seed: u64) -> TimeSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = ResourceGrid::new(num, n_symbols, 72).unwrap();
        for l in 0..n_symbols {
            for k in 0..72 {
                let quadrant = rng.gen_range(0..4) as f64;
                grid.set(
                    l,
                    k,
                    Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4 * (2.0 * quadrant + 1.0)),
                );
            }
        }
        ofdm_modulate(&grid)
    }

    #[test]
    fn phase_diff_basics() {
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        assert!((phase_diff(one, j).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let r = Complex64::new(0.3, -0.8);
        assert_eq!(phase_diff(r, r).unwrap(), 0.0);
        let a = Complex64::from_polar(1.0, std::f64::consts::PI / 6.0);
        let b = Complex64::from_polar(1.0, std::f64::consts::PI / 3.0);
        assert!((phase_diff(a, b).unwrap() - std::f64::consts::PI / 6.0).abs() < 1e-12);
        assert_eq!(phase_diff(Complex64::new(0.0, 0.0), one), Err(Error::ZeroInput));
    }

    #[test]
    fn cp_estimator_recovers_offset_exactly() {
        let num = desk();
        let tx = data_block(num, 4, 1);
        let rx = apply_cfo(&tx, 500.0, 0.7);
        let est = estimate_cp(&rx, &num, 4).unwrap();
        assert!((est.f_hat_hz - 500.0).abs() < 0.01, "got {}", est.f_hat_hz);
        assert_eq!(est.n_pairs, 4 * 9);
        assert!((est.delta_t_s - 1.0 / 15_000.0).abs() < 1e-15);
        assert!((est.range_hz - 7_500.0).abs() < 1e-9);
    }

    #[test]
    fn cp_estimator_zero_offset() {
        let num = desk();
        let tx = data_block(num, 4, 2);
        let est = estimate_cp(&tx, &num, 4).unwrap();
        assert!(est.f_hat_hz.abs() < 1e-9, "got {}", est.f_hat_hz);
    }

    #[test]
    fn cp_estimator_aliases_by_full_range() {
        let num = desk();
        let tx = data_block(num, 4, 3);
        let alias = 1.0 / num.cp_pair_interval_s(); // 15 kHz
        let rx = apply_cfo(&tx, alias + 500.0, 0.0);
        let est = estimate_cp(&rx, &num, 4).unwrap();
        assert!((est.f_hat_hz - 500.0).abs() < 0.01, "got {}", est.f_hat_hz);
    }

    #[test]
    fn cp_estimator_rejects_short_signal() {
        let num = desk();
        let tx = data_block(num, 2, 4);
        assert!(matches!(
            estimate_cp(&tx, &num, 3),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn cp_estimator_zero_correlation_on_silence() {
        let num = desk();
        let zero = TimeSignal::new(
            vec![Complex64::new(1e-300, 0.0); num.symbol_len()],
            num.sample_rate_hz(),
        )
        .unwrap();
        let mut silent = zero;
        for s in silent.samples.iter_mut() {
            *s = Complex64::new(0.0, 0.0);
        }
        assert_eq!(estimate_cp(&silent, &num, 1), Err(Error::ZeroCorrelation));
    }

    #[test]
    fn preamble_estimator_recovers_offset() {
        let num = desk();
        let p = make_preamble(&num, 7);
        let rx = apply_cfo(&p, 1000.0, 0.0);
        let est = estimate_preamble(&rx, &p).unwrap();
        assert!((est.f_hat_hz - 1000.0).abs() < 1.0, "got {}", est.f_hat_hz);
        assert_eq!(est.n_pairs, 64);
        assert!((est.delta_t_s - 64.0 / 1.92e6).abs() < 1e-18);
    }

    #[test]
    fn preamble_estimator_zero_for_clean_input() {
        let num = desk();
        let p = make_preamble(&num, 7);
        let est = estimate_preamble(&p, &p).unwrap();
        assert_eq!(est.f_hat_hz, 0.0);
    }

    #[test]
    fn preamble_estimator_ignores_global_phase() {
        let num = desk();
        let p = make_preamble(&num, 7);
        let mut rotated = p.clone();
        let g = Complex64::from_polar(1.0, 2.1);
        for s in rotated.samples.iter_mut() {
            *s *= g;
        }
        let est = estimate_preamble(&rotated, &p).unwrap();
        assert!(est.f_hat_hz.abs() < 1e-9);
    }

    #[test]
    fn preamble_estimator_rejects_length_mismatch() {
        let num = desk();
        let p = make_preamble(&num, 7);
        let short = TimeSignal::new(p.samples[..64].to_vec(), p.sample_rate_hz).unwrap();
        assert_eq!(
            estimate_preamble(&short, &p),
            Err(Error::LengthMismatch { expected: 128, got: 64 })
        );
    }

    fn pilot_setup() -> (Numerology, PilotLayout) {
        (desk(), PilotLayout::new((0, 4), (0..72).step_by(6).collect(), 3).unwrap())
    }

    /// Grid whose two pilot symbols carry identical values per subcarrier,
    /// so the demodulated rows differ only by the offset-induced rotation.
    fn equal_pilot_grid(num: &Numerology, layout: &PilotLayout) -> (ResourceGrid, PilotMap) {
        let mut map = PilotMap::new();
        let mut grid = ResourceGrid::new(*num, 5, 72).unwrap();
        let points = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (i, &sc) in layout.pilot_subcarriers.iter().enumerate() {
            let v = points[i % 4];
            for &sym in &[layout.pilot_symbol_indices.0, layout.pilot_symbol_indices.1] {
                map.insert((sym, sc), v);
                grid.set(sym, sc, v);
            }
        }
        (grid, map)
    }

    #[test]
    fn pilot_estimator_recovers_offset_through_full_chain() {
        let (num, layout) = pilot_setup();
        let (grid, map) = equal_pilot_grid(&num, &layout);
        let rx = apply_cfo(&ofdm_modulate(&grid), 300.0, 0.0);
        let demod = ofdm_demodulate(&rx, &num, 5).unwrap();
        let est = estimate_pilot(&demod, &layout, &map, &num).unwrap();
        assert!((est.f_hat_hz - 300.0).abs() < 0.5, "got {}", est.f_hat_hz);
        assert_eq!(est.n_pairs, 12);
        let dt = 4.0 * 137.0 / 1.92e6;
        assert!((est.delta_t_s - dt).abs() < 1e-15);
    }

    #[test]
    fn pilot_estimator_zero_when_symbols_identical() {
        let (num, layout) = pilot_setup();
        let (grid, map) = equal_pilot_grid(&num, &layout);
        let demod = ofdm_demodulate(&ofdm_modulate(&grid), &num, 5).unwrap();
        let est = estimate_pilot(&demod, &layout, &map, &num).unwrap();
        assert!(est.f_hat_hz.abs() < 1e-9);
    }

    #[test]
    fn pilot_estimator_invariant_to_flat_gain() {
        let (num, layout) = pilot_setup();
        let map = make_pilot_sequence(&layout);
        let mut grid = ResourceGrid::new(num, 5, 72).unwrap();
        let rot = Complex64::from_polar(1.0, 0.9);
        for (&(sym, sc), &v) in &map {
            let spun = if sym == layout.pilot_symbol_indices.1 { v * rot } else { v };
            grid.set(sym, sc, spun);
        }
        let base = estimate_pilot(&grid, &layout, &map, &num).unwrap();
        let g = Complex64::from_polar(2.5, -1.2);
        let mut scaled = grid.clone();
        for l in 0..5 {
            for k in 0..72 {
                scaled.set(l, k, scaled.get(l, k) * g);
            }
        }
        let with_gain = estimate_pilot(&scaled, &layout, &map, &num).unwrap();
        assert!((base.f_hat_hz - with_gain.f_hat_hz).abs() < 1e-9);
    }

    #[test]
    fn pilot_estimator_reports_missing_pilots() {
        let (num, layout) = pilot_setup();
        let map = make_pilot_sequence(&layout);
        let grid = ResourceGrid::new(num, 3, 72).unwrap(); // too few symbols
        assert!(matches!(
            estimate_pilot(&grid, &layout, &map, &num),
            Err(Error::MissingPilots(_))
        ));
        let grid5 = ResourceGrid::new(num, 5, 72).unwrap();
        let empty = PilotMap::new();
        assert!(matches!(
            estimate_pilot(&grid5, &layout, &empty, &num),
            Err(Error::MissingPilots(_))
        ));
    }

    #[test]
    fn compensate_round_trip() {
        let num = desk();
        let tx = data_block(num, 4, 5);
        let rx = apply_cfo(&tx, 777.0, 0.0);
        let back = compensate(&rx, 777.0);
        for (a, b) in tx.samples.iter().zip(&back.samples) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn second_pass_estimate_is_negligible() {
        let num = desk();
        let tx = data_block(num, 4, 6);
        let rx = apply_cfo(&tx, 1500.0, 0.3);
        let first = estimate_cp(&rx, &num, 4).unwrap();
        let fixed = compensate(&rx, first.f_hat_hz);
        let second = estimate_cp(&fixed, &num, 4).unwrap();
        assert!(second.f_hat_hz.abs() <= first.f_hat_hz.abs());
        assert!(second.f_hat_hz.abs() < 1e-6, "residual {}", second.f_hat_hz);
    }

    #[test]
    fn estimates_follow_offset_sign() {
        let num = desk();
        let tx = data_block(num, 4, 7);
        let p = make_preamble(&num, 1);
        for f in [600.0, -600.0] {
            let cp = estimate_cp(&apply_cfo(&tx, f, 0.1), &num, 4).unwrap();
            assert_eq!(cp.f_hat_hz.signum(), f.signum());
            let pre = estimate_preamble(&apply_cfo(&p, f, 0.1), &p).unwrap();
            assert_eq!(pre.f_hat_hz.signum(), f.signum());
        }
    }

    #[test]
    fn global_phase_leaves_estimates_unchanged() {
        let num = desk();
        let tx = data_block(num, 4, 8);
        let rx = apply_cfo(&tx, 900.0, 0.0);
        let spun = apply_cfo(&rx, 0.0, 1.9); // pure global phase
        let a = estimate_cp(&rx, &num, 4).unwrap();
        let b = estimate_cp(&spun, &num, 4).unwrap();
        assert!((a.f_hat_hz - b.f_hat_hz).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn prop_estimate_within_range(f in -40_000.0f64..40_000.0) {
            let num = desk();
            let tx = data_block(num, 2, 11);
            let est = estimate_cp(&apply_cfo(&tx, f, 0.0), &num, 2).unwrap();
            prop_assert!(est.f_hat_hz.abs() <= est.range_hz + 1e-9);
        }

        #[test]
        fn prop_preamble_aliases(k in -3i32..=3, f in -6_000.0f64..6_000.0) {
            let num = desk();
            let p = make_preamble(&num, 2);
            let alias = 1.0 / (64.0 / 1.92e6);
            let shifted = apply_cfo(&p, f + k as f64 * alias, 0.0);
            let base = apply_cfo(&p, f, 0.0);
            let got = estimate_preamble(&shifted, &p).unwrap().f_hat_hz;
            let want = estimate_preamble(&base, &p).unwrap().f_hat_hz;
            prop_assert!((got - want).abs() < 0.01, "k={} f={} got={} want={}", k, f, got, want);
        }

        #[test]
        fn prop_phase_diff_principal(a in -3.1f64..3.1, b in -3.1f64..3.1) {
            let r1 = Complex64::from_polar(1.0, a);
            let r2 = Complex64::from_polar(1.0, b);
            let d = phase_diff(r1, r2).unwrap();
            prop_assert!(d > -std::f64::consts::PI && d <= std::f64::consts::PI);
        }
    }
}
