//! OFDM dimensioning, transmit waveform construction, and the
//! time/frequency-domain transforms.
//!
//! All transforms are unitary (`1/sqrt(n_fft)` in both directions) so that
//! symbol energy is the same in either domain. Every generator here is a
//! pure function of its arguments.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Known pilot values keyed by (OFDM symbol index, subcarrier index).
pub type PilotMap = BTreeMap<(usize, usize), Complex64>;

/// OFDM dimensioning: subcarrier spacing, DFT size, and cyclic-prefix length.
///
/// The sample rate is derived: `sample_rate_hz = scs_hz * n_fft`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerology {
    /// Subcarrier spacing in Hz.
    pub scs_hz: f64,
    /// DFT size in samples; power of two, at least 8.
    pub n_fft: usize,
    /// Cyclic-prefix length in samples; `0 <= cp_len < n_fft`.
    pub cp_len: usize,
}

impl Numerology {
    pub fn new(scs_hz: f64, n_fft: usize, cp_len: usize) -> Result<Self> {
        if !(scs_hz.is_finite() && scs_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "subcarrier spacing must be positive, got {scs_hz}"
            )));
        }
        if n_fft < 8 || !n_fft.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "n_fft must be a power of two >= 8, got {n_fft}"
            )));
        }
        if cp_len >= n_fft {
            return Err(Error::InvalidConfig(format!(
                "cp_len must be < n_fft, got {cp_len} (n_fft {n_fft})"
            )));
        }
        Ok(Self { scs_hz, n_fft, cp_len })
    }

    /// Desk-scale LTE-like numerology: 15 kHz spacing, 128-point FFT,
    /// 9-sample CP (1.92 Msps).
    pub fn lte_desk() -> Self {
        Self { scs_hz: 15_000.0, n_fft: 128, cp_len: 9 }
    }

    /// Derived sample rate, exactly `scs_hz * n_fft`.
    pub fn sample_rate_hz(&self) -> f64 {
        self.scs_hz * self.n_fft as f64
    }

    /// Samples per OFDM symbol including the cyclic prefix.
    pub fn symbol_len(&self) -> usize {
        self.n_fft + self.cp_len
    }

    /// Duration of one OFDM symbol including CP, in seconds.
    pub fn symbol_duration_s(&self) -> f64 {
        self.symbol_len() as f64 / self.sample_rate_hz()
    }

    /// Time separation of a CP sample and the tail sample it repeats:
    /// `n_fft / sample_rate = 1 / scs`.
    pub fn cp_pair_interval_s(&self) -> f64 {
        self.n_fft as f64 / self.sample_rate_hz()
    }
}

/// Complex baseband samples at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl TimeSignal {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidConfig("signal must be non-empty".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidConfig("signal contains non-finite samples".into()));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean per-sample power `E[|x|^2]`.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Frequency-domain symbols indexed by (OFDM symbol, subcarrier).
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    data: Vec<Complex64>,
    n_symbols: usize,
    n_subcarriers: usize,
    pub numerology: Numerology,
}

impl ResourceGrid {
    /// All-zero grid; `n_subcarriers` must not exceed the DFT size.
    pub fn new(numerology: Numerology, n_symbols: usize, n_subcarriers: usize) -> Result<Self> {
        if n_symbols == 0 || n_subcarriers == 0 {
            return Err(Error::InvalidConfig("grid dimensions must be nonzero".into()));
        }
        if n_subcarriers > numerology.n_fft {
            return Err(Error::InvalidConfig(format!(
                "{n_subcarriers} subcarriers exceed n_fft {}",
                numerology.n_fft
            )));
        }
        Ok(Self {
            data: vec![Complex64::new(0.0, 0.0); n_symbols * n_subcarriers],
            n_symbols,
            n_subcarriers,
            numerology,
        })
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn get(&self, symbol: usize, subcarrier: usize) -> Complex64 {
        self.data[symbol * self.n_subcarriers + subcarrier]
    }

    pub fn set(&mut self, symbol: usize, subcarrier: usize, value: Complex64) {
        self.data[symbol * self.n_subcarriers + subcarrier] = value;
    }

    pub fn symbol_row(&self, symbol: usize) -> &[Complex64] {
        &self.data[symbol * self.n_subcarriers..(symbol + 1) * self.n_subcarriers]
    }

    /// Largest per-entry magnitude difference against `other`, compared over
    /// the overlapping subcarriers (grids may differ in width after
    /// demodulation).
    pub fn max_abs_diff(&self, other: &ResourceGrid) -> f64 {
        let width = self.n_subcarriers.min(other.n_subcarriers);
        let symbols = self.n_symbols.min(other.n_symbols);
        let mut worst = 0.0f64;
        for l in 0..symbols {
            for k in 0..width {
                worst = worst.max((self.get(l, k) - other.get(l, k)).norm());
            }
        }
        worst
    }
}

/// Placement and seeding of the pilot resource elements used for residual
/// CFO estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotLayout {
    /// The two pilot-bearing OFDM symbols, in increasing order.
    pub pilot_symbol_indices: (usize, usize),
    /// Subcarriers carrying pilots in both pilot symbols.
    pub pilot_subcarriers: Vec<usize>,
    /// Seed for the pilot value sequence.
    pub seed: u64,
}

impl PilotLayout {
    pub fn new(pilot_symbol_indices: (usize, usize), pilot_subcarriers: Vec<usize>, seed: u64) -> Result<Self> {
        let layout = Self { pilot_symbol_indices, pilot_subcarriers, seed };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let (first, second) = self.pilot_symbol_indices;
        if first >= second {
            return Err(Error::InvalidConfig(format!(
                "pilot symbol indices must be distinct and ordered, got ({first}, {second})"
            )));
        }
        if self.pilot_subcarriers.is_empty() {
            return Err(Error::InvalidConfig("pilot subcarrier list is empty".into()));
        }
        let mut sorted = self.pilot_subcarriers.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.pilot_subcarriers.len() {
            return Err(Error::InvalidConfig("pilot subcarriers must be distinct".into()));
        }
        Ok(())
    }

    /// Validate against a concrete grid shape.
    pub fn validate_for_grid(&self, n_symbols: usize, n_subcarriers: usize) -> Result<()> {
        self.validate()?;
        if self.pilot_symbol_indices.1 >= n_symbols {
            return Err(Error::InvalidConfig(format!(
                "pilot symbol {} outside grid of {n_symbols} symbols",
                self.pilot_symbol_indices.1
            )));
        }
        if let Some(&sc) = self.pilot_subcarriers.iter().find(|&&sc| sc >= n_subcarriers) {
            return Err(Error::InvalidConfig(format!(
                "pilot subcarrier {sc} outside grid width {n_subcarriers}"
            )));
        }
        Ok(())
    }

    /// OFDM-symbol spacing between the two pilot symbols.
    pub fn symbol_spacing(&self) -> usize {
        self.pilot_symbol_indices.1 - self.pilot_symbol_indices.0
    }

    /// Time separation of the two pilot symbols.
    pub fn pilot_interval_s(&self, numerology: &Numerology) -> f64 {
        self.symbol_spacing() as f64 * numerology.symbol_duration_s()
    }
}

// Primitive-polynomial taps (Fibonacci form) for maximal-length sequences,
// indexed by register length m = 2..=16.
const MSEQ_TAPS: [&[u32]; 15] = [
    &[2, 1],
    &[3, 2],
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 11, 10, 4],
    &[13, 12, 11, 8],
    &[14, 13, 12, 2],
    &[15, 14],
    &[16, 15, 13, 4],
];

/// +-1 maximal-length sequence of length `2^m - 1`. The seed selects the
/// initial register state (a cyclic shift of the sequence).
fn msequence(m: u32, seed: u64) -> Vec<f64> {
    let taps = MSEQ_TAPS[(m - 2) as usize];
    let period = (1u64 << m) - 1;
    let mut state = (seed % period) as u32 + 1;
    let mut out = Vec::with_capacity(period as usize);
    for _ in 0..period {
        out.push(if state & 1 == 1 { 1.0 } else { -1.0 });
        let mut feedback = 0u32;
        for &t in taps {
            feedback ^= (state >> (t - 1)) & 1;
        }
        state = (state >> 1) | (feedback << (m - 1));
    }
    out
}

/// Seeded +-1 sequence for register lengths without a taps entry.
fn rademacher(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Build the known synchronization preamble: `n_fft` time-domain samples of
/// unit average power, deterministic in `(numerology, seed)`.
///
/// The source sequence is a +-1 m-sequence of length `n_fft/2 - 1` mapped
/// onto the even subcarriers (DC left empty), then inverse-DFT'd. Occupying
/// only even bins makes the two time-domain halves identical, so the
/// front/back half-correlations of [`estimate_preamble`] stay phase-coherent.
///
/// [`estimate_preamble`]: crate::estimators::estimate_preamble
pub fn make_preamble(numerology: &Numerology, seed: u64) -> TimeSignal {
    let n = numerology.n_fft;
    let m = (n / 2).trailing_zeros();
    let len = n / 2 - 1;
    let seq = if (2..=16).contains(&m) {
        msequence(m, seed)
    } else {
        rademacher(len, seed)
    };

    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (i, &v) in seq.iter().enumerate() {
        spectrum[2 * (i + 1)] = Complex64::new(v, 0.0);
    }

    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let unitary = 1.0 / (n as f64).sqrt();
    for s in spectrum.iter_mut() {
        *s *= unitary;
    }

    let power = spectrum.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64;
    let norm = 1.0 / power.sqrt();
    for s in spectrum.iter_mut() {
        *s *= norm;
    }

    TimeSignal { samples: spectrum, sample_rate_hz: numerology.sample_rate_hz() }
}

/// Generate the known pilot values for a layout: unit-magnitude QPSK points
/// (`1, j, -1, -j`), deterministic in the layout seed.
pub fn make_pilot_sequence(layout: &PilotLayout) -> PilotMap {
    const POINTS: [Complex64; 4] = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, -1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(layout.seed);
    let mut map = PilotMap::new();
    for &symbol in &[layout.pilot_symbol_indices.0, layout.pilot_symbol_indices.1] {
        for &sc in &layout.pilot_subcarriers {
            map.insert((symbol, sc), POINTS[rng.gen_range(0..4)]);
        }
    }
    map
}

/// OFDM-modulate a grid: per symbol, unitary inverse DFT of the subcarrier
/// values (bins `0..n_subcarriers`; remaining bins zero) with the last
/// `cp_len` samples prepended as cyclic prefix.
pub fn ofdm_modulate(grid: &ResourceGrid) -> TimeSignal {
    let num = &grid.numerology;
    let n = num.n_fft;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    let unitary = 1.0 / (n as f64).sqrt();

    let mut out = Vec::with_capacity(grid.n_symbols() * num.symbol_len());
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for l in 0..grid.n_symbols() {
        buf.fill(Complex64::new(0.0, 0.0));
        buf[..grid.n_subcarriers()].copy_from_slice(grid.symbol_row(l));
        ifft.process(&mut buf);
        for s in buf.iter_mut() {
            *s *= unitary;
        }
        out.extend_from_slice(&buf[n - num.cp_len..]);
        out.extend_from_slice(&buf);
    }

    TimeSignal { samples: out, sample_rate_hz: num.sample_rate_hz() }
}

/// OFDM-demodulate the first `n_symbols` symbols of a signal: strip each CP
/// and apply the unitary forward DFT. The returned grid spans all `n_fft`
/// subcarriers.
pub fn ofdm_demodulate(
    signal: &TimeSignal,
    numerology: &Numerology,
    n_symbols: usize,
) -> Result<ResourceGrid> {
    let needed = n_symbols * numerology.symbol_len();
    if signal.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: signal.len() });
    }

    let n = numerology.n_fft;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let unitary = 1.0 / (n as f64).sqrt();

    let mut grid = ResourceGrid::new(*numerology, n_symbols, n)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for l in 0..n_symbols {
        let start = l * numerology.symbol_len() + numerology.cp_len;
        buf.copy_from_slice(&signal.samples[start..start + n]);
        fft.process(&mut buf);
        for (k, s) in buf.iter().enumerate() {
            grid.set(l, k, s * unitary);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::apply_cfo;
    use proptest::prelude::*;

    fn random_grid(num: Numerology, n_symbols: usize, n_sc: usize, seed: u64) -> ResourceGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = ResourceGrid::new(num, n_symbols, n_sc).unwrap();
        for l in 0..n_symbols {
            for k in 0..n_sc {
                grid.set(l, k, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            }
        }
        grid
    }

    #[test]
    fn numerology_invariants() {
        assert!(Numerology::new(15e3, 127, 9).is_err());
        assert!(Numerology::new(15e3, 4, 0).is_err());
        assert!(Numerology::new(15e3, 128, 128).is_err());
        assert!(Numerology::new(-15e3, 128, 9).is_err());
        let num = Numerology::new(15e3, 128, 9).unwrap();
        assert_eq!(num.sample_rate_hz(), 15e3 * 128.0);
        assert_eq!(num.symbol_len(), 137);
    }

    #[test]
    fn preamble_is_deterministic() {
        let num = Numerology::lte_desk();
        let a = make_preamble(&num, 7);
        let b = make_preamble(&num, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 128);
    }

    #[test]
    fn preamble_has_unit_power() {
        let num = Numerology::lte_desk();
        for seed in 0..8 {
            let p = make_preamble(&num, seed);
            assert!((p.mean_power() - 1.0).abs() < 1e-9, "seed {seed}: {}", p.mean_power());
        }
    }

    #[test]
    fn preamble_seeds_differ() {
        let num = Numerology::lte_desk();
        let a = make_preamble(&num, 7);
        let b = make_preamble(&num, 8);
        assert!(a.samples.iter().zip(&b.samples).any(|(x, y)| (x - y).norm() > 1e-12));
    }

    #[test]
    fn preamble_halves_repeat() {
        let num = Numerology::lte_desk();
        let p = make_preamble(&num, 3);
        let n = p.len();
        for k in 0..n / 2 {
            assert!((p.samples[k] - p.samples[k + n / 2]).norm() < 1e-12);
        }
    }

    #[test]
    fn msequence_has_full_period_balance() {
        // 2^m - 1 entries, ones outnumber minus-ones by exactly one
        let seq = msequence(6, 1);
        assert_eq!(seq.len(), 63);
        let sum: f64 = seq.iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn pilot_values_unit_magnitude_and_deterministic() {
        let layout =
            PilotLayout::new((0, 4), (0..72).step_by(6).collect(), 11).unwrap();
        let a = make_pilot_sequence(&layout);
        let b = make_pilot_sequence(&layout);
        assert_eq!(a, b);
        assert_eq!(a.len(), 24);
        for v in a.values() {
            assert_eq!(v.norm(), 1.0);
        }
        let other = make_pilot_sequence(&PilotLayout { seed: 12, ..layout });
        assert_ne!(a, other);
    }

    #[test]
    fn pilot_layout_rejects_bad_shapes() {
        assert!(PilotLayout::new((4, 4), vec![0], 0).is_err());
        assert!(PilotLayout::new((5, 1), vec![0], 0).is_err());
        assert!(PilotLayout::new((0, 4), vec![0, 0], 0).is_err());
        let layout = PilotLayout::new((0, 4), vec![0, 70], 0).unwrap();
        assert!(layout.validate_for_grid(5, 72).is_ok());
        assert!(layout.validate_for_grid(4, 72).is_err());
        assert!(layout.validate_for_grid(5, 64).is_err());
    }

    #[test]
    fn modulate_zero_grid() {
        let num = Numerology::lte_desk();
        let grid = ResourceGrid::new(num, 1, 72).unwrap();
        let sig = ofdm_modulate(&grid);
        assert_eq!(sig.len(), 137);
        assert!(sig.samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn modulate_prefixes_cyclic_copy() {
        let num = Numerology::lte_desk();
        let grid = random_grid(num, 3, 72, 5);
        let sig = ofdm_modulate(&grid);
        for l in 0..3 {
            let sym = &sig.samples[l * num.symbol_len()..(l + 1) * num.symbol_len()];
            for k in 0..num.cp_len {
                assert_eq!(sym[k], sym[num.n_fft + k]);
            }
        }
    }

    #[test]
    fn single_tone_is_complex_exponential() {
        let num = Numerology::lte_desk();
        let mut grid = ResourceGrid::new(num, 1, 72).unwrap();
        let k = 5;
        grid.set(0, k, Complex64::new(1.0, 0.0));
        let sig = ofdm_modulate(&grid);
        let mag = 1.0 / (num.n_fft as f64).sqrt();
        let rate = k as f64 * num.scs_hz / num.sample_rate_hz();
        for (n, s) in sig.samples[num.cp_len..].iter().enumerate() {
            let expect = Complex64::from_polar(mag, 2.0 * std::f64::consts::PI * rate * n as f64);
            assert!((s - expect).norm() < 1e-12, "sample {n}");
        }
    }

    #[test]
    fn round_trip_recovers_grid() {
        let num = Numerology::lte_desk();
        let grid = random_grid(num, 4, 72, 9);
        let rx = ofdm_demodulate(&ofdm_modulate(&grid), &num, 4).unwrap();
        assert!(grid.max_abs_diff(&rx) < 1e-9);
        // unused bins stay empty
        for l in 0..4 {
            for k in 72..num.n_fft {
                assert!(rx.get(l, k).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn demodulate_checks_length() {
        let num = Numerology::lte_desk();
        let grid = random_grid(num, 2, 72, 1);
        let sig = ofdm_modulate(&grid);
        match ofdm_demodulate(&sig, &num, 3) {
            Err(Error::InsufficientSamples { needed, got }) => {
                assert_eq!(needed, 3 * 137);
                assert_eq!(got, 2 * 137);
            }
            other => panic!("expected InsufficientSamples, got {other:?}"),
        }
    }

    #[test]
    fn integer_bin_cfo_is_circular_shift() {
        let num = Numerology::lte_desk();
        let grid = random_grid(num, 1, 72, 13);
        let shifted = apply_cfo(&ofdm_modulate(&grid), num.scs_hz, 0.0);
        let rx = ofdm_demodulate(&shifted, &num, 1).unwrap();
        // bin k of the original appears at bin k+1, with the CP-induced
        // phase offset exp(j*2*pi*f*cp_len/fs) common to every bin
        let phase = Complex64::from_polar(
            1.0,
            2.0 * std::f64::consts::PI * num.scs_hz * num.cp_len as f64 / num.sample_rate_hz(),
        );
        for k in 0..72 {
            let got = rx.get(0, k + 1);
            let want = grid.get(0, k) * phase;
            assert!((got - want).norm() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn parseval_energy_matches() {
        let num = Numerology::lte_desk();
        let grid = random_grid(num, 1, 72, 21);
        let sig = ofdm_modulate(&grid);
        let time_energy: f64 =
            sig.samples[num.cp_len..].iter().map(|s| s.norm_sqr()).sum();
        let freq_energy: f64 = grid.symbol_row(0).iter().map(|s| s.norm_sqr()).sum();
        assert!((time_energy - freq_energy).abs() / freq_energy < 1e-9);
    }

    proptest! {
        #[test]
        fn prop_round_trip(seed in 0u64..1000, n_symbols in 1usize..4) {
            let num = Numerology::new(15e3, 64, 5).unwrap();
            let grid = random_grid(num, n_symbols, 48, seed);
            let rx = ofdm_demodulate(&ofdm_modulate(&grid), &num, n_symbols).unwrap();
            prop_assert!(grid.max_abs_diff(&rx) < 1e-9);
        }

        #[test]
        fn prop_preamble_power(seed in 0u64..500) {
            let num = Numerology::new(15e3, 64, 5).unwrap();
            let p = make_preamble(&num, seed);
            prop_assert!((p.mean_power() - 1.0).abs() < 1e-9);
        }
    }
}
