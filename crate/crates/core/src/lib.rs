//! Carrier-frequency-offset estimation for OFDM receivers: the three
//! phase-difference estimators (CP-, preamble-, and pilot-based), the
//! closed-form error model and decoding criterion behind them, a two-step
//! coarse/residual compensation scheme, and a Monte Carlo link simulator
//! that checks the model against end-to-end trials.
//!
//! ## Example
//!
//! ```rust
//! use cfosim::channel::apply_cfo;
//! use cfosim::estimators::estimate_preamble;
//! use cfosim::waveform::{make_preamble, Numerology};
//!
//! let num = Numerology::lte_desk();
//! let reference = make_preamble(&num, 7);
//! let received = apply_cfo(&reference, 1000.0, 0.0);
//! let estimate = estimate_preamble(&received, &reference).unwrap();
//! assert!((estimate.f_hat_hz - 1000.0).abs() < 1.0);
//! ```

pub mod analysis;
pub mod channel;
pub mod error;
pub mod estimators;
pub mod linksim;
pub mod scheme;
pub mod waveform;

pub use error::{Error, Result};
