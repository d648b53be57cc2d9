//! Calibration of inertial-sensor stochastic error models by matching
//! empirical Allan / Haar wavelet variances against a composite noise
//! model (quantization noise, white noise, bias instability, random walk,
//! deterministic drift).
//!
//! The pipeline is: simulate or ingest a signal ([`simulate`], [`wv::Signal`]),
//! compute the overlapped Allan variance per dyadic scale ([`wv`]), then
//! estimate model parameters by weighted moment matching ([`fit`]): the
//! closed-form GMWM solution, the iterative log-scale (ARMAV-style)
//! variant, and the classical slope-method baseline. [`mc`] benchmarks the
//! estimators over seeded replications, and [`units`] converts between
//! physical datasheet units and the per-sample units all core math uses.
//!
//! ```
//! use wvcal::model::{CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};
//! use wvcal::simulate::{simulate, SimConfig};
//! use wvcal::wv::allan_variance;
//! use wvcal::fit::fit_gmwm;
//!
//! let truth = CompositeModel::from_pairs(&[
//!     (ProcessKind::Wn, 1e-3),
//!     (ProcessKind::Rw, 1e-7),
//! ]).unwrap();
//! let cfg = SimConfig { model: truth, t: 1 << 14, seed: 1, sample_rate_hz: 250.0, stream_offset: 0 };
//! let signal = simulate(&cfg).unwrap();
//! let grid = ScaleGrid::dyadic(signal.len(), 16).unwrap();
//! let est = allan_variance(&signal, &grid).unwrap();
//! let fit = fit_gmwm(&est, &[ProcessKind::Wn, ProcessKind::Rw]).unwrap();
//! assert!(fit.converged);
//! ```

pub mod error;
pub mod fit;
pub mod io;
pub mod mc;
pub mod model;
pub mod simulate;
pub mod units;
pub mod wv;

pub use error::{Error, Result};
