use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fit::{canonical_active, FitResult, MethodDescriptor};
use crate::model::{model_wv, term_coeff, CompositeModel, ProcessKind, VarianceConvention};
use crate::wv::WvEstimate;

/// Half-width of the slope band around each process's characteristic
/// log-log slope. Calibration choice; widen to accept noisier regions.
pub const SLOPE_TOLERANCE: f64 = 0.35;

#[derive(Debug, Clone, Copy)]
struct Run {
    /// Index of the first slope pair in the run.
    start: usize,
    /// Number of qualifying adjacent pairs (the run spans `len + 1` levels).
    len: usize,
}

/// Maximal contiguous runs of `true`.
fn runs(mask: &[bool]) -> Vec<Run> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if mask[i] {
            let start = i;
            while i < mask.len() && mask[i] {
                i += 1;
            }
            out.push(Run {
                start,
                len: i - start,
            });
        } else {
            i += 1;
        }
    }
    out
}

/// Pick the run for a process: longest first, then the canonical region
/// (short scales for QN/WN, long scales for RW/DR, central for BI).
fn select_run(kind: ProcessKind, candidates: &[Run], n_pairs: usize) -> Run {
    let mut best = candidates[0];
    for &r in &candidates[1..] {
        if r.len != best.len {
            if r.len > best.len {
                best = r;
            }
            continue;
        }
        best = match kind {
            ProcessKind::Qn | ProcessKind::Wn => {
                if r.start < best.start {
                    r
                } else {
                    best
                }
            }
            ProcessKind::Rw | ProcessKind::Dr => {
                if r.start > best.start {
                    r
                } else {
                    best
                }
            }
            ProcessKind::Bi => {
                let center = |run: Run| run.start as f64 + run.len as f64 / 2.0;
                let mid = (n_pairs.saturating_sub(1)) as f64 / 2.0;
                let (db, dr) = ((center(best) - mid).abs(), (center(r) - mid).abs());
                if dr < db || (dr == db && r.start < best.start) {
                    r
                } else {
                    best
                }
            }
        };
    }
    best
}

/// Slope-region baseline on the Allan variance: for each active process,
/// find the contiguous level run whose local log2-slope stays within
/// `SLOPE_TOLERANCE` of the process's characteristic slope, then read the
/// parameter off the run as a degrees-of-freedom-weighted geometric mean
/// of the per-level implied values. Processes without a qualifying region
/// are recorded in `failed_processes`; the others are still estimated.
pub fn fit_avsm(est: &WvEstimate, active: &[ProcessKind]) -> Result<FitResult> {
    if est.convention != VarianceConvention::Av {
        return Err(Error::Domain(
            "the slope method is defined on the Allan variance convention".to_string(),
        ));
    }
    let active = canonical_active(active)?;
    let levels = est.grid.levels();
    if levels.len() < 2 {
        return Err(Error::Domain(
            "the slope method needs at least two scales".to_string(),
        ));
    }

    let n_pairs = levels.len() - 1;
    let mut slopes = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let (lo, hi) = (est.nu_hat[i], est.nu_hat[i + 1]);
        let dj = (levels[i + 1] - levels[i]) as f64;
        slopes.push(if lo > 0.0 && hi > 0.0 {
            (hi.log2() - lo.log2()) / dj
        } else {
            f64::NAN
        });
    }

    let c = est.convention.c();
    let mut params: BTreeMap<ProcessKind, f64> = BTreeMap::new();
    let mut failed = Vec::new();
    for &kind in &active {
        let target = kind.characteristic_slope();
        let mask: Vec<bool> = slopes
            .iter()
            .map(|s| (s - target).abs() <= SLOPE_TOLERANCE)
            .collect();
        let candidates = runs(&mask);
        if candidates.is_empty() {
            failed.push(kind);
            continue;
        }
        let run = select_run(kind, &candidates, n_pairs);
        let mut num = 0.0;
        let mut den = 0.0;
        for idx in run.start..=run.start + run.len {
            let level = levels[idx];
            let weight = est.grid.edof(level);
            let implied = est.nu_hat[idx] / (c * term_coeff(kind, level));
            num += weight * implied.ln();
            den += weight;
        }
        let h_value = (num / den).exp();
        let value = match kind {
            ProcessKind::Bi | ProcessKind::Dr => h_value.sqrt(),
            _ => h_value,
        };
        params.insert(kind, value);
    }

    if params.is_empty() {
        return Err(Error::Domain(
            "no active process produced a qualifying slope region".to_string(),
        ));
    }
    let theta_hat = CompositeModel::new(params)?;
    let fitted = model_wv(&theta_hat, est.convention, &est.grid);
    let objective = est
        .nu_hat
        .iter()
        .zip(fitted.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    Ok(FitResult {
        converged: failed.is_empty(),
        theta_hat,
        objective,
        fitted_wv: fitted.iter().copied().collect(),
        asymptotic_cov: None,
        std_errors: None,
        method: MethodDescriptor {
            f: "slope".to_string(),
            omega: "none".to_string(),
            solver: "region-slope".to_string(),
        },
        iterations: 0,
        projected: false,
        failed_processes: failed,
    })
}
