//! The GMWFM estimator family: minimize `||f(nu_hat) - f(nu(theta))||^2_Omega`
//! over the composite model's parameters.
//!
//! Members are picked by a moment function `f` (identity or log10) and a
//! weight strategy `Omega`. The identity member has a closed form; the
//! general case runs a quasi-Newton solver on log-parameters. A slope-based
//! baseline (`fit_avsm`) and a moment-bias probe round out the module.

mod avsm;
mod closed_form;
mod iterative;
mod moment;
mod pipeline;
mod probe;
mod sandwich;
mod weights;

pub use avsm::fit_avsm;
pub use closed_form::fit_closed_form;
pub use iterative::{fit_iterative, IterOptions};
pub use moment::MomentFunction;
pub use pipeline::{exact_estimate, fit_armav, fit_gmwm, fit_with_method, Method};
pub use probe::{moment_bias_probe, BiasProbe};
pub use sandwich::{asymptotic_covariance, optimal_omega, sandwich};
pub use weights::{ensure_spd, spd_inverse, WeightStrategy};

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{model_wv, CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};

/// How a fit was produced: moment function, weight strategy, solver path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDescriptor {
    pub f: String,
    pub omega: String,
    pub solver: String,
}

/// Outcome of a fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: CompositeModel,
    /// Objective value at `theta_hat`.
    pub objective: f64,
    /// Model-implied variance at `theta_hat`, per grid level.
    pub fitted_wv: Vec<f64>,
    /// Finite-sample covariance of the natural parameters
    /// (asymptotic covariance divided by the deepest-level coefficient
    /// count), when the sandwich was evaluated.
    pub asymptotic_cov: Option<DMatrix<f64>>,
    /// Standard errors of the natural parameters (`Q^2`, `sigma^2`, `B`,
    /// `gamma^2`, `omega`).
    pub std_errors: Option<BTreeMap<ProcessKind, f64>>,
    pub method: MethodDescriptor,
    pub converged: bool,
    pub iterations: usize,
    /// True when a non-positive least-squares solution was clamped back
    /// into the parameter space.
    pub projected: bool,
    /// Processes the method could not estimate (slope-region search only).
    pub failed_processes: Vec<ProcessKind>,
}

impl FitResult {
    pub fn std_error(&self, kind: ProcessKind) -> Option<f64> {
        self.std_errors.as_ref().and_then(|m| m.get(&kind).copied())
    }
}

/// Sorted, deduplicated active set; errors on an empty selection.
pub(crate) fn canonical_active(active: &[ProcessKind]) -> Result<Vec<ProcessKind>> {
    let mut v = active.to_vec();
    v.sort();
    v.dedup();
    if v.is_empty() {
        return Err(Error::EmptyModel);
    }
    Ok(v)
}

/// The GMWFM criterion `(f(nu_hat) - f(nu(theta)))^T Omega (f(nu_hat) - f(nu(theta)))`.
pub fn gmwfm_objective(
    theta: &CompositeModel,
    nu_hat: &[f64],
    f: MomentFunction,
    omega: &DMatrix<f64>,
    convention: VarianceConvention,
    grid: &ScaleGrid,
) -> Result<f64> {
    let j = grid.j();
    if nu_hat.len() != j || omega.nrows() != j || omega.ncols() != j {
        return Err(Error::Domain(format!(
            "objective needs nu_hat and Omega sized to the grid ({} levels); got {} and {}x{}",
            j,
            nu_hat.len(),
            omega.nrows(),
            omega.ncols()
        )));
    }
    let f_hat = f.apply(&DVector::from_column_slice(nu_hat))?;
    let f_model = f.apply(&model_wv(theta, convention, grid))?;
    let r = f_hat - f_model;
    Ok((omega * &r).dot(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ScaleGrid, VarianceConvention};
    use approx::assert_relative_eq;

    fn grid(j: u32) -> ScaleGrid {
        ScaleGrid::explicit(1 << 12, (1..=j).collect()).unwrap()
    }

    #[test]
    fn perfect_fit_scores_zero() {
        let model = CompositeModel::from_pairs(&[
            (ProcessKind::Wn, 0.5),
            (ProcessKind::Rw, 0.01),
        ])
        .unwrap();
        let g = grid(6);
        let nu: Vec<f64> = model_wv(&model, VarianceConvention::Av, &g)
            .iter()
            .copied()
            .collect();
        let omega = DMatrix::identity(6, 6);
        for f in [MomentFunction::Identity, MomentFunction::Log10] {
            let v = gmwfm_objective(&model, &nu, f, &omega, VarianceConvention::Av, &g).unwrap();
            assert!(v.abs() < 1e-24, "{f:?}: {v}");
        }
    }

    #[test]
    fn identity_objective_is_weighted_sum_of_squares() {
        let model = CompositeModel::from_pairs(&[(ProcessKind::Wn, 1.0)]).unwrap();
        let g = grid(2);
        let nu = model_wv(&model, VarianceConvention::Av, &g);
        let nu_hat = vec![nu[0] + 0.1, nu[1] - 0.2];
        let omega = DMatrix::identity(2, 2);
        let v = gmwfm_objective(
            &model,
            &nu_hat,
            MomentFunction::Identity,
            &omega,
            VarianceConvention::Av,
            &g,
        )
        .unwrap();
        assert_relative_eq!(v, 0.05, max_relative = 1e-12);
    }

    #[test]
    fn log10_objective_scale_invariant() {
        let model = CompositeModel::from_pairs(&[
            (ProcessKind::Wn, 0.3),
            (ProcessKind::Dr, 0.002),
        ])
        .unwrap();
        let g = grid(5);
        let nu = model_wv(&model, VarianceConvention::Av, &g);
        let nu_hat: Vec<f64> = nu.iter().map(|v| v * 1.17).collect();
        let omega = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]));
        let base = gmwfm_objective(
            &model,
            &nu_hat,
            MomentFunction::Log10,
            &omega,
            VarianceConvention::Av,
            &g,
        )
        .unwrap();
        // Rescale the data moments and the model-implied moments by the same
        // factor: the log residual, and hence the objective, must not move.
        // nu is linear in sigma^2 and quadratic in omega, so theta' below
        // gives nu(theta') = k * nu(theta) exactly.
        let k = 37.5;
        let scaled_model = model
            .with_theta(&DVector::from_vec(vec![k * 0.3, k.sqrt() * 0.002]))
            .unwrap();
        let nu_hat_k: Vec<f64> = nu_hat.iter().map(|v| v * k).collect();
        let scaled = gmwfm_objective(
            &scaled_model,
            &nu_hat_k,
            MomentFunction::Log10,
            &omega,
            VarianceConvention::Av,
            &g,
        )
        .unwrap();
        assert_relative_eq!(base, scaled, max_relative = 1e-10);
    }

    #[test]
    fn log10_rejects_nonpositive_nu_hat() {
        let model = CompositeModel::from_pairs(&[(ProcessKind::Wn, 1.0)]).unwrap();
        let g = grid(2);
        let omega = DMatrix::identity(2, 2);
        let err = gmwfm_objective(
            &model,
            &[0.5, -0.1],
            MomentFunction::Log10,
            &omega,
            VarianceConvention::Av,
            &g,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
