use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fit::closed_form::fit_closed_form;
use crate::fit::iterative::{fit_iterative, IterOptions};
use crate::fit::moment::MomentFunction;
use crate::fit::sandwich::asymptotic_covariance;
use crate::fit::weights::{spd_inverse, WeightStrategy};
use crate::fit::{avsm::fit_avsm, FitResult};
use crate::model::{model_wv, CompositeModel, ProcessKind};
use crate::wv::{diagonal_large_sample, WvEstimate};

/// Named estimation methods exposed to the harness and the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Two-step identity-moment fit: inverse-squared diagonal weights,
    /// then the efficient `V_hat^{-1}` weights.
    Gmwm,
    /// Log10-moment fit with inverse-squared diagonal weights.
    Armav,
    /// Slope-region baseline.
    Avsm,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Gmwm => "gmwm",
            Method::Armav => "armav",
            Method::Avsm => "avsm",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Method> {
        match tag.to_ascii_lowercase().as_str() {
            "gmwm" => Some(Method::Gmwm),
            "armav" => Some(Method::Armav),
            "avsm" => Some(Method::Avsm),
            _ => None,
        }
    }
}

/// Covariance of `nu_hat` for weighting and the parameter sandwich: the
/// bootstrap estimate when present, else the Gaussian large-sample diagonal
/// evaluated at the fitted variances.
fn v_hat_for(est: &WvEstimate, fitted: &[f64]) -> DMatrix<f64> {
    match &est.cov_hat {
        Some(v) => v.clone(),
        None => diagonal_large_sample(fitted, &est.grid.edofs()),
    }
}

fn attach_covariance(
    mut result: FitResult,
    est: &WvEstimate,
    f: MomentFunction,
    omega: &DMatrix<f64>,
) -> Result<FitResult> {
    let v_hat = v_hat_for(est, &result.fitted_wv);
    match asymptotic_covariance(
        &result.theta_hat,
        f,
        omega,
        &v_hat,
        est.convention,
        &est.grid,
    ) {
        Ok((sigma, errors)) => {
            result.asymptotic_cov = Some(sigma);
            result.std_errors = Some(errors);
            Ok(result)
        }
        // A parameter driven to zero erases its column of the Jacobian
        // (the squared display transforms have vanishing derivative
        // there), so no delta-method curvature is left to invert. The
        // point estimate is still valid; only its covariance is
        // unavailable.
        Err(Error::Singular { .. }) => Ok(result),
        Err(e) => Err(e),
    }
}

/// Two-step GMWM. Step one solves the closed form under
/// `diag(edof_j / nu_hat_j^2)`; step two re-solves under the efficient
/// weights `V_hat^{-1}`, with `V_hat` taken from the estimate's bootstrap
/// covariance when available and otherwise from the large-sample diagonal
/// at the step-one fitted variances.
pub fn fit_gmwm(est: &WvEstimate, active: &[ProcessKind]) -> Result<FitResult> {
    let omega1 = WeightStrategy::DiagInverseSquared.realize(est, MomentFunction::Identity)?;
    let step1 = fit_closed_form(est, active, &omega1)?;

    let v_hat = v_hat_for(est, &step1.fitted_wv);
    let omega2 = spd_inverse(&v_hat, "estimated covariance V")?;
    let mut result = attach_covariance(
        fit_closed_form(est, active, &omega2)?,
        est,
        MomentFunction::Identity,
        &omega2,
    )?;
    result.method.omega = "two-step optimal (V-inverse)".to_string();
    result.method.solver = "closed-form".to_string();
    Ok(result)
}

/// ARMAV-style member: log10 moments under inverse-squared diagonal
/// weights, minimized iteratively. The warm start is the closed form under
/// the identity-scale realization of the same strategy, whose whitened
/// normal matrix stays well conditioned across the full scale range.
pub fn fit_armav(est: &WvEstimate, active: &[ProcessKind]) -> Result<FitResult> {
    let omega_start =
        WeightStrategy::DiagInverseSquared.realize(est, MomentFunction::Identity)?;
    let start = match fit_closed_form(est, active, &omega_start) {
        Ok(fit) => fit.theta_hat,
        // A collapsed deep level can leave even the whitened normal matrix
        // singular; the geometric-mean heuristic still gives the iteration
        // a feasible scale-aware start.
        Err(_) => crate::fit::iterative::heuristic_start(est, active)?,
    };
    let omega = WeightStrategy::DiagInverseSquared.realize(est, MomentFunction::Log10)?;
    let options = IterOptions {
        start: Some(start),
        ..IterOptions::default()
    };
    let fit = fit_iterative(est, active, MomentFunction::Log10, &omega, &options)?;
    let mut result = attach_covariance(fit, est, MomentFunction::Log10, &omega)?;
    result.method.omega = WeightStrategy::DiagInverseSquared.tag().to_string();
    Ok(result)
}

/// Dispatch by method name.
pub fn fit_with_method(est: &WvEstimate, active: &[ProcessKind], method: Method) -> Result<FitResult> {
    match method {
        Method::Gmwm => fit_gmwm(est, active),
        Method::Armav => fit_armav(est, active),
        Method::Avsm => fit_avsm(est, active),
    }
}

/// Noiseless estimate carrying exactly `nu(theta)`: handy for fixed-point
/// tests and degenerate harness runs.
pub fn exact_estimate(model: &CompositeModel, est_like: &WvEstimate) -> WvEstimate {
    let nu = model_wv(model, est_like.convention, &est_like.grid);
    WvEstimate {
        grid: est_like.grid.clone(),
        convention: est_like.convention,
        nu_hat: nu.iter().copied().collect(),
        cov_hat: None,
        ci_lo: None,
        ci_hi: None,
        sample_rate_hz: est_like.sample_rate_hz,
    }
}
