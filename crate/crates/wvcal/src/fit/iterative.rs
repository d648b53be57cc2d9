use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::closed_form::fit_closed_form;
use crate::fit::moment::MomentFunction;
use crate::fit::weights::ensure_spd;
use crate::fit::{canonical_active, FitResult, MethodDescriptor};
use crate::model::{jacobian_a, model_wv, term_coeff, CompositeModel, ProcessKind};
use crate::wv::WvEstimate;

#[derive(Debug, Clone)]
pub struct IterOptions {
    pub max_iter: usize,
    /// Relative gradient tolerance: converged when
    /// `||grad||_inf < grad_tol * (1 + |objective|)`.
    pub grad_tol: f64,
    /// Optional explicit starting point; defaults to the closed form.
    pub start: Option<CompositeModel>,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions {
            max_iter: 500,
            grad_tol: 1e-9,
            start: None,
        }
    }
}

/// Log-parameter bound keeping `exp(u)` comfortably inside f64 range.
const U_LIMIT: f64 = 600.0;

/// Largest single step in `u = ln(theta)` coordinates. A raw quasi-Newton
/// direction can be astronomically long before the inverse Hessian has
/// picked up the objective's scale; capping the move keeps trial points in
/// a range where backtracking can resolve a useful step length.
const MAX_STEP: f64 = 10.0;

fn clamp_u(u: &mut DVector<f64>) {
    for v in u.iter_mut() {
        *v = v.clamp(-U_LIMIT, U_LIMIT);
    }
}

/// Objective and gradient in `u = ln(theta)` coordinates. The gradient is
/// the chain rule through `theta = exp(u)`:
/// `grad_theta = -2 A^T F^T Omega r`, `grad_u = diag(theta) grad_theta`.
struct Evaluator<'a> {
    est: &'a WvEstimate,
    template: &'a CompositeModel,
    f: MomentFunction,
    omega: &'a DMatrix<f64>,
    f_hat: DVector<f64>,
}

impl Evaluator<'_> {
    fn eval(&self, u: &DVector<f64>) -> Result<(f64, DVector<f64>, CompositeModel)> {
        let theta = u.map(f64::exp);
        let model = self.template.with_theta(&theta)?;
        let nu = model_wv(&model, self.est.convention, &self.est.grid);
        // A trial point can overflow the model variances (huge exp(u));
        // report an infinite objective with a neutral gradient so the line
        // search backs off instead of aborting the whole fit.
        if nu.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Ok((f64::INFINITY, DVector::zeros(u.len()), model));
        }
        let f_nu = self.f.apply(&nu)?;
        let r = &self.f_hat - f_nu;
        let weighted = self.omega * &r;
        let objective = weighted.dot(&r);
        let a = jacobian_a(&model, self.est.convention, &self.est.grid);
        let f_jac = self.f.jacobian_f(&nu)?;
        let grad_theta = -2.0 * a.transpose() * (f_jac.transpose() * weighted);
        let grad_u = grad_theta.component_mul(&theta);
        if !objective.is_finite() || grad_u.iter().any(|g| !g.is_finite()) {
            return Ok((f64::INFINITY, DVector::zeros(u.len()), model));
        }
        Ok((objective, grad_u, model))
    }

    /// Inverse Gauss-Newton curvature `(2 J^T Omega J)^{-1}` at `u`, used
    /// to seed (and re-seed) the BFGS inverse Hessian. Least-squares
    /// curvature spans many orders of magnitude across parameters and is
    /// strongly cross-correlated; with an unscaled identity start the
    /// weakly identified coordinates crawl and the well identified ones
    /// overshoot. Near the minimum this metric approaches the true inverse
    /// Hessian, so a full step lands essentially on the stationary point.
    fn gn_inverse(&self, u: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = u.len();
        let theta = u.map(f64::exp);
        let model = self.template.with_theta(&theta).ok()?;
        let nu = model_wv(&model, self.est.convention, &self.est.grid);
        if nu.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return None;
        }
        let a = jacobian_a(&model, self.est.convention, &self.est.grid);
        let f_jac = self.f.jacobian_f(&nu).ok()?;
        let j_u = f_jac * a * DMatrix::from_diagonal(&theta);
        let mut g = 2.0 * j_u.transpose() * self.omega * &j_u;
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // Tiny Tikhonov jitter keeps the factorization alive when a
        // parameter has wandered to zero and its column has vanished.
        let dmax = (0..p).map(|k| g[(k, k)]).fold(0.0f64, f64::max);
        if !(dmax.is_finite() && dmax > 0.0) {
            return None;
        }
        for k in 0..p {
            g[(k, k)] += 1e-12 * dmax;
        }
        Cholesky::new(g).map(|c| c.inverse())
    }
}

/// Crude always-feasible starting point: each process parameter implied
/// by a degrees-of-freedom-weighted geometric mean over the levels, with
/// the observed variance split evenly across the active processes. Used
/// when the closed form is unavailable, for example when a collapsed deep
/// level leaves the whitened normal matrix numerically singular.
pub(crate) fn heuristic_start(
    est: &WvEstimate,
    active: &[ProcessKind],
) -> Result<CompositeModel> {
    let active = canonical_active(active)?;
    let c = est.convention.c();
    let levels = est.grid.levels();
    let p = active.len() as f64;
    let mut params = BTreeMap::new();
    for &kind in &active {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &level) in levels.iter().enumerate() {
            let nu = est.nu_hat[i];
            if !(nu.is_finite() && nu > 0.0) {
                continue;
            }
            let implied = nu / (c * term_coeff(kind, level) * p);
            let w = est.grid.edof(level);
            num += w * implied.ln();
            den += w;
        }
        if den <= 0.0 {
            return Err(Error::Domain(
                "no positive variances to start the iterative fit from".to_string(),
            ));
        }
        let h_value = (num / den).exp();
        let value = match kind {
            ProcessKind::Bi | ProcessKind::Dr => h_value.sqrt(),
            _ => h_value,
        };
        params.insert(kind, value);
    }
    CompositeModel::new(params)
}

/// Quasi-Newton (BFGS) minimization of the GMWFM criterion over
/// log-parameters, started from the closed form. Non-convergence within
/// `max_iter` is reported through the `converged` flag, never silently.
pub fn fit_iterative(
    est: &WvEstimate,
    template: &[ProcessKind],
    f: MomentFunction,
    omega: &DMatrix<f64>,
    options: &IterOptions,
) -> Result<FitResult> {
    let active = canonical_active(template)?;
    let p = active.len();
    ensure_spd(omega, "Omega")?;
    let nu_hat = DVector::from_column_slice(&est.nu_hat);
    let f_hat = f.apply(&nu_hat)?;

    let start = match &options.start {
        Some(model) => {
            if model.active() != active {
                return Err(Error::Domain(
                    "starting point does not match the requested process set".to_string(),
                ));
            }
            model.clone()
        }
        // Closed form under the supplied weights; if those weights leave
        // the normal matrix numerically singular (possible when they do
        // not whiten the scale growth across levels), fall back to the
        // inverse-squared diagonal, and from there to the geometric-mean
        // heuristic, which needs only positive variances.
        None => match fit_closed_form(est, &active, omega) {
            Ok(fit) => fit.theta_hat,
            Err(_) => {
                let whitened = crate::fit::weights::WeightStrategy::DiagInverseSquared
                    .realize(est, MomentFunction::Identity)?;
                match fit_closed_form(est, &active, &whitened) {
                    Ok(fit) => fit.theta_hat,
                    Err(_) => heuristic_start(est, &active)?,
                }
            }
        },
    };

    let evaluator = Evaluator {
        est,
        template: &start,
        f,
        omega,
        f_hat,
    };

    let mut u = start.theta().map(f64::ln);
    clamp_u(&mut u);
    let (mut phi, mut grad, mut model) = evaluator.eval(&u)?;
    if !phi.is_finite() {
        return Err(Error::Domain(
            "objective is not finite at the starting point".to_string(),
        ));
    }
    let fresh_h = |at: &DVector<f64>| -> (DMatrix<f64>, bool) {
        match evaluator.gn_inverse(at) {
            Some(h) => (h, true),
            None => (DMatrix::identity(p, p), false),
        }
    };
    let (mut h_inv, mut h_scaled) = fresh_h(&u);
    // Whether h_inv was rebuilt at the current iterate without an accepted
    // step since; guards against resetting in a loop.
    let mut h_fresh = true;
    let mut iterations = 0usize;
    let mut converged = grad.amax() < options.grad_tol * (1.0 + phi.abs());

    while !converged && iterations < options.max_iter {
        let mut direction = -(&h_inv * &grad);
        let mut slope = direction.dot(&grad);
        if !(slope < 0.0) {
            (h_inv, h_scaled) = fresh_h(&u);
            h_fresh = true;
            direction = -(&h_inv * &grad);
            slope = direction.dot(&grad);
            if !(slope < 0.0) {
                h_inv = DMatrix::identity(p, p);
                h_scaled = false;
                direction = -grad.clone();
                slope = direction.dot(&grad);
            }
        }
        let dmax = direction.amax();
        if dmax > MAX_STEP {
            direction *= MAX_STEP / dmax;
            slope = direction.dot(&grad);
        }

        // Armijo backtracking with c1 = 1e-4, halving steps. The Armijo
        // test only counts when its threshold is a representable decrease;
        // once predicted decreases fall below the objective's round-off,
        // acceptance switches to a gradient-decay test (no increase beyond
        // round-off and a clearly smaller gradient), which keeps the
        // gradient-based convergence criterion reachable. The round-off
        // allowance reflects that each residual is a difference of values
        // carrying about 1e-16 absolute error, so a small residual's
        // square is only good to roughly 1e-13 relative.
        let noise = 1e-12 * (1.0 + phi.abs());
        let mut accepted = None;
        let mut alpha = 1.0f64;
        for _ in 0..60 {
            let mut u_trial = &u + &direction * alpha;
            clamp_u(&mut u_trial);
            let (phi_t, grad_t, model_t) = evaluator.eval(&u_trial)?;
            let thresh = phi + 1e-4 * alpha * slope;
            let armijo = thresh < phi && phi_t <= thresh;
            let polishes = phi_t <= phi + noise && grad_t.amax() <= 0.9 * grad.amax();
            if armijo || polishes {
                accepted = Some((u_trial, phi_t, grad_t, model_t));
                break;
            }
            alpha *= 0.5;
        }
        let Some((u_new, phi_new, grad_new, model_new)) = accepted else {
            // Stale curvature can point the search somewhere useless; try
            // once more from a freshly evaluated metric before giving up.
            if h_fresh {
                break;
            }
            (h_inv, h_scaled) = fresh_h(&u);
            h_fresh = true;
            continue;
        };

        let s = &u_new - &u;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        // Skip the update when the gradient barely moved: such a `y` is
        // dominated by evaluation round-off and poisons the metric.
        if sy > 1e-12 * s.norm() * y.norm() && y.amax() > 1e-10 * grad.amax() {
            // Scale the initial inverse Hessian to the observed curvature
            // before the first update (Nocedal-Wright style); the plain
            // identity can be off by many orders of magnitude.
            if !h_scaled {
                let yy = y.dot(&y);
                if yy > 0.0 && (sy / yy).is_finite() {
                    h_inv = DMatrix::identity(p, p) * (sy / yy);
                }
                h_scaled = true;
            }
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let c1 = (sy + yhy) / (sy * sy);
            h_inv += &s * s.transpose() * c1;
            h_inv -= (&hy * s.transpose() + &s * hy.transpose()) / sy;
        }

        u = u_new;
        phi = phi_new;
        grad = grad_new;
        model = model_new;
        h_fresh = false;
        iterations += 1;
        converged = grad.amax() < options.grad_tol * (1.0 + phi.abs());
    }

    let fitted = model_wv(&model, est.convention, &est.grid);
    // A coordinate sitting at the log-parameter clamp is a boundary
    // solution: the parameter has collapsed to zero (or blown up) and its
    // chain-ruled gradient vanishes there, so the gradient test alone
    // cannot distinguish it from an interior stationary point.
    let projected = u.iter().any(|v| v.abs() >= U_LIMIT - 1.0);
    Ok(FitResult {
        theta_hat: model,
        objective: phi,
        fitted_wv: fitted.iter().copied().collect(),
        asymptotic_cov: None,
        std_errors: None,
        method: MethodDescriptor {
            f: f.tag().to_string(),
            omega: "supplied".to_string(),
            solver: "bfgs".to_string(),
        },
        converged,
        iterations,
        projected,
        failed_processes: Vec::new(),
    })
}
