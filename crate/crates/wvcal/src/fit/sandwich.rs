use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::moment::MomentFunction;
use crate::fit::weights::{ensure_spd, spd_inverse};
use crate::model::{jacobian_a, model_wv, CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};

/// Sandwich covariance `B V B^T` with `Omega* = F^T Omega F`,
/// `H = A^T Omega* A`, `B = H^{-1} A^T Omega*`. Pure matrix layer; `V`
/// determines the scale of the result. Fed the finite-sample covariance of
/// `nu_hat`, it returns the finite-sample covariance of the parameters.
pub fn sandwich(
    a: &DMatrix<f64>,
    f_jac: &DMatrix<f64>,
    omega: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let omega_star = f_jac.transpose() * omega * f_jac;
    let h = a.transpose() * &omega_star * a;
    let h_sym = (&h + h.transpose()) * 0.5;
    let chol = Cholesky::new(h_sym).ok_or_else(|| Error::Singular {
        context: "H = A^T Omega* A; add deeper scales or choose a weight \
                  matrix that separates the active processes"
            .to_string(),
    })?;
    let b = chol.solve(&(a.transpose() * omega_star));
    let sigma = &b * v * b.transpose();
    Ok((&sigma + sigma.transpose()) * 0.5)
}

/// Parameter covariance at a fitted model: evaluates `A` and `F` at
/// `theta_hat`, then applies the sandwich to the supplied covariance of
/// `nu_hat`. Returns the matrix (canonical parameter order) plus standard
/// errors keyed by process.
pub fn asymptotic_covariance(
    theta_hat: &CompositeModel,
    f: MomentFunction,
    omega: &DMatrix<f64>,
    v_hat: &DMatrix<f64>,
    convention: VarianceConvention,
    grid: &ScaleGrid,
) -> Result<(DMatrix<f64>, BTreeMap<ProcessKind, f64>)> {
    ensure_spd(omega, "Omega")?;
    ensure_spd(v_hat, "V")?;
    let nu = model_wv(theta_hat, convention, grid);
    let a = jacobian_a(theta_hat, convention, grid);
    let f_jac = f.jacobian_f(&nu)?;
    let sigma = sandwich(&a, &f_jac, omega, v_hat)?;
    let mut errors = BTreeMap::new();
    for (i, kind) in theta_hat.active().into_iter().enumerate() {
        errors.insert(kind, sigma[(i, i)].max(0.0).sqrt());
    }
    Ok((sigma, errors))
}

/// The efficient weight `Omega° = [F V_hat F^T]^{-1}` evaluated at a
/// variance vector (identity `f` reduces it to `V_hat^{-1}`).
pub fn optimal_omega(
    f: MomentFunction,
    v_hat: &DMatrix<f64>,
    nu_at_theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    ensure_spd(v_hat, "V")?;
    let f_jac = f.jacobian_f(nu_at_theta)?;
    let m = &f_jac * v_hat * f_jac.transpose();
    spd_inverse(&m, "F V F^T")
}
