use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::moment::MomentFunction;
use crate::fit::sandwich::optimal_omega;
use crate::wv::WvEstimate;

/// Ways of realizing the weight matrix `Omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightStrategy {
    /// The identity matrix.
    IdentityW,
    /// Diagonal inverse of the (squared) scale of each transformed moment,
    /// weighted by the effective degrees of freedom at that level. For the
    /// identity transform this is `diag(edof_j / nu_hat_j^2)`; for the log
    /// transform the relative scale is already divided out, leaving
    /// `diag(edof_j)`.
    DiagInverseSquared,
    /// The inverse of the estimated covariance of `nu_hat`.
    EstimatedVInverse,
    /// `Omega° = [F V_hat F^T]^{-1}`, the efficient choice.
    OptimalOmega,
}

impl WeightStrategy {
    pub fn tag(&self) -> &'static str {
        match self {
            WeightStrategy::IdentityW => "identity",
            WeightStrategy::DiagInverseSquared => "diag-inverse-squared",
            WeightStrategy::EstimatedVInverse => "estimated-v-inverse",
            WeightStrategy::OptimalOmega => "optimal",
        }
    }

    /// Build the weight matrix for an estimate. The covariance-based
    /// strategies need `est.cov_hat`; `OptimalOmega` evaluates `F` at the
    /// empirical `nu_hat` (the pipeline re-evaluates it at fitted values).
    pub fn realize(&self, est: &WvEstimate, f: MomentFunction) -> Result<DMatrix<f64>> {
        let j = est.nu_hat.len();
        let matrix = match self {
            WeightStrategy::IdentityW => DMatrix::identity(j, j),
            WeightStrategy::DiagInverseSquared => {
                let dof = est.grid.edofs();
                let mut d = DVector::zeros(j);
                for i in 0..j {
                    match f {
                        MomentFunction::Identity => {
                            let nu = est.nu_hat[i];
                            if !(nu.is_finite() && nu > 0.0) {
                                return Err(Error::Domain(format!(
                                    "inverse-squared weights need positive nu_hat; level {} is {nu}",
                                    est.grid.levels()[i]
                                )));
                            }
                            d[i] = dof[i] / (nu * nu);
                        }
                        // Var(log nu_hat_j) is approximately 2 / edof_j
                        // independent of nu_j, so the inverse-scale weight
                        // reduces to the degrees of freedom themselves.
                        MomentFunction::Log10 => d[i] = dof[i],
                    }
                }
                DMatrix::from_diagonal(&d)
            }
            WeightStrategy::EstimatedVInverse => {
                let v = est.cov_hat.as_ref().ok_or(Error::MissingCovariance)?;
                spd_inverse(v, "estimated covariance V")?
            }
            WeightStrategy::OptimalOmega => {
                let v = est.cov_hat.as_ref().ok_or(Error::MissingCovariance)?;
                let nu = DVector::from_column_slice(&est.nu_hat);
                optimal_omega(f, v, &nu)?
            }
        };
        ensure_spd(&matrix, self.tag())?;
        Ok(matrix)
    }
}

/// Check that a realized weight (or covariance) matrix is symmetric and
/// positive definite up to round-off: minimum eigenvalue above
/// `-1e-12 * trace`.
pub fn ensure_spd(m: &DMatrix<f64>, context: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSpd {
            context: format!("{context}: not square ({}x{})", m.nrows(), m.ncols()),
        });
    }
    let scale = m.amax();
    for i in 0..m.nrows() {
        for k in (i + 1)..m.ncols() {
            if (m[(i, k)] - m[(k, i)]).abs() > 1e-10 * scale.max(1e-300) {
                return Err(Error::NotSpd {
                    context: format!("{context}: asymmetric at ({i},{k})"),
                });
            }
        }
    }
    let trace = m.trace();
    if !(trace.is_finite() && trace > 0.0) {
        return Err(Error::NotSpd {
            context: format!("{context}: trace {trace}"),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let min = eig.min();
    if min <= -1e-12 * trace {
        return Err(Error::NotSpd {
            context: format!("{context}: minimum eigenvalue {min}"),
        });
    }
    Ok(())
}

/// Invert a symmetric positive definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    ensure_spd(m, context)?;
    let sym = (m + m.transpose()) * 0.5;
    Cholesky::new(sym)
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotSpd {
            context: format!("{context}: Cholesky factorization failed"),
        })
}
