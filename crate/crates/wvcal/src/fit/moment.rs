use std::f64::consts::LN_10;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// The moment function `f` of the GMWFM criterion, applied elementwise to
/// variance vectors. Identity gives the GMWM; log10 gives the ARMAV-style
/// member.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentFunction {
    Identity,
    Log10,
}

impl MomentFunction {
    pub fn tag(&self) -> &'static str {
        match self {
            MomentFunction::Identity => "identity",
            MomentFunction::Log10 => "log10",
        }
    }

    fn check_positive(&self, x: &DVector<f64>) -> Result<()> {
        if let MomentFunction::Log10 = self {
            for (j, &v) in x.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Domain(format!(
                        "log10 moment function needs strictly positive variances; entry {j} is {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_positive(x)?;
        Ok(match self {
            MomentFunction::Identity => x.clone(),
            MomentFunction::Log10 => x.map(f64::log10),
        })
    }

    /// Jacobian `F` of `apply` at `x`: the identity, or
    /// `diag(1/(x_j ln 10))`.
    pub fn jacobian_f(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_positive(x)?;
        Ok(match self {
            MomentFunction::Identity => DMatrix::identity(x.len(), x.len()),
            MomentFunction::Log10 => DMatrix::from_diagonal(&x.map(|v| 1.0 / (v * LN_10))),
        })
    }
}
