use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::moment::MomentFunction;
use crate::model::{model_wv, CompositeModel, ScaleGrid, VarianceConvention};
use crate::simulate::{simulate, SimConfig, STREAMS_PER_REPLICATION};
use crate::wv::variance;

/// Monte Carlo estimate of the per-level moment bias
/// `E[f(nu_hat)] - f(nu(theta_0))`.
#[derive(Debug, Clone)]
pub struct BiasProbe {
    pub levels: Vec<u32>,
    pub bias: Vec<f64>,
    pub mc_se: Vec<f64>,
    pub reps: usize,
}

impl BiasProbe {
    /// Bias over its Monte Carlo standard error, per level.
    pub fn z_scores(&self) -> Vec<f64> {
        self.bias
            .iter()
            .zip(&self.mc_se)
            .map(|(b, se)| b / se.max(1e-300))
            .collect()
    }
}

/// Simulate `reps` realizations of the model at length `t`, estimate the
/// variance on the default dyadic grid, and report the mean moment residual
/// `f(nu_hat) - f(nu(theta_0))` with its MC standard error per level.
pub fn moment_bias_probe(
    model: &CompositeModel,
    f: MomentFunction,
    convention: VarianceConvention,
    t: usize,
    reps: usize,
    seed: u64,
) -> Result<BiasProbe> {
    if reps < 100 {
        return Err(Error::Domain(format!(
            "the bias probe needs at least 100 replications, got {reps}"
        )));
    }
    let grid = ScaleGrid::dyadic(t, 16)?;
    let target = f.apply(&model_wv(model, convention, &grid))?;
    let rows: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut cfg = SimConfig::new(model.clone(), t, seed, 1.0);
            cfg.stream_offset = r * STREAMS_PER_REPLICATION;
            let signal = simulate(&cfg)?;
            let est = variance(&signal, &grid, convention)?;
            let y = f.apply(&DVector::from_column_slice(&est.nu_hat))?;
            Ok((y - &target).iter().copied().collect())
        })
        .collect::<Result<_>>()?;

    let jn = grid.j();
    let mut bias = vec![0.0; jn];
    let mut mc_se = vec![0.0; jn];
    for i in 0..jn {
        let mean = rows.iter().map(|r| r[i]).sum::<f64>() / reps as f64;
        let var = rows
            .iter()
            .map(|r| (r[i] - mean) * (r[i] - mean))
            .sum::<f64>()
            / (reps - 1) as f64;
        bias[i] = mean;
        mc_se[i] = (var / reps as f64).sqrt();
    }
    Ok(BiasProbe {
        levels: grid.levels().to_vec(),
        bias,
        mc_se,
        reps,
    })
}
