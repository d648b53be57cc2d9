//! Monte Carlo harness: replicate simulate -> estimate across methods,
//! summarize bias/spread/RMSE per parameter, and emit figure-ready tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{exact_estimate, fit_with_method, Method};
use crate::io::{fmt_float, Jv};
use crate::model::{CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};
use crate::simulate::{simulate, SimConfig, STREAMS_PER_REPLICATION};
use crate::wv::{variance, WvEstimate};

#[derive(Debug, Clone)]
pub struct Experiment {
    /// True model in per-sample stored parameters.
    pub truth: CompositeModel,
    pub t: usize,
    pub reps: usize,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub methods: Vec<Method>,
    pub convention: VarianceConvention,
    /// Minimum coefficient count per level when building the dyadic grid.
    pub grid_floor: usize,
    /// Degenerate mode: every replication sees exactly `nu(theta_0)`
    /// instead of a simulated estimate.
    pub noiseless: bool,
}

impl Experiment {
    pub fn new(truth: CompositeModel, t: usize, reps: usize, seed: u64) -> Self {
        Experiment {
            truth,
            t,
            reps,
            seed,
            sample_rate_hz: 1.0,
            methods: vec![Method::Gmwm, Method::Armav, Method::Avsm],
            convention: VarianceConvention::Av,
            grid_floor: 16,
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Domain("an experiment needs at least one replication".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("an experiment needs at least one method".into()));
        }
        if self.truth.param(ProcessKind::Bi).is_some() {
            return Err(Error::Unsimulatable(ProcessKind::Bi.tag().to_string()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::Domain(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        Ok(())
    }
}

/// Per-(method, parameter) summary. Estimates and statistics are in display
/// space (`Q`, `sigma`, `B`, `gamma`, `omega`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    /// 5/25/50/75/95% quantiles (linear interpolation on order statistics).
    pub quantiles: [f64; 5],
    /// Replications that produced an estimate.
    pub used: usize,
    pub failures: usize,
    /// Raw per-replication estimates `(replication index, value)`.
    pub estimates: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub parameters: BTreeMap<ProcessKind, ParamSummary>,
    /// Replications where the method produced no estimate at all.
    pub rep_failures: usize,
    /// Set when every replication failed; the run still completes.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub t: usize,
    pub reps: usize,
    pub seed: u64,
    pub truth_display: BTreeMap<ProcessKind, f64>,
    pub methods: Vec<MethodSummary>,
}

impl McSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn hash_nu(nu: &[f64]) -> u64 {
    // FNV-1a over the raw bit patterns: cheap fingerprint for the
    // paired-design assertion.
    let mut h = 0xcbf29ce484222325u64;
    for v in nu {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Quantile by linear interpolation between order statistics
/// (the common spreadsheet/statistics-package definition).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - h.floor()) * (sorted[hi] - sorted[lo])
}

fn summarize_param(truth: f64, reps: usize, estimates: Vec<(usize, f64)>) -> ParamSummary {
    let used = estimates.len();
    let failures = reps - used;
    if used == 0 {
        return ParamSummary {
            mean: f64::NAN,
            bias: f64::NAN,
            sd: f64::NAN,
            rmse: f64::NAN,
            quantiles: [f64::NAN; 5],
            used,
            failures,
            estimates,
        };
    }
    let n = used as f64;
    let mean = estimates.iter().map(|&(_, v)| v).sum::<f64>() / n;
    let bias = mean - truth;
    let sd = if used > 1 {
        (estimates
            .iter()
            .map(|&(_, v)| (v - mean) * (v - mean))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    let rmse = (estimates
        .iter()
        .map(|&(_, v)| (v - truth) * (v - truth))
        .sum::<f64>()
        / n)
        .sqrt();
    let mut sorted: Vec<f64> = estimates.iter().map(|&(_, v)| v).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite estimates"));
    let quantiles = [0.05, 0.25, 0.50, 0.75, 0.95].map(|p| quantile(&sorted, p));
    ParamSummary {
        mean,
        bias,
        sd,
        rmse,
        quantiles,
        used,
        failures,
        estimates,
    }
}

/// Run the experiment: one simulated signal per replication, shared by all
/// methods (paired comparison, asserted by fingerprinting the variance
/// vector each method consumes). Failed fits are recorded and excluded from
/// the moments; an all-failure method is reported in its summary while the
/// run completes.
pub fn run_experiment(exp: &Experiment) -> Result<McSummary> {
    exp.validate()?;
    let grid = ScaleGrid::dyadic(exp.t, exp.grid_floor)?;
    let active = exp.truth.active();

    let noiseless_est = if exp.noiseless {
        let template = WvEstimate {
            grid: grid.clone(),
            convention: exp.convention,
            nu_hat: vec![],
            cov_hat: None,
            ci_lo: None,
            ci_hi: None,
            sample_rate_hz: exp.sample_rate_hz,
        };
        Some(exact_estimate(&exp.truth, &template))
    } else {
        None
    };

    // Per replication, per method: the display-space estimate of each
    // active parameter (None = failed).
    type RepRow = Vec<BTreeMap<ProcessKind, Option<f64>>>;
    let rows: Vec<RepRow> = (0..exp.reps)
        .into_par_iter()
        .map(|r| -> Result<RepRow> {
            let est = match &noiseless_est {
                Some(e) => e.clone(),
                None => {
                    let mut cfg = SimConfig::new(
                        exp.truth.clone(),
                        exp.t,
                        exp.seed,
                        exp.sample_rate_hz,
                    );
                    cfg.stream_offset = r as u64 * STREAMS_PER_REPLICATION;
                    let signal = simulate(&cfg)?;
                    variance(&signal, &grid, exp.convention)?
                }
            };
            let rep_hash = hash_nu(&est.nu_hat);
            let mut row = Vec::with_capacity(exp.methods.len());
            for &method in &exp.methods {
                assert_eq!(
                    hash_nu(&est.nu_hat),
                    rep_hash,
                    "paired design violated: method {} saw a different input",
                    method.tag()
                );
                let mut outcome: BTreeMap<ProcessKind, Option<f64>> = BTreeMap::new();
                match fit_with_method(&est, &active, method) {
                    Err(_) => {
                        for &kind in &active {
                            outcome.insert(kind, None);
                        }
                    }
                    Ok(fit) => {
                        let hard_failure = !fit.converged && fit.failed_processes.is_empty();
                        for &kind in &active {
                            let value = if hard_failure || fit.failed_processes.contains(&kind)
                            {
                                None
                            } else {
                                fit.theta_hat
                                    .param(kind)
                                    .map(|stored| kind.to_display(stored))
                            };
                            outcome.insert(kind, value);
                        }
                    }
                }
                row.push(outcome);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let truth_display: BTreeMap<ProcessKind, f64> = exp
        .truth
        .iter()
        .map(|(kind, stored)| (kind, kind.to_display(stored)))
        .collect();

    let mut methods = Vec::with_capacity(exp.methods.len());
    for (mi, &method) in exp.methods.iter().enumerate() {
        let mut parameters = BTreeMap::new();
        for &kind in &active {
            let estimates: Vec<(usize, f64)> = rows
                .iter()
                .enumerate()
                .filter_map(|(r, row)| row[mi][&kind].map(|v| (r, v)))
                .collect();
            parameters.insert(
                kind,
                summarize_param(truth_display[&kind], exp.reps, estimates),
            );
        }
        let rep_failures = rows
            .iter()
            .filter(|row| row[mi].values().all(|v| v.is_none()))
            .count();
        let error = (rep_failures == exp.reps)
            .then(|| "all replications failed".to_string());
        methods.push(MethodSummary {
            method,
            parameters,
            rep_failures,
            error,
        });
    }

    Ok(McSummary {
        t: exp.t,
        reps: exp.reps,
        seed: exp.seed,
        truth_display,
        methods,
    })
}

/// One row of a per-parameter RMSE ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub method: Method,
    pub rmse: f64,
    /// True when this entry's RMSE is within round-off of the previous one.
    pub tie_with_prev: bool,
}

/// Rank methods by RMSE per parameter (missing RMSE sorts last); ties
/// within 1e-12 relative are flagged.
pub fn compare_methods(summary: &McSummary) -> BTreeMap<ProcessKind, Vec<RankEntry>> {
    let mut out = BTreeMap::new();
    let kinds: Vec<ProcessKind> = summary.truth_display.keys().copied().collect();
    for kind in kinds {
        let mut entries: Vec<(Method, f64)> = summary
            .methods
            .iter()
            .map(|m| {
                let rmse = m
                    .parameters
                    .get(&kind)
                    .map(|p| if p.rmse.is_nan() { f64::INFINITY } else { p.rmse })
                    .unwrap_or(f64::INFINITY);
                (m.method, rmse)
            })
            .collect();
        entries.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN after mapping"));
        let ranked = entries
            .iter()
            .enumerate()
            .map(|(i, &(method, rmse))| {
                let tie_with_prev = i > 0 && {
                    let prev = entries[i - 1].1;
                    (rmse - prev).abs() <= 1e-12 * rmse.abs().max(prev.abs())
                        || (rmse.is_infinite() && prev.is_infinite())
                };
                RankEntry {
                    method,
                    rmse,
                    tie_with_prev,
                }
            })
            .collect();
        out.insert(kind, ranked);
    }
    out
}

/// Bootstrap confidence that method `a` beats (or ties) method `b` on a
/// parameter's RMSE: resample replication indices with replacement and count
/// the fraction of resamples where RMSE(a) <= RMSE(b).
pub fn ranking_confidence(
    summary: &McSummary,
    kind: ProcessKind,
    a: Method,
    b: Method,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    let truth = *summary
        .truth_display
        .get(&kind)
        .ok_or_else(|| Error::Domain(format!("{} is not part of the experiment", kind.tag())))?;
    let lookup = |m: Method| -> Result<Vec<Option<f64>>> {
        let ms = summary
            .method(m)
            .ok_or_else(|| Error::Domain(format!("method {} not in summary", m.tag())))?;
        let mut per_rep = vec![None; summary.reps];
        if let Some(p) = ms.parameters.get(&kind) {
            for &(r, v) in &p.estimates {
                per_rep[r] = Some(v);
            }
        }
        Ok(per_rep)
    };
    let ea = lookup(a)?;
    let eb = lookup(b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = Uniform::from(0..summary.reps);
    let mut wins = 0usize;
    for _ in 0..resamples {
        let draw: Vec<usize> = (0..summary.reps).map(|_| idx.sample(&mut rng)).collect();
        let rmse_of = |est: &[Option<f64>]| -> f64 {
            let mut acc = 0.0;
            let mut n = 0usize;
            for &i in &draw {
                if let Some(v) = est[i] {
                    acc += (v - truth) * (v - truth);
                    n += 1;
                }
            }
            if n == 0 {
                f64::INFINITY
            } else {
                (acc / n as f64).sqrt()
            }
        };
        let (ra, rb) = (rmse_of(&ea), rmse_of(&eb));
        if ra <= rb || (ra.is_infinite() && rb.is_infinite()) {
            wins += 1;
        }
    }
    Ok(wins as f64 / resamples as f64)
}

/// Summary JSON for an experiment run.
pub fn summary_json(summary: &McSummary) -> String {
    let methods = summary
        .methods
        .iter()
        .map(|m| {
            let params = m
                .parameters
                .iter()
                .map(|(kind, p)| {
                    let q = Jv::Obj(
                        ["q05", "q25", "q50", "q75", "q95"]
                            .iter()
                            .zip(p.quantiles.iter())
                            .map(|(k, v)| (k.to_string(), Jv::Num(*v)))
                            .collect(),
                    );
                    (
                        kind.tag().to_string(),
                        Jv::Obj(vec![
                            ("mean".into(), Jv::Num(p.mean)),
                            ("bias".into(), Jv::Num(p.bias)),
                            ("sd".into(), Jv::Num(p.sd)),
                            ("rmse".into(), Jv::Num(p.rmse)),
                            ("quantiles".into(), q),
                            ("used".into(), Jv::Int(p.used as i64)),
                            ("failures".into(), Jv::Int(p.failures as i64)),
                        ]),
                    )
                })
                .collect();
            (
                m.method.tag().to_string(),
                Jv::Obj(vec![
                    ("parameters".into(), Jv::Obj(params)),
                    ("rep_failures".into(), Jv::Int(m.rep_failures as i64)),
                    (
                        "error".into(),
                        m.error
                            .as_ref()
                            .map(|e| Jv::Str(e.clone()))
                            .unwrap_or(Jv::Null),
                    ),
                ]),
            )
        })
        .collect();
    let truth = summary
        .truth_display
        .iter()
        .map(|(kind, v)| (kind.tag().to_string(), Jv::Num(*v)))
        .collect();
    Jv::Obj(vec![
        ("T".into(), Jv::Int(summary.t as i64)),
        ("reps".into(), Jv::Int(summary.reps as i64)),
        ("seed".into(), Jv::Int(summary.seed as i64)),
        ("truth_display".into(), Jv::Obj(truth)),
        ("methods".into(), Jv::Obj(methods)),
    ])
    .to_json()
}

/// Write the boxplot CSV (raw estimates) and the RMSE CSV into `dir`;
/// returns the two paths.
pub fn emit_figure_data(summary: &McSummary, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let boxplot_path = dir.join("boxplot.csv");
    let rmse_path = dir.join("rmse.csv");

    let mut boxplot = String::from("method,parameter,replication,estimate\n");
    for m in &summary.methods {
        for (kind, p) in &m.parameters {
            for &(r, v) in &p.estimates {
                boxplot.push_str(&format!(
                    "{},{},{},{}\n",
                    m.method.tag(),
                    kind.tag(),
                    r,
                    fmt_float(v)
                ));
            }
        }
    }
    fs::write(&boxplot_path, boxplot)?;

    let mut rmse = String::from("method,parameter,bias,sd,rmse,failures\n");
    for m in &summary.methods {
        for (kind, p) in &m.parameters {
            rmse.push_str(&format!(
                "{},{},{},{},{},{}\n",
                m.method.tag(),
                kind.tag(),
                fmt_float(p.bias),
                fmt_float(p.sd),
                fmt_float(p.rmse),
                p.failures
            ));
        }
    }
    fs::write(&rmse_path, rmse)?;
    Ok((boxplot_path, rmse_path))
}
