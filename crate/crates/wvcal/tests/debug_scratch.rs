//! Temporary measurement harness for freezing acceptance-test parameters.
//! Not part of the suite; every test is #[ignore]. Delete before release.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::time::Instant;

use wvcal::fit::{
    fit_closed_form, fit_iterative, moment_bias_probe, IterOptions, Method, MomentFunction,
    WeightStrategy,
};
use wvcal::mc::{ranking_confidence, run_experiment, Experiment, McSummary};
use wvcal::model::{model_wv, CompositeModel, ProcessKind, ScaleGrid, VarianceConvention};
use wvcal::simulate::{simulate, SimConfig, STREAMS_PER_REPLICATION};
use wvcal::wv::variance;

fn gyro() -> CompositeModel {
    CompositeModel::from_pairs(&[
        (ProcessKind::Wn, (0.157f64 / 60.0).powi(2) * 250.0),
        (ProcessKind::Rw, (1.34f64 / 216_000.0).powi(2) / 250.0),
    ])
    .unwrap()
}

fn accel() -> CompositeModel {
    CompositeModel::from_pairs(&[
        (ProcessKind::Qn, (1.79e-6f64 * 250.0).powi(2)),
        (ProcessKind::Wn, (4.70e-2f64 / 60.0).powi(2) * 250.0),
        (ProcessKind::Rw, (43.5f64 / 216_000.0).powi(2) / 250.0),
        (ProcessKind::Dr, 41.4f64 / (3600.0 * 3600.0) / 250.0),
    ])
    .unwrap()
}

#[test]
#[ignore]
fn dry_c2_unbiasedness() {
    let cases = [
        (ProcessKind::Qn, 0.4),
        (ProcessKind::Wn, 1.3),
        (ProcessKind::Rw, 0.02),
        (ProcessKind::Dr, 0.003),
    ];
    let t = 1usize << 16;
    let reps = 1000usize;
    let grid = ScaleGrid::explicit(t, (1..=8).collect()).unwrap();
    for (kind, value) in cases {
        let model = CompositeModel::from_pairs(&[(kind, value)]).unwrap();
        let target = model_wv(&model, VarianceConvention::Av, &grid);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut cfg = SimConfig::new(model.clone(), t, 2024, 1.0);
            cfg.stream_offset = r as u64 * STREAMS_PER_REPLICATION;
            let sig = simulate(&cfg).unwrap();
            let est = variance(&sig, &grid, VarianceConvention::Av).unwrap();
            rows.push(est.nu_hat.clone());
        }
        let mut worst = 0.0f64;
        let mut worst_level = 0u32;
        for j in 0..8 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / reps as f64;
            let var = rows
                .iter()
                .map(|r| (r[j] - mean).powi(2))
                .sum::<f64>()
                / (reps - 1) as f64;
            let se = (var / reps as f64).sqrt();
            let diff = mean - target[j];
            let z = if se > 0.0 {
                diff / se
            } else if diff.abs() <= 1e-12 * target[j] {
                0.0
            } else {
                f64::INFINITY
            };
            println!(
                "  {} level {}: mean {:.6e} target {:.6e} z {:+.2}",
                kind.tag(),
                j + 1,
                mean,
                target[j],
                z
            );
            if z.abs() > worst.abs() {
                worst = z;
                worst_level = j as u32 + 1;
            }
        }
        println!("C2 {}: worst z {:+.2} at level {}", kind.tag(), worst, worst_level);
    }
}

#[test]
#[ignore]
fn dry_c6_jensen() {
    let model = CompositeModel::from_pairs(&[(ProcessKind::Wn, 1.0)]).unwrap();
    for f in [MomentFunction::Log10, MomentFunction::Identity] {
        let probe = moment_bias_probe(&model, f, VarianceConvention::Av, 1 << 10, 1000, 606).unwrap();
        let z = probe.z_scores();
        println!("C6 {:?}: levels {:?}", f, probe.levels);
        println!("C6 {:?}: z = {:?}", f, z.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
}

#[test]
#[ignore]
fn dry_c3_equivalence() {
    let truth = gyro();
    let t = 1usize << 18;
    let grid = ScaleGrid::dyadic(t, 16).unwrap();
    let active = truth.active();
    let mut interior = 0usize;
    let mut skipped = 0usize;
    let mut worst = 0.0f64;
    let t0 = Instant::now();
    for seed in 0..100u64 {
        let cfg = SimConfig::new(truth.clone(), t, seed, 250.0);
        let sig = simulate(&cfg).unwrap();
        let est = variance(&sig, &grid, VarianceConvention::Av).unwrap();
        let omega = WeightStrategy::DiagInverseSquared
            .realize(&est, MomentFunction::Identity)
            .unwrap();
        let cf = fit_closed_form(&est, &active, &omega).unwrap();
        if cf.projected {
            skipped += 1;
            continue;
        }
        let it = fit_iterative(
            &est,
            &active,
            MomentFunction::Identity,
            &omega,
            &IterOptions::default(),
        )
        .unwrap();
        if !it.converged {
            skipped += 1;
            continue;
        }
        interior += 1;
        for &kind in &active {
            let a = cf.theta_hat.param(kind).unwrap();
            let b = it.theta_hat.param(kind).unwrap();
            worst = worst.max(((a - b) / a).abs());
        }
    }
    println!(
        "C3: interior {interior}/100 (skipped {skipped}), worst rel diff {worst:.3e}, {:?}",
        t0.elapsed()
    );
}

#[test]
#[ignore]
fn dry_c9_f_invariance() {
    let truth = CompositeModel::from_pairs(&[
        (ProcessKind::Wn, 1.0),
        (ProcessKind::Rw, 1e-2),
    ])
    .unwrap();
    let t = 1usize << 18;
    let reps = 200usize;
    let grid = ScaleGrid::dyadic(t, 16).unwrap();
    let active = truth.active();
    let mut diffs: BTreeMap<ProcessKind, Vec<f64>> = BTreeMap::new();
    let t0 = Instant::now();
    let mut failures = 0usize;
    for r in 0..reps {
        let mut cfg = SimConfig::new(truth.clone(), t, 909, 1.0);
        cfg.stream_offset = r as u64 * STREAMS_PER_REPLICATION;
        let sig = simulate(&cfg).unwrap();
        let est = variance(&sig, &grid, VarianceConvention::Av).unwrap();
        let omega = WeightStrategy::DiagInverseSquared
            .realize(&est, MomentFunction::Identity)
            .unwrap();
        let fi = fit_iterative(&est, &active, MomentFunction::Identity, &omega, &IterOptions::default());
        let fl = fit_iterative(&est, &active, MomentFunction::Log10, &omega, &IterOptions::default());
        match (fi, fl) {
            (Ok(a), Ok(b)) if a.converged && b.converged => {
                for &kind in &active {
                    let va = a.theta_hat.param(kind).unwrap();
                    let vb = b.theta_hat.param(kind).unwrap();
                    diffs.entry(kind).or_default().push(((va - vb) / va).abs());
                }
            }
            _ => failures += 1,
        }
    }
    for (kind, mut v) in diffs {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = v[v.len() / 2];
        let p90 = v[(v.len() * 9) / 10];
        println!(
            "C9f {}: median rel diff {:.4} p90 {:.4} (n={}, failures={})",
            kind.tag(),
            median,
            p90,
            v.len(),
            failures
        );
    }
    println!("C9f elapsed {:?}", t0.elapsed());
}

fn run_and_report(
    name: &str,
    truth: CompositeModel,
    t: usize,
    reps: usize,
    methods: Vec<Method>,
    seed: u64,
) -> McSummary {
    let mut exp = Experiment::new(truth, t, reps, seed);
    exp.methods = methods;
    exp.sample_rate_hz = 250.0;
    let t0 = Instant::now();
    let summary = run_experiment(&exp).unwrap();
    println!("== {} T=2^{} reps={} ({:?}) ==", name, t.trailing_zeros(), reps, t0.elapsed());
    for m in &summary.methods {
        for (kind, p) in &m.parameters {
            println!(
                "  {:5} {:3}: rmse {:.6e} bias {:+.3e} sd {:.3e} used {} fail {}",
                m.method.tag(),
                kind.tag(),
                p.rmse,
                p.bias,
                p.sd,
                p.used,
                p.failures
            );
        }
    }
    summary
}

#[test]
#[ignore]
fn dry_fixed_point_probe() {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use wvcal::fit::gmwfm_objective;
    use wvcal::wv::{diagonal_large_sample, WvEstimate};

    fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
        lo * (hi / lo).powf(rng.gen::<f64>())
    }
    let families: [&[ProcessKind]; 5] = [
        &[ProcessKind::Wn],
        &[ProcessKind::Wn, ProcessKind::Rw],
        &[ProcessKind::Qn, ProcessKind::Wn, ProcessKind::Rw],
        &[ProcessKind::Wn, ProcessKind::Bi, ProcessKind::Rw],
        &[
            ProcessKind::Qn,
            ProcessKind::Wn,
            ProcessKind::Bi,
            ProcessKind::Rw,
            ProcessKind::Dr,
        ],
    ];
    let strategies = [
        WeightStrategy::IdentityW,
        WeightStrategy::DiagInverseSquared,
        WeightStrategy::EstimatedVInverse,
        WeightStrategy::OptimalOmega,
    ];
    let grid = ScaleGrid::dyadic(1 << 12, 16).unwrap();
    let mut rng = StdRng::seed_from_u64(313);
    for (fi, family) in families.iter().enumerate() {
        for rep in 0..10 {
            let pairs: Vec<(ProcessKind, f64)> = family
                .iter()
                .map(|&kind| {
                    let value = match kind {
                        ProcessKind::Qn => log_uniform(&mut rng, 3e-2, 3e-1),
                        ProcessKind::Wn => log_uniform(&mut rng, 3e-1, 3.0),
                        ProcessKind::Bi => log_uniform(&mut rng, 3e-1, 1.5),
                        ProcessKind::Rw => log_uniform(&mut rng, 1e-3, 1e-2),
                        ProcessKind::Dr => log_uniform(&mut rng, 1e-3, 1e-2),
                    };
                    (kind, value)
                })
                .collect();
            let truth = CompositeModel::from_pairs(&pairs).unwrap();
            let nu = model_wv(&truth, VarianceConvention::Av, &grid);
            let nu_hat: Vec<f64> = nu.iter().copied().collect();
            let cov = diagonal_large_sample(&nu_hat, &grid.edofs());
            let est = WvEstimate {
                grid: grid.clone(),
                convention: VarianceConvention::Av,
                nu_hat,
                cov_hat: Some(cov),
                ci_lo: None,
                ci_hi: None,
                sample_rate_hz: 1.0,
            };
            let start_factors = nalgebra::DVector::from_fn(family.len(), |_, _| {
                log_uniform(&mut rng, 0.5, 2.0)
            });
            let start = truth
                .with_theta(&truth.theta().component_mul(&start_factors))
                .unwrap();
            for strategy in strategies {
                let omega = strategy.realize(&est, MomentFunction::Log10).unwrap();
                let omega = &omega / (omega.trace() / omega.nrows() as f64);
                let options = IterOptions {
                    start: Some(start.clone()),
                    grad_tol: 1e-11,
                    ..IterOptions::default()
                };
                let fit =
                    fit_iterative(&est, family, MomentFunction::Log10, &omega, &options).unwrap();
                let worst = family
                    .iter()
                    .map(|&k| {
                        let g = fit.theta_hat.param(k).unwrap();
                        let w = truth.param(k).unwrap();
                        ((g - w) / w).abs()
                    })
                    .fold(0.0f64, f64::max);
                if worst > 1e-8 || !fit.converged {
                    let obj_truth = gmwfm_objective(
                        &truth,
                        &est.nu_hat,
                        MomentFunction::Log10,
                        &omega,
                        est.convention,
                        &est.grid,
                    )
                    .unwrap();
                    println!(
                        "family {fi} rep {rep} {}: conv {} iters {} obj {:.3e} obj@truth {:.3e} worst_rel {:.3e} start_f {:?}",
                        strategy.tag(),
                        fit.converged,
                        fit.iterations,
                        fit.objective,
                        obj_truth,
                        worst,
                        start_factors.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
                    );
                }
            }
        }
    }
}

#[test]
#[ignore]
fn dry_c4_seed_scan() {
    for seed in [1111u64, 2222, 3333] {
        let a18 = run_and_report("accel", accel(), 1 << 18, 300, vec![Method::Gmwm], seed);
        let a20 = run_and_report("accel", accel(), 1 << 20, 300, vec![Method::Gmwm], seed);
        for kind in [ProcessKind::Qn, ProcessKind::Wn, ProcessKind::Rw, ProcessKind::Dr] {
            let a = a18.method(Method::Gmwm).unwrap().parameters[&kind].rmse;
            let b = a20.method(Method::Gmwm).unwrap().parameters[&kind].rmse;
            println!(
                "C4scan seed {seed} accel {}: ratio {:.4} (short {:.4e} long {:.4e})",
                kind.tag(),
                b / a,
                a,
                b
            );
        }
    }
}

#[test]
#[ignore]
fn dry_c4_c7_ensembles() {
    let seed = 4242u64;
    let g18 = run_and_report("gyro", gyro(), 1 << 18, 300, vec![Method::Gmwm], seed);
    let g20 = run_and_report("gyro", gyro(), 1 << 20, 300, vec![Method::Gmwm], seed);
    for kind in [ProcessKind::Wn, ProcessKind::Rw] {
        let a = g18.method(Method::Gmwm).unwrap().parameters[&kind].rmse;
        let b = g20.method(Method::Gmwm).unwrap().parameters[&kind].rmse;
        println!("C4 gyro {}: ratio {:.4} (short {:.4e} long {:.4e})", kind.tag(), b / a, a, b);
    }
    let a18 = run_and_report(
        "accel",
        accel(),
        1 << 18,
        300,
        vec![Method::Gmwm, Method::Armav, Method::Avsm],
        seed,
    );
    let a20 = run_and_report("accel", accel(), 1 << 20, 300, vec![Method::Gmwm], seed);
    for kind in [ProcessKind::Qn, ProcessKind::Wn, ProcessKind::Rw, ProcessKind::Dr] {
        let a = a18.method(Method::Gmwm).unwrap().parameters[&kind].rmse;
        let b = a20.method(Method::Gmwm).unwrap().parameters[&kind].rmse;
        println!("C4 accel {}: ratio {:.4} (short {:.4e} long {:.4e})", kind.tag(), b / a, a, b);
    }
    for (b, label) in [(Method::Armav, "armav"), (Method::Avsm, "avsm")] {
        let conf = ranking_confidence(&a18, ProcessKind::Qn, Method::Gmwm, b, 2000, 99).unwrap();
        let ra = a18.method(Method::Gmwm).unwrap().parameters[&ProcessKind::Qn].rmse;
        let rb = a18.method(b).unwrap().parameters[&ProcessKind::Qn].rmse;
        println!("C7 Q gmwm {:.4e} vs {label} {:.4e}: confidence {:.3}", ra, rb, conf);
    }
}
