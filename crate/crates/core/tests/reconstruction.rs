//! End-to-end reconstructions on small phantoms.

use mre_core::baselines::NodalOptions;
use mre_core::inverse::{build_gamma, pg_inner_solve, GammaCovariance, GammaOperator};
use mre_core::metrics::rms_error;
use mre_core::scenario::{run_method, NoiseSettings, Phantom};
use mre_core::{
    ElasticityField, MassSign, MaterialParams, Method, PhantomSpec, Regularizer, SolverConfig,
};

fn phantom(n: usize, params: MaterialParams) -> Phantom {
    let spec = PhantomSpec {
        nx: n,
        ny: n,
        ..PhantomSpec::default()
    };
    Phantom::new(&spec, &params, 1.0).unwrap()
}

#[test]
fn noiseless_data_is_recovered_under_both_sign_conventions() {
    for sign in [MassSign::Standard, MassSign::Plus] {
        let ph = phantom(
            8,
            MaterialParams {
                mass_sign: sign,
                ..MaterialParams::default()
            },
        );
        let u = ph.clean_displacement().unwrap();
        let m = ph.measure(&u, &NoiseSettings::level(0.0), 0).unwrap();
        let run = run_method(
            &ph,
            &m,
            Method::Proposed,
            &SolverConfig::default(),
            &NodalOptions::default(),
        )
        .unwrap();
        let r = run.reconstruction().unwrap();
        assert!(r.converged, "{sign:?}");
        assert_eq!(r.mass_sign, sign);
        assert!(run.rms.unwrap() < 0.02, "{sign:?}: rms {:?}", run.rms);
    }
}

#[test]
fn result_invariants_hold_on_noisy_data() {
    let ph = phantom(8, MaterialParams::default());
    let u = ph.clean_displacement().unwrap();
    let m = ph.measure(&u, &NoiseSettings::level(0.1), 3).unwrap();
    let config = SolverConfig {
        max_outer: 10,
        ..SolverConfig::default()
    };
    for method in [Method::Proposed, Method::BaselineTv, Method::BaselineWs] {
        let run = run_method(&ph, &m, method, &config, &NodalOptions::default()).unwrap();
        let r = run.reconstruction().unwrap();
        assert!(r.objective_trace.iter().all(|v| v.is_finite()), "{method}");
        assert!(
            r.e_hat.as_slice().iter().all(|&v| v >= config.eps),
            "{method}"
        );
        assert_eq!(r.relative_changes.len(), r.outer_iters);
        assert_eq!(r.inner_iters.len(), r.outer_iters);
        assert_eq!(r.regularizer, method.regularizer().unwrap());
    }
}

#[test]
fn deterministic_objective_never_increases() {
    let ph = phantom(8, MaterialParams::default());
    let u = ph.clean_displacement().unwrap();
    let m = ph.measure(&u, &NoiseSettings::level(0.05), 9).unwrap();
    let problem = ph.problem(&m).unwrap();
    let gamma = GammaCovariance::identity(problem.observed().len());
    let e0 = vec![0.2; problem.unknowns()];
    for reg in [Regularizer::Tv, Regularizer::WeightedSmoothness] {
        let config = SolverConfig {
            lambda_reg: 1e-3,
            max_inner: 200,
            ..SolverConfig::default()
        };
        let out = pg_inner_solve(&e0, &gamma, &problem, &ph.graph, reg, &config).unwrap();
        for w in out.surrogate_trace.windows(2) {
            assert!(
                w[1] <= w[0] * (1.0 + 1e-12),
                "{reg:?}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn statistical_model_beats_identity_covariance_at_ten_percent_noise() {
    let ph = phantom(16, MaterialParams::default());
    let u = ph.clean_displacement().unwrap();
    let m = ph.measure(&u, &NoiseSettings::level(0.1), 1).unwrap();
    let config = SolverConfig {
        lambda_reg: 100.0,
        max_outer: 20,
        ..SolverConfig::default()
    };
    let proposed =
        run_method(&ph, &m, Method::Proposed, &config, &NodalOptions::default()).unwrap();
    let best_baseline = [1e-4, 1e-2, 1.0]
        .iter()
        .map(|&lambda_reg| {
            let c = SolverConfig {
                lambda_reg,
                ..config.clone()
            };
            run_method(&ph, &m, Method::BaselineTv, &c, &NodalOptions::default())
                .unwrap()
                .rms
                .unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    let p = proposed.rms.unwrap();
    assert!(
        p < best_baseline,
        "proposed {p} vs baseline {best_baseline}"
    );
}

#[test]
fn gamma_at_truth_whitens_the_residual() {
    // With the true field and data drawn from the model, the whitened
    // residual has roughly unit variance per observed row.
    let ph = phantom(8, MaterialParams::default());
    let u = ph.clean_displacement().unwrap();
    let mut total = 0.0;
    let mut rows = 0;
    for seed in 0..20 {
        let m = ph.measure(&u, &NoiseSettings::level(0.05), seed).unwrap();
        let problem = ph.problem(&m).unwrap();
        let gamma = build_gamma(
            &ph.model,
            &ph.e_true,
            problem.observed(),
            &m.covariance,
            GammaOperator::Full,
        )
        .unwrap();
        total += gamma.weighted_norm2(&problem.residual(ph.e_true.as_slice()));
        rows += problem.observed().len();
    }
    let per_row = total / rows as f64;
    assert!((per_row - 1.0).abs() < 0.15, "whitened variance {per_row}");
    let rms = rms_error(
        ElasticityField::uniform(ph.e_true.len(), 0.2).as_slice(),
        ph.e_true.as_slice(),
    )
    .unwrap();
    assert!(rms > 0.1);
}
