//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every check prints its PASS/FAIL line in plain `cargo test` output; the
//! process exits nonzero if any check fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mre_cli::sweep::{run_sweep, SummaryRow};
use mre_cli::RunConfig;
use mre_core::baselines::{nodal_direct_inversion, NodalOptions, NodalStatus};
use mre_core::fem::{element_mass, element_stiffness_basis};
use mre_core::forward::{corrupt_displacements, DisplacementNoise};
use mre_core::inverse::{
    build_gamma, fixed_point_solve, grad_g, nonneg_prox, tv_prox, GammaOperator, InverseProblem,
    NoiseCovariance, TvProxOptions,
};
use mre_core::linalg::csr_mul;
use mre_core::mesh::{build_mesh, element_adjacency, GraphEdge};
use mre_core::scenario::{NoiseSettings, Phantom};
use mre_core::{
    AdjacencyGraph, BoundaryTag, DisplacementField, ElasticityField, FemModel, MaterialParams,
    Method, PhantomSpec, Regularizer, SolverConfig, TriMesh,
};

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome, Option<Duration>);

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spec(rng: &mut ChaCha8Rng, max_n: usize) -> PhantomSpec {
    PhantomSpec {
        nx: rng.random_range(1..=max_n),
        ny: rng.random_range(1..=max_n),
        jitter: rng.random_range(0.0..0.3),
        jitter_seed: rng.random(),
        ..PhantomSpec::default()
    }
}

fn assembly_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let spec = random_spec(&mut rng, 16);
        let params = MaterialParams {
            nu: rng.random_range(0.0..0.499),
            ..MaterialParams::default()
        };
        let model = FemModel::new(build_mesh(&spec).unwrap(), params).unwrap();
        let p = model.mesh().element_count();
        let e = ElasticityField::new((0..p).map(|_| rng.random_range(0.05..1.0)).collect());
        let u = DisplacementField::new(
            (0..model.dof_count())
                .map(|_| rng.random_range(-1e-4..1e-4))
                .collect(),
        )
        .unwrap();
        let ku = csr_mul(&model.stiffness(&e).unwrap(), u.as_slice());
        let de = model.d_operator(&u).unwrap().apply(e.as_slice());
        worst = worst.max(diff_norm(&de, &ku) / norm(&ku));
    }
    check(
        worst < 1e-10,
        format!("worst relative mismatch {worst:.2e} over 100 triples"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let spec = PhantomSpec {
            nx: 8,
            ny: 8,
            ..random_spec(&mut rng, 8)
        };
        let ph = Phantom::new(&spec, &MaterialParams::default(), 1.0).unwrap();
        let u = ph.clean_displacement().unwrap();
        let delta = rng.random_range(0.005..0.2);
        let (um, sigma_n) =
            corrupt_displacements(&u, &DisplacementNoise::Level(delta), rng.random()).unwrap();
        let problem = InverseProblem::new(&ph.model, um, &ph.force, &ph.bc).unwrap();
        let cov = NoiseCovariance {
            sigma_w: rng.random_range(1e-4..1e-2),
            sigma_n,
        };
        let e: Vec<f64> = (0..problem.unknowns())
            .map(|_| rng.random_range(0.1..0.6))
            .collect();
        let gamma = build_gamma(
            &ph.model,
            &ElasticityField::new(e.clone()),
            problem.observed(),
            &cov,
            GammaOperator::Full,
        )
        .unwrap();
        let g = |x: &[f64]| 0.5 * gamma.weighted_norm2(&problem.residual(x));
        let grad = grad_g(&e, &gamma, &problem);
        let h = 1e-6;
        let fd: Vec<f64> = (0..e.len())
            .map(|k| {
                let mut plus = e.clone();
                let mut minus = e.clone();
                plus[k] += h;
                minus[k] -= h;
                (g(&plus) - g(&minus)) / (2.0 * h)
            })
            .collect();
        worst = worst.max(diff_norm(&fd, &grad) / norm(&grad));
    }
    check(
        worst < 1e-5,
        format!("worst relative gradient error {worst:.2e} over 20 instances"),
    )
}

/// Degree-5 seven-point rule on the reference triangle: barycentric
/// coordinates and weights summing to one.
fn seven_point_rule() -> Vec<([f64; 3], f64)> {
    let s = 15f64.sqrt();
    let (a1, b1) = ((6.0 - s) / 21.0, (9.0 + 2.0 * s) / 21.0);
    let (a2, b2) = ((6.0 + s) / 21.0, (9.0 - 2.0 * s) / 21.0);
    let (w1, w2) = ((155.0 - s) / 1200.0, (155.0 + s) / 1200.0);
    let mut rule = vec![([1.0 / 3.0; 3], 9.0 / 40.0)];
    for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
        rule.push(([b, a, a], w));
        rule.push(([a, b, a], w));
        rule.push(([a, a, b], w));
    }
    rule
}

/// Quadrature oracle for one triangle: stiffness per unit modulus and the
/// `rho w^2`-scaled consistent mass.
fn element_oracle(p: [[f64; 2]; 3], nu: f64, rho_w2: f64) -> ([[f64; 6]; 6], [[f64; 6]; 6]) {
    let jac = [
        [p[1][0] - p[0][0], p[2][0] - p[0][0]],
        [p[1][1] - p[0][1], p[2][1] - p[0][1]],
    ];
    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    let area = 0.5 * det.abs();
    // Reference gradients of (1 - r - s, r, s), mapped with J^-T.
    let dref = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let grads: Vec<[f64; 2]> = dref
        .iter()
        .map(|d| {
            [
                (jac[1][1] * d[0] - jac[1][0] * d[1]) / det,
                (-jac[0][1] * d[0] + jac[0][0] * d[1]) / det,
            ]
        })
        .collect();
    let f = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let c = [
        [f * (1.0 - nu), f * nu, 0.0],
        [f * nu, f * (1.0 - nu), 0.0],
        [0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0],
    ];
    let mut b = [[0.0; 6]; 3];
    for k in 0..3 {
        b[0][2 * k] = grads[k][0];
        b[1][2 * k + 1] = grads[k][1];
        b[2][2 * k] = grads[k][1];
        b[2][2 * k + 1] = grads[k][0];
    }
    let mut psi = [[0.0; 6]; 6];
    let mut mass = [[0.0; 6]; 6];
    for (bary, w) in seven_point_rule() {
        for i in 0..6 {
            for j in 0..6 {
                let mut v = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        v += b[r][i] * c[r][s] * b[s][j];
                    }
                }
                psi[i][j] += w * area * v;
                if i % 2 == j % 2 {
                    mass[i][j] += w * area * rho_w2 * bary[i / 2] * bary[j / 2];
                }
            }
        }
    }
    (psi, mass)
}

fn element_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = MaterialParams::default();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 50 {
        let mut pts: Vec<[f64; 2]> = (0..3)
            .map(|_| [rng.random_range(0.0..0.01), rng.random_range(0.0..0.01)])
            .collect();
        let cross = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1])
            - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
        if cross.abs() < 1e-6 {
            continue;
        }
        if cross < 0.0 {
            pts.swap(1, 2);
        }
        let mesh =
            TriMesh::new(pts.clone(), vec![[0, 1, 2]], vec![BoundaryTag::Interior; 3]).unwrap();
        let psi = element_stiffness_basis(&mesh, 0, params.nu).unwrap();
        let mass = element_mass(&mesh, 0, &params).unwrap();
        let (psi_o, mass_o) =
            element_oracle([pts[0], pts[1], pts[2]], params.nu, params.rho_omega2());
        let rel = |m: &dyn Fn(usize, usize) -> f64, o: &[[f64; 6]; 6]| {
            let scale = o.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
            (0..36)
                .map(|k| (m(k / 6, k % 6) - o[k / 6][k % 6]).abs() / scale)
                .fold(0.0, f64::max)
        };
        worst = worst
            .max(rel(&|i, j| psi[(i, j)], &psi_o))
            .max(rel(&|i, j| mass[(i, j)], &mass_o));
        done += 1;
    }
    check(
        worst < 1e-12,
        format!("worst entry error {worst:.2e} relative to the largest entry, 50 triangles"),
    )
}

fn noiseless_roundtrip() -> Outcome {
    let ph = Phantom::new(&PhantomSpec::default(), &MaterialParams::default(), 1.0).unwrap();
    let u = ph.clean_displacement().unwrap();
    let mut m = ph.measure(&u, &NoiseSettings::level(0.0), 0).unwrap();
    // Exact data; the force-noise floor stays in the covariance model.
    m.f_meas = ph.force.clone();
    let problem = ph.problem(&m).unwrap();
    let config = SolverConfig {
        max_outer: 200,
        ..SolverConfig::default()
    };
    let r = fixed_point_solve(
        &problem,
        &ph.graph,
        Some(&m.covariance),
        Regularizer::Tv,
        &config,
    )
    .unwrap();
    let rms = mre_core::metrics::rms_error(r.e_hat.as_slice(), ph.e_true.as_slice()).unwrap();
    check(
        rms < 0.02 && r.outer_iters <= 200,
        format!("rms {rms:.2e} after {} outer iterations", r.outer_iters),
    )
}

const TREND_DELTAS: [f64; 5] = [0.01, 0.02, 0.056, 0.10, 0.20];

fn trend_sweep() -> &'static [SummaryRow] {
    static SUMMARY: std::sync::OnceLock<Vec<SummaryRow>> = std::sync::OnceLock::new();
    SUMMARY.get_or_init(|| {
        let mut cfg = RunConfig::default();
        cfg.sweep.deltas = TREND_DELTAS.to_vec();
        cfg.sweep.seeds = vec![0, 1, 2];
        let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
        let out = run_sweep(&cfg, jobs).unwrap();
        let failed = out.rows.iter().filter(|r| r.status != "ok").count();
        assert_eq!(failed, 0, "{failed} sweep runs failed");
        for r in &out.summary {
            println!(
                "    delta {:<5} {:<12} lambda {:<8} rms {:.4} cnr {:.3}",
                r.delta, r.method, r.best_lambda, r.mean_rms, r.mean_cnr
            );
        }
        out.summary
    })
}

fn summary_for(rows: &[SummaryRow], delta: f64, method: Method) -> &SummaryRow {
    rows.iter()
        .find(|r| r.delta == delta && r.method == method)
        .unwrap_or_else(|| panic!("no summary for {method} at {delta}"))
}

fn noise_robustness() -> Outcome {
    let rows = trend_sweep();
    let mut lines = Vec::new();
    let mut ok = true;
    for &d in TREND_DELTAS.iter().filter(|&&d| d >= 0.05) {
        let p = summary_for(rows, d, Method::Proposed);
        let b = summary_for(rows, d, Method::BaselineTv);
        ok &= p.mean_rms <= b.mean_rms && p.mean_cnr >= b.mean_cnr;
        lines.push(format!(
            "delta {d}: rms {:.3} vs {:.3}, cnr {:.2} vs {:.2}",
            p.mean_rms, b.mean_rms, p.mean_cnr, b.mean_cnr
        ));
    }
    check(ok, lines.join("; "))
}

fn monotone_trend() -> Outcome {
    let rows = trend_sweep();
    let rms: Vec<f64> = TREND_DELTAS
        .iter()
        .map(|&d| summary_for(rows, d, Method::Proposed).mean_rms)
        .collect();
    let inversions = rms.windows(2).filter(|w| w[1] < w[0]).count();
    check(
        inversions <= 1,
        format!("{inversions} inversion(s) in proposed rms {rms:.3?}"),
    )
}

fn prox_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let spec = PhantomSpec {
        nx: 8,
        ny: 8,
        jitter: 0.2,
        ..PhantomSpec::default()
    };
    let graph = element_adjacency(&build_mesh(&spec).unwrap());
    let n = graph.vertex_count();
    let opts = TvProxOptions::default();
    let mut worst_ratio = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let tau = rng.random_range(0.0..0.5);
        let ratio = diff_norm(
            &tv_prox(&x, tau, &graph, &opts),
            &tv_prox(&y, tau, &graph, &opts),
        ) / diff_norm(&x, &y);
        worst_ratio = worst_ratio.max(ratio);
    }

    let pair = AdjacencyGraph::new(
        2,
        vec![GraphEdge {
            a: 0,
            b: 1,
            weight: 1.0,
        }],
    )
    .unwrap();
    let mut pair_err = 0.0f64;
    for _ in 0..200 {
        let a: f64 = rng.random_range(-2.0..2.0);
        let b: f64 = rng.random_range(-2.0..2.0);
        let tau: f64 = rng.random_range(0.0..1.5);
        let expect = if (a - b).abs() <= 2.0 * tau {
            [0.5 * (a + b); 2]
        } else {
            let s = (a - b).signum();
            [a - s * tau, b + s * tau]
        };
        let z = tv_prox(&[a, b], tau, &pair, &opts);
        pair_err = pair_err
            .max((z[0] - expect[0]).abs())
            .max((z[1] - expect[1]).abs());
    }

    let mut idempotent = true;
    for _ in 0..100 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let once = nonneg_prox(&x, 1e-4);
        idempotent &= nonneg_prox(&once, 1e-4) == once && once.iter().all(|&v| v >= 1e-4);
    }
    check(
        worst_ratio <= 1.0 + 1e-12 && pair_err < 1e-10 && idempotent,
        format!(
            "max expansion ratio {worst_ratio:.6}, pairwise error {pair_err:.1e}, projection idempotent {idempotent}"
        ),
    )
}

fn reduction_consistency() -> Outcome {
    let spec = PhantomSpec {
        nx: 8,
        ny: 8,
        ..PhantomSpec::default()
    };
    let ph = Phantom::new(&spec, &MaterialParams::default(), 1.0).unwrap();
    let u = ph.clean_displacement().unwrap();
    let m = ph.measure(&u, &NoiseSettings::level(0.05), 4).unwrap();
    let problem = ph.problem(&m).unwrap();
    let config = SolverConfig {
        lambda_reg: 1e-3,
        max_inner: 10,
        max_outer: 1,
        inner_tol: 1e-300,
        record_iterates: true,
        ..SolverConfig::default()
    };
    let unit = NoiseCovariance {
        sigma_w: 1.0,
        sigma_n: [0.0, 0.0],
    };
    let a = fixed_point_solve(&problem, &ph.graph, Some(&unit), Regularizer::Tv, &config).unwrap();
    let b = fixed_point_solve(&problem, &ph.graph, None, Regularizer::Tv, &config).unwrap();
    let compared = a.iterates.len().min(b.iterates.len());
    let worst = a
        .iterates
        .iter()
        .zip(&b.iterates)
        .map(|(x, y)| diff_norm(x, y) / norm(y))
        .fold(0.0, f64::max);
    check(
        compared >= 10 && a.iterates.len() == b.iterates.len() && worst <= 1e-10,
        format!("{compared} iterates compared, worst relative gap {worst:.1e}"),
    )
}

fn nodal_shear_wave() -> Outcome {
    let spec = PhantomSpec {
        nx: 64,
        ny: 64,
        ..PhantomSpec::default()
    };
    let mesh = build_mesh(&spec).unwrap();
    let params = MaterialParams::default();
    let mu_true = 4850.0;
    let k = params.omega() * (params.rho / mu_true).sqrt();
    let u = DisplacementField::new(
        mesh.nodes()
            .iter()
            .flat_map(|p| [(k * p[1]).sin(), 0.0])
            .collect(),
    )
    .unwrap();
    let est = nodal_direct_inversion(&mesh, &u, &params, &NodalOptions::default()).unwrap();
    let expected = params.rho_omega2() / (k * k);
    let usable: Vec<f64> = est
        .iter()
        .filter(|e| e.status != NodalStatus::Invalid)
        .map(|e| (e.mu - expected).abs() / expected)
        .collect();
    let worst = usable.iter().copied().fold(0.0, f64::max);
    check(
        usable.len() > est.len() / 2 && worst < 0.05,
        format!(
            "{} of {} nodes estimated, worst error {:.2}%",
            usable.len(),
            est.len(),
            100.0 * worst
        ),
    )
}

fn sweep_determinism() -> Outcome {
    let root = tempfile::TempDir::new().unwrap();
    let cfg = root.path().join("sweep.toml");
    fs::write(
        &cfg,
        "seed = 5\n[phantom]\nnx = 8\nny = 8\n[sweep]\ndeltas = [0.02, 0.1]\nseeds = [0, 1]\n\
         max_outer = 3\n",
    )
    .unwrap();
    let run = |dir: &str, jobs: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_mre"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(root.path().join(dir))
            .args(["--jobs", jobs, "sweep"])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    run("a", "1");
    run("b", "3");
    let mut same = true;
    let mut sizes = Vec::new();
    for f in ["sweep.csv", "sweep_summary.csv"] {
        let a = fs::read(root.path().join("a").join(f)).unwrap();
        let b = fs::read(root.path().join("b").join(f)).unwrap();
        same &= a == b;
        sizes.push(format!("{f} {} bytes", a.len()));
    }
    check(same, format!("{} identical across runs", sizes.join(", ")))
}

fn main() {
    let checks: [Check; 10] = [
        (
            "assembly identity",
            assembly_identity,
            Some(Duration::from_secs(10)),
        ),
        (
            "gradient vs finite differences",
            gradient_check,
            Some(Duration::from_secs(30)),
        ),
        ("element quadrature oracle", element_oracles, None),
        (
            "noiseless roundtrip",
            noiseless_roundtrip,
            Some(Duration::from_secs(120)),
        ),
        (
            "noise robustness vs baseline",
            noise_robustness,
            Some(Duration::from_secs(1800)),
        ),
        ("monotone error trend", monotone_trend, None),
        ("prox properties", prox_properties, None),
        (
            "reduction to deterministic model",
            reduction_consistency,
            None,
        ),
        ("nodal shear-wave recovery", nodal_shear_wave, None),
        ("sweep determinism", sweep_determinism, None),
    ];
    let mut failures = 0;
    for (i, (name, f, limit)) in checks.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, limit) {
            (Ok(d), Some(l)) if elapsed > l => Err(format!("{d}; took {elapsed:.1?}, limit {l:?}")),
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail} ({elapsed:.1?})", i + 1);
    }
    if failures > 0 {
        println!("{failures} acceptance check(s) failed");
        std::process::exit(1);
    }
}
