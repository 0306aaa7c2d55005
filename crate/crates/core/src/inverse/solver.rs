use serde::{Deserialize, Serialize};

use super::gamma::{build_gamma, GammaCovariance, GammaOperator, NoiseCovariance};
use super::problem::InverseProblem;
use super::prox::{nonneg_prox, tv_prox, TvProxOptions};
use crate::error::{Error, Result};
use crate::fem::MassSign;
use crate::field::{diff_norm, dot, norm, ElasticityField};
use crate::mesh::AdjacencyGraph;

/// Regularizer on the modulus field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `lambda sum_ab w_ab |E_a - E_b|`, handled by its proximal operator.
    #[default]
    Tv,
    /// `lambda ||L E||^2` with `L` the weighted graph Laplacian; smooth, so
    /// it joins the gradient step.
    WeightedSmoothness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub lambda_reg: f64,
    /// Initial step; `None` estimates `1 / L` by power iteration.
    pub gamma0: Option<f64>,
    /// Step shrink factor during backtracking, in `(0, 1)`.
    pub backtracking: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
    pub tv: TvProxOptions,
    /// Homogeneous initial modulus (100 kPa).
    pub e_init: f64,
    /// Lower bound standing in for `E > 0`.
    pub eps: f64,
    pub power_iters: usize,
    /// Nesterov momentum with function-value restart on the inner loop.
    pub acceleration: bool,
    pub gamma_operator: GammaOperator,
    /// Keep every inner iterate (memory heavy; for diagnostics and tests).
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 30.0,
            gamma0: None,
            backtracking: 0.5,
            inner_tol: 1e-8,
            outer_tol: 1e-4,
            max_inner: 500,
            max_outer: 200,
            tv: TvProxOptions::default(),
            e_init: 0.2,
            eps: 1e-4,
            power_iters: 20,
            acceleration: true,
            gamma_operator: GammaOperator::Full,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.lambda_reg >= 0.0) {
            return bad("lambda_reg must be >= 0");
        }
        if let Some(g) = self.gamma0 {
            if !(g > 0.0) {
                return bad("gamma0 must be positive");
            }
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return bad("backtracking factor must be in (0, 1)");
        }
        if !(self.inner_tol > 0.0 && self.outer_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_inner == 0 || self.max_outer == 0 {
            return bad("iteration caps must be >= 1");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.e_init >= self.eps) {
            return bad("e_init must be >= eps");
        }
        Ok(())
    }
}

/// The three terms of the MAP objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub fidelity: f64,
    pub log_det: f64,
    pub regularization: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.fidelity + self.log_det + self.regularization
    }
}

fn regularization(e: &[f64], graph: &AdjacencyGraph, reg: Regularizer, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    match reg {
        Regularizer::Tv => lambda * graph.total_variation(e),
        Regularizer::WeightedSmoothness => {
            let le = graph.laplacian_apply(e);
            lambda * dot(&le, &le)
        }
    }
}

/// `1/2 ||f - D E||^2_{Gamma^-1} + N/2 log|Gamma| + lambda R(E)` with `N`
/// the node count.
pub fn objective(
    e: &[f64],
    gamma: &GammaCovariance,
    problem: &InverseProblem<'_>,
    graph: &AdjacencyGraph,
    reg: Regularizer,
    lambda: f64,
) -> Result<ObjectiveTerms> {
    let r = problem.residual(e);
    let terms = ObjectiveTerms {
        fidelity: 0.5 * gamma.weighted_norm2(&r),
        log_det: 0.5 * problem.model().mesh().node_count() as f64 * gamma.log_det(),
        regularization: regularization(e, graph, reg, lambda),
    };
    if !terms.total().is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    Ok(terms)
}

/// Gradient of the fidelity term with `Gamma` frozen,
/// `-D^T Gamma^-1 (f - D E)`.
pub fn grad_g(e: &[f64], gamma: &GammaCovariance, problem: &InverseProblem<'_>) -> Vec<f64> {
    let r = problem.residual(e);
    let w = gamma.solve(&r);
    problem
        .d_apply_transpose(&w)
        .into_iter()
        .map(|v| -v)
        .collect()
}

/// Smooth part of the inner objective: fidelity plus, for weighted
/// smoothness, the quadratic regularizer.
struct Smooth<'p, 'a> {
    gamma: &'p GammaCovariance,
    problem: &'p InverseProblem<'a>,
    graph: &'p AdjacencyGraph,
    ws_lambda: f64,
}

impl Smooth<'_, '_> {
    fn value(&self, e: &[f64]) -> f64 {
        let r = self.problem.residual(e);
        let mut v = 0.5 * self.gamma.weighted_norm2(&r);
        if self.ws_lambda > 0.0 {
            let le = self.graph.laplacian_apply(e);
            v += self.ws_lambda * dot(&le, &le);
        }
        v
    }

    fn value_and_grad(&self, e: &[f64]) -> (f64, Vec<f64>) {
        let r = self.problem.residual(e);
        let w = self.gamma.solve(&r);
        let mut v = 0.5 * dot(&r, &w);
        let mut g: Vec<f64> = self
            .problem
            .d_apply_transpose(&w)
            .into_iter()
            .map(|x| -x)
            .collect();
        if self.ws_lambda > 0.0 {
            let le = self.graph.laplacian_apply(e);
            v += self.ws_lambda * dot(&le, &le);
            let lle = self.graph.laplacian_apply(&le);
            for (gi, li) in g.iter_mut().zip(lle) {
                *gi += 2.0 * self.ws_lambda * li;
            }
        }
        (v, g)
    }

    /// Hessian-vector product of the smooth part.
    fn hessian_apply(&self, v: &[f64]) -> Vec<f64> {
        let dv = self.problem.d_apply(v);
        let mut h = self.problem.d_apply_transpose(&self.gamma.solve(&dv));
        if self.ws_lambda > 0.0 {
            let llv = self.graph.laplacian_apply(&self.graph.laplacian_apply(v));
            for (hi, li) in h.iter_mut().zip(llv) {
                *hi += 2.0 * self.ws_lambda * li;
            }
        }
        h
    }

    fn lipschitz_estimate(&self, dim: usize, iters: usize) -> f64 {
        let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
        let mut estimate = 0.0;
        for _ in 0..iters.max(1) {
            let hv = self.hessian_apply(&v);
            let n = norm(&hv);
            if n == 0.0 {
                return 0.0;
            }
            estimate = n;
            v = hv.into_iter().map(|x| x / n).collect();
        }
        estimate
    }
}

#[derive(Debug, Clone)]
pub struct InnerOutcome {
    pub e: Vec<f64>,
    pub iterations: usize,
    /// Final step size.
    pub step: f64,
    /// Smooth part plus TV at each accepted iterate, starting with the input.
    pub surrogate_trace: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
}

/// Proximal-gradient iterations on `E` with `Gamma` frozen:
/// `E <- prox_{E >= eps}(prox_{step TV}(E - step grad g(E)))`.
///
/// Steps shrink by backtracking until the standard sufficient-decrease
/// condition for the smooth part holds. With `acceleration` the gradient
/// step is taken from an extrapolated point; an extrapolated step that would
/// raise the surrogate objective is discarded and momentum restarts, so
/// accepted iterates never increase the surrogate.
pub fn pg_inner_solve(
    e0: &[f64],
    gamma: &GammaCovariance,
    problem: &InverseProblem<'_>,
    graph: &AdjacencyGraph,
    reg: Regularizer,
    config: &SolverConfig,
) -> Result<InnerOutcome> {
    config.validate()?;
    let p = problem.unknowns();
    crate::error::check_len("initial modulus", p, e0.len())?;
    crate::error::check_len("Gamma dimension", problem.observed().len(), gamma.dim())?;
    let lambda = config.lambda_reg;
    let smooth = Smooth {
        gamma,
        problem,
        graph,
        ws_lambda: if reg == Regularizer::WeightedSmoothness {
            lambda
        } else {
            0.0
        },
    };
    let tv_lambda = if reg == Regularizer::Tv { lambda } else { 0.0 };
    let surrogate = |e: &[f64], smooth_value: f64| {
        smooth_value
            + if tv_lambda > 0.0 {
                tv_lambda * graph.total_variation(e)
            } else {
                0.0
            }
    };
    let prox = |v: Vec<f64>, step: f64| {
        let t = if tv_lambda > 0.0 {
            tv_prox(&v, step * tv_lambda, graph, &config.tv)
        } else {
            v
        };
        nonneg_prox(&t, config.eps)
    };

    let step0 = match config.gamma0 {
        Some(g) => g,
        None => {
            let l = smooth.lipschitz_estimate(p, config.power_iters);
            if l > 0.0 {
                1.0 / l
            } else {
                1.0
            }
        }
    };
    let min_step = 1e-14 * step0;
    let mut step = step0;

    let mut x = e0.to_vec();
    let mut fx = surrogate(&x, smooth.value(&x));
    let mut y = x.clone();
    let mut y_is_x = true;
    let mut t = 1.0f64;
    let mut trace = vec![fx];
    let mut iterates = Vec::new();
    let mut iterations = 0;

    while iterations < config.max_inner {
        iterations += 1;
        let (gy, grad) = smooth.value_and_grad(&y);
        if lambda == 0.0 && y_is_x && gy == 0.0 && x.iter().all(|&v| v >= config.eps) {
            // Exact data, no regularization: already optimal.
            if config.record_iterates {
                iterates.push(x.clone());
            }
            break;
        }
        let z = loop {
            let trial: Vec<f64> = y.iter().zip(&grad).map(|(yi, gi)| yi - step * gi).collect();
            let z = prox(trial, step);
            let d: Vec<f64> = z.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bound = gy + dot(&grad, &d) + dot(&d, &d) / (2.0 * step);
            let gz = smooth.value(&z);
            if gz <= bound + 1e-12 * gy.abs() {
                break (z, gz);
            }
            step *= config.backtracking;
            if step < min_step {
                return Err(Error::StepUnderflow {
                    step,
                    iteration: iterations,
                });
            }
        };
        let (z, gz) = z;
        let fz = surrogate(&z, gz);
        if !fz.is_finite() {
            return Err(Error::NonFinite("inner objective"));
        }

        if fz <= fx {
            let change = diff_norm(&z, &x) / norm(&x).max(f64::MIN_POSITIVE);
            let x_prev = std::mem::replace(&mut x, z);
            fx = fz;
            trace.push(fx);
            if config.acceleration {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let beta = (t - 1.0) / t_next;
                y = x
                    .iter()
                    .zip(&x_prev)
                    .map(|(a, b)| a + beta * (a - b))
                    .collect();
                y_is_x = beta == 0.0;
                t = t_next;
            } else {
                y = x.clone();
                y_is_x = true;
            }
            if config.record_iterates {
                iterates.push(x.clone());
            }
            if change < config.inner_tol {
                break;
            }
        } else {
            if config.record_iterates {
                iterates.push(x.clone());
            }
            if y_is_x {
                // A plain step from the current iterate made no progress.
                break;
            }
            y = x.clone();
            y_is_x = true;
            t = 1.0;
        }
    }

    Ok(InnerOutcome {
        e: x,
        iterations,
        step,
        surrogate_trace: trace,
        iterates,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub e_hat: ElasticityField,
    /// Full objective (with log-determinant) after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// `||E_k - E_{k-1}|| / ||E_{k-1}||` per outer iteration.
    pub relative_changes: Vec<f64>,
    pub inner_iters: Vec<usize>,
    pub outer_iters: usize,
    pub converged: bool,
    pub regularizer: Regularizer,
    /// `None` for the deterministic (identity-weighted) model.
    pub noise_covariance: Option<NoiseCovariance>,
    pub mass_sign: MassSign,
    pub config: SolverConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<Vec<f64>>,
}

/// Alternates `Gamma` updates and proximal-gradient `E` updates.
///
/// With `cov = None` the covariance is the identity throughout, which is
/// the deterministic regularized least-squares model.
pub fn fixed_point_solve(
    problem: &InverseProblem<'_>,
    graph: &AdjacencyGraph,
    cov: Option<&NoiseCovariance>,
    reg: Regularizer,
    config: &SolverConfig,
) -> Result<ReconstructionResult> {
    config.validate()?;
    let p = problem.unknowns();
    let model = problem.model();
    let m = problem.observed().len();
    let gamma_at = |e: &[f64]| -> Result<GammaCovariance> {
        match cov {
            Some(c) => build_gamma(
                model,
                &ElasticityField::new(e.to_vec()),
                problem.observed(),
                c,
                config.gamma_operator,
            ),
            None => Ok(GammaCovariance::identity(m)),
        }
    };

    let mut e = vec![config.e_init; p];
    let mut gamma = gamma_at(&e)?;
    let mut objective_trace = Vec::new();
    let mut relative_changes = Vec::new();
    let mut inner_iters = Vec::new();
    let mut iterates = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut converged = false;

    for _ in 0..config.max_outer {
        let inner = pg_inner_solve(&e, &gamma, problem, graph, reg, config)?;
        inner_iters.push(inner.iterations);
        iterates.extend(inner.iterates);
        let change = diff_norm(&inner.e, &e) / norm(&e);
        e = inner.e;
        relative_changes.push(change);

        gamma = gamma_at(&e)?;
        let obj = objective(&e, &gamma, problem, graph, reg, config.lambda_reg)?.total();
        objective_trace.push(obj);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, e.clone()));
        }
        if change < config.outer_tol {
            converged = true;
            break;
        }
    }

    let e_hat = if converged {
        e
    } else {
        best.map(|(_, b)| b).unwrap_or(e)
    };
    Ok(ReconstructionResult {
        e_hat: ElasticityField::new(e_hat),
        outer_iters: objective_trace.len(),
        objective_trace,
        relative_changes,
        inner_iters,
        converged,
        regularizer: reg,
        noise_covariance: cov.copied(),
        mass_sign: model.params().mass_sign,
        config: config.clone(),
        iterates,
    })
}
