//! Noise-level sweeps: every (delta, seed, method, lambda) cell runs on a
//! worker pool and results are gathered in grid order, so output does not
//! depend on scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use mre_core::forward::delta_to_snr;
use mre_core::scenario::{run_method, Measurement, NoiseSettings, Phantom};
use mre_core::{Method, SolverConfig};

use crate::config::RunConfig;
use crate::error::Result;
use crate::render::{line_plot, Canvas, Series};

/// One reconstruction of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub snr_db: f64,
    pub seed: u64,
    pub method: Method,
    pub regularizer: String,
    pub lambda_reg: f64,
    pub rms: Option<f64>,
    pub cnr: Option<f64>,
    pub outer_iters: Option<usize>,
    pub converged: Option<bool>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
    pub wall_time_s: Option<f64>,
}

/// Seed-averaged metrics for the best weight of one method at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub delta: f64,
    pub snr_db: f64,
    pub method: Method,
    pub regularizer: String,
    pub best_lambda: f64,
    pub mean_rms: f64,
    pub mean_cnr: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SummaryRow>,
}

fn snr(delta: f64) -> f64 {
    delta_to_snr(delta).unwrap_or(f64::INFINITY)
}

struct Cell {
    delta_idx: usize,
    seed_idx: usize,
    method: Method,
    lambda: f64,
}

/// Runs the full cross product on `jobs` worker threads.
pub fn run_sweep(cfg: &RunConfig, jobs: usize) -> Result<SweepOutput> {
    let sweep = &cfg.sweep;
    let phantom = Phantom::new(&cfg.phantom, &cfg.material, cfg.load_amplitude)?;
    let u_clean = phantom.clean_displacement()?;
    let base = cfg.noise.settings()?;

    let seeds: Vec<u64> = sweep
        .seeds
        .iter()
        .map(|s| cfg.seed.wrapping_add(*s))
        .collect();
    let measurements: Vec<Vec<Measurement>> = sweep
        .deltas
        .iter()
        .map(|&d| {
            let noise = NoiseSettings {
                displacement: mre_core::forward::DisplacementNoise::Level(d),
                ..base
            };
            seeds
                .iter()
                .map(|&s| phantom.measure(&u_clean, &noise, s))
                .collect::<mre_core::Result<Vec<_>>>()
        })
        .collect::<mre_core::Result<_>>()?;

    let mut cells = Vec::new();
    for delta_idx in 0..sweep.deltas.len() {
        for seed_idx in 0..seeds.len() {
            for &method in &sweep.methods {
                for lambda in sweep.lambdas(method, cfg.solver.lambda_reg) {
                    cells.push(Cell {
                        delta_idx,
                        seed_idx,
                        method,
                        lambda,
                    });
                }
            }
        }
    }

    let run_cell = |cell: &Cell| -> SweepRow {
        let delta = sweep.deltas[cell.delta_idx];
        let solver = SolverConfig {
            lambda_reg: cell.lambda,
            max_outer: sweep.max_outer.unwrap_or(cfg.solver.max_outer),
            ..cfg.solver.clone()
        };
        let m = &measurements[cell.delta_idx][cell.seed_idx];
        let regularizer = match cell.method.regularizer() {
            Some(r) => serde_json::to_value(r)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            None => String::new(),
        };
        let start = Instant::now();
        let outcome = run_method(&phantom, m, cell.method, &solver, &cfg.nodal);
        let elapsed = start.elapsed().as_secs_f64();
        let mut row = SweepRow {
            delta,
            snr_db: snr(delta),
            seed: m.seed,
            method: cell.method,
            regularizer,
            lambda_reg: cell.lambda,
            rms: None,
            cnr: None,
            outer_iters: None,
            converged: None,
            status: "ok".into(),
            wall_time_s: sweep.record_wall_time.then_some(elapsed),
        };
        match outcome {
            Ok(run) => {
                row.rms = run.rms;
                row.cnr = run.cnr;
                if let Some(r) = run.reconstruction() {
                    row.outer_iters = Some(r.outer_iters);
                    row.converged = Some(r.converged);
                }
            }
            Err(e) => row.status = format!("failed: {e}"),
        }
        row
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()?;
    let rows: Vec<SweepRow> = pool.install(|| cells.par_iter().map(run_cell).collect());
    let summary = summarize(cfg, &rows);
    Ok(SweepOutput { rows, summary })
}

/// Picks, per (delta, method), the weight with the lowest seed-averaged RMS
/// among weights whose runs all succeeded. Ties keep the earlier weight.
pub fn summarize(cfg: &RunConfig, rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &delta in &cfg.sweep.deltas {
        for &method in &cfg.sweep.methods {
            let mut best: Option<SummaryRow> = None;
            for lambda in cfg.sweep.lambdas(method, cfg.solver.lambda_reg) {
                let group: Vec<&SweepRow> = rows
                    .iter()
                    .filter(|r| r.delta == delta && r.method == method && r.lambda_reg == lambda)
                    .collect();
                if group.is_empty() || group.iter().any(|r| r.rms.is_none()) {
                    continue;
                }
                let n = group.len() as f64;
                let mean_rms = group.iter().filter_map(|r| r.rms).sum::<f64>() / n;
                let mean_cnr = group.iter().map(|r| r.cnr.unwrap_or(f64::NAN)).sum::<f64>() / n;
                if best.as_ref().is_none_or(|b| mean_rms < b.mean_rms) {
                    best = Some(SummaryRow {
                        delta,
                        snr_db: snr(delta),
                        method,
                        regularizer: group[0].regularizer.clone(),
                        best_lambda: lambda,
                        mean_rms,
                        mean_cnr,
                        seeds: group.len(),
                    });
                }
            }
            out.extend(best);
        }
    }
    out
}

fn metric_plot(summary: &[SummaryRow], methods: &[Method], metric: &str) -> Canvas {
    let series: Vec<Series> = methods
        .iter()
        .map(|&m| Series {
            name: m.to_string(),
            points: summary
                .iter()
                .filter(|r| r.method == m)
                .map(|r| {
                    (
                        r.delta,
                        if metric == "RMS" {
                            r.mean_rms
                        } else {
                            r.mean_cnr
                        },
                    )
                })
                .collect(),
        })
        .collect();
    line_plot(
        &format!("{metric} vs noise level"),
        "noise level delta",
        metric,
        &series,
        true,
    )
}

pub fn rms_plot(summary: &[SummaryRow], methods: &[Method]) -> Canvas {
    metric_plot(summary, methods, "RMS")
}

pub fn cnr_plot(summary: &[SummaryRow], methods: &[Method]) -> Canvas {
    metric_plot(summary, methods, "CNR")
}
