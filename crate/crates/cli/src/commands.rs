//! One function per subcommand. All of them read and write inside a single
//! output directory, and every artifact carries the config hash and seed.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mre_core::baselines::{NodalEstimate, NodalStatus};
use mre_core::fem::MassSign;
use mre_core::forward::ForceNoiseMask;
use mre_core::inverse::NoiseCovariance;
use mre_core::io::{
    read_dof_vector, read_element_field, write_dof_vector, write_element_field, Provenance,
};
use mre_core::metrics::{cnr, rms_error, CNR_FORMULA, RMS_FORMULA};
use mre_core::scenario::{run_method, Measurement, MethodOutput, Phantom};
use mre_core::{DisplacementField, ElasticityField, Method, RegionMasks, TriMesh};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::render::{render_field, Canvas};
use crate::sweep::{cnr_plot, rms_plot, run_sweep, SweepOutput};

pub const MESH_FILE: &str = "mesh.json";
pub const E_TRUE_FILE: &str = "e_true.csv";
pub const U_CLEAN_FILE: &str = "u_clean.csv";
pub const U_MEAS_FILE: &str = "u_meas.csv";
pub const FORCE_FILE: &str = "force.csv";
pub const SIMULATION_FILE: &str = "simulation.json";
pub const E_HAT_FILE: &str = "e_hat.csv";
pub const NODAL_FILE: &str = "nodal.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SUMMARY_FILE: &str = "sweep_summary.csv";

/// Resolved settings shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub jobs: usize,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn provenance(&self) -> Provenance {
        self.config.provenance()
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))
    }

    fn input(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingInput(p))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(open(path)?)?)
}

/// Writes `<stem>.pgm` and `<stem>.png`.
fn write_images(ctx: &Context, stem: &str, canvas: &Canvas) -> Result<()> {
    let comment = ctx.provenance().to_string();
    let pgm = ctx.path(&format!("{stem}.pgm"));
    fs::write(&pgm, canvas.to_pgm(Some(&comment))).map_err(|e| CliError::io(&pgm, e))?;
    let png = ctx.path(&format!("{stem}.png"));
    let mut w = create(&png)?;
    canvas.write_png(&mut w, Some(&comment))?;
    w.flush().map_err(|e| CliError::io(&png, e))
}

fn write_elements(ctx: &Context, name: &str, values: &[f64]) -> Result<()> {
    let path = ctx.path(name);
    let mut w = create(&path)?;
    write_element_field(&mut w, values, Some(&ctx.provenance()))?;
    w.flush().map_err(|e| CliError::io(&path, e))
}

fn write_dofs(ctx: &Context, name: &str, values: &[f64]) -> Result<()> {
    let path = ctx.path(name);
    let mut w = create(&path)?;
    write_dof_vector(&mut w, values, Some(&ctx.provenance()))?;
    w.flush().map_err(|e| CliError::io(&path, e))
}

fn load_mesh(ctx: &Context) -> Result<TriMesh> {
    let path = ctx.input(MESH_FILE)?;
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    Ok(TriMesh::from_json(&text)?)
}

fn load_elements(ctx: &Context, name: &str) -> Result<ElasticityField> {
    Ok(read_element_field(open(&ctx.input(name)?)?)?)
}

fn load_phantom(ctx: &Context) -> Result<Phantom> {
    let mesh = load_mesh(ctx)?;
    let e_true = load_elements(ctx, E_TRUE_FILE)?;
    let c = &ctx.config;
    Ok(Phantom::from_mesh(
        &c.phantom,
        mesh,
        e_true,
        &c.material,
        c.load_amplitude,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomInfo {
    pub config_hash: String,
    pub seed: u64,
    pub nodes: usize,
    pub elements: usize,
    pub inclusion_elements: usize,
    pub e_min: f64,
    pub e_max: f64,
    pub mass_sign: MassSign,
}

/// Builds the mesh and ground truth; writes `mesh.json`, `e_true.csv`,
/// `e_true.{pgm,png}` and `phantom.json`.
pub fn phantom(ctx: &Context) -> Result<PhantomInfo> {
    ctx.ensure_out()?;
    let c = &ctx.config;
    let ph = Phantom::new(&c.phantom, &c.material, c.load_amplitude)?;
    let mesh = ph.model.mesh();
    let path = ctx.path(MESH_FILE);
    fs::write(&path, mesh.to_json()?).map_err(|e| CliError::io(&path, e))?;
    write_elements(ctx, E_TRUE_FILE, ph.e_true.as_slice())?;
    write_images(
        ctx,
        "e_true",
        &render_field(mesh, ph.e_true.as_slice(), "100 kPa", None),
    )?;
    let prov = ctx.provenance();
    let info = PhantomInfo {
        config_hash: prov.config_hash,
        seed: prov.seed,
        nodes: mesh.node_count(),
        elements: mesh.element_count(),
        inclusion_elements: ph.masks.as_ref().map_or(0, |m| m.inclusion().len()),
        e_min: ph.e_true.min(),
        e_max: ph.e_true.max(),
        mass_sign: c.material.mass_sign,
    };
    write_json(&ctx.path("phantom.json"), &info)?;
    Ok(info)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationInfo {
    pub config_hash: String,
    pub seed: u64,
    pub mass_sign: MassSign,
    /// Requested relative noise level, when given as a level or SNR.
    pub target_delta: Option<f64>,
    pub realized_delta: f64,
    /// `(lateral, axial)` displacement noise std (m).
    pub sigma_n: [f64; 2],
    pub sigma_w: f64,
    pub force_mask: ForceNoiseMask,
}

/// Solves the forward problem on the stored phantom and adds seeded noise;
/// writes the clean and noisy displacements, the measured force and
/// `simulation.json`.
pub fn simulate(ctx: &Context) -> Result<SimulationInfo> {
    let ph = load_phantom(ctx)?;
    let settings = ctx.config.noise.settings()?;
    let u = ph.clean_displacement()?;
    let m = ph.measure(&u, &settings, ctx.config.seed)?;
    write_dofs(ctx, U_CLEAN_FILE, u.as_slice())?;
    write_dofs(ctx, U_MEAS_FILE, m.u_meas.as_slice())?;
    write_dofs(ctx, FORCE_FILE, &m.f_meas)?;
    let prov = ctx.provenance();
    let info = SimulationInfo {
        config_hash: prov.config_hash,
        seed: prov.seed,
        mass_sign: ctx.config.material.mass_sign,
        target_delta: match settings.displacement {
            mre_core::forward::DisplacementNoise::Level(d) => Some(d),
            mre_core::forward::DisplacementNoise::PerAxis { .. } => None,
        },
        realized_delta: m.realized_delta,
        sigma_n: m.covariance.sigma_n,
        sigma_w: m.covariance.sigma_w,
        force_mask: settings.force_mask,
    };
    write_json(&ctx.path(SIMULATION_FILE), &info)?;
    Ok(info)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalCounts {
    pub full: usize,
    pub shear_only: usize,
    pub invalid: usize,
}

/// Summary written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultInfo {
    pub config_hash: String,
    pub seed: u64,
    pub method: Method,
    pub mass_sign: MassSign,
    pub lambda_reg: Option<f64>,
    pub converged: Option<bool>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Vec<usize>,
    pub objective_trace: Vec<f64>,
    pub relative_changes: Vec<f64>,
    pub rms: Option<f64>,
    pub cnr: Option<f64>,
    pub nodal: Option<NodalCounts>,
}

/// Runs `method` on the stored simulation. Element methods write
/// `e_hat.csv` and `e_hat.{pgm,png}`; the nodal method writes `nodal.csv`
/// and a shear-modulus map `nodal_mu.{pgm,png}`.
pub fn reconstruct(ctx: &Context, method: Method) -> Result<ResultInfo> {
    let ph = load_phantom(ctx)?;
    let sim: SimulationInfo = read_json(&ctx.input(SIMULATION_FILE)?)?;
    let u_meas = DisplacementField::new(read_dof_vector(open(&ctx.input(U_MEAS_FILE)?)?)?)?;
    let f_meas = read_dof_vector(open(&ctx.input(FORCE_FILE)?)?)?;
    let m = Measurement {
        u_meas,
        f_meas,
        covariance: NoiseCovariance {
            sigma_w: sim.sigma_w,
            sigma_n: sim.sigma_n,
        },
        realized_delta: sim.realized_delta,
        seed: sim.seed,
    };
    let c = &ctx.config;
    let run = run_method(&ph, &m, method, &c.solver, &c.nodal)?;
    let prov = ctx.provenance();
    let mut info = ResultInfo {
        config_hash: prov.config_hash,
        seed: prov.seed,
        method,
        mass_sign: c.material.mass_sign,
        lambda_reg: None,
        converged: None,
        outer_iters: None,
        inner_iters: Vec::new(),
        objective_trace: Vec::new(),
        relative_changes: Vec::new(),
        rms: run.rms,
        cnr: run.cnr,
        nodal: None,
    };
    let mesh = ph.model.mesh();
    match &run.output {
        MethodOutput::Element(r) => {
            info.lambda_reg = Some(r.config.lambda_reg);
            info.converged = Some(r.converged);
            info.outer_iters = Some(r.outer_iters);
            info.inner_iters = r.inner_iters.clone();
            info.objective_trace = r.objective_trace.clone();
            info.relative_changes = r.relative_changes.clone();
            write_elements(ctx, E_HAT_FILE, r.e_hat.as_slice())?;
            write_images(
                ctx,
                "e_hat",
                &render_field(mesh, r.e_hat.as_slice(), "100 kPa", None),
            )?;
        }
        MethodOutput::Nodal { estimates } => {
            info.nodal = Some(count_statuses(estimates));
            write_nodal(ctx, mesh, estimates)?;
            let per_element = nodal_to_elements(mesh, estimates);
            write_images(
                ctx,
                "nodal_mu",
                &render_field(mesh, &per_element, "mu kPa", None),
            )?;
        }
    }
    write_json(&ctx.path("result.json"), &info)?;
    Ok(info)
}

fn count_statuses(estimates: &[NodalEstimate]) -> NodalCounts {
    let count = |s: NodalStatus| estimates.iter().filter(|e| e.status == s).count();
    NodalCounts {
        full: count(NodalStatus::Full),
        shear_only: count(NodalStatus::ShearOnly),
        invalid: count(NodalStatus::Invalid),
    }
}

#[derive(Serialize)]
struct NodalRow {
    node_id: usize,
    x: f64,
    y: f64,
    mu_pa: f64,
    lambda_plus_mu_pa: f64,
    condition: f64,
    status: NodalStatus,
}

fn write_nodal(ctx: &Context, mesh: &TriMesh, estimates: &[NodalEstimate]) -> Result<()> {
    let path = ctx.path(NODAL_FILE);
    let mut w = create(&path)?;
    writeln!(w, "# {}", ctx.provenance()).map_err(|e| CliError::io(&path, e))?;
    let mut out = csv::Writer::from_writer(w);
    for (node_id, (est, p)) in estimates.iter().zip(mesh.nodes()).enumerate() {
        out.serialize(NodalRow {
            node_id,
            x: p[0],
            y: p[1],
            mu_pa: est.mu,
            lambda_plus_mu_pa: est.lambda_plus_mu,
            condition: est.condition,
            status: est.status,
        })?;
    }
    out.flush().map_err(|e| CliError::io(&path, e))
}

/// Mean of the finite nodal shear moduli of each element, in kPa; NaN when
/// no vertex has an estimate.
fn nodal_to_elements(mesh: &TriMesh, estimates: &[NodalEstimate]) -> Vec<f64> {
    mesh.elements()
        .iter()
        .map(|tri| {
            let vals: Vec<f64> = tri
                .iter()
                .map(|&n| estimates[n].mu)
                .filter(|v| v.is_finite())
                .collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64 / 1e3
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub config_hash: String,
    pub seed: u64,
    pub rms: f64,
    pub cnr: Option<f64>,
    pub rms_formula: String,
    pub cnr_formula: String,
}

/// Scores `e_hat.csv` against `e_true.csv`; writes `metrics.json`.
pub fn evaluate(ctx: &Context) -> Result<Metrics> {
    let mesh = load_mesh(ctx)?;
    let e_true = load_elements(ctx, E_TRUE_FILE)?;
    let e_hat = load_elements(ctx, E_HAT_FILE)?;
    let rms = rms_error(e_hat.as_slice(), e_true.as_slice())?;
    let cnr_value = match RegionMasks::from_phantom(&mesh, &ctx.config.phantom) {
        Ok(masks) => Some(cnr(e_hat.as_slice(), &masks)?),
        Err(_) => None,
    };
    let prov = ctx.provenance();
    let metrics = Metrics {
        config_hash: prov.config_hash,
        seed: prov.seed,
        rms,
        cnr: cnr_value,
        rms_formula: RMS_FORMULA.into(),
        cnr_formula: CNR_FORMULA.into(),
    };
    write_json(&ctx.path("metrics.json"), &metrics)?;
    Ok(metrics)
}

fn write_csv<T: Serialize>(ctx: &Context, name: &str, rows: &[T]) -> Result<()> {
    let path = ctx.path(name);
    let mut w = create(&path)?;
    let header = format!(
        "# {}\n# rms = {}\n# cnr = {}\n",
        ctx.provenance(),
        RMS_FORMULA,
        CNR_FORMULA
    );
    w.write_all(header.as_bytes())
        .map_err(|e| CliError::io(&path, e))?;
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| CliError::io(&path, e))
}

/// Runs the configured grid; writes `sweep.csv`, `sweep_summary.csv` and
/// the `rms_vs_delta` / `cnr_vs_delta` plots.
pub fn sweep(ctx: &Context) -> Result<SweepOutput> {
    ctx.ensure_out()?;
    let out = run_sweep(&ctx.config, ctx.jobs)?;
    write_csv(ctx, SWEEP_FILE, &out.rows)?;
    write_csv(ctx, SUMMARY_FILE, &out.summary)?;
    let methods = &ctx.config.sweep.methods;
    write_images(ctx, "rms_vs_delta", &rms_plot(&out.summary, methods))?;
    write_images(ctx, "cnr_vs_delta", &cnr_plot(&out.summary, methods))?;
    Ok(out)
}
