//! Job execution and artifact writing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fdlm_core::analysis::{
    estimate_projection_constant, estimate_stokes_infsup, estimate_zeta, infsup_text, interpolation_control,
    kernel_coercivity, spatial_convergence, temporal_convergence, InfSupReport, Manufactured,
};
use fdlm_core::fespace::{make_pressure_space, make_velocity_space, FeSpace};
use fdlm_core::model::{quarter_container, quarter_ring};
use fdlm_core::saddle::{build_system, StepCoefficients, StepRhs};
use fdlm_core::timestep::{energy, run, Energy, SchemeConfig, StepReport, SystemState};
use fdlm_core::{FdlmError, Result};

use crate::config::{Job, RunConfig};
use crate::vtk::write_vtk_snapshot;

pub const ENERGY_HEADER: &str =
    "n,t,Pi_total,Pi_ratio,kinetic_fluid,kinetic_solid,elastic,div_residual,constraint_residual";

pub fn energy_row(n: usize, t: f64, e: &Energy, pi0: f64, div: f64, constraint: f64) -> String {
    let ratio = if pi0 > 0.0 { e.total / pi0 } else { 1.0 };
    format!(
        "{n},{t:.16e},{:.16e},{ratio:.16e},{:.16e},{:.16e},{:.16e},{div:.16e},{constraint:.16e}",
        e.total, e.kinetic_fluid, e.kinetic_solid, e.elastic
    )
}

/// Where a job stopped; reported in the manifest on failure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Setup,
    Compute,
    Output,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Setup => "setup",
            Stage::Compute => "compute",
            Stage::Output => "output",
        }
    }
}

pub struct Outcome {
    pub stage: Stage,
    pub artifacts: Vec<String>,
    pub result: Result<()>,
}

struct Ctx<'a> {
    out: &'a Path,
    quiet: bool,
    stage: Stage,
    artifacts: Vec<String>,
}

impl Ctx<'_> {
    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, body).map_err(|e| FdlmError::io(&path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn say(&self, msg: &str) {
        if !self.quiet {
            println!("{msg}");
        }
    }
}

/// Runs the configured job, writing artifacts into `out` (which must exist).
pub fn execute(cfg: &RunConfig, out: &Path, quiet: bool) -> Outcome {
    let mut ctx = Ctx { out, quiet, stage: Stage::Setup, artifacts: Vec::new() };
    let result = match cfg.job {
        Job::Benchmark => benchmark(cfg, &mut ctx),
        Job::TemporalConvergence => temporal(cfg, &mut ctx),
        Job::SpatialConvergence => spatial(cfg, &mut ctx),
        Job::InfSup => infsup(cfg, &mut ctx),
    };
    Outcome { stage: ctx.stage, artifacts: ctx.artifacts, result }
}

fn benchmark(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let setup = cfg.ring_setup();
    let disc = setup.discretization()?;
    let sc: SchemeConfig = cfg.scheme;
    let state = setup.initial_state(&disc, &sc)?;
    let e0 = energy(&disc, &state, &cfg.params, sc.dt);
    let pi0 = e0.total;
    let mut csv = format!("{ENERGY_HEADER}\n");
    let _ = writeln!(csv, "{}", energy_row(0, 0.0, &e0, pi0, 0.0, 0.0));
    let stride = cfg.snapshot_stride;
    let n_steps = sc.n_steps();
    if stride > 0 {
        write_vtk_snapshot(&disc, &state, ctx.out, "snapshot_00000")?;
        ctx.artifacts.push("snapshot_00000_{fluid,solid}.vtk".into());
    }
    ctx.stage = Stage::Compute;
    ctx.say(&format!("{} steps of {} with dt = {}", n_steps, sc.scheme.name(), sc.dt));
    let mut snaps = Vec::new();
    let mut worst_defect = f64::NEG_INFINITY;
    let observe = |st: &SystemState, r: &StepReport| -> Result<()> {
        let _ = writeln!(
            csv,
            "{}",
            energy_row(r.n, r.t, &r.energy, pi0, r.residuals.divergence_rel, r.residuals.constraint_rel)
        );
        worst_defect = worst_defect.max(r.defect);
        if stride > 0 && (r.n.is_multiple_of(stride) || r.n == n_steps) {
            let stem = format!("snapshot_{:05}", r.n);
            write_vtk_snapshot(&disc, st, ctx.out, &stem)?;
            snaps.push(format!("{stem}_{{fluid,solid}}.vtk"));
        }
        if !ctx.quiet && (r.n.is_multiple_of(10) || r.n == n_steps) {
            println!("  step {:>5}  t = {:.4}  Pi/Pi0 = {:.6}", r.n, r.t, if pi0 > 0.0 { r.energy.total / pi0 } else { 1.0 });
        }
        Ok(())
    };
    let end = run(&disc, state, &cfg.params, &sc, observe);
    ctx.artifacts.extend(snaps);
    // the trace up to a failure is still useful
    ctx.stage = Stage::Output;
    ctx.write("energy.csv", &csv)?;
    ctx.stage = Stage::Compute;
    end?;
    ctx.stage = Stage::Output;
    ctx.say(&format!("largest per-step energy balance {worst_defect:.3e} (Pi0 = {pi0:.6e})"));
    Ok(())
}

fn temporal(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let setup = cfg.ring_setup();
    ctx.stage = Stage::Compute;
    let study = temporal_convergence(&setup, &cfg.schemes, &cfg.dts, cfg.reference)?;
    ctx.stage = Stage::Output;
    ctx.write("rates.csv", &study.table.to_csv())?;
    let text = format!(
        "{}reference: {} with dt = {:e}\nworst relative residuals: divergence {:.3e}, constraint {:.3e}\n",
        study.table.to_text(),
        cfg.reference.name(),
        study.dt_ref,
        study.worst_residuals.divergence_rel,
        study.worst_residuals.constraint_rel
    );
    ctx.write("rates.txt", &text)?;
    ctx.say(&text);
    Ok(())
}

fn spatial(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let problem = Manufactured { form: cfg.space.form, ..Manufactured::default() };
    ctx.stage = Stage::Compute;
    let (table, _) = spatial_convergence(&problem, cfg.n_cells, cfg.levels, cfg.space)?;
    let interp = interpolation_control(&problem, cfg.n_cells, cfg.levels, cfg.space)?;
    ctx.stage = Stage::Output;
    ctx.write("rates.csv", &table.to_csv())?;
    ctx.write("interpolation.csv", &interp.to_csv())?;
    let text = format!("{}\n{}", table.to_text(), interp.to_text());
    ctx.write("rates.txt", &text)?;
    ctx.say(&text);
    Ok(())
}

fn infsup(cfg: &RunConfig, ctx: &mut Ctx) -> Result<()> {
    let fluid = Arc::new(quarter_container(cfg.n_cells));
    let solid = Arc::new(quarter_ring(cfg.h_s));
    ctx.stage = Stage::Compute;
    let mut reports = Vec::new();
    let v = make_velocity_space(fluid.clone(), cfg.space.velocity);
    let q = make_pressure_space(fluid, cfg.space.pressure);
    reports.push(estimate_stokes_infsup(&v, &q)?);
    let s = FeSpace::lagrange(solid.clone(), cfg.space.deg_s, 2)?;
    let l = FeSpace::lagrange(solid.clone(), cfg.space.deg_lambda, 2)?;
    reports.push(estimate_zeta(&l, &s, cfg.space.form)?);
    if cfg.space.deg_s == 1 {
        let rich = FeSpace::lagrange(solid, 2, 2)?;
        reports.push(estimate_projection_constant(&s, &rich)?);
    }
    let setup = cfg.ring_setup();
    let disc = setup.discretization()?;
    let state = setup.initial_state(&disc, &cfg.scheme)?;
    let coeffs = StepCoefficients::backward_euler(&cfg.params, cfg.scheme.dt);
    let rhs = StepRhs { f: vec![0.0; disc.n_u()], g: vec![0.0; disc.n_x()], d: vec![0.0; disc.n_lambda()] };
    let sys = build_system(&disc, &cfg.params, coeffs, &state.u, &state.x, &rhs)?;
    let alpha = kernel_coercivity(&sys, &disc.h1_u, &disc.h1_s)?;
    reports.push(InfSupReport {
        label: "kernel_coercivity".into(),
        estimate: alpha,
        mesh_sizes: vec![disc.fluid_mesh.max_diameter(), disc.solid_mesh.max_diameter()],
        n_dofs: disc.n_u() + disc.n_x(),
        eigen_residual: 0.0,
    });
    ctx.stage = Stage::Output;
    let mut csv = format!("{}\n", InfSupReport::CSV_HEADER);
    for r in &reports {
        let _ = writeln!(csv, "{}", r.csv_row());
    }
    ctx.write("infsup.csv", &csv)?;
    let text = infsup_text(&reports);
    ctx.write("infsup.txt", &text)?;
    ctx.say(&text);
    Ok(())
}

pub fn manifest(cfg: &RunConfig, outcome: &Outcome, wall: f64, out: &Path) -> String {
    let mut s = format!("fdlm {}\n", env!("CARGO_PKG_VERSION"));
    match &outcome.result {
        Ok(()) => s.push_str("status = ok\n"),
        Err(e) => {
            let kind = if e.is_model_error() { "model" } else { "runtime" };
            let _ = writeln!(s, "status = failed\nfailure = {kind}\nstage = {}\nerror = {e}", outcome.stage.name());
        }
    }
    let _ = writeln!(s, "wall_time_s = {wall:.3}");
    let _ = writeln!(s, "out_dir = {}", out.display());
    let _ = writeln!(s, "artifacts = {}", outcome.artifacts.join(" "));
    s.push_str("\n[config]\n");
    s.push_str(&cfg.echo());
    s
}

pub fn default_out_dir() -> PathBuf {
    PathBuf::from("fdlm_out")
}
