//! Time advancing: semi-implicit backward Euler, BDF2 and fully implicit
//! backward Euler (Picard iteration), with the energy monitor and the
//! per-step discrete energy balance.

use crate::error::{FdlmError, Result};
use crate::fespace::DiscreteField;
use crate::forms::PhysParams;
use crate::model::Discretization;
use crate::saddle::{build_system, Residuals, SaddleSolution, StepCoefficients, StepRhs};
use crate::sparse::SparseMat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    BeImplicit,
    BeSemi,
    Bdf2,
    /// BDF2 with the coupling position and convecting velocity extrapolated
    /// as `2 q^n - q^{n-1}` instead of frozen at level `n`.
    Bdf2Extrapolated,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::BeImplicit => "BE_implicit",
            Scheme::BeSemi => "BE_semi",
            Scheme::Bdf2 => "BDF2",
            Scheme::Bdf2Extrapolated => "BDF2_extrap",
        }
    }

    pub fn is_bdf2(self) -> bool {
        matches!(self, Scheme::Bdf2 | Scheme::Bdf2Extrapolated)
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "BE_implicit" => Some(Scheme::BeImplicit),
            "BE_semi" => Some(Scheme::BeSemi),
            "BDF2" => Some(Scheme::Bdf2),
            "BDF2_extrap" => Some(Scheme::Bdf2Extrapolated),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_end: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64, t_end: f64) -> SchemeConfig {
        SchemeConfig { scheme, dt, t_end, fp_tol: 1e-10, fp_max_iter: 50 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FdlmError::InvalidInput(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.t_end >= self.dt * (1.0 - 1e-12)) || !self.t_end.is_finite() {
            return bad(format!("T must be at least dt (got T = {}, dt = {})", self.t_end, self.dt));
        }
        if !(self.fp_tol > 0.0) {
            return bad("fixed-point tolerance must be positive".into());
        }
        if self.fp_max_iter == 0 {
            return bad("fixed-point iteration limit must be at least 1".into());
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end / self.dt) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Clone, Debug)]
pub struct SystemState {
    pub n: usize,
    pub t: f64,
    pub u: DiscreteField,
    pub p: DiscreteField,
    pub x: DiscreteField,
    pub lambda: DiscreteField,
    pub x_prev: DiscreteField,
    /// Previous velocity (BDF2 only, after the first step).
    pub u_prev: Option<DiscreteField>,
    /// Solid velocity variable of BDF2 and its previous value.
    pub w: Option<DiscreteField>,
    pub w_prev: Option<DiscreteField>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Energy {
    pub kinetic_fluid: f64,
    pub kinetic_solid: f64,
    pub elastic: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct StepReport {
    pub n: usize,
    pub t: f64,
    pub energy: Energy,
    /// Left-hand side of the discrete energy inequality of the scheme used
    /// (nonpositive up to solver error).
    pub defect: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    pub scheme: Scheme,
}

fn lin(terms: &[(f64, &[f64])]) -> Vec<f64> {
    let n = terms[0].1.len();
    (0..n).map(|i| terms.iter().map(|(c, v)| c * v[i]).sum()).collect()
}

/// `|q1|^2 + |2q1 - q0|^2 - |q0|^2 - |2q0 - qm|^2 + |q1 - 2q0 + qm|^2` in
/// the norm of `m`.
fn shifted_norm_sum(m: &SparseMat, q1: &[f64], q0: &[f64], qm: &[f64]) -> f64 {
    m.quad_form(q1) + m.quad_form(&lin(&[(2.0, q1), (-1.0, q0)]))
        - m.quad_form(q0)
        - m.quad_form(&lin(&[(2.0, q0), (-1.0, qm)]))
        + m.quad_form(&lin(&[(1.0, q1), (-2.0, q0), (1.0, qm)]))
}

/// Sets up the state at `t = 0`. `x_prev = x0 - dt x1`; BDF2 also stores
/// `w = x1`.
pub fn initialize(
    disc: &Discretization,
    u0: DiscreteField,
    x0: DiscreteField,
    x1: DiscreteField,
    cfg: &SchemeConfig,
) -> Result<SystemState> {
    cfg.validate()?;
    if u0.coeffs.len() != disc.n_u() || x0.coeffs.len() != disc.n_x() || x1.coeffs.len() != disc.n_x() {
        return Err(FdlmError::InvalidInput("initial data does not match the spaces".into()));
    }
    if u0.coeffs.iter().zip(disc.v_space.constrained_mask()).any(|(&v, &m)| m && v != 0.0) {
        return Err(FdlmError::InvalidInput("initial velocity violates the wall/symmetry constraints".into()));
    }
    let off_axis = |x: &DiscreteField| {
        x.coeffs.iter().zip(disc.s_space.constrained_mask()).any(|(&v, &m)| m && v.abs() > 1e-12)
    };
    if off_axis(&x0) || off_axis(&x1) {
        return Err(FdlmError::InvalidInput("initial solid data leaves a symmetry line".into()));
    }
    let mut x0 = x0;
    let mut x1 = x1;
    for (i, &m) in disc.s_space.constrained_mask().iter().enumerate() {
        if m {
            x0.coeffs[i] = 0.0;
            x1.coeffs[i] = 0.0;
        }
    }
    let x_prev = disc.position(lin(&[(1.0, &x0.coeffs), (-cfg.dt, &x1.coeffs)]));
    let w = cfg.scheme.is_bdf2().then(|| x1.clone());
    Ok(SystemState {
        n: 0,
        t: 0.0,
        u: u0,
        p: disc.pressure(vec![0.0; disc.n_p()]),
        x: x0,
        lambda: disc.multiplier(vec![0.0; disc.n_lambda()]),
        x_prev,
        u_prev: None,
        w,
        w_prev: None,
    })
}

/// `Pi = rho_f/2 |u|^2 + delta_rho/2 |(X - X_prev)/dt|^2_B + E(X)`.
pub fn energy(disc: &Discretization, state: &SystemState, params: &PhysParams, dt: f64) -> Energy {
    let v = lin(&[(1.0 / dt, &state.x.coeffs), (-1.0 / dt, &state.x_prev.coeffs)]);
    let kinetic_fluid = 0.5 * params.rho_f * disc.m_u.quad_form(&state.u.coeffs);
    let kinetic_solid = 0.5 * params.delta_rho * disc.m_s.quad_form(&v);
    let elastic = 0.5 * params.kappa * disc.k_s.quad_form(&state.x.coeffs);
    Energy { kinetic_fluid, kinetic_solid, elastic, total: kinetic_fluid + kinetic_solid + elastic }
}

fn be_rhs(state: &SystemState, params: &PhysParams, dt: f64) -> StepRhs {
    let (u, x, xp) = (&state.u.coeffs, &state.x.coeffs, &state.x_prev.coeffs);
    StepRhs {
        f: lin(&[(params.rho_f / dt, u)]),
        g: lin(&[(2.0 * params.delta_rho / (dt * dt), x), (-params.delta_rho / (dt * dt), xp)]),
        d: lin(&[(-1.0 / dt, x)]),
    }
}

/// Left-hand side of the backward Euler energy inequality.
fn be_defect(disc: &Discretization, params: &PhysParams, dt: f64, visc: &SparseMat, old: &SystemState, u1: &[f64], x1: &[f64]) -> f64 {
    let (u0, x0, xm) = (&old.u.coeffs, &old.x.coeffs, &old.x_prev.coeffs);
    let v1 = lin(&[(1.0 / dt, x1), (-1.0 / dt, x0)]);
    let v0 = lin(&[(1.0 / dt, x0), (-1.0 / dt, xm)]);
    params.rho_f / (2.0 * dt) * (disc.m_u.quad_form(u1) - disc.m_u.quad_form(u0))
        + visc.quad_form(u1)
        + params.delta_rho / (2.0 * dt) * (disc.m_s.quad_form(&v1) - disc.m_s.quad_form(&v0))
        + params.kappa / (2.0 * dt) * (disc.k_s.quad_form(x1) - disc.k_s.quad_form(x0))
}

fn finish(
    disc: &Discretization,
    cfg: &SchemeConfig,
    old: &SystemState,
    sol: &SaddleSolution,
    x_new: Vec<f64>,
) -> SystemState {
    SystemState {
        n: old.n + 1,
        t: (old.n + 1) as f64 * cfg.dt,
        u: disc.velocity(sol.u.clone()),
        p: disc.pressure(sol.p.clone()),
        x: disc.position(x_new),
        lambda: disc.multiplier(sol.lambda.clone()),
        x_prev: old.x.clone(),
        u_prev: None,
        w: None,
        w_prev: None,
    }
}

/// One semi-implicit backward Euler step: convection and coupling frozen at
/// `(u^n, X^n)`. The solved solid unknown is `X^{n+1}/dt`.
pub fn step_semi_implicit(
    disc: &Discretization,
    state: &SystemState,
    params: &PhysParams,
    cfg: &SchemeConfig,
) -> Result<(SystemState, StepReport)> {
    let dt = cfg.dt;
    let coeffs = StepCoefficients::backward_euler(params, dt);
    let rhs = be_rhs(state, params, dt);
    let sys = build_system(disc, params, coeffs, &state.u, &state.x, &rhs)?;
    let sol = sys.solve()?;
    let x_new = lin(&[(dt, &sol.x)]);
    let visc = disc.viscous(&state.x);
    let defect = be_defect(disc, params, dt, &visc, state, &sol.u, &x_new);
    let next = finish(disc, cfg, state, &sol, x_new);
    let report = StepReport {
        n: next.n,
        t: next.t,
        energy: energy(disc, &next, params, dt),
        defect,
        residuals: sol.residuals,
        iterations: 1,
        scheme: Scheme::BeSemi,
    };
    Ok((next, report))
}

/// One BDF2 step with the solid velocity variable `w`. The first step is a
/// semi-implicit backward Euler step that seeds the second history level.
/// Coupling and convection are frozen at level `n` for [`Scheme::Bdf2`] and
/// extrapolated for [`Scheme::Bdf2Extrapolated`].
pub fn step_bdf2(
    disc: &Discretization,
    state: &SystemState,
    params: &PhysParams,
    cfg: &SchemeConfig,
) -> Result<(SystemState, StepReport)> {
    let dt = cfg.dt;
    let w0 = state
        .w
        .as_ref()
        .ok_or_else(|| FdlmError::InvalidInput("BDF2 state needs the solid velocity variable".into()))?;
    let (Some(u_m), Some(w_m)) = (&state.u_prev, &state.w_prev) else {
        let (mut next, report) = step_semi_implicit(disc, state, params, cfg)?;
        let w1 = lin(&[(1.0 / dt, &next.x.coeffs), (-1.0 / dt, &state.x.coeffs)]);
        next.u_prev = Some(state.u.clone());
        next.w_prev = Some(w0.clone());
        next.w = Some(disc.position(w1));
        return Ok((next, report));
    };
    let (u0, x0, xm) = (&state.u.coeffs, &state.x.coeffs, &state.x_prev.coeffs);
    let coeffs = StepCoefficients::bdf2(params, dt);
    let d = lin(&[(-2.0 / dt, x0), (0.5 / dt, xm)]);
    let k = params.delta_rho / (2.0 * dt);
    let rhs = StepRhs {
        f: lin(&[(2.0 * params.rho_f / dt, u0), (-0.5 * params.rho_f / dt, &u_m.coeffs)]),
        g: lin(&[(4.0 * k, &w0.coeffs), (-k, &w_m.coeffs), (-3.0 * k, &d)]),
        d,
    };
    let extrapolate = cfg.scheme == Scheme::Bdf2Extrapolated;
    let (u_bar, x_bar) = if extrapolate {
        (disc.velocity(lin(&[(2.0, u0), (-1.0, &u_m.coeffs)])), disc.position(lin(&[(2.0, x0), (-1.0, xm)])))
    } else {
        (state.u.clone(), state.x.clone())
    };
    let sys = build_system(disc, params, coeffs, &u_bar, &x_bar, &rhs)?;
    let sol = sys.solve()?;
    let x_new = lin(&[(2.0 * dt / 3.0, &sol.x)]);
    let w_new = lin(&[(1.0, &sol.x), (1.0, &rhs.d)]);
    let visc = disc.viscous(&x_bar);
    let defect = params.rho_f / (4.0 * dt) * shifted_norm_sum(&disc.m_u, &sol.u, u0, &u_m.coeffs)
        + visc.quad_form(&sol.u)
        + params.delta_rho / (4.0 * dt) * shifted_norm_sum(&disc.m_s, &w_new, &w0.coeffs, &w_m.coeffs)
        + params.kappa / (4.0 * dt) * shifted_norm_sum(&disc.k_s, &x_new, x0, xm);
    let mut next = finish(disc, cfg, state, &sol, x_new);
    next.u_prev = Some(state.u.clone());
    next.w_prev = Some(w0.clone());
    next.w = Some(disc.position(w_new));
    let report = StepReport {
        n: next.n,
        t: next.t,
        energy: energy(disc, &next, params, dt),
        defect,
        residuals: sol.residuals,
        iterations: 1,
        scheme: cfg.scheme,
    };
    Ok((next, report))
}

/// One fully implicit backward Euler step: Picard iteration on the coupling
/// position and the convecting velocity.
pub fn step_implicit_be(
    disc: &Discretization,
    state: &SystemState,
    params: &PhysParams,
    cfg: &SchemeConfig,
) -> Result<(SystemState, StepReport)> {
    let dt = cfg.dt;
    let coeffs = StepCoefficients::backward_euler(params, dt);
    let rhs = be_rhs(state, params, dt);
    let mut u_k = state.u.clone();
    let mut x_k = state.x.clone();
    let mut last = f64::INFINITY;
    for it in 1..=cfg.fp_max_iter {
        let sys = build_system(disc, params, coeffs, &u_k, &x_k, &rhs)?;
        let sol = sys.solve()?;
        let x_new = lin(&[(dt, &sol.x)]);
        let du = lin(&[(1.0, &sol.u), (-1.0, &u_k.coeffs)]);
        let dx = lin(&[(1.0, &x_new), (-1.0, &x_k.coeffs)]);
        let diff = disc.h1_norm_x(&dx) + disc.h1_norm_u(&du);
        let scale = disc.h1_norm_x(&x_new) + disc.h1_norm_u(&sol.u);
        last = if scale > 0.0 { diff / scale } else { diff };
        if diff <= cfg.fp_tol * scale {
            let visc = disc.viscous(&x_k);
            let defect = be_defect(disc, params, dt, &visc, state, &sol.u, &x_new);
            let next = finish(disc, cfg, state, &sol, x_new);
            let report = StepReport {
                n: next.n,
                t: next.t,
                energy: energy(disc, &next, params, dt),
                defect,
                residuals: sol.residuals,
                iterations: it,
                scheme: Scheme::BeImplicit,
            };
            return Ok((next, report));
        }
        u_k = disc.velocity(sol.u);
        x_k = disc.position(x_new);
    }
    Err(FdlmError::NoConvergence { iterations: cfg.fp_max_iter, residual: last })
}

/// Advances one step with the configured scheme.
pub fn step(
    disc: &Discretization,
    state: &SystemState,
    params: &PhysParams,
    cfg: &SchemeConfig,
) -> Result<(SystemState, StepReport)> {
    match cfg.scheme {
        Scheme::BeSemi => step_semi_implicit(disc, state, params, cfg),
        Scheme::Bdf2 | Scheme::Bdf2Extrapolated => step_bdf2(disc, state, params, cfg),
        Scheme::BeImplicit => step_implicit_be(disc, state, params, cfg),
    }
}

/// Runs `cfg.n_steps()` steps, calling `observe` after each one.
pub fn run(
    disc: &Discretization,
    mut state: SystemState,
    params: &PhysParams,
    cfg: &SchemeConfig,
    mut observe: impl FnMut(&SystemState, &StepReport) -> Result<()>,
) -> Result<SystemState> {
    for _ in 0..cfg.n_steps() {
        let (next, report) = step(disc, &state, params, cfg)?;
        observe(&next, &report)?;
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::RingSetup;
    use crate::forms::PhysParams;

    fn small() -> RingSetup {
        RingSetup { n_cells: 4, h_s: 0.125, ..RingSetup::energy_benchmark(4) }
    }

    #[test]
    fn scheme_names_round_trip_and_step_count() {
        for s in [Scheme::BeImplicit, Scheme::BeSemi, Scheme::Bdf2, Scheme::Bdf2Extrapolated] {
            assert_eq!(Scheme::parse(s.name()), Some(s));
        }
        assert_eq!(Scheme::parse("be_semi"), None);
        assert_eq!(SchemeConfig::new(Scheme::BeSemi, 0.1, 2.0).n_steps(), 20);
        assert_eq!(SchemeConfig::new(Scheme::BeSemi, 0.3, 1.0).n_steps(), 4);
        assert!(SchemeConfig::new(Scheme::BeSemi, 0.0, 1.0).validate().is_err());
        assert!(SchemeConfig::new(Scheme::BeSemi, 0.5, 0.1).validate().is_err());
    }

    #[test]
    fn identity_map_energy_is_kappa_times_area() {
        let s = small();
        let d = s.discretization().unwrap();
        let cfg = SchemeConfig::new(Scheme::BeSemi, 0.1, 1.0);
        let x0 = d.position(d.s_space.interpolate(|p| p));
        let st = initialize(&d, d.velocity(vec![0.0; d.n_u()]), x0, d.position(vec![0.0; d.n_x()]), &cfg).unwrap();
        let e = energy(&d, &st, &s.params, cfg.dt);
        let area = d.solid_mesh.area();
        assert!((e.elastic - s.params.kappa * area).abs() < 1e-12);
        assert_eq!(e.kinetic_fluid, 0.0);
        assert_eq!(e.kinetic_solid, 0.0);
    }

    #[test]
    fn collapsed_solid_at_rest_stays_at_rest() {
        let s = small();
        let d = s.discretization().unwrap();
        for scheme in [Scheme::BeSemi, Scheme::Bdf2, Scheme::Bdf2Extrapolated, Scheme::BeImplicit] {
            let cfg = SchemeConfig::new(scheme, 0.1, 0.3);
            // the only point map compatible with both symmetry axes
            let x0 = d.position(d.s_space.constant([0.0, 0.0]));
            let st = initialize(&d, d.velocity(vec![0.0; d.n_u()]), x0.clone(), d.position(vec![0.0; d.n_x()]), &cfg).unwrap();
            let end = run(&d, st, &s.params, &cfg, |_, r| {
                assert!(r.energy.total.abs() < 1e-20 && r.defect.abs() < 1e-20);
                Ok(())
            })
            .unwrap();
            assert!(end.u.coeffs.iter().all(|v| v.abs() < 1e-12));
            assert!(end.lambda.coeffs.iter().all(|v| v.abs() < 1e-12));
            assert!(end.x.coeffs.iter().zip(&x0.coeffs).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn constrained_initial_velocity_rejected() {
        let s = small();
        let d = s.discretization().unwrap();
        let cfg = SchemeConfig::new(Scheme::BeSemi, 0.1, 1.0);
        let u0 = d.velocity(d.v_space.constant([1.0, 1.0]));
        let x0 = d.position(d.s_space.interpolate(|p| p));
        assert!(initialize(&d, u0, x0, d.position(vec![0.0; d.n_x()]), &cfg).is_err());
    }

    fn one_step(setup: &RingSetup, scheme: Scheme, dt: f64) -> Vec<f64> {
        let d = setup.discretization().unwrap();
        let cfg = SchemeConfig::new(scheme, dt, dt);
        let st = setup.initial_state(&d, &cfg).unwrap();
        step(&d, &st, &setup.params, &cfg).unwrap().0.x.coeffs
    }

    #[test]
    fn implicit_and_semi_implicit_agree_to_at_least_second_order_per_step() {
        let s = small();
        let diff = |dt: f64| {
            let a = one_step(&s, Scheme::BeSemi, dt);
            let b = one_step(&s, Scheme::BeImplicit, dt);
            a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let (d1, d2) = (diff(0.02), diff(0.01));
        let ratio = d1 / d2;
        // started from rest the gap is even third order
        assert!(ratio > 3.5, "ratio {ratio} ({d1:e}, {d2:e})");
    }

    #[test]
    fn heavy_viscosity_damps_monotonically() {
        let mut s = small();
        s.params = PhysParams { nu_f: 50.0, nu_s: 50.0, ..s.params };
        let d = s.discretization().unwrap();
        for scheme in [Scheme::BeSemi, Scheme::Bdf2, Scheme::Bdf2Extrapolated] {
            let cfg = SchemeConfig::new(scheme, 0.1, 1.0);
            let st = s.initial_state(&d, &cfg).unwrap();
            let e0 = energy(&d, &st, &s.params, cfg.dt).total;
            let mut prev = e0;
            run(&d, st, &s.params, &cfg, |_, r| {
                assert!(r.energy.total <= prev + 1e-8 * e0);
                assert!(r.defect <= 1e-8 * e0);
                prev = r.energy.total;
                Ok(())
            })
            .unwrap();
            assert!(prev < e0);
        }
    }

    /// First time in `(0, 1]` at which `|u|` drops to `1e-3` of its running
    /// maximum, starting the benchmark ring in a wall-compatible flow.
    fn decay_time(nu_scale: f64, scheme: Scheme) -> Option<f64> {
        use std::f64::consts::PI;
        let mut s = small();
        s.params = PhysParams { nu_f: s.params.nu_f * nu_scale, nu_s: s.params.nu_s * nu_scale, ..s.params };
        let d = s.discretization().unwrap();
        let cfg = SchemeConfig::new(scheme, 0.02, 1.0);
        let mut c = d.v_space.interpolate(|p| [(PI * p[0]).sin() * (1.0 - p[1]), (PI * p[1]).sin() * (1.0 - p[0])]);
        for (v, &m) in c.iter_mut().zip(d.v_space.constrained_mask()) {
            if m {
                *v = 0.0;
            }
        }
        let x0 = d.position(d.s_space.interpolate(crate::model::ring_initial_map));
        let st = initialize(&d, d.velocity(c), x0, d.position(vec![0.0; d.n_x()]), &cfg).unwrap();
        let mut max = d.l2_norm_u(&st.u.coeffs);
        let mut hit = None;
        run(&d, st, &s.params, &cfg, |st, r| {
            let u = d.l2_norm_u(&st.u.coeffs);
            max = max.max(u);
            if hit.is_none() && u <= 1e-3 * max {
                hit = Some(r.t);
            }
            Ok(())
        })
        .unwrap();
        hit
    }

    #[test]
    fn thousandfold_viscosity_is_overdamped() {
        for scheme in [Scheme::BeSemi, Scheme::Bdf2] {
            assert!(decay_time(1e3, scheme).is_some_and(|t| t <= 1.0), "{}", scheme.name());
        }
        assert_eq!(decay_time(1.0, Scheme::BeSemi), None);
    }
}
