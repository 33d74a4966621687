//! Always-on invariant checks run by `fdlm check`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{spatial_convergence, Manufactured};
use crate::error::Result;
use crate::fespace::{
    eval_field, make_pressure_space, make_velocity_space, DiscreteField, FeSpace, Family, PressureElement, VelocityElement,
};
use crate::forms::{assemble_convection, assemble_stiffness, elastic_energy};
use crate::mesh::{build_quarter_annulus_mesh, build_square_mesh, MeshLocator};
use crate::model::SpaceConfig;
use crate::sparse::dot;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// Measured quantity (worst case over the samples).
    pub value: f64,
    /// Human-readable acceptance condition.
    pub bound: String,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {:<34} {:>12.4e}  ({})", self.name, self.value, self.bound)
    }
}

fn below(name: &'static str, value: f64, tol: f64) -> CheckResult {
    CheckResult { name, value, bound: format!("<= {tol:e}"), passed: value <= tol }
}

const SEED: u64 = 0x5eed;

/// `|v^T N v|` relative to `|v|^T |N| |v|` for 100 random `v` and a random
/// convecting field.
pub fn convection_skew_symmetry() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mesh = Arc::new(build_square_mesh(4, (0.0, 1.0)));
    let mut worst: f64 = 0.0;
    for elem in [VelocityElement::P1isoP2, VelocityElement::TaylorHoodP2] {
        let space = Arc::new(make_velocity_space(mesh.clone(), elem));
        let ub: Vec<f64> = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = assemble_convection(&DiscreteField::new(space.clone(), ub)?, &space, 1.0);
        for _ in 0..100 {
            let v: Vec<f64> = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let va: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            let scale: f64 = (0..n.n_rows).map(|i| n.row(i).map(|(j, a)| va[i] * a.abs() * va[j]).sum::<f64>()).sum();
            worst = worst.max(n.quad_form(&v).abs() / scale);
        }
    }
    Ok(below("convection skew-symmetry", worst, 1e-12))
}

/// Elastic force `kappa K_S X` against central differences of the elastic
/// energy in 20 random directions.
pub fn elastic_force_gradient() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let kappa = 1.7;
    let mesh = Arc::new(build_quarter_annulus_mesh(2, 6, 0.3, 0.5));
    let mut worst: f64 = 0.0;
    for deg in [1, 2] {
        let s = Arc::new(FeSpace::lagrange(mesh.clone(), deg, 2)?);
        let k = assemble_stiffness(&s);
        let x: Vec<f64> = (0..s.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let force: Vec<f64> = k.matvec(&x).iter().map(|v| kappa * v).collect();
        let h = 1e-4;
        for _ in 0..20 {
            let d: Vec<f64> = (0..s.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let at = |t: f64| {
                let c = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                elastic_energy(&DiscreteField { space: s.clone(), coeffs: c }, kappa)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let exact = dot(&force, &d);
            worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
        }
    }
    Ok(below("elastic force = energy gradient", worst, 1e-6))
}

/// Sum of the nodal basis functions at random points of every element, for
/// each Lagrange family.
pub fn partition_of_unity() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mesh = Arc::new(build_quarter_annulus_mesh(2, 5, 0.3, 0.5));
    let mut worst: f64 = 0.0;
    for fam in [Family::P1, Family::P2, Family::P1isoP2] {
        let s = match fam {
            Family::P1isoP2 => make_velocity_space(mesh.clone(), VelocityElement::P1isoP2),
            _ => FeSpace::lagrange(mesh.clone(), if fam == Family::P1 { 1 } else { 2 }, 1)?,
        };
        for e in 0..s.n_elements() {
            let geo = s.geometry(e);
            for _ in 0..5 {
                let (a, b): (f64, f64) = (rng.gen(), rng.gen());
                let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
                let bv = s.basis(&geo, &[1.0 - a - b, a, b]);
                let sum: f64 = bv.values[..bv.n].iter().sum();
                let gsum: f64 = (0..2).map(|c| bv.grads[..bv.n].iter().map(|g| g[c]).sum::<f64>().abs()).sum();
                worst = worst.max((sum - 1.0).abs()).max(gsum);
            }
        }
    }
    Ok(below("partition of unity", worst, 1e-13))
}

/// Cross-mesh evaluation of interpolated linear fields at random points.
pub fn linear_reproduction() -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mesh = Arc::new(build_square_mesh(5, (0.0, 1.0)));
    let lin = |p: [f64; 2]| [0.3 + 1.2 * p[0] - 0.7 * p[1], -0.1 + 0.4 * p[0] + 2.1 * p[1]];
    let mut worst: f64 = 0.0;
    let spaces = [
        FeSpace::lagrange(mesh.clone(), 1, 2)?,
        FeSpace::lagrange(mesh.clone(), 2, 2)?,
        FeSpace::constrained_vector(mesh.clone(), Family::P1isoP2),
    ];
    for s in spaces {
        // interpolate sets constrained DOFs too, so the field is exactly linear
        let s = Arc::new(s);
        let coeffs = s.interpolate(lin);
        let f = DiscreteField { space: s.clone(), coeffs };
        let loc = MeshLocator::new(s.elem_mesh());
        for _ in 0..200 {
            let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let v = eval_field(&f, &loc, p)?;
            let e = lin(p);
            worst = worst.max((v[0] - e[0]).abs()).max((v[1] - e[1]).abs());
        }
    }
    let q = Arc::new(make_pressure_space(mesh, PressureElement::BpEnhanced));
    let f = DiscreteField { space: q.clone(), coeffs: q.interpolate_scalar(|p| lin(p)[0]) };
    let loc = MeshLocator::new(q.elem_mesh());
    for _ in 0..200 {
        let p = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        worst = worst.max((eval_field(&f, &loc, p)?[0] - lin(p)[0]).abs());
    }
    Ok(below("linear reproduction across meshes", worst, 1e-12))
}

/// H1 velocity error rate of the manufactured stationary problem between
/// the two finest of three levels.
pub fn manufactured_rate() -> Result<CheckResult> {
    let (t, _) = spatial_convergence(&Manufactured::default(), 4, 3, SpaceConfig::default())?;
    let r = t.finest_rate("u_H1").unwrap_or(f64::NAN);
    Ok(CheckResult { name: "manufactured H1 velocity rate", value: r, bound: "1.0 +- 0.15".into(), passed: (r - 1.0).abs() <= 0.15 })
}

/// Runs all checks; a check that errors is reported as a failure.
pub fn run_all() -> Vec<CheckResult> {
    type Check = (&'static str, fn() -> Result<CheckResult>);
    let checks: [Check; 5] = [
        ("convection skew-symmetry", convection_skew_symmetry),
        ("elastic force = energy gradient", elastic_force_gradient),
        ("partition of unity", partition_of_unity),
        ("linear reproduction across meshes", linear_reproduction),
        ("manufactured H1 velocity rate", manufactured_rate),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| CheckResult { name, value: f64::NAN, bound: format!("error: {e}"), passed: false })
        })
        .collect()
}
