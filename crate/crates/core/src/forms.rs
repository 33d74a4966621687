//! Single-mesh bilinear and trilinear forms: mass, viscous stiffness,
//! skew convection, divergence, solid operators and multiplier products.

use rayon::prelude::*;

use crate::error::{FdlmError, Result};
use crate::fespace::{barycentric_in, BasisValues, DiscreteField, ElementGeometry, FeSpace, NO_DOF};
use crate::mesh::{barycentric, Point};
use crate::quadrature::QuadRule;
use crate::sparse::{SparseMat, TripletBuilder};

/// Quadrature degree for all forms on the fluid mesh.
pub const EULERIAN_QUAD_DEGREE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysParams {
    pub rho_f: f64,
    pub delta_rho: f64,
    pub nu_f: f64,
    pub nu_s: f64,
    pub kappa: f64,
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FdlmError::InvalidInput(m.to_string()));
        let all_finite = [self.rho_f, self.delta_rho, self.nu_f, self.nu_s, self.kappa].iter().all(|v| v.is_finite());
        if !all_finite {
            return bad("physical parameters must be finite");
        }
        if self.rho_f <= 0.0 {
            return bad("rho_f must be positive");
        }
        if self.delta_rho < 0.0 {
            return bad("delta_rho must be nonnegative");
        }
        if self.nu_f <= 0.0 || self.nu_s <= 0.0 {
            return bad("viscosities must be positive");
        }
        if self.kappa <= 0.0 {
            return bad("kappa must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingForm {
    /// L2(B) pairing.
    C1L2,
    /// Full H1(B) inner product.
    C2H1,
}

impl CouplingForm {
    pub fn name(self) -> &'static str {
        match self {
            CouplingForm::C1L2 => "C1_L2",
            CouplingForm::C2H1 => "C2_H1",
        }
    }

    pub fn parse(s: &str) -> Option<CouplingForm> {
        match s {
            "C1_L2" | "c1" | "L2" => Some(CouplingForm::C1L2),
            "C2_H1" | "c2" | "H1" => Some(CouplingForm::C2H1),
            _ => None,
        }
    }
}

/// Piecewise viscosity on the velocity elements.
#[derive(Clone, Debug, PartialEq)]
pub enum ViscosityField {
    Uniform(f64),
    PerElement(Vec<f64>),
}

impl ViscosityField {
    pub fn at(&self, e: usize) -> f64 {
        match self {
            ViscosityField::Uniform(nu) => *nu,
            ViscosityField::PerElement(v) => v[e],
        }
    }

    /// `nu_s` on velocity elements whose centroid lies in the image of some
    /// solid triangle under `x` (vertex values, straight sides), `nu_f`
    /// elsewhere.
    pub fn from_solid_image(v_space: &FeSpace, x: &DiscreteField, nu_f: f64, nu_s: f64) -> ViscosityField {
        let smesh = x.space.mesh();
        let ns = x.space.n_scalar();
        let images: Vec<[Point; 3]> = smesh
            .tris
            .iter()
            .map(|t| t.map(|n| [x.coeffs[n], x.coeffs[ns + n]]))
            .collect();
        let boxes: Vec<[f64; 4]> = images
            .iter()
            .map(|v| {
                let xs = v.map(|p| p[0]);
                let ys = v.map(|p| p[1]);
                [
                    xs.iter().copied().fold(f64::INFINITY, f64::min),
                    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    ys.iter().copied().fold(f64::INFINITY, f64::min),
                    ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ]
            })
            .collect();
        let vals = (0..v_space.n_elements())
            .into_par_iter()
            .map(|e| {
                let c = v_space.elem_mesh().centroid(e);
                let inside = images.iter().zip(&boxes).any(|(v, b)| {
                    c[0] >= b[0] && c[0] <= b[1] && c[1] >= b[2] && c[1] <= b[3] && {
                        let l = barycentric(v, c);
                        l.iter().all(|&li| li >= -1e-12)
                    }
                });
                if inside {
                    nu_s
                } else {
                    nu_f
                }
            })
            .collect();
        ViscosityField::PerElement(vals)
    }
}

/// Runs `local` on every element in parallel and scatters the resulting
/// (row, col, value) lists in element order.
pub(crate) fn assemble_elements<F>(n_rows: usize, n_cols: usize, n_elements: usize, local: F) -> SparseMat
where
    F: Fn(usize, &mut Vec<(usize, usize, f64)>) + Sync,
{
    let blocks: Vec<Vec<(usize, usize, f64)>> = (0..n_elements)
        .into_par_iter()
        .map(|e| {
            let mut out = Vec::new();
            local(e, &mut out);
            out
        })
        .collect();
    let cap = blocks.iter().map(Vec::len).sum();
    let mut b = TripletBuilder::with_capacity(n_rows, n_cols, cap);
    for blk in blocks {
        for (i, j, v) in blk {
            b.push(i, j, v);
        }
    }
    b.build()
}

/// Assembles a component-diagonal operator between two spaces on the same
/// element mesh: the scalar local block `loc[i][j]` is replicated on every
/// component.
fn assemble_component_diagonal<F>(rows: &FeSpace, cols: &FeSpace, quad: &QuadRule, kernel: F) -> SparseMat
where
    F: Fn(usize, &ElementGeometry, &BasisValues, &BasisValues, [f64; 3], f64, &mut [[f64; 6]; 6]) + Sync,
{
    assert_eq!(rows.components, cols.components);
    assert_eq!(rows.n_elements(), cols.n_elements());
    let comps = rows.components;
    assemble_elements(rows.n_dofs(), cols.n_dofs(), rows.n_elements(), |e, out| {
        let geo = rows.geometry(e);
        let mut loc = [[0.0; 6]; 6];
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let br = rows.basis(&geo, l);
            let bc = cols.basis(&geo, l);
            kernel(e, &geo, &br, &bc, *l, w * geo.area, &mut loc);
        }
        let (dr, dc) = (rows.elem_dofs(e), cols.elem_dofs(e));
        for c in 0..comps {
            for (i, &gi) in dr.iter().enumerate() {
                if gi == NO_DOF {
                    continue;
                }
                for (j, &gj) in dc.iter().enumerate() {
                    if gj == NO_DOF {
                        continue;
                    }
                    out.push((rows.dof(c, gi), cols.dof(c, gj), loc[i][j]));
                }
            }
        }
    })
}

fn quad_for(space: &FeSpace) -> QuadRule {
    QuadRule::triangle(EULERIAN_QUAD_DEGREE.max(2 * space.degree()))
}

/// Mass matrix `(phi_j, phi_i)` of a scalar or vector space.
pub fn assemble_mass(space: &FeSpace) -> SparseMat {
    let q = quad_for(space);
    assemble_component_diagonal(space, space, &q, |_, _, br, bc, _, w, loc| {
        for i in 0..br.n {
            for j in 0..bc.n {
                loc[i][j] += w * br.values[i] * bc.values[j];
            }
        }
    })
}

/// Gradient Gram `(grad phi_j, grad phi_i)` of a scalar or vector space.
pub fn assemble_stiffness(space: &FeSpace) -> SparseMat {
    let q = quad_for(space);
    assemble_component_diagonal(space, space, &q, |_, _, br, bc, _, w, loc| {
        for i in 0..br.n {
            for j in 0..bc.n {
                loc[i][j] += w * (br.grads[i][0] * bc.grads[j][0] + br.grads[i][1] * bc.grads[j][1]);
            }
        }
    })
}

/// `a(u, v) = 2 nu (eps(u), eps(v))` on a vector velocity space.
pub fn assemble_viscous(space: &FeSpace, nu: &ViscosityField) -> SparseMat {
    assert_eq!(space.components, 2, "viscous form needs a vector space");
    let q = quad_for(space);
    assemble_elements(space.n_dofs(), space.n_dofs(), space.n_elements(), |e, out| {
        let geo = space.geometry(e);
        let n = space.n_local();
        let nu_e = nu.at(e);
        // loc[c][d][i][j]: test (c, i), trial (d, j)
        let mut loc = [[[[0.0; 6]; 6]; 2]; 2];
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let b = space.basis(&geo, l);
            let wa = w * geo.area * nu_e;
            for i in 0..n {
                for j in 0..n {
                    let gi = b.grads[i];
                    let gj = b.grads[j];
                    let lap = gi[0] * gj[0] + gi[1] * gj[1];
                    for c in 0..2 {
                        for d in 0..2 {
                            let diag = if c == d { lap } else { 0.0 };
                            loc[c][d][i][j] += wa * (diag + gi[d] * gj[c]);
                        }
                    }
                }
            }
        }
        let dofs = space.elem_dofs(e);
        for c in 0..2 {
            for d in 0..2 {
                for (i, &gi) in dofs.iter().enumerate() {
                    for (j, &gj) in dofs.iter().enumerate() {
                        out.push((space.dof(c, gi), space.dof(d, gj), loc[c][d][i][j]));
                    }
                }
            }
        }
    })
}

/// Skew convection `N(u_bar)` with `v^T N w = b(u_bar, w, v)`,
/// `b(u, v, w) = rho_f/2 ((u.grad v).w - (u.grad w).v)`.
pub fn assemble_convection(u_bar: &DiscreteField, space: &FeSpace, rho_f: f64) -> SparseMat {
    assert_eq!(u_bar.space.n_dofs(), space.n_dofs(), "u_bar must live in the velocity space");
    assert_eq!(space.components, 2);
    if u_bar.coeffs.iter().all(|&c| c == 0.0) {
        return SparseMat::zeros(space.n_dofs(), space.n_dofs());
    }
    let q = QuadRule::triangle((3 * space.degree()).saturating_sub(1).max(EULERIAN_QUAD_DEGREE));
    let coeffs = &u_bar.coeffs;
    assemble_component_diagonal(space, space, &q, |e, _, b, _, _, w, loc| {
        let dofs = space.elem_dofs(e);
        let mut ub = [0.0; 2];
        for (k, &d) in dofs.iter().enumerate() {
            ub[0] += b.values[k] * coeffs[space.dof(0, d)];
            ub[1] += b.values[k] * coeffs[space.dof(1, d)];
        }
        let adv: Vec<f64> = (0..b.n).map(|j| ub[0] * b.grads[j][0] + ub[1] * b.grads[j][1]).collect();
        for i in 0..b.n {
            for j in 0..b.n {
                // K_ij = (u.grad psi_j) psi_i, antisymmetrized
                loc[i][j] += 0.5 * rho_f * w * (adv[j] * b.values[i] - adv[i] * b.values[j]);
            }
        }
    })
}

/// `B_f` with `(B_f u)_q = (div u, q)`; rows are pressure DOFs. The
/// pressure space must live on the base mesh of the velocity space.
pub fn assemble_divergence(v_space: &FeSpace, q_space: &FeSpace) -> SparseMat {
    assert_eq!(v_space.components, 2);
    assert_eq!(q_space.components, 1);
    assert!(
        std::sync::Arc::ptr_eq(v_space.mesh(), q_space.mesh()) || **v_space.mesh() == **q_space.mesh(),
        "velocity and pressure spaces must share the base mesh"
    );
    let q = quad_for(v_space);
    assemble_elements(q_space.n_dofs(), v_space.n_dofs(), v_space.n_elements(), |e, out| {
        let geo = v_space.geometry(e);
        let t = v_space.parent(e);
        let pgeo = q_space.geometry(t);
        let (vd, pd) = (v_space.elem_dofs(e), q_space.elem_dofs(t));
        let mut loc = [[[0.0; 6]; 4]; 2];
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let bv = v_space.basis(&geo, l);
            let lp = barycentric_in(&pgeo, geo.point(l));
            let bp = q_space.basis(&pgeo, &lp);
            for a in 0..bp.n {
                for j in 0..bv.n {
                    for c in 0..2 {
                        loc[c][a][j] += w * geo.area * bp.values[a] * bv.grads[j][c];
                    }
                }
            }
        }
        for (a, &ga) in pd.iter().enumerate() {
            if ga == NO_DOF {
                continue;
            }
            for (j, &gj) in vd.iter().enumerate() {
                for c in 0..2 {
                    out.push((ga, v_space.dof(c, gj), loc[c][a][j]));
                }
            }
        }
    })
}

/// `a_s(X, z) = beta (X, z)_B + gamma (grad X, grad z)_B`.
pub fn assemble_solid(space: &FeSpace, beta: f64, gamma: f64) -> Result<SparseMat> {
    if !(beta >= 0.0) || !(gamma > 0.0) || !beta.is_finite() || !gamma.is_finite() {
        return Err(FdlmError::InvalidInput(format!("assemble_solid needs beta >= 0, gamma > 0 (got {beta}, {gamma})")));
    }
    let q = quad_for(space);
    Ok(assemble_component_diagonal(space, space, &q, |_, _, br, bc, _, w, loc| {
        for i in 0..br.n {
            for j in 0..bc.n {
                let g = br.grads[i][0] * bc.grads[j][0] + br.grads[i][1] * bc.grads[j][1];
                loc[i][j] += w * (beta * br.values[i] * bc.values[j] + gamma * g);
            }
        }
    }))
}

/// Multiplier pairing `c(mu, z)` between two spaces on the solid mesh;
/// rows are multiplier DOFs.
pub fn assemble_lambda_product(lambda_space: &FeSpace, other: &FeSpace, form: CouplingForm) -> SparseMat {
    let q = QuadRule::triangle(EULERIAN_QUAD_DEGREE.max(lambda_space.degree() + other.degree()));
    let h1 = form == CouplingForm::C2H1;
    assemble_component_diagonal(lambda_space, other, &q, |_, _, br, bc, _, w, loc| {
        for i in 0..br.n {
            for j in 0..bc.n {
                let mut v = br.values[i] * bc.values[j];
                if h1 {
                    v += br.grads[i][0] * bc.grads[j][0] + br.grads[i][1] * bc.grads[j][1];
                }
                loc[i][j] += w * v;
            }
        }
    })
}

/// H1 Gram (mass plus stiffness) of a space.
pub fn assemble_h1_gram(space: &FeSpace) -> SparseMat {
    assemble_lambda_product(space, space, CouplingForm::C2H1)
}

/// `E(X) = kappa/2 |grad X|^2_{0,B}` by direct quadrature.
pub fn elastic_energy(x: &DiscreteField, kappa: f64) -> f64 {
    let sp = &x.space;
    let q = quad_for(sp);
    let total: f64 = (0..sp.n_elements())
        .map(|e| {
            let geo = sp.geometry(e);
            q.points
                .iter()
                .zip(&q.weights)
                .map(|(l, w)| {
                    let g = x.grad_in(e, l);
                    w * geo.area * (g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2))
                })
                .sum::<f64>()
        })
        .sum();
    0.5 * kappa * total
}

/// `m_i = integral of psi_i` for a scalar space.
pub fn assemble_mean_vector(space: &FeSpace) -> Vec<f64> {
    assert_eq!(space.components, 1);
    let q = quad_for(space);
    let mut m = vec![0.0; space.n_dofs()];
    for e in 0..space.n_elements() {
        let geo = space.geometry(e);
        for (l, &w) in q.points.iter().zip(&q.weights) {
            let b = space.basis(&geo, l);
            for (k, &d) in space.elem_dofs(e).iter().enumerate() {
                if d != NO_DOF {
                    m[d] += w * geo.area * b.values[k];
                }
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{make_pressure_space, make_velocity_space, PressureElement, VelocityElement};
    use crate::mesh::{build_quarter_annulus_mesh, build_square_mesh, TriMesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn square(n: usize) -> Arc<TriMesh> {
        Arc::new(build_square_mesh(n, (0.0, 1.0)))
    }

    fn annulus() -> Arc<TriMesh> {
        Arc::new(build_quarter_annulus_mesh(3, 8, 0.3, 0.5))
    }

    #[test]
    fn viscous_examples() {
        for variant in [VelocityElement::P1isoP2, VelocityElement::TaylorHoodP2] {
            let v = make_velocity_space(square(3), variant);
            let a = assemble_viscous(&v, &ViscosityField::Uniform(1.0));
            let c = v.constant([0.7, -1.3]);
            assert!(a.quad_form(&c).abs() < 1e-12);
            let u = v.interpolate(|p| [p[0], -p[1]]);
            assert!((a.quad_form(&u) - 4.0).abs() < 1e-12);
            assert!(a.asymmetry() <= 1e-12 * a.max_abs());
        }
    }

    #[test]
    fn convection_zero_and_skew() {
        let v = Arc::new(make_velocity_space(square(3), VelocityElement::P1isoP2));
        let n0 = assemble_convection(&DiscreteField::zeros(v.clone()), &v, 1.0);
        assert_eq!(n0.nnz(), 0);
        let ub = DiscreteField::new(v.clone(), v.interpolate(|p| [p[1] * p[1], p[0] * p[1] - 1.0])).unwrap();
        let n = assemble_convection(&ub, &v, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let w: Vec<f64> = (0..v.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm: f64 = w.iter().map(|x| x * x).sum();
            assert!(n.quad_form(&w).abs() <= 1e-12 * n.max_abs() * nrm);
        }
    }

    #[test]
    fn convection_matches_closed_form_p1() {
        // For P1: K_ij = grad psi_j . sum_k u_k |T| (1 + delta_ki) / 12.
        let m = square(2);
        let v = Arc::new(FeSpace::constrained_vector(m.clone(), crate::fespace::Family::P1));
        let ub = DiscreteField::new(v.clone(), v.interpolate(|p| [1.0 + p[0], p[0] - 2.0 * p[1]])).unwrap();
        let n = assemble_convection(&ub, &v, 2.0);
        let ns = v.n_scalar();
        let mut k = vec![vec![0.0; ns]; ns];
        for (t, tri) in m.tris.iter().enumerate() {
            let geo = ElementGeometry::new(m.vertices(t));
            for (i, &gi) in tri.iter().enumerate() {
                let mut s = [0.0; 2];
                for (kk, &gk) in tri.iter().enumerate() {
                    let f = geo.area * if kk == i { 2.0 } else { 1.0 } / 12.0;
                    s[0] += f * ub.coeffs[gk];
                    s[1] += f * ub.coeffs[ns + gk];
                }
                for (j, &gj) in tri.iter().enumerate() {
                    k[gi][gj] += s[0] * geo.grad_bary[j][0] + s[1] * geo.grad_bary[j][1];
                }
            }
        }
        for i in 0..ns {
            for j in 0..ns {
                let expect = (k[i][j] - k[j][i]) * 1.0;
                assert!((n.get(i, j) - expect).abs() < 1e-12);
                assert!((n.get(ns + i, ns + j) - expect).abs() < 1e-12);
                assert_eq!(n.get(i, ns + j), 0.0);
            }
        }
    }

    #[test]
    fn divergence_examples() {
        for (ve, pe) in [
            (VelocityElement::P1isoP2, PressureElement::BpEnhanced),
            (VelocityElement::TaylorHoodP2, PressureElement::P1),
        ] {
            let m = square(4);
            let v = make_velocity_space(m.clone(), ve);
            let q = make_pressure_space(m.clone(), pe);
            let b = assemble_divergence(&v, &q);
            let one = q.constant([1.0, 0.0]);
            let u = v.interpolate(|p| [p[0], p[1]]);
            assert!((crate::sparse::dot(&one, &b.matvec(&u)) - 2.0).abs() < 1e-13);
            let rot = v.interpolate(|p| [p[1], -p[0]]);
            assert!(crate::sparse::norm_inf(&b.matvec(&rot)) < 1e-13);
            let c = v.constant([0.3, 0.8]);
            assert!(crate::sparse::dot(&one, &b.matvec(&c)).abs() < 1e-13);
        }
    }

    #[test]
    fn solid_form_against_polygon_oracle() {
        // exact on the faceted annulus: int_T x^2 = |T|/6 (x1^2 + x2^2 + x3^2 + x1x2 + x2x3 + x3x1)
        let m = annulus();
        let s = FeSpace::lagrange(m.clone(), 1, 2).unwrap();
        let a = assemble_solid(&s, 1.0, 1.0).unwrap();
        let x = s.interpolate(|p| [p[0], 0.0]);
        let mut expect = 0.0;
        for t in 0..m.n_tris() {
            let v = m.vertices(t);
            let (a1, a2, a3) = (v[0][0], v[1][0], v[2][0]);
            let area = m.signed_area(t);
            expect += area / 6.0 * (a1 * a1 + a2 * a2 + a3 * a3 + a1 * a2 + a2 * a3 + a3 * a1) + area;
        }
        assert!((a.quad_form(&x) - expect).abs() < 1e-13);
        let a0 = assemble_solid(&s, 0.0, 2.0).unwrap();
        assert!(a0.quad_form(&s.constant([1.0, -2.0])).abs() < 1e-13);
        assert!(a.asymmetry() <= 1e-12 * a.max_abs());
        assert!(assemble_solid(&s, 1.0, 0.0).is_err());
    }

    #[test]
    fn lambda_product_p1_closed_form() {
        let m = annulus();
        let s = FeSpace::lagrange(m.clone(), 1, 2).unwrap();
        let c1 = assemble_lambda_product(&s, &s, CouplingForm::C1L2);
        let c2 = assemble_lambda_product(&s, &s, CouplingForm::C2H1);
        let ns = s.n_scalar();
        let mut mass = vec![vec![0.0; ns]; ns];
        let mut stiff = vec![vec![0.0; ns]; ns];
        for (t, tri) in m.tris.iter().enumerate() {
            let geo = ElementGeometry::new(m.vertices(t));
            for (i, &gi) in tri.iter().enumerate() {
                for (j, &gj) in tri.iter().enumerate() {
                    mass[gi][gj] += geo.area * if i == j { 2.0 } else { 1.0 } / 12.0;
                    let (a, b) = (geo.grad_bary[i], geo.grad_bary[j]);
                    stiff[gi][gj] += geo.area * (a[0] * b[0] + a[1] * b[1]);
                }
            }
        }
        for i in 0..ns {
            for j in 0..ns {
                assert!((c1.get(i, j) - mass[i][j]).abs() < 1e-12);
                assert!((c2.get(ns + i, ns + j) - mass[i][j] - stiff[i][j]).abs() < 1e-12);
            }
        }
        let k = s.constant([1.0, 1.0]);
        let r1 = c1.matvec(&k);
        let r2 = c2.matvec(&k);
        assert!(r1.iter().zip(&r2).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn elastic_energy_examples() {
        let m = annulus();
        let s = Arc::new(FeSpace::lagrange(m.clone(), 1, 2).unwrap());
        let id = DiscreteField::new(s.clone(), s.interpolate(|p| p)).unwrap();
        assert!((elastic_energy(&id, 3.0) - 3.0 * m.area()).abs() < 1e-13);
        assert_eq!(elastic_energy(&DiscreteField::zeros(s.clone()), 1.0), 0.0);
        let k = assemble_solid(&s, 0.0, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x: Vec<f64> = (0..s.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e = elastic_energy(&DiscreteField::new(s.clone(), x.clone()).unwrap(), 2.0);
            assert!((e - 0.5 * k.quad_form(&x)).abs() <= 1e-12 * e);
        }
    }

    #[test]
    fn mean_vector_integrates_constants() {
        let m = square(3);
        for pe in [PressureElement::P1, PressureElement::BpEnhanced] {
            let q = make_pressure_space(m.clone(), pe);
            let mv = assemble_mean_vector(&q);
            assert!((crate::sparse::dot(&mv, &q.constant([1.0, 0.0])) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn params_validation() {
        let p = PhysParams { rho_f: 1.0, delta_rho: 0.0, nu_f: 0.1, nu_s: 0.1, kappa: 10.0 };
        assert!(p.validate().is_ok());
        assert!(PhysParams { delta_rho: -0.1, ..p }.validate().is_err());
        assert!(PhysParams { kappa: 0.0, ..p }.validate().is_err());
    }
}
