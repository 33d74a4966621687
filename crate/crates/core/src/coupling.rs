//! Cross-mesh coupling block `C_f`: multiplier basis functions on the solid
//! mesh paired with fluid velocity basis functions composed with the solid
//! map.

use std::sync::Arc;

use crate::error::{FdlmError, Result};
use crate::fespace::{DiscreteField, FeSpace};
use crate::forms::{assemble_elements, CouplingForm};
use crate::mesh::MeshLocator;
use crate::quadrature::QuadRule;
use crate::sparse::{norm_inf, SparseMat};

/// Default quadrature degree on solid elements for the coupling integrals.
pub const COUPLING_QUAD_DEGREE: usize = 4;

pub struct CouplingAssembler {
    pub lambda_space: Arc<FeSpace>,
    pub velocity_space: Arc<FeSpace>,
    pub locator: MeshLocator,
    pub quad: QuadRule,
    pub form: CouplingForm,
}

impl CouplingAssembler {
    pub fn new(
        lambda_space: Arc<FeSpace>,
        velocity_space: Arc<FeSpace>,
        form: CouplingForm,
        quad_degree: usize,
    ) -> CouplingAssembler {
        let locator = MeshLocator::new(velocity_space.elem_mesh());
        CouplingAssembler { lambda_space, velocity_space, locator, quad: QuadRule::triangle(quad_degree), form }
    }

    /// `(C_f)_{mu, v} = c(mu, v o x_bar)`; rows are multiplier DOFs, columns
    /// velocity DOFs. Fails with `SolidEscaped` if a mapped quadrature point
    /// leaves the fluid mesh.
    pub fn assemble_cf(&self, x_bar: &DiscreteField) -> Result<SparseMat> {
        let (ls, vs, xs) = (&*self.lambda_space, &*self.velocity_space, &*x_bar.space);
        assert_eq!(ls.n_elements(), xs.n_elements(), "multiplier and position spaces must share the solid mesh");
        assert_eq!(ls.components, 2);
        let h1 = self.form == CouplingForm::C2H1;
        let nq = self.quad.len();
        let escaped = std::sync::Mutex::new(None::<(usize, FdlmError)>);
        let m = assemble_elements(ls.n_dofs(), vs.n_dofs(), ls.n_elements(), |e, out| {
            let sgeo = ls.geometry(e);
            let ldofs = ls.elem_dofs(e);
            let xdofs = xs.elem_dofs(e);
            for q in 0..nq {
                let l = &self.quad.points[q];
                let w = self.quad.weights[q] * sgeo.area;
                let bl = ls.basis(&sgeo, l);
                let bx = xs.basis(&sgeo, l);
                let mut xq = [0.0; 2];
                let mut f = [[0.0; 2]; 2];
                for (k, &d) in xdofs.iter().enumerate() {
                    for c in 0..2 {
                        let a = x_bar.coeffs[xs.dof(c, d)];
                        xq[c] += a * bx.values[k];
                        f[c][0] += a * bx.grads[k][0];
                        f[c][1] += a * bx.grads[k][1];
                    }
                }
                let Some((fe, fl)) = self.locator.locate(xq) else {
                    let vertices = ls
                        .mesh()
                        .tris[e]
                        .iter()
                        .map(|&n| [x_bar.coeffs[xs.dof(0, n)], x_bar.coeffs[xs.dof(1, n)]])
                        .collect();
                    let err = FdlmError::SolidEscaped { element: e, quad_point: q, point: xq, vertices };
                    let mut g = escaped.lock().unwrap();
                    if g.as_ref().is_none_or(|(ee, _)| e < *ee) {
                        *g = Some((e, err));
                    }
                    return;
                };
                let fgeo = vs.geometry(fe);
                let bv = vs.basis(&fgeo, &fl);
                let vdofs = vs.elem_dofs(fe);
                for (j, &gj) in vdofs.iter().enumerate() {
                    // grad_s (psi_j o X) = F^T grad_x psi_j
                    let gs = [
                        f[0][0] * bv.grads[j][0] + f[1][0] * bv.grads[j][1],
                        f[0][1] * bv.grads[j][0] + f[1][1] * bv.grads[j][1],
                    ];
                    for (i, &gi) in ldofs.iter().enumerate() {
                        let mut v = bl.values[i] * bv.values[j];
                        if h1 {
                            v += bl.grads[i][0] * gs[0] + bl.grads[i][1] * gs[1];
                        }
                        let v = w * v;
                        for c in 0..2 {
                            out.push((ls.dof(c, gi), vs.dof(c, gj), v));
                        }
                    }
                }
            }
        });
        if let Some((_, err)) = escaped.into_inner().unwrap() {
            return Err(err);
        }
        Ok(m)
    }
}

/// `max |C_f u - C_s x_dot - C_s d|` over multiplier DOFs.
pub fn constraint_residual(cf: &SparseMat, cs: &SparseMat, u: &[f64], x_dot: &[f64], d: &[f64]) -> f64 {
    let a = cf.matvec(u);
    let b = cs.matvec(x_dot);
    let c = cs.matvec(d);
    let r: Vec<f64> = a.iter().zip(&b).zip(&c).map(|((a, b), c)| a - b - c).collect();
    norm_inf(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{make_velocity_space, VelocityElement};
    use crate::forms::assemble_lambda_product;
    use crate::mesh::{build_quarter_annulus_mesh, build_square_mesh};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(form: CouplingForm) -> (Arc<FeSpace>, Arc<FeSpace>, CouplingAssembler) {
        let fluid = Arc::new(build_square_mesh(6, (0.0, 1.0)));
        let solid = Arc::new(build_quarter_annulus_mesh(2, 6, 0.3, 0.5));
        let v = Arc::new(make_velocity_space(fluid, VelocityElement::P1isoP2));
        let s = Arc::new(FeSpace::lagrange(solid, 1, 2).unwrap());
        let asm = CouplingAssembler::new(s.clone(), v.clone(), form, COUPLING_QUAD_DEGREE);
        (v, s, asm)
    }

    fn shifted(s: &Arc<FeSpace>) -> DiscreteField {
        DiscreteField::new(s.clone(), s.interpolate(|p| [0.1 + 0.9 * p[0] + 0.1 * p[1], 0.15 - 0.05 * p[0] + 1.1 * p[1]]))
            .unwrap()
    }

    #[test]
    fn constant_velocity_pairs_like_solid_mass() {
        let (v, s, asm) = setup(CouplingForm::C1L2);
        let cf = asm.assemble_cf(&shifted(&s)).unwrap();
        let ms = assemble_lambda_product(&s, &s, CouplingForm::C1L2);
        let c = [0.4, -1.1];
        let a = cf.matvec(&v.constant(c));
        let b = ms.matvec(&s.constant(c));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
    }

    #[test]
    fn linear_velocity_matches_solid_oracle() {
        // v(x) = G x + c composed with an affine X_bar is linear in s, so the
        // degree-4 rule is exact: compare against the solid-only pairing.
        for form in [CouplingForm::C1L2, CouplingForm::C2H1] {
            let (v, s, asm) = setup(form);
            let xb = shifted(&s);
            let cf = asm.assemble_cf(&xb).unwrap();
            let g = [[0.3, -0.7], [1.2, 0.5]];
            let c = [0.2, -0.1];
            let lin = |p: [f64; 2]| [g[0][0] * p[0] + g[0][1] * p[1] + c[0], g[1][0] * p[0] + g[1][1] * p[1] + c[1]];
            let vu = v.interpolate(lin);
            let composed = s.interpolate(|p| lin([0.1 + 0.9 * p[0] + 0.1 * p[1], 0.15 - 0.05 * p[0] + 1.1 * p[1]]));
            let oracle = assemble_lambda_product(&s, &s, form).matvec(&composed);
            let got = cf.matvec(&vu);
            for (a, b) in got.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "{form:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn identity_map_on_same_mesh_gives_mixed_mass() {
        let m = Arc::new(build_square_mesh(3, (0.0, 1.0)));
        let v = Arc::new(FeSpace::lagrange(m.clone(), 1, 2).unwrap());
        let asm = CouplingAssembler::new(v.clone(), v.clone(), CouplingForm::C2H1, 4);
        let id = DiscreteField::new(v.clone(), v.interpolate(|p| p)).unwrap();
        let cf = asm.assemble_cf(&id).unwrap();
        let oracle = assemble_lambda_product(&v, &v, CouplingForm::C2H1);
        let d = crate::sparse::SparseMat::combine(&[(1.0, &cf), (-1.0, &oracle)]);
        assert!(d.max_abs() < 1e-13);
    }

    #[test]
    fn row_sums_integrate_multiplier_basis() {
        let (v, s, asm) = setup(CouplingForm::C1L2);
        let cf = asm.assemble_cf(&shifted(&s)).unwrap();
        let one_x = v.constant([1.0, 0.0]);
        let ms = assemble_lambda_product(&s, &s, CouplingForm::C1L2);
        let ints = ms.matvec(&s.constant([1.0, 0.0]));
        for (a, b) in cf.matvec(&one_x).iter().zip(&ints) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn escaped_solid_is_reported() {
        let (_, s, asm) = setup(CouplingForm::C1L2);
        let far = DiscreteField::new(s.clone(), s.interpolate(|p| [p[0] + 0.8, p[1]])).unwrap();
        match asm.assemble_cf(&far) {
            Err(FdlmError::SolidEscaped { point, vertices, .. }) => {
                assert!(point[0] > 1.0);
                assert_eq!(vertices.len(), 3);
            }
            other => panic!("expected SolidEscaped, got {other:?}"),
        }
    }

    #[test]
    fn linear_in_u_and_deterministic() {
        let (v, s, asm) = setup(CouplingForm::C2H1);
        let xb = shifted(&s);
        let cf = asm.assemble_cf(&xb).unwrap();
        assert_eq!(cf, asm.assemble_cf(&xb).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u1: Vec<f64> = (0..v.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..v.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sum: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a + 2.0 * b).collect();
        let lhs = cf.matvec(&sum);
        let (r1, r2) = (cf.matvec(&u1), cf.matvec(&u2));
        for k in 0..lhs.len() {
            assert!((lhs[k] - r1[k] - 2.0 * r2[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn residual_is_linear_in_perturbation() {
        let (v, s, asm) = setup(CouplingForm::C1L2);
        let cf = asm.assemble_cf(&shifted(&s)).unwrap();
        let cs = assemble_lambda_product(&s, &s, CouplingForm::C1L2);
        let zu = vec![0.0; v.n_dofs()];
        let zx = vec![0.0; s.n_dofs()];
        assert_eq!(constraint_residual(&cf, &cs, &zu, &zx, &zx), 0.0);
        let dir = v.interpolate(|p| [p[0] * p[1], 1.0 - p[0]]);
        let r1 = constraint_residual(&cf, &cs, &dir.iter().map(|x| 1e-3 * x).collect::<Vec<_>>(), &zx, &zx);
        let r2 = constraint_residual(&cf, &cs, &dir.iter().map(|x| 2e-3 * x).collect::<Vec<_>>(), &zx, &zx);
        assert!((r2 / r1 - 2.0).abs() < 1e-12);
    }
}
