//! The per-step saddle-point system in the unknown order
//! `(u, X, lambda | p)` plus one scalar multiplier for the pressure mean:
//!
//! ```text
//! [ A_f    0     C_f^T  -B_f^T  0 ] [u     ]   [M_u f]
//! [ 0      A_s  -C_s^T   0      0 ] [X     ]   [M_S g]
//! [ C_f   -C_s   0       0      0 ] [lambda] = [C_s d]
//! [-B_f    0     0       0      m ] [p     ]   [0    ]
//! [ 0      0     0       m^T    0 ] [sigma ]   [0    ]
//! ```
//!
//! Constrained velocity DOFs are eliminated: their rows and columns of `A_f`
//! become identity, their columns of `B_f` and `C_f` are dropped and the
//! prescribed value is zero. Constrained position DOFs are treated the same
//! way in `A_s` and `C_s`; constrained multiplier DOFs lose their rows of
//! `C_f` and `C_s` and get a unit diagonal.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{FdlmError, Result};
use crate::fespace::DiscreteField;
use crate::forms::{assemble_convection, PhysParams};
use crate::model::Discretization;
use crate::sparse::{norm_inf, SparseMat, TripletBuilder};

/// Relative algebraic residual a direct solve must reach.
pub const SOLVE_TOL: f64 = 1e-10;

/// Mass, solid-inertia and stiffness weights of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl StepCoefficients {
    pub fn backward_euler(p: &PhysParams, dt: f64) -> StepCoefficients {
        StepCoefficients { alpha: p.rho_f / dt, beta: p.delta_rho / dt, gamma: p.kappa * dt }
    }

    pub fn bdf2(p: &PhysParams, dt: f64) -> StepCoefficients {
        StepCoefficients { alpha: 1.5 * p.rho_f / dt, beta: 1.5 * p.delta_rho / dt, gamma: 2.0 * p.kappa * dt / 3.0 }
    }
}

/// Right-hand side coefficient vectors: fluid force `f` (in V_h), solid
/// force `g` (in S_h) and constraint datum `d` (in S_h).
#[derive(Clone, Debug)]
pub struct StepRhs {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub a_f: SparseMat,
    pub a_s: SparseMat,
    pub b_f: SparseMat,
    pub c_f: SparseMat,
    pub c_s: SparseMat,
    pub mean: Vec<f64>,
    pub rhs_u: Vec<f64>,
    pub rhs_x: Vec<f64>,
    pub rhs_l: Vec<f64>,
    pub constrained_u: Vec<bool>,
    pub constrained_x: Vec<bool>,
    pub constrained_l: Vec<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `|A x - b|_inf / (| |A| |x| |_inf + |b|_inf)`.
    pub algebraic: f64,
    /// `max_q |(div u, q)|`.
    pub divergence: f64,
    /// `divergence` relative to `| |B_f| |u| |_inf`.
    pub divergence_rel: f64,
    /// `max |C_f u - C_s X - rhs_l|` over multiplier DOFs.
    pub constraint: f64,
    /// `constraint` relative to the size of the summed terms.
    pub constraint_rel: f64,
    /// `|integral of p|`.
    pub pressure_mean: f64,
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub sigma: f64,
    pub residuals: Residuals,
}

fn eliminate_square(a: &SparseMat, mask: &[bool]) -> SparseMat {
    let mut b = TripletBuilder::with_capacity(a.n_rows, a.n_cols, a.nnz());
    for (i, j, v) in a.triplets() {
        if !mask[i] && !mask[j] {
            b.push(i, j, v);
        }
    }
    for (i, &m) in mask.iter().enumerate() {
        if m {
            b.push(i, i, 1.0);
        }
    }
    b.build()
}

fn eliminate_rows(a: &SparseMat, mask: &[bool]) -> SparseMat {
    let mut b = TripletBuilder::with_capacity(a.n_rows, a.n_cols, a.nnz());
    for (i, j, v) in a.triplets() {
        if !mask[i] {
            b.push(i, j, v);
        }
    }
    b.build()
}

fn eliminate_cols(a: &SparseMat, mask: &[bool]) -> SparseMat {
    let mut b = TripletBuilder::with_capacity(a.n_rows, a.n_cols, a.nnz());
    for (i, j, v) in a.triplets() {
        if !mask[j] {
            b.push(i, j, v);
        }
    }
    b.build()
}

/// `| |A| |x| |` row-wise.
fn abs_matvec(a: &SparseMat, x: &[f64]) -> Vec<f64> {
    (0..a.n_rows).map(|i| a.row(i).map(|(j, v)| (v * x[j]).abs()).sum()).collect()
}

fn rel(r: f64, scale: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r / scale
    }
}

impl BlockSystem {
    /// Checks block shapes and eliminates the constrained velocity DOFs.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a_f: &SparseMat,
        a_s: SparseMat,
        b_f: &SparseMat,
        c_f: &SparseMat,
        c_s: SparseMat,
        mean: Vec<f64>,
        mut rhs_u: Vec<f64>,
        rhs_x: Vec<f64>,
        rhs_l: Vec<f64>,
        constrained_u: Vec<bool>,
    ) -> Result<BlockSystem> {
        let (nu, nx, nl, np) = (a_f.n_rows, a_s.n_rows, c_s.n_rows, b_f.n_rows);
        let shapes = [
            ("A_f", (a_f.n_rows, a_f.n_cols), (nu, nu)),
            ("A_s", (a_s.n_rows, a_s.n_cols), (nx, nx)),
            ("B_f", (b_f.n_rows, b_f.n_cols), (np, nu)),
            ("C_f", (c_f.n_rows, c_f.n_cols), (nl, nu)),
            ("C_s", (c_s.n_rows, c_s.n_cols), (nl, nx)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(FdlmError::InvalidInput(format!("block {name} is {got:?}, expected {want:?}")));
            }
        }
        if mean.len() != np || rhs_u.len() != nu || rhs_x.len() != nx || rhs_l.len() != nl || constrained_u.len() != nu {
            return Err(FdlmError::InvalidInput("right-hand side or mask length mismatch".into()));
        }
        for (r, &m) in rhs_u.iter_mut().zip(&constrained_u) {
            if m {
                *r = 0.0;
            }
        }
        Ok(BlockSystem {
            a_f: eliminate_square(a_f, &constrained_u),
            a_s,
            b_f: eliminate_cols(b_f, &constrained_u),
            c_f: eliminate_cols(c_f, &constrained_u),
            c_s,
            mean,
            rhs_u,
            rhs_x,
            rhs_l,
            constrained_u,
            constrained_x: vec![false; nx],
            constrained_l: vec![false; nl],
        })
    }

    /// Eliminates constrained position and multiplier DOFs (prescribed zero).
    pub fn with_solid_constraints(mut self, constrained_x: Vec<bool>, constrained_l: Vec<bool>) -> Result<BlockSystem> {
        if constrained_x.len() != self.a_s.n_rows || constrained_l.len() != self.c_s.n_rows {
            return Err(FdlmError::InvalidInput("solid constraint mask length mismatch".into()));
        }
        self.a_s = eliminate_square(&self.a_s, &constrained_x);
        self.c_s = eliminate_rows(&eliminate_cols(&self.c_s, &constrained_x), &constrained_l);
        self.c_f = eliminate_rows(&self.c_f, &constrained_l);
        for (r, &m) in self.rhs_x.iter_mut().zip(&constrained_x) {
            if m {
                *r = 0.0;
            }
        }
        for (r, &m) in self.rhs_l.iter_mut().zip(&constrained_l) {
            if m {
                *r = 0.0;
            }
        }
        self.constrained_x = constrained_x;
        self.constrained_l = constrained_l;
        Ok(self)
    }

    pub fn sizes(&self) -> [usize; 4] {
        [self.a_f.n_rows, self.a_s.n_rows, self.c_s.n_rows, self.b_f.n_rows]
    }

    /// Total number of unknowns including the pressure-mean multiplier.
    pub fn n_total(&self) -> usize {
        self.sizes().iter().sum::<usize>() + 1
    }

    fn offsets(&self) -> [usize; 5] {
        let [nu, nx, nl, np] = self.sizes();
        [0, nu, nu + nx, nu + nx + nl, nu + nx + nl + np]
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.n_total());
        b.extend_from_slice(&self.rhs_u);
        b.extend_from_slice(&self.rhs_x);
        b.extend_from_slice(&self.rhs_l);
        b.resize(self.n_total(), 0.0);
        b
    }

    /// The assembled monolithic matrix.
    pub fn monolithic(&self) -> SparseMat {
        let [ou, ox, ol, op, os] = self.offsets();
        let n = self.n_total();
        let cap = self.a_f.nnz()
            + self.a_s.nnz()
            + 2 * (self.b_f.nnz() + self.c_f.nnz() + self.c_s.nnz())
            + 2 * self.mean.len()
            + self.constrained_l.len();
        let mut t = TripletBuilder::with_capacity(n, n, cap);
        for (i, j, v) in self.a_f.triplets() {
            t.push(ou + i, ou + j, v);
        }
        for (i, j, v) in self.a_s.triplets() {
            t.push(ox + i, ox + j, v);
        }
        for (i, j, v) in self.c_f.triplets() {
            t.push(ol + i, ou + j, v);
            t.push(ou + j, ol + i, v);
        }
        for (i, j, v) in self.c_s.triplets() {
            t.push(ol + i, ox + j, -v);
            t.push(ox + j, ol + i, -v);
        }
        for (i, &m) in self.constrained_l.iter().enumerate() {
            if m {
                t.push(ol + i, ol + i, 1.0);
            }
        }
        for (i, j, v) in self.b_f.triplets() {
            t.push(op + i, ou + j, -v);
            t.push(ou + j, op + i, -v);
        }
        for (i, &m) in self.mean.iter().enumerate() {
            t.push(op + i, os, m);
            t.push(os, op + i, m);
        }
        t.build()
    }

    /// Block matrix-vector product with the (eliminated) system operator.
    pub fn apply_operator(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_total());
        let [ou, ox, ol, op, os] = self.offsets();
        let (u, x, l, p, s) = (&v[ou..ox], &v[ox..ol], &v[ol..op], &v[op..os], v[os]);
        let mut out = Vec::with_capacity(v.len());
        let au = self.a_f.matvec(u);
        let cfl = self.c_f.matvec_t(l);
        let bp = self.b_f.matvec_t(p);
        out.extend((0..u.len()).map(|i| au[i] + cfl[i] - bp[i]));
        let ax = self.a_s.matvec(x);
        let csl = self.c_s.matvec_t(l);
        out.extend((0..x.len()).map(|i| ax[i] - csl[i]));
        let cfu = self.c_f.matvec(u);
        let csx = self.c_s.matvec(x);
        out.extend((0..l.len()).map(|i| cfu[i] - csx[i] + if self.constrained_l[i] { l[i] } else { 0.0 }));
        let bu = self.b_f.matvec(u);
        out.extend((0..p.len()).map(|i| -bu[i] + self.mean[i] * s));
        out.push(self.mean.iter().zip(p).map(|(m, p)| m * p).sum());
        out
    }

    /// Residual norms of a candidate solution, recomputed from the blocks.
    pub fn residuals(&self, full: &[f64]) -> Residuals {
        self.residuals_with(&self.monolithic(), full)
    }

    fn residuals_with(&self, mono: &SparseMat, full: &[f64]) -> Residuals {
        let [ou, ox, ol, op, os] = self.offsets();
        let b = self.rhs();
        let ax = self.apply_operator(full);
        let r: Vec<f64> = ax.iter().zip(&b).map(|(a, b)| a - b).collect();
        let scale = norm_inf(&abs_matvec(mono, full)) + norm_inf(&b);
        let (u, x, p) = (&full[ou..ox], &full[ox..ol], &full[op..os]);
        let div = norm_inf(&self.b_f.matvec(u));
        let div_scale = norm_inf(&abs_matvec(&self.b_f, u));
        let cfu = self.c_f.matvec(u);
        let csx = self.c_s.matvec(x);
        let cres: Vec<f64> = (0..cfu.len()).map(|i| cfu[i] - csx[i] - self.rhs_l[i]).collect();
        let c_scale = norm_inf(
            &abs_matvec(&self.c_f, u)
                .iter()
                .zip(abs_matvec(&self.c_s, x))
                .zip(&self.rhs_l)
                .map(|((a, b), c)| a + b + c.abs())
                .collect::<Vec<_>>(),
        );
        let constraint = norm_inf(&cres);
        Residuals {
            algebraic: rel(norm_inf(&r), scale),
            divergence: div,
            divergence_rel: rel(div, div_scale),
            constraint,
            constraint_rel: rel(constraint, c_scale),
            pressure_mean: self.mean.iter().zip(p).map(|(m, p)| m * p).sum::<f64>().abs(),
        }
    }

    /// Direct sparse LU solve of the row- and column-equilibrated system
    /// with iterative refinement. Fails with `SingularSystem` if the
    /// factorization breaks down or the refined residual stays above
    /// [`SOLVE_TOL`].
    pub fn solve(&self) -> Result<SaddleSolution> {
        let n = self.n_total();
        let mono = self.monolithic();
        let (mut rs, mut cs) = (vec![0.0f64; n], vec![0.0f64; n]);
        for (i, _, v) in mono.triplets() {
            rs[i] = rs[i].max(v.abs());
        }
        let inv = |m: f64| if m > 0.0 { 1.0 / m } else { 1.0 };
        rs.iter_mut().for_each(|r| *r = inv(*r));
        for (i, j, v) in mono.triplets() {
            cs[j] = cs[j].max((v * rs[i]).abs());
        }
        cs.iter_mut().for_each(|c| *c = inv(*c));
        let trips: Vec<Triplet<usize, usize, f64>> =
            mono.triplets().map(|(i, j, v)| Triplet::new(i, j, rs[i] * v * cs[j])).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
            .map_err(|e| FdlmError::SingularSystem(format!("matrix creation failed: {e:?}")))?;
        let lu = a.sp_lu().map_err(|e| FdlmError::SingularSystem(format!("LU factorization failed: {e:?}")))?;
        let b = self.rhs();
        let solve = |rhs: &[f64]| -> Vec<f64> {
            let col = Mat::<f64>::from_fn(n, 1, |i, _| rs[i] * rhs[i]);
            let sol = lu.solve(&col);
            (0..n).map(|i| cs[i] * sol[(i, 0)]).collect()
        };
        let mut x = solve(&b);
        let mut res = self.residuals_with(&mono, &x);
        for _ in 0..3 {
            if !x.iter().all(|v| v.is_finite()) || res.algebraic < 1e-15 {
                break;
            }
            let ax = mono.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = solve(&r);
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + d).collect();
            let cres = self.residuals_with(&mono, &cand);
            if !(cres.algebraic < res.algebraic) {
                break;
            }
            x = cand;
            res = cres;
        }
        if !x.iter().all(|v| v.is_finite()) || !(res.algebraic <= SOLVE_TOL) {
            return Err(FdlmError::SingularSystem(format!(
                "relative residual {:.3e} after refinement (n = {n})",
                res.algebraic
            )));
        }
        let [ou, ox, ol, op, os] = self.offsets();
        Ok(SaddleSolution {
            u: x[ou..ox].to_vec(),
            x: x[ox..ol].to_vec(),
            lambda: x[ol..op].to_vec(),
            p: x[op..os].to_vec(),
            sigma: x[os],
            residuals: res,
        })
    }
}

impl SaddleSolution {
    pub fn full(&self) -> Vec<f64> {
        let mut v = self.u.clone();
        v.extend_from_slice(&self.x);
        v.extend_from_slice(&self.lambda);
        v.extend_from_slice(&self.p);
        v.push(self.sigma);
        v
    }
}

/// Builds the step system: `A_f = alpha M_u + A + N(u_bar)`,
/// `A_s = beta M_S + gamma K_S`, `C_f` at `x_bar`, right-hand side
/// `[M_u f; M_S g; C_s d]`.
pub fn build_system(
    disc: &Discretization,
    params: &PhysParams,
    coeffs: StepCoefficients,
    u_bar: &DiscreteField,
    x_bar: &DiscreteField,
    rhs: &StepRhs,
) -> Result<BlockSystem> {
    let n_conv = assemble_convection(u_bar, &disc.v_space, params.rho_f);
    let visc = disc.viscous(x_bar);
    let a_f = SparseMat::combine(&[(coeffs.alpha, &disc.m_u), (1.0, &visc), (1.0, &n_conv)]);
    let a_s = SparseMat::combine(&[(coeffs.beta, &disc.m_s), (coeffs.gamma, &disc.k_s)]);
    let c_f = disc.coupling.assemble_cf(x_bar)?;
    BlockSystem::new(
        &a_f,
        a_s,
        &disc.b_f,
        &c_f,
        disc.c_s.clone(),
        disc.mean.clone(),
        disc.m_u.matvec(&rhs.f),
        disc.m_s.matvec(&rhs.g),
        disc.c_s.matvec(&rhs.d),
        disc.v_space.constrained_mask().to_vec(),
    )?
    .with_solid_constraints(disc.s_space.constrained_mask().to_vec(), disc.l_space.constrained_mask().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{quarter_container, quarter_ring, ring_initial_map, SpaceConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn small(delta_rho: f64) -> (Discretization, PhysParams) {
        let p = PhysParams { rho_f: 1.0, delta_rho, nu_f: 0.1, nu_s: 0.1, kappa: 10.0 };
        let d = Discretization::new(Arc::new(quarter_container(4)), Arc::new(quarter_ring(0.125)), SpaceConfig::default(), &p)
            .unwrap();
        (d, p)
    }

    fn system(d: &Discretization, p: &PhysParams, rhs: &StepRhs) -> BlockSystem {
        let x0 = d.position(d.s_space.interpolate(ring_initial_map));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ub = d.velocity((0..d.n_u()).map(|_| rng.gen_range(-0.1..0.1)).collect());
        build_system(d, p, StepCoefficients::backward_euler(p, 0.1), &ub, &x0, rhs).unwrap()
    }

    #[test]
    fn coefficient_mapping() {
        let p = PhysParams { rho_f: 1.0, delta_rho: 0.3, nu_f: 0.05, nu_s: 0.05, kappa: 1.0 };
        let c = StepCoefficients::backward_euler(&p, 0.1);
        assert!((c.alpha - 10.0).abs() < 1e-14 && (c.beta - 3.0).abs() < 1e-14 && (c.gamma - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let (d, p) = small(0.3);
        let rhs = StepRhs { f: vec![0.0; d.n_u()], g: vec![0.0; d.n_x()], d: vec![0.0; d.n_x()] };
        let s = system(&d, &p, &rhs).solve().unwrap();
        assert!(norm_inf(&s.full()) < 1e-12);
    }

    #[test]
    fn operator_round_trip_and_monolithic_agreement() {
        let (d, p) = small(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rhs = StepRhs {
            f: (0..d.n_u()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            g: (0..d.n_x()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            d: (0..d.n_x()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let sys = system(&d, &p, &rhs);
        let n = sys.n_total();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = sys.apply_operator(&v);
        let b = sys.monolithic().matvec(&v);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-13));
        assert!(norm_inf(&sys.apply_operator(&vec![0.0; n])) == 0.0);

        let s = sys.solve().unwrap();
        assert!(s.residuals.algebraic <= SOLVE_TOL);
        assert!(s.residuals.divergence_rel <= 1e-10 && s.residuals.constraint_rel <= 1e-10);
        let pn = s.p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(s.residuals.pressure_mean <= 1e-12 * pn.max(1.0));
    }

    #[test]
    fn block_skeleton_and_transpose_pairing() {
        let (d, p) = small(0.3);
        let rhs = StepRhs { f: vec![0.0; d.n_u()], g: vec![0.0; d.n_x()], d: vec![0.0; d.n_x()] };
        let sys = system(&d, &p, &rhs);
        let m = sys.monolithic();
        let [ou, ox, ol, op, os] = sys.offsets();
        let block = |i: usize| match i {
            i if i < ox => 0,
            i if i < ol => 1,
            i if i < op => 2,
            i if i < os => 3,
            _ => 4,
        };
        let _ = ou;
        let allowed = [
            [true, false, true, true, false],
            [false, true, true, false, false],
            [true, true, false, false, false],
            [true, false, false, false, true],
            [false, false, false, true, false],
        ];
        for (i, j, _) in m.triplets() {
            if block(i) == 2 && block(j) == 2 {
                assert!(i == j && sys.constrained_l[i - ol], "lambda block entry off a constrained diagonal");
                continue;
            }
            assert!(allowed[block(i)][block(j)], "entry in forbidden block ({}, {})", block(i), block(j));
        }
        for (i, j, v) in m.triplets() {
            let (bi, bj) = (block(i), block(j));
            if (bi == 0 && bj == 2) || (bi == 1 && bj == 2) || (bi == 0 && bj == 3) {
                assert!((m.get(j, i) - v).abs() < 1e-13);
            }
        }
    }
}
