//! Numerical estimates of the discrete stability constants (multiplier
//! inf-sup, Stokes inf-sup, kernel coercivity, projection stability) and
//! convergence-rate studies in space and time.

use std::fmt::Write as _;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{FdlmError, Result};
use crate::fespace::{DiscreteField, FeSpace, Family, NO_DOF};
use crate::forms::{
    assemble_divergence, assemble_h1_gram, assemble_lambda_product, assemble_mass, assemble_mean_vector,
    assemble_stiffness, CouplingForm, PhysParams,
};
use crate::mesh::{build_square_mesh, Point, TriMesh};
use crate::model::{quarter_container, quarter_ring, ring_initial_map, Discretization, SpaceConfig};
use crate::quadrature::QuadRule;
use crate::saddle::{BlockSystem, Residuals, StepCoefficients};
use crate::sparse::SparseMat;
use crate::timestep::{initialize, run, Scheme, SchemeConfig, SystemState};

/// Largest dense problem the eigen-based estimators accept.
pub const MAX_DENSE_DOFS: usize = 6000;

#[derive(Clone, Debug, PartialEq)]
pub struct InfSupReport {
    pub label: String,
    pub estimate: f64,
    pub mesh_sizes: Vec<f64>,
    pub n_dofs: usize,
    pub eigen_residual: f64,
}

impl InfSupReport {
    pub const CSV_HEADER: &'static str = "label,estimate,mesh_sizes,n_dofs,eigen_residual";

    pub fn csv_row(&self) -> String {
        let h: Vec<String> = self.mesh_sizes.iter().map(|h| format!("{h:.16e}")).collect();
        format!("{},{:.16e},{},{},{:.16e}", self.label, self.estimate, h.join(";"), self.n_dofs, self.eigen_residual)
    }
}

/// Aligned text table of several reports.
pub fn infsup_text(reports: &[InfSupReport]) -> String {
    let w = reports.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<w$}  {:>12}  {:>8}  {:>10}  mesh sizes\n", "label", "estimate", "dofs", "eig resid");
    for r in reports {
        let h: Vec<String> = r.mesh_sizes.iter().map(|h| format!("{h:.4}")).collect();
        let _ = writeln!(s, "{:<w$}  {:>12.6e}  {:>8}  {:>10.2e}  {}", r.label, r.estimate, r.n_dofs, r.eigen_residual, h.join(", "));
    }
    s
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_DENSE_DOFS {
        return Err(FdlmError::InvalidInput(format!("{n} unknowns exceed the dense analysis limit {MAX_DENSE_DOFS}")));
    }
    Ok(())
}

fn dense_sub(a: &SparseMat, rows: &[usize], cols: &[usize]) -> Mat<f64> {
    let mut ci = vec![usize::MAX; a.n_cols];
    for (k, &c) in cols.iter().enumerate() {
        ci[c] = k;
    }
    let mut m = Mat::<f64>::zeros(rows.len(), cols.len());
    for (k, &r) in rows.iter().enumerate() {
        for (j, v) in a.row(r) {
            if ci[j] != usize::MAX {
                m[(k, ci[j])] = v;
            }
        }
    }
    m
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn symmetrize(a: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

fn frob(a: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// Generalized symmetric eigenpairs `G x = mu M x` with `M` SPD, eigenvalues
/// ascending. Also returns the largest relative residual over the pairs.
pub fn generalized_eigen(g: &Mat<f64>, m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>, f64)> {
    let n = g.nrows();
    let em = symmetrize(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FdlmError::Eigen(format!("norm matrix: {e:?}")))?;
    let (q, d) = (em.U(), em.S().column_vector());
    let dmax = (0..n).map(|i| d[i]).fold(0.0, f64::max);
    if (0..n).any(|i| !(d[i] > 1e-14 * dmax)) {
        return Err(FdlmError::Eigen("norm matrix is not positive definite".into()));
    }
    // W = M^{-1/2}
    let qs = Mat::from_fn(n, n, |i, j| q[(i, j)] / d[j].sqrt());
    let w = &qs * q.transpose();
    let s = symmetrize(&(&w * g * &w));
    let es = s.self_adjoint_eigen(Side::Lower).map_err(|e| FdlmError::Eigen(format!("{e:?}")))?;
    let mu: Vec<f64> = (0..n).map(|i| es.S().column_vector()[i]).collect();
    let x = &w * es.U();
    let gx = g * &x;
    let mx = m * &x;
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let (mut r, mut sc) = (0.0, 0.0);
        for i in 0..n {
            r += (gx[(i, k)] - mu[k] * mx[(i, k)]).powi(2);
            sc += gx[(i, k)].powi(2) + (mu[k] * mx[(i, k)]).powi(2);
        }
        let norm = frob(g) * (0..n).map(|i| x[(i, k)].powi(2)).sum::<f64>().sqrt();
        worst = worst.max(r.sqrt() / sc.sqrt().max(norm).max(f64::MIN_POSITIVE));
    }
    Ok((mu, x, worst))
}

fn solve_spd(k: &Mat<f64>, rhs: &Mat<f64>) -> Result<Mat<f64>> {
    let llt = symmetrize(k).llt(Side::Lower).map_err(|e| FdlmError::Eigen(format!("Cholesky: {e:?}")))?;
    Ok(llt.solve(rhs))
}

/// Multiplier inf-sup constant: `zeta^2` is the smallest eigenvalue of
/// `C K_S^{-1} C^T w = zeta^2 M_Lambda w`, with `K_S` the H1(B) Gram of
/// `S_h`. `M_Lambda` is the H1 Gram of `Lambda_h` for the H1 form and the
/// discrete dual norm `C K_S^{-1} C^T` (over `S_h`) for the L2 form.
pub fn estimate_zeta(lambda_space: &FeSpace, s_space: &FeSpace, form: CouplingForm) -> Result<InfSupReport> {
    if lambda_space.degree() > s_space.degree() || lambda_space.mesh().n_tris() != s_space.mesh().n_tris() {
        return Err(FdlmError::InvalidInput("dim(S_h) >= dim(Lambda_h) on a shared mesh is required".into()));
    }
    guard(lambda_space.n_dofs() + s_space.n_dofs())?;
    let c = assemble_lambda_product(lambda_space, s_space, form);
    let (nl, ns) = (lambda_space.n_dofs(), s_space.n_dofs());
    let cd = dense_sub(&c, &all(nl), &all(ns));
    let ks = dense_sub(&assemble_h1_gram(s_space), &all(ns), &all(ns));
    let kinv_ct = solve_spd(&ks, &cd.transpose().to_owned())?;
    let g = symmetrize(&(&cd * &kinv_ct));
    let m = match form {
        CouplingForm::C2H1 => dense_sub(&assemble_h1_gram(lambda_space), &all(nl), &all(nl)),
        CouplingForm::C1L2 => {
            let c1 = dense_sub(&assemble_lambda_product(lambda_space, s_space, CouplingForm::C1L2), &all(nl), &all(ns));
            let k1 = solve_spd(&ks, &c1.transpose().to_owned())?;
            symmetrize(&(&c1 * &k1))
        }
    };
    let (mu, _, res) = generalized_eigen(&g, &m)?;
    Ok(InfSupReport {
        label: format!("zeta_{}_P{}P{}", form.name(), lambda_space.degree(), s_space.degree()),
        estimate: mu[0].max(0.0).sqrt(),
        mesh_sizes: vec![lambda_space.mesh().max_diameter()],
        n_dofs: nl + ns,
        eigen_residual: res,
    })
}

/// H1 stability constant of the L2(B) projection onto `s_space`, probed
/// with functions from the richer space `rich` on the same mesh:
/// `C_0^2 = max z^T P^T H_S P z / z^T H_rich z`.
pub fn estimate_projection_constant(s_space: &FeSpace, rich: &FeSpace) -> Result<InfSupReport> {
    guard(s_space.n_dofs() + rich.n_dofs())?;
    let (ns, nr) = (s_space.n_dofs(), rich.n_dofs());
    let ms = dense_sub(&assemble_mass(s_space), &all(ns), &all(ns));
    let msr = dense_sub(&assemble_lambda_product(s_space, rich, CouplingForm::C1L2), &all(ns), &all(nr));
    let p = solve_spd(&ms, &msr)?;
    let hs = dense_sub(&assemble_h1_gram(s_space), &all(ns), &all(ns));
    let hr = dense_sub(&assemble_h1_gram(rich), &all(nr), &all(nr));
    let g = symmetrize(&(p.transpose() * &hs * &p));
    let (mu, _, res) = generalized_eigen(&g, &hr)?;
    Ok(InfSupReport {
        label: format!("C0_P{}_in_P{}", s_space.degree(), rich.degree()),
        estimate: mu[nr - 1].max(0.0).sqrt(),
        mesh_sizes: vec![s_space.mesh().max_diameter()],
        n_dofs: ns + nr,
        eigen_residual: res,
    })
}

/// Discrete Stokes inf-sup constant in the `H1_0 x L2` norms: `beta^2` is
/// the smallest eigenvalue of `B K^{-1} B^T + s (M 1)(M 1)^T` against the
/// pressure mass `M`, where `K` is the velocity gradient Gram on free DOFs
/// and the rank-one term lifts the constant pressure mode out of the way.
pub fn estimate_stokes_infsup(v_space: &FeSpace, q_space: &FeSpace) -> Result<InfSupReport> {
    let free = v_space.free_dofs();
    let np = q_space.n_dofs();
    guard(free.len() + np)?;
    let b = dense_sub(&assemble_divergence(v_space, q_space), &all(np), &free);
    let k = dense_sub(&assemble_stiffness(v_space), &free, &free);
    let mp = dense_sub(&assemble_mass(q_space), &all(np), &all(np));
    let mean = assemble_mean_vector(q_space);
    let area: f64 = mean.iter().zip(q_space.constant([1.0, 0.0])).map(|(m, c)| m * c).sum();
    let s = 10.0 / area;
    let g = if free.is_empty() {
        Mat::<f64>::zeros(np, np)
    } else {
        let kinv_bt = solve_spd(&k, &b.transpose().to_owned())?;
        &b * &kinv_bt
    };
    let g = Mat::from_fn(np, np, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]) + s * mean[i] * mean[j]);
    let (mu, _, res) = generalized_eigen(&g, &mp)?;
    Ok(InfSupReport {
        label: format!("stokes_{:?}_{:?}", v_space.family, q_space.family),
        estimate: mu[0].max(0.0).sqrt(),
        mesh_sizes: vec![q_space.mesh().max_diameter()],
        n_dofs: free.len() + np,
        eigen_residual: res,
    })
}

/// Smallest Rayleigh quotient of `sym(diag(A_f, A_s))` over the discrete
/// kernel `{(v, z): B_f v = 0, C_f v - C_s z = 0}` in the product H1 norm.
/// `h1_u` and `h1_x` are the H1 Grams of the velocity and position spaces.
pub fn kernel_coercivity(sys: &BlockSystem, h1_u: &SparseMat, h1_x: &SparseMat) -> Result<f64> {
    let free: Vec<usize> = (0..sys.a_f.n_rows).filter(|&i| !sys.constrained_u[i]).collect();
    let free_x: Vec<usize> = (0..sys.a_s.n_rows).filter(|&i| !sys.constrained_x[i]).collect();
    let rows_l: Vec<usize> = (0..sys.c_s.n_rows).filter(|&i| !sys.constrained_l[i]).collect();
    let np = sys.b_f.n_rows;
    let (nf, nx, nl) = (free.len(), free_x.len(), rows_l.len());
    let n = nf + nx;
    guard(n)?;
    let m = np + nl;
    let mut d = Mat::<f64>::zeros(m, n);
    let bf = dense_sub(&sys.b_f, &all(np), &free);
    let cf = dense_sub(&sys.c_f, &rows_l, &free);
    let cs = dense_sub(&sys.c_s, &rows_l, &free_x);
    for j in 0..nf {
        for i in 0..np {
            d[(i, j)] = bf[(i, j)];
        }
        for i in 0..nl {
            d[(np + i, j)] = cf[(i, j)];
        }
    }
    for j in 0..nx {
        for i in 0..nl {
            d[(np + i, nf + j)] = -cs[(i, j)];
        }
    }
    let svd = d.svd().map_err(|e| FdlmError::Eigen(format!("SVD: {e:?}")))?;
    let sv = svd.S().column_vector();
    let smax = (0..m.min(n)).map(|i| sv[i]).fold(0.0, f64::max);
    let rank = (0..m.min(n)).filter(|&i| sv[i] > 1e-10 * smax).count();
    let k = n - rank;
    if k == 0 {
        return Err(FdlmError::InvalidInput("discrete kernel is trivial".into()));
    }
    let v = svd.V();
    let z = Mat::from_fn(n, k, |i, j| v[(i, rank + j)]);
    let mut a = Mat::<f64>::zeros(n, n);
    let mut h = Mat::<f64>::zeros(n, n);
    let af = dense_sub(&sys.a_f, &free, &free);
    let hu = dense_sub(h1_u, &free, &free);
    for i in 0..nf {
        for j in 0..nf {
            a[(i, j)] = 0.5 * (af[(i, j)] + af[(j, i)]);
            h[(i, j)] = hu[(i, j)];
        }
    }
    let as_ = dense_sub(&sys.a_s, &free_x, &free_x);
    let hx = dense_sub(h1_x, &free_x, &free_x);
    for i in 0..nx {
        for j in 0..nx {
            a[(nf + i, nf + j)] = 0.5 * (as_[(i, j)] + as_[(j, i)]);
            h[(nf + i, nf + j)] = hx[(i, j)];
        }
    }
    let za = symmetrize(&(z.transpose() * &a * &z));
    let zh = symmetrize(&(z.transpose() * &h * &z));
    let (mu, _, _) = generalized_eigen(&za, &zh)?;
    Ok(mu[0])
}

/// Error table with one row per refinement level; rates are computed
/// between adjacent rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    pub title: String,
    pub param_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<(f64, Vec<f64>)>,
}

/// Observed order between two levels: `log(e_c/e_f) / log(p_c/p_f)`.
pub fn observed_rate(p_coarse: f64, e_coarse: f64, p_fine: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (p_coarse / p_fine).ln()
}

impl RateTable {
    pub fn new(title: &str, param_name: &str, columns: &[&str]) -> RateTable {
        RateTable {
            title: title.to_string(),
            param_name: param_name.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, param: f64, errors: Vec<f64>) {
        assert_eq!(errors.len(), self.columns.len());
        self.rows.push((param, errors));
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Rates of column `col`; entry `k` compares rows `k-1` and `k`.
    pub fn rates(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.rows.len())
            .map(|k| {
                (k > 0).then(|| {
                    let (pc, ec) = (&self.rows[k - 1].0, self.rows[k - 1].1[col]);
                    let (pf, ef) = (&self.rows[k].0, self.rows[k].1[col]);
                    observed_rate(*pc, ec, *pf, ef)
                })
            })
            .collect()
    }

    /// Rate between the two finest levels.
    pub fn finest_rate(&self, name: &str) -> Option<f64> {
        let c = self.column(name)?;
        self.rates(c).last().copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.param_name.clone();
        for c in &self.columns {
            let _ = write!(s, ",{c},{c}_rate");
        }
        s.push('\n');
        let rates: Vec<Vec<Option<f64>>> = (0..self.columns.len()).map(|c| self.rates(c)).collect();
        for (k, (p, e)) in self.rows.iter().enumerate() {
            let _ = write!(s, "{p:.16e}");
            for (c, ec) in e.iter().enumerate() {
                match rates[c][k] {
                    Some(r) => {
                        let _ = write!(s, ",{ec:.16e},{r:.16e}");
                    }
                    None => {
                        let _ = write!(s, ",{ec:.16e},");
                    }
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.title);
        let _ = write!(s, "{:>10}", self.param_name);
        for c in &self.columns {
            let _ = write!(s, "  {:>12}  {:>6}", c, "rate");
        }
        s.push('\n');
        let rates: Vec<Vec<Option<f64>>> = (0..self.columns.len()).map(|c| self.rates(c)).collect();
        for (k, (p, e)) in self.rows.iter().enumerate() {
            let _ = write!(s, "{p:>10.6}");
            for (c, ec) in e.iter().enumerate() {
                let r = rates[c][k].map_or("-".to_string(), |r| format!("{r:.2}"));
                let _ = write!(s, "  {ec:>12.4e}  {r:>6}");
            }
            s.push('\n');
        }
        s
    }
}

/// Smooth stationary test solution on the unit square with a square solid
/// `(0, 1/2)^2` mapped by a translation. Velocity from the stream function
/// `sin^2(pi x) sin^2(pi y)`, pressure `cos(pi x) cos(pi y)`, multiplier
/// zero; all fields are scaled by `amplitude`.
#[derive(Clone, Copy, Debug)]
pub struct Manufactured {
    pub amplitude: f64,
    pub coeffs: StepCoefficients,
    pub nu: f64,
    pub shift: [f64; 2],
    pub form: CouplingForm,
}

impl Default for Manufactured {
    fn default() -> Self {
        Manufactured {
            amplitude: 1.0,
            coeffs: StepCoefficients { alpha: 1.0, beta: 1.0, gamma: 1.0 },
            nu: 1.0,
            shift: [0.2, 0.2],
            form: CouplingForm::C1L2,
        }
    }
}

const PI: f64 = std::f64::consts::PI;

impl Manufactured {
    pub fn u(&self, p: Point) -> [f64; 2] {
        let (x, y) = (p[0], p[1]);
        let a = self.amplitude;
        [
            a * PI * (PI * x).sin().powi(2) * (2.0 * PI * y).sin(),
            -a * PI * (2.0 * PI * x).sin() * (PI * y).sin().powi(2),
        ]
    }

    pub fn grad_u(&self, p: Point) -> [[f64; 2]; 2] {
        let (x, y) = (p[0], p[1]);
        let a = self.amplitude * PI * PI;
        [
            [a * (2.0 * PI * x).sin() * (2.0 * PI * y).sin(), 2.0 * a * (PI * x).sin().powi(2) * (2.0 * PI * y).cos()],
            [-2.0 * a * (2.0 * PI * x).cos() * (PI * y).sin().powi(2), -a * (2.0 * PI * x).sin() * (2.0 * PI * y).sin()],
        ]
    }

    pub fn laplace_u(&self, p: Point) -> [f64; 2] {
        let (x, y) = (p[0], p[1]);
        let a = self.amplitude * PI.powi(3);
        [
            a * (2.0 * (2.0 * PI * x).cos() * (2.0 * PI * y).sin() - 4.0 * (PI * x).sin().powi(2) * (2.0 * PI * y).sin()),
            a * (4.0 * (2.0 * PI * x).sin() * (PI * y).sin().powi(2) - 2.0 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()),
        ]
    }

    pub fn p(&self, q: Point) -> f64 {
        self.amplitude * (PI * q[0]).cos() * (PI * q[1]).cos()
    }

    pub fn grad_p(&self, q: Point) -> [f64; 2] {
        let a = self.amplitude * PI;
        [-a * (PI * q[0]).sin() * (PI * q[1]).cos(), -a * (PI * q[0]).cos() * (PI * q[1]).sin()]
    }

    pub fn x(&self, s: Point) -> [f64; 2] {
        let a = self.amplitude;
        [a * (s[0] + 0.1 * (PI * s[1]).sin()), a * (s[1] + 0.1 * (PI * s[0]).sin())]
    }

    pub fn grad_x(&self, s: Point) -> [[f64; 2]; 2] {
        let a = self.amplitude;
        [[a, a * 0.1 * PI * (PI * s[1]).cos()], [a * 0.1 * PI * (PI * s[0]).cos(), a]]
    }

    /// Body force `alpha u - nu lap u + grad p` (the velocity is
    /// divergence free and the multiplier vanishes).
    pub fn force(&self, q: Point) -> [f64; 2] {
        let (u, l, g) = (self.u(q), self.laplace_u(q), self.grad_p(q));
        [
            self.coeffs.alpha * u[0] - self.nu * l[0] + g[0],
            self.coeffs.alpha * u[1] - self.nu * l[1] + g[1],
        ]
    }

    pub fn x_bar(&self, s: Point) -> [f64; 2] {
        [s[0] + self.shift[0], s[1] + self.shift[1]]
    }
}

/// `int f . phi_i` over all elements of a vector space.
fn load_vector(space: &FeSpace, quad: &QuadRule, f: impl Fn(usize, [f64; 3], Point) -> [[f64; 2]; 3]) -> Vec<f64> {
    // f returns [value, grad row 0, grad row 1]; grad rows are paired with
    // basis gradients (used for H1 pairings on the solid).
    let mut out = vec![0.0; space.n_dofs()];
    for e in 0..space.n_elements() {
        let geo = space.geometry(e);
        for (l, &w) in quad.points.iter().zip(&quad.weights) {
            let x = geo.point(l);
            let b = space.basis(&geo, l);
            let [v, g0, g1] = f(e, *l, x);
            let g = [g0, g1];
            for (k, &d) in space.elem_dofs(e).iter().enumerate() {
                if d == NO_DOF {
                    continue;
                }
                for c in 0..space.components {
                    out[space.dof(c, d)] += w
                        * geo.area
                        * (v[c] * b.values[k] + g[c][0] * b.grads[k][0] + g[c][1] * b.grads[k][1]);
                }
            }
        }
    }
    out
}

/// One level of the manufactured problem.
pub struct ManufacturedLevel {
    pub disc: Discretization,
    pub system: BlockSystem,
}

/// Builds the stationary system on a unit-square container with `n_cells`
/// coarse cells and a square solid with `n_solid` cells.
pub fn manufactured_level(problem: &Manufactured, n_cells: usize, n_solid: usize, cfg: SpaceConfig) -> Result<ManufacturedLevel> {
    let params = PhysParams { rho_f: 1.0, delta_rho: 0.0, nu_f: problem.nu, nu_s: problem.nu, kappa: 1.0 };
    let fluid = Arc::new(build_square_mesh(n_cells, (0.0, 1.0)));
    let solid = Arc::new(build_square_mesh(n_solid, (0.0, 0.5)));
    let cfg = SpaceConfig { form: problem.form, ..cfg };
    let disc = Discretization::new(fluid, solid, cfg, &params)?;
    let q = QuadRule::triangle(5);
    let c = problem.coeffs;
    let a_f = SparseMat::combine(&[(c.alpha, &disc.m_u), (1.0, &disc.a_visc)]);
    let a_s = SparseMat::combine(&[(c.beta, &disc.m_s), (c.gamma, &disc.k_s)]);
    let xb = disc.position(disc.s_space.interpolate(|s| problem.x_bar(s)));
    let c_f = disc.coupling.assemble_cf(&xb)?;
    let rhs_u = load_vector(&disc.v_space, &q, |_, _, x| [problem.force(x), [0.0; 2], [0.0; 2]]);
    let rhs_x = load_vector(&disc.s_space, &q, |_, _, s| {
        let (x, g) = (problem.x(s), problem.grad_x(s));
        [[c.beta * x[0], c.beta * x[1]], [c.gamma * g[0][0], c.gamma * g[0][1]], [c.gamma * g[1][0], c.gamma * g[1][1]]]
    });
    let h1 = problem.form == CouplingForm::C2H1;
    let rhs_l = load_vector(&disc.l_space, &q, |_, _, s| {
        let xb = problem.x_bar(s);
        let (u, x) = (problem.u(xb), problem.x(s));
        // X_bar is a translation, so grad_s (u o X_bar) = (grad u)(X_bar)
        let (gu, gx) = (problem.grad_u(xb), problem.grad_x(s));
        let k = if h1 { 1.0 } else { 0.0 };
        [
            [u[0] - x[0], u[1] - x[1]],
            [k * (gu[0][0] - gx[0][0]), k * (gu[0][1] - gx[0][1])],
            [k * (gu[1][0] - gx[1][0]), k * (gu[1][1] - gx[1][1])],
        ]
    });
    let system = BlockSystem::new(
        &a_f,
        a_s,
        &disc.b_f,
        &c_f,
        disc.c_s.clone(),
        disc.mean.clone(),
        rhs_u,
        rhs_x,
        rhs_l,
        disc.v_space.constrained_mask().to_vec(),
    )?;
    Ok(ManufacturedLevel { disc, system })
}

/// Errors `[|u - u_h|_1, |u - u_h|_0, |p - p_h|_0, |X - X_h|_{1,B}]` of the
/// given coefficient vectors.
pub fn manufactured_errors(problem: &Manufactured, disc: &Discretization, u: &[f64], p: &[f64], x: &[f64]) -> [f64; 4] {
    let q = QuadRule::triangle(5);
    let uf = DiscreteField { space: disc.v_space.clone(), coeffs: u.to_vec() };
    let (ul2, uh1) = uf.errors(|z| problem.u(z), |z| problem.grad_u(z), &q);
    let pf = DiscreteField { space: disc.q_space.clone(), coeffs: p.to_vec() };
    let (pl2, _) = pf.errors(|z| [problem.p(z), 0.0], |_| [[0.0; 2]; 2], &q);
    let xf = DiscreteField { space: disc.s_space.clone(), coeffs: x.to_vec() };
    let (xl2, xh1) = xf.errors(|s| problem.x(s), |s| problem.grad_x(s), &q);
    [uh1, ul2, pl2, (xl2 * xl2 + xh1 * xh1).sqrt()]
}

pub const SPATIAL_COLUMNS: [&str; 4] = ["u_H1", "u_L2", "p_L2", "X_H1"];

/// Spatial convergence on `levels` uniform refinements starting from
/// `n0` coarse cells (solid with `n0/2` cells, so both meshes have the same
/// size). Returns the error table and the worst residuals met.
pub fn spatial_convergence(problem: &Manufactured, n0: usize, levels: usize, cfg: SpaceConfig) -> Result<(RateTable, Residuals)> {
    let mut t = RateTable::new("spatial convergence (manufactured solution)", "h", &SPATIAL_COLUMNS);
    let mut worst = Residuals::default();
    for k in 0..levels {
        let n = n0 << k;
        let lvl = manufactured_level(problem, n, (n / 2).max(1), cfg)?;
        let sol = lvl.system.solve()?;
        worst = max_residuals(worst, sol.residuals);
        let e = manufactured_errors(problem, &lvl.disc, &sol.u, &sol.p, &sol.x);
        t.push(1.0 / n as f64, e.to_vec());
    }
    Ok((t, worst))
}

/// Same table for the nodal interpolants of the exact solution (pressure
/// interpolated in its P1 part).
pub fn interpolation_control(problem: &Manufactured, n0: usize, levels: usize, cfg: SpaceConfig) -> Result<RateTable> {
    let mut t = RateTable::new("interpolation errors", "h", &SPATIAL_COLUMNS);
    for k in 0..levels {
        let n = n0 << k;
        let lvl = manufactured_level(problem, n, (n / 2).max(1), cfg)?;
        let d = &lvl.disc;
        let u = d.v_space.interpolate(|z| problem.u(z));
        let p = d.q_space.interpolate_scalar(|z| problem.p(z));
        let x = d.s_space.interpolate(|s| problem.x(s));
        t.push(1.0 / n as f64, manufactured_errors(problem, d, &u, &p, &x).to_vec());
    }
    Ok(t)
}

pub(crate) fn max_residuals(a: Residuals, b: Residuals) -> Residuals {
    Residuals {
        algebraic: a.algebraic.max(b.algebraic),
        divergence: a.divergence.max(b.divergence),
        divergence_rel: a.divergence_rel.max(b.divergence_rel),
        constraint: a.constraint.max(b.constraint),
        constraint_rel: a.constraint_rel.max(b.constraint_rel),
        pressure_mean: a.pressure_mean.max(b.pressure_mean),
    }
}

/// Ring benchmark configuration shared by the energy and temporal studies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RingSetup {
    /// Coarse cells per side of the quarter container.
    pub n_cells: usize,
    /// Solid element diameter bound.
    pub h_s: f64,
    pub params: PhysParams,
    pub t_end: f64,
    pub space: SpaceConfig,
}

impl RingSetup {
    /// Energy benchmark parameters.
    pub fn energy_benchmark(n_cells: usize) -> RingSetup {
        RingSetup {
            n_cells,
            h_s: 0.125,
            params: PhysParams { rho_f: 1.0, delta_rho: 0.3, nu_f: 0.05, nu_s: 0.05, kappa: 1.0 },
            t_end: 2.0,
            space: SpaceConfig::default(),
        }
    }

    /// Temporal convergence parameters: 32 cells across the full container
    /// (16 on the quarter), solid mesh size 1/16, matched densities.
    pub fn temporal_benchmark() -> RingSetup {
        RingSetup {
            n_cells: 16,
            h_s: 0.0625,
            params: PhysParams { rho_f: 1.0, delta_rho: 0.0, nu_f: 0.1, nu_s: 0.1, kappa: 10.0 },
            t_end: 1.0,
            space: SpaceConfig::default(),
        }
    }

    pub fn discretization(&self) -> Result<Discretization> {
        if self.n_cells == 0 || !(self.h_s > 0.0) {
            return Err(FdlmError::InvalidInput("mesh parameters must be positive".into()));
        }
        Discretization::new(Arc::new(quarter_container(self.n_cells)), Arc::new(quarter_ring(self.h_s)), self.space, &self.params)
    }

    /// Stretched ring at rest in a fluid at rest.
    pub fn initial_state(&self, disc: &Discretization, cfg: &SchemeConfig) -> Result<SystemState> {
        let x0 = disc.position(disc.s_space.interpolate(ring_initial_map));
        let x1 = disc.position(vec![0.0; disc.n_x()]);
        let u0 = disc.velocity(vec![0.0; disc.n_u()]);
        initialize(disc, u0, x0, x1, cfg)
    }
}

/// Output of a temporal study.
pub struct TemporalStudy {
    pub table: RateTable,
    pub worst_residuals: Residuals,
    pub dt_ref: f64,
}

/// Final-time L2 errors of `u` and `X` for each scheme and step, against a
/// `reference` solution computed with `min(dts)/8`.
pub fn temporal_convergence(setup: &RingSetup, schemes: &[Scheme], dts: &[f64], reference: Scheme) -> Result<TemporalStudy> {
    if dts.is_empty() || schemes.is_empty() {
        return Err(FdlmError::InvalidInput("need at least one scheme and one time step".into()));
    }
    let disc = setup.discretization()?;
    let mut worst = Residuals::default();
    let mut simulate = |scheme: Scheme, dt: f64| -> Result<SystemState> {
        let cfg = SchemeConfig::new(scheme, dt, setup.t_end);
        let st = setup.initial_state(&disc, &cfg)?;
        run(&disc, st, &setup.params, &cfg, |_, r| {
            worst = max_residuals(worst, r.residuals);
            Ok(())
        })
    };
    let dt_ref = dts.iter().copied().fold(f64::INFINITY, f64::min) / 8.0;
    let reference = simulate(reference, dt_ref)?;
    let mut cols = Vec::new();
    for s in schemes {
        cols.push(format!("{}_u", s.name()));
        cols.push(format!("{}_X", s.name()));
    }
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = RateTable::new("temporal convergence, L2 errors at final time", "dt", &col_refs);
    let mut sorted = dts.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for &dt in &sorted {
        let mut row = Vec::new();
        for &s in schemes {
            let st = simulate(s, dt)?;
            let du: Vec<f64> = st.u.coeffs.iter().zip(&reference.u.coeffs).map(|(a, b)| a - b).collect();
            let dx: Vec<f64> = st.x.coeffs.iter().zip(&reference.x.coeffs).map(|(a, b)| a - b).collect();
            row.push(disc.l2_norm_u(&du));
            row.push(disc.l2_norm_x(&dx));
        }
        table.push(dt, row);
    }
    Ok(TemporalStudy { table, worst_residuals: worst, dt_ref })
}

/// Lagrange P1 vector velocity space with the same constraints as the
/// stable elements (used as an unstable reference pair).
pub fn equal_order_velocity(mesh: Arc<TriMesh>) -> FeSpace {
    FeSpace::constrained_vector(mesh, Family::P1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{make_pressure_space, make_velocity_space, PressureElement, VelocityElement};
    use crate::mesh::build_quarter_annulus_mesh;

    #[test]
    fn rate_formula_and_scale_invariance() {
        assert!((observed_rate(0.1, 4e-2, 0.05, 1e-2) - 2.0).abs() < 1e-14);
        let mut t = RateTable::new("t", "h", &["e"]);
        t.push(0.5, vec![3.0]);
        t.push(0.25, vec![1.1]);
        t.push(0.125, vec![0.5]);
        let mut s = t.clone();
        for r in &mut s.rows {
            r.1[0] *= 17.3;
        }
        for (a, b) in t.rates(0).iter().zip(s.rates(0)) {
            assert_eq!(a.is_some(), b.is_some());
            if let (Some(a), Some(b)) = (a, b) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(t.to_csv().starts_with("h,e,e_rate\n"));
    }

    #[test]
    fn generalized_eigen_diagonal() {
        let g = Mat::from_fn(3, 3, |i, j| if i == j { [2.0, 6.0, 3.0][i] } else { 0.0 });
        let m = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, 2.0, 3.0][i] } else { 0.0 });
        let (mu, _, res) = generalized_eigen(&g, &m).unwrap();
        assert!((mu[0] - 1.0).abs() < 1e-14 && (mu[1] - 2.0).abs() < 1e-14 && (mu[2] - 3.0).abs() < 1e-14);
        assert!(res < 1e-12);
    }

    #[test]
    fn zeta_is_one_for_equal_spaces_h1() {
        let m = Arc::new(build_quarter_annulus_mesh(2, 5, 0.3, 0.5));
        let s = FeSpace::lagrange(m, 1, 2).unwrap();
        let r = estimate_zeta(&s, &s, CouplingForm::C2H1).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-10, "{}", r.estimate);
    }

    #[test]
    fn projection_constant_is_bounded_under_refinement() {
        let mut prev = None;
        for (nr, na) in [(2, 4), (4, 8), (8, 16)] {
            let m = Arc::new(build_quarter_annulus_mesh(nr, na, 0.3, 0.5));
            let s = FeSpace::lagrange(m.clone(), 1, 2).unwrap();
            let rich = FeSpace::lagrange(m, 2, 2).unwrap();
            let r = estimate_projection_constant(&s, &rich).unwrap();
            // S is contained in the probe space, on which the projection is the identity
            assert!(r.estimate >= 1.0 - 1e-10 && r.estimate < 10.0, "{}", r.estimate);
            assert!(r.eigen_residual <= 1e-8);
            let again = estimate_projection_constant(&s, &rich).unwrap();
            assert_eq!(again.estimate.to_bits(), r.estimate.to_bits());
            if let Some(p) = prev {
                assert!((r.estimate - p) / p < 0.2);
            }
            prev = Some(r.estimate);
        }
    }

    #[test]
    fn stokes_constant_separates_stable_and_equal_order_pairs() {
        let mut betas = Vec::new();
        for n in [2, 4, 8] {
            let m = Arc::new(quarter_container(n));
            let v = make_velocity_space(m.clone(), VelocityElement::P1isoP2);
            let q = make_pressure_space(m.clone(), PressureElement::BpEnhanced);
            betas.push(estimate_stokes_infsup(&v, &q).unwrap().estimate);
            let unstable = estimate_stokes_infsup(&equal_order_velocity(m.clone()), &make_pressure_space(m, PressureElement::P1));
            assert!(unstable.unwrap().estimate < 1e-6);
        }
        let lo = betas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = betas.iter().copied().fold(0.0, f64::max);
        assert!(lo > 0.1 && hi < 1.2 * lo, "{betas:?}");
    }

    #[test]
    fn stokes_single_cell_report() {
        let m = Arc::new(build_square_mesh(1, (0.0, 1.0)));
        let v = make_velocity_space(m.clone(), VelocityElement::P1isoP2);
        let q = make_pressure_space(m, PressureElement::BpEnhanced);
        let r = estimate_stokes_infsup(&v, &q).unwrap();
        assert!(r.estimate >= 0.0 && r.estimate.is_finite());
    }

    #[test]
    fn manufactured_force_matches_finite_differences() {
        let p = Manufactured::default();
        let h = 1e-4;
        for z in [[0.3, 0.7], [0.61, 0.22]] {
            let lap = p.laplace_u(z);
            let f = |a: [f64; 2]| p.u(a);
            for c in 0..2 {
                let fd = (f([z[0] + h, z[1]])[c] + f([z[0] - h, z[1]])[c] + f([z[0], z[1] + h])[c] + f([z[0], z[1] - h])[c]
                    - 4.0 * f(z)[c])
                    / (h * h);
                assert!((fd - lap[c]).abs() < 1e-4 * lap[c].abs().max(1.0), "{fd} vs {}", lap[c]);
            }
            let g = p.grad_u(z);
            assert!((g[0][0] + g[1][1]).abs() < 1e-12, "velocity must be divergence free");
            let gp = p.grad_p(z);
            let fdp = (p.p([z[0] + h, z[1]]) - p.p([z[0] - h, z[1]])) / (2.0 * h);
            assert!((fdp - gp[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_manufactured_solution_gives_zero_errors() {
        let p = Manufactured { amplitude: 0.0, ..Default::default() };
        let (t, _) = spatial_convergence(&p, 4, 1, SpaceConfig::default()).unwrap();
        assert!(t.rows[0].1.iter().all(|&e| e <= 1e-12));
    }
}
