//! Finite element spaces: Lagrange P1/P2, P1-iso-P2 velocities, the
//! enhanced Bercovier-Pironneau pressure (P1 + P0), DOF maps and
//! constrained-DOF bookkeeping.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{FdlmError, Result};
use crate::mesh::{barycentric, cross, refine_uniform, sub, BoundaryTag, MeshLocator, Point, TriMesh};
use crate::quadrature::QuadRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    P1,
    P2,
    P1isoP2,
    P1plusP0,
    P0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityElement {
    TaylorHoodP2,
    P1isoP2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureElement {
    P1,
    BpEnhanced,
}

/// Marker for a local basis function with no global DOF (the dropped P0
/// function of the enhanced pressure space).
pub const NO_DOF: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LocalBasis {
    P1,
    P2,
    P1P0,
    P0,
}

impl LocalBasis {
    fn n_local(self) -> usize {
        match self {
            LocalBasis::P1 => 3,
            LocalBasis::P2 => 6,
            LocalBasis::P1P0 => 4,
            LocalBasis::P0 => 1,
        }
    }
}

/// Affine triangle data: vertices, area and the (constant) gradients of the
/// barycentric coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub verts: [Point; 3],
    pub area: f64,
    pub grad_bary: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(verts: [Point; 3]) -> ElementGeometry {
        let det = cross(sub(verts[1], verts[0]), sub(verts[2], verts[0]));
        let mut grad_bary = [[0.0; 2]; 3];
        for i in 0..3 {
            let (a, b) = (verts[(i + 1) % 3], verts[(i + 2) % 3]);
            // gradient of the barycentric coordinate of vertex i: rot(b - a) / det
            grad_bary[i] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        ElementGeometry { verts, area: 0.5 * det, grad_bary }
    }

    pub fn point(&self, l: &[f64; 3]) -> Point {
        let v = &self.verts;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }
}

/// Barycentric coordinates of `x` with respect to an element.
pub fn barycentric_in(geo: &ElementGeometry, x: Point) -> [f64; 3] {
    barycentric(&geo.verts, x)
}

/// Basis function values and physical gradients at one point of an element.
#[derive(Clone, Copy, Debug)]
pub struct BasisValues {
    pub n: usize,
    pub values: [f64; 6],
    pub grads: [[f64; 2]; 6],
}

fn eval_local(basis: LocalBasis, l: &[f64; 3], g: &[[f64; 2]; 3]) -> BasisValues {
    let mut out = BasisValues { n: basis.n_local(), values: [0.0; 6], grads: [[0.0; 2]; 6] };
    match basis {
        LocalBasis::P1 | LocalBasis::P1P0 => {
            out.values[..3].copy_from_slice(l);
            out.grads[..3].copy_from_slice(g);
            if basis == LocalBasis::P1P0 {
                out.values[3] = 1.0;
            }
        }
        LocalBasis::P2 => {
            for i in 0..3 {
                out.values[i] = l[i] * (2.0 * l[i] - 1.0);
                let s = 4.0 * l[i] - 1.0;
                out.grads[i] = [s * g[i][0], s * g[i][1]];
            }
            for (k, (i, j)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                out.values[3 + k] = 4.0 * l[i] * l[j];
                out.grads[3 + k] = [
                    4.0 * (l[i] * g[j][0] + l[j] * g[i][0]),
                    4.0 * (l[i] * g[j][1] + l[j] * g[i][1]),
                ];
            }
        }
        LocalBasis::P0 => out.values[0] = 1.0,
    }
    out
}

/// Which boundary tags produce constrained DOFs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Constraints {
    None,
    SymmetryOnly,
    WallsAndSymmetry,
}

/// A scalar or 2-vector finite element space. Vector DOFs are blocked by
/// component: DOF `(c, i)` has global index `c * n_scalar + i`.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub family: Family,
    pub components: usize,
    mesh: Arc<TriMesh>,
    elem_mesh: Arc<TriMesh>,
    parent: Option<Vec<usize>>,
    local: LocalBasis,
    elem_dofs: Vec<usize>,
    n_scalar: usize,
    dof_points: Vec<Point>,
    constrained: Vec<bool>,
}

impl FeSpace {
    fn build(
        family: Family,
        components: usize,
        mesh: Arc<TriMesh>,
        constraints: Constraints,
    ) -> FeSpace {
        let (elem_mesh, parent, local, elem_dofs, n_scalar, dof_points, tag_mesh) = match family {
            Family::P1 => {
                let dofs: Vec<usize> = mesh.tris.iter().flatten().copied().collect();
                (mesh.clone(), None, LocalBasis::P1, dofs, mesh.n_nodes(), mesh.nodes.clone(), mesh.clone())
            }
            Family::P2 => {
                let r = refine_uniform(&mesh);
                let mut dofs = Vec::with_capacity(6 * mesh.n_tris());
                for (t, tri) in mesh.tris.iter().enumerate() {
                    dofs.extend_from_slice(tri);
                    dofs.extend_from_slice(&r.edge_midpoints[t]);
                }
                let n = r.fine.n_nodes();
                let pts = r.fine.nodes.clone();
                (mesh.clone(), None, LocalBasis::P2, dofs, n, pts, Arc::new(r.fine))
            }
            Family::P1isoP2 => {
                let r = refine_uniform(&mesh);
                let fine = Arc::new(r.fine);
                let dofs: Vec<usize> = fine.tris.iter().flatten().copied().collect();
                let n = fine.n_nodes();
                let pts = fine.nodes.clone();
                (fine.clone(), Some(r.parent), LocalBasis::P1, dofs, n, pts, fine)
            }
            Family::P1plusP0 => {
                let nn = mesh.n_nodes();
                let mut dofs = Vec::with_capacity(4 * mesh.n_tris());
                let mut pts = mesh.nodes.clone();
                for (t, tri) in mesh.tris.iter().enumerate() {
                    dofs.extend_from_slice(tri);
                    // element 0's constant is dropped: P1 already holds the global constant
                    dofs.push(if t == 0 { NO_DOF } else { nn + t - 1 });
                    if t > 0 {
                        pts.push(mesh.centroid(t));
                    }
                }
                let n = nn + mesh.n_tris().saturating_sub(1);
                (mesh.clone(), None, LocalBasis::P1P0, dofs, n, pts, mesh.clone())
            }
            Family::P0 => {
                let dofs: Vec<usize> = (0..mesh.n_tris()).collect();
                let pts = (0..mesh.n_tris()).map(|t| mesh.centroid(t)).collect();
                (mesh.clone(), None, LocalBasis::P0, dofs, mesh.n_tris(), pts, mesh.clone())
            }
        };
        let mut constrained = vec![false; components * n_scalar];
        if constraints != Constraints::None && components == 2 {
            for e in &tag_mesh.boundary_edges {
                let comps: &[usize] = match e.tag {
                    BoundaryTag::OuterWall if constraints == Constraints::WallsAndSymmetry => &[0, 1],
                    BoundaryTag::OuterWall => &[],
                    BoundaryTag::SymmetryX => &[0],
                    BoundaryTag::SymmetryY => &[1],
                    BoundaryTag::Free => &[],
                };
                for &node in &e.nodes {
                    for &c in comps {
                        constrained[c * n_scalar + node] = true;
                    }
                }
            }
        }
        FeSpace {
            family,
            components,
            mesh,
            elem_mesh,
            parent,
            local,
            elem_dofs,
            n_scalar,
            dof_points,
            constrained,
        }
    }

    /// Unconstrained Lagrange space of the given degree (1 or 2).
    pub fn lagrange(mesh: Arc<TriMesh>, degree: usize, components: usize) -> Result<FeSpace> {
        let family = match degree {
            1 => Family::P1,
            2 => Family::P2,
            _ => return Err(FdlmError::InvalidInput(format!("unsupported Lagrange degree {degree}"))),
        };
        Ok(FeSpace::build(family, components, mesh, Constraints::None))
    }

    /// Vector Lagrange space with the normal component constrained on
    /// symmetry lines only (walls are ignored).
    pub fn symmetric_vector(mesh: Arc<TriMesh>, family: Family) -> FeSpace {
        FeSpace::build(family, 2, mesh, Constraints::SymmetryOnly)
    }

    /// Vector Lagrange space with wall/symmetry constraints taken from the
    /// boundary tags.
    pub fn constrained_vector(mesh: Arc<TriMesh>, family: Family) -> FeSpace {
        FeSpace::build(family, 2, mesh, Constraints::WallsAndSymmetry)
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    /// Mesh whose triangles carry the local basis (the refined mesh for
    /// P1-iso-P2, the base mesh otherwise).
    pub fn elem_mesh(&self) -> &Arc<TriMesh> {
        &self.elem_mesh
    }

    /// Base-mesh triangle containing element `e`.
    pub fn parent(&self, e: usize) -> usize {
        self.parent.as_ref().map_or(e, |p| p[e])
    }

    pub fn n_elements(&self) -> usize {
        self.elem_mesh.n_tris()
    }

    pub fn n_local(&self) -> usize {
        self.local.n_local()
    }

    pub fn n_scalar(&self) -> usize {
        self.n_scalar
    }

    pub fn n_dofs(&self) -> usize {
        self.components * self.n_scalar
    }

    pub fn dof(&self, comp: usize, i: usize) -> usize {
        comp * self.n_scalar + i
    }

    /// Scalar DOFs of element `e`; entries may be [`NO_DOF`].
    pub fn elem_dofs(&self, e: usize) -> &[usize] {
        let k = self.n_local();
        &self.elem_dofs[e * k..(e + 1) * k]
    }

    pub fn geometry(&self, e: usize) -> ElementGeometry {
        ElementGeometry::new(self.elem_mesh.vertices(e))
    }

    pub fn basis(&self, geo: &ElementGeometry, l: &[f64; 3]) -> BasisValues {
        eval_local(self.local, l, &geo.grad_bary)
    }

    /// Polynomial degree of the local basis.
    pub fn degree(&self) -> usize {
        match self.local {
            LocalBasis::P0 => 0,
            LocalBasis::P1 | LocalBasis::P1P0 => 1,
            LocalBasis::P2 => 2,
        }
    }

    /// Node associated with each scalar DOF (element centroid for constants).
    pub fn dof_points(&self) -> &[Point] {
        &self.dof_points
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.constrained[dof]
    }

    pub fn constrained_mask(&self) -> &[bool] {
        &self.constrained
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| self.constrained[d]).collect()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| !self.constrained[d]).collect()
    }

    /// Nodal interpolant of a vector function. For P1+P0 the constant part
    /// is left at zero.
    pub fn interpolate(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let mut v = vec![0.0; self.n_dofs()];
        let nodal = self.nodal_dofs();
        for i in 0..nodal {
            let val = f(self.dof_points[i]);
            for c in 0..self.components {
                v[c * self.n_scalar + i] = val[c];
            }
        }
        v
    }

    pub fn interpolate_scalar(&self, f: impl Fn(Point) -> f64) -> Vec<f64> {
        self.interpolate(|p| [f(p), 0.0])
    }

    /// Number of leading scalar DOFs that are point values.
    fn nodal_dofs(&self) -> usize {
        match self.local {
            LocalBasis::P1P0 => self.mesh.n_nodes(),
            _ => self.n_scalar,
        }
    }

    /// Coefficients of the function equal to `value` in every component.
    pub fn constant(&self, value: [f64; 2]) -> Vec<f64> {
        self.interpolate(|_| value)
    }
}

/// Velocity space on the fluid mesh with walls and symmetry lines
/// constrained (normal component only on symmetry lines).
pub fn make_velocity_space(fluid_mesh: Arc<TriMesh>, variant: VelocityElement) -> FeSpace {
    let family = match variant {
        VelocityElement::TaylorHoodP2 => Family::P2,
        VelocityElement::P1isoP2 => Family::P1isoP2,
    };
    FeSpace::build(family, 2, fluid_mesh, Constraints::WallsAndSymmetry)
}

/// Scalar pressure space on the (unrefined) fluid mesh.
pub fn make_pressure_space(fluid_mesh: Arc<TriMesh>, variant: PressureElement) -> FeSpace {
    let family = match variant {
        PressureElement::P1 => Family::P1,
        PressureElement::BpEnhanced => Family::P1plusP0,
    };
    FeSpace::build(family, 1, fluid_mesh, Constraints::None)
}

/// Position space `S_h` and multiplier space `Lambda_h` on the solid mesh.
/// Position and multiplier spaces on the solid reference mesh. Edges tagged
/// as symmetry lines constrain the normal component. Requires
/// `deg_lambda <= deg_s` so that `Lambda_h` is contained in `S_h`.
pub fn make_solid_spaces(solid_mesh: Arc<TriMesh>, deg_s: usize, deg_lambda: usize) -> Result<(FeSpace, FeSpace)> {
    if !(1..=2).contains(&deg_s) || !(1..=2).contains(&deg_lambda) {
        return Err(FdlmError::InvalidInput("solid space degrees must be 1 or 2".into()));
    }
    if deg_lambda > deg_s {
        return Err(FdlmError::InvalidInput(format!(
            "multiplier degree {deg_lambda} exceeds position degree {deg_s}: dim(S_h) >= dim(Lambda_h) is required"
        )));
    }
    let fam = |d| if d == 1 { Family::P1 } else { Family::P2 };
    let s = FeSpace::symmetric_vector(solid_mesh.clone(), fam(deg_s));
    let l = FeSpace::symmetric_vector(solid_mesh, fam(deg_lambda));
    Ok((s, l))
}

/// Coefficient vector bound to its space.
#[derive(Clone, Debug)]
pub struct DiscreteField {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl DiscreteField {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<DiscreteField> {
        if coeffs.len() != space.n_dofs() {
            return Err(FdlmError::InvalidInput(format!(
                "field has {} coefficients, space has {} DOFs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(DiscreteField { space, coeffs })
    }

    pub fn zeros(space: Arc<FeSpace>) -> DiscreteField {
        let n = space.n_dofs();
        DiscreteField { space, coeffs: vec![0.0; n] }
    }

    /// Value (per component) inside element `e` at barycentric point `l`.
    pub fn value_in(&self, e: usize, l: &[f64; 3]) -> [f64; 2] {
        let sp = &self.space;
        let geo = sp.geometry(e);
        let b = sp.basis(&geo, l);
        let mut v = [0.0; 2];
        for (k, &d) in sp.elem_dofs(e).iter().enumerate() {
            if d == NO_DOF {
                continue;
            }
            for (c, vc) in v.iter_mut().enumerate().take(sp.components) {
                *vc += b.values[k] * self.coeffs[sp.dof(c, d)];
            }
        }
        v
    }

    /// Gradient inside element `e`: row `c` is the gradient of component `c`.
    pub fn grad_in(&self, e: usize, l: &[f64; 3]) -> [[f64; 2]; 2] {
        let sp = &self.space;
        let geo = sp.geometry(e);
        let b = sp.basis(&geo, l);
        let mut g = [[0.0; 2]; 2];
        for (k, &d) in sp.elem_dofs(e).iter().enumerate() {
            if d == NO_DOF {
                continue;
            }
            for (c, gc) in g.iter_mut().enumerate().take(sp.components) {
                let a = self.coeffs[sp.dof(c, d)];
                gc[0] += a * b.grads[k][0];
                gc[1] += a * b.grads[k][1];
            }
        }
        g
    }

    /// L2 and H1-seminorm errors against an exact function and gradient.
    pub fn errors(
        &self,
        exact: impl Fn(Point) -> [f64; 2],
        exact_grad: impl Fn(Point) -> [[f64; 2]; 2],
        quad: &QuadRule,
    ) -> (f64, f64) {
        let sp = &self.space;
        let (mut l2, mut h1) = (0.0, 0.0);
        for e in 0..sp.n_elements() {
            let geo = sp.geometry(e);
            for (l, w) in quad.points.iter().zip(&quad.weights) {
                let x = geo.point(l);
                let (v, g) = (self.value_in(e, l), self.grad_in(e, l));
                let (ve, ge) = (exact(x), exact_grad(x));
                for c in 0..sp.components {
                    l2 += w * geo.area * (v[c] - ve[c]).powi(2);
                    h1 += w * geo.area * ((g[c][0] - ge[c][0]).powi(2) + (g[c][1] - ge[c][1]).powi(2));
                }
            }
        }
        (l2.sqrt(), h1.sqrt())
    }

    /// Text dump: `field <name> ndofs <N>` then one coefficient per line.
    pub fn to_text(&self, name: &str) -> String {
        let mut s = String::with_capacity(26 * self.coeffs.len() + 32);
        let _ = writeln!(s, "field {} ndofs {}", name, self.coeffs.len());
        for c in &self.coeffs {
            let _ = writeln!(s, "{c:.17e}");
        }
        s
    }

    /// Parses a dump produced by [`DiscreteField::to_text`], returning the
    /// field name and coefficients.
    pub fn parse_text(text: &str) -> Result<(String, Vec<f64>)> {
        let bad = |m: &str| FdlmError::Parse(format!("field: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let h: Vec<&str> = lines.next().ok_or_else(|| bad("empty input"))?.split_whitespace().collect();
        if h.len() != 4 || h[0] != "field" || h[2] != "ndofs" {
            return Err(bad("expected header `field <name> ndofs <N>`"));
        }
        let n: usize = h[3].parse().map_err(|_| bad("dof count"))?;
        let coeffs: Vec<f64> = lines
            .map(|l| l.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("coefficient"))?;
        if coeffs.len() != n {
            return Err(bad("coefficient count does not match header"));
        }
        Ok((h[1].to_string(), coeffs))
    }

    pub fn write(&self, name: &str, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text(name)).map_err(|e| FdlmError::io(path, e))
    }
}

/// Evaluates a field at a physical point located with a locator built on the
/// field's element mesh.
pub fn eval_field(field: &DiscreteField, locator: &MeshLocator, point: Point) -> Result<Vec<f64>> {
    debug_assert_eq!(locator.n_tris(), field.space.n_elements(), "locator built on a different mesh");
    let (e, l) = locator.locate_or_err(point)?;
    let v = field.value_in(e, &l);
    Ok(v[..field.space.components].to_vec())
}
