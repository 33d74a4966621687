//! Structured triangulations of the fluid container and the solid reference
//! domain, uniform refinement, and point location.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FdlmError, Result};

pub type Point = [f64; 2];

/// Boundary condition marker carried by boundary edges.
///
/// `SymmetryX` marks an edge on a line `x = const` (normal along x), so only
/// the x component of the velocity is constrained there; `SymmetryY` likewise
/// for lines `y = const`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    OuterWall,
    SymmetryX,
    SymmetryY,
    Free,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::OuterWall => "OuterWall",
            BoundaryTag::SymmetryX => "SymmetryX",
            BoundaryTag::SymmetryY => "SymmetryY",
            BoundaryTag::Free => "Free",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "OuterWall" => Some(BoundaryTag::OuterWall),
            "SymmetryX" => Some(BoundaryTag::SymmetryX),
            "SymmetryY" => Some(BoundaryTag::SymmetryY),
            "Free" => Some(BoundaryTag::Free),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    /// Counterclockwise node triples.
    pub tris: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

/// Barycentric coordinates of `p` with respect to triangle `(a, b, c)`.
pub fn barycentric(v: &[Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = *v;
    let det = cross(sub(b, a), sub(c, a));
    let lb = cross(sub(p, a), sub(c, a)) / det;
    let lc = cross(sub(b, a), sub(p, a)) / det;
    [1.0 - lb - lc, lb, lc]
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_tris(&self) -> usize {
        self.tris.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [i, j, k] = self.tris[t];
        [self.nodes[i], self.nodes[j], self.nodes[k]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        0.5 * cross(sub(b, a), sub(c, a))
    }

    pub fn area(&self) -> f64 {
        (0..self.n_tris()).map(|t| self.signed_area(t)).sum()
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.n_tris()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.vertices(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Map from each undirected edge to the triangles containing it.
    fn edge_owners(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.tris.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                owners.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        owners
    }

    /// Edges that belong to exactly one triangle, each tagged `Free`.
    pub fn topological_boundary(&self) -> Vec<BoundaryEdge> {
        let mut edges: Vec<BoundaryEdge> = self
            .edge_owners()
            .into_iter()
            .filter(|(_, o)| o.len() == 1)
            .map(|((a, b), _)| BoundaryEdge { nodes: [a, b], tag: BoundaryTag::Free })
            .collect();
        edges.sort_by_key(|e| e.nodes);
        edges
    }

    /// Checks the structural invariants: indices in range, positive areas,
    /// and every boundary edge owned by exactly one triangle.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        for (t, tri) in self.tris.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(FdlmError::InvalidInput(format!("triangle {t} has an out-of-range node")));
            }
            if self.signed_area(t) <= 0.0 {
                return Err(FdlmError::InvalidInput(format!("triangle {t} has non-positive area")));
            }
        }
        let owners = self.edge_owners();
        for e in &self.boundary_edges {
            let [a, b] = e.nodes;
            match owners.get(&(a.min(b), a.max(b))) {
                Some(o) if o.len() == 1 => {}
                _ => {
                    return Err(FdlmError::InvalidInput(format!(
                        "boundary edge ({a}, {b}) is not owned by exactly one triangle"
                    )))
                }
            }
        }
        Ok(())
    }

    /// Nodes lying on boundary edges with the given tag.
    pub fn nodes_with_tag(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Plain-text dump: `nodes N tris T`, node lines, triangle lines, then an
    /// `edges E` section with `i j tag` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "nodes {} tris {}", self.n_nodes(), self.n_tris());
        for p in &self.nodes {
            let _ = writeln!(s, "{:.17e} {:.17e}", p[0], p[1]);
        }
        for t in &self.tris {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "edges {}", self.boundary_edges.len());
        for e in &self.boundary_edges {
            let _ = writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.tag.name());
        }
        s
    }

    /// Parses the format written by [`TriMesh::to_text`]. The `edges` section
    /// is optional; without it the topological boundary is tagged `Free`.
    pub fn from_text(text: &str) -> Result<TriMesh> {
        let bad = |m: &str| FdlmError::Parse(format!("mesh: {m}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty input"))?.split_whitespace().collect();
        if header.len() != 4 || header[0] != "nodes" || header[2] != "tris" {
            return Err(bad("expected header `nodes <N> tris <T>`"));
        }
        let n: usize = header[1].parse().map_err(|_| bad("node count"))?;
        let t: usize = header[3].parse().map_err(|_| bad("triangle count"))?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let l = lines.next().ok_or_else(|| bad("truncated node list"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("node coordinates"))?;
            if v.len() != 2 {
                return Err(bad("node line needs two coordinates"));
            }
            nodes.push([v[0], v[1]]);
        }
        let mut tris = Vec::with_capacity(t);
        for _ in 0..t {
            let l = lines.next().ok_or_else(|| bad("truncated triangle list"))?;
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() < 3 {
                return Err(bad("triangle line needs three indices"));
            }
            let mut tri = [0usize; 3];
            for k in 0..3 {
                tri[k] = v[k].parse().map_err(|_| bad("triangle index"))?;
            }
            tris.push(tri);
        }
        let mut mesh = TriMesh { nodes, tris, boundary_edges: Vec::new() };
        match lines.next() {
            Some(l) => {
                let h: Vec<&str> = l.split_whitespace().collect();
                if h.len() != 2 || h[0] != "edges" {
                    return Err(bad("expected `edges <E>`"));
                }
                let e: usize = h[1].parse().map_err(|_| bad("edge count"))?;
                for _ in 0..e {
                    let l = lines.next().ok_or_else(|| bad("truncated edge list"))?;
                    let v: Vec<&str> = l.split_whitespace().collect();
                    if v.len() != 3 {
                        return Err(bad("edge line needs `i j tag`"));
                    }
                    let a = v[0].parse().map_err(|_| bad("edge index"))?;
                    let b = v[1].parse().map_err(|_| bad("edge index"))?;
                    let tag = BoundaryTag::parse(v[2]).ok_or_else(|| bad("unknown boundary tag"))?;
                    mesh.boundary_edges.push(BoundaryEdge { nodes: [a, b], tag });
                }
            }
            None => mesh.boundary_edges = mesh.topological_boundary(),
        }
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| FdlmError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<TriMesh> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| FdlmError::io(&path, e))?;
        TriMesh::from_text(&text)
    }
}

/// Tags of the four sides of a square mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SquareTags {
    pub left: BoundaryTag,
    pub right: BoundaryTag,
    pub bottom: BoundaryTag,
    pub top: BoundaryTag,
}

impl SquareTags {
    pub const WALLS: SquareTags = SquareTags {
        left: BoundaryTag::OuterWall,
        right: BoundaryTag::OuterWall,
        bottom: BoundaryTag::OuterWall,
        top: BoundaryTag::OuterWall,
    };

    /// First-quadrant quarter of a symmetric container: symmetry lines on the
    /// left (x = const) and bottom (y = const) sides, walls elsewhere.
    pub const QUARTER: SquareTags = SquareTags {
        left: BoundaryTag::SymmetryX,
        right: BoundaryTag::OuterWall,
        bottom: BoundaryTag::SymmetryY,
        top: BoundaryTag::OuterWall,
    };
}

/// Uniform square mesh of `n_cells x n_cells` cells with alternating
/// diagonals, all sides tagged `OuterWall`.
pub fn build_square_mesh(n_cells: usize, extent: (f64, f64)) -> TriMesh {
    build_square_mesh_tagged(n_cells, extent, SquareTags::WALLS)
}

pub fn build_square_mesh_tagged(n_cells: usize, extent: (f64, f64), tags: SquareTags) -> TriMesh {
    assert!(n_cells >= 1, "n_cells must be positive");
    let n = n_cells;
    let (a, b) = extent;
    let h = (b - a) / n as f64;
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            // exact endpoints so that boundary nodes sit on the box
            let x = if i == n { b } else { a + i as f64 * h };
            let y = if j == n { b } else { a + j as f64 * h };
            nodes.push([x, y]);
        }
    }
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (p00, p10, p01, p11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            } else {
                tris.push([p00, p10, p01]);
                tris.push([p10, p11, p01]);
            }
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary_edges.push(BoundaryEdge { nodes: [id(i, 0), id(i + 1, 0)], tag: tags.bottom });
        boundary_edges.push(BoundaryEdge { nodes: [id(n, i), id(n, i + 1)], tag: tags.right });
        boundary_edges.push(BoundaryEdge { nodes: [id(i + 1, n), id(i, n)], tag: tags.top });
        boundary_edges.push(BoundaryEdge { nodes: [id(0, i + 1), id(0, i)], tag: tags.left });
    }
    TriMesh { nodes, tris, boundary_edges }
}

/// Polar-grid triangulation of the first-quadrant ring `r_in <= |x| <= r_out`.
/// Arcs are faceted and tagged `Free`; the straight edges on the axes are
/// symmetry lines (`SymmetryY` on `y = 0`, `SymmetryX` on `x = 0`).
pub fn build_quarter_annulus_mesh(n_radial: usize, n_angular: usize, r_in: f64, r_out: f64) -> TriMesh {
    assert!(n_radial >= 1 && n_angular >= 1, "cell counts must be positive");
    assert!(0.0 < r_in && r_in < r_out, "need 0 < r_in < r_out");
    let (nr, na) = (n_radial, n_angular);
    let id = |k: usize, l: usize| l * (nr + 1) + k;
    let mut nodes = Vec::with_capacity((nr + 1) * (na + 1));
    for l in 0..=na {
        let theta = std::f64::consts::FRAC_PI_2 * l as f64 / na as f64;
        let (s, c) = if l == 0 {
            (0.0, 1.0)
        } else if l == na {
            (1.0, 0.0)
        } else {
            theta.sin_cos()
        };
        for k in 0..=nr {
            let r = r_in + (r_out - r_in) * k as f64 / nr as f64;
            nodes.push([r * c, r * s]);
        }
    }
    let mut tris = Vec::with_capacity(2 * nr * na);
    for l in 0..na {
        for k in 0..nr {
            let (p00, p10, p01, p11) = (id(k, l), id(k + 1, l), id(k, l + 1), id(k + 1, l + 1));
            if (k + l) % 2 == 0 {
                tris.push([p00, p10, p11]);
                tris.push([p00, p11, p01]);
            } else {
                tris.push([p00, p10, p01]);
                tris.push([p10, p11, p01]);
            }
        }
    }
    let free = BoundaryTag::Free;
    let mut boundary_edges = Vec::new();
    for k in 0..nr {
        boundary_edges.push(BoundaryEdge { nodes: [id(k, 0), id(k + 1, 0)], tag: BoundaryTag::SymmetryY });
        boundary_edges.push(BoundaryEdge { nodes: [id(k + 1, na), id(k, na)], tag: BoundaryTag::SymmetryX });
    }
    for l in 0..na {
        boundary_edges.push(BoundaryEdge { nodes: [id(nr, l), id(nr, l + 1)], tag: free });
        boundary_edges.push(BoundaryEdge { nodes: [id(0, l + 1), id(0, l)], tag: free });
    }
    TriMesh { nodes, tris, boundary_edges }
}

/// Cell counts `(n_radial, n_angular)` with the fewest cells whose polar-grid
/// triangulation has every element diameter `<= h`.
pub fn quarter_annulus_counts_for_size(r_in: f64, r_out: f64, h: f64) -> (usize, usize) {
    assert!(h > 0.0);
    let mut best: Option<(usize, usize)> = None;
    let max_nr = ((r_out - r_in) / h).ceil() as usize + 8;
    for nr in 1..=max_nr {
        let dr = (r_out - r_in) / nr as f64;
        if dr > h {
            continue;
        }
        // the outermost cell has the longest chord and diagonal
        let r0 = r_out - dr;
        let mut na = 1usize;
        loop {
            let dt = std::f64::consts::FRAC_PI_2 / na as f64;
            let chord = 2.0 * r_out * (0.5 * dt).sin();
            let diag = (r0 * r0 + r_out * r_out - 2.0 * r0 * r_out * dt.cos()).max(0.0).sqrt();
            if chord.max(diag) <= h {
                break;
            }
            na += 1;
        }
        let better = match best {
            None => true,
            Some((bn, ba)) => nr * na < bn * ba,
        };
        if better {
            best = Some((nr, na));
        }
    }
    best.expect("some radial count satisfies the size bound")
}

/// Quarter annulus whose element diameters do not exceed `h`.
pub fn build_quarter_annulus_for_size(r_in: f64, r_out: f64, h: f64) -> TriMesh {
    let (nr, na) = quarter_annulus_counts_for_size(r_in, r_out, h);
    build_quarter_annulus_mesh(nr, na, r_in, r_out)
}

/// Result of one uniform (red) refinement.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub fine: TriMesh,
    /// Children of coarse triangle `t` are `children[t]`, the last one being
    /// the interior triangle.
    pub children: Vec<[usize; 4]>,
    /// Fine-mesh node index of the midpoints of edges (0,1), (1,2), (2,0) of
    /// each coarse triangle.
    pub edge_midpoints: Vec<[usize; 3]>,
    /// Coarse parent of each fine triangle.
    pub parent: Vec<usize>,
}

/// Splits every triangle into four through its edge midpoints. Coarse nodes
/// keep their indices; midpoints are appended.
pub fn refine_uniform(mesh: &TriMesh) -> Refinement {
    let mut nodes = mesh.nodes.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            let (p, q) = (nodes[a], nodes[b]);
            nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            nodes.len() - 1
        })
    };
    let mut tris = Vec::with_capacity(4 * mesh.n_tris());
    let mut children = Vec::with_capacity(mesh.n_tris());
    let mut edge_midpoints = Vec::with_capacity(mesh.n_tris());
    let mut parent = Vec::with_capacity(4 * mesh.n_tris());
    for (t, &[a, b, c]) in mesh.tris.iter().enumerate() {
        let mab = midpoint(a, b, &mut nodes);
        let mbc = midpoint(b, c, &mut nodes);
        let mca = midpoint(c, a, &mut nodes);
        let base = tris.len();
        tris.push([a, mab, mca]);
        tris.push([mab, b, mbc]);
        tris.push([mca, mbc, c]);
        tris.push([mab, mbc, mca]);
        children.push([base, base + 1, base + 2, base + 3]);
        edge_midpoints.push([mab, mbc, mca]);
        parent.extend([t; 4]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.nodes;
        let m = mid[&(a.min(b), a.max(b))];
        boundary_edges.push(BoundaryEdge { nodes: [a, m], tag: e.tag });
        boundary_edges.push(BoundaryEdge { nodes: [m, b], tag: e.tag });
    }
    Refinement {
        fine: TriMesh { nodes, tris, boundary_edges },
        children,
        edge_midpoints,
        parent,
    }
}

/// Tolerance on barycentric coordinates when deciding triangle membership.
pub const LOCATE_TOL: f64 = 1e-12;

/// Uniform background grid mapping points to candidate triangles.
#[derive(Clone, Debug)]
pub struct MeshLocator {
    origin: Point,
    bin: f64,
    nx: usize,
    ny: usize,
    /// Candidate triangles per bin, ascending.
    bins: Vec<Vec<u32>>,
    verts: Vec<[Point; 3]>,
}

impl MeshLocator {
    pub fn new(mesh: &TriMesh) -> MeshLocator {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let bin = mesh.max_diameter().max(1e-300);
        let pad = 1e-9 * bin;
        let origin = [lo[0] - pad, lo[1] - pad];
        let nx = (((hi[0] - origin[0] + pad) / bin).ceil() as usize).max(1);
        let ny = (((hi[1] - origin[1] + pad) / bin).ceil() as usize).max(1);
        let mut bins = vec![Vec::new(); nx * ny];
        let verts: Vec<[Point; 3]> = (0..mesh.n_tris()).map(|t| mesh.vertices(t)).collect();
        let clampi = |v: f64, n: usize| -> usize { (v.floor().max(0.0) as usize).min(n - 1) };
        for (t, v) in verts.iter().enumerate() {
            let (mut bl, mut bh) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in v {
                for d in 0..2 {
                    bl[d] = bl[d].min(p[d]);
                    bh[d] = bh[d].max(p[d]);
                }
            }
            let i0 = clampi((bl[0] - pad - origin[0]) / bin, nx);
            let i1 = clampi((bh[0] + pad - origin[0]) / bin, nx);
            let j0 = clampi((bl[1] - pad - origin[1]) / bin, ny);
            let j1 = clampi((bh[1] + pad - origin[1]) / bin, ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(t as u32);
                }
            }
        }
        MeshLocator { origin, bin, nx, ny, bins, verts }
    }

    /// Owning triangle and barycentric coordinates of `p`, or `None` when the
    /// point lies outside the mesh. Points on shared edges go to the lowest
    /// triangle index.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let fx = (p[0] - self.origin[0]) / self.bin;
        let fy = (p[1] - self.origin[1]) / self.bin;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        if i >= self.nx || j >= self.ny {
            return None;
        }
        for &t in &self.bins[j * self.nx + i] {
            let l = barycentric(&self.verts[t as usize], p);
            if l.iter().all(|&x| x >= -LOCATE_TOL) {
                return Some((t as usize, l));
            }
        }
        None
    }

    /// Number of triangles of the indexed mesh.
    pub fn n_tris(&self) -> usize {
        self.verts.len()
    }

    pub fn locate_or_err(&self, p: Point) -> Result<(usize, [f64; 3])> {
        self.locate(p).ok_or(FdlmError::Outside(p))
    }
}
