//! Legacy ASCII VTK snapshots: the fluid mesh with velocity and pressure
//! point data, and the deformed solid mesh.

use std::fmt::Write as _;
use std::path::Path;

use fdlm_core::fespace::{barycentric_in, DiscreteField};
use fdlm_core::mesh::{Point, TriMesh};
use fdlm_core::model::Discretization;
use fdlm_core::timestep::SystemState;
use fdlm_core::{FdlmError, Result};

const VERTEX_BARY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Nodal values of `field` at the nodes of its element mesh.
fn nodal_values(field: &DiscreteField) -> Vec<[f64; 2]> {
    let mesh = field.space.elem_mesh();
    let mut out = vec![[0.0; 2]; mesh.n_nodes()];
    for (e, tri) in mesh.tris.iter().enumerate() {
        for (k, &node) in tri.iter().enumerate() {
            out[node] = field.value_in(e, &VERTEX_BARY[k]);
        }
    }
    out
}

/// Values of a field living on the coarse fluid mesh at the nodes of
/// `fine`, whose element `e` lies in coarse element `parent(e)`.
fn values_on(field: &DiscreteField, fine: &TriMesh, parent: impl Fn(usize) -> usize) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; fine.n_nodes()];
    for (e, tri) in fine.tris.iter().enumerate() {
        let pe = parent(e);
        let geo = field.space.geometry(pe);
        for &node in tri {
            out[node] = field.value_in(pe, &barycentric_in(&geo, fine.nodes[node]));
        }
    }
    out
}

fn grid(s: &mut String, title: &str, nodes: &[Point], tris: &[[usize; 3]]) {
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", nodes.len());
    for p in nodes {
        let _ = writeln!(s, "{:.17e} {:.17e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", tris.len(), 4 * tris.len());
    for t in tris {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", tris.len());
    for _ in tris {
        s.push_str("5\n");
    }
}

fn vectors(s: &mut String, name: &str, v: &[[f64; 2]]) {
    let _ = writeln!(s, "VECTORS {name} double");
    for x in v {
        let _ = writeln!(s, "{:.17e} {:.17e} 0", x[0], x[1]);
    }
}

pub fn fluid_vtk(disc: &Discretization, state: &SystemState) -> String {
    let mesh = disc.v_space.elem_mesh();
    let u = nodal_values(&state.u);
    let p = values_on(&state.p, mesh, |e| disc.v_space.parent(e));
    let mut s = String::new();
    grid(&mut s, &format!("fluid step {} t {:.16e}", state.n, state.t), &mesh.nodes, &mesh.tris);
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
    vectors(&mut s, "velocity", &u);
    s.push_str("SCALARS pressure double 1\nLOOKUP_TABLE default\n");
    for v in &p {
        let _ = writeln!(s, "{:.17e}", v[0]);
    }
    s
}

/// The solid drawn in its current configuration, with the reference
/// coordinates as point data.
pub fn solid_vtk(state: &SystemState) -> String {
    let mesh = state.x.space.elem_mesh();
    let current = nodal_values(&state.x);
    let mut s = String::new();
    grid(&mut s, &format!("solid step {} t {:.16e}", state.n, state.t), &current, &mesh.tris);
    let _ = writeln!(s, "POINT_DATA {}", mesh.n_nodes());
    vectors(&mut s, "reference", &mesh.nodes);
    s
}

/// Writes `<stem>_fluid.vtk` and `<stem>_solid.vtk` in `dir`.
pub fn write_vtk_snapshot(disc: &Discretization, state: &SystemState, dir: &Path, stem: &str) -> Result<()> {
    for (suffix, body) in [("fluid", fluid_vtk(disc, state)), ("solid", solid_vtk(state))] {
        let path = dir.join(format!("{stem}_{suffix}.vtk"));
        std::fs::write(&path, body).map_err(|e| FdlmError::io(&path, e))?;
    }
    Ok(())
}

/// Reads back the point coordinates of a file written by this module.
#[cfg(test)]
fn read_points(text: &str) -> Option<Vec<Point>> {
    let mut lines = text.lines();
    let header = lines.find(|l| l.starts_with("POINTS "))?;
    let n: usize = header.split_whitespace().nth(1)?.parse().ok()?;
    lines
        .take(n)
        .map(|l| {
            let mut it = l.split_whitespace().map(|v| v.parse::<f64>());
            Some([it.next()?.ok()?, it.next()?.ok()?])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use fdlm_core::analysis::RingSetup;
    use fdlm_core::timestep::{Scheme, SchemeConfig};

    fn state() -> (Discretization, SystemState) {
        let s = RingSetup { n_cells: 2, ..RingSetup::energy_benchmark(2) };
        let d = s.discretization().unwrap();
        let st = s.initial_state(&d, &SchemeConfig::new(Scheme::BeSemi, 0.1, 1.0)).unwrap();
        (d, st)
    }

    #[test]
    fn node_counts_and_coordinate_round_trip() {
        let (d, st) = state();
        let f = fluid_vtk(&d, &st);
        let pts = read_points(&f).unwrap();
        let mesh = d.v_space.elem_mesh();
        assert_eq!(pts.len(), mesh.n_nodes());
        for (a, b) in pts.iter().zip(&mesh.nodes) {
            assert!((a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
        }
        assert!(f.contains(&format!("POINT_DATA {}", mesh.n_nodes())));
        assert!(f.contains("VECTORS velocity double"));

        let s = solid_vtk(&st);
        let pts = read_points(&s).unwrap();
        assert_eq!(pts.len(), d.solid_mesh.n_nodes());
        for (a, r) in pts.iter().zip(&d.solid_mesh.nodes) {
            let x = fdlm_core::model::ring_initial_map(*r);
            assert!((a[0] - x[0]).abs() <= 1e-12 && (a[1] - x[1]).abs() <= 1e-12);
        }
    }

    #[test]
    fn pressure_of_linear_field_is_reproduced_at_fine_nodes() {
        let (d, mut st) = state();
        st.p.coeffs = d.q_space.interpolate_scalar(|p| 1.0 + 2.0 * p[0] - p[1]);
        let mesh = d.v_space.elem_mesh();
        let p = values_on(&st.p, mesh, |e| d.v_space.parent(e));
        for (v, x) in p.iter().zip(&mesh.nodes) {
            assert!((v[0] - (1.0 + 2.0 * x[0] - x[1])).abs() < 1e-12);
        }
    }
}
