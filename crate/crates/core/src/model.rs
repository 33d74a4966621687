//! A complete space discretization: meshes, the four spaces, the
//! time-independent matrices and the coupling assembler.

use std::borrow::Cow;
use std::sync::Arc;

use crate::coupling::{CouplingAssembler, COUPLING_QUAD_DEGREE};
use crate::error::{FdlmError, Result};
use crate::fespace::{
    make_pressure_space, make_solid_spaces, make_velocity_space, DiscreteField, FeSpace, PressureElement,
    VelocityElement,
};
use crate::forms::{
    assemble_divergence, assemble_h1_gram, assemble_lambda_product, assemble_mass, assemble_mean_vector,
    assemble_stiffness, assemble_viscous, CouplingForm, PhysParams, ViscosityField,
};
use crate::mesh::{build_quarter_annulus_for_size, build_square_mesh_tagged, Point, SquareTags, TriMesh};
use crate::sparse::SparseMat;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceConfig {
    pub velocity: VelocityElement,
    pub pressure: PressureElement,
    pub deg_s: usize,
    pub deg_lambda: usize,
    pub form: CouplingForm,
    pub coupling_quad_degree: usize,
    /// Use `nu_s` on fluid elements covered by the solid image.
    pub per_element_viscosity: bool,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            velocity: VelocityElement::P1isoP2,
            pressure: PressureElement::BpEnhanced,
            deg_s: 1,
            deg_lambda: 1,
            form: CouplingForm::C1L2,
            coupling_quad_degree: COUPLING_QUAD_DEGREE,
            per_element_viscosity: false,
        }
    }
}

pub struct Discretization {
    pub cfg: SpaceConfig,
    pub fluid_mesh: Arc<TriMesh>,
    pub solid_mesh: Arc<TriMesh>,
    pub v_space: Arc<FeSpace>,
    pub q_space: Arc<FeSpace>,
    pub s_space: Arc<FeSpace>,
    pub l_space: Arc<FeSpace>,
    /// Velocity mass matrix.
    pub m_u: SparseMat,
    /// Velocity H1 Gram (mass plus gradient).
    pub h1_u: SparseMat,
    /// Viscous matrix for the uniform viscosity `nu_f`.
    pub a_visc: SparseMat,
    /// Solid mass matrix.
    pub m_s: SparseMat,
    /// Solid gradient Gram, so that `E(X) = kappa/2 X^T K_S X`.
    pub k_s: SparseMat,
    /// Solid H1 Gram.
    pub h1_s: SparseMat,
    /// Multiplier-position pairing `c(mu, z)`.
    pub c_s: SparseMat,
    pub b_f: SparseMat,
    pub mean: Vec<f64>,
    pub coupling: CouplingAssembler,
    pub nu_f: f64,
    pub nu_s: f64,
}

impl Discretization {
    pub fn new(fluid_mesh: Arc<TriMesh>, solid_mesh: Arc<TriMesh>, cfg: SpaceConfig, params: &PhysParams) -> Result<Self> {
        params.validate()?;
        fluid_mesh.validate()?;
        solid_mesh.validate()?;
        if cfg.coupling_quad_degree == 0 {
            return Err(FdlmError::InvalidInput("coupling quadrature degree must be positive".into()));
        }
        let v_space = Arc::new(make_velocity_space(fluid_mesh.clone(), cfg.velocity));
        let q_space = Arc::new(make_pressure_space(fluid_mesh.clone(), cfg.pressure));
        let (s, l) = make_solid_spaces(solid_mesh.clone(), cfg.deg_s, cfg.deg_lambda)?;
        let (s_space, l_space) = (Arc::new(s), Arc::new(l));
        let coupling = CouplingAssembler::new(l_space.clone(), v_space.clone(), cfg.form, cfg.coupling_quad_degree);
        let m_u = assemble_mass(&v_space);
        let h1_u = SparseMat::combine(&[(1.0, &m_u), (1.0, &assemble_stiffness(&v_space))]);
        let a_visc = assemble_viscous(&v_space, &ViscosityField::Uniform(params.nu_f));
        let m_s = assemble_mass(&s_space);
        let k_s = assemble_stiffness(&s_space);
        let h1_s = assemble_h1_gram(&s_space);
        let c_s = assemble_lambda_product(&l_space, &s_space, cfg.form);
        let b_f = assemble_divergence(&v_space, &q_space);
        let mean = assemble_mean_vector(&q_space);
        Ok(Discretization {
            cfg,
            fluid_mesh,
            solid_mesh,
            v_space,
            q_space,
            s_space,
            l_space,
            m_u,
            h1_u,
            a_visc,
            m_s,
            k_s,
            h1_s,
            c_s,
            b_f,
            mean,
            coupling,
            nu_f: params.nu_f,
            nu_s: params.nu_s,
        })
    }

    pub fn n_u(&self) -> usize {
        self.v_space.n_dofs()
    }

    pub fn n_x(&self) -> usize {
        self.s_space.n_dofs()
    }

    pub fn n_lambda(&self) -> usize {
        self.l_space.n_dofs()
    }

    pub fn n_p(&self) -> usize {
        self.q_space.n_dofs()
    }

    /// Viscous matrix for the current solid configuration.
    pub fn viscous(&self, x_bar: &DiscreteField) -> Cow<'_, SparseMat> {
        if self.cfg.per_element_viscosity && self.nu_s != self.nu_f {
            let nu = ViscosityField::from_solid_image(&self.v_space, x_bar, self.nu_f, self.nu_s);
            Cow::Owned(assemble_viscous(&self.v_space, &nu))
        } else {
            Cow::Borrowed(&self.a_visc)
        }
    }

    pub fn velocity(&self, coeffs: Vec<f64>) -> DiscreteField {
        DiscreteField { space: self.v_space.clone(), coeffs }
    }

    pub fn position(&self, coeffs: Vec<f64>) -> DiscreteField {
        DiscreteField { space: self.s_space.clone(), coeffs }
    }

    pub fn multiplier(&self, coeffs: Vec<f64>) -> DiscreteField {
        DiscreteField { space: self.l_space.clone(), coeffs }
    }

    pub fn pressure(&self, coeffs: Vec<f64>) -> DiscreteField {
        DiscreteField { space: self.q_space.clone(), coeffs }
    }

    pub fn h1_norm_u(&self, u: &[f64]) -> f64 {
        self.h1_u.quad_form(u).max(0.0).sqrt()
    }

    pub fn h1_norm_x(&self, x: &[f64]) -> f64 {
        self.h1_s.quad_form(x).max(0.0).sqrt()
    }

    pub fn l2_norm_u(&self, u: &[f64]) -> f64 {
        self.m_u.quad_form(u).max(0.0).sqrt()
    }

    pub fn l2_norm_x(&self, x: &[f64]) -> f64 {
        self.m_s.quad_form(x).max(0.0).sqrt()
    }
}

/// Inner and outer radius of the reference ring.
pub const RING_RADII: (f64, f64) = (0.3, 0.5);
/// Initial stretch factor of the ring benchmark.
pub const RING_STRETCH: f64 = 1.4;

/// Quarter container `(0,1)^2` with symmetry lines on the axes, `n_cells`
/// coarse cells per side.
pub fn quarter_container(n_cells: usize) -> TriMesh {
    build_square_mesh_tagged(n_cells, (0.0, 1.0), SquareTags::QUARTER)
}

/// Quarter ring reference domain with element diameter at most `h_s`.
pub fn quarter_ring(h_s: f64) -> TriMesh {
    build_quarter_annulus_for_size(RING_RADII.0, RING_RADII.1, h_s)
}

/// Initial deformation of the ring: shrunk horizontally, stretched
/// vertically.
pub fn ring_initial_map(s: Point) -> [f64; 2] {
    [s[0] / RING_STRETCH, RING_STRETCH * s[1]]
}
