//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use fdlm_core::analysis::RingSetup;
use fdlm_core::fespace::{PressureElement, VelocityElement};
use fdlm_core::forms::{CouplingForm, PhysParams};
use fdlm_core::model::SpaceConfig;
use fdlm_core::timestep::{Scheme, SchemeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Job {
    Benchmark,
    TemporalConvergence,
    SpatialConvergence,
    InfSup,
}

impl Job {
    pub fn name(self) -> &'static str {
        match self {
            Job::Benchmark => "benchmark",
            Job::TemporalConvergence => "temporal_convergence",
            Job::SpatialConvergence => "spatial_convergence",
            Job::InfSup => "infsup",
        }
    }

    fn parse(s: &str) -> Option<Job> {
        [Job::Benchmark, Job::TemporalConvergence, Job::SpatialConvergence, Job::InfSup]
            .into_iter()
            .find(|j| j.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub job: Job,
    pub n_cells: usize,
    pub h_s: f64,
    pub params: PhysParams,
    pub scheme: SchemeConfig,
    pub space: SpaceConfig,
    /// Time steps of a temporal study.
    pub dts: Vec<f64>,
    /// Schemes of a temporal study.
    pub schemes: Vec<Scheme>,
    /// Scheme of the fine-step reference solution of a temporal study.
    pub reference: Scheme,
    /// Refinement levels of a spatial study.
    pub levels: usize,
    pub out_dir: Option<PathBuf>,
    pub snapshot_stride: usize,
}

pub const KEYS: &[&str] = &[
    "job",
    "n_cells",
    "h_s",
    "rho_f",
    "delta_rho",
    "nu",
    "nu_f",
    "nu_s",
    "kappa",
    "scheme",
    "dt",
    "t_end",
    "fp_tol",
    "fp_max_iter",
    "dts",
    "schemes",
    "reference",
    "levels",
    "coupling",
    "velocity",
    "pressure",
    "deg_s",
    "deg_lambda",
    "coupling_quad_degree",
    "per_element_viscosity",
    "out_dir",
    "snapshot_stride",
];

#[derive(Debug, PartialEq)]
pub struct ParseError(pub String);

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ParseError> {
    v.parse().map_err(|_| ParseError(format!("{key}: cannot parse `{v}`")))
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str) -> Result<T, ParseError>) -> Result<Vec<T>, ParseError> {
    let items: Vec<T> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(ParseError(format!("{key}: empty list")));
    }
    Ok(items)
}

fn scheme(key: &str, v: &str) -> Result<Scheme, ParseError> {
    Scheme::parse(v).ok_or_else(|| ParseError(format!("{key}: unknown scheme `{v}` (BE_semi, BDF2, BDF2_extrap, BE_implicit)")))
}

impl RunConfig {
    /// Parses and validates a configuration. Nothing is allocated beyond the
    /// config itself.
    pub fn parse(text: &str) -> Result<RunConfig, ParseError> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ParseError(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ParseError(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if v.is_empty() {
                return Err(ParseError(format!("line {}: empty value for `{k}`", i + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ParseError(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let job_s = get("job").ok_or_else(|| ParseError("missing key `job`".into()))?;
        let job = Job::parse(job_s).ok_or_else(|| ParseError(format!("job: unknown job `{job_s}`")))?;

        let defaults = match job {
            Job::TemporalConvergence => RingSetup::temporal_benchmark(),
            _ => RingSetup::energy_benchmark(8),
        };
        let mut params = defaults.params;
        if let Some(v) = get("nu") {
            if get("nu_f").is_some() || get("nu_s").is_some() {
                return Err(ParseError("`nu` cannot be combined with `nu_f`/`nu_s`".into()));
            }
            params.nu_f = num("nu", v)?;
            params.nu_s = params.nu_f;
        }
        for (k, slot) in [
            ("rho_f", &mut params.rho_f),
            ("delta_rho", &mut params.delta_rho),
            ("nu_f", &mut params.nu_f),
            ("nu_s", &mut params.nu_s),
            ("kappa", &mut params.kappa),
        ] {
            if let Some(v) = get(k) {
                *slot = num(k, v)?;
            }
        }
        params.validate().map_err(|e| ParseError(e.to_string()))?;

        let mut space = SpaceConfig::default();
        if let Some(v) = get("coupling") {
            space.form = CouplingForm::parse(v).ok_or_else(|| ParseError(format!("coupling: unknown form `{v}` (C1_L2, C2_H1)")))?;
        }
        if let Some(v) = get("velocity") {
            space.velocity = match v {
                "P1isoP2" => VelocityElement::P1isoP2,
                "TaylorHood" => VelocityElement::TaylorHoodP2,
                _ => return Err(ParseError(format!("velocity: unknown element `{v}` (P1isoP2, TaylorHood)"))),
            };
        }
        if let Some(v) = get("pressure") {
            space.pressure = match v {
                "P1" => PressureElement::P1,
                "BPenhanced" => PressureElement::BpEnhanced,
                _ => return Err(ParseError(format!("pressure: unknown element `{v}` (P1, BPenhanced)"))),
            };
        }
        if let Some(v) = get("deg_s") {
            space.deg_s = num("deg_s", v)?;
        }
        if let Some(v) = get("deg_lambda") {
            space.deg_lambda = num("deg_lambda", v)?;
        }
        if !(1..=2).contains(&space.deg_s) || !(1..=2).contains(&space.deg_lambda) || space.deg_lambda > space.deg_s {
            return Err(ParseError("need 1 <= deg_lambda <= deg_s <= 2".into()));
        }
        if let Some(v) = get("coupling_quad_degree") {
            space.coupling_quad_degree = num("coupling_quad_degree", v)?;
            if ![1, 2, 4, 5].contains(&space.coupling_quad_degree) {
                return Err(ParseError("coupling_quad_degree must be one of 1, 2, 4, 5".into()));
            }
        }
        if let Some(v) = get("per_element_viscosity") {
            space.per_element_viscosity = num("per_element_viscosity", v)?;
        }

        let n_cells = get("n_cells").map(|v| num("n_cells", v)).transpose()?.unwrap_or(defaults.n_cells);
        if n_cells == 0 || n_cells > 256 {
            return Err(ParseError("n_cells must be in 1..=256".into()));
        }
        let h_s = get("h_s").map(|v| num("h_s", v)).transpose()?.unwrap_or(defaults.h_s);
        if !(h_s > 1e-3 && h_s <= 1.0) {
            return Err(ParseError("h_s must be in (0.001, 1]".into()));
        }

        let sch = get("scheme").map(|v| scheme("scheme", v)).transpose()?.unwrap_or(Scheme::BeSemi);
        let dt = get("dt").map(|v| num("dt", v)).transpose()?.unwrap_or(0.05);
        let t_end = get("t_end").map(|v| num("t_end", v)).transpose()?.unwrap_or(defaults.t_end);
        let mut scheme_cfg = SchemeConfig::new(sch, dt, t_end);
        if let Some(v) = get("fp_tol") {
            scheme_cfg.fp_tol = num("fp_tol", v)?;
        }
        if let Some(v) = get("fp_max_iter") {
            scheme_cfg.fp_max_iter = num("fp_max_iter", v)?;
        }
        scheme_cfg.validate().map_err(|e| ParseError(e.to_string()))?;

        let dts = match get("dts") {
            Some(v) => list("dts", v, |s| num("dts", s))?,
            None => vec![0.05, 0.025, 0.0125, 0.00625],
        };
        if dts.iter().any(|&d: &f64| !(d > 0.0 && d <= t_end)) {
            return Err(ParseError("dts entries must lie in (0, t_end]".into()));
        }
        let schemes = match get("schemes") {
            Some(v) => list("schemes", v, |s| scheme("schemes", s))?,
            None => vec![Scheme::BeSemi, Scheme::Bdf2],
        };
        let reference = get("reference").map(|v| scheme("reference", v)).transpose()?.unwrap_or(Scheme::Bdf2);
        let levels = get("levels").map(|v| num("levels", v)).transpose()?.unwrap_or(3);
        if !(2..=6).contains(&levels) {
            return Err(ParseError("levels must be in 2..=6".into()));
        }
        let snapshot_stride = get("snapshot_stride").map(|v| num("snapshot_stride", v)).transpose()?.unwrap_or(10);
        let out_dir = get("out_dir").map(PathBuf::from);
        Ok(RunConfig {
            job,
            n_cells,
            h_s,
            params,
            scheme: scheme_cfg,
            space,
            dts,
            schemes,
            reference,
            levels,
            out_dir,
            snapshot_stride,
        })
    }

    pub fn ring_setup(&self) -> RingSetup {
        RingSetup { n_cells: self.n_cells, h_s: self.h_s, params: self.params, t_end: self.scheme.t_end, space: self.space }
    }

    /// Normalized echo of every effective setting.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let sp = &self.space;
        let _ = writeln!(s, "job = {}", self.job.name());
        let _ = writeln!(s, "n_cells = {}", self.n_cells);
        let _ = writeln!(s, "h_s = {}", self.h_s);
        let _ = writeln!(s, "rho_f = {}\ndelta_rho = {}\nnu_f = {}\nnu_s = {}\nkappa = {}", p.rho_f, p.delta_rho, p.nu_f, p.nu_s, p.kappa);
        let _ = writeln!(s, "scheme = {}\ndt = {}\nt_end = {}", self.scheme.scheme.name(), self.scheme.dt, self.scheme.t_end);
        let _ = writeln!(s, "fp_tol = {}\nfp_max_iter = {}", self.scheme.fp_tol, self.scheme.fp_max_iter);
        let dts: Vec<String> = self.dts.iter().map(f64::to_string).collect();
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.name()).collect();
        let _ = writeln!(s, "dts = {}\nschemes = {}\nreference = {}", dts.join(","), schemes.join(","), self.reference.name());
        let _ = writeln!(s, "levels = {}", self.levels);
        let velocity = match sp.velocity {
            VelocityElement::P1isoP2 => "P1isoP2",
            VelocityElement::TaylorHoodP2 => "TaylorHood",
        };
        let pressure = match sp.pressure {
            PressureElement::P1 => "P1",
            PressureElement::BpEnhanced => "BPenhanced",
        };
        let _ = writeln!(s, "coupling = {}\nvelocity = {velocity}\npressure = {pressure}", sp.form.name());
        let _ = writeln!(s, "deg_s = {}\ndeg_lambda = {}\ncoupling_quad_degree = {}", sp.deg_s, sp.deg_lambda, sp.coupling_quad_degree);
        let _ = writeln!(s, "per_element_viscosity = {}\nsnapshot_stride = {}", sp.per_element_viscosity, self.snapshot_stride);
        if let Some(d) = &self.out_dir {
            let _ = writeln!(s, "out_dir = {}", d.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_benchmark_uses_ring_defaults() {
        let c = RunConfig::parse("job = benchmark\n").unwrap();
        assert_eq!(c.params, RingSetup::energy_benchmark(8).params);
        assert_eq!(c.scheme.scheme, Scheme::BeSemi);
        assert_eq!(c.snapshot_stride, 10);
        assert_eq!(c.n_cells, 8);
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let c = RunConfig::parse("# ring\njob=temporal_convergence # table\n\n nu = 0.2 \ndts = 0.1, 0.05\nschemes=BDF2\n").unwrap();
        assert_eq!(c.params.nu_f, 0.2);
        assert_eq!(c.params.nu_s, 0.2);
        assert_eq!(c.params.kappa, 10.0);
        assert_eq!(c.dts, vec![0.1, 0.05]);
        assert_eq!(c.schemes, vec![Scheme::Bdf2]);
    }

    #[test]
    fn echo_reparses_to_same_config() {
        let c = RunConfig::parse("job = infsup\ncoupling = C2_H1\nvelocity = TaylorHood\ndeg_s = 2\nreference = BDF2_extrap\n").unwrap();
        assert_eq!(RunConfig::parse(&c.echo()).unwrap(), c);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "",
            "n_cells = 4\n",
            "job = dance\n",
            "job = benchmark\ncolour = red\n",
            "job = benchmark\ndt = fast\n",
            "job = benchmark\ndt = -1\n",
            "job = benchmark\nkappa = 0\n",
            "job = benchmark\ndt = 0.1\ndt = 0.2\n",
            "job = benchmark\nnu = 1\nnu_f = 2\n",
            "job = benchmark\ndeg_s = 1\ndeg_lambda = 2\n",
            "job = benchmark\nscheme = CN\n",
            "job = benchmark\nn_cells\n",
        ] {
            assert!(RunConfig::parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn shipped_configs_parse() {
        for (name, text) in [
            ("benchmark", include_str!("../../../configs/benchmark.cfg")),
            ("temporal", include_str!("../../../configs/temporal.cfg")),
            ("spatial", include_str!("../../../configs/spatial.cfg")),
            ("infsup", include_str!("../../../configs/infsup.cfg")),
        ] {
            let c = RunConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(RunConfig::parse(&c.echo()).unwrap(), c, "{name}");
        }
    }
}
