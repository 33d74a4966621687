use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fdlm_core::analysis::observed_rate;
use fdlm_core::fespace::{DiscreteField, FeSpace};
use fdlm_core::forms::{assemble_convection, elastic_energy, PhysParams};
use fdlm_core::mesh::{build_quarter_annulus_mesh, build_square_mesh, MeshLocator};
use fdlm_core::model::{quarter_container, quarter_ring, ring_initial_map, Discretization, SpaceConfig};
use fdlm_core::saddle::{build_system, BlockSystem, StepCoefficients, StepRhs};
use fdlm_core::timestep::{energy, initialize, Scheme, SchemeConfig};

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn zero_masked(mut v: Vec<f64>, mask: &[bool]) -> Vec<f64> {
    for (x, &m) in v.iter_mut().zip(mask) {
        if m {
            *x = 0.0;
        }
    }
    v
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn ring() -> &'static (Discretization, PhysParams) {
    static RING: OnceLock<(Discretization, PhysParams)> = OnceLock::new();
    RING.get_or_init(|| {
        let p = PhysParams { rho_f: 1.0, delta_rho: 0.3, nu_f: 0.05, nu_s: 0.05, kappa: 1.0 };
        let d = Discretization::new(Arc::new(quarter_container(4)), Arc::new(quarter_ring(0.125)), SpaceConfig::default(), &p)
            .unwrap();
        (d, p)
    })
}

fn random_system(seed: u64, dt: f64, rhs_scale: f64) -> BlockSystem {
    let (d, p) = ring();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ub = d.velocity(zero_masked(random_vec(&mut rng, d.n_u()), d.v_space.constrained_mask()));
    let x0 = d.position(d.s_space.interpolate(ring_initial_map));
    let rhs = StepRhs {
        f: random_vec(&mut rng, d.n_u()).iter().map(|v| v * rhs_scale).collect(),
        g: random_vec(&mut rng, d.n_x()).iter().map(|v| v * rhs_scale).collect(),
        d: random_vec(&mut rng, d.n_lambda()).iter().map(|v| v * rhs_scale).collect(),
    };
    build_system(d, p, StepCoefficients::backward_euler(p, dt), &ub, &x0, &rhs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn located_barycentrics_reconstruct_the_point(n in 1usize..12, x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
        let mesh = build_square_mesh(n, (0.0, 1.0));
        let loc = MeshLocator::new(&mesh);
        let (t, l) = loc.locate([x, y]).expect("point inside the square");
        let v = mesh.vertices(t);
        prop_assert!(l.iter().all(|&b| b >= -1e-12));
        prop_assert!((l.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let px = l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0];
        let py = l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1];
        prop_assert!((px - x).abs() < 1e-13 && (py - y).abs() < 1e-13);
    }

    #[test]
    fn basis_is_a_partition_of_unity(degree in 1usize..=2, a in 0.0f64..1.0, b in 0.0f64..1.0, e in 0usize..18) {
        let mesh = Arc::new(build_quarter_annulus_mesh(3, 3, 0.3, 0.5));
        let sp = FeSpace::lagrange(mesh, degree, 1).unwrap();
        let l = if a + b < 1.0 { [1.0 - a - b, a, b] } else { [a + b - 1.0, 1.0 - a, 1.0 - b] };
        let bv = sp.basis(&sp.geometry(e), &l);
        let s: f64 = bv.values[..bv.n].iter().sum();
        let g = (0..bv.n).fold([0.0; 2], |acc, k| [acc[0] + bv.grads[k][0], acc[1] + bv.grads[k][1]]);
        prop_assert!((s - 1.0).abs() < 1e-13);
        prop_assert!(g[0].abs() < 1e-10 && g[1].abs() < 1e-10);
    }

    #[test]
    fn elastic_energy_is_quadratic_and_translation_invariant(seed in any::<u64>(), t in -3.0f64..3.0, c in prop::array::uniform2(-2.0f64..2.0)) {
        let mesh = Arc::new(build_quarter_annulus_mesh(2, 4, 0.3, 0.5));
        let sp = Arc::new(FeSpace::lagrange(mesh, 1, 2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_vec(&mut rng, sp.n_dofs());
        let shift = sp.constant(c);
        let e = elastic_energy(&DiscreteField::new(sp.clone(), x.clone()).unwrap(), 1.7);
        let scaled = elastic_energy(&DiscreteField::new(sp.clone(), x.iter().map(|v| t * v).collect()).unwrap(), 1.7);
        let moved = elastic_energy(&DiscreteField::new(sp.clone(), x.iter().zip(&shift).map(|(a, b)| a + b).collect()).unwrap(), 1.7);
        prop_assert!(e >= 0.0);
        prop_assert!((scaled - t * t * e).abs() <= 1e-12 * e.max(1.0));
        prop_assert!((moved - e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn rate_of_a_power_law_is_its_exponent(r in 0.2f64..4.0, c in 1e-6f64..1e3, h in 1e-3f64..1.0) {
        let rate = observed_rate(h, c * h.powf(r), h / 2.0, c * (h / 2.0).powf(r));
        prop_assert!((rate - r).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn convection_matrix_is_skew(seed in any::<u64>(), n in 1usize..5, rho in 0.1f64..10.0) {
        let mesh = Arc::new(build_square_mesh(n, (0.0, 1.0)));
        let sp = Arc::new(FeSpace::lagrange(mesh, 2, 2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ub = DiscreteField::new(sp.clone(), random_vec(&mut rng, sp.n_dofs())).unwrap();
        let nmat = assemble_convection(&ub, &sp, rho);
        let v = random_vec(&mut rng, sp.n_dofs());
        let scale: f64 = (0..nmat.n_rows).map(|i| nmat.row(i).map(|(j, a)| (v[i] * a * v[j]).abs()).sum::<f64>()).sum();
        prop_assert!(nmat.quad_form(&v).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn energy_terms_are_nonnegative(seed in any::<u64>(), dt in 0.01f64..0.5) {
        let (d, p) = ring();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = d.velocity(zero_masked(random_vec(&mut rng, d.n_u()), d.v_space.constrained_mask()));
        let x0 = d.position(zero_masked(random_vec(&mut rng, d.n_x()), d.s_space.constrained_mask()));
        let x1 = d.position(zero_masked(random_vec(&mut rng, d.n_x()), d.s_space.constrained_mask()));
        let st = initialize(d, u, x0, x1, &SchemeConfig::new(Scheme::BeSemi, dt, 1.0)).unwrap();
        let e = energy(d, &st, p, dt);
        prop_assert!(e.kinetic_fluid >= 0.0 && e.kinetic_solid >= 0.0 && e.elastic >= 0.0);
        prop_assert!((e.total - e.kinetic_fluid - e.kinetic_solid - e.elastic).abs() <= 1e-14 * e.total.max(1.0));
    }

    #[test]
    fn operator_is_linear_and_matches_the_assembled_matrix(seed in any::<u64>(), dt in 0.01f64..0.5, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let sys = random_system(seed, dt, 1.0);
        let n = sys.n_total();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
        let (x, y) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
        let (ax, ay) = (sys.apply_operator(&x), sys.apply_operator(&y));
        let combo: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let lhs = sys.apply_operator(&combo);
        let scale = max_abs(&ax).max(max_abs(&ay)) * (a.abs() + b.abs()).max(1.0);
        for i in 0..n {
            prop_assert!((lhs[i] - (a * ax[i] + b * ay[i])).abs() <= 1e-13 * scale);
        }
        let mono = sys.monolithic().matvec(&x);
        for i in 0..n {
            prop_assert!((mono[i] - ax[i]).abs() <= 1e-13 * max_abs(&ax));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Solving with the right-hand side generated by smooth known fields
    /// recovers them. The velocity comes from an earlier solve so that it
    /// is discretely divergence free; position, multiplier and zero-mean
    /// pressure are smooth with random parameters.
    #[test]
    fn solve_recovers_a_known_solution(seed in any::<u64>(), dt in 0.01f64..0.5, k in prop::array::uniform4(-3.0f64..3.0)) {
        let (d, _) = ring();
        let base = random_system(seed, dt, 1.0);
        let u = base.solve().unwrap().u;
        let [_, nx, nl, np] = base.sizes();
        // normal components vanish on the symmetry axes
        let smooth = |c: f64, w: f64| move |q: [f64; 2]| [q[0] * (c + (w * q[1]).sin()), q[1] * (c - (w * q[0]).cos())];
        let x = d.s_space.interpolate(smooth(k[0], k[1]));
        let l = d.l_space.interpolate(smooth(k[2], k[3]));
        let mut p = d.q_space.interpolate_scalar(|q| (k[1] * q[0] + k[3] * q[1]).sin());
        let mm: f64 = base.mean.iter().map(|m| m * m).sum();
        let mp: f64 = base.mean.iter().zip(&p).map(|(m, p)| m * p).sum();
        for (pi, m) in p.iter_mut().zip(&base.mean) {
            *pi -= mp / mm * m;
        }
        prop_assert!(x.len() == nx && l.len() == nl && p.len() == np);
        let mut z = u.clone();
        z.extend(x);
        z.extend(l);
        z.extend(p);
        z.push(0.0);

        let b = base.apply_operator(&z);
        let nu = u.len();
        let mut sys = base.clone();
        sys.rhs_u = b[..nu].to_vec();
        sys.rhs_x = b[nu..nu + nx].to_vec();
        sys.rhs_l = b[nu + nx..nu + nx + nl].to_vec();
        prop_assert!(max_abs(&b[nu + nx + nl..]) <= 1e-11 * max_abs(&b));
        let got = sys.solve().unwrap().full();
        let err = got.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10 * max_abs(&z), "error {err:e}");
    }
}
