use proptest::prelude::*;
use vmc_core::fem::{assemble_load, assemble_stiffness, h1_inner, solve_spd, ParametricSolver};
use vmc_core::field::ProblemSpec;
use vmc_core::mesh::build_unit_square_mesh;
use vmc_core::sampling::sample_pseudo;

/// `-Δu = 1` on the unit square, value at the centre from the double sine series.
fn fourier_center_value() -> f64 {
    let pi4 = std::f64::consts::PI.powi(4);
    let mut s = 0.0;
    for m in (1..4000).step_by(2) {
        for n in (1..4000).step_by(2) {
            let sign = if ((m + n) / 2) % 2 == 1 { 1.0 } else { -1.0 };
            let (m, n) = (m as f64, n as f64);
            s += sign * 16.0 / (pi4 * m * n * (m * m + n * n));
        }
    }
    s
}

fn center_value(n: usize) -> f64 {
    let mesh = build_unit_square_mesh::<f64>(n).unwrap();
    let a = assemble_stiffness(&mesh, |_| 1.0).unwrap();
    let u = solve_spd(&a, &assemble_load(&mesh, |_| 1.0)).unwrap();
    u.coefficients[mesh.nearest_dof([0.5, 0.5]).unwrap()]
}

#[test]
fn poisson_center_value_converges_quadratically() {
    let exact = fourier_center_value();
    assert!(exact > 0.07 && exact < 0.075);
    let errs: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| (center_value(n) - exact).abs())
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn parametric_solutions_are_positive() {
    for name in ["affine", "lognormal", "cookie"] {
        let problem = ProblemSpec::<f64>::from_catalog(name, 4, 8).unwrap();
        let solver = ParametricSolver::new(&problem).unwrap();
        let ys = sample_pseudo(problem.parameter_dim(), 10, 3, problem.domain()).unwrap();
        for y in ys.iter() {
            let u = solver.solve(y).unwrap();
            assert!(u.coefficients.iter().all(|&v| v > 0.0), "{name}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stiffness_is_symmetric_positive(c in 0.1f64..10.0, n in 2usize..8, seed in any::<u64>()) {
        let mesh = build_unit_square_mesh::<f64>(n).unwrap();
        let a = assemble_stiffness(&mesh, |x| c * (1.0 + x[0] * x[1])).unwrap();
        prop_assert!(a.symmetry_defect() <= 1e-12 * a.trace());
        let v: Vec<f64> = (0..a.dim()).map(|i| ((seed.wrapping_add(i as u64) % 97) as f64 - 48.0) / 7.0).collect();
        let e = a.bilinear(&v, &v).unwrap();
        prop_assert!(v.iter().all(|&x| x == 0.0) || e > 0.0);
    }

    #[test]
    fn solution_scales_inversely_with_coefficient(c in 0.1f64..10.0) {
        let mesh = build_unit_square_mesh::<f64>(6).unwrap();
        let f = assemble_load(&mesh, |_| 1.0);
        let s0 = assemble_stiffness(&mesh, |_| 1.0).unwrap();
        let u1 = solve_spd(&s0, &f).unwrap();
        let uc = solve_spd(&assemble_stiffness(&mesh, |_| c).unwrap(), &f).unwrap();
        for (a, b) in u1.coefficients.iter().zip(&uc.coefficients) {
            prop_assert!((a / c - b).abs() <= 1e-12 * a.abs().max(1e-300) / c);
        }
        let e1 = h1_inner(&u1, &u1, &s0).unwrap();
        let ec = h1_inner(&uc, &uc, &s0).unwrap();
        prop_assert!((e1 / (c * c) - ec).abs() <= 1e-10 * e1 / (c * c));
    }
}
