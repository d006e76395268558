use proptest::prelude::*;
use vmc_core::field::ParameterDomain;
use vmc_core::sampling::{
    inverse_normal_cdf, normal_cdf, pseudo_point, sample_pseudo_range, sample_sobol,
};
use vmc_core::sobol::SobolSequence;

#[test]
fn sobol_leading_points() {
    let s = SobolSequence::new(3).unwrap();
    assert_eq!(s.point(1), vec![0.5, 0.5, 0.5]);
    assert_eq!(s.point(2), vec![0.75, 0.25, 0.25]);
    assert_eq!(s.point(3), vec![0.25, 0.75, 0.75]);
}

#[test]
fn sobol_uniform_means_are_small() {
    let n = 4096;
    let s = sample_sobol(6, n, ParameterDomain::UniformCube).unwrap();
    for d in 0..6 {
        let mean = s.iter().map(|p| p[d]).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-3, "dim {d}: {mean}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pseudo_points_are_counter_keyed(seed in any::<u64>(), start in 0u64..1000, count in 1usize..20, dim in 1usize..6) {
        let set = sample_pseudo_range(dim, start, count, seed, ParameterDomain::UniformCube).unwrap();
        for i in 0..count {
            let want = pseudo_point(dim, start + i as u64, seed, ParameterDomain::UniformCube);
            prop_assert_eq!(set.point(i), want.as_slice());
            prop_assert!(set.point(i).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-14f64..(1.0 - 1e-14)) {
        let x = inverse_normal_cdf(p).unwrap();
        let tail = p.min(1.0 - p);
        prop_assert!(((normal_cdf(x) - p) / tail).abs() < 1e-8);
    }

    #[test]
    fn sobol_gaussian_points_are_finite(dim in 1usize..20, n in 1usize..300) {
        let s = sample_sobol(dim, n, ParameterDomain::Gaussian).unwrap();
        prop_assert_eq!(s.len(), n);
        prop_assert!(s.raw().iter().all(|v| v.is_finite()));
    }
}
