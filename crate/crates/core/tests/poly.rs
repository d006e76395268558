use proptest::prelude::*;
use vmc_core::poly::{eval_basis_vector, gauss_rule, BasisFamily, BasisSpec};

fn family() -> impl Strategy<Value = BasisFamily> {
    prop_oneof![
        Just(BasisFamily::LegendreUniform),
        Just(BasisFamily::HermiteGaussian)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// An n-point rule is exact up to degree 2n-1, so it reproduces the
    /// orthonormality of every pair with i + j ≤ 2n - 1.
    #[test]
    fn gauss_rules_are_exact(f in family(), n in 1usize..12) {
        let (x, w) = gauss_rule::<f64>(f, n).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(x.windows(2).all(|p| p[0] < p[1]));
        let q = n + 1;
        let vals: Vec<Vec<f64>> = x.iter().map(|&t| eval_basis_vector(f, q, t)).collect();
        for i in 0..q {
            for j in 0..q {
                if i + j > 2 * n - 1 {
                    continue;
                }
                let g: f64 = vals.iter().zip(&w).map(|(v, &wt)| wt * v[i] * v[j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - want).abs() < 1e-9, "{f:?} n={n} ({i},{j}) -> {g}");
            }
        }
    }

    #[test]
    fn product_basis_factorizes(y in prop::collection::vec(-1.0f64..1.0, 3), a in prop::collection::vec(0usize..4, 3)) {
        let b = BasisSpec::uniform(BasisFamily::LegendreUniform, 3, 4).unwrap();
        let per = b.eval(&y).unwrap();
        let want: f64 = a.iter().zip(&per).map(|(&k, v)| v[k]).product();
        prop_assert!((b.eval_multi(&a, &y).unwrap() - want).abs() < 1e-14);
    }
}

#[test]
fn single_precision_basis() {
    let v = eval_basis_vector::<f32>(BasisFamily::LegendreUniform, 5, 1.0);
    for (k, p) in v.iter().enumerate() {
        assert!((p - ((2 * k + 1) as f32).sqrt()).abs() < 1e-5);
    }
}
