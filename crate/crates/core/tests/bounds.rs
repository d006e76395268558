use proptest::prelude::*;
use vmc_core::bounds::{
    bound_report, generalization_bound, hoeffding_delta, ln_covering_number_linear,
    samples_for_confidence, BoundInputs, Concentration,
};

fn inputs(dim: usize) -> BoundInputs<f64> {
    BoundInputs {
        c1: 2.0,
        c2: 1.5,
        big_gamma: 2.0,
        small_gamma: 0.5,
        dim,
        radius: 1.0,
        sigma2: 0.5,
        eps: 0.2,
        n: 1000,
        e_best: 0.05,
    }
}

fn conc() -> impl Strategy<Value = Concentration> {
    prop_oneof![
        Just(Concentration::Hoeffding),
        Just(Concentration::Bernstein)
    ]
}

#[test]
fn hoeffding_closed_form() {
    // 2 exp(-2 ε² N / C₁²)
    let d = hoeffding_delta(0.1f64, 500, 1.0).unwrap();
    assert!((d.raw - 2.0 * (-10.0f64).exp()).abs() < 1e-15);
    assert!((d.ln_raw - (2f64.ln() - 10.0)).abs() < 1e-14);
}

#[test]
fn covering_number_of_unit_interval() {
    // vol(B₁) = 2 in one dimension.
    let ln = ln_covering_number_linear(1, 1.0f64, 0.1).unwrap();
    assert!((ln - 20f64.ln()).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bound_monotone_in_n_and_dim(dim in 1usize..30, n in 1u64..100_000, eps in 0.01f64..1.0, c in conc()) {
        let inp = inputs(dim);
        let a = generalization_bound(eps, n, &inp, c).unwrap();
        let b = generalization_bound(eps, n + 1 + n / 3, &inp, c).unwrap();
        prop_assert!(b.ln_raw <= a.ln_raw);
        let d = generalization_bound(eps, n, &inputs(dim + 1), c).unwrap();
        prop_assert!(d.ln_raw >= a.ln_raw);
        prop_assert!(a.clamped <= 1.0 && a.clamped >= 0.0);
        if a.ln_raw.abs() < 600.0 {
            prop_assert!((a.ln_raw.exp() - a.raw).abs() <= 1e-10 * a.raw);
        }
    }

    #[test]
    fn inversion_is_minimal(dim in 1usize..12, eps in 0.05f64..1.0, pf in 1e-6f64..0.5, c in conc()) {
        let inp = inputs(dim);
        let n = samples_for_confidence(eps, pf, &inp, c).unwrap();
        prop_assert!(generalization_bound(eps, n, &inp, c).unwrap().ln_raw <= pf.ln());
        if n > 1 {
            prop_assert!(generalization_bound(eps, n - 1, &inp, c).unwrap().ln_raw > pf.ln());
        }
    }
}

#[test]
fn report_is_json_and_contains_both_zero_variance_variants() {
    let r = bound_report(&inputs(4), Concentration::Bernstein, 1.0, Some(0.01)).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    assert!(v["bernstein_zero_variance_printed"]["raw"].is_number());
    assert!(v["bernstein_zero_variance_derived"]["raw"].is_number());
    let n = r.samples_for_confidence.unwrap();
    assert!(
        generalization_bound(0.2, n, &inputs(4), Concentration::Bernstein)
            .unwrap()
            .raw
            <= 0.01
    );
}
