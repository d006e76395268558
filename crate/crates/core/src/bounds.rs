//! Covering numbers, concentration inequalities and the error bounds built
//! from them. Probabilities are composed in log space; raw (possibly > 1)
//! values are kept next to the clamped ones.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Concentration {
    Hoeffding,
    Bernstein,
}

impl std::str::FromStr for Concentration {
    type Err = VmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hoeffding" => Ok(Self::Hoeffding),
            "bernstein" => Ok(Self::Bernstein),
            other => Err(VmcError::invalid(format!(
                "unknown concentration inequality `{other}`"
            ))),
        }
    }
}

/// A probability bound: natural log of the raw value, the raw value, and the
/// value clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityBound<T> {
    pub ln_raw: T,
    pub raw: T,
    pub clamped: T,
}

impl<T: Real> ProbabilityBound<T> {
    pub fn from_ln(ln_raw: T) -> Self {
        let raw = ln_raw.exp();
        let clamped = if ln_raw >= T::zero() {
            T::one()
        } else {
            raw.max(T::zero())
        };
        Self {
            ln_raw,
            raw,
            clamped,
        }
    }
}

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(VmcError::invalid(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn non_negative<T: Real>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(VmcError::invalid(format!(
            "{name} must be non-negative and finite, got {v}"
        )))
    }
}

fn count<T: Real>(n: u64) -> Result<T> {
    if n == 0 {
        return Err(VmcError::invalid("sample count must be at least 1"));
    }
    Ok(T::lit(n as f64))
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    T::lit(libm::lgamma(x.as_f64()))
}

/// `ln vol(B₁)` of the Euclidean unit ball in `dim` dimensions.
pub fn ln_unit_ball_volume<T: Real>(dim: usize) -> T {
    let half = T::from_count(dim) * T::lit(0.5);
    half * T::pi().ln() - ln_gamma(half + T::one())
}

/// `ln(vol(B₁)·(R/ε)^dim)`.
pub fn ln_covering_number_linear<T: Real>(dim: usize, radius: T, eps: T) -> Result<T> {
    if dim == 0 {
        return Err(VmcError::invalid("dimension must be at least 1"));
    }
    positive("radius", radius)?;
    positive("accuracy", eps)?;
    Ok(ln_unit_ball_volume::<T>(dim) + T::from_count(dim) * (radius / eps).ln())
}

/// Covering number of a radius-`R` ball in a `dim`-dimensional space by
/// `ε`-balls, `vol(B₁)·(R/ε)^dim` (may overflow to infinity; see the log form).
pub fn covering_number_linear<T: Real>(dim: usize, radius: T, eps: T) -> Result<T> {
    Ok(ln_covering_number_linear(dim, radius, eps)?.exp())
}

/// `2·exp(−2ε²N/C₁²)`.
pub fn hoeffding_delta<T: Real>(eps: T, n: u64, c1: T) -> Result<ProbabilityBound<T>> {
    non_negative("accuracy", eps)?;
    positive("C1", c1)?;
    let n: T = count(n)?;
    Ok(ProbabilityBound::from_ln(
        T::lit(2.0).ln() - T::lit(2.0) * eps * eps * n / (c1 * c1),
    ))
}

/// `2·exp(−(ε²N/2)/(σ² + C₁ε/3))`.
pub fn bernstein_delta<T: Real>(eps: T, n: u64, c1: T, sigma2: T) -> Result<ProbabilityBound<T>> {
    non_negative("accuracy", eps)?;
    positive("C1", c1)?;
    non_negative("variance bound", sigma2)?;
    let n: T = count(n)?;
    let ln2 = T::lit(2.0).ln();
    if eps == T::zero() {
        return Ok(ProbabilityBound::from_ln(ln2));
    }
    let expo = eps * eps * n * T::lit(0.5) / (sigma2 + c1 * eps / T::lit(3.0));
    Ok(ProbabilityBound::from_ln(ln2 - expo))
}

/// The two zero-variance Bernstein forms: the printed `2·exp(−3εN/(4C₁²))`
/// and the `σ² = 0` limit `2·exp(−3εN/(2C₁))` of [`bernstein_delta`].
pub fn bernstein_negligible_variance<T: Real>(
    eps: T,
    n: u64,
    c1: T,
) -> Result<(ProbabilityBound<T>, ProbabilityBound<T>)> {
    non_negative("accuracy", eps)?;
    positive("C1", c1)?;
    let n: T = count(n)?;
    let ln2 = T::lit(2.0).ln();
    let three = T::lit(3.0);
    let printed = ln2 - three * eps * n / (T::lit(4.0) * c1 * c1);
    let derived = ln2 - three * eps * n / (T::lit(2.0) * c1);
    Ok((
        ProbabilityBound::from_ln(printed),
        ProbabilityBound::from_ln(derived),
    ))
}

/// Constants and levels entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs<T> {
    /// Loss bound `C₁`.
    pub c1: T,
    /// Lipschitz constant `C₂`.
    pub c2: T,
    /// Second-derivative bound `Γ`.
    pub big_gamma: T,
    /// Strong-convexity constant `γ`.
    pub small_gamma: T,
    /// Embedding dimension of the model class.
    pub dim: usize,
    /// Radius of the model class.
    pub radius: T,
    /// Variance bound `σ²` for Bernstein.
    pub sigma2: T,
    pub eps: T,
    pub n: u64,
    /// Best-approximation error.
    pub e_best: T,
}

impl<T: Real> BoundInputs<T> {
    fn delta(&self, eps: T, n: u64, conc: Concentration) -> Result<ProbabilityBound<T>> {
        match conc {
            Concentration::Hoeffding => hoeffding_delta(eps, n, self.c1),
            Concentration::Bernstein => bernstein_delta(eps, n, self.c1, self.sigma2),
        }
    }
}

/// `P[E_gen > ε] ≤ 2·ν(ε/(8C₂))·δ(ε/4, N)`.
pub fn generalization_bound<T: Real>(
    eps: T,
    n: u64,
    inputs: &BoundInputs<T>,
    conc: Concentration,
) -> Result<ProbabilityBound<T>> {
    positive("accuracy", eps)?;
    positive("C2", inputs.c2)?;
    let ln_nu =
        ln_covering_number_linear(inputs.dim, inputs.radius, eps / (T::lit(8.0) * inputs.c2))?;
    let delta = inputs.delta(eps / T::lit(4.0), n, conc)?;
    Ok(ProbabilityBound::from_ln(
        T::lit(2.0).ln() + ln_nu + delta.ln_raw,
    ))
}

/// Smallest `N` with `generalization_bound(ε, N) ≤ p_f`.
pub fn samples_for_confidence<T: Real>(
    eps: T,
    p_fail: T,
    inputs: &BoundInputs<T>,
    conc: Concentration,
) -> Result<u64> {
    if !(p_fail > T::zero() && p_fail < T::one()) {
        return Err(VmcError::invalid(format!(
            "failure probability must lie in (0, 1), got {p_fail}"
        )));
    }
    let ok = |n: u64| -> Result<bool> {
        Ok(generalization_bound(eps, n, inputs, conc)?.ln_raw <= p_fail.ln())
    };
    if ok(1)? {
        return Ok(1);
    }
    match conc {
        Concentration::Hoeffding => {
            // ln 2 + ln ν + ln 2 − 2(ε/4)²N/C₁² ≤ ln p_f
            let ln_nu = ln_covering_number_linear(
                inputs.dim,
                inputs.radius,
                eps / (T::lit(8.0) * inputs.c2),
            )?;
            let e4 = eps / T::lit(4.0);
            let need = (T::lit(4.0).ln() + ln_nu - p_fail.ln()) * inputs.c1 * inputs.c1
                / (T::lit(2.0) * e4 * e4);
            let guess = need.ceil().as_f64();
            if !(guess < u64::MAX as f64 / 2.0) {
                return Err(VmcError::Capacity(format!(
                    "required sample count {guess:e} overflows"
                )));
            }
            let mut n = (guess as u64).max(1);
            while n > 1 && ok(n - 1)? {
                n -= 1;
            }
            while !ok(n)? {
                n += 1;
            }
            Ok(n)
        }
        Concentration::Bernstein => {
            let mut hi = 2u64;
            while !ok(hi)? {
                hi = hi
                    .checked_mul(2)
                    .ok_or_else(|| VmcError::Capacity("required sample count overflows".into()))?;
            }
            let mut lo = hi / 2; // ok(lo) is false
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(hi)
        }
    }
}

/// `(C₂·E_best, (Γ/2)·E_best²)`.
pub fn approx_error_bounds<T: Real>(e_best: T, c2: T, big_gamma: T) -> Result<(T, T)> {
    non_negative("best-approximation error", e_best)?;
    Ok((c2 * e_best, big_gamma * T::lit(0.5) * e_best * e_best))
}

/// `sqrt((Γ/γ)·E_best² + (2/γ)·E_gen)`.
pub fn norm_error_bound<T: Real>(e_best: T, e_gen: T, big_gamma: T, small_gamma: T) -> Result<T> {
    positive("strong-convexity constant", small_gamma)?;
    non_negative("best-approximation error", e_best)?;
    non_negative("generalization error", e_gen)?;
    Ok((big_gamma / small_gamma * e_best * e_best + T::lit(2.0) / small_gamma * e_gen).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuasiOptimality<T> {
    /// `(1+a)Γ/γ`, bounding `E_norm² / E_best²`.
    pub factor: T,
    /// Lower bound on the probability that the factor applies.
    pub probability: T,
    /// Generalization level `aΓE_best²/2` used for the probability.
    pub eps: T,
}

/// With probability at least `1 − P[E_gen ≥ aΓE_best²/2]`,
/// `E_norm² ≤ (1+a)(Γ/γ)E_best²`.
pub fn quasi_optimality<T: Real>(
    a: T,
    inputs: &BoundInputs<T>,
    conc: Concentration,
) -> Result<QuasiOptimality<T>> {
    positive("a", a)?;
    positive("strong-convexity constant", inputs.small_gamma)?;
    let factor = (T::one() + a) * inputs.big_gamma / inputs.small_gamma;
    let eps = a * inputs.big_gamma * inputs.e_best * inputs.e_best * T::lit(0.5);
    let probability = if eps > T::zero() {
        T::one() - generalization_bound(eps, inputs.n, inputs, conc)?.clamped
    } else {
        T::zero()
    };
    Ok(QuasiOptimality {
        factor,
        probability,
        eps,
    })
}

/// Everything the calculator reports for one set of inputs.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport<T> {
    pub inputs: BoundInputs<T>,
    pub concentration: Concentration,
    pub ln_covering_number: T,
    pub covering_number: T,
    pub hoeffding_delta: ProbabilityBound<T>,
    pub bernstein_delta: ProbabilityBound<T>,
    /// Zero-variance Bernstein exponent as printed, `3εN/(4C₁²)`.
    pub bernstein_zero_variance_printed: ProbabilityBound<T>,
    /// Zero-variance Bernstein exponent from the `σ² = 0` limit, `3εN/(2C₁)`.
    pub bernstein_zero_variance_derived: ProbabilityBound<T>,
    pub generalization_bound: ProbabilityBound<T>,
    pub approx_error_linear: T,
    pub approx_error_quadratic: T,
    /// Norm-error bound with `E_gen = ε`.
    pub norm_error_bound: T,
    pub quasi_optimality: QuasiOptimality<T>,
    pub samples_for_confidence: Option<u64>,
    pub p_fail: Option<T>,
}

pub fn bound_report<T: Real>(
    inputs: &BoundInputs<T>,
    conc: Concentration,
    a: T,
    p_fail: Option<T>,
) -> Result<BoundReport<T>> {
    let eps = inputs.eps;
    let ln_nu = ln_covering_number_linear(inputs.dim, inputs.radius, eps)?;
    let (printed, derived) = bernstein_negligible_variance(eps, inputs.n, inputs.c1)?;
    let (lin, quad) = approx_error_bounds(inputs.e_best, inputs.c2, inputs.big_gamma)?;
    Ok(BoundReport {
        inputs: *inputs,
        concentration: conc,
        ln_covering_number: ln_nu,
        covering_number: ln_nu.exp(),
        hoeffding_delta: hoeffding_delta(eps, inputs.n, inputs.c1)?,
        bernstein_delta: bernstein_delta(eps, inputs.n, inputs.c1, inputs.sigma2)?,
        bernstein_zero_variance_printed: printed,
        bernstein_zero_variance_derived: derived,
        generalization_bound: generalization_bound(eps, inputs.n, inputs, conc)?,
        approx_error_linear: lin,
        approx_error_quadratic: quad,
        norm_error_bound: norm_error_bound(
            inputs.e_best,
            eps,
            inputs.big_gamma,
            inputs.small_gamma,
        )?,
        quasi_optimality: quasi_optimality(a, inputs, conc)?,
        samples_for_confidence: p_fail
            .map(|p| samples_for_confidence(eps, p, inputs, conc))
            .transpose()?,
        p_fail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(dim: usize) -> BoundInputs<f64> {
        BoundInputs {
            c1: 1.0,
            c2: 1.0,
            big_gamma: 2.0,
            small_gamma: 1.0,
            dim,
            radius: 1.0,
            sigma2: 0.01,
            eps: 0.5,
            n: 1000,
            e_best: 0.1,
        }
    }

    #[test]
    fn covering_examples() {
        assert!((covering_number_linear::<f64>(1, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((covering_number_linear::<f64>(1, 1.0, 0.5).unwrap() - 4.0).abs() < 1e-14);
        let v = covering_number_linear(2, 2.0, 1.0).unwrap();
        assert!((v - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        // unit ball volumes: 4π/3 in 3-D, π²/2 in 4-D
        assert!(
            (ln_unit_ball_volume::<f64>(3).exp() - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-13
        );
        assert!(
            (ln_unit_ball_volume::<f64>(4).exp() - std::f64::consts::PI.powi(2) / 2.0).abs()
                < 1e-13
        );
        assert!(covering_number_linear(0, 1.0, 1.0).is_err());
        assert!(ln_covering_number_linear::<f64>(2000, 1.0, 1e-3)
            .unwrap()
            .is_finite());
    }

    #[test]
    fn concentration_examples() {
        let h = hoeffding_delta(0.0, 10, 1.0).unwrap();
        assert_eq!((h.raw, h.clamped), (2.0, 1.0));
        let h = hoeffding_delta(0.1, 1000, 1.0).unwrap();
        assert!((h.raw - 2.0 * (-20f64).exp()).abs() < 1e-22);
        assert!((h.raw - 4.1223e-9).abs() < 1e-13);
        assert!(hoeffding_delta(0.1, 2000, 1.0).unwrap().raw < h.raw);

        let b = bernstein_delta(0.1, 1000, 1.0, 0.01).unwrap();
        let expo: f64 = 5.0 / (0.01 + 0.1 / 3.0);
        assert!((b.ln_raw - (2f64.ln() - expo)).abs() < 1e-12);
        assert!((b.raw / 1.55e-50 - 1.0).abs() < 0.01);
        assert!(bernstein_delta(0.1, 1000, 1.0, 0.1).unwrap().raw > b.raw);
        let b0 = bernstein_delta(0.1, 1000, 1.0, 0.0).unwrap();
        assert!((b0.ln_raw - (2f64.ln() - 150.0)).abs() < 1e-11);
        let (printed, derived) = bernstein_negligible_variance(0.1, 1000, 1.0).unwrap();
        assert!((derived.ln_raw - b0.ln_raw).abs() < 1e-11);
        assert!((printed.ln_raw - (2f64.ln() - 75.0)).abs() < 1e-11);
    }

    #[test]
    fn generalization_log_and_linear_agree() {
        let inp = inputs(3);
        for n in [1u64, 10, 100, 1000] {
            let g = generalization_bound(0.5, n, &inp, Concentration::Hoeffding).unwrap();
            let nu = covering_number_linear(3, 1.0, 0.5 / 8.0).unwrap();
            let d = hoeffding_delta(0.125, n, 1.0).unwrap().raw;
            let lin = 2.0 * nu * d;
            assert!((g.raw - lin).abs() <= 1e-10 * lin);
        }
    }

    #[test]
    fn inversion_is_tight() {
        let inp = inputs(10);
        for conc in [Concentration::Hoeffding, Concentration::Bernstein] {
            for pf in [0.01, 0.5, 0.99] {
                let n = samples_for_confidence(0.5, pf, &inp, conc).unwrap();
                assert!(generalization_bound(0.5, n, &inp, conc).unwrap().raw <= pf);
                assert!(generalization_bound(0.5, n - 1, &inp, conc).unwrap().raw > pf);
            }
        }
        assert!(samples_for_confidence(0.5, 1.0, &inp, Concentration::Hoeffding).is_err());
    }

    #[test]
    fn approximation_and_norm_bounds() {
        assert_eq!(approx_error_bounds(0.0, 2.0, 4.0).unwrap(), (0.0, 0.0));
        assert_eq!(approx_error_bounds(0.5, 2.0, 4.0).unwrap(), (1.0, 0.5));
        assert_eq!(norm_error_bound(0.0, 0.0, 2.0, 1.0).unwrap(), 0.0);
        assert!((norm_error_bound::<f64>(0.3, 0.0, 1.5, 1.5).unwrap() - 0.3).abs() < 1e-15);
        assert!((norm_error_bound(0.1, 0.005, 2.0, 1.0).unwrap() - 0.03f64.sqrt()).abs() < 1e-15);
        assert!(norm_error_bound(0.1, 0.005, 2.0, 0.0).is_err());
    }

    #[test]
    fn quasi_optimality_examples() {
        let mut inp = inputs(2);
        inp.e_best = 1.0;
        let q = quasi_optimality(1.0, &inp, Concentration::Hoeffding).unwrap();
        assert_eq!(q.factor, 4.0);
        assert_eq!(q.eps, 1.0);
        let small = quasi_optimality(1e-3, &inp, Concentration::Hoeffding).unwrap();
        assert!(small.factor < q.factor && small.probability <= q.probability);
        inp.n = 100_000;
        let more = quasi_optimality(1.0, &inp, Concentration::Hoeffding).unwrap();
        assert!(more.probability >= q.probability);
        assert!((0.0..=1.0).contains(&more.probability));
    }

    #[test]
    fn report_serializes() {
        let r = bound_report(&inputs(4), Concentration::Bernstein, 1.0, Some(0.05)).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"generalization_bound\""));
        assert!(r.samples_for_confidence.unwrap() > 1);
    }
}
