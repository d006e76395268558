//! Reproducible parameter draws: counter-based pseudo-random points and
//! Sobol points, on the uniform cube or the standard Gaussian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::field::ParameterDomain;
use crate::scalar::Real;
use crate::sobol::SobolSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Pseudo,
    Sobol,
}

/// `N` parameter vectors of dimension `M`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    points: Vec<f64>,
    pub seed: u64,
    pub kind: SampleKind,
    pub domain: ParameterDomain,
    /// Counter (pseudo) or sequence index (Sobol) of the first point.
    pub start: u64,
}

impl SampleSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim.max(1))
    }

    /// Points converted to the working scalar type.
    pub fn points_as<T: Real>(&self) -> Vec<Vec<T>> {
        self.iter()
            .map(|p| p.iter().map(|&v| T::lit(v)).collect())
            .collect()
    }

    pub fn raw(&self) -> &[f64] {
        &self.points
    }
}

fn check_sizes(dim: usize, count: usize) -> Result<()> {
    if dim == 0 || count == 0 {
        Err(VmcError::invalid("sample sets need M ≥ 1 and N ≥ 1"))
    } else {
        Ok(())
    }
}

/// One pseudo-random point; depends only on `(seed, index)`.
pub fn pseudo_point(dim: usize, index: u64, seed: u64, domain: ParameterDomain) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (0..dim)
        .map(|_| match domain {
            ParameterDomain::UniformCube => rng.random_range(-1.0..=1.0),
            ParameterDomain::Gaussian => rng.sample(StandardNormal),
        })
        .collect()
}

/// Points `0..N` of the counter-based stream keyed by `seed`.
pub fn sample_pseudo(
    dim: usize,
    count: usize,
    seed: u64,
    domain: ParameterDomain,
) -> Result<SampleSet> {
    sample_pseudo_range(dim, 0, count, seed, domain)
}

/// Points `start..start+N` of the counter-based stream keyed by `seed`.
pub fn sample_pseudo_range(
    dim: usize,
    start: u64,
    count: usize,
    seed: u64,
    domain: ParameterDomain,
) -> Result<SampleSet> {
    check_sizes(dim, count)?;
    let points = (0..count as u64)
        .flat_map(|i| pseudo_point(dim, start + i, seed, domain))
        .collect();
    Ok(SampleSet {
        dim,
        points,
        seed,
        kind: SampleKind::Pseudo,
        domain,
        start,
    })
}

/// Sobol points `1..=N` mapped to the requested domain (index 0 is skipped).
pub fn sample_sobol(dim: usize, count: usize, domain: ParameterDomain) -> Result<SampleSet> {
    check_sizes(dim, count)?;
    let seq = SobolSequence::new(dim)?;
    let mut points = Vec::with_capacity(dim * count);
    let mut buf = vec![0.0; dim];
    for i in 1..=count as u64 {
        seq.point_into(i, &mut buf);
        points.extend(buf.iter().map(|&t| map_unit(t, domain)));
    }
    Ok(SampleSet {
        dim,
        points,
        seed: 0,
        kind: SampleKind::Sobol,
        domain,
        start: 1,
    })
}

/// Maps a point of `(0, 1)` to the domain: `2t - 1` or `Φ⁻¹(t)`.
pub fn map_unit(t: f64, domain: ParameterDomain) -> f64 {
    match domain {
        ParameterDomain::UniformCube => 2.0 * t - 1.0,
        ParameterDomain::Gaussian => {
            inverse_normal_cdf(t).expect("Sobol points after index 0 lie in (0, 1)")
        }
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by one
/// Halley step on the erfc-based CDF.
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(VmcError::invalid(format!(
            "quantile level {p} outside (0, 1)"
        )));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p > 0.5 {
        // 1 - p is exact here, and the lower half has the accurate CDF.
        return inverse_normal_cdf(1.0 - p).map(|x| -x);
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // One Halley step on Φ(x) - p.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quantile by bisection on the erf-based CDF.
    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0, 40.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(inverse_normal_cdf(0.5).unwrap(), 0.0);
        let q = inverse_normal_cdf(0.975).unwrap();
        assert!((q - bisect_quantile(0.975)).abs() < 1e-12);
        assert!((q - 1.959964).abs() < 1e-6);
        for p in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(inverse_normal_cdf(p).is_err());
        }
    }

    #[test]
    fn quantile_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p: f64 = rng.random_range(1e-12..1.0 - 1e-12);
            let x = inverse_normal_cdf(p).unwrap();
            assert!((normal_cdf(x) - p).abs() <= 1e-9, "p = {p}");
        }
        for p in [1e-300, 1e-15, 1e-6, 0.02425, 0.97575, 1.0 - 1e-12] {
            let x = inverse_normal_cdf(p).unwrap();
            assert!(((normal_cdf(x) - p) / p.min(1.0 - p)).abs() < 1e-9);
        }
    }

    #[test]
    fn pseudo_points_depend_only_on_counter() {
        let a = sample_pseudo(4, 10, 7, ParameterDomain::UniformCube).unwrap();
        let b = sample_pseudo(4, 50, 7, ParameterDomain::UniformCube).unwrap();
        for i in 0..10 {
            assert_eq!(a.point(i), b.point(i));
        }
        let tail = sample_pseudo_range(4, 5, 5, 7, ParameterDomain::UniformCube).unwrap();
        for i in 0..5 {
            assert_eq!(tail.point(i), a.point(i + 5));
        }
        let c = sample_pseudo(4, 10, 8, ParameterDomain::UniformCube).unwrap();
        assert_ne!(a.point(0), c.point(0));
        assert!(b.raw().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(
            a,
            sample_pseudo(4, 10, 7, ParameterDomain::UniformCube).unwrap()
        );
    }

    #[test]
    fn uniform_mean_within_three_sigma() {
        let n = 100_000;
        let s = sample_pseudo(3, n, 42, ParameterDomain::UniformCube).unwrap();
        let tol = 3.0 * (1.0 / 3f64.sqrt()) / (n as f64).sqrt();
        for d in 0..3 {
            let mean = s.iter().map(|p| p[d]).sum::<f64>() / n as f64;
            assert!(mean.abs() < tol.max(0.01) && mean.abs() < 0.01);
        }
    }

    #[test]
    fn gaussian_moments() {
        let n = 50_000;
        let s = sample_pseudo(2, n, 5, ParameterDomain::Gaussian).unwrap();
        let m2 = s.iter().map(|p| p[1] * p[1]).sum::<f64>() / n as f64;
        assert!((m2 - 1.0).abs() < 0.03);
    }

    #[test]
    fn sobol_mapping() {
        let s = sample_sobol(1, 3, ParameterDomain::UniformCube).unwrap();
        assert_eq!(s.raw(), &[0.0, 0.5, -0.5]);
        let g = sample_sobol(2, 3, ParameterDomain::Gaussian).unwrap();
        assert_eq!(g.point(0), &[0.0, 0.0]);
        assert!(g.raw().iter().all(|v| v.is_finite()));
        assert!(sample_sobol(300, 2, ParameterDomain::UniformCube).is_err());
        assert!(sample_sobol(2, 0, ParameterDomain::UniformCube).is_err());
    }
}
