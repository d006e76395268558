//! Parametric diffusion coefficients and the benchmark problem catalog.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::scalar::Real;

/// Probability measure on the parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterDomain {
    /// `U([-1, 1]^M)`.
    UniformCube,
    /// `N(0, I_M)`.
    Gaussian,
}

/// `a₀ + c_θ Σ_m a_m(x) y_m` with spatially constant `a₀`.
///
/// The amplitude scale `c_θ` is chosen so that `Σ_m sup_x |c_θ a_m(x)|` equals
/// `θ·a₀` (affine) or `θ` (lognormal exponent, where `a₀` is usually zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineExpansion<T> {
    pub a0: T,
    pub modes: usize,
    pub theta: T,
}

impl<T: Real> AffineExpansion<T> {
    /// `Σ_{m ≤ M} m⁻²`, the sum of the mode sup-norms.
    pub fn amplitude_mass(&self) -> T {
        (1..=self.modes).fold(T::zero(), |s, m| s + T::one() / T::from_count(m * m))
    }

    fn scale(&self, fluctuation: T) -> T {
        if self.modes == 0 {
            T::zero()
        } else {
            fluctuation / self.amplitude_mass()
        }
    }
}

/// Number of inclusions in the cookie problem.
pub const COOKIE_DISCS: usize = 9;
const COOKIE_RADIUS: f64 = 0.125;

/// Disc centres `(i/6, j/6)`, `i, j ∈ {1, 3, 5}`, x index fastest.
pub fn cookie_centers<T: Real>() -> [[T; 2]; COOKIE_DISCS] {
    let mut c = [[T::zero(); 2]; COOKIE_DISCS];
    for (k, ck) in c.iter_mut().enumerate() {
        let (i, j) = (2 * (k % 3) + 1, 2 * (k / 3) + 1);
        *ck = [
            T::from_count(i) / T::lit(6.0),
            T::from_count(j) / T::lit(6.0),
        ];
    }
    c
}

fn cookie_disc<T: Real>(x: [T; 2]) -> Option<usize> {
    let r2 = T::lit(COOKIE_RADIUS * COOKIE_RADIUS);
    cookie_centers::<T>().iter().position(|c| {
        let (dx, dy) = (x[0] - c[0], x[1] - c[1]);
        dx * dx + dy * dy <= r2
    })
}

/// The parametric coefficient `a(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientModel<T> {
    Affine(AffineExpansion<T>),
    /// `exp` of the affine expansion (with `a₀` inside the exponent).
    Lognormal(AffineExpansion<T>),
    /// `1` outside nine fixed discs, `1 + contrast·y_k` on disc `k`.
    Cookie {
        contrast: T,
    },
}

/// `m⁻² sin(⌊(m+2)/2⌋πx₁) sin(⌈(m+2)/2⌉πx₂)`.
pub fn amplitude<T: Real>(m: usize, x: [T; 2]) -> T {
    debug_assert!(m >= 1);
    let kx = (m + 2) / 2;
    let ky = (m + 3) / 2;
    let pi = T::pi();
    (T::from_count(kx) * pi * x[0]).sin() * (T::from_count(ky) * pi * x[1]).sin()
        / T::from_count(m * m)
}

impl<T: Real> CoefficientModel<T> {
    pub fn parameter_dim(&self) -> usize {
        match self {
            CoefficientModel::Affine(e) | CoefficientModel::Lognormal(e) => e.modes,
            CoefficientModel::Cookie { .. } => COOKIE_DISCS,
        }
    }

    pub fn domain(&self) -> ParameterDomain {
        match self {
            CoefficientModel::Lognormal(_) => ParameterDomain::Gaussian,
            _ => ParameterDomain::UniformCube,
        }
    }

    /// True when every parameter coordinate has no effect.
    pub fn is_deterministic(&self) -> bool {
        match self {
            CoefficientModel::Affine(e) | CoefficientModel::Lognormal(e) => {
                e.theta == T::zero() || e.modes == 0
            }
            CoefficientModel::Cookie { contrast } => *contrast == T::zero(),
        }
    }

    /// `a(x, y)`.
    pub fn eval(&self, x: [T; 2], y: &[T]) -> Result<T> {
        if y.len() != self.parameter_dim() {
            return Err(VmcError::invalid(format!(
                "parameter vector has length {}, model expects {}",
                y.len(),
                self.parameter_dim()
            )));
        }
        Ok(match self {
            CoefficientModel::Affine(e) => e.a0 + e.scale(e.theta * e.a0) * fluctuation(x, y),
            CoefficientModel::Lognormal(e) => (e.a0 + e.scale(e.theta) * fluctuation(x, y)).exp(),
            CoefficientModel::Cookie { contrast } => match cookie_disc(x) {
                Some(k) => T::one() + *contrast * y[k],
                None => T::one(),
            },
        })
    }

    /// Bounds `(a_lower, a_upper)` holding surely for affine and cookie
    /// models and with probability at least `1 - 1e-6` for lognormal ones.
    pub fn ellipticity_bounds(&self) -> (T, T) {
        self.ellipticity_bounds_with(T::lit(1e-6))
    }

    /// As [`Self::ellipticity_bounds`] with a configurable lognormal failure
    /// probability `eps` (ignored by the other models).
    ///
    /// For lognormal models a union bound over the `M` Gaussian coordinates
    /// gives `|Σ c a_m y_m| ≤ θ·z` with `z` the `1 - eps/(2M)` quantile.
    pub fn ellipticity_bounds_with(&self, eps: T) -> (T, T) {
        match self {
            CoefficientModel::Affine(e) => {
                let d = e.theta * e.a0;
                (e.a0 - d, e.a0 + d)
            }
            CoefficientModel::Cookie { contrast } => (T::one() - *contrast, T::one() + *contrast),
            CoefficientModel::Lognormal(e) => {
                if e.modes == 0 || e.theta == T::zero() {
                    return (e.a0.exp(), e.a0.exp());
                }
                let tail = eps.as_f64() / (2.0 * e.modes as f64);
                let z = T::lit(
                    crate::sampling::inverse_normal_cdf(1.0 - tail)
                        .expect("quantile level lies in (0, 1)"),
                );
                ((e.a0 - e.theta * z).exp(), (e.a0 + e.theta * z).exp())
            }
        }
    }

    /// Precomputes everything `y`-independent at a fixed set of points.
    pub fn table(&self, points: &[[T; 2]]) -> CoefficientTable<T> {
        let kind = match self {
            CoefficientModel::Affine(e) | CoefficientModel::Lognormal(e) => {
                let fluct = if matches!(self, CoefficientModel::Affine(_)) {
                    e.theta * e.a0
                } else {
                    e.theta
                };
                let c = e.scale(fluct);
                let mut amps = Vec::with_capacity(e.modes * points.len());
                for m in 1..=e.modes {
                    amps.extend(points.iter().map(|&x| c * amplitude(m, x)));
                }
                TableKind::Expansion {
                    a0: e.a0,
                    amps,
                    exponential: matches!(self, CoefficientModel::Lognormal(_)),
                }
            }
            CoefficientModel::Cookie { contrast } => TableKind::Cookie {
                contrast: *contrast,
                disc: points.iter().map(|&x| cookie_disc(x)).collect(),
            },
        };
        CoefficientTable {
            kind,
            num_points: points.len(),
            parameter_dim: self.parameter_dim(),
        }
    }
}

fn fluctuation<T: Real>(x: [T; 2], y: &[T]) -> T {
    y.iter()
        .enumerate()
        .fold(T::zero(), |s, (m, &ym)| s + amplitude(m + 1, x) * ym)
}

#[derive(Debug, Clone)]
enum TableKind<T> {
    Expansion {
        a0: T,
        amps: Vec<T>,
        exponential: bool,
    },
    Cookie {
        contrast: T,
        disc: Vec<Option<usize>>,
    },
}

/// A coefficient model frozen at a point set; see [`CoefficientModel::table`].
#[derive(Debug, Clone)]
pub struct CoefficientTable<T> {
    kind: TableKind<T>,
    num_points: usize,
    parameter_dim: usize,
}

impl<T: Real> CoefficientTable<T> {
    pub fn num_points(&self) -> usize {
        self.num_points
    }

    /// Writes `a(x_q, y)` for every tabulated point into `out`.
    pub fn evaluate(&self, y: &[T], out: &mut [T]) -> Result<()> {
        if y.len() != self.parameter_dim {
            return Err(VmcError::DimensionMismatch {
                expected: self.parameter_dim,
                found: y.len(),
            });
        }
        if out.len() != self.num_points {
            return Err(VmcError::DimensionMismatch {
                expected: self.num_points,
                found: out.len(),
            });
        }
        match &self.kind {
            TableKind::Expansion {
                a0,
                amps,
                exponential,
            } => {
                out.iter_mut().for_each(|o| *o = *a0);
                for (m, &ym) in y.iter().enumerate() {
                    let row = &amps[m * self.num_points..(m + 1) * self.num_points];
                    for (o, &a) in out.iter_mut().zip(row) {
                        *o += a * ym;
                    }
                }
                if *exponential {
                    out.iter_mut().for_each(|o| *o = o.exp());
                }
            }
            TableKind::Cookie { contrast, disc } => {
                for (o, d) in out.iter_mut().zip(disc) {
                    *o = match d {
                        Some(k) => T::one() + *contrast * y[*k],
                        None => T::one(),
                    };
                }
            }
        }
        Ok(())
    }
}

/// A benchmark problem: `-∇·(a(x, y)∇u) = 1` on the unit square with
/// homogeneous Dirichlet conditions, discretized on an `n × n` mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec<T> {
    pub model: CoefficientModel<T>,
    pub mesh_n: usize,
}

/// Default fluctuation fraction θ.
pub const DEFAULT_THETA: f64 = 0.9;
/// Default cookie contrast.
pub const DEFAULT_COOKIE_CONTRAST: f64 = 0.9;

/// Catalog names accepted by [`ProblemSpec::from_catalog`].
pub const CATALOG: [&str; 3] = ["affine", "lognormal", "cookie"];

impl<T: Real> ProblemSpec<T> {
    /// Looks up `affine`, `lognormal` or `cookie` with default constants.
    /// `modes` is ignored for `cookie`, which always has nine parameters.
    pub fn from_catalog(name: &str, modes: usize, mesh_n: usize) -> Result<Self> {
        let theta = T::lit(DEFAULT_THETA);
        let model = match name {
            "affine" => CoefficientModel::Affine(AffineExpansion {
                a0: T::one(),
                modes,
                theta,
            }),
            "lognormal" => CoefficientModel::Lognormal(AffineExpansion {
                a0: T::zero(),
                modes,
                theta,
            }),
            "cookie" => CoefficientModel::Cookie {
                contrast: T::lit(DEFAULT_COOKIE_CONTRAST),
            },
            other => {
                return Err(VmcError::invalid(format!(
                    "unknown problem '{other}', expected one of {CATALOG:?}"
                )))
            }
        };
        if model.parameter_dim() == 0 {
            return Err(VmcError::invalid("problem needs at least one parameter"));
        }
        Ok(Self { model, mesh_n })
    }

    pub fn parameter_dim(&self) -> usize {
        self.model.parameter_dim()
    }

    pub fn domain(&self) -> ParameterDomain {
        self.model.domain()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine(modes: usize, theta: f64) -> CoefficientModel<f64> {
        CoefficientModel::Affine(AffineExpansion {
            a0: 1.0,
            modes,
            theta,
        })
    }

    #[test]
    fn amplitude_examples() {
        assert!(amplitude::<f64>(1, [0.5, 0.5]).abs() < 1e-15);
        assert!((amplitude::<f64>(2, [0.25, 0.25]) - 0.25).abs() < 1e-15);
        for m in 1..8 {
            for x in [[0.0, 0.3], [1.0, 0.7], [0.4, 0.0], [0.2, 1.0]] {
                assert!(amplitude::<f64>(m, x).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn affine_examples() {
        let model = affine(3, 0.9);
        assert_eq!(model.eval([0.3, 0.8], &[0.0; 3]).unwrap(), 1.0);
        // c = 0.9 / (1 + 1/4 + 1/9) = 0.9 · 36/49
        let expected = 1.0 + 0.9 * 36.0 / 49.0 * 0.25;
        let v = model.eval([0.25, 0.25], &[0.0, 1.0, 0.0]).unwrap();
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 1.16531).abs() < 1e-5);
        assert!(model.eval([0.5, 0.5], &[0.0; 2]).is_err());
    }

    #[test]
    fn cookie_examples() {
        let model = CoefficientModel::<f64>::Cookie { contrast: 0.9 };
        let mut y = [0.0; 9];
        y[0] = 1.0;
        assert!((model.eval([1.0 / 6.0, 1.0 / 6.0], &y).unwrap() - 1.9).abs() < 1e-15);
        assert_eq!(model.eval([0.5, 1.0 / 6.0 + 0.2], &y).unwrap(), 1.0);
        // closed disc boundary belongs to the disc
        let mut y5 = [0.0; 9];
        y5[4] = -1.0;
        assert!((model.eval([0.5 + 0.125, 0.5], &y5).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ellipticity_examples() {
        let (lo, hi) = affine(5, 0.9).ellipticity_bounds();
        assert!((lo - 0.1).abs() < 1e-15 && (hi - 1.9).abs() < 1e-15);
        let (lo, hi) = CoefficientModel::<f64>::Cookie { contrast: 0.9 }.ellipticity_bounds();
        assert!((lo - 0.1).abs() < 1e-15 && (hi - 1.9).abs() < 1e-15);
        assert_eq!(affine(5, 0.0).ellipticity_bounds(), (1.0, 1.0));
    }

    #[test]
    fn random_draws_respect_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let models = [
            affine(6, 0.9),
            CoefficientModel::<f64>::Cookie { contrast: 0.9 },
            CoefficientModel::Lognormal(AffineExpansion {
                a0: 0.0,
                modes: 4,
                theta: 0.9,
            }),
        ];
        for model in models {
            let (lo, hi) = model.ellipticity_bounds();
            for _ in 0..10_000 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let y: Vec<f64> = (0..model.parameter_dim())
                    .map(|_| match model.domain() {
                        ParameterDomain::UniformCube => rng.random_range(-1.0..=1.0),
                        ParameterDomain::Gaussian => rng.sample(rand_distr::StandardNormal),
                    })
                    .collect();
                let a = model.eval(x, &y).unwrap();
                assert!(a >= lo && a <= hi, "{a} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn affine_is_linear_and_lognormal_is_exp() {
        let model = affine(5, 0.9);
        let inner = AffineExpansion {
            a0: 0.3,
            modes: 5,
            theta: 0.9,
        };
        let logn = CoefficientModel::Lognormal(inner);
        let y = [0.3, -0.7, 0.2, 0.9, -0.1];
        for x in [[0.1, 0.2], [0.77, 0.31]] {
            let base = model.eval(x, &y).unwrap() - 1.0;
            let ys: Vec<f64> = y.iter().map(|v| 0.37 * v).collect();
            assert!((model.eval(x, &ys).unwrap() - 1.0 - 0.37 * base).abs() < 1e-13);
            let c = 0.9 / inner.amplitude_mass();
            let exponent = 0.3
                + c * y
                    .iter()
                    .enumerate()
                    .map(|(m, v)| amplitude(m + 1, x) * v)
                    .sum::<f64>();
            assert!((logn.eval(x, &y).unwrap() - exponent.exp()).abs() < 1e-13);
        }
    }

    #[test]
    fn table_matches_pointwise_eval() {
        let pts = vec![[0.1, 0.9], [0.5, 0.5], [1.0 / 6.0, 0.5], [0.33, 0.66]];
        let models = [
            affine(4, 0.9),
            CoefficientModel::Lognormal(AffineExpansion {
                a0: 0.0,
                modes: 4,
                theta: 0.9,
            }),
        ];
        for model in models {
            let table = model.table(&pts);
            let y = [0.2, -0.5, 0.9, 0.0];
            let mut out = vec![0.0; 4];
            table.evaluate(&y, &mut out).unwrap();
            for (p, o) in pts.iter().zip(&out) {
                assert!((model.eval(*p, &y).unwrap() - o).abs() < 1e-14);
            }
        }
        let cookie = CoefficientModel::Cookie { contrast: 0.5 };
        let y: Vec<f64> = (0..9).map(|k| k as f64 / 9.0).collect();
        let mut out = vec![0.0; 4];
        cookie.table(&pts).evaluate(&y, &mut out).unwrap();
        for (p, o) in pts.iter().zip(&out) {
            assert_eq!(cookie.eval(*p, &y).unwrap(), *o);
        }
    }

    #[test]
    fn catalog_lookup() {
        let p = ProblemSpec::<f64>::from_catalog("cookie", 3, 8).unwrap();
        assert_eq!(p.parameter_dim(), 9);
        let p = ProblemSpec::<f64>::from_catalog("lognormal", 3, 8).unwrap();
        assert_eq!(p.domain(), ParameterDomain::Gaussian);
        assert!(ProblemSpec::<f64>::from_catalog("darcy", 3, 8).is_err());
        assert!(ProblemSpec::<f64>::from_catalog("affine", 0, 8).is_err());
    }
}
