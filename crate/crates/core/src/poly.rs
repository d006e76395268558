//! Orthonormal polynomial families and Gauss rules for the parameter measures.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::field::ParameterDomain;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisFamily {
    /// Legendre, orthonormal for the uniform probability measure on `[-1, 1]`.
    LegendreUniform,
    /// Probabilists' Hermite, orthonormal for `N(0, 1)`.
    HermiteGaussian,
}

impl BasisFamily {
    pub fn for_domain(domain: ParameterDomain) -> Self {
        match domain {
            ParameterDomain::UniformCube => Self::LegendreUniform,
            ParameterDomain::Gaussian => Self::HermiteGaussian,
        }
    }

    pub fn domain(self) -> ParameterDomain {
        match self {
            Self::LegendreUniform => ParameterDomain::UniformCube,
            Self::HermiteGaussian => ParameterDomain::Gaussian,
        }
    }

    /// Whether `y` lies in the support of the measure.
    pub fn in_support(self, y: f64) -> bool {
        match self {
            Self::LegendreUniform => (-1.0..=1.0).contains(&y),
            Self::HermiteGaussian => y.is_finite(),
        }
    }

    /// Off-diagonal Jacobi coefficient `b_k` linking degrees `k-1` and `k`
    /// (the diagonal is zero for both symmetric families).
    fn jacobi_offdiag(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Self::LegendreUniform => k / (4.0 * k * k - 1.0).sqrt(),
            Self::HermiteGaussian => k.sqrt(),
        }
    }
}

/// Tensor-product basis: family plus the number of polynomials per mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub degrees: Vec<usize>,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, degrees: Vec<usize>) -> Result<Self> {
        if degrees.is_empty() || degrees.contains(&0) {
            return Err(VmcError::invalid(
                "every mode needs at least one polynomial",
            ));
        }
        Ok(Self { family, degrees })
    }

    /// `M` modes with `q` polynomials each.
    pub fn uniform(family: BasisFamily, modes: usize, q: usize) -> Result<Self> {
        Self::new(family, vec![q; modes])
    }

    pub fn modes(&self) -> usize {
        self.degrees.len()
    }

    /// Size of the full tensor index set.
    pub fn index_set_size(&self) -> f64 {
        self.degrees.iter().map(|&q| q as f64).product()
    }

    /// Per-mode basis vectors at `y`.
    pub fn eval<T: Real>(&self, y: &[T]) -> Result<Vec<Vec<T>>> {
        if y.len() != self.modes() {
            return Err(VmcError::DimensionMismatch {
                expected: self.modes(),
                found: y.len(),
            });
        }
        Ok(self
            .degrees
            .iter()
            .zip(y)
            .map(|(&q, &t)| eval_basis_vector(self.family, q, t))
            .collect())
    }

    /// Value of the product polynomial `P_α(y)`.
    pub fn eval_multi<T: Real>(&self, alpha: &[usize], y: &[T]) -> Result<T> {
        let vs = self.eval(y)?;
        let mut p = T::one();
        for (m, (&a, v)) in alpha.iter().zip(&vs).enumerate() {
            if a >= v.len() {
                return Err(VmcError::IndexOutOfRange {
                    mode: m + 1,
                    index: a,
                    size: v.len(),
                });
            }
            p *= v[a];
        }
        Ok(p)
    }
}

/// Orthonormal polynomials of degree `0..q` at `y`. Outside `[-1, 1]` the
/// Legendre values are still computed; use [`BasisFamily::in_support`] to check.
pub fn eval_basis_vector<T: Real>(family: BasisFamily, q: usize, y: T) -> Vec<T> {
    let mut out = Vec::with_capacity(q);
    if q == 0 {
        return out;
    }
    out.push(T::one());
    if q == 1 {
        return out;
    }
    // y p_k = b_{k+1} p_{k+1} + b_k p_{k-1}
    let b1 = T::lit(family.jacobi_offdiag(1));
    out.push(y / b1);
    for k in 1..q - 1 {
        let bk = T::lit(family.jacobi_offdiag(k));
        let bk1 = T::lit(family.jacobi_offdiag(k + 1));
        let next = (y * out[k] - bk * out[k - 1]) / bk1;
        out.push(next);
    }
    out
}

/// `n`-point Gauss rule for the family's probability measure (weights sum to 1),
/// nodes ascending.
pub fn gauss_rule<T: Real>(family: BasisFamily, n: usize) -> Result<(Vec<T>, Vec<T>)> {
    if n == 0 {
        return Err(VmcError::invalid("a Gauss rule needs at least one node"));
    }
    let mut jac = DMatrix::<T>::zeros(n, n);
    for k in 1..n {
        let b = T::lit(family.jacobi_offdiag(k));
        jac[(k, k - 1)] = b;
        jac[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(T, T)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    Ok(pairs.into_iter().unzip())
}

/// Quadrature approximation of `∫ P_i P_j dρ` with an `order`-point Gauss rule.
pub fn gram_matrix<T: Real>(family: BasisFamily, q: usize, order: usize) -> Result<DMatrix<T>> {
    if order < q {
        return Err(VmcError::invalid(format!(
            "quadrature order {order} below basis size {q}"
        )));
    }
    let (nodes, weights) = gauss_rule::<T>(family, order)?;
    let mut g = DMatrix::<T>::zeros(q, q);
    for (&t, &w) in nodes.iter().zip(&weights) {
        let p = eval_basis_vector(family, q, t);
        for i in 0..q {
            for j in 0..q {
                g[(i, j)] += w * p[i] * p[j];
            }
        }
    }
    Ok(g)
}
