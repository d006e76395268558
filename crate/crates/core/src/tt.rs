//! Tensor trains over one spatial mode followed by `M` stochastic modes.
//!
//! Every core is stored as a row-major 3-tensor `(r_left, mode, r_right)`.
//! Core 0 has shape `(1, S, r₀)` and core `M` has shape `(r_{M-1}, q_M, 1)`,
//! so the chain `U₀(j) U₁(α₁) ··· U_M(α_M)` is a product of matrices.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, VmcError};
use crate::scalar::Real;

/// Format tag on the first line of the text serialization.
pub const FORMAT_TAG: &str = "VMC-TT";
pub const FORMAT_VERSION: u32 = 1;
/// Largest spatial dimension for which a dense second-moment matrix is built.
pub const DEFAULT_SECOND_MOMENT_CAP: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Left unfoldings of cores `0..M-1` get orthonormal columns.
    Left,
    /// Right unfoldings of cores `1..=M` get orthonormal rows.
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain<T> {
    modes: Vec<usize>,
    /// `1, r₀, …, r_{M-1}, 1`.
    bonds: Vec<usize>,
    cores: Vec<Vec<T>>,
}

pub(crate) fn to_matrix<T: Real>(rows: usize, cols: usize, data: &[T]) -> DMatrix<T> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub(crate) fn from_matrix<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn validate_shape(modes: &[usize], ranks: &[usize]) -> Result<Vec<usize>> {
    if modes.len() < 2 {
        return Err(VmcError::invalid(
            "a tensor train needs a spatial mode and at least one stochastic mode",
        ));
    }
    if modes.contains(&0) || ranks.contains(&0) {
        return Err(VmcError::invalid("mode sizes and ranks must be positive"));
    }
    if ranks.len() != modes.len() - 1 {
        return Err(VmcError::DimensionMismatch {
            expected: modes.len() - 1,
            found: ranks.len(),
        });
    }
    let mut bonds = Vec::with_capacity(modes.len() + 1);
    bonds.push(1);
    bonds.extend_from_slice(ranks);
    bonds.push(1);
    Ok(bonds)
}

impl<T: Real> TensorTrain<T> {
    pub fn new(modes: Vec<usize>, ranks: Vec<usize>, cores: Vec<Vec<T>>) -> Result<Self> {
        let bonds = validate_shape(&modes, &ranks)?;
        if cores.len() != modes.len() {
            return Err(VmcError::DimensionMismatch {
                expected: modes.len(),
                found: cores.len(),
            });
        }
        for (k, c) in cores.iter().enumerate() {
            let want = bonds[k] * modes[k] * bonds[k + 1];
            if c.len() != want {
                return Err(VmcError::DimensionMismatch {
                    expected: want,
                    found: c.len(),
                });
            }
        }
        Ok(Self {
            modes,
            bonds,
            cores,
        })
    }

    /// Builds every core entry from `f(k, a, i, b)`.
    pub fn from_fn<F: FnMut(usize, usize, usize, usize) -> T>(
        modes: Vec<usize>,
        ranks: Vec<usize>,
        mut f: F,
    ) -> Result<Self> {
        let bonds = validate_shape(&modes, &ranks)?;
        let cores = (0..modes.len())
            .map(|k| {
                let (rl, n, rr) = (bonds[k], modes[k], bonds[k + 1]);
                let mut c = Vec::with_capacity(rl * n * rr);
                for a in 0..rl {
                    for i in 0..n {
                        for b in 0..rr {
                            c.push(f(k, a, i, b));
                        }
                    }
                }
                c
            })
            .collect();
        Ok(Self {
            modes,
            bonds,
            cores,
        })
    }

    pub fn zeros(modes: Vec<usize>, ranks: Vec<usize>) -> Result<Self> {
        Self::from_fn(modes, ranks, |_, _, _, _| T::zero())
    }

    /// Cores with independent standard normal entries.
    pub fn random<R: Rng + ?Sized>(
        modes: Vec<usize>,
        ranks: Vec<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        Self::from_fn(modes, ranks, |_, _, _, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        })
    }

    pub(crate) fn from_parts(modes: Vec<usize>, bonds: Vec<usize>, cores: Vec<Vec<T>>) -> Self {
        debug_assert_eq!(bonds.len(), modes.len() + 1);
        debug_assert!(cores
            .iter()
            .enumerate()
            .all(|(k, c)| c.len() == bonds[k] * modes[k] * bonds[k + 1]));
        Self {
            modes,
            bonds,
            cores,
        }
    }

    pub(crate) fn core_mut(&mut self, k: usize) -> &mut Vec<T> {
        &mut self.cores[k]
    }

    pub(crate) fn into_parts(self) -> (Vec<usize>, Vec<usize>, Vec<Vec<T>>) {
        (self.modes, self.bonds, self.cores)
    }

    /// Mode sizes `(S, q₁, …, q_M)`.
    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Ranks `(r₀, …, r_{M-1})`.
    pub fn ranks(&self) -> &[usize] {
        &self.bonds[1..self.bonds.len() - 1]
    }

    pub fn spatial_dim(&self) -> usize {
        self.modes[0]
    }

    /// Number of stochastic modes `M`.
    pub fn order(&self) -> usize {
        self.modes.len() - 1
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn core(&self, k: usize) -> &[T] {
        &self.cores[k]
    }

    /// `(r_left, mode, r_right)` of core `k`.
    pub fn core_shape(&self, k: usize) -> (usize, usize, usize) {
        (self.bonds[k], self.modes[k], self.bonds[k + 1])
    }

    /// Total number of stored core entries.
    pub fn num_parameters(&self) -> usize {
        self.cores.iter().map(Vec::len).sum()
    }

    /// `W(j, α)`.
    pub fn entry(&self, j: usize, alpha: &[usize]) -> Result<T> {
        if alpha.len() != self.order() {
            return Err(VmcError::DimensionMismatch {
                expected: self.order(),
                found: alpha.len(),
            });
        }
        let mut idx = Vec::with_capacity(self.modes.len());
        idx.push(j);
        idx.extend_from_slice(alpha);
        for (m, (&i, &n)) in idx.iter().zip(&self.modes).enumerate() {
            if i >= n {
                return Err(VmcError::IndexOutOfRange {
                    mode: m,
                    index: i,
                    size: n,
                });
            }
        }
        let mut row = vec![T::one()];
        for (k, &i) in idx.iter().enumerate() {
            let (rl, n, rr) = self.core_shape(k);
            let c = &self.cores[k];
            let mut next = vec![T::zero(); rr];
            for (a, &ra) in row.iter().enumerate().take(rl) {
                let base = (a * n + i) * rr;
                for (b, nb) in next.iter_mut().enumerate() {
                    *nb += ra * c[base + b];
                }
            }
            row = next;
        }
        Ok(row[0])
    }

    /// Contracts stochastic mode `m` with `vs[m-1]` for all `m`, returning the
    /// length-`S` vector `Σ_α W(·, α) ∏ v_m(α_m)`.
    pub fn eval_at<V: AsRef<[T]>>(&self, vs: &[V]) -> Result<Vec<T>> {
        if vs.len() != self.order() {
            return Err(VmcError::DimensionMismatch {
                expected: self.order(),
                found: vs.len(),
            });
        }
        for (m, v) in vs.iter().enumerate() {
            if v.as_ref().len() != self.modes[m + 1] {
                return Err(VmcError::DimensionMismatch {
                    expected: self.modes[m + 1],
                    found: v.as_ref().len(),
                });
            }
        }
        let right = self.right_contraction(vs);
        Ok(self.apply_first_core(&right))
    }

    /// Right-to-left contraction of cores `1..=M` with the given vectors,
    /// giving a vector of length `r₀`.
    fn right_contraction<V: AsRef<[T]>>(&self, vs: &[V]) -> Vec<T> {
        let mut col = vec![T::one()];
        for k in (1..self.cores.len()).rev() {
            let (rl, n, rr) = self.core_shape(k);
            let v = vs[k - 1].as_ref();
            let c = &self.cores[k];
            let mut next = vec![T::zero(); rl];
            for (a, na) in next.iter_mut().enumerate() {
                let mut s = T::zero();
                for (i, &vi) in v.iter().enumerate().take(n) {
                    let base = (a * n + i) * rr;
                    let mut t = T::zero();
                    for b in 0..rr {
                        t += c[base + b] * col[b];
                    }
                    s += vi * t;
                }
                *na = s;
            }
            col = next;
        }
        col
    }

    fn apply_first_core(&self, x: &[T]) -> Vec<T> {
        let r0 = self.bonds[1];
        self.cores[0]
            .chunks_exact(r0)
            .map(|row| row.iter().zip(x).fold(T::zero(), |s, (&a, &b)| s + a * b))
            .collect()
    }

    /// Expectation under orthonormal bases with `P₀ ≡ 1`: contraction with `e₀`.
    pub fn mean(&self) -> Vec<T> {
        let e0: Vec<Vec<T>> = self.modes[1..]
            .iter()
            .map(|&q| {
                let mut e = vec![T::zero(); q];
                e[0] = T::one();
                e
            })
            .collect();
        let right = self.right_contraction(&e0);
        self.apply_first_core(&right)
    }

    /// Dense tensor in row-major order over `(j, α₁, …, α_M)`, for small instances.
    pub fn to_dense(&self, max_entries: usize) -> Result<Vec<T>> {
        let total = self
            .modes
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n));
        let total = match total {
            Some(t) if t <= max_entries => t,
            _ => {
                return Err(VmcError::Capacity(format!(
                    "dense tensor exceeds {max_entries} entries"
                )))
            }
        };
        // Left-to-right: rows indexed by the multi-index prefix.
        let mut acc = DMatrix::<T>::from_element(1, 1, T::one());
        for k in 0..self.cores.len() {
            let (rl, n, rr) = self.core_shape(k);
            let core = to_matrix(rl, n * rr, &self.cores[k]);
            let prod = &acc * core;
            // reshape (P, n*rr) -> (P*n, rr) keeping row-major order
            let p = prod.nrows();
            let mut next = DMatrix::<T>::zeros(p * n, rr);
            for r in 0..p {
                for i in 0..n {
                    for b in 0..rr {
                        next[(r * n + i, b)] = prod[(r, i * rr + b)];
                    }
                }
            }
            acc = next;
        }
        debug_assert_eq!(acc.nrows(), total);
        Ok(acc.column(0).iter().copied().collect())
    }

    /// Orthogonalizes the train; the represented tensor is unchanged.
    pub fn canonicalize(&self, direction: Direction) -> Self {
        let mut out = self.clone();
        match direction {
            Direction::Left => {
                for k in 0..out.cores.len() - 1 {
                    out.left_orthogonalize_core(k);
                }
            }
            Direction::Right => {
                for k in (1..out.cores.len()).rev() {
                    out.right_orthogonalize_core(k);
                }
            }
        }
        out
    }

    /// QR of the left unfolding of core `k`; the factor `R` moves into core `k+1`.
    pub(crate) fn left_orthogonalize_core(&mut self, k: usize) {
        let (rl, n, rr) = self.core_shape(k);
        let qr = to_matrix(rl * n, rr, &self.cores[k]).qr();
        let (q, r) = (qr.q(), qr.r());
        let m = q.ncols();
        self.cores[k] = from_matrix(&q);
        let (_, n2, rr2) = self.core_shape(k + 1);
        let next = &r * to_matrix(rr, n2 * rr2, &self.cores[k + 1]);
        self.cores[k + 1] = from_matrix(&next);
        self.bonds[k + 1] = m;
    }

    /// LQ of the right unfolding of core `k`; the factor `L` moves into core `k-1`.
    pub(crate) fn right_orthogonalize_core(&mut self, k: usize) {
        let (rl, n, rr) = self.core_shape(k);
        let qr = to_matrix(rl, n * rr, &self.cores[k]).transpose().qr();
        let (q, r) = (qr.q(), qr.r());
        let m = q.ncols();
        self.cores[k] = from_matrix(&q.transpose());
        let (rl0, n0, _) = self.core_shape(k - 1);
        let prev = to_matrix(rl0 * n0, rl, &self.cores[k - 1]) * r.transpose();
        self.cores[k - 1] = from_matrix(&prev);
        self.bonds[k] = m;
    }

    /// Frobenius inner product `Σ_{j,α} W₁(j,α) W₂(j,α)`.
    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.modes != other.modes {
            return Err(VmcError::invalid(format!(
                "mode sizes differ: {:?} vs {:?}",
                self.modes, other.modes
            )));
        }
        let mut z = DMatrix::<T>::from_element(1, 1, T::one());
        for k in 0..self.cores.len() {
            let (rl1, n, rr1) = self.core_shape(k);
            let (rl2, _, rr2) = other.core_shape(k);
            let mut next = DMatrix::<T>::zeros(rr1, rr2);
            for i in 0..n {
                let a = slice_matrix(&self.cores[k], rl1, n, rr1, i);
                let b = slice_matrix(&other.cores[k], rl2, n, rr2, i);
                next += a.transpose() * &z * b;
            }
            z = next;
        }
        Ok(z[(0, 0)])
    }

    pub fn norm(&self) -> T {
        // After right-orthogonalization the norm sits entirely in core 0.
        let c = self.canonicalize(Direction::Right);
        c.cores[0].iter().fold(T::zero(), |s, &v| s + v * v).sqrt()
    }

    /// Multiplies the tensor by `factor` (scales core 0).
    pub fn scaled(&self, factor: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.cores[0] {
            *v *= factor;
        }
        out
    }

    /// Rounds to relative Frobenius accuracy `tol`.
    pub fn round(&self, tol: T) -> Self {
        self.round_with(tol, None)
    }

    /// Truncates to at most `max_ranks` (exact when the ranks already fit).
    pub fn round_to_ranks(&self, max_ranks: &[usize]) -> Result<Self> {
        if max_ranks.len() != self.ranks().len() {
            return Err(VmcError::DimensionMismatch {
                expected: self.ranks().len(),
                found: max_ranks.len(),
            });
        }
        if max_ranks.contains(&0) {
            return Err(VmcError::invalid("target ranks must be positive"));
        }
        Ok(self.round_with(T::zero(), Some(max_ranks)))
    }

    /// TT-SVD rounding: the tail dropped at each of the `M` bonds has norm at
    /// most `tol·‖W‖/√M`, and singular values below `1e-14·σ_max` always go.
    pub fn round_with(&self, tol: T, max_ranks: Option<&[usize]>) -> Self {
        let mut out = self.canonicalize(Direction::Right);
        let norm = out.cores[0]
            .iter()
            .fold(T::zero(), |s, &v| s + v * v)
            .sqrt();
        let bonds = T::from_count(out.cores.len() - 1);
        let delta = tol.max(T::zero()) * norm / bonds.sqrt();
        for k in 0..out.cores.len() - 1 {
            let (rl, n, rr) = out.core_shape(k);
            let svd = to_matrix(rl * n, rr, &out.cores[k]).svd(true, true);
            let u = svd.u.expect("requested U");
            let vt = svd.v_t.expect("requested Vᵀ");
            let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
            order.sort_by(|&a, &b| {
                svd.singular_values[b]
                    .partial_cmp(&svd.singular_values[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let sig: Vec<T> = order.iter().map(|&i| svd.singular_values[i]).collect();
            let smax = sig[0];
            let floor = T::lit(1e-14) * smax;
            let mut keep = sig.len();
            let mut tail = T::zero();
            while keep > 1 {
                let s = sig[keep - 1];
                if s <= floor || tail + s * s <= delta * delta {
                    tail += s * s;
                    keep -= 1;
                } else {
                    break;
                }
            }
            if let Some(cap) = max_ranks {
                keep = keep.min(cap[k]);
            }
            let mut newc = DMatrix::<T>::zeros(rl * n, keep);
            let mut carry = DMatrix::<T>::zeros(keep, rr);
            for (c, &i) in order.iter().take(keep).enumerate() {
                newc.set_column(c, &u.column(i));
                carry.set_row(c, &(vt.row(i) * svd.singular_values[i]));
            }
            out.cores[k] = from_matrix(&newc);
            let (_, n2, rr2) = out.core_shape(k + 1);
            out.cores[k + 1] = from_matrix(&(carry * to_matrix(rr, n2 * rr2, &out.cores[k + 1])));
            out.bonds[k + 1] = keep;
        }
        out
    }

    /// Right interface `E₁ = Σ_{α} G(α) G(α)ᵀ` with `G(α) = U₁(α₁)···U_M(α_M)`.
    fn right_gram(&self) -> DMatrix<T> {
        let mut e = DMatrix::<T>::from_element(1, 1, T::one());
        for k in (1..self.cores.len()).rev() {
            let (rl, n, rr) = self.core_shape(k);
            let mut next = DMatrix::<T>::zeros(rl, rl);
            for i in 0..n {
                let u = slice_matrix(&self.cores[k], rl, n, rr, i);
                next += &u * &e * u.transpose();
            }
            e = next;
        }
        e
    }

    /// `C(j, j') = Σ_α W(j, α) W(j', α)`, the second moment of the nodal
    /// coefficients under orthonormal bases.
    pub fn second_moment(&self) -> Result<DMatrix<T>> {
        self.second_moment_with_cap(DEFAULT_SECOND_MOMENT_CAP)
    }

    pub fn second_moment_with_cap(&self, cap: usize) -> Result<DMatrix<T>> {
        let s = self.spatial_dim();
        if s > cap {
            return Err(VmcError::Capacity(format!(
                "dense second moment needs S = {s} ≤ {cap}"
            )));
        }
        let u0 = to_matrix(s, self.bonds[1], &self.cores[0]);
        let c = &u0 * self.right_gram() * u0.transpose();
        // symmetrize against rounding
        Ok((&c + c.transpose()) * T::lit(0.5))
    }

    /// Diagonal of [`Self::second_moment`] without forming the dense matrix.
    pub fn second_moment_diagonal(&self) -> Vec<T> {
        let r0 = self.bonds[1];
        let e = self.right_gram();
        self.cores[0]
            .chunks_exact(r0)
            .map(|u| {
                let mut s = T::zero();
                for a in 0..r0 {
                    for b in 0..r0 {
                        s += u[a] * e[(a, b)] * u[b];
                    }
                }
                s
            })
            .collect()
    }

    /// Pointwise variance of the nodal coefficients, clamped at zero.
    pub fn variance_diagonal(&self) -> Vec<T> {
        self.second_moment_diagonal()
            .into_iter()
            .zip(self.mean())
            .map(|(m2, m)| (m2 - m * m).max(T::zero()))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }
}

/// Slice `U(:, i, :)` of a `(rl, n, rr)` core as an `rl × rr` matrix.
pub(crate) fn slice_matrix<T: Real>(
    core: &[T],
    rl: usize,
    n: usize,
    rr: usize,
    i: usize,
) -> DMatrix<T> {
    DMatrix::from_fn(rl, rr, |a, b| core[(a * n + i) * rr + b])
}

impl<T: Real> fmt::Display for TensorTrain<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{FORMAT_TAG} {FORMAT_VERSION}")?;
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        writeln!(f, "modes {}", join(&self.modes))?;
        writeln!(f, "ranks {}", join(self.ranks()))?;
        for c in &self.cores {
            let line = c
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn parse_err(msg: impl Into<String>) -> VmcError {
    VmcError::Parse(msg.into())
}

fn parse_counts(line: Option<&str>, key: &str) -> Result<Vec<usize>> {
    let line = line.ok_or_else(|| parse_err(format!("missing `{key}` line")))?;
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(parse_err(format!("expected `{key}` line, found `{line}`")));
    }
    it.map(|t| {
        t.parse::<usize>()
            .map_err(|e| parse_err(format!("{key}: {e}")))
    })
    .collect()
}

impl<T: Real> FromStr for TensorTrain<T> {
    type Err = VmcError;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines.next().ok_or_else(|| parse_err("empty input"))?;
        let mut h = header.split_whitespace();
        if h.next() != Some(FORMAT_TAG) {
            return Err(parse_err(format!("missing `{FORMAT_TAG}` header")));
        }
        let version: u32 = h
            .next()
            .ok_or_else(|| parse_err("missing format version"))?
            .parse()
            .map_err(|e| parse_err(format!("version: {e}")))?;
        if version != FORMAT_VERSION {
            return Err(parse_err(format!("unsupported format version {version}")));
        }
        let modes = parse_counts(lines.next(), "modes")?;
        let ranks = parse_counts(lines.next(), "ranks")?;
        let bonds = validate_shape(&modes, &ranks)?;
        let mut cores = Vec::with_capacity(modes.len());
        for k in 0..modes.len() {
            let line = lines
                .next()
                .ok_or_else(|| parse_err(format!("missing core {k}")))?;
            let vals: Vec<T> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<T>()
                        .map_err(|_| parse_err(format!("core {k}: bad number `{t}`")))
                })
                .collect::<Result<_>>()?;
            let want = bonds[k] * modes[k] * bonds[k + 1];
            if vals.len() != want {
                return Err(parse_err(format!(
                    "core {k}: expected {want} values, found {}",
                    vals.len()
                )));
            }
            cores.push(vals);
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(parse_err("trailing data after last core"));
        }
        Self::new(modes, ranks, cores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(3)
    }

    /// Entry-by-entry oracle using `entry`.
    fn dense_by_entries(w: &TensorTrain<f64>) -> Vec<f64> {
        let mut out = Vec::new();
        let modes = w.modes().to_vec();
        let total: usize = modes.iter().product();
        for flat in 0..total {
            let mut idx = vec![0; modes.len()];
            let mut r = flat;
            for k in (0..modes.len()).rev() {
                idx[k] = r % modes[k];
                r /= modes[k];
            }
            out.push(w.entry(idx[0], &idx[1..]).unwrap());
        }
        out
    }

    #[test]
    fn all_ones_chains() {
        let w = TensorTrain::<f64>::from_fn(vec![2, 3, 3], vec![1, 1], |_, _, _, _| 1.0).unwrap();
        assert_eq!(w.entry(1, &[2, 0]).unwrap(), 1.0);
        for m in 1..=4 {
            let w =
                TensorTrain::<f64>::from_fn(vec![2; m + 1], vec![2; m], |_, _, _, _| 1.0).unwrap();
            assert_eq!(w.entry(0, &vec![1; m]).unwrap(), 2f64.powi(m as i32));
        }
    }

    #[test]
    fn dense_matches_entries() {
        let w = TensorTrain::<f64>::random(vec![2, 2, 2, 2], vec![2, 2, 2], &mut rng()).unwrap();
        let d = w.to_dense(1 << 10).unwrap();
        let e = dense_by_entries(&w);
        assert_eq!(d.len(), 16);
        for (a, b) in d.iter().zip(&e) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(w.to_dense(8).is_err());
    }

    #[test]
    fn entry_index_checks() {
        let w = TensorTrain::<f64>::zeros(vec![2, 3], vec![1]).unwrap();
        assert!(matches!(
            w.entry(0, &[3]),
            Err(VmcError::IndexOutOfRange { mode: 1, .. })
        ));
        assert!(w.entry(0, &[0, 0]).is_err());
        assert!(
            TensorTrain::<f64>::new(vec![2, 3], vec![1], vec![vec![0.0; 2], vec![0.0; 2]]).is_err()
        );
        assert!(TensorTrain::<f64>::zeros(vec![2], vec![]).is_err());
    }

    #[test]
    fn eval_selects_zero_slice_and_is_linear() {
        let w = TensorTrain::<f64>::random(vec![4, 3, 3, 3], vec![2, 3, 2], &mut rng()).unwrap();
        let e0 = vec![vec![1.0, 0.0, 0.0]; 3];
        let v = w.eval_at(&e0).unwrap();
        for j in 0..4 {
            assert!((v[j] - w.entry(j, &[0, 0, 0]).unwrap()).abs() < 1e-13);
        }
        assert_eq!(w.mean(), v);
        let a = vec![
            vec![0.3, -1.0, 2.0],
            vec![1.0, 0.5, 0.0],
            vec![0.2, 0.1, -0.7],
        ];
        let mut b = a.clone();
        b[1] = vec![-2.0, 1.0, 0.4];
        let mut ab = a.clone();
        ab[1] = vec![1.0 - 2.0 * 2.0, 0.5 + 2.0 * 1.0, 0.8];
        let (fa, fb, fab) = (
            w.eval_at(&a).unwrap(),
            w.eval_at(&b).unwrap(),
            w.eval_at(&ab).unwrap(),
        );
        for j in 0..4 {
            assert!((fab[j] - (fa[j] + 2.0 * fb[j])).abs() < 1e-12);
        }
        assert!(w.eval_at(&a[..2]).is_err());
    }

    #[test]
    fn canonicalization_preserves_entries() {
        let w = TensorTrain::<f64>::random(vec![4, 3, 3, 3], vec![2, 3, 2], &mut rng()).unwrap();
        let d = w.to_dense(1000).unwrap();
        for dir in [Direction::Left, Direction::Right] {
            let c = w.canonicalize(dir);
            let cc = c.canonicalize(dir);
            for ((a, b), e) in c
                .to_dense(1000)
                .unwrap()
                .iter()
                .zip(cc.to_dense(1000).unwrap())
                .zip(&d)
            {
                assert!((a - e).abs() < 1e-12 && (b - e).abs() < 1e-12);
            }
        }
        let l = w.canonicalize(Direction::Left);
        for k in 0..3 {
            let (rl, n, rr) = l.core_shape(k);
            let q = to_matrix(rl * n, rr, l.core(k));
            assert!((q.transpose() * &q - DMatrix::identity(rr, rr)).amax() < 1e-12);
        }
        let last: f64 = l.core(3).iter().map(|v| v * v).sum::<f64>().sqrt();
        let fro: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((last - fro).abs() < 1e-12 * fro);
        assert!((w.norm() - fro).abs() < 1e-12 * fro);
    }

    #[test]
    fn rounding_removes_zero_padding() {
        let w = TensorTrain::<f64>::random(vec![5, 3, 3, 3], vec![2, 2, 2], &mut rng()).unwrap();
        let pad = 3;
        let padded =
            TensorTrain::<f64>::from_fn(vec![5, 3, 3, 3], vec![2 + pad; 3], |k, a, i, b| {
                let (rl, n, rr) = w.core_shape(k);
                if a < rl && b < rr {
                    w.core(k)[(a * n + i) * rr + b]
                } else {
                    0.0
                }
            })
            .unwrap();
        let r = padded.round(1e-12);
        assert_eq!(r.ranks(), &[2, 2, 2]);
        for (a, b) in r
            .to_dense(1000)
            .unwrap()
            .iter()
            .zip(w.to_dense(1000).unwrap())
        {
            assert!((a - b).abs() < 1e-10);
        }
        let same = w.round_to_ranks(&[2, 2, 2]).unwrap();
        for (a, b) in same
            .to_dense(1000)
            .unwrap()
            .iter()
            .zip(w.to_dense(1000).unwrap())
        {
            assert!((a - b).abs() < 1e-12);
        }
        let one = TensorTrain::<f64>::random(vec![3, 2, 2], vec![1, 1], &mut rng()).unwrap();
        let r1 = one.round_to_ranks(&[1, 1]).unwrap();
        for (a, b) in r1
            .to_dense(100)
            .unwrap()
            .iter()
            .zip(one.to_dense(100).unwrap())
        {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn rounding_error_within_tolerance() {
        let w = TensorTrain::<f64>::random(vec![6, 4, 4, 4], vec![4, 4, 4], &mut rng()).unwrap();
        let d = w.to_dense(10_000).unwrap();
        let fro = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        for tol in [0.05, 0.2, 0.5] {
            let r = w.round(tol);
            let err = r
                .to_dense(10_000)
                .unwrap()
                .iter()
                .zip(&d)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(
                err <= tol * fro * (1.0 + 1e-12),
                "tol {tol}: {err} vs {}",
                tol * fro
            );
        }
        let capped = w.round_to_ranks(&[1, 2, 1]).unwrap();
        assert_eq!(capped.ranks(), &[1, 2, 1]);
    }

    #[test]
    fn dot_and_moments() {
        let w = TensorTrain::<f64>::random(vec![4, 3, 3, 3], vec![2, 3, 2], &mut rng()).unwrap();
        let v = TensorTrain::<f64>::random(vec![4, 3, 3, 3], vec![1, 2, 2], &mut rng()).unwrap();
        let (dw, dv) = (w.to_dense(1000).unwrap(), v.to_dense(1000).unwrap());
        let oracle: f64 = dw.iter().zip(&dv).map(|(a, b)| a * b).sum();
        assert!((w.dot(&v).unwrap() - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
        assert!((w.dot(&w).unwrap() - dw.iter().map(|x| x * x).sum::<f64>()).abs() < 1e-11);
        let z = TensorTrain::<f64>::zeros(vec![4, 3, 3, 3], vec![1, 1, 1]).unwrap();
        assert_eq!(w.dot(&z).unwrap(), 0.0);
        assert!(w
            .dot(&TensorTrain::zeros(vec![4, 3, 3], vec![1, 1]).unwrap())
            .is_err());

        let c = w.second_moment().unwrap();
        let per = 27;
        for j in 0..4 {
            for jj in 0..4 {
                let o: f64 = (0..per).map(|a| dw[j * per + a] * dw[jj * per + a]).sum();
                assert!((c[(j, jj)] - o).abs() < 1e-11);
            }
        }
        let diag = w.second_moment_diagonal();
        for j in 0..4 {
            assert!((diag[j] - c[(j, j)]).abs() < 1e-11);
        }
        assert!(w.second_moment_with_cap(3).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let w = TensorTrain::<f64>::random(vec![3, 2, 4], vec![2, 3], &mut rng()).unwrap();
        let s = w.to_string();
        assert!(s.starts_with("VMC-TT 1\nmodes 3 2 4\nranks 2 3\n"));
        let back: TensorTrain<f64> = s.parse().unwrap();
        assert_eq!(back, w);
        assert!("VMC-TT 2\n".parse::<TensorTrain<f64>>().is_err());
        assert!(s
            .replace("ranks 2 3", "ranks 2 2")
            .parse::<TensorTrain<f64>>()
            .is_err());
        let f: TensorTrain<f32> = TensorTrain::random(vec![2, 2], vec![1], &mut rng()).unwrap();
        assert_eq!(f.to_string().parse::<TensorTrain<f32>>().unwrap(), f);
    }
}
