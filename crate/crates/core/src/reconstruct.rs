//! Empirical risk minimization over tensor trains.
//!
//! Targets are FE coefficient vectors mapped through the stiffness Cholesky
//! factor, so the Euclidean norm of a mapped vector is its `H¹₀` norm. The
//! tensor train is fitted by alternating least squares with exact local ridge
//! solves and a periodic, validation-driven rank increase.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VmcError};
use crate::fem::assemble_stiffness;
use crate::mesh::Mesh2D;
use crate::poly::{eval_basis_vector, BasisSpec};
use crate::scalar::Real;
use crate::sparse::{BandedCholesky, SparseSpdOperator};
use crate::tt::{from_matrix, to_matrix, Direction, TensorTrain};

/// Samples with their basis evaluations and (possibly orthogonalized) targets.
#[derive(Debug, Clone)]
pub struct TrainingData<T> {
    basis: BasisSpec,
    params: Vec<Vec<T>>,
    // basis_values[m] is N × q_m, row-major.
    basis_values: Vec<Vec<T>>,
    targets: Vec<Vec<T>>,
    factor: Option<BandedCholesky<T>>,
}

impl<T: Real> TrainingData<T> {
    /// Targets are used as given; see [`orthogonalize_targets`] for FE data.
    pub fn new(basis: BasisSpec, params: Vec<Vec<T>>, targets: Vec<Vec<T>>) -> Result<Self> {
        if params.is_empty() {
            return Err(VmcError::invalid("training data needs at least one sample"));
        }
        if params.len() != targets.len() {
            return Err(VmcError::DimensionMismatch {
                expected: params.len(),
                found: targets.len(),
            });
        }
        let s = targets[0].len();
        if s == 0 {
            return Err(VmcError::invalid("targets must be non-empty vectors"));
        }
        for t in &targets {
            if t.len() != s {
                return Err(VmcError::DimensionMismatch {
                    expected: s,
                    found: t.len(),
                });
            }
        }
        for y in &params {
            if y.len() != basis.modes() {
                return Err(VmcError::DimensionMismatch {
                    expected: basis.modes(),
                    found: y.len(),
                });
            }
        }
        let basis_values = basis
            .degrees
            .iter()
            .enumerate()
            .map(|(m, &q)| {
                params
                    .iter()
                    .flat_map(|y| eval_basis_vector(basis.family, q, y[m]))
                    .collect()
            })
            .collect();
        Ok(Self {
            basis,
            params,
            basis_values,
            targets,
            factor: None,
        })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn spatial_dim(&self) -> usize {
        self.targets[0].len()
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    /// Mode sizes `(S, q₁, …, q_M)` of a compatible tensor train.
    pub fn modes(&self) -> Vec<usize> {
        let mut m = vec![self.spatial_dim()];
        m.extend_from_slice(&self.basis.degrees);
        m
    }

    pub fn param(&self, i: usize) -> &[T] {
        &self.params[i]
    }

    pub fn target(&self, i: usize) -> &[T] {
        &self.targets[i]
    }

    pub fn targets(&self) -> &[Vec<T>] {
        &self.targets
    }

    /// Basis vector of stochastic mode `m` (0-based) for sample `i`.
    pub fn basis_vector(&self, i: usize, m: usize) -> &[T] {
        let q = self.basis.degrees[m];
        &self.basis_values[m][i * q..(i + 1) * q]
    }

    /// Cholesky factor `L` with `S_stiff = L Lᵀ` (so `X = Lᵀ`), when the
    /// targets were orthogonalized.
    pub fn factor(&self) -> Option<&BandedCholesky<T>> {
        self.factor.as_ref()
    }

    /// Mean squared target norm.
    pub fn mean_energy(&self) -> T {
        let total = self
            .targets
            .iter()
            .flatten()
            .fold(T::zero(), |s, &v| s + v * v);
        total / T::from_count(self.len())
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let basis_values = self
            .basis
            .degrees
            .iter()
            .enumerate()
            .map(|(m, &q)| {
                indices
                    .iter()
                    .flat_map(|&i| self.basis_values[m][i * q..(i + 1) * q].to_vec())
                    .collect()
            })
            .collect();
        Self {
            basis: self.basis.clone(),
            params: indices.iter().map(|&i| self.params[i].clone()).collect(),
            basis_values,
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            factor: self.factor.clone(),
        }
    }
}

/// Cholesky of `S_stiff`, retried once with `1e-12·trace/S` added to the diagonal.
pub fn factor_with_jitter<T: Real>(stiffness: &SparseSpdOperator<T>) -> Result<BandedCholesky<T>> {
    BandedCholesky::factor(stiffness).or_else(|_| {
        let shift = T::lit(1e-12) * stiffness.trace() / T::from_count(stiffness.dim().max(1));
        BandedCholesky::factor_shifted(stiffness, shift).map_err(|p| VmcError::Conditioning {
            row: p.row,
            pivot: p.pivot,
        })
    })
}

/// Maps FE solutions `ū` to `u̲ = X ū` with `S_stiff = XᵀX`, so that
/// `u̲ᵀv̲ = ūᵀ S_stiff v̄`.
pub fn orthogonalize_targets<T: Real>(
    basis: BasisSpec,
    params: Vec<Vec<T>>,
    solutions: &[Vec<T>],
    stiffness: &SparseSpdOperator<T>,
) -> Result<TrainingData<T>> {
    let factor = factor_with_jitter(stiffness)?;
    let mut targets = Vec::with_capacity(solutions.len());
    for u in solutions {
        if u.len() != stiffness.dim() {
            return Err(VmcError::DimensionMismatch {
                expected: stiffness.dim(),
                found: u.len(),
            });
        }
        targets.push(factor.mul_upper(u));
    }
    let mut data = TrainingData::new(basis, params, targets)?;
    data.factor = Some(factor);
    Ok(data)
}

/// Maps a tensor train fitted in orthogonalized coordinates back to nodal
/// coefficients (`U₀ ← X⁻¹ U₀`).
pub fn back_transform<T: Real>(
    w: &TensorTrain<T>,
    factor: &BandedCholesky<T>,
) -> Result<TensorTrain<T>> {
    let s = w.spatial_dim();
    if factor.dim() != s {
        return Err(VmcError::DimensionMismatch {
            expected: s,
            found: factor.dim(),
        });
    }
    let r0 = w.ranks()[0];
    let u0 = w.core(0);
    let mut out = u0.to_vec();
    for c in 0..r0 {
        let mut col: Vec<T> = (0..s).map(|j| u0[j * r0 + c]).collect();
        factor.solve_upper_in_place(&mut col);
        for (j, v) in col.into_iter().enumerate() {
            out[j * r0 + c] = v;
        }
    }
    let (modes, bonds, mut cores) = w.clone().into_parts();
    cores[0] = out;
    Ok(TensorTrain::from_parts(modes, bonds, cores))
}

fn check_modes<T: Real>(w: &TensorTrain<T>, data: &TrainingData<T>) -> Result<()> {
    let want = data.modes();
    if w.modes() != want.as_slice() {
        return Err(VmcError::invalid(format!(
            "tensor modes {:?} do not match data modes {want:?}",
            w.modes()
        )));
    }
    Ok(())
}

/// Right interfaces: `out[i]` = cores `k..=M` contracted with sample `i`'s
/// basis vectors, starting from `right` (N × bond[k+1]).
fn contract_right<T: Real>(
    core: &[T],
    shape: (usize, usize, usize),
    data: &TrainingData<T>,
    k: usize,
    right: &[T],
) -> Vec<T> {
    let (rl, q, rr) = shape;
    let n = data.len();
    let mut out = vec![T::zero(); n * rl];
    let mut tmp = vec![T::zero(); q];
    for i in 0..n {
        let v = data.basis_vector(i, k - 1);
        let r = &right[i * rr..(i + 1) * rr];
        let o = &mut out[i * rl..(i + 1) * rl];
        for (a, oa) in o.iter_mut().enumerate() {
            for (c, tc) in tmp.iter_mut().enumerate() {
                let base = (a * q + c) * rr;
                *tc = core[base..base + rr]
                    .iter()
                    .zip(r)
                    .fold(T::zero(), |s, (&u, &x)| s + u * x);
            }
            *oa = tmp.iter().zip(v).fold(T::zero(), |s, (&t, &x)| s + t * x);
        }
    }
    out
}

/// Full right-interface stack: `stack[k]` is N × bond[k+1] for `k = 0..=M`.
fn right_stack<T: Real>(w: &TensorTrain<T>, data: &TrainingData<T>) -> Vec<Vec<T>> {
    let m = w.order();
    let mut stack = vec![Vec::new(); m + 1];
    stack[m] = vec![T::one(); data.len()];
    for k in (1..=m).rev() {
        stack[k - 1] = contract_right(w.core(k), w.core_shape(k), data, k, &stack[k]);
    }
    stack
}

fn targets_matrix<T: Real>(data: &TrainingData<T>) -> DMatrix<T> {
    let (n, s) = (data.len(), data.spatial_dim());
    DMatrix::from_fn(n, s, |i, j| data.targets[i][j])
}

/// Surrogate values at every sample, as an N × S matrix.
fn batched_eval<T: Real>(w: &TensorTrain<T>, data: &TrainingData<T>) -> DMatrix<T> {
    let stack = right_stack(w, data);
    let r0 = w.ranks()[0];
    let g = to_matrix(data.len(), r0, &stack[0]);
    let u0 = to_matrix(w.spatial_dim(), r0, w.core(0));
    g * u0.transpose()
}

/// `(1/N) Σ_i ‖Φ_W(y^i) − u̲^i‖₂²`.
pub fn empirical_risk<T: Real>(w: &TensorTrain<T>, data: &TrainingData<T>) -> Result<T> {
    check_modes(w, data)?;
    let phi = batched_eval(w, data);
    let mut total = T::zero();
    for i in 0..data.len() {
        let mut s = T::zero();
        for (j, &t) in data.targets[i].iter().enumerate() {
            let d = phi[(i, j)] - t;
            s += d * d;
        }
        total += s;
    }
    Ok(total / T::from_count(data.len()))
}

/// Jacobi-preconditioned CG started from `x`.
fn pcg<T: Real, F: FnMut(&[T], &mut [T])>(
    mut apply: F,
    b: &[T],
    diag: &[T],
    x: &mut [T],
    rel_tol: T,
    max_iter: usize,
) {
    let n = b.len();
    let dot = |a: &[T], c: &[T]| a.iter().zip(c).fold(T::zero(), |s, (&u, &v)| s + u * v);
    let mut ax = vec![T::zero(); n];
    apply(x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return;
    }
    let mut z: Vec<T> = r.iter().zip(diag).map(|(&ri, &d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![T::zero(); n];
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= rel_tol * bnorm {
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
}

fn ridge_shift<T: Real>(lambda: T, trace: T, dim: usize) -> T {
    let mu = lambda * trace / T::from_count(dim.max(1));
    if mu > T::zero() {
        mu
    } else {
        lambda.max(T::lit(1e-30))
    }
}

/// Solves `(A + μI) X = B` for symmetric positive semidefinite `A`, raising
/// the shift if the factorization fails.
fn ridge_solve<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, mu: T) -> Result<DMatrix<T>> {
    let mut shift = mu;
    for _ in 0..4 {
        let mut m = a.clone();
        for d in 0..m.nrows() {
            m[(d, d)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(b);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        shift *= T::lit(1e4);
    }
    Err(VmcError::NumericalBreakdown(format!(
        "local normal matrix of size {} is singular even with ridge",
        a.nrows()
    )))
}

/// Per-fit state that does not change between sweeps.
struct Workspace<T: Real> {
    targets: DMatrix<T>,
    lambda: T,
    dense_limit: usize,
    cg_iterations: usize,
}

/// Default size above which local problems use matrix-free CG.
pub const DEFAULT_DENSE_LOCAL_LIMIT: usize = 1024;
/// Default iteration cap of the CG local solver.
pub const DEFAULT_CG_ITERATIONS: usize = 100;

/// One ALS sweep: core 0, then cores `1..=M` left to right, then `M-1..=1`
/// right to left. Each local update is the exact ridge-regularized least
/// squares solution, kept only if it does not increase the training misfit.
pub fn als_sweep<T: Real>(
    w: &TensorTrain<T>,
    data: &TrainingData<T>,
    lambda: T,
) -> Result<TensorTrain<T>> {
    check_modes(w, data)?;
    let ws = Workspace {
        targets: targets_matrix(data),
        lambda,
        dense_limit: DEFAULT_DENSE_LOCAL_LIMIT,
        cg_iterations: DEFAULT_CG_ITERATIONS,
    };
    sweep(w, data, &ws)
}

fn sweep<T: Real>(
    w: &TensorTrain<T>,
    data: &TrainingData<T>,
    ws: &Workspace<T>,
) -> Result<TensorTrain<T>> {
    let mut w = w.canonicalize(Direction::Right);
    let m = w.order();
    let n = data.len();
    let s = w.spatial_dim();
    let mut right = right_stack(&w, data);

    // Core 0: U₀ = (Tᵀ B)(BᵀB + μI)⁻¹ with B the right interfaces.
    {
        let r0 = w.ranks()[0];
        let b = to_matrix(n, r0, &right[0]);
        let gram = b.transpose() * &b;
        let cross = ws.targets.transpose() * &b; // S × r0
        let mu = ridge_shift(ws.lambda, gram.trace(), r0);
        let new_t = ridge_solve(&gram, &cross.transpose(), mu)?; // r0 × S
        let old = to_matrix(s, r0, w.core(0));
        let misfit = |u: &DMatrix<T>| {
            (u * &gram).component_mul(u).sum() - (u.component_mul(&cross)).sum() * T::lit(2.0)
        };
        let new = new_t.transpose();
        if misfit(&new) <= misfit(&old) {
            set_core(&mut w, 0, from_matrix(&new));
        }
    }
    w.left_orthogonalize_core(0);
    let r0 = w.ranks()[0];
    let q0 = to_matrix(s, r0, w.core(0));
    let proj = &ws.targets * q0; // N × r0

    // left[k]: N × (r0 · bond[k]) matrices L_i, None for the identity at k = 1.
    let mut left: Vec<Option<Vec<T>>> = vec![None; m + 1];
    for k in 1..=m {
        solve_core(&mut w, k, left[k].as_deref(), &right[k], &proj, data, ws)?;
        if k < m {
            w.left_orthogonalize_core(k);
            left[k + 1] = Some(extend_left(&w, k, left[k].as_deref(), r0, data));
        }
    }
    for k in (1..=m).rev() {
        w.right_orthogonalize_core(k);
        right[k - 1] = contract_right(w.core(k), w.core_shape(k), data, k, &right[k]);
        if k >= 2 {
            solve_core(
                &mut w,
                k - 1,
                left[k - 1].as_deref(),
                &right[k - 1],
                &proj,
                data,
                ws,
            )?;
        }
    }
    Ok(w)
}

fn set_core<T: Real>(w: &mut TensorTrain<T>, k: usize, data: Vec<T>) {
    let core = w.core_mut(k);
    debug_assert_eq!(core.len(), data.len());
    *core = data;
}

/// `L_i ← L_i · U_k(v_i)` for every sample.
fn extend_left<T: Real>(
    w: &TensorTrain<T>,
    k: usize,
    left: Option<&[T]>,
    r0: usize,
    data: &TrainingData<T>,
) -> Vec<T> {
    let (rl, q, rr) = w.core_shape(k);
    let core = w.core(k);
    let n = data.len();
    let mut out = vec![T::zero(); n * r0 * rr];
    let mut uv = vec![T::zero(); rl * rr];
    for i in 0..n {
        let v = data.basis_vector(i, k - 1);
        uv.iter_mut().for_each(|x| *x = T::zero());
        for a in 0..rl {
            for (c, &vc) in v.iter().enumerate() {
                let base = (a * q + c) * rr;
                for b in 0..rr {
                    uv[a * rr + b] += vc * core[base + b];
                }
            }
        }
        let o = &mut out[i * r0 * rr..(i + 1) * r0 * rr];
        match left {
            None => o.copy_from_slice(&uv),
            Some(l) => {
                let li = &l[i * r0 * rl..(i + 1) * r0 * rl];
                for s in 0..r0 {
                    for a in 0..rl {
                        let x = li[s * rl + a];
                        for b in 0..rr {
                            o[s * rr + b] += x * uv[a * rr + b];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Local least-squares update of core `k ≥ 1`:
/// minimize `Σ_i ‖L_i U_k(v_i) R_i − p_i‖²` over the entries of `U_k`.
fn solve_core<T: Real>(
    w: &mut TensorTrain<T>,
    k: usize,
    left: Option<&[T]>,
    right: &[T],
    proj: &DMatrix<T>,
    data: &TrainingData<T>,
    ws: &Workspace<T>,
) -> Result<()> {
    let (rl, q, rr) = w.core_shape(k);
    let n = data.len();
    let r0 = proj.ncols();
    let width = q * rr;
    let dim = rl * width;
    // z_i = v_i ⊗ R_i
    let z = DMatrix::from_fn(n, width, |i, j| {
        data.basis_vector(i, k - 1)[j / rr] * right[i * rr + j % rr]
    });
    // G_i = L_iᵀ L_i (rl × rl) and h_i = L_iᵀ p_i, or identity / p_i when L_i = I.
    let (grams, h): (Option<Vec<T>>, DMatrix<T>) = match left {
        None => (None, proj.clone()),
        Some(l) => {
            let mut g = vec![T::zero(); n * rl * rl];
            let mut h = DMatrix::zeros(n, rl);
            for i in 0..n {
                let li = to_matrix(r0, rl, &l[i * r0 * rl..(i + 1) * r0 * rl]);
                let gi = li.transpose() * &li;
                let hi = li.transpose() * proj.row(i).transpose();
                g[i * rl * rl..(i + 1) * rl * rl].copy_from_slice(&from_matrix(&gi));
                h.set_row(i, &hi.transpose());
            }
            (Some(g), h)
        }
    };
    // rhs[a·width + j] = Σ_i h_i[a] z_i[j]
    let zth = z.transpose() * &h; // width × rl
    let rhs: Vec<T> = (0..dim).map(|d| zth[(d % width, d / width)]).collect();
    let old = w.core(k).to_vec();

    let new = if dim <= ws.dense_limit {
        let zt = z.transpose();
        let mut a = DMatrix::<T>::zeros(dim, dim);
        match &grams {
            None => {
                let blk = &zt * &z;
                for a1 in 0..rl {
                    a.view_mut((a1 * width, a1 * width), (width, width))
                        .copy_from(&blk);
                }
            }
            Some(g) => {
                for a1 in 0..rl {
                    for a2 in a1..rl {
                        let mut zs = z.clone();
                        for i in 0..n {
                            let gi = g[i * rl * rl + a1 * rl + a2];
                            zs.row_mut(i).scale_mut(gi);
                        }
                        let blk = &zt * &zs;
                        if a1 != a2 {
                            a.view_mut((a2 * width, a1 * width), (width, width))
                                .copy_from(&blk.transpose());
                        }
                        a.view_mut((a1 * width, a2 * width), (width, width))
                            .copy_from(&blk);
                    }
                }
            }
        }
        let mu = ridge_shift(ws.lambda, a.trace(), dim);
        let b = DMatrix::from_column_slice(dim, 1, &rhs);
        let x = ridge_solve(&a, &b, mu)?;
        let quad = |v: &[T]| {
            let v = DVector::from_column_slice(v);
            (v.transpose() * &a * &v)[(0, 0)] - v.dot(&b.column(0)) * T::lit(2.0)
        };
        let x: Vec<T> = x.column(0).iter().copied().collect();
        if quad(&x) <= quad(&old) {
            x
        } else {
            old
        }
    } else {
        // A x = vec(Σ_i (G_i X z_i) z_iᵀ) with X the rl × width reshape of x.
        let apply_plain = |x: &[T], out: &mut [T]| {
            let xm = DMatrix::from_row_slice(rl, width, x);
            let mut y = &z * xm.transpose(); // N × rl
            if let Some(g) = &grams {
                let mut gy = vec![T::zero(); rl];
                for i in 0..n {
                    let gi = &g[i * rl * rl..(i + 1) * rl * rl];
                    for (a, ga) in gy.iter_mut().enumerate() {
                        *ga = (0..rl).fold(T::zero(), |s, c| s + gi[a * rl + c] * y[(i, c)]);
                    }
                    for (a, &ga) in gy.iter().enumerate() {
                        y[(i, a)] = ga;
                    }
                }
            }
            let om = y.transpose() * &z; // rl × width
            for a in 0..rl {
                for j in 0..width {
                    out[a * width + j] = om[(a, j)];
                }
            }
        };
        let mut diag = vec![T::zero(); dim];
        for i in 0..n {
            for a in 0..rl {
                let gaa = grams
                    .as_ref()
                    .map_or(T::one(), |g| g[i * rl * rl + a * rl + a]);
                for j in 0..width {
                    diag[a * width + j] += gaa * z[(i, j)] * z[(i, j)];
                }
            }
        }
        let trace = diag.iter().fold(T::zero(), |s, &d| s + d);
        let mu = ridge_shift(ws.lambda, trace, dim);
        let pre: Vec<T> = diag.iter().map(|&d| d + mu).collect();
        let mut x = old.clone();
        let tol = T::lit(1e-12).max(T::eps() * T::lit(100.0));
        pcg(
            |v, out| {
                apply_plain(v, out);
                for (o, &vi) in out.iter_mut().zip(v) {
                    *o += mu * vi;
                }
            },
            &rhs,
            &pre,
            &mut x,
            tol,
            dim.min(ws.cg_iterations),
        );
        let quad = |v: &[T]| {
            let mut av = vec![T::zero(); dim];
            apply_plain(v, &mut av);
            v.iter().zip(&av).fold(T::zero(), |s, (&a, &b)| s + a * b)
                - v.iter().zip(&rhs).fold(T::zero(), |s, (&a, &b)| s + a * b) * T::lit(2.0)
        };
        if x.iter().all(|v| v.is_finite()) && quad(&x) <= quad(&old) {
            x
        } else {
            old
        }
    };
    set_core(w, k, new);
    Ok(())
}

/// Settings for [`fit`] and [`reconstruct`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlsConfig {
    pub max_rank: usize,
    /// Sweeps between rank increases.
    pub rank_cooldown: usize,
    pub max_sweeps: usize,
    /// Relative training-risk improvement below which a run counts as stagnant.
    pub stagnation_tol: f64,
    pub stagnation_window: usize,
    /// Ridge parameter, relative to the trace of each local normal matrix.
    pub ridge: f64,
    pub validation_fraction: f64,
    /// Relative validation improvement per cooldown window below which ranks grow.
    pub adaptation_threshold: f64,
    /// Cooldown windows without validation progress before the fit stops.
    pub patience: usize,
    /// Noise on padded core entries, relative to the core norm.
    pub noise_scale: f64,
    /// Local problems larger than this use matrix-free CG.
    pub dense_local_limit: usize,
    /// Iteration cap of the warm-started CG local solver.
    pub cg_iterations: usize,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            max_rank: 40,
            rank_cooldown: 10,
            max_sweeps: 300,
            stagnation_tol: 1e-8,
            stagnation_window: 10,
            ridge: 1e-12,
            validation_fraction: 0.2,
            adaptation_threshold: 0.01,
            patience: 3,
            noise_scale: 1e-6,
            dense_local_limit: DEFAULT_DENSE_LOCAL_LIMIT,
            cg_iterations: DEFAULT_CG_ITERATIONS,
            seed: 0,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(VmcError::invalid(m.to_string()));
        if self.max_rank == 0 {
            return bad("max_rank must be at least 1");
        }
        if self.rank_cooldown == 0
            || self.max_sweeps == 0
            || self.patience == 0
            || self.stagnation_window == 0
            || self.cg_iterations == 0
        {
            return bad("cooldown, sweep limit, patience, stagnation window and CG iterations must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 1)");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad("ridge parameter must be finite and non-negative");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise scale must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Training risk reached the floating-point floor.
    RiskFloor,
    /// Ranks at their caps and training risk no longer improving.
    Stagnation,
    /// Validation risk stopped improving for `patience` windows.
    Patience,
    MaxSweeps,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub orthogonalize_secs: f64,
    pub sweep_secs: f64,
    pub evaluation_secs: f64,
    pub adaptation_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Ranks of the returned tensor train.
    pub ranks: Vec<usize>,
    pub sweeps: usize,
    /// Training risk after each sweep.
    pub training_risk: Vec<f64>,
    /// Validation risk after each sweep (the training risk when no samples are held back).
    pub validation_risk: Vec<f64>,
    /// Sweeps (1-based) after which ranks were increased.
    pub adaptations: Vec<usize>,
    /// Sweep (1-based) whose iterate was returned.
    pub best_sweep: usize,
    pub stop_reason: StopReason,
    pub timings: PhaseTimes,
}

impl FitReport {
    /// Sweeps (1-based) whose training risk exceeds the previous one by more
    /// than `slack`, ignoring the sweep right after a rank increase.
    pub fn monotonicity_violations(&self, slack: f64) -> Vec<usize> {
        (1..self.training_risk.len())
            .filter(|&s| !self.adaptations.contains(&s))
            .filter(|&s| self.training_risk[s] > self.training_risk[s - 1] + slack)
            .map(|s| s + 1)
            .collect()
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.monotonicity_violations(slack).is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Per-bond rank caps `min(max_rank, ∏ left modes, ∏ right modes)`.
pub fn rank_caps(modes: &[usize], max_rank: usize) -> Vec<usize> {
    (0..modes.len() - 1)
        .map(|k| {
            let left = modes[..=k].iter().fold(1usize, |p, &m| p.saturating_mul(m));
            let right = modes[k + 1..]
                .iter()
                .fold(1usize, |p, &m| p.saturating_mul(m));
            max_rank.min(left).min(right)
        })
        .collect()
}

/// True when the last value improved on the one `cooldown` entries earlier
/// by less than `threshold` (relative).
pub fn needs_adaptation(history: &[f64], cooldown: usize, threshold: f64) -> bool {
    let Some(&last) = history.last() else {
        return false;
    };
    let old = history[history.len().saturating_sub(cooldown + 1)];
    if !(old > 0.0) {
        return false;
    }
    (old - last) / old < threshold
}

/// Increments every rank below its cap, zero-padding cores and filling the
/// new entries with Gaussian noise of size `noise_scale·‖core‖`.
pub fn increase_ranks<T: Real, R: Rng + ?Sized>(
    w: &TensorTrain<T>,
    max_rank: usize,
    noise_scale: f64,
    rng: &mut R,
) -> TensorTrain<T> {
    let caps = rank_caps(w.modes(), max_rank);
    let ranks: Vec<usize> = w
        .ranks()
        .iter()
        .zip(&caps)
        .map(|(&r, &c)| if r < c { r + 1 } else { r })
        .collect();
    if ranks == w.ranks() {
        return w.clone();
    }
    let norms: Vec<f64> = (0..w.num_cores())
        .map(|k| {
            w.core(k)
                .iter()
                .map(|v| v.as_f64().powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    TensorTrain::from_fn(w.modes().to_vec(), ranks, |k, a, i, b| {
        let (rl, n, rr) = w.core_shape(k);
        if a < rl && b < rr {
            w.core(k)[(a * n + i) * rr + b]
        } else {
            let scale = noise_scale * if norms[k] > 0.0 { norms[k] } else { 1.0 };
            T::lit(scale * rng.sample::<f64, _>(StandardNormal))
        }
    })
    .expect("padded shapes are valid")
}

/// Rank increase if the validation history stagnated over the last cooldown window.
pub fn adapt_ranks<T: Real, R: Rng + ?Sized>(
    w: &TensorTrain<T>,
    validation_history: &[f64],
    config: &AlsConfig,
    rng: &mut R,
) -> TensorTrain<T> {
    if needs_adaptation(
        validation_history,
        config.rank_cooldown,
        config.adaptation_threshold,
    ) {
        increase_ranks(w, config.max_rank, config.noise_scale, rng)
    } else {
        w.clone()
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Weight of the Gaussian perturbation on the parametric cores of the start.
pub const INIT_PERTURBATION: f64 = 0.1;

/// Rank-1 start: a unit-norm Gaussian spatial core and parametric cores
/// `e₀ + 0.1·g` (normalized), i.e. a perturbed constant polynomial.
///
/// Purely Gaussian parametric cores are products of sign-changing
/// polynomials; with few samples ALS overfits them and stalls far from the
/// mean.
pub fn random_rank_one<T: Real>(modes: Vec<usize>, seed: u64) -> TensorTrain<T> {
    let mut rng = stream_rng(seed, 2);
    let ranks = vec![1; modes.len() - 1];
    let w = TensorTrain::<T>::random(modes, ranks, &mut rng).expect("rank-1 shape is valid");
    let cores = (0..w.num_cores())
        .map(|k| {
            let mut c = w.core(k).to_vec();
            if k > 0 {
                let g = c.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
                for v in c.iter_mut() {
                    *v *= T::lit(INIT_PERTURBATION) / g;
                }
                c[0] += T::one();
            }
            let norm = c.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
            c.iter().map(|&v| v / norm).collect()
        })
        .collect();
    TensorTrain::new(w.modes().to_vec(), w.ranks().to_vec(), cores).expect("same shape")
}

/// Splits `0..n` into (training, validation) index sets, both sorted.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut n_val = (fraction * n as f64).floor() as usize;
    if n_val >= n {
        n_val = n.saturating_sub(1);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, 1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Fits a tensor train to `data` starting from a random rank-1 train.
pub fn fit<T: Real>(
    data: &TrainingData<T>,
    config: &AlsConfig,
) -> Result<(TensorTrain<T>, FitReport)> {
    let init = random_rank_one(data.modes(), config.seed);
    fit_from(init, data, config)
}

/// Fits starting from `init`; returns the iterate with the smallest
/// validation risk (earliest on ties).
pub fn fit_from<T: Real>(
    init: TensorTrain<T>,
    data: &TrainingData<T>,
    config: &AlsConfig,
) -> Result<(TensorTrain<T>, FitReport)> {
    config.validate()?;
    check_modes(&init, data)?;
    let (train_idx, val_idx) =
        validation_split(data.len(), config.validation_fraction, config.seed);
    let train = data.subset(&train_idx);
    let val = (!val_idx.is_empty()).then(|| data.subset(&val_idx));
    let ws = Workspace {
        targets: targets_matrix(&train),
        lambda: T::lit(config.ridge),
        dense_limit: config.dense_local_limit,
        cg_iterations: config.cg_iterations,
    };
    let floor = (T::eps() * T::lit(100.0)).powi(2) * train.mean_energy();
    let caps = rank_caps(&data.modes(), config.max_rank);
    let mut noise_rng = stream_rng(config.seed, 3);

    let mut timings = PhaseTimes::default();
    let mut w = init;
    let mut best = w.clone();
    let mut best_val = f64::INFINITY;
    let mut best_sweep = 0;
    let mut training = Vec::new();
    let mut validation = Vec::new();
    let mut adaptations = Vec::new();
    let mut since_adapt = 0;
    let mut last_progress = (0usize, f64::INFINITY);
    let mut stop = StopReason::MaxSweeps;

    for sweep_no in 1..=config.max_sweeps {
        let t = Instant::now();
        w = sweep(&w, &train, &ws)?;
        timings.sweep_secs += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let tr = empirical_risk(&w, &train)?;
        let va = match &val {
            Some(v) => empirical_risk(&w, v)?.as_f64(),
            None => tr.as_f64(),
        };
        timings.evaluation_secs += t.elapsed().as_secs_f64();
        if !tr.is_finite() || !va.is_finite() {
            return Err(VmcError::NumericalBreakdown(format!(
                "non-finite risk after sweep {sweep_no}"
            )));
        }
        training.push(tr.as_f64());
        validation.push(va);
        if va < best_val {
            best_val = va;
            best = w.clone();
            best_sweep = sweep_no;
        }
        if va < last_progress.1 * (1.0 - config.adaptation_threshold) {
            last_progress = (sweep_no, va);
        }
        if tr <= floor {
            stop = StopReason::RiskFloor;
            break;
        }

        since_adapt += 1;
        let at_cap = w.ranks().iter().zip(&caps).all(|(r, c)| r >= c);
        if since_adapt >= config.rank_cooldown
            && !at_cap
            && needs_adaptation(
                &validation,
                config.rank_cooldown,
                config.adaptation_threshold,
            )
        {
            let t = Instant::now();
            w = increase_ranks(&w, config.max_rank, config.noise_scale, &mut noise_rng);
            timings.adaptation_secs += t.elapsed().as_secs_f64();
            adaptations.push(sweep_no);
            since_adapt = 0;
        } else if at_cap && training.len() > config.stagnation_window {
            let old = training[training.len() - 1 - config.stagnation_window];
            let new = tr.as_f64();
            if old - new <= config.stagnation_tol * old {
                stop = StopReason::Stagnation;
                break;
            }
        }
        if sweep_no - last_progress.0 >= config.patience * config.rank_cooldown {
            stop = StopReason::Patience;
            break;
        }
    }
    let report = FitReport {
        ranks: best.ranks().to_vec(),
        sweeps: training.len(),
        training_risk: training,
        validation_risk: validation,
        adaptations,
        best_sweep,
        stop_reason: stop,
        timings,
    };
    Ok((best, report))
}

/// Orthogonalizes the FE solutions with the unit-coefficient stiffness of
/// `mesh`, fits, and maps the result back so the returned train yields nodal
/// coefficients.
pub fn reconstruct<T: Real>(
    params: &[Vec<T>],
    solutions: &[Vec<T>],
    mesh: &Mesh2D<T>,
    basis: &BasisSpec,
    config: &AlsConfig,
) -> Result<(TensorTrain<T>, FitReport)> {
    if params.is_empty() {
        return Err(VmcError::invalid(
            "reconstruction needs at least one sample",
        ));
    }
    let s0 = assemble_stiffness(mesh, |_| T::one())?;
    reconstruct_with_stiffness(params, solutions, &s0, basis, config)
}

pub fn reconstruct_with_stiffness<T: Real>(
    params: &[Vec<T>],
    solutions: &[Vec<T>],
    stiffness: &SparseSpdOperator<T>,
    basis: &BasisSpec,
    config: &AlsConfig,
) -> Result<(TensorTrain<T>, FitReport)> {
    if params.is_empty() {
        return Err(VmcError::invalid(
            "reconstruction needs at least one sample",
        ));
    }
    config.validate()?;
    let t = Instant::now();
    let data = orthogonalize_targets(basis.clone(), params.to_vec(), solutions, stiffness)?;
    let orth = t.elapsed().as_secs_f64();
    let (w, mut report) = fit(&data, config)?;
    report.timings.orthogonalize_secs = orth;
    let w = back_transform(
        &w,
        data.factor()
            .expect("orthogonalized data carries its factor"),
    )?;
    Ok((w, report))
}
