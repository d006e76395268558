//! P1 finite elements on [`Mesh2D`]: assembly, solves and the H¹₀ machinery.
//!
//! Both stiffness and load use the three-point edge-midpoint rule on every
//! triangle. Homogeneous Dirichlet conditions are imposed by dropping boundary
//! vertices from the system, so every assembled operator lives on the
//! interior degrees of freedom only.

use crate::error::{Result, VmcError};
use crate::field::{CoefficientTable, ParameterDomain, ProblemSpec};
use crate::mesh::Mesh2D;
use crate::scalar::Real;
use crate::sparse::{conjugate_gradient, BandedCholesky, SparseSpdOperator};

/// Nodal coefficients on interior DOFs; boundary values are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction<T> {
    pub coefficients: Vec<T>,
}

impl<T: Real> FemFunction<T> {
    pub fn new(coefficients: Vec<T>) -> Self {
        Self { coefficients }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            coefficients: vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Values on all mesh vertices (zeros on the boundary).
    pub fn vertex_values(&self, mesh: &Mesh2D<T>) -> Result<Vec<T>> {
        check_len(mesh.num_dofs(), self.len())?;
        let mut out = vec![T::zero(); mesh.vertices().len()];
        for (d, &v) in mesh.interior_dofs().iter().enumerate() {
            out[v] = self.coefficients[d];
        }
        Ok(out)
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(VmcError::DimensionMismatch { expected, found })
    }
}

const NO_SLOT: usize = usize::MAX;

// Basis function values at the edge midpoints (edges 01, 12, 20).
const MIDPOINT_SHAPE: [[f64; 3]; 3] = [[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]];

/// Mesh plus everything about assembly that does not depend on the
/// coefficient: CSR pattern, scatter slots and element gradient products.
#[derive(Debug, Clone)]
pub struct FemSpace<T> {
    mesh: Mesh2D<T>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    slots: Vec<[usize; 9]>,
    grad_products: Vec<[T; 9]>,
    areas: Vec<T>,
}

impl<T: Real> FemSpace<T> {
    pub fn new(mesh: Mesh2D<T>) -> Self {
        let ndof = mesh.num_dofs();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); ndof];
        for tri in mesh.triangles() {
            for &a in tri {
                for &b in tri {
                    if let (Some(i), Some(j)) = (mesh.dof_of_vertex(a), mesh.dof_of_vertex(b)) {
                        neighbours[i].push(j);
                    }
                }
            }
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            lo + col_idx[lo..hi]
                .binary_search(&j)
                .expect("pattern contains element pairs")
        };
        let ntri = mesh.triangles().len();
        let mut slots = Vec::with_capacity(ntri);
        let mut grad_products = Vec::with_capacity(ntri);
        let mut areas = Vec::with_capacity(ntri);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let p: Vec<[T; 2]> = tri.iter().map(|&v| mesh.vertices()[v]).collect();
            let area2 = mesh.signed_area2(t);
            let grads = [
                [p[1][1] - p[2][1], p[2][0] - p[1][0]],
                [p[2][1] - p[0][1], p[0][0] - p[2][0]],
                [p[0][1] - p[1][1], p[1][0] - p[0][0]],
            ];
            let area = area2 * T::lit(0.5);
            let mut gp = [T::zero(); 9];
            let mut sl = [NO_SLOT; 9];
            for a in 0..3 {
                for b in 0..3 {
                    let dot = grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1];
                    gp[3 * a + b] = dot / (area2 * area2) * area;
                    if let (Some(i), Some(j)) =
                        (mesh.dof_of_vertex(tri[a]), mesh.dof_of_vertex(tri[b]))
                    {
                        sl[3 * a + b] = slot(i, j);
                    }
                }
            }
            slots.push(sl);
            grad_products.push(gp);
            areas.push(area);
        }
        Self {
            mesh,
            row_ptr,
            col_idx,
            slots,
            grad_products,
            areas,
        }
    }

    pub fn mesh(&self) -> &Mesh2D<T> {
        &self.mesh
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    /// Stiffness operator for a coefficient given at every quadrature point
    /// (three per triangle, in [`Mesh2D::quadrature_points`] order).
    pub fn stiffness_from_quadrature_values(&self, values: &[T]) -> Result<SparseSpdOperator<T>> {
        let ntri = self.areas.len();
        check_len(3 * ntri, values.len())?;
        let mut acc = vec![T::zero(); self.col_idx.len()];
        let third = T::one() / T::lit(3.0);
        for t in 0..ntri {
            let q = &values[3 * t..3 * t + 3];
            for (k, &a) in q.iter().enumerate() {
                if !(a > T::zero()) {
                    let m = self.mesh.edge_midpoints(t)[k];
                    return Err(VmcError::EllipticityViolation {
                        x: m[0].as_f64(),
                        y: m[1].as_f64(),
                        value: a.as_f64(),
                    });
                }
            }
            let mean = (q[0] + q[1] + q[2]) * third;
            let sl = &self.slots[t];
            let gp = &self.grad_products[t];
            for e in 0..9 {
                if sl[e] != NO_SLOT {
                    acc[sl[e]] += mean * gp[e];
                }
            }
        }
        Ok(SparseSpdOperator::from_csr_parts(
            self.num_dofs(),
            self.row_ptr.clone(),
            self.col_idx.clone(),
            acc,
        ))
    }

    pub fn stiffness<F: Fn([T; 2]) -> T>(&self, coeff: F) -> Result<SparseSpdOperator<T>> {
        let values: Vec<T> = self
            .mesh
            .quadrature_points()
            .into_iter()
            .map(coeff)
            .collect();
        self.stiffness_from_quadrature_values(&values)
    }

    pub fn load<F: Fn([T; 2]) -> T>(&self, f: F) -> Vec<T> {
        let mut b = vec![T::zero(); self.num_dofs()];
        let third = T::one() / T::lit(3.0);
        for (t, tri) in self.mesh.triangles().iter().enumerate() {
            let fq = self.mesh.edge_midpoints(t).map(&f);
            for a in 0..3 {
                if let Some(i) = self.mesh.dof_of_vertex(tri[a]) {
                    let mut s = T::zero();
                    for (k, &fk) in fq.iter().enumerate() {
                        s += fk * T::lit(MIDPOINT_SHAPE[k][a]);
                    }
                    b[i] += self.areas[t] * third * s;
                }
            }
        }
        b
    }

    /// Consistent P1 mass matrix on interior DOFs (the midpoint rule is
    /// exact for products of two P1 functions).
    pub fn mass(&self) -> SparseSpdOperator<T> {
        let mut acc = vec![T::zero(); self.col_idx.len()];
        let third = T::one() / T::lit(3.0);
        for t in 0..self.areas.len() {
            let sl = &self.slots[t];
            for a in 0..3 {
                for b in 0..3 {
                    let e = 3 * a + b;
                    if sl[e] == NO_SLOT {
                        continue;
                    }
                    let mut s = 0.0;
                    for shape in &MIDPOINT_SHAPE {
                        s += shape[a] * shape[b];
                    }
                    acc[sl[e]] += self.areas[t] * third * T::lit(s);
                }
            }
        }
        SparseSpdOperator::from_csr_parts(
            self.num_dofs(),
            self.row_ptr.clone(),
            self.col_idx.clone(),
            acc,
        )
    }
}

/// `∫ a ∇φ_j·∇φ_k` over interior DOFs.
pub fn assemble_stiffness<T: Real, F: Fn([T; 2]) -> T>(
    mesh: &Mesh2D<T>,
    coeff: F,
) -> Result<SparseSpdOperator<T>> {
    FemSpace::new(mesh.clone()).stiffness(coeff)
}

/// `∫ f φ_j` over interior DOFs.
pub fn assemble_load<T: Real, F: Fn([T; 2]) -> T>(mesh: &Mesh2D<T>, f: F) -> Vec<T> {
    FemSpace::new(mesh.clone()).load(f)
}

pub fn assemble_mass<T: Real>(mesh: &Mesh2D<T>) -> SparseSpdOperator<T> {
    FemSpace::new(mesh.clone()).mass()
}

/// Direct banded Cholesky solve with a conjugate-gradient fallback.
pub fn solve_spd<T: Real>(a: &SparseSpdOperator<T>, b: &[T]) -> Result<FemFunction<T>> {
    check_len(a.dim(), b.len())?;
    match BandedCholesky::factor(a) {
        Ok(f) => Ok(FemFunction::new(f.solve(b))),
        Err(_) => {
            let tol = T::lit(1e-12).max(T::eps() * T::lit(10.0));
            conjugate_gradient(a, b, tol, 10 * a.dim().max(1)).map(FemFunction::new)
        }
    }
}

/// `(u, v)_{H¹₀} = uᵀ S₀ v` with `S₀` the unit-coefficient stiffness.
pub fn h1_inner<T: Real>(
    u: &FemFunction<T>,
    v: &FemFunction<T>,
    s0: &SparseSpdOperator<T>,
) -> Result<T> {
    s0.bilinear(&u.coefficients, &v.coefficients)
}

/// Repeated solves of one [`ProblemSpec`] at different parameter points.
///
/// Coefficient amplitudes at quadrature points, the sparsity pattern and the
/// load vector are computed once.
#[derive(Debug, Clone)]
pub struct ParametricSolver<T> {
    space: FemSpace<T>,
    table: CoefficientTable<T>,
    load: Vec<T>,
    parameter_dim: usize,
    domain: ParameterDomain,
}

impl<T: Real> ParametricSolver<T> {
    pub fn new(problem: &ProblemSpec<T>) -> Result<Self> {
        let mesh = crate::mesh::build_unit_square_mesh(problem.mesh_n)?;
        Self::with_mesh(problem, mesh)
    }

    pub fn with_mesh(problem: &ProblemSpec<T>, mesh: Mesh2D<T>) -> Result<Self> {
        let space = FemSpace::new(mesh);
        let table = problem.model.table(&space.mesh().quadrature_points());
        let load = space.load(|_| T::one());
        Ok(Self {
            space,
            table,
            load,
            parameter_dim: problem.model.parameter_dim(),
            domain: problem.domain(),
        })
    }

    pub fn space(&self) -> &FemSpace<T> {
        &self.space
    }

    pub fn mesh(&self) -> &Mesh2D<T> {
        self.space.mesh()
    }

    pub fn load(&self) -> &[T] {
        &self.load
    }

    pub fn parameter_dim(&self) -> usize {
        self.parameter_dim
    }

    pub fn domain(&self) -> ParameterDomain {
        self.domain
    }

    /// The stiffness operator `B(y)`.
    pub fn operator_at(&self, y: &[T]) -> Result<SparseSpdOperator<T>> {
        check_len(self.parameter_dim, y.len())?;
        let mut values = vec![T::zero(); self.table.num_points()];
        self.table.evaluate(y, &mut values)?;
        self.space.stiffness_from_quadrature_values(&values)
    }

    /// The FE solution `u_h(y)`.
    pub fn solve(&self, y: &[T]) -> Result<FemFunction<T>> {
        let a = self.operator_at(y)?;
        solve_spd(&a, &self.load)
    }
}

/// One-off parametric solve; prefer [`ParametricSolver`] for many points.
pub fn fem_solve_parametric<T: Real>(
    problem: &ProblemSpec<T>,
    mesh: &Mesh2D<T>,
    y: &[T],
) -> Result<FemFunction<T>> {
    ParametricSolver::with_mesh(problem, mesh.clone())?.solve(y)
}
