//! Structured triangulation of the unit square.

use crate::error::{Result, VmcError};
use crate::scalar::Real;

/// Uniform criss-cross triangulation of `(0,1)²`.
///
/// Vertex `(i, j)` sits at `(i/n, j/n)` with index `j·(n+1) + i`. Every cell is
/// split along its lower-left to upper-right diagonal, and interior degrees of
/// freedom are numbered lexicographically (x fastest).
#[derive(Debug, Clone)]
pub struct Mesh2D<T> {
    n: usize,
    vertices: Vec<[T; 2]>,
    triangles: Vec<[usize; 3]>,
    interior_dofs: Vec<usize>,
    dof_of_vertex: Vec<Option<usize>>,
}

/// Builds the `n × n` criss-cross mesh.
pub fn build_unit_square_mesh<T: Real>(n: usize) -> Result<Mesh2D<T>> {
    if n == 0 {
        return Err(VmcError::invalid(
            "mesh needs at least one subdivision per axis",
        ));
    }
    let h = T::one() / T::from_count(n);
    let stride = n + 1;
    let mut vertices = Vec::with_capacity(stride * stride);
    let mut interior_dofs = Vec::with_capacity((n - 1) * (n - 1));
    let mut dof_of_vertex = vec![None; stride * stride];
    for j in 0..=n {
        for i in 0..=n {
            let v = j * stride + i;
            vertices.push([T::from_count(i) * h, T::from_count(j) * h]);
            if i > 0 && i < n && j > 0 && j < n {
                dof_of_vertex[v] = Some(interior_dofs.len());
                interior_dofs.push(v);
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * stride + i;
            let v10 = v00 + 1;
            let v01 = v00 + stride;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Ok(Mesh2D {
        n,
        vertices,
        triangles,
        interior_dofs,
        dof_of_vertex,
    })
}

impl<T: Real> Mesh2D<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn vertices(&self) -> &[[T; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    /// Number of interior degrees of freedom, `(n-1)²`.
    pub fn num_dofs(&self) -> usize {
        self.interior_dofs.len()
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.dof_of_vertex[v].is_none()
    }

    /// Twice the signed area of triangle `t`.
    pub fn signed_area2(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        (pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1])
    }

    /// Edge midpoints of triangle `t`, ordered opposite to vertex 2, 0, 1
    /// (i.e. midpoints of edges 01, 12, 20).
    pub fn edge_midpoints(&self, t: usize) -> [[T; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        let half = T::lit(0.5);
        let mid = |p: [T; 2], q: [T; 2]| [(p[0] + q[0]) * half, (p[1] + q[1]) * half];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [mid(pa, pb), mid(pb, pc), mid(pc, pa)]
    }

    /// All quadrature points, three per triangle in triangle order.
    pub fn quadrature_points(&self) -> Vec<[T; 2]> {
        (0..self.triangles.len())
            .flat_map(|t| self.edge_midpoints(t))
            .collect()
    }

    /// Interior vertex coordinates in DOF order.
    pub fn dof_coordinates(&self) -> Vec<[T; 2]> {
        self.interior_dofs
            .iter()
            .map(|&v| self.vertices[v])
            .collect()
    }

    /// DOF index of the vertex closest to `p`, if that vertex is interior.
    pub fn nearest_dof(&self, p: [T; 2]) -> Option<usize> {
        let nf = T::from_count(self.n);
        let i = (p[0] * nf).round().to_usize()?.min(self.n);
        let j = (p[1] * nf).round().to_usize()?.min(self.n);
        self.dof_of_vertex[j * (self.n + 1) + i]
    }
}
