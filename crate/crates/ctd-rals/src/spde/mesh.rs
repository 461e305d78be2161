//! Structured triangular mesh of the unit square.

use crate::error::{CtdError, Result};

/// Right-triangle triangulation of `(0,1)^2` with element size `h = 1/n`.
/// Every grid square is split along the same lower-left to upper-right
/// diagonal. Dirichlet boundary nodes are eliminated, leaving the
/// `(n-1)^2` interior nodes in row-major order.
#[derive(Debug, Clone)]
pub struct FemMesh {
    n: usize,
    coords: Vec<(f64, f64)>,
    elements: Vec<[usize; 3]>,
    interior: Vec<usize>,
    interior_index: Vec<Option<usize>>,
}

/// Builds the structured mesh with `n` subdivisions per side.
pub fn build_mesh(n: usize) -> Result<FemMesh> {
    if n < 2 {
        return Err(CtdError::MeshTooCoarse(n));
    }
    let h = 1.0 / n as f64;
    let side = n + 1;
    let node = |i: usize, j: usize| i * side + j;
    let coords: Vec<(f64, f64)> = (0..side * side)
        .map(|id| {
            let (i, j) = (id / side, id % side);
            (j as f64 * h, i as f64 * h)
        })
        .collect();
    let mut elements = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let a = node(i, j);
            let b = node(i, j + 1);
            let c = node(i + 1, j + 1);
            let d = node(i + 1, j);
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    let mut interior = Vec::with_capacity((n - 1) * (n - 1));
    let mut interior_index = vec![None; side * side];
    for i in 1..n {
        for j in 1..n {
            interior_index[node(i, j)] = Some(interior.len());
            interior.push(node(i, j));
        }
    }
    Ok(FemMesh {
        n,
        coords,
        elements,
        interior,
        interior_index,
    })
}

impl FemMesh {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len()
    }

    /// Number of interior (non-Dirichlet) nodes.
    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn node_coord(&self, id: usize) -> (f64, f64) {
        self.coords[id]
    }

    pub fn elements(&self) -> &[[usize; 3]] {
        &self.elements
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Interior index of a node, or `None` on the Dirichlet boundary.
    pub fn interior_index(&self, id: usize) -> Option<usize> {
        self.interior_index[id]
    }

    /// Signed area of an element (positive for the counter-clockwise
    /// orientation used at construction).
    pub fn element_area(&self, element: &[usize; 3]) -> f64 {
        let (x1, y1) = self.coords[element[0]];
        let (x2, y2) = self.coords[element[1]];
        let (x3, y3) = self.coords[element[2]];
        0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1))
    }
}
