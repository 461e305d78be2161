//! Karhunen-Loeve eigenpairs of the exponential covariance kernel on the
//! unit square.
//!
//! The l1-norm exponential kernel `exp(-||x1 - x2||_1 / l_c)` separates into
//! a product of 1D exponential kernels on `(0, 1)`, so the 2D eigenpairs are
//! products of 1D eigenpairs. The 1D problems are solved numerically by a
//! Nystrom discretization on a Gauss-Legendre grid, which avoids root-finding
//! on the transcendental characteristic equation.

use nalgebra::DMatrix;

use super::mesh::FemMesh;
use super::quadrature::gauss_legendre_unit;
use crate::error::{CtdError, Result};

/// Grid size of the 1D Nystrom discretization.
const NYSTROM_GRID: usize = 512;

/// Number of 1D modes retained before forming 2D products.
const POOL_1D: usize = 64;

/// Truncated KL expansion: the `d` largest 2D eigenvalues with the nodal
/// values of their `L2(D)`-orthonormal eigenfunctions.
#[derive(Debug, Clone)]
pub struct KlExpansion {
    correlation_length: f64,
    eigenvalues: Vec<f64>,
    /// `num_nodes x d`: eigenfunction `k` evaluated at every mesh node.
    node_values: DMatrix<f64>,
    ortho_defect: f64,
}

impl KlExpansion {
    pub fn correlation_length(&self) -> f64 {
        self.correlation_length
    }

    /// Eigenvalues, sorted descending, all positive.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Nodal values of eigenfunction `k` over all mesh nodes.
    pub fn eigenfunction(&self, k: usize) -> nalgebra::DVectorView<'_, f64> {
        self.node_values.column(k)
    }

    /// Largest deviation of the discrete eigenfunction inner products from
    /// the identity on the construction grid.
    pub fn orthonormality_defect(&self) -> f64 {
        self.ortho_defect
    }
}

/// 1D Nystrom eigen-decomposition of `exp(-|s-t| / l_c)` on `(0, 1)`.
struct Nystrom1d {
    grid: Vec<f64>,
    weights: Vec<f64>,
    /// Descending positive eigenvalues.
    lambdas: Vec<f64>,
    /// Columns: eigenvectors of the symmetrized kernel matrix.
    vectors: DMatrix<f64>,
    correlation_length: f64,
}

impl Nystrom1d {
    fn new(correlation_length: f64, grid_size: usize, modes: usize) -> Self {
        let (grid, weights) = gauss_legendre_unit(grid_size);
        let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
        let mut sym = DMatrix::zeros(grid_size, grid_size);
        for i in 0..grid_size {
            for j in 0..grid_size {
                let k = (-(grid[i] - grid[j]).abs() / correlation_length).exp();
                sym[(i, j)] = sqrt_w[i] * k * sqrt_w[j];
            }
        }
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..grid_size).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let kept: Vec<usize> = order
            .into_iter()
            .take(modes)
            .filter(|&i| eig.eigenvalues[i] > 0.0)
            .collect();
        let lambdas = kept.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_columns(
            &kept
                .iter()
                .map(|&i| eig.eigenvectors.column(i).into_owned())
                .collect::<Vec<_>>(),
        );
        Nystrom1d {
            grid,
            weights,
            lambdas,
            vectors,
            correlation_length,
        }
    }

    /// Nystrom interpolation of eigenfunction `k` at an arbitrary point.
    fn eval(&self, k: usize, x: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.grid.len() {
            let kernel = (-(x - self.grid[j]).abs() / self.correlation_length).exp();
            acc += self.weights[j].sqrt() * kernel * self.vectors[(j, k)];
        }
        acc / self.lambdas[k]
    }
}

/// 1D Nystrom eigenvalues of the exponential kernel, for trace checks.
pub fn kl_eigenvalues_1d(correlation_length: f64, count: usize) -> Vec<f64> {
    Nystrom1d::new(correlation_length, NYSTROM_GRID, count).lambdas
}

/// The `d` largest 2D eigenpairs, formed as sorted products of 1D pairs and
/// evaluated at the mesh nodes.
pub fn kl_eigenpairs(mesh: &FemMesh, correlation_length: f64, d: usize) -> Result<KlExpansion> {
    if d < 1 {
        return Err(CtdError::InvalidConfig("KL expansion needs d >= 1".into()));
    }
    let pool_1d = POOL_1D.min(NYSTROM_GRID);
    let nystrom = Nystrom1d::new(correlation_length, NYSTROM_GRID, pool_1d);
    let got = nystrom.lambdas.len();
    let available = got * got;
    if d > available {
        return Err(CtdError::KlPoolExhausted {
            requested: d,
            available,
        });
    }
    let mut products: Vec<(f64, usize, usize)> = (0..got)
        .flat_map(|i| {
            let li = nystrom.lambdas[i];
            (0..got).map(move |j| (li, i, j))
        })
        .map(|(li, i, j)| (li * nystrom.lambdas[j], i, j))
        .collect();
    products.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    products.truncate(d);

    // Evaluate the needed 1D eigenfunctions at the distinct grid coordinates
    // of the mesh (x and y share the same coordinate set).
    let side = mesh.n() + 1;
    let h = mesh.h();
    let mut used: Vec<usize> = products
        .iter()
        .flat_map(|&(_, i, j)| [i, j])
        .collect();
    used.sort_unstable();
    used.dedup();
    let mut values_1d = vec![vec![0.0; side]; got];
    for &k in &used {
        for (g, value) in values_1d[k].iter_mut().enumerate() {
            *value = nystrom.eval(k, g as f64 * h);
        }
    }

    let mut node_values = DMatrix::zeros(mesh.num_nodes(), d);
    for (col, &(_, i, j)) in products.iter().enumerate() {
        for node in 0..mesh.num_nodes() {
            let (x, y) = mesh.node_coord(node);
            let gx = (x / h).round() as usize;
            let gy = (y / h).round() as usize;
            node_values[(node, col)] = values_1d[i][gx] * values_1d[j][gy];
        }
    }

    // Orthonormality on the construction grid factorizes into 1D Gram
    // entries of the Nystrom eigenvectors.
    let gram = nystrom.vectors.transpose() * &nystrom.vectors;
    let mut defect: f64 = 0.0;
    for (a, &(_, i1, j1)) in products.iter().enumerate() {
        for (b, &(_, i2, j2)) in products.iter().enumerate() {
            let value = gram[(i1, i2)] * gram[(j1, j2)];
            let target = if a == b { 1.0 } else { 0.0 };
            defect = defect.max((value - target).abs());
        }
    }

    Ok(KlExpansion {
        correlation_length,
        eigenvalues: products.iter().map(|&(l, _, _)| l).collect(),
        node_values,
        ortho_defect: defect,
    })
}
