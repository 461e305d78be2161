//! P1 finite element assembly on the structured mesh, with Dirichlet rows
//! and columns eliminated.

use nalgebra::DVector;
use nalgebra_sparse::{coo::CooMatrix, csr::CsrMatrix};

use super::mesh::FemMesh;
use crate::error::{CtdError, Result};

/// Assembles the stiffness matrix of `-div(a grad .)` for a coefficient
/// given by nodal values, interpolated to element midpoints. The result is
/// the symmetric interior-node matrix.
pub fn assemble_stiffness(mesh: &FemMesh, coefficient: &[f64]) -> Result<CsrMatrix<f64>> {
    if coefficient.len() != mesh.num_nodes() {
        return Err(CtdError::CoefficientLength {
            expected: mesh.num_nodes(),
            got: coefficient.len(),
        });
    }
    let n_int = mesh.num_interior();
    let mut coo = CooMatrix::new(n_int, n_int);
    for element in mesh.elements() {
        let area = mesh.element_area(element);
        let a_mid = element.iter().map(|&v| coefficient[v]).sum::<f64>() / 3.0;
        let (x, y): (Vec<f64>, Vec<f64>) = element
            .iter()
            .map(|&v| mesh.node_coord(v))
            .unzip();
        // Barycentric gradient components (cyclic indices).
        let b = [y[1] - y[2], y[2] - y[0], y[0] - y[1]];
        let c = [x[2] - x[1], x[0] - x[2], x[1] - x[0]];
        for (i, &vi) in element.iter().enumerate() {
            let Some(row) = mesh.interior_index(vi) else {
                continue;
            };
            for (j, &vj) in element.iter().enumerate() {
                let Some(col) = mesh.interior_index(vj) else {
                    continue;
                };
                let entry = a_mid * (b[i] * b[j] + c[i] * c[j]) / (4.0 * area);
                coo.push(row, col, entry);
            }
        }
    }
    Ok(CsrMatrix::from(&coo))
}

/// Consistent P1 load vector for the constant unit source: each element
/// contributes a third of its area to each of its interior vertices.
pub fn assemble_load(mesh: &FemMesh) -> DVector<f64> {
    let mut load = DVector::zeros(mesh.num_interior());
    for element in mesh.elements() {
        let contribution = mesh.element_area(element) / 3.0;
        for &v in element {
            if let Some(idx) = mesh.interior_index(v) {
                load[idx] += contribution;
            }
        }
    }
    load
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spde::mesh::build_mesh;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (i, j, v) in m.triplet_iter() {
            out[(i, j)] += *v;
        }
        out
    }

    #[test]
    fn unit_coefficient_gives_five_point_stencil() {
        let mesh = build_mesh(8).unwrap();
        let a = vec![1.0; mesh.num_nodes()];
        let k = to_dense(&assemble_stiffness(&mesh, &a).unwrap());
        let n = mesh.n();
        let side = n + 1;
        let node = |i: usize, j: usize| i * side + j;
        for i in 1..n {
            for j in 1..n {
                let row = mesh.interior_index(node(i, j)).unwrap();
                assert_abs_diff_eq!(k[(row, row)], 4.0, epsilon = 1e-13);
                let neighbors = [
                    node(i - 1, j),
                    node(i + 1, j),
                    node(i, j - 1),
                    node(i, j + 1),
                ];
                for nb in neighbors {
                    if let Some(col) = mesh.interior_index(nb) {
                        assert_abs_diff_eq!(k[(row, col)], -1.0, epsilon = 1e-13);
                    }
                }
                // Diagonal neighbors carry no coupling on this split.
                for (di, dj) in [(-1i64, -1i64), (-1, 1), (1, -1), (1, 1)] {
                    let ni = (i as i64 + di) as usize;
                    let nj = (j as i64 + dj) as usize;
                    if let Some(col) = mesh.interior_index(node(ni, nj)) {
                        assert_abs_diff_eq!(k[(row, col)], 0.0, epsilon = 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_coefficient_matrix_is_positive_definite() {
        let mesh = build_mesh(8).unwrap();
        let a = vec![0.1; mesh.num_nodes()];
        let k = to_dense(&assemble_stiffness(&mesh, &a).unwrap());
        assert_abs_diff_eq!((&k - k.transpose()).norm(), 0.0, epsilon = 1e-13);
        let min_eig = k
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig > 0.0, "min eigenvalue {min_eig}");
    }

    /// Series solution of -lap(u) = 1 on the unit square at the center.
    fn poisson_center_value() -> f64 {
        let mut acc = 0.0;
        let pi = std::f64::consts::PI;
        for m in (1..100).step_by(2) {
            for n in (1..100).step_by(2) {
                let (mf, nf) = (m as f64, n as f64);
                acc += (mf * pi / 2.0).sin() * (nf * pi / 2.0).sin()
                    / (mf * nf * (mf * mf + nf * nf));
            }
        }
        16.0 / pi.powi(4) * acc
    }

    #[test]
    fn poisson_solve_matches_series_solution() {
        let mesh = build_mesh(32).unwrap();
        let a0 = 0.1;
        let a = vec![a0; mesh.num_nodes()];
        let k = to_dense(&assemble_stiffness(&mesh, &a).unwrap());
        let f = assemble_load(&mesh);
        let u = k.cholesky().unwrap().solve(&f);
        let max_u = u.iter().copied().fold(0.0_f64, f64::max);
        let expected = poisson_center_value() / a0;
        assert_abs_diff_eq!(expected, 0.7367, epsilon = 2e-4);
        assert!(
            (max_u - expected).abs() <= 0.02 * expected,
            "max {max_u} vs series {expected}"
        );
    }

    #[test]
    fn coefficient_length_is_checked() {
        let mesh = build_mesh(4).unwrap();
        assert!(matches!(
            assemble_stiffness(&mesh, &[1.0; 3]),
            Err(CtdError::CoefficientLength { .. })
        ));
    }
}
