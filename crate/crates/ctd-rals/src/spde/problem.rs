//! Assembly of the stochastic elliptic problem as a tensor system.
//!
//! The semi-discrete system `(K_0 + sum_k K_k z_k) u(z) = f` is collocated
//! on a tensor grid of Gauss-Legendre abscissas, giving the separated
//! operator equation `KU = F` with operator rank `d + 1`: term `lh` applies
//! `K_lh` in the spatial direction and the abscissa diagonal `D` (when
//! `lh = k`) or the identity (otherwise) in stochastic direction `k`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::csr::CsrMatrix;

use super::assemble::{assemble_load, assemble_stiffness};
use super::kl::KlExpansion;
use super::mesh::FemMesh;
use super::quadrature::gauss_legendre;
use crate::ctd::Ctd;
use crate::diagnostics::{power_method_norm_with, PowerMethodConfig};
use crate::error::{CtdError, Result};
use crate::operator::{OperatorBlock, SeparatedOperator};

/// Discretized stochastic elliptic problem.
#[derive(Debug, Clone)]
pub struct SpdeProblem {
    pub mesh: FemMesh,
    pub kl: KlExpansion,
    /// `K_0..K_d` on the interior nodes.
    pub stiffness: Vec<CsrMatrix<f64>>,
    /// Gauss-Legendre abscissas shared by all stochastic directions.
    pub abscissas: Vec<f64>,
    /// Unit-source load vector `f`.
    pub load: DVector<f64>,
    /// The separated operator of rank `d + 1`.
    pub operator: SeparatedOperator,
    /// Right-hand side tensor `F = f o 1_M o ... o 1_M`.
    pub rhs: Ctd,
    pub a0: f64,
    pub sigma_a: f64,
}

impl SpdeProblem {
    /// Number of stochastic directions.
    pub fn stochastic_dims(&self) -> usize {
        self.kl.modes()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        self.operator.mode_sizes()
    }

    /// `I - c K` as a separated operator.
    pub fn shifted_operator(&self, c: f64) -> SeparatedOperator {
        let mut terms = vec![(
            1.0,
            self.mode_sizes()
                .iter()
                .map(|&m| OperatorBlock::identity(m))
                .collect::<Vec<_>>(),
        )];
        for l in 0..self.operator.rank() {
            let blocks: Vec<OperatorBlock> = (0..self.operator.dims())
                .map(|k| self.operator.block(l, k).clone())
                .collect();
            terms.push((-c * self.operator.s_values()[l], blocks));
        }
        SeparatedOperator::from_terms(terms).expect("shifted operator shares block shapes")
    }

    /// Spatial solve of the nominal equations `K_0 u = f`.
    pub fn nominal_solution(&self) -> DVector<f64> {
        let k0 = sparse_to_dense(&self.stiffness[0]);
        k0.cholesky()
            .expect("K_0 is symmetric positive definite")
            .solve(&self.load)
    }
}

fn sparse_to_dense(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplet_iter() {
        out[(i, j)] += *v;
    }
    out
}

/// Builds the collocated tensor system for `d` KL modes and `m` abscissas
/// per stochastic direction, checking that the coefficient stays strictly
/// positive over all tensor-grid corners and mesh nodes.
pub fn build_problem(
    mesh: FemMesh,
    kl: KlExpansion,
    m: usize,
    a0: f64,
    sigma_a: f64,
) -> Result<SpdeProblem> {
    if m < 1 {
        return Err(CtdError::InvalidConfig(
            "at least one abscissa per direction is required".into(),
        ));
    }
    let d = kl.modes();

    // Coefficient positivity at the z = +-1 corners: the minimum over
    // corners at a node is a0 - sigma_a * sum_k sqrt(zeta_k) |phi_k|.
    let mut min_coefficient = f64::INFINITY;
    for node in 0..mesh.num_nodes() {
        let spread: f64 = (0..d)
            .map(|k| kl.eigenvalues()[k].sqrt() * kl.eigenfunction(k)[node].abs())
            .sum();
        min_coefficient = min_coefficient.min(a0 - sigma_a.abs() * spread);
    }
    if !(min_coefficient > 0.0) {
        return Err(CtdError::CoefficientNotPositive(min_coefficient));
    }

    let constant = vec![a0; mesh.num_nodes()];
    let mut stiffness = vec![assemble_stiffness(&mesh, &constant)?];
    for k in 0..d {
        let scale = sigma_a * kl.eigenvalues()[k].sqrt();
        let nodal: Vec<f64> = (0..mesh.num_nodes())
            .map(|node| scale * kl.eigenfunction(k)[node])
            .collect();
        stiffness.push(assemble_stiffness(&mesh, &nodal)?);
    }

    let (abscissas, _) = gauss_legendre(m);
    let mut mode_sizes = vec![mesh.num_interior()];
    mode_sizes.extend(std::iter::repeat_n(m, d));

    let terms: Vec<(f64, Vec<OperatorBlock>)> = (0..=d)
        .map(|lh| {
            let mut blocks = vec![OperatorBlock::Sparse(stiffness[lh].clone())];
            for k in 1..=d {
                blocks.push(if lh == k {
                    OperatorBlock::diagonal(&abscissas)
                } else {
                    OperatorBlock::identity(m)
                });
            }
            (1.0, blocks)
        })
        .collect();
    let operator = SeparatedOperator::from_terms(terms)?;

    let load = assemble_load(&mesh);
    let mut rhs_vectors = vec![load.clone()];
    rhs_vectors.extend((0..d).map(|_| DVector::from_element(m, 1.0)));
    let rhs = Ctd::from_rank_one(rhs_vectors, 1.0)?;

    Ok(SpdeProblem {
        mesh,
        kl,
        stiffness,
        abscissas,
        load,
        operator,
        rhs,
        a0,
        sigma_a,
    })
}

/// Chooses the damping constant: `c = 1 / (1.05 nu)` with `nu` the
/// power-method estimate of `||K||`, verified by requiring the estimated
/// `||I - c K|| < 1` and halving `c` on failure, up to ten times.
pub fn choose_damping(problem: &SpdeProblem, pm: &PowerMethodConfig) -> Result<f64> {
    let nu = power_method_norm_with(&problem.operator, pm)?.norm;
    if !(nu > 0.0) {
        return Err(CtdError::DampingSearch("operator norm estimate is zero".into()));
    }
    let mut c = 1.0 / (1.05 * nu);
    for _ in 0..10 {
        let shifted = problem.shifted_operator(c);
        let estimate = power_method_norm_with(&shifted, pm)?.norm;
        if estimate < 1.0 {
            return Ok(c);
        }
        c *= 0.5;
    }
    Err(CtdError::DampingSearch(format!(
        "no contraction found starting from nu = {nu}"
    )))
}
