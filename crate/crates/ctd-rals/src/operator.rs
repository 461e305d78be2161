//! Separated linear operators acting on CTDs.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::csr::CsrMatrix;

use crate::ctd::{Ctd, DEFAULT_ORACLE_CAP};
use crate::error::{CtdError, Result};

/// One directional block of a separated operator, stored dense or sparse.
#[derive(Debug, Clone)]
pub enum OperatorBlock {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

impl OperatorBlock {
    pub fn identity(n: usize) -> Self {
        OperatorBlock::Dense(DMatrix::identity(n, n))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        OperatorBlock::Dense(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    pub fn nrows(&self) -> usize {
        match self {
            OperatorBlock::Dense(m) => m.nrows(),
            OperatorBlock::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            OperatorBlock::Dense(m) => m.ncols(),
            OperatorBlock::Sparse(m) => m.ncols(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            OperatorBlock::Dense(m) => m * v,
            OperatorBlock::Sparse(m) => m * v,
        }
    }

    pub fn transpose(&self) -> OperatorBlock {
        match self {
            OperatorBlock::Dense(m) => OperatorBlock::Dense(m.transpose()),
            OperatorBlock::Sparse(m) => OperatorBlock::Sparse(m.transpose()),
        }
    }

    pub fn scale(&self, c: f64) -> OperatorBlock {
        match self {
            OperatorBlock::Dense(m) => OperatorBlock::Dense(m * c),
            OperatorBlock::Sparse(m) => {
                let mut s = m.clone();
                for v in s.values_mut() {
                    *v *= c;
                }
                OperatorBlock::Sparse(s)
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            OperatorBlock::Dense(m) => m.clone(),
            OperatorBlock::Sparse(m) => {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                for (i, j, v) in m.triplet_iter() {
                    out[(i, j)] = *v;
                }
                out
            }
        }
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.to_dense();
        (&d - d.transpose()).norm() <= tol * d.norm().max(1.0)
    }
}

/// A rank-`r` separated linear operator: one square block per direction and
/// term, plus positive s-values.
#[derive(Debug, Clone)]
pub struct SeparatedOperator {
    mode_sizes: Vec<usize>,
    s_values: Vec<f64>,
    /// `blocks[l][k]`: block of term `l` in direction `k`.
    blocks: Vec<Vec<OperatorBlock>>,
}

impl SeparatedOperator {
    /// Builds an operator from weighted terms, folding negative weights into
    /// the direction-0 block and dropping zero-weight terms.
    pub fn from_terms(terms: Vec<(f64, Vec<OperatorBlock>)>) -> Result<Self> {
        assert!(!terms.is_empty(), "operator needs at least one term");
        let mode_sizes: Vec<usize> = terms[0].1.iter().map(|b| b.nrows()).collect();
        let dims = mode_sizes.len();
        let mut s_values = Vec::new();
        let mut blocks = Vec::new();
        for (s, mut term) in terms {
            if term.len() != dims {
                return Err(CtdError::ShapeMismatch {
                    expected: mode_sizes,
                    got: term.iter().map(|b| b.nrows()).collect(),
                });
            }
            for (k, b) in term.iter().enumerate() {
                if b.nrows() != mode_sizes[k] || b.ncols() != mode_sizes[k] {
                    return Err(CtdError::ShapeMismatch {
                        expected: mode_sizes.clone(),
                        got: term.iter().map(|b| b.nrows()).collect(),
                    });
                }
            }
            if s == 0.0 {
                continue;
            }
            let weight = if s < 0.0 {
                term[0] = term[0].scale(-1.0);
                -s
            } else {
                s
            };
            s_values.push(weight);
            blocks.push(term);
        }
        Ok(SeparatedOperator {
            mode_sizes,
            s_values,
            blocks,
        })
    }

    /// The identity operator on the given mode sizes (rank 1).
    pub fn identity(mode_sizes: &[usize]) -> Self {
        let term = mode_sizes
            .iter()
            .map(|&m| OperatorBlock::identity(m))
            .collect();
        SeparatedOperator {
            mode_sizes: mode_sizes.to_vec(),
            s_values: vec![1.0],
            blocks: vec![term],
        }
    }

    pub fn dims(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn rank(&self) -> usize {
        self.s_values.len()
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn block(&self, term: usize, direction: usize) -> &OperatorBlock {
        &self.blocks[term][direction]
    }

    /// Applies the operator to a CTD. The output has one term per
    /// operator-term/tensor-term pair; each output column is renormalized
    /// with its norm folded into the s-value, and zero-norm products are
    /// dropped, so the output rank is at most `r_A * r_F`.
    pub fn apply(&self, f: &Ctd) -> Result<Ctd> {
        if self.mode_sizes != f.mode_sizes() {
            return Err(CtdError::ShapeMismatch {
                expected: self.mode_sizes.clone(),
                got: f.mode_sizes().to_vec(),
            });
        }
        let out_rank = self.rank() * f.rank();
        let mut factors: Vec<DMatrix<f64>> = self
            .mode_sizes
            .iter()
            .map(|&m| DMatrix::zeros(m, out_rank))
            .collect();
        let mut s_values = Vec::with_capacity(out_rank);
        for (l_op, term) in self.blocks.iter().enumerate() {
            for l_f in 0..f.rank() {
                for (k, block) in term.iter().enumerate() {
                    let col = block.apply(&f.factor(k).column(l_f).into_owned());
                    factors[k].set_column(s_values.len(), &col);
                }
                s_values.push(self.s_values[l_op] * f.s_values()[l_f]);
            }
        }
        Ctd::from_factors(factors, s_values)
    }

    /// Transposed operator (each block transposed).
    pub fn transpose(&self) -> SeparatedOperator {
        SeparatedOperator {
            mode_sizes: self.mode_sizes.clone(),
            s_values: self.s_values.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|term| term.iter().map(|b| b.transpose()).collect())
                .collect(),
        }
    }

    /// True when every block is symmetric within `tol` (relative).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.blocks
            .iter()
            .all(|term| term.iter().all(|b| b.is_symmetric(tol)))
    }

    /// Dense matrix of the flattened operator (Kronecker sum of terms),
    /// capped like the dense tensor oracle.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        let n: u128 = self.mode_sizes.iter().map(|&m| m as u128).product();
        if n * n > DEFAULT_ORACLE_CAP as u128 {
            return Err(CtdError::OracleCapExceeded {
                size: n * n,
                cap: DEFAULT_ORACLE_CAP,
            });
        }
        let n = n as usize;
        let mut out = DMatrix::zeros(n, n);
        for (l, term) in self.blocks.iter().enumerate() {
            let mut kron = DMatrix::from_element(1, 1, self.s_values[l]);
            for block in term {
                kron = kron.kronecker(&block.to_dense());
            }
            out += kron;
        }
        Ok(out)
    }
}
