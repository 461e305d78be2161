//! Canonical tensor decompositions and their separated-representation arithmetic.
//!
//! A [`Ctd`] stores a d-directional tensor as a sum of rank-one outer products:
//! one factor matrix per direction with unit-norm columns, plus positive
//! s-values carrying the magnitude of each term. The core operations
//! (addition, inner product, norms, operator application) never materialize
//! the dense tensor. A capped [`DenseTensor`] expansion is provided as a test
//! oracle, together with the Khatri-Rao flattening that rewrites a CTD as a
//! tall matrix with one column per term.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::error::{CtdError, Result};

/// Default cap on dense-oracle expansions, in number of entries.
pub const DEFAULT_ORACLE_CAP: usize = 1_000_000;

/// Tolerance for the unit-norm factor-column invariant.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A tensor in canonical (separated) format.
///
/// Invariants maintained by every constructor and operation:
/// - each factor column has Euclidean norm 1 (within [`NORMALIZATION_TOL`]),
/// - all s-values are strictly positive,
/// - rank 0 represents the zero tensor (factor matrices with zero columns).
#[derive(Debug, Clone)]
pub struct Ctd {
    mode_sizes: Vec<usize>,
    s_values: Vec<f64>,
    /// One matrix per direction, `mode_sizes[k] x rank`.
    factors: Vec<DMatrix<f64>>,
}

impl Ctd {
    /// The zero tensor of the given shape (separation rank 0).
    pub fn zero(mode_sizes: &[usize]) -> Self {
        assert!(!mode_sizes.is_empty(), "tensor needs at least one direction");
        assert!(mode_sizes.iter().all(|&m| m > 0), "mode sizes must be positive");
        let factors = mode_sizes.iter().map(|&m| DMatrix::zeros(m, 0)).collect();
        Ctd {
            mode_sizes: mode_sizes.to_vec(),
            s_values: Vec::new(),
            factors,
        }
    }

    /// Builds a CTD from raw factor matrices and s-values, normalizing the
    /// columns and folding their norms into the s-values. Terms with a
    /// zero-norm column or zero net weight are dropped; negative weights have
    /// their sign folded into the direction-0 factor.
    pub fn from_factors(factors: Vec<DMatrix<f64>>, s_values: Vec<f64>) -> Result<Self> {
        assert!(!factors.is_empty(), "tensor needs at least one direction");
        let rank = s_values.len();
        let mode_sizes: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
        for f in &factors {
            if f.ncols() != rank {
                return Err(CtdError::ShapeMismatch {
                    expected: vec![rank],
                    got: vec![f.ncols()],
                });
            }
        }
        let dims = factors.len();
        let mut out_factors: Vec<DMatrix<f64>> =
            mode_sizes.iter().map(|&m| DMatrix::zeros(m, rank)).collect();
        let mut out_s = Vec::with_capacity(rank);
        let mut kept = 0;
        for l in 0..rank {
            let mut s = s_values[l];
            if s == 0.0 || !s.is_finite() {
                continue;
            }
            let norms: Vec<f64> = (0..dims).map(|k| factors[k].column(l).norm()).collect();
            if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
                continue;
            }
            for k in 0..dims {
                let scaled = factors[k].column(l) / norms[k];
                out_factors[k].set_column(kept, &scaled);
                s *= norms[k];
            }
            if s < 0.0 {
                let negated = -out_factors[0].column(kept);
                out_factors[0].set_column(kept, &negated);
                s = -s;
            }
            out_s.push(s);
            kept += 1;
        }
        let out_factors = out_factors
            .into_iter()
            .map(|f| f.columns(0, kept).into_owned())
            .collect();
        Ok(Ctd {
            mode_sizes,
            s_values: out_s,
            factors: out_factors,
        })
    }

    /// Builds a rank-1 tensor from one vector per direction.
    pub fn from_rank_one(vectors: Vec<DVector<f64>>, weight: f64) -> Result<Self> {
        let factors = vectors
            .into_iter()
            .map(|v| DMatrix::from_columns(&[v]))
            .collect();
        Self::from_factors(factors, vec![weight])
    }

    /// A random CTD with i.i.d. standard Gaussian factor entries, columns
    /// normalized and all s-values equal to 1.
    pub fn random<R: Rng + ?Sized>(mode_sizes: &[usize], rank: usize, rng: &mut R) -> Self {
        let factors = mode_sizes
            .iter()
            .map(|&m| DMatrix::from_fn(m, rank, |_, _| rng.sample(StandardNormal)))
            .collect();
        let ctd = Self::from_factors(factors, vec![1.0; rank])
            .expect("random factors have consistent shape");
        // A Gaussian column is zero with probability 0; keep the requested rank.
        debug_assert_eq!(ctd.rank(), rank);
        Ctd {
            s_values: vec![1.0; ctd.rank()],
            ..ctd
        }
    }

    /// A random rank-1 tensor with unit factors and the given weight.
    pub fn random_rank_one<R: Rng + ?Sized>(
        mode_sizes: &[usize],
        weight: f64,
        rng: &mut R,
    ) -> Self {
        let mut ctd = Self::random(mode_sizes, 1, rng);
        ctd.s_values[0] = weight;
        ctd
    }

    pub fn dims(&self) -> usize {
        self.mode_sizes.len()
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    /// Separation rank (number of rank-one terms).
    pub fn rank(&self) -> usize {
        self.s_values.len()
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    /// Factor matrix of direction `k` (`mode_sizes[k] x rank`).
    pub fn factor(&self, k: usize) -> &DMatrix<f64> {
        &self.factors[k]
    }

    /// Replaces direction `k` with a solved coefficient block: column norms
    /// become the new s-values and the normalized columns the new factor.
    /// Zero-norm columns drop the corresponding term in every direction.
    /// Returns the number of dropped terms.
    pub(crate) fn replace_direction(&mut self, k: usize, coefficients: DMatrix<f64>) -> usize {
        assert_eq!(coefficients.nrows(), self.mode_sizes[k]);
        assert_eq!(coefficients.ncols(), self.rank());
        let rank = self.rank();
        let keep: Vec<usize> = (0..rank)
            .filter(|&l| {
                let n = coefficients.column(l).norm();
                n > 0.0 && n.is_finite()
            })
            .collect();
        let dropped = rank - keep.len();
        let mut new_factor = DMatrix::zeros(self.mode_sizes[k], keep.len());
        let mut new_s = Vec::with_capacity(keep.len());
        for (j, &l) in keep.iter().enumerate() {
            let col = coefficients.column(l);
            let n = col.norm();
            new_factor.set_column(j, &(col / n));
            new_s.push(n);
        }
        if dropped > 0 {
            for (dir, f) in self.factors.iter_mut().enumerate() {
                if dir != k {
                    let cols: Vec<_> = keep.iter().map(|&l| f.column(l).into_owned()).collect();
                    *f = if cols.is_empty() {
                        DMatrix::zeros(self.mode_sizes[dir], 0)
                    } else {
                        DMatrix::from_columns(&cols)
                    };
                }
            }
        }
        self.factors[k] = new_factor;
        self.s_values = new_s;
        dropped
    }

    fn check_same_shape(&self, other: &Ctd) -> Result<()> {
        if self.mode_sizes != other.mode_sizes {
            return Err(CtdError::ShapeMismatch {
                expected: self.mode_sizes.clone(),
                got: other.mode_sizes.clone(),
            });
        }
        Ok(())
    }

    /// Sum of two CTDs: terms are joined into a single list, so the output
    /// rank is the sum of the input ranks. No recompression is performed.
    pub fn add(&self, other: &Ctd) -> Result<Ctd> {
        self.check_same_shape(other)?;
        let mut s_values = self.s_values.clone();
        s_values.extend_from_slice(&other.s_values);
        let factors = self
            .factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| {
                let mut m = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
                m.columns_mut(0, a.ncols()).copy_from(a);
                m.columns_mut(a.ncols(), b.ncols()).copy_from(b);
                m
            })
            .collect();
        Ok(Ctd {
            mode_sizes: self.mode_sizes.clone(),
            s_values,
            factors,
        })
    }

    /// Negation, represented by flipping the signs of the direction-0 factor
    /// columns so that s-values stay positive.
    pub fn negate(&self) -> Ctd {
        let mut out = self.clone();
        if out.rank() > 0 {
            out.factors[0].neg_mut();
        }
        out
    }

    /// `self - other`, as concatenation with the negated subtrahend.
    pub fn sub(&self, other: &Ctd) -> Result<Ctd> {
        self.add(&other.negate())
    }

    /// Scales the tensor by `c` (folded into s-values; signs into direction 0).
    pub fn scale(&self, c: f64) -> Ctd {
        if c == 0.0 {
            return Ctd::zero(&self.mode_sizes);
        }
        let base = if c < 0.0 { self.negate() } else { self.clone() };
        Ctd {
            s_values: base.s_values.iter().map(|s| s * c.abs()).collect(),
            ..base
        }
    }

    /// Inner product: sum over term pairs of s-value products times
    /// per-direction dot products.
    pub fn inner(&self, other: &Ctd) -> Result<f64> {
        self.check_same_shape(other)?;
        if self.rank() == 0 || other.rank() == 0 {
            return Ok(0.0);
        }
        // Hadamard product over directions of the cross-Gram matrices.
        let mut h = DMatrix::from_element(self.rank(), other.rank(), 1.0);
        for k in 0..self.dims() {
            let gram = self.factors[k].transpose() * &other.factors[k];
            h.component_mul_assign(&gram);
        }
        let sa = DVector::from_column_slice(&self.s_values);
        let sb = DVector::from_column_slice(&other.s_values);
        Ok((sa.transpose() * h * sb)[(0, 0)])
    }

    /// Frobenius norm, clamped at zero against roundoff.
    pub fn norm(&self) -> f64 {
        self.inner(self).expect("same shape").max(0.0).sqrt()
    }

    /// `||self - reference|| / ||reference||`. Errors when the reference has
    /// zero norm.
    pub fn relative_error(&self, reference: &Ctd) -> Result<f64> {
        self.check_same_shape(reference)?;
        let ref_norm = reference.norm();
        if ref_norm == 0.0 {
            return Err(CtdError::ZeroReference);
        }
        Ok(self.sub(reference)?.norm() / ref_norm)
    }

    /// Single entry of the represented tensor, evaluated term by term.
    pub fn entry(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.dims());
        (0..self.rank())
            .map(|l| {
                self.s_values[l]
                    * index
                        .iter()
                        .enumerate()
                        .map(|(k, &j)| self.factors[k][(j, l)])
                        .product::<f64>()
            })
            .sum()
    }

    /// Total number of entries of the represented dense tensor.
    pub fn dense_len(&self) -> u128 {
        self.mode_sizes.iter().map(|&m| m as u128).product()
    }

    /// Dense expansion under the default oracle cap.
    pub fn dense_expand(&self) -> Result<DenseTensor> {
        self.dense_expand_with_cap(DEFAULT_ORACLE_CAP)
    }

    /// Dense expansion with an explicit entry cap.
    pub fn dense_expand_with_cap(&self, cap: usize) -> Result<DenseTensor> {
        let size = self.dense_len();
        if size > cap as u128 {
            return Err(CtdError::OracleCapExceeded { size, cap });
        }
        let len = size as usize;
        let mut data = vec![0.0; len];
        for l in 0..self.rank() {
            // Iterated Kronecker product with direction 0 slowest.
            let mut term = vec![self.s_values[l]];
            for k in 0..self.dims() {
                let col = self.factors[k].column(l);
                let mut next = Vec::with_capacity(term.len() * col.len());
                for &t in &term {
                    for &c in col.iter() {
                        next.push(t * c);
                    }
                }
                term = next;
            }
            for (d, t) in data.iter_mut().zip(term) {
                *d += t;
            }
        }
        DenseTensor::new(self.mode_sizes.clone(), data)
    }

    /// Khatri-Rao flattening: the matrix whose column `l` is the Kronecker
    /// product of the direction factors of term `l`, skipping direction
    /// `skip`. Row ordering matches [`Ctd::dense_expand`] with mode `skip`
    /// removed (earliest remaining direction slowest).
    pub fn khatri_rao_flatten(&self, skip: usize) -> Result<DMatrix<f64>> {
        if skip >= self.dims() {
            return Err(CtdError::InvalidDirection {
                direction: skip,
                dims: self.dims(),
            });
        }
        if self.rank() == 0 {
            return Err(CtdError::EmptyRank);
        }
        let rows: u128 = self
            .mode_sizes
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .map(|(_, &m)| m as u128)
            .product();
        if rows > DEFAULT_ORACLE_CAP as u128 {
            return Err(CtdError::OracleCapExceeded {
                size: rows,
                cap: DEFAULT_ORACLE_CAP,
            });
        }
        let rows = rows as usize;
        let mut out = DMatrix::zeros(rows, self.rank());
        for l in 0..self.rank() {
            let mut col = vec![1.0];
            for k in 0..self.dims() {
                if k == skip {
                    continue;
                }
                let f = self.factors[k].column(l);
                let mut next = Vec::with_capacity(col.len() * f.len());
                for &t in &col {
                    for &c in f.iter() {
                        next.push(t * c);
                    }
                }
                col = next;
            }
            out.set_column(l, &DVector::from_vec(col));
        }
        Ok(out)
    }

    /// Largest deviation of any factor column norm from 1.
    pub fn normalization_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for f in &self.factors {
            for l in 0..f.ncols() {
                defect = defect.max((f.column(l).norm() - 1.0).abs());
            }
        }
        defect
    }
}

/// Dense tensor in row-major multi-index order (direction 0 slowest). Test
/// oracle only: construction is capped.
#[derive(Debug, Clone)]
pub struct DenseTensor {
    mode_sizes: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(mode_sizes: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let size: u128 = mode_sizes.iter().map(|&m| m as u128).product();
        if size != data.len() as u128 {
            return Err(CtdError::ShapeMismatch {
                expected: mode_sizes,
                got: vec![data.len()],
            });
        }
        Ok(DenseTensor { mode_sizes, data })
    }

    pub fn zeros(mode_sizes: &[usize]) -> Result<Self> {
        Self::zeros_with_cap(mode_sizes, DEFAULT_ORACLE_CAP)
    }

    pub fn zeros_with_cap(mode_sizes: &[usize], cap: usize) -> Result<Self> {
        let size: u128 = mode_sizes.iter().map(|&m| m as u128).product();
        if size > cap as u128 {
            return Err(CtdError::OracleCapExceeded { size, cap });
        }
        Ok(DenseTensor {
            mode_sizes: mode_sizes.to_vec(),
            data: vec![0.0; size as usize],
        })
    }

    pub fn mode_sizes(&self) -> &[usize] {
        &self.mode_sizes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn linear_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.mode_sizes.len());
        let mut idx = 0;
        for (k, &j) in index.iter().enumerate() {
            assert!(j < self.mode_sizes[k]);
            idx = idx * self.mode_sizes[k] + j;
        }
        idx
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.linear_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let idx = self.linear_index(index);
        self.data[idx] = value;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.mode_sizes != other.mode_sizes {
            return Err(CtdError::ShapeMismatch {
                expected: self.mode_sizes.clone(),
                got: other.mode_sizes.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        DenseTensor::new(self.mode_sizes.clone(), data)
    }

    /// Iterates multi-indices in linear order.
    pub fn indices(&self) -> MultiIndexIter {
        MultiIndexIter {
            mode_sizes: self.mode_sizes.clone(),
            next: Some(vec![0; self.mode_sizes.len()]),
        }
    }
}

/// Row-major multi-index iterator (direction 0 slowest).
pub struct MultiIndexIter {
    mode_sizes: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for MultiIndexIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for k in (0..self.mode_sizes.len()).rev() {
            succ[k] += 1;
            if succ[k] < self.mode_sizes[k] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[k] = 0;
        }
        self.next = None;
        Some(current)
    }
}
