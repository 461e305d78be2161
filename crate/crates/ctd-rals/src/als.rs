//! Rank reduction by alternating least squares via Hadamard-product normal
//! equations.
//!
//! Given a CTD `G`, [`reduce`] searches for a lower-rank CTD `F` with
//! `||F - G|| / ||G|| < epsilon`, sweeping one direction at a time. For the
//! optimization direction `k`, freezing all other factors yields the normal
//! equations `B_k c_{j_k} = b_{j_k}`, where `B_k` is the entrywise product
//! over the remaining directions of the factor Gram matrices. One
//! factorization of `B_k` is shared by all `M_k` right-hand sides.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ctd::Ctd;
use crate::error::{CtdError, Result};

/// Configuration for standard ALS rank reduction.
#[derive(Debug, Clone)]
pub struct AlsConfig {
    /// Relative-error target.
    pub epsilon: f64,
    /// Residual-improvement threshold below which the current rank is
    /// considered stuck and the rank is increased.
    pub stuck_tol: f64,
    pub max_rank: usize,
    /// Sweep budget per rank level.
    pub max_iter: usize,
    pub rng_seed: u64,
    /// Relative singular-value cutoff for pseudo-inverse solves.
    pub solver_rcond: f64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        AlsConfig {
            epsilon: 1e-6,
            stuck_tol: 1e-8,
            max_rank: 50,
            max_iter: 1000,
            rng_seed: 0,
            solver_rcond: 1e-14,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(CtdError::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.stuck_tol > 0.0) {
            return Err(CtdError::InvalidConfig("stuck_tol must be positive".into()));
        }
        if self.max_rank < 1 || self.max_iter < 1 {
            return Err(CtdError::InvalidConfig(
                "max_rank and max_iter must be at least 1".into(),
            ));
        }
        if !(self.solver_rcond > 0.0 && self.solver_rcond < 1.0) {
            return Err(CtdError::InvalidConfig(
                "solver_rcond must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Per-sweep record: residual after the sweep, condition number of each
/// directional solve, rank and global iteration counter.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub iteration: usize,
    pub rank: usize,
    pub residual: f64,
    /// kappa(B_k) per direction, in sweep order.
    pub cond_numbers: Vec<f64>,
    /// Rank-one terms dropped because a solve produced an all-zero column.
    pub dropped_terms: usize,
    /// False for randomized sweeps discarded by the rejection scheme.
    pub accepted: bool,
}

/// Outcome of a full reduction run.
#[derive(Debug, Clone)]
pub struct ReduceReport {
    pub sweeps: Vec<SweepReport>,
    pub converged: bool,
    /// Total sweeps performed.
    pub iterations: usize,
    pub final_residual: f64,
    pub max_cond: f64,
}

impl ReduceReport {
    fn from_sweeps(sweeps: Vec<SweepReport>, converged: bool, final_residual: f64) -> Self {
        let iterations = sweeps.len();
        let max_cond = sweeps
            .iter()
            .flat_map(|s| s.cond_numbers.iter().copied())
            .fold(1.0_f64, f64::max);
        ReduceReport {
            sweeps,
            converged,
            iterations,
            final_residual,
            max_cond,
        }
    }
}

/// Cross-Gram matrix of direction `i`: entry `(a, b)` is the dot product of
/// the `a`-th factor column of `f` with the `b`-th factor column of `g`.
pub fn gram_matrix(f: &Ctd, g: &Ctd, direction: usize) -> Result<DMatrix<f64>> {
    if direction >= f.dims() {
        return Err(CtdError::InvalidDirection {
            direction,
            dims: f.dims(),
        });
    }
    Ok(f.factor(direction).transpose() * g.factor(direction))
}

/// Builds the direction-`k` normal system: the Hadamard product `B_k` of the
/// Gram matrices over all other directions, and the `M_k x r_f` right-hand
/// side matrix whose row `j_k` is `b_{j_k}`.
pub fn build_normal_system(f: &Ctd, g: &Ctd, k: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if k >= f.dims() {
        return Err(CtdError::InvalidDirection {
            direction: k,
            dims: f.dims(),
        });
    }
    if f.mode_sizes() != g.mode_sizes() {
        return Err(CtdError::ShapeMismatch {
            expected: f.mode_sizes().to_vec(),
            got: g.mode_sizes().to_vec(),
        });
    }
    if f.rank() == 0 {
        return Err(CtdError::EmptyRank);
    }
    let mut bk = DMatrix::from_element(f.rank(), f.rank(), 1.0);
    let mut w = DMatrix::from_element(f.rank(), g.rank(), 1.0);
    for i in 0..f.dims() {
        if i == k {
            continue;
        }
        bk.component_mul_assign(&(f.factor(i).transpose() * f.factor(i)));
        w.component_mul_assign(&(f.factor(i).transpose() * g.factor(i)));
    }
    let rhs_t = scale_columns(&w, g.s_values()) * g.factor(k).transpose();
    Ok((bk, rhs_t.transpose()))
}

fn scale_columns(m: &DMatrix<f64>, scales: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &s) in scales.iter().enumerate() {
        out.column_mut(j).scale_mut(s);
    }
    out
}

pub(crate) struct NormalSolve {
    /// `r_f x nrhs` coefficient matrix.
    pub coefficients: DMatrix<f64>,
    pub cond: f64,
}

/// Solves the (square, symmetric PSD) normal system for all right-hand sides
/// at once: Cholesky when the matrix is numerically positive definite, a
/// truncated SVD pseudo-inverse otherwise. The condition number is always
/// taken from the SVD.
pub(crate) fn solve_normal_system(
    bk: &DMatrix<f64>,
    rhs_t: &DMatrix<f64>,
    rcond: f64,
) -> Result<NormalSolve> {
    let svd = bk.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return Err(CtdError::ZeroMatrix);
    }
    let cutoff = rcond * sigma_max;
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .fold(sigma_max, f64::min);
    let cond = sigma_max / sigma_min;
    let coefficients = match bk.clone().cholesky() {
        Some(chol) => chol.solve(rhs_t),
        None => bk
            .clone()
            .svd(true, true)
            .solve(rhs_t, cutoff)
            .map_err(|e| CtdError::InvalidConfig(e.to_string()))?,
    };
    Ok(NormalSolve { coefficients, cond })
}

/// Cached Gram matrices for one `(f, g)` pair, updated incrementally as
/// directions are re-solved.
pub(crate) struct SweepState<'g> {
    pub f: Ctd,
    g: &'g Ctd,
    g_norm_sq: f64,
    /// Per direction: `F_i^T F_i`.
    ff: Vec<DMatrix<f64>>,
    /// Per direction: `F_i^T G_i`.
    fg: Vec<DMatrix<f64>>,
}

impl<'g> SweepState<'g> {
    pub fn new(f: Ctd, g: &'g Ctd) -> Self {
        let mut state = SweepState {
            f,
            g,
            g_norm_sq: g.norm().powi(2),
            ff: Vec::new(),
            fg: Vec::new(),
        };
        state.rebuild();
        state
    }

    pub fn rebuild(&mut self) {
        self.ff = (0..self.f.dims())
            .map(|k| self.f.factor(k).transpose() * self.f.factor(k))
            .collect();
        self.fg = (0..self.f.dims())
            .map(|k| self.f.factor(k).transpose() * self.g.factor(k))
            .collect();
    }

    pub fn add_term(&mut self, term: &Ctd) -> Result<()> {
        self.f = self.f.add(term)?;
        self.rebuild();
        Ok(())
    }

    /// `||f - g|| / ||g||` from the cached Gram matrices.
    pub fn residual(&self) -> f64 {
        let r_f = self.f.rank();
        if r_f == 0 {
            return 1.0;
        }
        let mut hff = DMatrix::from_element(r_f, r_f, 1.0);
        let mut hfg = DMatrix::from_element(r_f, self.g.rank(), 1.0);
        for k in 0..self.f.dims() {
            hff.component_mul_assign(&self.ff[k]);
            hfg.component_mul_assign(&self.fg[k]);
        }
        let sf = DVector::from_column_slice(self.f.s_values());
        let sg = DVector::from_column_slice(self.g.s_values());
        let f_norm_sq = (sf.transpose() * &hff * &sf)[(0, 0)];
        let cross = (sf.transpose() * &hfg * &sg)[(0, 0)];
        let diff_sq = (f_norm_sq - 2.0 * cross + self.g_norm_sq).max(0.0);
        diff_sq.sqrt() / self.g_norm_sq.sqrt()
    }

    /// One full sweep over all directions; returns the report with the
    /// iteration counter left at zero for the caller to fill in.
    pub fn sweep(&mut self, solver_rcond: f64) -> Result<SweepReport> {
        let dims = self.f.dims();
        let mut cond_numbers = Vec::with_capacity(dims);
        let mut dropped_total = 0;
        for k in 0..dims {
            if self.f.rank() == 0 {
                break;
            }
            let r_f = self.f.rank();
            let mut bk = DMatrix::from_element(r_f, r_f, 1.0);
            let mut w = DMatrix::from_element(r_f, self.g.rank(), 1.0);
            for i in 0..dims {
                if i != k {
                    bk.component_mul_assign(&self.ff[i]);
                    w.component_mul_assign(&self.fg[i]);
                }
            }
            let rhs_t = scale_columns(&w, self.g.s_values()) * self.g.factor(k).transpose();
            let solve = solve_normal_system(&bk, &rhs_t, solver_rcond)?;
            cond_numbers.push(solve.cond);
            let dropped = self.f.replace_direction(k, solve.coefficients.transpose());
            if dropped > 0 {
                dropped_total += dropped;
                self.rebuild();
            } else {
                self.ff[k] = self.f.factor(k).transpose() * self.f.factor(k);
                self.fg[k] = self.f.factor(k).transpose() * self.g.factor(k);
            }
        }
        Ok(SweepReport {
            iteration: 0,
            rank: self.f.rank(),
            residual: self.residual(),
            cond_numbers,
            dropped_terms: dropped_total,
            accepted: true,
        })
    }
}

/// One ALS sweep over all directions, in pseudocode order: solve the normal
/// system for every `j_k` at once, take column norms as the new s-values and
/// the normalized columns as the new direction-`k` factor.
pub fn als_sweep(f: &Ctd, g: &Ctd, cfg: &AlsConfig) -> Result<(Ctd, SweepReport)> {
    cfg.validate()?;
    if f.mode_sizes() != g.mode_sizes() {
        return Err(CtdError::ShapeMismatch {
            expected: f.mode_sizes().to_vec(),
            got: g.mode_sizes().to_vec(),
        });
    }
    if f.rank() == 0 {
        return Err(CtdError::EmptyRank);
    }
    let mut state = SweepState::new(f.clone(), g);
    let mut report = state.sweep(cfg.solver_rcond)?;
    report.iteration = 1;
    Ok((state.f, report))
}

/// Rank reduction per the alternating least squares algorithm: start from a
/// random rank-1 guess, sweep until the residual target is met, the residual
/// stalls (increase the rank by a random rank-1 contribution), or the sweep
/// budget is exhausted. When the run does not converge the best iterate seen
/// is returned and the report is flagged.
pub fn reduce(g: &Ctd, cfg: &AlsConfig) -> Result<(Ctd, ReduceReport)> {
    reduce_impl(g, None, cfg)
}

/// [`reduce`] warm-started from an initial guess instead of a random rank-1
/// tensor. Used by the fixed-point PDE solver where consecutive truncations
/// start near the previous iterate.
pub fn reduce_from(g: &Ctd, init: &Ctd, cfg: &AlsConfig) -> Result<(Ctd, ReduceReport)> {
    reduce_impl(g, Some(init), cfg)
}

fn reduce_impl(g: &Ctd, init: Option<&Ctd>, cfg: &AlsConfig) -> Result<(Ctd, ReduceReport)> {
    cfg.validate()?;
    if g.rank() == 0 {
        return Err(CtdError::EmptyRank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let g_norm = g.norm();
    let start = match init {
        Some(f0) if f0.rank() > 0 => f0.clone(),
        _ => Ctd::random(g.mode_sizes(), 1, &mut rng),
    };
    let mut state = SweepState::new(start, g);
    let mut res = state.residual();
    let mut best = (state.f.clone(), res);
    let mut sweeps: Vec<SweepReport> = Vec::new();
    let mut total_iter = 0;

    loop {
        let mut iter = 1;
        while iter <= cfg.max_iter {
            let res_old = res;
            let mut report = state.sweep(cfg.solver_rcond)?;
            total_iter += 1;
            report.iteration = total_iter;
            res = report.residual;
            sweeps.push(report);
            if state.f.rank() > 0 && res < best.1 {
                best = (state.f.clone(), res);
            }
            if res < cfg.epsilon {
                let report = ReduceReport::from_sweeps(sweeps, true, res);
                return Ok((state.f, report));
            }
            if (res - res_old).abs() < cfg.stuck_tol {
                break;
            }
            iter += 1;
        }
        if state.f.rank() >= cfg.max_rank {
            break;
        }
        // Add a random rank-1 contribution. The new term's weight is a small
        // fraction of the current residual so it perturbs rather than
        // dominates the iterate.
        let weight = (res * g_norm * 1e-2).max(f64::MIN_POSITIVE);
        let term = Ctd::random_rank_one(g.mode_sizes(), weight, &mut rng);
        state.add_term(&term)?;
        res = state.residual();
    }
    let report = ReduceReport::from_sweeps(sweeps, false, best.1);
    Ok((best.0, report))
}
