//! Randomized alternating least squares: sketched rectangular systems via
//! projections onto random tensors, with sweep-level accept/reject.
//!
//! Instead of contracting the iterate with itself, each direction's system is
//! built by contracting against per-direction random matrices with `r' > r_F`
//! columns, which improves the conditioning of the solves. Random projection
//! forfeits the monotone error reduction of standard ALS, so a sweep that
//! increases the residual is discarded and rerun with fresh projections.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::als::{ReduceReport, SweepReport};
use crate::ctd::Ctd;
use crate::error::{CtdError, Result};

/// Entry distribution for the random projection matrices. Signed Bernoulli
/// is the default; Gaussian entries are available as an option.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionDistribution {
    SignedBernoulli,
    Gaussian,
}

/// Configuration for randomized ALS rank reduction.
#[derive(Debug, Clone)]
pub struct RandAlsConfig {
    pub epsilon: f64,
    pub max_rank: usize,
    /// Sweep budget per rank level.
    pub max_iter: usize,
    /// Consecutive rejected sweeps allowed before the rank is increased.
    pub max_tries: usize,
    /// Sketch-size multiplier rho, so that `r' = rho * r_F`.
    pub sketch_multiplier: usize,
    pub rng_seed: u64,
    pub solver_rcond: f64,
    pub distribution: ProjectionDistribution,
}

impl Default for RandAlsConfig {
    fn default() -> Self {
        RandAlsConfig {
            epsilon: 1e-6,
            max_rank: 50,
            max_iter: 1000,
            max_tries: 50,
            sketch_multiplier: 25,
            rng_seed: 0,
            solver_rcond: 1e-14,
            distribution: ProjectionDistribution::SignedBernoulli,
        }
    }
}

impl RandAlsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(CtdError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.max_rank < 1 || self.max_iter < 1 || self.max_tries < 1 {
            return Err(CtdError::InvalidConfig(
                "max_rank, max_iter and max_tries must be at least 1".into(),
            ));
        }
        if self.sketch_multiplier < 2 {
            return Err(CtdError::InvalidConfig(
                "sketch_multiplier must be at least 2".into(),
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

/// Per-direction random matrices `R_i` of size `M_i x r'`, together with the
/// seed that produced them.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    matrices: Vec<DMatrix<f64>>,
    seed: u64,
    distribution: ProjectionDistribution,
}

impl RandomProjection {
    pub fn matrix(&self, direction: usize) -> &DMatrix<f64> {
        &self.matrices[direction]
    }

    pub fn sketch_size(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn distribution(&self) -> ProjectionDistribution {
        self.distribution
    }
}

/// Draws signed Bernoulli projection matrices: each entry is -1 or +1 with
/// probability 1/2, deterministically from the seed.
pub fn draw_projection(mode_sizes: &[usize], sketch_size: usize, seed: u64) -> RandomProjection {
    draw_projection_with(
        mode_sizes,
        sketch_size,
        seed,
        ProjectionDistribution::SignedBernoulli,
    )
}

pub fn draw_projection_with(
    mode_sizes: &[usize],
    sketch_size: usize,
    seed: u64,
    distribution: ProjectionDistribution,
) -> RandomProjection {
    assert!(sketch_size >= 1, "sketch size must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrices = mode_sizes
        .iter()
        .map(|&m| {
            DMatrix::from_fn(m, sketch_size, |_, _| match distribution {
                ProjectionDistribution::SignedBernoulli => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                ProjectionDistribution::Gaussian => rng.sample(rand_distr::StandardNormal),
            })
        })
        .collect();
    RandomProjection {
        matrices,
        seed,
        distribution,
    }
}

/// Builds the direction-`k` sketched system: `B_k` of size `r' x r_f` with
/// entries `prod_{i != k} <F_i^lt, R_i^lh>`, and the `M_k x r'` right-hand
/// side matrix whose row `j_k` is the sketched `b_{j_k}`.
pub fn build_sketched_system(
    f: &Ctd,
    g: &Ctd,
    proj: &RandomProjection,
    k: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
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
    let r_prime = proj.sketch_size();
    let mut bk = DMatrix::from_element(r_prime, f.rank(), 1.0);
    let mut w = DMatrix::from_element(r_prime, g.rank(), 1.0);
    for i in 0..f.dims() {
        if i == k {
            continue;
        }
        bk.component_mul_assign(&(proj.matrix(i).transpose() * f.factor(i)));
        w.component_mul_assign(&(proj.matrix(i).transpose() * g.factor(i)));
    }
    let mut w_scaled = w;
    for (j, &s) in g.s_values().iter().enumerate() {
        w_scaled.column_mut(j).scale_mut(s);
    }
    let rhs = g.factor(k) * w_scaled.transpose();
    Ok((bk, rhs))
}

pub(crate) struct SketchedSolve {
    /// `r_f x nrhs` coefficient matrix.
    pub coefficients: DMatrix<f64>,
    pub cond: f64,
}

/// Least-squares solution of the rectangular sketched system for all columns
/// of the transposed right-hand side, via a QR factorization followed by an
/// SVD of the triangular factor with relative singular-value cutoff.
pub(crate) fn solve_sketched_transposed(
    bk: &DMatrix<f64>,
    rhs_t: &DMatrix<f64>,
    rcond: f64,
) -> Result<SketchedSolve> {
    if bk.nrows() < bk.ncols() {
        return Err(CtdError::RankDeficient(format!(
            "sketched system has {} rows for {} unknowns",
            bk.nrows(),
            bk.ncols()
        )));
    }
    let qr = bk.clone().qr();
    let q = qr.q();
    let r = qr.r();
    // Singular values of B coincide with those of R.
    let svd = r.svd(true, true);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return Err(CtdError::DegenerateSketch);
    }
    let cutoff = rcond * sigma_max;
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .fold(sigma_max, f64::min);
    let reduced = q.transpose() * rhs_t;
    let coefficients = svd
        .solve(&reduced, cutoff)
        .map_err(|e| CtdError::InvalidConfig(e.to_string()))?;
    Ok(SketchedSolve {
        coefficients,
        cond: sigma_max / sigma_min,
    })
}

/// Least-squares solve of `B_k c_{j_k} = b_{j_k}` for every row of the
/// `M_k x r'` right-hand side matrix; returns the `r_f x M_k` coefficients.
pub fn solve_sketched(
    bk: &DMatrix<f64>,
    bmat: &DMatrix<f64>,
    rcond: f64,
) -> Result<DMatrix<f64>> {
    Ok(solve_sketched_transposed(bk, &bmat.transpose(), rcond)?.coefficients)
}

/// Cached contractions for one `(f, g, projection)` triple.
struct SketchState<'g> {
    f: Ctd,
    g: &'g Ctd,
    g_norm_sq: f64,
    proj: RandomProjection,
    /// Per direction: `R_i^T F_i`.
    pf: Vec<DMatrix<f64>>,
    /// Per direction: `R_i^T G_i` (depends only on the projection).
    pg: Vec<DMatrix<f64>>,
    /// Per direction: `F_i^T F_i` and `F_i^T G_i`, for residuals.
    ff: Vec<DMatrix<f64>>,
    fg: Vec<DMatrix<f64>>,
}

impl<'g> SketchState<'g> {
    fn new(f: Ctd, g: &'g Ctd, proj: RandomProjection) -> Self {
        let mut state = SketchState {
            f,
            g,
            g_norm_sq: g.norm().powi(2),
            proj,
            pf: Vec::new(),
            pg: Vec::new(),
            ff: Vec::new(),
            fg: Vec::new(),
        };
        state.rebuild_f();
        state.rebuild_projection();
        state
    }

    fn rebuild_f(&mut self) {
        let dims = self.f.dims();
        self.ff = (0..dims)
            .map(|k| self.f.factor(k).transpose() * self.f.factor(k))
            .collect();
        self.fg = (0..dims)
            .map(|k| self.f.factor(k).transpose() * self.g.factor(k))
            .collect();
        self.pf = (0..dims)
            .map(|k| self.proj.matrix(k).transpose() * self.f.factor(k))
            .collect();
    }

    fn rebuild_projection(&mut self) {
        let dims = self.f.dims();
        self.pg = (0..dims)
            .map(|k| self.proj.matrix(k).transpose() * self.g.factor(k))
            .collect();
        self.pf = (0..dims)
            .map(|k| self.proj.matrix(k).transpose() * self.f.factor(k))
            .collect();
    }

    fn set_projection(&mut self, proj: RandomProjection) {
        self.proj = proj;
        self.rebuild_projection();
    }

    fn set_f(&mut self, f: Ctd) {
        self.f = f;
        self.rebuild_f();
    }

    fn residual(&self) -> f64 {
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
        ((f_norm_sq - 2.0 * cross + self.g_norm_sq).max(0.0)).sqrt() / self.g_norm_sq.sqrt()
    }

    fn sweep(&mut self, solver_rcond: f64) -> Result<SweepReport> {
        let dims = self.f.dims();
        let r_prime = self.proj.sketch_size();
        let mut cond_numbers = Vec::with_capacity(dims);
        let mut dropped_total = 0;
        for k in 0..dims {
            if self.f.rank() == 0 {
                break;
            }
            let r_f = self.f.rank();
            let mut bk = DMatrix::from_element(r_prime, r_f, 1.0);
            let mut w = DMatrix::from_element(r_prime, self.g.rank(), 1.0);
            for i in 0..dims {
                if i != k {
                    bk.component_mul_assign(&self.pf[i]);
                    w.component_mul_assign(&self.pg[i]);
                }
            }
            for (j, &s) in self.g.s_values().iter().enumerate() {
                w.column_mut(j).scale_mut(s);
            }
            let rhs_t = w * self.g.factor(k).transpose();
            let solve = solve_sketched_transposed(&bk, &rhs_t, solver_rcond)?;
            cond_numbers.push(solve.cond);
            let dropped = self.f.replace_direction(k, solve.coefficients.transpose());
            if dropped > 0 {
                dropped_total += dropped;
                self.rebuild_f();
            } else {
                self.ff[k] = self.f.factor(k).transpose() * self.f.factor(k);
                self.fg[k] = self.f.factor(k).transpose() * self.g.factor(k);
                self.pf[k] = self.proj.matrix(k).transpose() * self.f.factor(k);
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

/// One randomized ALS sweep over all directions. Normalization matches the
/// standard sweep: solved column norms become s-values, columns are divided
/// through.
pub fn randomized_sweep(
    f: &Ctd,
    g: &Ctd,
    proj: &RandomProjection,
    cfg: &RandAlsConfig,
) -> Result<(Ctd, SweepReport)> {
    cfg.validate()?;
    if f.rank() == 0 {
        return Err(CtdError::EmptyRank);
    }
    let mut state = SketchState::new(f.clone(), g, proj.clone());
    let mut report = state.sweep(cfg.solver_rcond)?;
    report.iteration = 1;
    Ok((state.f, report))
}

/// Rank reduction per the randomized ALS algorithm, with the rejection
/// scheme: a sweep that increases the residual is discarded, fresh
/// projections are drawn, and the sweep is rerun; `max_tries` consecutive
/// rejections (or an exhausted sweep budget) increase the rank.
pub fn reduce_randomized(g: &Ctd, cfg: &RandAlsConfig) -> Result<(Ctd, ReduceReport)> {
    reduce_randomized_impl(g, None, cfg)
}

/// [`reduce_randomized`] warm-started from an initial guess.
pub fn reduce_randomized_from(
    g: &Ctd,
    init: &Ctd,
    cfg: &RandAlsConfig,
) -> Result<(Ctd, ReduceReport)> {
    reduce_randomized_impl(g, Some(init), cfg)
}

fn reduce_randomized_impl(
    g: &Ctd,
    init: Option<&Ctd>,
    cfg: &RandAlsConfig,
) -> Result<(Ctd, ReduceReport)> {
    cfg.validate()?;
    if g.rank() == 0 {
        return Err(CtdError::EmptyRank);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let g_norm = g.norm();
    let f = match init {
        Some(f0) if f0.rank() > 0 => f0.clone(),
        _ => Ctd::random(g.mode_sizes(), 1, &mut rng),
    };
    let draw = |rank: usize, rng: &mut ChaCha8Rng| {
        draw_projection_with(
            g.mode_sizes(),
            cfg.sketch_multiplier * rank.max(1),
            rng.random(),
            cfg.distribution,
        )
    };
    let proj = draw(f.rank(), &mut rng);
    let mut state = SketchState::new(f, g, proj);
    let mut res = state.residual();
    let mut best = (state.f.clone(), res);
    let mut sweeps: Vec<SweepReport> = Vec::new();
    let mut total_iter = 0;

    if res < cfg.epsilon {
        let report = ReduceReport {
            sweeps,
            converged: true,
            iterations: 0,
            final_residual: res,
            max_cond: 1.0,
        };
        return Ok((state.f, report));
    }

    loop {
        let mut tries = 1;
        let mut iter = 1;
        while iter <= cfg.max_iter && tries <= cfg.max_tries {
            let f_old = state.f.clone();
            let res_old = res;
            let mut report = state.sweep(cfg.solver_rcond)?;
            total_iter += 1;
            report.iteration = total_iter;
            let cand_res = report.residual;
            if cand_res < cfg.epsilon {
                sweeps.push(report);
                let final_f = state.f;
                let report = finish_report(sweeps, true, cand_res);
                return Ok((final_f, report));
            }
            if res_old < cand_res || state.f.rank() == 0 {
                // Rejected: restore the previous iterate and rerun the sweep
                // with independent random matrices.
                report.accepted = false;
                sweeps.push(report);
                state.set_f(f_old);
                state.set_projection(draw(state.f.rank(), &mut rng));
                tries += 1;
            } else {
                sweeps.push(report);
                res = cand_res;
                if res < best.1 {
                    best = (state.f.clone(), res);
                }
                tries = 1;
            }
            iter += 1;
        }
        if state.f.rank() >= cfg.max_rank {
            break;
        }
        let weight = (res * g_norm * 1e-2).max(f64::MIN_POSITIVE);
        let term = Ctd::random_rank_one(g.mode_sizes(), weight, &mut rng);
        let grown = state.f.add(&term)?;
        let proj = draw(grown.rank(), &mut rng);
        state = SketchState::new(grown, g, proj);
        res = state.residual();
    }
    let report = finish_report(sweeps, false, best.1);
    Ok((best.0, report))
}

fn finish_report(sweeps: Vec<SweepReport>, converged: bool, final_residual: f64) -> ReduceReport {
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

/// Audits the accepted-sweep residual stream: within a rank level the
/// rejection scheme forbids any increase; crossing a rank boundary the
/// residual may move by at most the relative weight of the injected rank-1
/// term (1e-2). Returns the first violating pair, if any.
pub fn first_monotonicity_violation(sweeps: &[SweepReport]) -> Option<(usize, f64, f64)> {
    let mut last: Option<&SweepReport> = None;
    for sweep in sweeps.iter().filter(|s| s.accepted) {
        if let Some(prev) = last {
            let allowed = if sweep.rank > prev.rank {
                prev.residual * 1.011 + 1e-15
            } else {
                prev.residual + 1e-12 * prev.residual.max(1.0)
            };
            if sweep.residual > allowed {
                return Some((sweep.iteration, prev.residual, sweep.residual));
            }
        }
        last = Some(sweep);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn projection_is_deterministic() {
        let a = draw_projection(&[5, 7], 10, 99);
        let b = draw_projection(&[5, 7], 10, 99);
        for k in 0..2 {
            assert_eq!(a.matrix(k), b.matrix(k));
        }
        assert_eq!(a.seed(), 99);
    }

    #[test]
    fn projection_entries_are_signed_units() {
        let p = draw_projection(&[6, 4, 3], 8, 5);
        for k in 0..3 {
            assert!(p.matrix(k).iter().all(|&x| x == 1.0 || x == -1.0));
        }
    }

    #[test]
    fn projection_empirical_mean_is_small() {
        let p = draw_projection(&[100, 100], 50, 17);
        let total: f64 = (0..2).map(|k| p.matrix(k).sum()).sum();
        let count = 2.0 * 100.0 * 50.0;
        let mean = total / count;
        assert!(mean.abs() < 0.05, "empirical mean {mean}");
    }

    #[test]
    fn sketched_system_rank_one_two_directions() {
        let mut r = rng(71);
        let f = Ctd::random(&[4, 6], 1, &mut r);
        let g = Ctd::random(&[4, 6], 2, &mut r);
        let proj = draw_projection(&[4, 6], 7, 3);
        let (bk, bmat) = build_sketched_system(&f, &g, &proj, 0).unwrap();
        assert_eq!((bk.nrows(), bk.ncols()), (7, 1));
        assert_eq!((bmat.nrows(), bmat.ncols()), (4, 7));
        for lh in 0..7 {
            let expected = proj.matrix(1).column(lh).dot(&f.factor(1).column(0));
            assert_abs_diff_eq!(bk[(lh, 0)], expected, epsilon = 1e-13);
        }
    }

    /// Khatri-Rao product of the projection matrices, skipping one direction.
    fn khatri_rao_of(matrices: &[DMatrix<f64>], skip: usize) -> DMatrix<f64> {
        let cols = matrices[0].ncols();
        let rows: usize = matrices
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != skip)
            .map(|(_, m)| m.nrows())
            .product();
        let mut out = DMatrix::zeros(rows, cols);
        for c in 0..cols {
            let mut col = vec![1.0];
            for (k, m) in matrices.iter().enumerate() {
                if k == skip {
                    continue;
                }
                let v = m.column(c);
                let mut next = Vec::with_capacity(col.len() * v.len());
                for &t in &col {
                    for &x in v.iter() {
                        next.push(t * x);
                    }
                }
                col = next;
            }
            out.set_column(c, &DVector::from_vec(col));
        }
        out
    }

    #[test]
    fn sketched_system_matches_khatri_rao_oracle() {
        let mut r = rng(72);
        let f = Ctd::random(&[4, 3, 4], 2, &mut r);
        let g = Ctd::random(&[4, 3, 4], 3, &mut r);
        let proj = draw_projection(&[4, 3, 4], 9, 21);
        for k in 0..3 {
            let (bk, bmat) = build_sketched_system(&f, &g, &proj, k).unwrap();
            let rk = khatri_rao_of(
                &(0..3).map(|i| proj.matrix(i).clone()).collect::<Vec<_>>(),
                k,
            );
            let ak = f.khatri_rao_flatten(k).unwrap();
            assert_abs_diff_eq!((&bk - rk.transpose() * ak).norm(), 0.0, epsilon = 1e-12);

            // RHS oracle: R_k^T applied to the mode-k unfolding of g.
            let dense = g.dense_expand().unwrap();
            let mut gmat = DMatrix::zeros(rk.nrows(), g.mode_sizes()[k]);
            for idx in dense.indices() {
                let mut row = 0;
                for (i, &j) in idx.iter().enumerate() {
                    if i != k {
                        row = row * dense.mode_sizes()[i] + j;
                    }
                }
                gmat[(row, idx[k])] = dense.get(&idx);
            }
            let expected = rk.transpose() * gmat;
            assert_abs_diff_eq!((bmat.transpose() - expected).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sketch_second_moment_approaches_standard_normal_matrix() {
        // E[B_k^T B_k] / r' equals the standard-ALS B_k entrywise.
        let mut r = rng(73);
        let f = Ctd::random(&[4, 4, 4], 2, &mut r);
        let g = Ctd::random(&[4, 4, 4], 2, &mut r);
        let k = 1;
        let r_prime = 10;
        let draws = 2000;
        let mut acc = DMatrix::zeros(2, 2);
        for t in 0..draws {
            let proj = draw_projection(&[4, 4, 4], r_prime, 1000 + t as u64);
            let (bk, _) = build_sketched_system(&f, &g, &proj, k).unwrap();
            acc += bk.transpose() * bk;
        }
        acc /= (draws * r_prime) as f64;
        let (standard, _) = crate::als::build_normal_system(&f, &g, k).unwrap();
        // Deviation measured against the unit-diagonal scale of B_k.
        for i in 0..2 {
            for j in 0..2 {
                let dev = (acc[(i, j)] - standard[(i, j)]).abs();
                assert!(dev < 0.05, "entry ({i},{j}) off by {dev}");
            }
        }
    }

    #[test]
    fn solve_sketched_square_orthogonal() {
        // Rotation matrix: exactly invertible, residual zero.
        let theta = 0.7_f64;
        let bk = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let c_known = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let bmat = (&bk * &c_known).transpose();
        let c = solve_sketched(&bk, &bmat, 1e-14).unwrap();
        assert_abs_diff_eq!((c - c_known).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_sketched_overdetermined_consistent() {
        let mut r = rng(74);
        let bk = DMatrix::from_fn(12, 4, |_, _| r.sample(rand_distr::StandardNormal));
        let c_known = DMatrix::from_fn(4, 5, |_, _| r.sample(rand_distr::StandardNormal));
        let bmat = (&bk * &c_known).transpose();
        let c = solve_sketched(&bk, &bmat, 1e-14).unwrap();
        assert_abs_diff_eq!((c - c_known).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_sketched_truncates_tiny_singular_values() {
        // B with singular values (1, 1e-16): the solution must stay in the
        // retained subspace.
        let u = DMatrix::<f64>::identity(4, 2);
        let v = DMatrix::<f64>::identity(2, 2);
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-16]));
        let bk = u * sigma * v.transpose();
        let bmat = DMatrix::from_fn(1, 4, |_, j| if j == 0 { 1.0 } else { 2.0 });
        let c = solve_sketched(&bk, &bmat, 1e-10).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c[(1, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sweep_keeps_exact_solution_consistent() {
        let mut r = rng(75);
        let g = Ctd::random(&[5, 4, 3], 2, &mut r);
        let cfg = RandAlsConfig::default();
        let proj = draw_projection(&[5, 4, 3], 2 * cfg.sketch_multiplier, 5);
        let start = g.relative_error(&g).unwrap();
        let (_, report) = randomized_sweep(&g, &g, &proj, &cfg).unwrap();
        assert!(report.residual <= start + 1e-10);
        assert!(report.cond_numbers.iter().all(|&c| c.is_finite() && c >= 1.0));
    }

    #[test]
    fn sweep_recovers_rank_one_in_most_trials() {
        let mut hits = 0;
        let trials = 100;
        for seed in 0..trials {
            let mut r = rng(7000 + seed);
            let g = Ctd::random_rank_one(&[6, 5, 4], 2.0, &mut r);
            let f0 = Ctd::random(&[6, 5, 4], 1, &mut r);
            let cfg = RandAlsConfig::default();
            let mut f = f0;
            let mut ok = false;
            for sweep in 0..3 {
                let proj = draw_projection(&[6, 5, 4], 25, 900 + seed * 10 + sweep);
                let (next, report) = randomized_sweep(&f, &g, &proj, &cfg).unwrap();
                f = next;
                if report.residual < 1e-10 {
                    ok = true;
                    break;
                }
            }
            if ok {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/{trials} trials converged");
    }

    #[test]
    fn reduce_randomized_returns_rank_one_target_immediately() {
        let mut r = rng(76);
        let g = Ctd::random_rank_one(&[5, 5, 5], 3.0, &mut r);
        let cfg = RandAlsConfig {
            epsilon: 1e-8,
            rng_seed: 2,
            ..RandAlsConfig::default()
        };
        let (f, report) = reduce_randomized(&g, &cfg).unwrap();
        assert!(report.converged);
        assert_eq!(f.rank(), 1);
    }

    #[test]
    fn reduce_randomized_accepted_residuals_non_increasing() {
        let mut r = rng(77);
        let g = Ctd::random(&[8, 7, 6], 6, &mut r);
        let cfg = RandAlsConfig {
            epsilon: 1e-9,
            max_rank: 5,
            max_iter: 40,
            rng_seed: 4,
            ..RandAlsConfig::default()
        };
        let (_, report) = reduce_randomized(&g, &cfg).unwrap();
        assert!(report.sweeps.iter().any(|s| s.accepted));
        if let Some((iter, prev, got)) = first_monotonicity_violation(&report.sweeps) {
            panic!("accepted residual increased at sweep {iter}: {prev} -> {got}");
        }
    }

    #[test]
    fn invalid_sketch_multiplier_is_rejected() {
        let cfg = RandAlsConfig {
            sketch_multiplier: 1,
            ..RandAlsConfig::default()
        };
        let mut r = rng(78);
        let g = Ctd::random(&[4, 4], 2, &mut r);
        assert!(reduce_randomized(&g, &cfg).is_err());
    }
}
