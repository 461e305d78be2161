//! Condition-number computation, power-method operator norms, and empirical
//! checks of the matrix inequalities behind the randomized reducer.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::als::{self, AlsConfig};
use crate::ctd::Ctd;
use crate::error::{CtdError, Result};
use crate::operator::SeparatedOperator;

/// Extreme singular values of a matrix at a relative cutoff.
#[derive(Debug, Clone, Copy)]
pub struct CondReport {
    pub sigma_max: f64,
    /// Smallest singular value above `rcond * sigma_max`.
    pub sigma_min: f64,
    pub kappa: f64,
    /// Number of singular values above the cutoff.
    pub numerical_rank: usize,
}

/// Condition number from a full singular value decomposition.
pub fn condition_number(a: &DMatrix<f64>, rcond: f64) -> Result<CondReport> {
    let svd = a.clone().svd(false, false);
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return Err(CtdError::ZeroMatrix);
    }
    let cutoff = rcond * sigma_max;
    let retained: Vec<f64> = svd
        .singular_values
        .iter()
        .copied()
        .filter(|&s| s > cutoff)
        .collect();
    let sigma_min = retained.iter().copied().fold(sigma_max, f64::min);
    Ok(CondReport {
        sigma_max,
        sigma_min,
        kappa: sigma_max / sigma_min,
        numerical_rank: retained.len(),
    })
}

fn gram_like_spectrum(a: &DMatrix<f64>, label: &str) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(CtdError::NotGramLike(format!("{label} is not square")));
    }
    let scale = a.norm().max(1.0);
    if (a - a.transpose()).norm() > 1e-10 * scale {
        return Err(CtdError::NotGramLike(format!("{label} is not symmetric")));
    }
    for i in 0..a.nrows() {
        if (a[(i, i)] - 1.0).abs() > 1e-10 {
            return Err(CtdError::NotGramLike(format!(
                "{label} diagonal entry {i} is {}",
                a[(i, i)]
            )));
        }
    }
    let mut eigs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    if eigs.last().copied().unwrap_or(0.0) < -1e-9 * scale {
        return Err(CtdError::NotGramLike(format!(
            "{label} has a negative eigenvalue {}",
            eigs.last().unwrap()
        )));
    }
    Ok(eigs.into_iter().map(|e| e.max(0.0)).collect())
}

/// Checks the Hadamard-product singular value bounds for two Gram matrices
/// with unit diagonal:
/// `sigma_min(B) <= sigma_min(A*B) <= sigma_max(A*B) <= sigma_max(B)`,
/// and `kappa(A*B) <= kappa(B)` when `B` is positive definite.
pub fn check_hadamard_gram_bound(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    let eig_b = gram_like_spectrum(b, "B")?;
    gram_like_spectrum(a, "A")?;
    if a.nrows() != b.nrows() {
        return Err(CtdError::ShapeMismatch {
            expected: vec![a.nrows()],
            got: vec![b.nrows()],
        });
    }
    let hadamard = a.component_mul(b);
    let eig_h = gram_like_spectrum(&hadamard, "A*B")?;
    let (smax_b, smin_b) = (eig_b[0], *eig_b.last().unwrap());
    let (smax_h, smin_h) = (eig_h[0], *eig_h.last().unwrap());
    let slack = 1e-9 * smax_b.max(1.0);
    let mut ok = smin_b <= smin_h + slack && smax_h <= smax_b + slack;
    // Positive definite B additionally bounds the condition number.
    let n = b.nrows() as f64;
    if smin_b > n * f64::EPSILON * smax_b {
        let kappa_b = smax_b / smin_b;
        let kappa_h = smax_h / smin_h.max(f64::MIN_POSITIVE);
        ok = ok && kappa_h <= kappa_b * (1.0 + 1e-9) + 1e-9;
    }
    Ok(ok)
}

/// Checks the rectangular-product condition number inequality
/// `kappa(AB) <= kappa(A) * sigma_1(B) / sigma_min(P_{A^T}(B))`, with the
/// projection of `B` onto the row space of `A` formed explicitly.
pub fn check_product_cond_bound(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    let (r_prime, n) = (a.nrows(), a.ncols());
    let r = b.ncols();
    if b.nrows() != n || r > r_prime || r_prime > n {
        return Err(CtdError::ShapeMismatch {
            expected: vec![r_prime, n, n],
            got: vec![a.nrows(), a.ncols(), b.nrows()],
        });
    }
    let rank_tol = 1e-12;
    let cond_a = condition_number(a, 0.0)?;
    if cond_a.sigma_min <= rank_tol * cond_a.sigma_max {
        return Err(CtdError::RankDeficient("A is numerically rank deficient".into()));
    }
    let cond_b = condition_number(b, 0.0)?;
    if cond_b.sigma_min <= rank_tol * cond_b.sigma_max {
        return Err(CtdError::RankDeficient("B is numerically rank deficient".into()));
    }
    let ab = a * b;
    let cond_ab = condition_number(&ab, 0.0)?;
    // P_{A^T}(B) = A^T (A A^T)^{-1} A B.
    let aat = a * a.transpose();
    let chol = aat
        .cholesky()
        .ok_or_else(|| CtdError::RankDeficient("A A^T is not positive definite".into()))?;
    let projected = a.transpose() * chol.solve(&(a * b));
    let cond_p = condition_number(&projected, 0.0)?;
    let bound = cond_a.kappa * cond_b.sigma_max / cond_p.sigma_min;
    Ok(cond_ab.kappa <= bound * (1.0 + 1e-9) + 1e-9)
}

/// Power-method settings: the iterate is kept as a CTD with a rank cap and
/// per-step ALS truncation, so norms of large operators can be estimated
/// without densifying.
#[derive(Debug, Clone)]
pub struct PowerMethodConfig {
    /// Relative change of successive estimates at which to stop.
    pub tol: f64,
    pub max_iter: usize,
    /// ALS truncation tolerance for the iterate.
    pub trunc_eps: f64,
    /// Rank cap for the iterate.
    pub rank_cap: usize,
    pub seed: u64,
}

impl Default for PowerMethodConfig {
    fn default() -> Self {
        PowerMethodConfig {
            tol: 1e-4,
            max_iter: 200,
            trunc_eps: 1e-6,
            rank_cap: 20,
            seed: 0x9e3779b9,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PowerMethodEstimate {
    pub norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Estimates the largest singular value of the flattened operator by power
/// iteration on a CTD iterate, truncating between steps. Symmetric operators
/// iterate on the operator itself; general operators on its Gram form.
pub fn power_method_norm(
    op: &SeparatedOperator,
    tol: f64,
    max_iter: usize,
) -> Result<PowerMethodEstimate> {
    power_method_norm_with(
        op,
        &PowerMethodConfig {
            tol,
            max_iter,
            ..PowerMethodConfig::default()
        },
    )
}

pub fn power_method_norm_with(
    op: &SeparatedOperator,
    cfg: &PowerMethodConfig,
) -> Result<PowerMethodEstimate> {
    if op.mode_sizes().iter().any(|&m| m == 0) {
        return Err(CtdError::InvalidConfig("operator has an empty direction".into()));
    }
    let symmetric = op.is_symmetric(1e-12);
    let op_t = if symmetric { None } else { Some(op.transpose()) };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = Ctd::random(op.mode_sizes(), 1, &mut rng);
    let als_cfg = AlsConfig {
        epsilon: cfg.trunc_eps,
        stuck_tol: cfg.trunc_eps * 1e-3,
        max_rank: cfg.rank_cap,
        max_iter: 25,
        rng_seed: cfg.seed ^ 0x5555_5555,
        solver_rcond: 1e-14,
    };
    let mut estimate = 0.0_f64;
    for it in 1..=cfg.max_iter {
        let y = truncated_apply(op, &x, &als_cfg)?;
        let (next_estimate, next_x) = match &op_t {
            None => {
                let norm = y.norm();
                (norm, y)
            }
            Some(t) => {
                let z = truncated_apply(t, &y, &als_cfg)?;
                let norm = z.norm();
                (norm.sqrt(), z)
            }
        };
        if next_estimate == 0.0 {
            // Iterate annihilated; restart from a fresh random tensor.
            x = Ctd::random(op.mode_sizes(), 1, &mut rng);
            continue;
        }
        let rel_change = (next_estimate - estimate).abs() / next_estimate;
        x = next_x.scale(1.0 / next_x.norm());
        estimate = next_estimate;
        if it > 1 && rel_change < cfg.tol {
            return Ok(PowerMethodEstimate {
                norm: estimate,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(PowerMethodEstimate {
        norm: estimate,
        converged: false,
        iterations: cfg.max_iter,
    })
}

fn truncated_apply(op: &SeparatedOperator, x: &Ctd, als_cfg: &AlsConfig) -> Result<Ctd> {
    let y = op.apply(x)?;
    if y.rank() <= als_cfg.max_rank || y.rank() == 0 {
        return Ok(y);
    }
    let scale = y.norm();
    if scale == 0.0 {
        return Ok(y);
    }
    let (reduced, _) = als::reduce_from(&y, x, als_cfg)?;
    Ok(reduced)
}
