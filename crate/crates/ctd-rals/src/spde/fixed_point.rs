//! Fixed-point solution of the tensor system with interleaved rank
//! truncation: `U_{i+1} = tau_eps(c (F - K U_i) + U_i)`.

use super::problem::{choose_damping, SpdeProblem};
use crate::als::{self, AlsConfig};
use crate::ctd::Ctd;
use crate::diagnostics::{power_method_norm_with, PowerMethodConfig};
use crate::error::{CtdError, Result};
use crate::rals::{self, RandAlsConfig};

/// Which reduction operator serves as `tau_eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReducerKind {
    Standard,
    Randomized,
}

impl std::fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReducerKind::Standard => write!(f, "standard"),
            ReducerKind::Randomized => write!(f, "randomized"),
        }
    }
}

/// Initializer for the iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Rank-1 with the spatial factor solving the nominal equations
    /// `K_0 u = f`.
    NominalSolve,
    /// Random rank-1.
    Random,
}

#[derive(Debug, Clone)]
pub struct FixedPointConfig {
    /// Target relative residual.
    pub mu: f64,
    pub max_iter: usize,
    /// Damping constant; `None` selects it from the power-method norm.
    pub damping: Option<f64>,
    pub reducer: ReducerKind,
    /// Settings for the standard reducer (its `epsilon` is the truncation
    /// tolerance).
    pub als: AlsConfig,
    /// Settings for the randomized reducer.
    pub rals: RandAlsConfig,
    pub init: InitKind,
    /// Start each truncation from the previous iterate instead of a random
    /// rank-1 guess.
    pub warm_start: bool,
    pub power_method: PowerMethodConfig,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            mu: 1e-3,
            max_iter: 5000,
            damping: None,
            reducer: ReducerKind::Standard,
            als: AlsConfig::default(),
            rals: RandAlsConfig::default(),
            init: InitKind::NominalSolve,
            warm_start: true,
            power_method: PowerMethodConfig::default(),
        }
    }
}

/// One fixed-point iteration record.
#[derive(Debug, Clone)]
pub struct FixedPointRecord {
    pub iteration: usize,
    /// `||F - K U_i|| / ||F||` after the update.
    pub residual: f64,
    pub rank: usize,
    /// Rank of `c D + U` before truncation.
    pub pre_truncation_rank: usize,
    /// Largest kappa(B_k) observed inside this iteration's truncation.
    pub max_cond: f64,
    /// ALS sweeps spent by the truncation.
    pub reduce_sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct FixedPointOutcome {
    pub solution: Ctd,
    pub history: Vec<FixedPointRecord>,
    pub converged: bool,
    pub damping: f64,
    /// Power-method estimate of `||I - c K||`, certified `< 1` before
    /// iterating.
    pub contraction_estimate: f64,
    pub max_rank_seen: usize,
    pub max_cond: f64,
}

/// Runs the damped fixed-point iteration until the residual target, the
/// iteration budget, or divergence (five consecutive growth steps beyond 10%
/// each).
pub fn fixed_point_solve(
    problem: &SpdeProblem,
    cfg: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    if !(cfg.mu > 0.0) {
        return Err(CtdError::InvalidConfig("mu must be positive".into()));
    }
    if cfg.max_iter < 1 {
        return Err(CtdError::InvalidConfig("max_iter must be at least 1".into()));
    }
    let c = match cfg.damping {
        Some(c) if c > 0.0 => c,
        Some(c) => {
            return Err(CtdError::InvalidConfig(format!(
                "damping must be positive, got {c}"
            )))
        }
        None => choose_damping(problem, &cfg.power_method)?,
    };
    // Contraction certificate, required for any damping source.
    let shifted = problem.shifted_operator(c);
    let contraction = power_method_norm_with(&shifted, &cfg.power_method)?.norm;
    if !(contraction < 1.0) {
        return Err(CtdError::DampingSearch(format!(
            "||I - cK|| estimate {contraction} is not a contraction (c = {c})"
        )));
    }

    let f_norm = problem.rhs.norm();
    let mut u = match cfg.init {
        InitKind::NominalSolve => {
            let spatial = problem.nominal_solution();
            let mut vectors = vec![spatial];
            for &m in &problem.mode_sizes()[1..] {
                vectors.push(nalgebra::DVector::from_element(m, 1.0));
            }
            Ctd::from_rank_one(vectors, 1.0)?
        }
        InitKind::Random => {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
                cfg.als.rng_seed ^ 0xf1ed,
            );
            Ctd::random(problem.mode_sizes(), 1, &mut rng)
        }
    };

    let mut defect = problem.rhs.sub(&problem.operator.apply(&u)?)?;
    let mut res = defect.norm() / f_norm;
    let mut history = Vec::new();
    let mut growth_streak = 0;
    let mut iteration = 0;
    while res > cfg.mu && iteration < cfg.max_iter {
        iteration += 1;
        let update = defect.scale(c).add(&u)?;
        let pre_truncation_rank = update.rank();
        let (next, max_cond, sweeps) = truncate(&update, &u, cfg, iteration)?;
        u = next;
        defect = problem.rhs.sub(&problem.operator.apply(&u)?)?;
        let res_new = defect.norm() / f_norm;
        if res_new > res * 1.10 {
            growth_streak += 1;
            if growth_streak >= 5 {
                return Err(CtdError::Divergence {
                    iteration,
                    residual: res_new,
                });
            }
        } else {
            growth_streak = 0;
        }
        res = res_new;
        history.push(FixedPointRecord {
            iteration,
            residual: res,
            rank: u.rank(),
            pre_truncation_rank,
            max_cond,
            reduce_sweeps: sweeps,
        });
    }
    let max_rank_seen = history.iter().map(|r| r.rank).max().unwrap_or(u.rank());
    let max_cond = history.iter().map(|r| r.max_cond).fold(1.0_f64, f64::max);
    Ok(FixedPointOutcome {
        converged: res <= cfg.mu,
        solution: u,
        history,
        damping: c,
        contraction_estimate: contraction,
        max_rank_seen,
        max_cond,
    })
}

fn truncate(
    target: &Ctd,
    previous: &Ctd,
    cfg: &FixedPointConfig,
    iteration: usize,
) -> Result<(Ctd, f64, usize)> {
    match cfg.reducer {
        ReducerKind::Standard => {
            let als_cfg = AlsConfig {
                rng_seed: cfg.als.rng_seed.wrapping_add(iteration as u64),
                ..cfg.als.clone()
            };
            let (reduced, report) = if cfg.warm_start {
                als::reduce_from(target, previous, &als_cfg)?
            } else {
                als::reduce(target, &als_cfg)?
            };
            Ok((reduced, report.max_cond, report.iterations))
        }
        ReducerKind::Randomized => {
            let rals_cfg = RandAlsConfig {
                rng_seed: cfg.rals.rng_seed.wrapping_add(iteration as u64),
                ..cfg.rals.clone()
            };
            let (reduced, report) = if cfg.warm_start {
                rals::reduce_randomized_from(target, previous, &rals_cfg)?
            } else {
                rals::reduce_randomized(target, &rals_cfg)?
            };
            Ok((reduced, report.max_cond, report.iterations))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spde::kl::kl_eigenpairs;
    use crate::spde::mesh::build_mesh;
    use crate::spde::problem::build_problem;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn toy_problem(sigma_a: f64) -> SpdeProblem {
        let mesh = build_mesh(4).unwrap();
        let kl = kl_eigenpairs(&mesh, 2.0 / 3.0, 2).unwrap();
        build_problem(mesh, kl, 2, 0.1, sigma_a).unwrap()
    }

    fn toy_config() -> FixedPointConfig {
        FixedPointConfig {
            mu: 1e-4,
            max_iter: 400,
            als: AlsConfig {
                epsilon: 1e-6,
                max_rank: 10,
                max_iter: 30,
                ..AlsConfig::default()
            },
            ..FixedPointConfig::default()
        }
    }

    #[test]
    fn deterministic_coefficient_converges_to_rank_one() {
        let p = toy_problem(0.0);
        // Fresh-start truncation re-finds the minimal rank once the random
        // initial component has decayed.
        let cfg = FixedPointConfig {
            init: InitKind::Random,
            warm_start: false,
            mu: 1e-7,
            max_iter: 600,
            ..toy_config()
        };
        let out = fixed_point_solve(&p, &cfg).unwrap();
        assert!(out.converged);
        assert_eq!(out.solution.rank(), 1);
        // Spatial slice solves the nominal system.
        let nominal = p.nominal_solution();
        let dense = out.solution.dense_expand().unwrap();
        let n = p.mesh.num_interior();
        for i in 0..n {
            assert_abs_diff_eq!(
                dense.get(&[i, 0, 0]),
                nominal[i],
                epsilon = 1e-3 * nominal.abs().max()
            );
        }
    }

    #[test]
    fn converged_tensor_matches_dense_grid_solve() {
        let p = toy_problem(0.01);
        let cfg = toy_config();
        let out = fixed_point_solve(&p, &cfg).unwrap();
        assert!(out.converged);
        let dense = out.solution.dense_expand().unwrap();
        let n = p.mesh.num_interior();
        let m = p.abscissas.len();
        let to_dense = |s: &nalgebra_sparse::csr::CsrMatrix<f64>| {
            let mut out = DMatrix::zeros(s.nrows(), s.ncols());
            for (i, j, v) in s.triplet_iter() {
                out[(i, j)] += *v;
            }
            out
        };
        let mut err_sq = 0.0;
        let mut norm_sq = 0.0;
        for j1 in 0..m {
            for j2 in 0..m {
                let a = to_dense(&p.stiffness[0])
                    + to_dense(&p.stiffness[1]) * p.abscissas[j1]
                    + to_dense(&p.stiffness[2]) * p.abscissas[j2];
                let exact = a.lu().solve(&p.load).unwrap();
                let got = DVector::from_fn(n, |i, _| dense.get(&[i, j1, j2]));
                err_sq += (&got - &exact).norm_squared();
                norm_sq += exact.norm_squared();
            }
        }
        let rel = (err_sq / norm_sq).sqrt();
        assert!(rel <= 5.0 * cfg.mu, "dense-grid error {rel}");
    }

    #[test]
    fn rank_growth_law_holds_before_truncation() {
        let p = toy_problem(0.01);
        let cfg = toy_config();
        let out = fixed_point_solve(&p, &cfg).unwrap();
        let d = p.stochastic_dims();
        let r_f = p.rhs.rank();
        let mut prev_rank = 1; // rank-1 initializer
        for record in &out.history {
            assert_eq!(
                record.pre_truncation_rank,
                r_f + (d + 2) * prev_rank,
                "iteration {}",
                record.iteration
            );
            prev_rank = record.rank;
        }
    }

    #[test]
    fn residual_history_trend_is_downward() {
        let p = toy_problem(0.01);
        let cfg = toy_config();
        let out = fixed_point_solve(&p, &cfg).unwrap();
        for pair in out.history.windows(2) {
            assert!(
                pair[1].residual <= pair[0].residual * 1.10,
                "residual grew more than 10%: {} -> {}",
                pair[0].residual,
                pair[1].residual
            );
        }
        assert!(out.contraction_estimate < 1.0);
    }

    #[test]
    fn explicit_damping_is_verified() {
        let p = toy_problem(0.01);
        let cfg = FixedPointConfig {
            damping: Some(1e6),
            ..toy_config()
        };
        assert!(matches!(
            fixed_point_solve(&p, &cfg),
            Err(CtdError::DampingSearch(_))
        ));
    }
}
