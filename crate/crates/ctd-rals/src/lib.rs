//! Canonical tensor decomposition (CTD) rank reduction by standard and
//! randomized alternating least squares, conditioning diagnostics, and a
//! stochastic elliptic PDE application solved by fixed-point iteration with
//! interleaved rank truncation.
//!
//! Start with [`Ctd`] for the tensor format, [`als::reduce`] and
//! [`rals::reduce_randomized`] for the two reducers, and [`spde`] for the
//! PDE pipeline. The `examples/` directory contains one runnable example per
//! capability; the `ctd-rals` binary drives the batch experiments.

pub mod als;
pub mod ctd;
pub mod diagnostics;
pub mod error;
pub mod operator;
pub mod rals;
pub mod spde;

pub use als::{als_sweep, reduce, AlsConfig, ReduceReport, SweepReport};
pub use ctd::{Ctd, DenseTensor, DEFAULT_ORACLE_CAP};
pub use diagnostics::{condition_number, power_method_norm, CondReport};
pub use error::{CtdError, Result};
pub use operator::{OperatorBlock, SeparatedOperator};
pub use rals::{
    build_sketched_system, draw_projection, reduce_randomized, solve_sketched, ProjectionDistribution,
    RandAlsConfig, RandomProjection,
};
