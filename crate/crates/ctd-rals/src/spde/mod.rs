//! Stochastic elliptic PDE application: a diffusion problem on the unit
//! square whose coefficient carries a truncated Karhunen-Loeve expansion,
//! collocated on a Gauss-Legendre tensor grid and solved as a separated
//! tensor system by damped fixed-point iteration with interleaved rank
//! truncation.

pub mod assemble;
pub mod fixed_point;
pub mod kl;
pub mod mesh;
pub mod problem;
pub mod quadrature;

pub use assemble::{assemble_load, assemble_stiffness};
pub use fixed_point::{
    fixed_point_solve, FixedPointConfig, FixedPointOutcome, FixedPointRecord, InitKind,
    ReducerKind,
};
pub use kl::{kl_eigenpairs, kl_eigenvalues_1d, KlExpansion};
pub use mesh::{build_mesh, FemMesh};
pub use problem::{build_problem, choose_damping, SpdeProblem};
pub use quadrature::{gauss_legendre, gauss_legendre_unit};
