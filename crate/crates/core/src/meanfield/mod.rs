//! Deterministic approximations: the NIMFA ODE system and its reductions.

pub mod nimfa;
pub mod ode;
pub mod reductions;

pub use nimfa::{nimfa_solve, uniform_initial, zeta_of, NimfaSolution, ZetaTrack};
pub use ode::{integrate, integrate_with, DenseTrajectory, OdeOptions, OdeSystem, StepStats};
pub use reductions::{
    activity_solve, group_means, hmfa_solve, imfa_solve, metapop_reduce, metapop_solve,
    partition_reduce, Metapopulation, PartitionReduction, PartitionSpec, ReducedSolution,
    ReductionTag, VertexClasses,
};
