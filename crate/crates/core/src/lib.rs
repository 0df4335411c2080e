//! Local density-dependent Markov processes on weighted directed hypergraphs.
//!
//! The crate covers four layers:
//!
//! - [`hypergraph`]: weighted ordered-tail hypergraphs, generators, degree and
//!   regularity reports.
//! - [`models`]: local rate functions `q(φ)` (SIS, Glauber, voter, majority, affine).
//! - [`meanfield`]: the N-intertwined mean-field ODE (NIMFA) and its reductions.
//! - [`stochastic`]: exact simulation, the coupled simulator, the master equation.
//!
//! [`analysis`] turns replica ensembles into error estimates and scaling fits.

pub mod analysis;
pub mod error;
pub mod hypergraph;
pub mod meanfield;
pub mod models;
pub mod stochastic;

pub use error::{Error, Result};
