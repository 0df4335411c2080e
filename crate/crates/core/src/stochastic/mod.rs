//! Exact simulation of the Markov process, the coupled simulator and the master equation.

pub mod master;
pub mod replicas;
pub mod simulate;
pub mod state;

pub use master::{
    master_solve, point_distribution, product_distribution, product_index, product_states,
    MasterSolution, MAX_PRODUCT_STATES,
};
pub use replicas::{replica_rng, run_replicas};
pub use simulate::{simulate, simulate_coupled, CoupledRun, SimOptions, Simulator};
pub use state::{Event, PopulationState, Trajectory};
