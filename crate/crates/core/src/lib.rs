//! Energy-aware distributed processing of Earth-observation frames across a
//! ring of LEO satellites.
//!
//! The crate models the orbit and the ground-station link, builds per-slot
//! ring topologies, evaluates scatter/processing/gather energies, and solves
//! for the allocation, compression ratios and CPU frequencies that minimize
//! energy under processing, downlink and ISL rate constraints.

pub mod energy;
pub mod linkbudget;
pub mod optimizer;
pub mod orbital;
pub mod output;
pub mod scenario;
pub mod topology;

pub use energy::{check_feasibility, total_energy, ComputeConfig, Plan, ProblemInstance};
pub use optimizer::{bcd_solve, solve, Solution, SolverSettings, Strategy};
pub use scenario::{load_scenario, ScenarioConfig};
