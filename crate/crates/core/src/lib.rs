//! Bootstrap bias correction for sample means collected by bandit
//! algorithms, together with exact and large-deviation oracles for the
//! explore-then-commit bias.
//!
//! The pipeline is: [`simulator::run_experiment`] produces a
//! [`simulator::BanditLog`]; [`debias::debias`] replays the same policy in a
//! bootstrap world built from that log and subtracts the average bias seen
//! there; [`estimators`] provides the IPW/AIPW baselines; [`theory`] holds the
//! closed forms used to validate everything; [`harness`] runs replicated
//! experiment plans.

pub mod bootstrap;
pub mod cli;
pub mod debias;
pub mod distributions;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod policies;
pub mod rng;
pub mod simulator;
pub mod theory;

pub use bootstrap::{build_world, BootstrapKind, BootstrapSpec, BootstrapWorld};
pub use debias::{debias, DebiasReport};
pub use distributions::RewardDistribution;
pub use harness::{run_plan, CellResult, ExperimentPlan};
pub use policies::{PolicySpec, PolicyState};
pub use rng::RngStream;
pub use simulator::{run_experiment, summarize, ArmSummary, BanditLog, World};
