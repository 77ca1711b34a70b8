//! Exact analysis of weighted Markov decision processes: optimal expected
//! accumulated weight, variance-minimal schedulers among expectation-optimal
//! ones, and the maximal variance-penalized expectation `E - lambda * V`
//! together with an optimal finite-memory scheduler.
//!
//! All computations use arbitrary-precision rational arithmetic; results are
//! exact fractions, never floating-point approximations.

pub mod expectation;
pub mod gadget;
pub mod model;
pub mod numeric;
pub mod scheduler;
pub mod variance;
pub mod vpe;

pub use expectation::{prune_to_optimal, solve_expectation, Direction, ExpectationSolution};
pub use gadget::{build_gadget, f_bound, GadgetInstance};
pub use model::{classify_ec, find_end_components, EcClass, EcKind, EndComponent, Mdp};
pub use numeric::{parse_rational, solve_linear_system, LinearSystem, Rational};
pub use scheduler::{
    convex_combination, frequencies, mixture_moments, moments_from_distribution, simulate,
    terminal_distribution, to_weight_based, FrequencyTable, MemorylessPolicy,
    MemorylessScheduler, MomentPair, SimulationConfig, SimulationSummary, TerminalDistribution,
    WeightBasedScheduler,
};
pub use variance::{min_variance_among_optimal, VarianceMinSolution};
pub use vpe::{
    maximize_vpe, saturation_point, threshold, unfold, vpe_of_scheduler, SaturationConstants,
    ThresholdOutcome, UnfoldedMdp, VpeOptions, VpeReport,
};
