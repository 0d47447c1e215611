//! Active identification of an unknown linear dynamical system from a finite
//! hypothesis class.
//!
//! The crate covers the full pipeline:
//!
//! * [`lti`] — candidate systems, Gaussian process noise, trajectory
//!   simulation, and precision-weighted prediction errors.
//! * [`geometry`] — block-Toeplitz distinguishability kernels, closed-form
//!   expected block gaps, and persistent-excitation coefficients.
//! * [`bounds`] — instance-specific sample-complexity lower bounds and the
//!   benefit diagnostic comparing optimal against isotropic excitation.
//! * [`design`] — the simplex mixture eigenvalue solver and the max-min
//!   excitation designs (oracle and certainty-equivalence).
//! * [`identify`] — the sequential identification loop with exponential
//!   weights, `rho`-mixed excitation, and the log-likelihood stopping rule.
//! * [`harness`] — built-in scenarios, the Monte Carlo experiment runner,
//!   and CSV export.

pub mod bounds;
pub mod design;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod identify;
pub mod lti;

pub use bounds::{benefit, lower_bound_lhs, min_horizon, BenefitDiagnostic, LowerBoundReport};
pub use design::{
    design_ce_input, design_oracle_input, minimize_mixture, ExcitationPlan, MixtureSolution,
};
pub use error::{Error, Result};
pub use geometry::{
    build_profile, build_toeplitz, eta_bound, expected_error, pe_algorithm, pe_optimal, pe_random,
    sigma_delta, DistinguishabilityProfile, PECoefficients, ToeplitzPair,
};
pub use identify::{
    exp_weights, run_episodes, run_identification, stopping_episode_bound, termination_check,
    EpisodeRecord, IdentificationResult, RhoSchedule, StrategyConfig, StrategyKind,
};
pub use lti::{
    prediction_error, sample_isotropic_input, simulate, simulate_noiseless, LinearSystem,
    NoiseModel, Scenario, SimRng, Trajectory,
};
