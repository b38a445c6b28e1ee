//! Continuous-time g-computation for a bivariate counting process (actions
//! and longitudinal events) driven by a finite latent confounder.
//!
//! The crate simulates factual and counterfactual worlds, filters the latent
//! state from observed histories, and evaluates the g-computation formula for
//! `Law(Y^g)` two ways (grid quadrature and thinning Monte Carlo) so both can
//! be checked against a direct counterfactual oracle.

// Range checks are written as `!(x < y)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filter;
pub mod gformula;
pub mod harness;
pub mod hazards;
pub mod outcome;
pub mod plans;
pub mod scenario;
pub mod simulator;
pub mod trajectory;

pub use error::{GctError, Result};
pub use filter::{
    conditional_law_y, filter_event, filter_interval, marginal_intensity, marginal_l_survival, run_filter,
    run_filter_checkpoint, FilterCheckpoint, PosteriorState,
};
pub use gformula::{
    b_curve, counterfactual_law_quadrature, g_formula_mc, g_formula_mc_detailed, g_formula_quadrature,
    no_explosion_mass, poisson_tail, McResult, QuadratureResult,
};
pub use harness::{tv_distance, verify, VerifyParams, VerifyReport};
pub use hazards::{cumulative_hazard, product_integral, sample_next_event, HazardAtom, HazardMeasure, HazardSegment};
pub use outcome::OutcomeDist;
pub use plans::{apply_plan, evaluability_check, is_consistent, next_planned_action, EvaluabilityReport, Plan};
pub use scenario::{Caps, ScenarioConfig, ScenarioModel, Tolerances};
pub use simulator::{
    counterfactual_oracle, empirical_outcome_dist, sample_rng, simulate_batch, simulate_counterfactual,
    simulate_factual, SimMode, WorldSample,
};
pub use trajectory::{merge, Event, History, Mark, Trajectory};
