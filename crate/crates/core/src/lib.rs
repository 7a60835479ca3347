//! Delay-dependent fuzzy H-infinity filter design for Takagi-Sugeno fuzzy
//! systems with time-varying state delay.
//!
//! The crate assembles the synthesis and analysis LMIs, solves them with a
//! bundled dense primal-dual interior-point method, recovers filter
//! matrices, bisects for the minimum attenuation level, and validates
//! designs by delay-differential simulation.

pub mod error;
pub mod lmi;
pub mod matrix_serde;
pub mod model;
pub mod sdp;
pub mod simulation;
pub mod synthesis;
pub mod verification;

pub use error::{Error, Result};
pub use model::{
    augment, AugmentedSystem, DelaySpec, FuzzyFilter, Grade, MembershipSpec, ProductBounds,
    RuleMatrices, TsDelayModel, Violation,
};

/// Example 1 plant (two rules, scalar disturbance/measurement/output).
pub const EXAMPLE1_JSON: &str = include_str!("../data/example1.json");

pub fn example1() -> TsDelayModel {
    TsDelayModel::from_json(EXAMPLE1_JSON).expect("bundled example model parses")
}
