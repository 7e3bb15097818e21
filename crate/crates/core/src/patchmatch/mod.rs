//! Basic PatchMatch MVS with non-local extensible sampling.

pub mod config;
pub mod cost;
mod engine;
pub mod geometric;
pub mod regions;
mod rng;
pub mod state;

pub use config::PropagationConfig;
pub use cost::{
    aggregate_cost, extension_threshold, matching_cost, top_k_mean, view_weights, CostMatrix,
    PatchParams, RefPatch, ViewWeights, MAX_COST,
};
pub use engine::{random_hypothesis, Color, PatchMatch, PatchMatchState};
pub use geometric::geometric_consistency_cost;
pub use regions::{Direction, Region, RegionShape, SamplingRegions};
pub use state::DepthNormalMap;
