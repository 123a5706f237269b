//! Matching costs, the Hungarian solver and the identity-constrained
//! assignment of ground truth to track slots, object slots or background.

mod constrained;
mod cost;
mod hungarian;

pub use constrained::{constrained_assignment, Assignment, MatchedPair, Provenance, TrackSlot};
pub use cost::{box_cost, match_cost, CostWeights};
pub use hungarian::{hungarian, CostMatrix, Solution};
