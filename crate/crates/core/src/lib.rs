//! Finds every pair of transport assignments on a road network that could
//! drive part of their routes together as a platoon.
//!
//! The search has two phases. A broad phase derives cheap per-assignment
//! features (projection intervals and orientation signatures) and discards
//! pairs whose features prove they can never meet; no platooning pair is ever
//! discarded. A narrow phase then runs the exact coordination test on the
//! survivors.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix it to `f64`, which the command-line tool uses.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignments;
pub mod culling;
pub mod error;
pub mod exact_match;
pub mod features;
pub mod report;
pub mod road_network;
pub mod scalar;
pub mod scenario;

pub use assignments::{
    compute_bounds, implements, is_feasible, window_width, AssignmentFile, BoundedRoute, Trajectory,
    TransportAssignment,
};
pub use culling::{
    apply_stage, greedy_order, interval_positives, or_compose, run_pipeline, signature_positives, CandidateSet,
    Classifier, Pair, StagePlan,
};
pub use error::{Error, Result};
pub use exact_match::{coordination, coordination_min_distance, ground_truth, ExactMatcher, PairVerdict};
pub use features::{
    alpha_vector, extract_all, orientation_signature, project_interval, FeatureConfig, FeatureSet, FeatureVector,
    IntervalFeature, OrientationSignature, ProjectionVector,
};
pub use road_network::{CoordinateMode, EdgeId, NodeId, Point, RoadNetwork};
pub use scalar::Scalar;
pub use scenario::{generate_assignments, generate_network, load_assignments, NetworkSpec, Scenario, ScenarioConfig};

pub type RoadNetwork64 = RoadNetwork<f64>;
pub type RoadNetwork32 = RoadNetwork<f32>;
pub type TransportAssignment64 = TransportAssignment<f64>;
pub type TransportAssignment32 = TransportAssignment<f32>;
pub type BoundedRoute64 = BoundedRoute<f64>;
pub type BoundedRoute32 = BoundedRoute<f32>;
pub type FeatureSet64 = FeatureSet<f64>;
pub type FeatureSet32 = FeatureSet<f32>;
pub type PairVerdict64 = PairVerdict<f64>;
pub type PairVerdict32 = PairVerdict<f32>;
pub type Scenario64 = Scenario<f64>;
pub type Scenario32 = Scenario<f32>;
