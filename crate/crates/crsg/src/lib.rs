//! Carrier-relationship scene graphs for indoor object search.
//!
//! The library models rooms, furniture that can hold everyday objects
//! (carriers) and the objects resting on them, plus a fixed-policy navigator
//! that explores carriers and confirms targets, a graph adaptation layer that
//! keeps carried sets current as the world changes, and a deterministic 2D
//! simulated world for running long task sequences end to end.
//!
//! Numeric kernels (geometry, feature math, policy scoring) are generic over
//! the scalar type through [`num::Real`]; the pipeline itself runs on `f64`
//! via the aliases exported at the crate root.

pub mod adaptation;
pub mod commands;
pub mod features;
pub mod geometry;
pub mod metrics;
pub mod navigation;
pub mod num;
pub mod providers;
pub mod render;
pub mod scenegraph;
pub mod simworld;
pub mod trace;

/// Scalar type used by the concrete pipeline.
pub type Scalar = f64;

pub type Vec2 = geometry::Vec2<Scalar>;
pub type Vec3 = geometry::Vec3<Scalar>;
pub type Aabb = geometry::Aabb<Scalar>;
pub type Pose = geometry::Pose<Scalar>;
pub type RoomPolygon = geometry::RoomPolygon<Scalar>;
pub type OccupancyGrid = geometry::OccupancyGrid<Scalar>;
pub type SensorSpec = geometry::SensorSpec<Scalar>;
pub type Path = geometry::Path<Scalar>;
pub type PlanOutcome = geometry::PlanOutcome<Scalar>;
pub type FeatureVector = features::FeatureVector<Scalar>;
pub type RgbHistogram = features::RgbHistogram<Scalar>;
pub type PolicyParams = navigation::PolicyParams<Scalar>;

/// Identifier of an object in a scene or graph.
pub type ObjectId = String;
/// Identifier of a room.
pub type RoomId = String;

pub use features::Swatch;
pub use scenegraph::{CarrierRelationshipSceneGraph, ConstructionParams, SceneObject};
pub use simworld::WorldModel;
