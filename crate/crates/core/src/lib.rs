//! Single-camera object retrieval in a simulated tabletop world: perception,
//! scene-graph memory, viewpoint selection, interactive primitives and the
//! decision loop, with a pluggable reasoner.

pub mod actions;
pub mod active_perception;
pub mod exec;
pub mod harness;
pub mod geometry;
pub mod knowledge;
pub mod memory;
pub mod observation;
pub mod reasoner;
pub mod seed;
pub mod supervisor;
pub mod world;
