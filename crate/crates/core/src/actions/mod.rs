//! Physical primitives on the world: open, close, pick-and-place, rotate
//! and the final retrieval.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Pose, Vec3};
use crate::observation::{CameraIntrinsics, Observation};
use crate::world::{ContainerState, WorldError, WorldState};

/// Arm base position; everything the arm touches must lie within `REACH` of it.
pub const ARM_BASE: Vec3 = Vec3::new(0.0, -0.55, 0.0);
pub const REACH: f64 = 0.9;
/// Offset of the handle probe point in front of the handle face.
const HANDLE_PROBE: f64 = 0.005;
/// Gap kept around objects when putting something down.
const PLACE_CLEARANCE: f64 = 0.01;
/// Grid step when searching the table for a free spot.
const PLACE_STEP: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PrimitiveKind {
    Open,
    Close,
    PickPlace,
    Rotate,
    Retrieve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub object_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub destination: Option<Pose>,
    /// Yaw increment for Rotate, radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_region: Option<Aabb>,
}

impl Primitive {
    pub fn open(id: impl Into<String>) -> Self {
        Self::bare(PrimitiveKind::Open, id)
    }

    pub fn close(id: impl Into<String>) -> Self {
        Self::bare(PrimitiveKind::Close, id)
    }

    pub fn pick_place(id: impl Into<String>, destination: Pose) -> Self {
        Self { destination: Some(destination), ..Self::bare(PrimitiveKind::PickPlace, id) }
    }

    pub fn rotate(id: impl Into<String>, angle: f64) -> Self {
        Self { angle: Some(angle), ..Self::bare(PrimitiveKind::Rotate, id) }
    }

    pub fn retrieve(id: impl Into<String>, goal_region: Aabb) -> Self {
        Self { goal_region: Some(goal_region), ..Self::bare(PrimitiveKind::Retrieve, id) }
    }

    fn bare(kind: PrimitiveKind, id: impl Into<String>) -> Self {
        Self { kind, object_id: id.into(), destination: None, angle: None, goal_region: None }
    }

    /// Parameters are present exactly when the kind needs them.
    pub fn is_well_formed(&self) -> bool {
        self.destination.is_some() == (self.kind == PrimitiveKind::PickPlace)
            && self.angle.is_some() == (self.kind == PrimitiveKind::Rotate)
            && self.goal_region.is_some() == (self.kind == PrimitiveKind::Retrieve)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeReason {
    Ok,
    NotAContainer,
    AlreadyOpen,
    AlreadyClosed,
    NotMovable,
    NotExposed,
    NotObserved,
    OutOfReach,
    DestinationBlocked,
    GripperBusy,
}

impl fmt::Display for OutcomeReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Ok => "ok",
            Self::NotAContainer => "not a container",
            Self::AlreadyOpen => "already open",
            Self::AlreadyClosed => "already closed",
            Self::NotMovable => "not movable",
            Self::NotExposed => "not exposed",
            Self::NotObserved => "not observed",
            Self::OutOfReach => "out of reach",
            Self::DestinationBlocked => "destination blocked",
            Self::GripperBusy => "gripper busy",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub success: bool,
    pub reason: OutcomeReason,
    /// Ids of the entities the transition changed.
    pub world_delta: Vec<String>,
    /// Box of the object before it was moved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub former_box: Option<Aabb>,
}

impl ActionOutcome {
    fn ok(changed: &str) -> Self {
        Self { success: true, reason: OutcomeReason::Ok, world_delta: vec![changed.to_string()], former_box: None }
    }

    fn failed(reason: OutcomeReason) -> Self {
        Self { success: false, reason, world_delta: Vec::new(), former_box: None }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("primitive parameters do not match its kind")]
    MalformedPrimitive,
}

pub fn reachable(p: &Vec3) -> bool {
    (p - ARM_BASE).norm() <= REACH
}

fn detected(obs: Option<&Observation>, id: &str) -> bool {
    obs.is_some_and(|o| o.detections.iter().any(|d| d.source_id == id))
}

/// Whether the container's handle was in view in the observation: either the
/// handle object was detected, or the line of sight to a point just in front
/// of the handle was clear.
pub fn handle_visible(world: &WorldState, container: &str, obs: Option<&Observation>, intr: &CameraIntrinsics) -> bool {
    let (Some(c), Ok(owner), Some(obs)) = (world.containers.get(container), world.object(container), obs) else {
        return false;
    };
    if c.handle_object.as_deref().is_some_and(|h| detected(Some(obs), h)) {
        return true;
    }
    let face = owner.aabb().nearest_face(&c.handle_point);
    let probe = c.handle_point + face.normal() * HANDLE_PROBE;
    if !intr.sees(&obs.camera, &probe) {
        return false;
    }
    let skip = c.handle_object.as_deref().and_then(|h| world.index_of(h));
    !world
        .occluders()
        .iter()
        .filter(|o| Some(o.owner) != skip)
        .any(|o| o.shape.blocks_segment(&probe, &obs.camera.position))
}

/// Checks shared by everything that grasps an object.
fn grasp_check(world: &WorldState, id: &str, obs: Option<&Observation>) -> Result<Option<OutcomeReason>, ActionError> {
    let obj = world.object(id)?;
    let reason = if !obj.movable {
        Some(OutcomeReason::NotMovable)
    } else if world.enclosing_closed_container(id).is_some() || !world.objects_on(id).is_empty() {
        Some(OutcomeReason::NotExposed)
    } else if !detected(obs, id) {
        Some(OutcomeReason::NotObserved)
    } else if !reachable(&obj.centroid()) {
        Some(OutcomeReason::OutOfReach)
    } else if world.held.as_deref().is_some_and(|h| h != id) {
        Some(OutcomeReason::GripperBusy)
    } else {
        None
    };
    Ok(reason)
}

fn placement_clear(world: &WorldState, id: &str, bb: &Aabb) -> bool {
    world
        .objects
        .values()
        .filter(|o| o.id != id && o.class_label != "table")
        .all(|o| !o.aabb().overlaps(bb, PLACE_CLEARANCE))
}

/// Free spot on the table for object `id`: scanned from the front edge and
/// outward from the centre line, away from the goal region and every other
/// object, within reach.
pub fn free_spot(world: &WorldState, id: &str) -> Option<Pose> {
    let extent = world.objects.get(id)?.extent;
    let table = world.objects.values().filter(|o| o.class_label == "table").map(|o| o.aabb()).next()?;
    let z = table.max.z + extent.z;
    let margin = PLACE_CLEARANCE + 0.01;
    let (x0, x1) = (table.min.x + extent.x + margin, table.max.x - extent.x - margin);
    let (y0, y1) = (table.min.y + extent.y + margin, table.max.y - extent.y - margin);
    if x1 < x0 || y1 < y0 {
        return None;
    }
    let mid = (x0 + x1) / 2.0;
    let nx = ((x1 - x0) / PLACE_STEP).floor() as i64;
    let ny = ((y1 - y0) / PLACE_STEP).floor() as i64;
    for j in 0..=ny {
        let y = y0 + j as f64 * PLACE_STEP;
        for k in 0..=nx {
            let off = ((k + 1) / 2) as f64 * PLACE_STEP * if k % 2 == 0 { 1.0 } else { -1.0 };
            let x = mid + off;
            if x < x0 || x > x1 {
                continue;
            }
            let c = Vec3::new(x, y, z);
            let bb = Aabb::from_center_half(c, extent);
            if reachable(&c) && !world.goal_region.overlaps(&bb, PLACE_CLEARANCE) && placement_clear(world, id, &bb) {
                return Some(Pose::at(c));
            }
        }
    }
    None
}

/// Move an object and re-derive relations; the world is restored if the
/// result violates an invariant.
fn move_object(world: &mut WorldState, id: &str, pose: Pose) -> Result<Aabb, ActionError> {
    let before = world.clone();
    let obj = world.object_mut(id)?;
    let former = obj.aabb();
    obj.set_pose(pose);
    world.recompute_relations();
    if let Err(e) = world.validate() {
        *world = before;
        return Err(e.into());
    }
    Ok(former)
}

fn set_container(world: &mut WorldState, id: &str, state: ContainerState) -> Result<(), ActionError> {
    let before = world.clone();
    world.containers.get_mut(id).expect("container exists").state = state;
    world.recompute_relations();
    if let Err(e) = world.validate() {
        *world = before;
        return Err(e.into());
    }
    Ok(())
}

/// Execute one primitive against the world. Unmet preconditions give a
/// failed outcome and leave the world unchanged; errors are reserved for
/// bad references and malformed primitives.
pub fn execute_primitive(
    world: &mut WorldState,
    prim: &Primitive,
    obs: Option<&Observation>,
    intr: &CameraIntrinsics,
) -> Result<ActionOutcome, ActionError> {
    if !prim.is_well_formed() {
        return Err(ActionError::MalformedPrimitive);
    }
    let id = prim.object_id.as_str();
    let obj = world.object(id)?.clone();
    match prim.kind {
        PrimitiveKind::Open | PrimitiveKind::Close => {
            let Some(c) = world.containers.get(id) else {
                return Ok(ActionOutcome::failed(OutcomeReason::NotAContainer));
            };
            let to = if prim.kind == PrimitiveKind::Open { ContainerState::Open } else { ContainerState::Closed };
            if c.state == to {
                return Ok(ActionOutcome::failed(match to {
                    ContainerState::Open => OutcomeReason::AlreadyOpen,
                    ContainerState::Closed => OutcomeReason::AlreadyClosed,
                }));
            }
            if !reachable(&c.handle_point) {
                return Ok(ActionOutcome::failed(OutcomeReason::OutOfReach));
            }
            if !handle_visible(world, id, obs, intr) {
                return Ok(ActionOutcome::failed(OutcomeReason::NotObserved));
            }
            set_container(world, id, to)?;
            Ok(ActionOutcome::ok(id))
        }
        PrimitiveKind::PickPlace => {
            if let Some(reason) = grasp_check(world, id, obs)? {
                return Ok(ActionOutcome::failed(reason));
            }
            let dest = prim.destination.expect("well formed");
            let bb = Aabb::from_center_half(dest.position, obj.extent);
            if !reachable(&dest.position) {
                return Ok(ActionOutcome::failed(OutcomeReason::OutOfReach));
            }
            if !placement_clear(world, id, &bb) {
                return Ok(ActionOutcome::failed(OutcomeReason::DestinationBlocked));
            }
            let former = move_object(world, id, dest)?;
            Ok(ActionOutcome { former_box: Some(former), ..ActionOutcome::ok(id) })
        }
        PrimitiveKind::Rotate => {
            if let Some(reason) = grasp_check(world, id, obs)? {
                return Ok(ActionOutcome::failed(reason));
            }
            let mut pose = *obj.pose();
            pose.yaw = (pose.yaw + prim.angle.expect("well formed")).rem_euclid(std::f64::consts::TAU);
            let former = move_object(world, id, pose)?;
            Ok(ActionOutcome { former_box: Some(former), ..ActionOutcome::ok(id) })
        }
        PrimitiveKind::Retrieve => retrieve(world, id, &prim.goal_region.expect("well formed"), obs),
    }
}

/// Pick the object up and put it down at the centre of the goal region.
pub fn retrieve(world: &mut WorldState, id: &str, goal_region: &Aabb, obs: Option<&Observation>) -> Result<ActionOutcome, ActionError> {
    if let Some(reason) = grasp_check(world, id, obs)? {
        return Ok(ActionOutcome::failed(reason));
    }
    let former = move_object(world, id, Pose::at(goal_region.center()))?;
    world.held = None;
    Ok(ActionOutcome { former_box: Some(former), ..ActionOutcome::ok(id) })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::exec::Exec;
    use crate::geometry::Facet;
    use crate::observation::{observe_with, CameraPose, NoiseModel};
    use crate::world::{Container, ContainerKind, SimObject};

    fn table_world() -> WorldState {
        let camera = CameraPose::look_at(Vec3::new(0.0, -0.6, 0.5), Vec3::new(0.0, 0.0, 0.0));
        let goal = Aabb::new(Vec3::new(0.7, -0.3, 0.0), Vec3::new(0.9, -0.1, 0.2));
        let mut w = WorldState::new(camera, goal);
        w.add_object(SimObject::new("table", "table", "table", Pose::at(Vec3::new(0.0, 0.0, -0.02)), Vec3::new(0.6, 0.4, 0.02), false));
        w
    }

    fn look(w: &WorldState) -> Observation {
        observe_with(Exec::Sequential, w, &w.camera, &CameraIntrinsics::default(), &NoiseModel::none(), 0)
    }

    fn cabinet_world(state: ContainerState) -> WorldState {
        let mut w = table_world();
        let half = Vec3::new(0.12, 0.1, 0.1);
        let center = Vec3::new(0.0, 0.1, 0.1);
        w.add_object(SimObject::new("cab", "cabinet", "cabinet", Pose::at(center), half, false));
        w.add_container(Container {
            object_id: "cab".into(),
            state,
            interior_region: Aabb::from_center_half(center, half - Vec3::repeat(0.01)),
            handle_point: center - Vec3::new(0.0, half.y, 0.0),
            kind: ContainerKind::Cabinet,
            handle_object: None,
        });
        w.add_object(SimObject::new("mug", "mug", "mug", Pose::at(Vec3::new(0.0, 0.1, 0.04)), Vec3::new(0.03, 0.03, 0.04), true));
        w.recompute_relations();
        w.validate().unwrap();
        w
    }

    #[test]
    fn open_then_close_is_identity() {
        let intr = CameraIntrinsics::default();
        let mut w = cabinet_world(ContainerState::Closed);
        let start = w.clone();
        let obs = look(&w);
        assert!(!detected(Some(&obs), "mug"));
        let out = execute_primitive(&mut w, &Primitive::open("cab"), Some(&obs), &intr).unwrap();
        assert!(out.success, "{out:?}");
        assert!(detected(Some(&look(&w)), "mug"));
        let again = execute_primitive(&mut w, &Primitive::open("cab"), Some(&obs), &intr).unwrap();
        assert_eq!(again.reason, OutcomeReason::AlreadyOpen);
        execute_primitive(&mut w, &Primitive::close("cab"), Some(&obs), &intr).unwrap();
        assert_eq!(w, start);
    }

    #[test]
    fn open_needs_the_handle_in_view() {
        let intr = CameraIntrinsics::default();
        let mut w = cabinet_world(ContainerState::Closed);
        w.camera = CameraPose::look_at(Vec3::new(0.0, 0.7, 0.4), Vec3::new(0.0, 0.1, 0.1));
        let obs = look(&w);
        let before = w.clone();
        let out = execute_primitive(&mut w, &Primitive::open("cab"), Some(&obs), &intr).unwrap();
        assert_eq!(out.reason, OutcomeReason::NotObserved);
        assert_eq!(w, before);
        let out = execute_primitive(&mut w, &Primitive::open("table"), Some(&obs), &intr).unwrap();
        assert_eq!(out.reason, OutcomeReason::NotAContainer);
    }

    #[test]
    fn enclosed_objects_cannot_be_moved() {
        let intr = CameraIntrinsics::default();
        let mut w = cabinet_world(ContainerState::Closed);
        let obs = look(&w);
        let dest = free_spot(&w, "mug").unwrap();
        let out = execute_primitive(&mut w, &Primitive::pick_place("mug", dest), Some(&obs), &intr).unwrap();
        assert_eq!(out.reason, OutcomeReason::NotExposed);
        let goal = w.goal_region;
        assert_eq!(retrieve(&mut w, "mug", &goal, Some(&obs)).unwrap().reason, OutcomeReason::NotExposed);
        assert!(matches!(
            execute_primitive(&mut w, &Primitive::open("ghost"), Some(&obs), &intr),
            Err(ActionError::World(WorldError::UnknownEntity(_)))
        ));
    }

    #[test]
    fn stacked_object_is_exposed_after_moving_the_top() {
        let intr = CameraIntrinsics::default();
        let mut w = table_world();
        w.add_object(SimObject::new("book", "notebook", "notebook", Pose::at(Vec3::new(0.0, 0.0, 0.01)), Vec3::new(0.07, 0.05, 0.01), true));
        w.add_object(SimObject::new("box", "box", "box", Pose::at(Vec3::new(0.0, 0.0, 0.06)), Vec3::new(0.08, 0.06, 0.04), true));
        w.recompute_relations();
        let obs = look(&w);
        let goal = w.goal_region;
        assert_eq!(retrieve(&mut w, "book", &goal, Some(&obs)).unwrap().reason, OutcomeReason::NotExposed);
        let dest = free_spot(&w, "box").unwrap();
        assert!(execute_primitive(&mut w, &Primitive::pick_place("box", dest), Some(&obs), &intr).unwrap().success);
        let obs = look(&w);
        let out = retrieve(&mut w, "book", &goal, Some(&obs)).unwrap();
        assert!(out.success, "{out:?}");
        assert!(goal.contains(&w.objects["book"].centroid()));
    }

    #[test]
    fn rotation_brings_the_rear_tag_into_view() {
        let intr = CameraIntrinsics::default();
        let mut w = table_world();
        let bottle = SimObject::new("b", "bottle", "shampoo", Pose::at(Vec3::new(0.0, 0.0, 0.07)), Vec3::new(0.03, 0.025, 0.07), true)
            .with_facet_tag(Facet::PosY, "shampoo");
        w.add_object(bottle);
        w.recompute_relations();
        let obs = look(&w);
        let d = obs.detections.iter().find(|d| d.source_id == "b").unwrap();
        assert!(d.facet_tags.is_empty());
        assert_eq!(d.observed_label, "bottle");
        let out = execute_primitive(&mut w, &Primitive::rotate("b", PI), Some(&obs), &intr).unwrap();
        assert!(out.success);
        let obs = look(&w);
        let d = obs.detections.iter().find(|d| d.source_id == "b").unwrap();
        assert_eq!(d.facet_tags, vec!["shampoo".to_string()]);
        assert_eq!(d.observed_label, "shampoo");
    }

    #[test]
    fn malformed_primitive_is_rejected() {
        let mut w = table_world();
        let p = Primitive { angle: Some(1.0), ..Primitive::open("table") };
        assert_eq!(execute_primitive(&mut w, &p, None, &CameraIntrinsics::default()), Err(ActionError::MalformedPrimitive));
    }
}
