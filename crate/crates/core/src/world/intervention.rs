use serde::{Deserialize, Serialize};

use super::{ContainerState, WorldError, WorldState};
use crate::geometry::Pose;

/// A scripted change made by a "human" between robot steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InterventionScript {
    MoveObject { id: String, pose: Pose },
    SetContainer { id: String, state: ContainerState },
    RemoveObject { id: String },
}

impl InterventionScript {
    pub fn target(&self) -> &str {
        match self {
            Self::MoveObject { id, .. } | Self::SetContainer { id, .. } | Self::RemoveObject { id } => id,
        }
    }
}

/// Apply `script` to `world`. On error the world is left untouched.
pub fn apply_intervention(world: &mut WorldState, script: &InterventionScript) -> Result<(), WorldError> {
    let mut next = world.clone();
    match script {
        InterventionScript::MoveObject { id, pose } => {
            let old = next.object(id)?.pose().position;
            let delta = pose.position - old;
            // Contents and handles travel with their container.
            let mut riders: Vec<String> =
                next.inside_of.iter().filter(|(_, c)| *c == id).map(|(o, _)| o.clone()).collect();
            if let Some(c) = next.containers.get_mut(id) {
                c.interior_region.min += delta;
                c.interior_region.max += delta;
                c.handle_point += delta;
                riders.extend(c.handle_object.clone());
            }
            next.object_mut(id)?.set_pose(*pose);
            for r in riders {
                let obj = next.object_mut(&r)?;
                let mut p = *obj.pose();
                p.position += delta;
                obj.set_pose(p);
            }
        }
        InterventionScript::SetContainer { id, state } => {
            let c = next.containers.get_mut(id).ok_or_else(|| WorldError::UnknownEntity(id.clone()))?;
            c.state = *state;
        }
        InterventionScript::RemoveObject { id } => {
            next.objects.remove(id).ok_or_else(|| WorldError::UnknownEntity(id.clone()))?;
            next.containers.remove(id);
            for c in next.containers.values_mut() {
                if c.handle_object.as_deref() == Some(id.as_str()) {
                    c.handle_object = None;
                }
            }
            if next.held.as_deref() == Some(id.as_str()) {
                next.held = None;
            }
        }
    }
    next.recompute_relations();
    next.validate()?;
    *world = next;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::observation::CameraPose;
    use crate::world::{Container, ContainerKind, SimObject};
    use crate::geometry::Aabb;

    fn world() -> WorldState {
        let mut w = WorldState::new(
            CameraPose::look_at(Vec3::new(0.0, -0.6, 0.5), Vec3::zeros()),
            Aabb::new(Vec3::new(0.7, -0.2, 0.0), Vec3::new(0.9, 0.0, 0.2)),
        );
        w.add_object(SimObject::new("table", "table", "table", Pose::at(Vec3::new(0.0, 0.0, -0.025)), Vec3::new(0.6, 0.4, 0.025), false));
        w.add_object(SimObject::new("cup", "cup", "cup", Pose::at(Vec3::new(0.0, 0.0, 0.05)), Vec3::new(0.04, 0.04, 0.05), true));
        w.add_object(SimObject::new("drawer", "drawer", "drawer", Pose::at(Vec3::new(0.3, 0.2, 0.06)), Vec3::new(0.12, 0.1, 0.06), false));
        w.add_object(SimObject::new("pen", "pen", "pen", Pose::at(Vec3::new(0.3, 0.2, 0.03)), Vec3::new(0.06, 0.01, 0.01), true));
        w.add_container(Container {
            object_id: "drawer".into(),
            state: ContainerState::Open,
            interior_region: Aabb::new(Vec3::new(0.19, 0.11, 0.01), Vec3::new(0.41, 0.29, 0.12)),
            handle_point: Vec3::new(0.3, 0.1, 0.06),
            kind: ContainerKind::Drawer,
            handle_object: None,
        });
        w.recompute_relations();
        w.validate().unwrap();
        w
    }

    #[test]
    fn move_object_recomputes_relations() {
        let mut w = world();
        assert_eq!(w.on_top_of["cup"], "table");
        let script = InterventionScript::MoveObject { id: "cup".into(), pose: Pose::at(Vec3::new(0.3, 0.0, 0.05)) };
        apply_intervention(&mut w, &script).unwrap();
        assert!((w.objects["cup"].centroid().x - 0.3).abs() < 1e-12);
        // Lifted into the air: no longer on anything.
        let float = InterventionScript::MoveObject { id: "cup".into(), pose: Pose::at(Vec3::new(0.3, 0.0, 0.3)) };
        apply_intervention(&mut w, &float).unwrap();
        assert!(!w.on_top_of.contains_key("cup"));
    }

    #[test]
    fn moving_container_carries_contents() {
        let mut w = world();
        assert_eq!(w.inside_of["pen"], "drawer");
        let script = InterventionScript::MoveObject { id: "drawer".into(), pose: Pose::at(Vec3::new(-0.3, 0.2, 0.06)) };
        apply_intervention(&mut w, &script).unwrap();
        assert_eq!(w.inside_of["pen"], "drawer");
        assert!((w.objects["pen"].centroid().x + 0.3).abs() < 1e-12);
    }

    #[test]
    fn set_container_and_errors() {
        let mut w = world();
        apply_intervention(&mut w, &InterventionScript::SetContainer { id: "drawer".into(), state: ContainerState::Closed }).unwrap();
        assert_eq!(w.containers["drawer"].state, ContainerState::Closed);
        let before = w.clone();
        let err = apply_intervention(&mut w, &InterventionScript::RemoveObject { id: "ghost".into() }).unwrap_err();
        assert_eq!(err, WorldError::UnknownEntity("ghost".into()));
        assert_eq!(w, before);
        let err = apply_intervention(&mut w, &InterventionScript::SetContainer { id: "cup".into(), state: ContainerState::Open });
        assert!(err.is_err());
    }

    #[test]
    fn remove_object() {
        let mut w = world();
        apply_intervention(&mut w, &InterventionScript::RemoveObject { id: "cup".into() }).unwrap();
        assert!(!w.objects.contains_key("cup"));
        assert!(!w.on_top_of.contains_key("cup"));
    }
}
