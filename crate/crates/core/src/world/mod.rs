//! Ground-truth tabletop environment.

mod intervention;
mod scenario;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Facet, OrientedBox, Pose, Vec3};
use crate::memory::{self, NodeAttributes, NodeKind, SceneGraph, SceneNode};
use crate::observation::{Articulation, CameraPose};
use crate::seed;

pub use intervention::{apply_intervention, InterventionScript};
pub use scenario::{load_scenario, Budgets, Category, Scenario, ScenarioError, ScheduledIntervention};

/// Descriptor length for facets and detections.
pub const DESCRIPTOR_DIM: usize = 16;
const APPEARANCE_DIM: usize = 13;
/// Samples per face edge.
pub const SAMPLES_PER_EDGE: usize = 8;
/// Vertical contact tolerance for resting relations.
pub const CONTACT_TOL: f64 = 0.005;
/// Minimum plan-view overlap (fraction of the upper footprint) for resting relations.
pub const FOOTPRINT_MIN: f64 = 0.3;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("world invariant violated: {0}")]
    Invariant(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetInfo {
    pub descriptor: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub facet: Facet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimObject {
    pub id: String,
    pub class_label: String,
    pub fine_label: String,
    pose: Pose,
    /// Half sizes in meters.
    pub extent: Vec3,
    pub movable: bool,
    pub facets: BTreeMap<Facet, FacetInfo>,
    pub semantic_tag: Option<String>,
    samples: Vec<SurfaceSample>,
}

/// Appearance descriptor of one face: class embedding, optional tag, size cue.
pub fn facet_descriptor(class_label: &str, extent: &Vec3, tag: Option<&str>) -> Vec<f64> {
    let mut app = seed::embed(class_label, APPEARANCE_DIM);
    if let Some(tag) = tag {
        let t = seed::embed(tag, APPEARANCE_DIM);
        app.iter_mut().zip(t).for_each(|(a, b)| *a = 0.5 * *a + 0.5 * b);
    }
    let mut size = [extent.x, extent.y, extent.z];
    size.sort_by(|a, b| b.total_cmp(a));
    app.extend(size.iter().map(|s| s * 10.0));
    app
}

impl SimObject {
    pub fn new(
        id: impl Into<String>,
        class_label: impl Into<String>,
        fine_label: impl Into<String>,
        pose: Pose,
        extent: Vec3,
        movable: bool,
    ) -> Self {
        let class_label = class_label.into();
        let facets = Facet::ALL
            .iter()
            .map(|f| (*f, FacetInfo { descriptor: facet_descriptor(&class_label, &extent, None), tag: None }))
            .collect();
        let mut obj = Self {
            id: id.into(),
            class_label,
            fine_label: fine_label.into(),
            pose,
            extent,
            movable,
            facets,
            semantic_tag: None,
            samples: Vec::new(),
        };
        obj.refresh_samples();
        obj
    }

    /// Tag one face with discriminative text; its descriptor picks up the tag.
    pub fn with_facet_tag(mut self, facet: Facet, tag: impl Into<String>) -> Self {
        let tag = tag.into();
        let descriptor = facet_descriptor(&self.class_label, &self.extent, Some(&tag));
        self.facets.insert(facet, FacetInfo { descriptor, tag: Some(tag) });
        self
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn set_pose(&mut self, pose: Pose) {
        self.pose = pose;
        self.refresh_samples();
    }

    pub fn samples(&self) -> &[SurfaceSample] {
        &self.samples
    }

    pub fn shape(&self) -> OrientedBox {
        OrientedBox::new(&self.pose, self.extent)
    }

    pub fn aabb(&self) -> Aabb {
        self.shape().aabb()
    }

    pub fn centroid(&self) -> Vec3 {
        self.pose.position
    }

    pub fn has_tagged_facets(&self) -> bool {
        self.facets.values().any(|f| f.tag.is_some())
    }

    fn refresh_samples(&mut self) {
        let shape = self.shape();
        let n = SAMPLES_PER_EDGE;
        let lin = |i: usize| if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
        let mut out = Vec::with_capacity(6 * n * n);
        for facet in Facet::ALL {
            let axis = facet.axis();
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            for i in 0..n {
                for j in 0..n {
                    let mut local = Vec3::zeros();
                    local[axis] = if facet.is_positive() { self.extent[axis] } else { -self.extent[axis] };
                    local[a] = lin(i) * self.extent[a];
                    local[b] = lin(j) * self.extent[b];
                    out.push(SurfaceSample { point: shape.to_world(&local), facet });
                }
            }
        }
        self.samples = out;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerState {
    Open,
    Closed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContainerKind {
    Drawer,
    Cabinet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub object_id: String,
    pub state: ContainerState,
    pub interior_region: Aabb,
    pub handle_point: Vec3,
    pub kind: ContainerKind,
    /// Separate handle object attached to the front face, if modeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handle_object: Option<String>,
}

impl Container {
    /// Face that disappears from the occluder set when open. Drawers open
    /// upward; cabinets open on the handle side.
    pub fn aperture(&self, owner: &Aabb) -> Facet {
        match self.kind {
            ContainerKind::Drawer => Facet::PosZ,
            ContainerKind::Cabinet => owner.nearest_face(&self.handle_point),
        }
    }

    pub fn articulation(&self, owner: &Aabb) -> Articulation {
        Articulation { state: self.state, aperture: self.aperture(owner), handle_face: owner.nearest_face(&self.handle_point) }
    }

    /// Wall slabs of an open container: the owner box minus the interior,
    /// without the aperture side.
    pub fn open_walls(&self, owner: &Aabb) -> Vec<Aabb> {
        let aperture = self.aperture(owner);
        let inner = &self.interior_region;
        let mut walls = Vec::with_capacity(5);
        for facet in Facet::ALL {
            if facet == aperture {
                continue;
            }
            let axis = facet.axis();
            let mut wall = *owner;
            if facet.is_positive() {
                wall.min[axis] = inner.max[axis];
            } else {
                wall.max[axis] = inner.min[axis];
            }
            if wall.size()[axis] > 1e-9 {
                walls.push(wall);
            }
        }
        walls
    }
}

/// A box that blocks rays, tagged with the index of the object it belongs to.
#[derive(Clone, Copy, Debug)]
pub struct Occluder {
    pub owner: usize,
    pub shape: OrientedBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub objects: BTreeMap<String, SimObject>,
    pub containers: BTreeMap<String, Container>,
    pub inside_of: BTreeMap<String, String>,
    pub on_top_of: BTreeMap<String, String>,
    pub camera: CameraPose,
    pub held: Option<String>,
    pub goal_region: Aabb,
    pub step: u32,
}

impl WorldState {
    pub fn new(camera: CameraPose, goal_region: Aabb) -> Self {
        Self {
            objects: BTreeMap::new(),
            containers: BTreeMap::new(),
            inside_of: BTreeMap::new(),
            on_top_of: BTreeMap::new(),
            camera,
            held: None,
            goal_region,
            step: 0,
        }
    }

    pub fn add_object(&mut self, obj: SimObject) {
        self.objects.insert(obj.id.clone(), obj);
    }

    pub fn add_container(&mut self, c: Container) {
        self.containers.insert(c.object_id.clone(), c);
    }

    pub fn object(&self, id: &str) -> Result<&SimObject, WorldError> {
        self.objects.get(id).ok_or_else(|| WorldError::UnknownEntity(id.to_string()))
    }

    pub fn object_mut(&mut self, id: &str) -> Result<&mut SimObject, WorldError> {
        self.objects.get_mut(id).ok_or_else(|| WorldError::UnknownEntity(id.to_string()))
    }

    /// Index of an object in the (sorted) object order used by occluders.
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.objects.keys().position(|k| k == id)
    }

    /// Height of the highest support surface (the table top), or 0.
    pub fn support_z(&self) -> f64 {
        self.objects
            .values()
            .filter(|o| o.class_label == "table")
            .map(|o| o.aabb().max.z)
            .fold(None, |acc: Option<f64>, z| Some(acc.map_or(z, |a| a.max(z))))
            .unwrap_or(0.0)
    }

    /// Occluder geometry per object. Closed containers are solid; open ones
    /// contribute only their walls.
    pub fn occluders(&self) -> Vec<Occluder> {
        let mut out = Vec::with_capacity(self.objects.len() + 8);
        for (owner, obj) in self.objects.values().enumerate() {
            match self.containers.get(&obj.id) {
                Some(c) if c.state == ContainerState::Open => {
                    out.extend(
                        c.open_walls(&obj.aabb())
                            .iter()
                            .map(|w| Occluder { owner, shape: OrientedBox::axis_aligned(w) }),
                    );
                }
                _ => out.push(Occluder { owner, shape: obj.shape() }),
            }
        }
        out
    }

    /// Facet removed from an object's surface (open container aperture).
    pub fn removed_facet(&self, id: &str) -> Option<Facet> {
        let c = self.containers.get(id)?;
        if c.state != ContainerState::Open {
            return None;
        }
        let owner = self.objects.get(id)?;
        Some(c.aperture(&owner.aabb()))
    }

    /// Container holding `id`, if that container is closed.
    pub fn enclosing_closed_container(&self, id: &str) -> Option<&str> {
        let c = self.inside_of.get(id)?;
        (self.containers.get(c)?.state == ContainerState::Closed).then_some(c.as_str())
    }

    /// Re-derive `inside_of` and `on_top_of` from current poses.
    pub fn recompute_relations(&mut self) {
        let boxes: Vec<(String, Aabb)> = self.objects.values().map(|o| (o.id.clone(), o.aabb())).collect();
        let mut inside = BTreeMap::new();
        let mut on = BTreeMap::new();
        for (id, bb) in &boxes {
            let c = bb.center();
            if let Some(cont) = self.containers.values().find(|k| {
                !self.containers.contains_key(id) && k.object_id != *id && k.interior_region.contains_inflated(&c, CONTACT_TOL)
            }) {
                inside.insert(id.clone(), cont.object_id.clone());
            }
            let mut best: Option<(&String, f64)> = None;
            for (other, ob) in &boxes {
                if other == id || (bb.min.z - ob.max.z).abs() > CONTACT_TOL {
                    continue;
                }
                let overlap = bb.footprint_overlap(ob);
                if overlap >= FOOTPRINT_MIN * bb.footprint_area() && best.is_none_or(|(_, o)| overlap > o) {
                    best = Some((other, overlap));
                }
            }
            if let Some((other, _)) = best {
                on.insert(id.clone(), other.clone());
            }
        }
        self.inside_of = inside;
        self.on_top_of = on;
    }

    /// Ids of objects resting directly on `id`.
    pub fn objects_on(&self, id: &str) -> Vec<&str> {
        self.on_top_of.iter().filter(|(_, v)| *v == id).map(|(k, _)| k.as_str()).collect()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Invariant(m));
        for (key, o) in &self.objects {
            if *key != o.id {
                return bad(format!("object key `{key}` does not match id `{}`", o.id));
            }
            if o.extent.iter().any(|e| *e <= 0.0) {
                return bad(format!("object `{}` has non-positive extent", o.id));
            }
            if o.facets.len() != 6 {
                return bad(format!("object `{}` facet map does not cover six directions", o.id));
            }
            let shape = o.shape();
            if o.samples.iter().any(|s| !shape.contains(&s.point, 1e-3)) {
                return bad(format!("object `{}` has samples outside its box", o.id));
            }
        }
        for (key, c) in &self.containers {
            let owner = self.objects.get(&c.object_id).ok_or_else(|| WorldError::UnknownEntity(c.object_id.clone()))?;
            if *key != c.object_id {
                return bad(format!("container key `{key}` does not match `{}`", c.object_id));
            }
            if !owner.pose.is_axis_aligned() {
                return bad(format!("container `{key}` must be axis aligned"));
            }
            let bb = owner.aabb();
            if !bb.contains_box(&c.interior_region, 1e-9) || !c.interior_region.is_valid() {
                return bad(format!("container `{key}` interior does not fit its owner"));
            }
            if !bb.contains_inflated(&c.handle_point, 0.005) || bb.inflate(-0.005).contains(&c.handle_point) {
                return bad(format!("container `{key}` handle is not on the owner surface"));
            }
            if let Some(h) = &c.handle_object {
                self.object(h)?;
            }
        }
        for rel in [&self.inside_of, &self.on_top_of] {
            for (k, v) in rel.iter() {
                self.object(k)?;
                self.object(v)?;
                let mut seen = BTreeSet::new();
                let mut cur = k.as_str();
                while let Some(next) = rel.get(cur) {
                    if !seen.insert(cur) {
                        return bad(format!("relation cycle through `{k}`"));
                    }
                    cur = next;
                }
            }
        }
        if let Some(h) = &self.held {
            self.object(h)?;
            if self.enclosing_closed_container(h).is_some() {
                return bad(format!("held object `{h}` is inside a closed container"));
            }
        }
        if !self.camera.is_valid() {
            return bad("camera frame is not orthonormal".to_string());
        }
        Ok(())
    }
}

/// Scene graph over the discovered objects using the same geometric rules
/// as the agent's memory, applied to exact object geometry.
pub fn ground_truth_graph(world: &WorldState, discovered: &BTreeSet<String>) -> SceneGraph {
    let mut graph = SceneGraph::default();
    for (i, id) in discovered.iter().filter(|id| world.objects.contains_key(*id)).enumerate() {
        let obj = &world.objects[id];
        let removed = world.removed_facet(id);
        let points: Vec<Vec3> = obj.samples().iter().filter(|s| Some(s.facet) != removed).map(|s| s.point).collect();
        let articulation = world.containers.get(id).map(|c| c.articulation(&obj.aabb()));
        let node = SceneNode {
            id: memory::NodeId(i as u32),
            kind: NodeKind::Known,
            obs_history: Vec::new(),
            merged_points: memory::PointSet::new(points),
            attrs: NodeAttributes {
                name: obj.fine_label.clone(),
                movable: obj.movable,
                conf: 1.0,
                occl: false,
                view: false,
                desc: String::new(),
            },
            created_step: 0,
            tags: obj.facets.values().filter_map(|f| f.tag.clone()).collect(),
            articulation,
            region: None,
            stale: false,
        };
        graph.nodes.insert(node.id, node);
        graph.next_id = i as u32 + 1;
    }
    let edges = memory::geometric_relations(&graph, &world.camera, &memory::MemoryConfig::default(), 0);
    for e in edges {
        graph.insert_edge(e);
    }
    graph
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Relation;

    pub(crate) fn table() -> SimObject {
        SimObject::new("table", "table", "table", Pose::at(Vec3::new(0.0, 0.0, -0.025)), Vec3::new(0.6, 0.4, 0.025), false)
    }

    fn cabinet_world(state: ContainerState) -> WorldState {
        let mut w = WorldState::new(
            CameraPose::look_at(Vec3::new(0.0, -0.6, 0.5), Vec3::zeros()),
            Aabb::new(Vec3::new(0.7, -0.2, 0.0), Vec3::new(0.9, 0.0, 0.2)),
        );
        w.add_object(table());
        w.add_object(SimObject::new("cabinet", "cabinet", "cabinet", Pose::at(Vec3::new(0.0, 0.2, 0.125)), Vec3::new(0.15, 0.12, 0.125), false));
        w.add_object(SimObject::new("lotion", "lotion", "lotion", Pose::at(Vec3::new(0.0, 0.2, 0.075)), Vec3::new(0.025, 0.02, 0.06), true));
        w.add_container(Container {
            object_id: "cabinet".into(),
            state,
            interior_region: Aabb::new(Vec3::new(-0.135, 0.095, 0.015), Vec3::new(0.135, 0.305, 0.235)),
            handle_point: Vec3::new(0.0, 0.08, 0.2),
            kind: ContainerKind::Cabinet,
            handle_object: None,
        });
        w.recompute_relations();
        w
    }

    #[test]
    fn samples_cover_six_faces_inside_box() {
        let o = table();
        assert_eq!(o.samples().len(), 6 * SAMPLES_PER_EDGE * SAMPLES_PER_EDGE);
        let shape = o.shape();
        assert!(o.samples().iter().all(|s| shape.contains(&s.point, 1e-9)));
    }

    #[test]
    fn relations_derive_from_geometry() {
        let w = cabinet_world(ContainerState::Closed);
        w.validate().unwrap();
        assert_eq!(w.inside_of.get("lotion").map(String::as_str), Some("cabinet"));
        assert_eq!(w.on_top_of.get("cabinet").map(String::as_str), Some("table"));
        assert_eq!(w.enclosing_closed_container("lotion"), Some("cabinet"));
    }

    #[test]
    fn open_cabinet_drops_front_wall() {
        let w = cabinet_world(ContainerState::Open);
        let c = &w.containers["cabinet"];
        let owner = w.objects["cabinet"].aabb();
        assert_eq!(c.aperture(&owner), Facet::NegY);
        assert_eq!(c.open_walls(&owner).len(), 5);
        let cab_idx = w.index_of("cabinet").unwrap();
        assert_eq!(w.occluders().iter().filter(|o| o.owner == cab_idx).count(), 5);
    }

    #[test]
    fn ground_truth_graph_edges() {
        let w = cabinet_world(ContainerState::Open);
        let all: BTreeSet<String> = w.objects.keys().cloned().collect();
        let g = ground_truth_graph(&w, &all);
        let name = |id: memory::NodeId| g.nodes[&id].attrs.name.clone();
        let has = |s: &str, d: &str, r: Relation| g.edges.iter().any(|e| name(e.src) == s && name(e.dst) == d && e.relation == r);
        assert!(has("lotion", "cabinet", Relation::Inside));
        assert!(has("cabinet", "table", Relation::On));
        assert!(ground_truth_graph(&w, &BTreeSet::new()).nodes.is_empty());
    }

    #[test]
    fn cup_on_table_truth() {
        let mut w = cabinet_world(ContainerState::Closed);
        w.add_object(SimObject::new("cup", "cup", "cup", Pose::at(Vec3::new(-0.3, -0.1, 0.05)), Vec3::new(0.04, 0.04, 0.05), true));
        w.recompute_relations();
        let ids: BTreeSet<String> = ["cup", "table"].iter().map(|s| s.to_string()).collect();
        let g = ground_truth_graph(&w, &ids);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        let e = g.edges.iter().next().unwrap();
        assert_eq!(e.relation, Relation::On);
        assert_eq!(g.nodes[&e.src].attrs.name, "cup");
    }
}
