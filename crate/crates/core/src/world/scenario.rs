//! Scenario files: JSON with strict keys, validated into a [`Scenario`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Container, ContainerKind, ContainerState, InterventionScript, SimObject, WorldState};
use crate::geometry::{Aabb, Facet, Pose, Vec3};
use crate::observation::CameraPose;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario at `{path}`: {message}")]
    Validation { path: String, message: String },
}

impl ScenarioError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Validation { path: path.into(), message: message.into() }
    }

    /// Field path for validation errors.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Validation { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    HiddenInside,
    RecursiveSearch,
    RepositionToReveal,
    SequentialRetrieval,
    SemanticTargeting,
    CompositionalReasoning,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::HiddenInside,
        Category::RecursiveSearch,
        Category::RepositionToReveal,
        Category::SequentialRetrieval,
        Category::SemanticTargeting,
        Category::CompositionalReasoning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::HiddenInside => "hidden_inside",
            Category::RecursiveSearch => "recursive_search",
            Category::RepositionToReveal => "reposition_to_reveal",
            Category::SequentialRetrieval => "sequential_retrieval",
            Category::SemanticTargeting => "semantic_targeting",
            Category::CompositionalReasoning => "compositional_reasoning",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == norm)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub max_steps: u32,
    pub max_reasoner_calls: u32,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { max_steps: 30, max_reasoner_calls: 120 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledIntervention {
    pub trigger_step: u32,
    #[serde(flatten)]
    pub script: InterventionScript,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub category: Category,
    pub seed: u64,
    pub initial_world: WorldState,
    pub instructions: Vec<String>,
    pub target_ids: Vec<String>,
    pub interventions: Vec<ScheduledIntervention>,
    pub budgets: Budgets,
}

// On-disk layout. Descriptors are derived from labels, so only tags are stored.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectEntry {
    id: String,
    class_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fine_label: Option<String>,
    pose: Pose,
    extent: [f64; 3],
    movable: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    facet_tags: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    semantic_tag: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerEntry {
    object_id: String,
    state: ContainerState,
    interior: Aabb,
    handle_point: [f64; 3],
    kind: ContainerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    handle_object: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationEntry {
    src: String,
    dst: String,
    relation: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraEntry {
    position: [f64; 3],
    target: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    category: String,
    seed: u64,
    camera: CameraEntry,
    goal_region: Aabb,
    objects: Vec<ObjectEntry>,
    #[serde(default)]
    containers: Vec<ContainerEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    relations: Vec<RelationEntry>,
    instructions: Vec<String>,
    targets: Vec<String>,
    #[serde(default)]
    interventions: Vec<ScheduledIntervention>,
    #[serde(default)]
    budgets: Budgets,
}

const RELATIONS: [&str; 5] = ["behind", "belong", "inside", "on", "under"];

fn v3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        build(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    fn to_file(&self) -> ScenarioFile {
        let w = &self.initial_world;
        let objects = w
            .objects
            .values()
            .map(|o| ObjectEntry {
                id: o.id.clone(),
                class_label: o.class_label.clone(),
                fine_label: (o.fine_label != o.class_label).then(|| o.fine_label.clone()),
                pose: *o.pose(),
                extent: [o.extent.x, o.extent.y, o.extent.z],
                movable: o.movable,
                facet_tags: o
                    .facets
                    .iter()
                    .filter_map(|(f, info)| info.tag.clone().map(|t| (f.to_string(), t)))
                    .collect(),
                semantic_tag: o.semantic_tag.clone(),
            })
            .collect();
        let containers = w
            .containers
            .values()
            .map(|c| ContainerEntry {
                object_id: c.object_id.clone(),
                state: c.state,
                interior: c.interior_region,
                handle_point: [c.handle_point.x, c.handle_point.y, c.handle_point.z],
                kind: c.kind,
                handle_object: c.handle_object.clone(),
            })
            .collect();
        // The camera target is stored one meter along the view axis.
        let target = w.camera.position + w.camera.forward;
        ScenarioFile {
            name: self.name.clone(),
            category: self.category.to_string(),
            seed: self.seed,
            camera: CameraEntry {
                position: [w.camera.position.x, w.camera.position.y, w.camera.position.z],
                target: [target.x, target.y, target.z],
            },
            goal_region: w.goal_region,
            objects,
            containers,
            relations: Vec::new(),
            instructions: self.instructions.clone(),
            targets: self.target_ids.clone(),
            interventions: self.interventions.clone(),
            budgets: self.budgets,
        }
    }
}

fn build(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let category: Category = file.category.parse().map_err(|m: String| ScenarioError::at("category", m))?;
    let position = v3(file.camera.position);
    let target = v3(file.camera.target);
    if (target - position).norm() < 1e-9 {
        return Err(ScenarioError::at("camera.target", "target coincides with camera position"));
    }
    if !file.goal_region.is_valid() {
        return Err(ScenarioError::at("goal_region", "min must not exceed max"));
    }
    let mut world = WorldState::new(CameraPose::look_at(position, target), file.goal_region);

    let mut ids = BTreeSet::new();
    for (i, o) in file.objects.into_iter().enumerate() {
        if o.id.is_empty() || !ids.insert(o.id.clone()) {
            return Err(ScenarioError::at(format!("objects[{i}].id"), format!("duplicate or empty id `{}`", o.id)));
        }
        if o.class_label.is_empty() {
            return Err(ScenarioError::at(format!("objects[{i}].class_label"), "empty label"));
        }
        if o.extent.iter().any(|e| !(*e > 0.0)) {
            return Err(ScenarioError::at(format!("objects[{i}].extent"), "half sizes must be positive"));
        }
        let fine = o.fine_label.unwrap_or_else(|| o.class_label.clone());
        let mut obj = SimObject::new(o.id, o.class_label, fine, o.pose, v3(o.extent), o.movable);
        for (key, tag) in o.facet_tags {
            let facet: Facet = key.parse().map_err(|m: String| ScenarioError::at(format!("objects[{i}].facet_tags"), m))?;
            obj = obj.with_facet_tag(facet, tag);
        }
        obj.semantic_tag = o.semantic_tag;
        world.add_object(obj);
    }

    for (i, c) in file.containers.into_iter().enumerate() {
        if !world.objects.contains_key(&c.object_id) {
            return Err(ScenarioError::at(format!("containers[{i}].object_id"), format!("no object `{}`", c.object_id)));
        }
        if world.containers.contains_key(&c.object_id) {
            return Err(ScenarioError::at(format!("containers[{i}].object_id"), "container declared twice"));
        }
        if let Some(h) = &c.handle_object {
            if !world.objects.contains_key(h) {
                return Err(ScenarioError::at(format!("containers[{i}].handle_object"), format!("no object `{h}`")));
            }
        }
        world.add_container(Container {
            object_id: c.object_id,
            state: c.state,
            interior_region: c.interior,
            handle_point: v3(c.handle_point),
            kind: c.kind,
            handle_object: c.handle_object,
        });
    }
    world.recompute_relations();
    world.validate().map_err(|e| ScenarioError::at("objects", e.to_string()))?;

    for (i, r) in file.relations.iter().enumerate() {
        if !RELATIONS.contains(&r.relation.as_str()) {
            return Err(ScenarioError::at(format!("relations[{i}].relation"), format!("unknown relation `{}`", r.relation)));
        }
        for (field, id) in [("src", &r.src), ("dst", &r.dst)] {
            if !world.objects.contains_key(id) {
                return Err(ScenarioError::at(format!("relations[{i}].{field}"), format!("no object `{id}`")));
            }
        }
        let derived = match r.relation.as_str() {
            "inside" => Some(world.inside_of.get(&r.src)),
            "on" => Some(world.on_top_of.get(&r.src)),
            _ => None,
        };
        if let Some(d) = derived {
            if d != Some(&r.dst) {
                return Err(ScenarioError::at(
                    format!("relations[{i}]"),
                    format!("`{} {} {}` does not match the geometry", r.src, r.relation, r.dst),
                ));
            }
        }
    }

    if file.instructions.len() != file.targets.len() {
        return Err(ScenarioError::at("targets", "one target per instruction is required"));
    }
    for (i, t) in file.targets.iter().enumerate() {
        if !world.objects.contains_key(t) {
            return Err(ScenarioError::at(format!("targets[{i}]"), format!("no object `{t}`")));
        }
    }
    for (i, iv) in file.interventions.iter().enumerate() {
        let id = iv.script.target();
        let known = match &iv.script {
            InterventionScript::SetContainer { .. } => world.containers.contains_key(id),
            _ => world.objects.contains_key(id),
        };
        if !known {
            return Err(ScenarioError::at(format!("interventions[{i}].id"), format!("no such entity `{id}`")));
        }
    }

    Ok(Scenario {
        name: file.name,
        category,
        seed: file.seed,
        initial_world: world,
        instructions: file.instructions,
        target_ids: file.targets,
        interventions: file.interventions,
        budgets: file.budgets,
    })
}
