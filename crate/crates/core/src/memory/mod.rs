//! Dynamic hierarchical scene graph: matching, merging, attributes,
//! relations, Unknown hypotheses and graph edit distance.

mod attributes;
mod explored;
mod ged;
mod matching;
mod points;
mod relations;
mod unknowns;
mod update;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec3};
use crate::observation::Observation;

pub use crate::observation::Articulation;
pub use attributes::heuristic_attributes;
pub use explored::ExploredGrid;
pub use ged::{graph_edit_distance, GedResult, EXACT_NODE_LIMIT};
pub use matching::{match_cost_matrix, solve_assignment, MatchOutcome};
pub use points::{merge_point_sets, PointSet};
pub use relations::{action_under_edges, geometric_relations};
pub use unknowns::{hypothesize_unknowns, shadow_volumes, Workspace};
pub use update::update_memory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Known,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Behind,
    Belong,
    Inside,
    On,
    Under,
}

impl Relation {
    pub const ALL: [Relation; 5] = [Relation::Behind, Relation::Belong, Relation::Inside, Relation::On, Relation::Under];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Behind => "behind",
            Relation::Belong => "belong",
            Relation::Inside => "inside",
            Relation::On => "on",
            Relation::Under => "under",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Geometric,
    Semantic,
    Action,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeAttributes {
    pub name: String,
    pub movable: bool,
    pub conf: f64,
    pub occl: bool,
    pub view: bool,
    pub desc: String,
}

impl NodeAttributes {
    pub fn unknown() -> Self {
        Self {
            name: "unknown".into(),
            movable: false,
            conf: 0.0,
            occl: false,
            view: false,
            desc: "unexplored region".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsEntry {
    pub step: u32,
    pub descriptor: Vec<f64>,
    pub visible_fraction: f64,
    pub frustum_clipped: bool,
    pub label: String,
    pub centroid: Vec3,
}

/// Region hypothesized to hold undiscovered objects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownRegion {
    pub parent: NodeId,
    pub relation: Relation,
    pub region: Aabb,
    /// Points whose exploration resolves the hypothesis.
    pub probes: Vec<Vec3>,
    /// Fraction of probe points seen so far.
    pub explored: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub obs_history: Vec<ObsEntry>,
    pub merged_points: PointSet,
    pub attrs: NodeAttributes,
    pub created_step: u32,
    /// Facet tags read on this object so far.
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<UnknownRegion>,
    /// Seen to be gone from where it was last observed.
    #[serde(default)]
    pub stale: bool,
}

impl SceneNode {
    pub fn is_known(&self) -> bool {
        self.kind == NodeKind::Known
    }

    /// Bounding box of the node: merged points for Known nodes, the region for Unknowns.
    pub fn aabb(&self) -> Option<Aabb> {
        match &self.region {
            Some(r) => Some(r.region),
            None => self.merged_points.aabb(),
        }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        match &self.region {
            Some(r) => Some(r.region.center()),
            None => self.merged_points.centroid(),
        }
    }

    pub fn last_step(&self) -> Option<u32> {
        self.obs_history.last().map(|e| e.step)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SceneEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Relation,
    pub provenance: Provenance,
    pub created_step: u32,
}

impl SceneEdge {
    pub fn key(&self) -> (NodeId, NodeId, Relation) {
        (self.src, self.dst, self.relation)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: BTreeMap<NodeId, SceneNode>,
    /// Sorted by `(src, dst, relation)`, at most one edge per key.
    pub edges: Vec<SceneEdge>,
    pub next_id: u32,
}

impl SceneGraph {
    pub fn alloc_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Insert unless an edge with the same key exists. Returns whether it was added.
    pub fn insert_edge(&mut self, e: SceneEdge) -> bool {
        if e.src == e.dst || !self.nodes.contains_key(&e.src) || !self.nodes.contains_key(&e.dst) {
            return false;
        }
        match self.edges.binary_search_by(|x| x.key().cmp(&e.key())) {
            Ok(_) => false,
            Err(pos) => {
                self.edges.insert(pos, e);
                true
            }
        }
    }

    pub fn remove_node(&mut self, id: NodeId) -> Option<SceneNode> {
        self.edges.retain(|e| e.src != id && e.dst != id);
        self.nodes.remove(&id)
    }

    pub fn edges_from(&self, id: NodeId) -> impl Iterator<Item = &SceneEdge> {
        self.edges.iter().filter(move |e| e.src == id)
    }

    pub fn edges_to(&self, id: NodeId) -> impl Iterator<Item = &SceneEdge> {
        self.edges.iter().filter(move |e| e.dst == id)
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, relation: Relation) -> bool {
        self.edges.binary_search_by(|x| x.key().cmp(&(src, dst, relation))).is_ok()
    }

    pub fn known(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values().filter(|n| n.is_known())
    }

    pub fn unknowns(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values().filter(|n| !n.is_known())
    }

    /// Copy with Unknown nodes (and their edges) removed.
    pub fn known_only(&self) -> SceneGraph {
        let mut g = self.clone();
        let ids: Vec<NodeId> = g.unknowns().map(|n| n.id).collect();
        for id in ids {
            g.remove_node(id);
        }
        g
    }

    /// Unknown child of `parent` with the given relation.
    pub fn unknown_child(&self, parent: NodeId, relation: Relation) -> Option<NodeId> {
        self.unknowns()
            .find(|n| n.region.as_ref().is_some_and(|r| r.parent == parent && r.relation == relation))
            .map(|n| n.id)
    }

    /// Check the structural invariants, returning a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        for (id, n) in &self.nodes {
            if *id != n.id {
                return Err(format!("node key {id} holds {}", n.id));
            }
            if n.id.0 >= self.next_id {
                return Err(format!("node {id} not below next_id"));
            }
            match n.kind {
                NodeKind::Known => {
                    if n.obs_history.is_empty() || n.merged_points.is_empty() {
                        return Err(format!("known node {id} lacks history or points"));
                    }
                }
                NodeKind::Unknown => {
                    if !n.obs_history.is_empty() || !n.merged_points.is_empty() || n.attrs.name != "unknown" {
                        return Err(format!("unknown node {id} carries observations"));
                    }
                    let Some(r) = &n.region else {
                        return Err(format!("unknown node {id} lacks a region"));
                    };
                    if self.nodes.get(&r.parent).is_none_or(|p| !p.is_known()) {
                        return Err(format!("unknown node {id} has no known parent"));
                    }
                }
            }
            if !(0.0..=1.0).contains(&n.attrs.conf) {
                return Err(format!("node {id} conf out of range"));
            }
        }
        for w in self.edges.windows(2) {
            if w[0].key() >= w[1].key() {
                return Err("edges unsorted or duplicated".into());
            }
        }
        for e in &self.edges {
            if e.src == e.dst || !self.nodes.contains_key(&e.src) || !self.nodes.contains_key(&e.dst) {
                return Err(format!("bad edge {} -> {}", e.src, e.dst));
            }
        }
        for rel in [Relation::Inside, Relation::On] {
            if has_cycle(&self.edges, rel) {
                return Err(format!("{} edges contain a cycle", rel.as_str()));
            }
        }
        Ok(())
    }
}

fn has_cycle(edges: &[SceneEdge], rel: Relation) -> bool {
    let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for e in edges.iter().filter(|e| e.relation == rel) {
        adj.entry(e.src).or_default().push(e.dst);
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: BTreeMap<NodeId, u8> = BTreeMap::new();
    fn visit(n: NodeId, adj: &BTreeMap<NodeId, Vec<NodeId>>, state: &mut BTreeMap<NodeId, u8>) -> bool {
        match state.get(&n) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(n, 1);
        for m in adj.get(&n).into_iter().flatten() {
            if visit(*m, adj, state) {
                return true;
            }
        }
        state.insert(n, 2);
        false
    }
    adj.keys().copied().collect::<Vec<_>>().into_iter().any(|n| visit(n, &adj, &mut state))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub theta_match: f64,
    /// Weight of centroid distance (per meter) in the matching cost.
    pub lambda: f64,
    pub delta: f64,
    pub theta_full: f64,
    /// Minimum shadow volume for a Behind hypothesis, cubic meters.
    pub v_min: f64,
    pub theta_explored: f64,
    pub gamma_stale: f64,
    pub contact_eps: f64,
    pub footprint_min: f64,
    pub inside_min: f64,
    /// Free-space margin for carving and probe tests, meters.
    pub carve_margin: f64,
    /// Edge length of the exploration grid, meters.
    pub explored_voxel: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            theta_match: 0.5,
            lambda: 1.0,
            delta: 0.01,
            theta_full: 0.6,
            v_min: 0.001,
            theta_explored: 0.8,
            gamma_stale: 0.5,
            contact_eps: 0.005,
            footprint_min: 0.3,
            inside_min: 0.8,
            carve_margin: 0.02,
            explored_voxel: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    ActivePerception,
    Open,
    Close,
    PickPlace,
    Rotate,
    Retrieve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub step: u32,
    pub target: Option<NodeId>,
    pub action: ActionKind,
    pub goal_text: String,
    pub success: bool,
    pub outcome: String,
    /// Bounding box of the target before the action moved it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub former_box: Option<Aabb>,
}

#[derive(Clone, Debug)]
struct Snapshot {
    step: u32,
    graph: SceneGraph,
    explored: ExploredGrid,
}

#[derive(Clone, Debug)]
pub struct Memory {
    pub graph: SceneGraph,
    pub last_observation: Option<Observation>,
    pub history: Vec<ActionRecord>,
    pub explored: ExploredGrid,
    pub config: MemoryConfig,
    before_step: Option<Snapshot>,
}

impl Default for Memory {
    fn default() -> Self {
        Self::new(MemoryConfig::default())
    }
}

impl Memory {
    pub fn new(config: MemoryConfig) -> Self {
        Self {
            graph: SceneGraph::default(),
            last_observation: None,
            history: Vec::new(),
            explored: ExploredGrid::new(config.explored_voxel),
            config,
            before_step: None,
        }
    }

    /// Append an action record; steps must increase.
    pub fn record(&mut self, rec: ActionRecord) {
        if let Some(last) = self.history.last() {
            assert!(rec.step > last.step, "action history steps must increase");
        }
        self.history.push(rec);
    }

    /// Whether the node was detected in the latest observation.
    pub fn seen_last(&self, id: NodeId) -> bool {
        match (&self.last_observation, self.graph.nodes.get(&id)) {
            (Some(obs), Some(n)) => n.last_step() == Some(obs.step),
            _ => false,
        }
    }
}
