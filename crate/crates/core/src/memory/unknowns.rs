use std::collections::BTreeMap;

use super::{
    ActionKind, ActionRecord, ExploredGrid, MemoryConfig, NodeAttributes, NodeId, NodeKind, PointSet, Provenance, Relation,
    SceneEdge, SceneGraph, SceneNode, UnknownRegion,
};
use crate::geometry::{Aabb, Vec3};
use crate::knowledge;
use crate::observation::CameraPose;
use crate::reasoner::{self, Reasoner, ReasonerError, UnknownProposal};

/// Wall thickness assumed when turning a container box into its interior.
const WALL_INSET: f64 = 0.015;
/// Voxel size for shadow integration.
const SHADOW_VOXEL: f64 = 0.04;
/// Upper bound on stored probe points per region.
const MAX_PROBES: usize = 64;

/// Space above the support surface where objects can be.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Workspace {
    pub bounds: Aabb,
}

impl Default for Workspace {
    fn default() -> Self {
        Self { bounds: Aabb::new(Vec3::new(-0.6, -0.4, 0.0), Vec3::new(0.6, 0.4, 0.45)) }
    }
}

impl Workspace {
    /// Default desk volume, widened to the largest observed table.
    pub fn from_graph(graph: &SceneGraph) -> Self {
        let mut ws = Self::default();
        let support = graph
            .known()
            .filter(|n| n.attrs.name == "table" && !n.stale)
            .filter_map(|n| n.aabb())
            .max_by(|a, b| a.footprint_area().total_cmp(&b.footprint_area()));
        if let Some(s) = support {
            let top = s.max.z;
            ws.bounds.min.x = ws.bounds.min.x.min(s.min.x);
            ws.bounds.min.y = ws.bounds.min.y.min(s.min.y);
            ws.bounds.max.x = ws.bounds.max.x.max(s.max.x);
            ws.bounds.max.y = ws.bounds.max.y.max(s.max.y);
            ws.bounds.min.z = top;
            ws.bounds.max.z = top + 0.45;
        }
        ws
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShadowStats {
    pub total: usize,
    pub unexplored: Vec<Vec3>,
}

impl ShadowStats {
    pub fn unexplored_volume(&self) -> f64 {
        self.unexplored.len() as f64 * SHADOW_VOXEL.powi(3)
    }

    pub fn explored_fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            1.0 - self.unexplored.len() as f64 / self.total as f64
        }
    }
}

fn blockers(graph: &SceneGraph) -> Vec<(NodeId, Aabb)> {
    graph
        .known()
        .filter(|n| !n.stale)
        .filter_map(|n| n.aabb().map(|bb| (n.id, bb)))
        .collect()
}

/// Workspace voxels whose line of sight from the camera is cut by exactly one
/// node's box, grouped by that node. Voxels inside any node box are skipped.
pub fn shadow_volumes(graph: &SceneGraph, camera: &CameraPose, explored: &ExploredGrid, ws: &Workspace) -> BTreeMap<NodeId, ShadowStats> {
    let boxes = blockers(graph);
    let candidates: Vec<&(NodeId, Aabb)> = boxes
        .iter()
        .filter(|(id, _)| {
            let n = &graph.nodes[id];
            !knowledge::is_support_label(&n.attrs.name) && !knowledge::is_part_label(&n.attrs.name)
        })
        .collect();
    let mut out: BTreeMap<NodeId, ShadowStats> = BTreeMap::new();
    let size = ws.bounds.size();
    let dims = [0, 1, 2].map(|i| ((size[i] / SHADOW_VOXEL).round() as usize).max(1));
    let eye = camera.position;
    for c in ws.bounds.grid(dims) {
        if boxes.iter().any(|(_, bb)| bb.contains(&c)) {
            continue;
        }
        let mut hit = None;
        let mut hits = 0;
        for (id, bb) in &boxes {
            if bb.blocks_segment(&eye, &c) {
                hits += 1;
                hit = Some(*id);
            }
        }
        let Some(id) = hit.filter(|_| hits == 1) else { continue };
        if !candidates.iter().any(|(cid, _)| *cid == id) {
            continue;
        }
        let s = out.entry(id).or_default();
        s.total += 1;
        if !explored.is_explored(&c) {
            s.unexplored.push(c);
        }
    }
    out
}

fn subsample(points: Vec<Vec3>) -> Vec<Vec3> {
    if points.len() <= MAX_PROBES {
        return points;
    }
    let stride = points.len() as f64 / MAX_PROBES as f64;
    (0..MAX_PROBES).map(|i| points[(i as f64 * stride) as usize]).collect()
}

fn interior_of(bb: &Aabb) -> Aabb {
    let inset = WALL_INSET.min(0.25 * bb.size().min());
    bb.inflate(-inset)
}

/// Share of probes either looked through or occupied by another known node.
fn explored_share(probes: &[Vec3], parent: NodeId, graph: &SceneGraph, explored: &ExploredGrid) -> f64 {
    if probes.is_empty() {
        return 1.0;
    }
    let occupied: Vec<Aabb> = graph
        .known()
        .filter(|n| n.id != parent && !n.stale && !knowledge::is_support_label(&n.attrs.name))
        .filter_map(|n| n.aabb())
        .collect();
    let seen = probes
        .iter()
        .filter(|p| explored.is_explored(p) || occupied.iter().any(|bb| bb.contains(p)))
        .count();
    seen as f64 / probes.len() as f64
}

fn was_moved(history: &[ActionRecord], id: NodeId) -> bool {
    history
        .iter()
        .any(|r| r.success && r.target == Some(id) && matches!(r.action, ActionKind::PickPlace | ActionKind::Rotate | ActionKind::Retrieve))
}

fn provenance(rel: Relation) -> Provenance {
    match rel {
        Relation::Behind => Provenance::Geometric,
        _ => Provenance::Semantic,
    }
}

/// Add, refresh and resolve Unknown nodes. Closed containers always keep one
/// Inside hypothesis; open containers keep theirs until explored. Large
/// unexplored camera shadows get a Behind hypothesis and concealers an Under
/// one; new Behind/Under hypotheses go to the reasoner for confirmation.
#[allow(clippy::too_many_arguments)]
pub fn hypothesize_unknowns(
    graph: &mut SceneGraph,
    camera: &CameraPose,
    explored: &ExploredGrid,
    history: &[ActionRecord],
    config: &MemoryConfig,
    step: u32,
    reasoner: &mut dyn Reasoner,
) -> Result<(), ReasonerError> {
    // Drop hypotheses whose parent is gone or stale.
    let orphans: Vec<NodeId> = graph
        .unknowns()
        .filter(|u| {
            let parent = u.region.as_ref().map(|r| r.parent);
            parent.and_then(|p| graph.nodes.get(&p)).is_none_or(|p| p.stale || !p.is_known())
        })
        .map(|u| u.id)
        .collect();
    for id in orphans {
        graph.remove_node(id);
    }

    // Containers.
    let containers: Vec<(NodeId, Aabb, bool)> = graph
        .known()
        .filter(|n| !n.stale)
        .filter_map(|n| {
            let art = n.articulation?;
            Some((n.id, n.aabb()?, art.state == crate::world::ContainerState::Closed))
        })
        .collect();
    for (parent, bb, closed) in containers {
        let region = interior_of(&bb);
        let probes = region.grid([4, 4, 3]);
        let share = explored_share(&probes, parent, graph, explored);
        let existing = graph.unknown_child(parent, Relation::Inside);
        let keep = closed || share < config.theta_explored;
        match (existing, keep) {
            (Some(u), true) => {
                let r = graph.nodes.get_mut(&u).and_then(|n| n.region.as_mut()).expect("unknown has region");
                r.region = region;
                r.probes = probes;
                r.explored = share;
            }
            (Some(u), false) => {
                graph.remove_node(u);
            }
            (None, true) => {
                add_unknown(graph, parent, Relation::Inside, region, probes, share, step);
            }
            (None, false) => {}
        }
    }

    // Refresh and resolve existing Behind / Under hypotheses.
    let open: Vec<NodeId> = graph
        .unknowns()
        .filter(|u| u.region.as_ref().is_some_and(|r| r.relation != Relation::Inside))
        .map(|u| u.id)
        .collect();
    for u in open {
        let r = graph.nodes[&u].region.clone().expect("unknown has region");
        let share = explored_share(&r.probes, r.parent, graph, explored);
        if share >= config.theta_explored {
            graph.remove_node(u);
        } else if let Some(reg) = graph.nodes.get_mut(&u).and_then(|n| n.region.as_mut()) {
            reg.explored = share;
        }
    }

    // New Behind / Under proposals.
    let ws = Workspace::from_graph(graph);
    let shadows = shadow_volumes(graph, camera, explored, &ws);
    let mut proposals = Vec::new();
    for (id, s) in &shadows {
        if graph.unknown_child(*id, Relation::Behind).is_some() {
            continue;
        }
        if s.unexplored_volume() > config.v_min && s.explored_fraction() < config.theta_explored {
            let probes = subsample(s.unexplored.clone());
            let half = Vec3::repeat(SHADOW_VOXEL / 2.0);
            let region = s
                .unexplored
                .iter()
                .map(|c| Aabb::from_center_half(*c, half))
                .reduce(|a, b| a.union(&b))
                .expect("nonempty shadow");
            proposals.push((*id, Relation::Behind, region, probes));
        }
    }
    let concealers: Vec<(NodeId, Aabb)> = graph
        .known()
        .filter(|n| !n.stale && knowledge::is_concealer_label(&n.attrs.name))
        .filter(|n| !was_moved(history, n.id))
        .filter_map(|n| Some((n.id, n.aabb()?)))
        .collect();
    for (id, bb) in concealers {
        if graph.unknown_child(id, Relation::Under).is_none() {
            proposals.push((id, Relation::Under, bb, bb.grid([3, 3, 2])));
        }
    }
    if proposals.is_empty() {
        return Ok(());
    }
    let asks: Vec<UnknownProposal> = proposals
        .iter()
        .map(|(p, rel, region, _)| UnknownProposal {
            parent: *p,
            parent_name: graph.nodes[p].attrs.name.clone(),
            relation: *rel,
            volume: region.volume(),
        })
        .collect();
    let confirmed = reasoner::ask_unknowns(reasoner, &asks)?;
    for ((parent, rel, region, probes), ok) in proposals.into_iter().zip(confirmed) {
        if ok {
            let share = explored_share(&probes, parent, graph, explored);
            add_unknown(graph, parent, rel, region, probes, share, step);
        }
    }
    Ok(())
}

fn add_unknown(graph: &mut SceneGraph, parent: NodeId, relation: Relation, region: Aabb, probes: Vec<Vec3>, explored: f64, step: u32) {
    let id = graph.alloc_id();
    graph.nodes.insert(
        id,
        SceneNode {
            id,
            kind: NodeKind::Unknown,
            obs_history: Vec::new(),
            merged_points: PointSet::default(),
            attrs: NodeAttributes::unknown(),
            created_step: step,
            tags: Default::default(),
            articulation: None,
            region: Some(UnknownRegion { parent, relation, region, probes, explored }),
            stale: false,
        },
    );
    graph.insert_edge(SceneEdge { src: id, dst: parent, relation, provenance: provenance(relation), created_step: step });
}
