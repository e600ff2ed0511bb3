use std::collections::{BTreeMap, BTreeSet};

use super::{
    action_under_edges, geometric_relations, hypothesize_unknowns, merge_point_sets, match_cost_matrix, Memory,
    NodeAttributes, NodeId, NodeKind, ObsEntry, PointSet, Provenance, SceneEdge, SceneGraph, SceneNode, Snapshot,
};
use crate::observation::Observation;
use crate::reasoner::{
    self, AttrQuery, AttributesPayload, DetectionBrief, MatchPayload, NodeBrief, ProposedEdge, Reasoner, ReasonerError,
    RelationsPayload,
};

/// Share of a node's points that must be seen through before it is marked stale.
const VANISHED_MIN: f64 = 0.8;

fn match_payload(graph: &SceneGraph, obs: &Observation, ids: &[NodeId], costs: Vec<Vec<f64>>, threshold: f64) -> MatchPayload {
    MatchPayload {
        threshold,
        detections: obs
            .detections
            .iter()
            .enumerate()
            .map(|(index, d)| DetectionBrief {
                index,
                label: d.observed_label.clone(),
                centroid: d.centroid(),
                descriptor: d.descriptor.clone(),
                tags: d.facet_tags.clone(),
            })
            .collect(),
        nodes: ids
            .iter()
            .map(|id| {
                let n = &graph.nodes[id];
                NodeBrief {
                    id: *id,
                    name: n.attrs.name.clone(),
                    centroid: n.centroid().unwrap_or_default(),
                    descriptors: n.obs_history.iter().map(|e| e.descriptor.clone()).collect(),
                }
            })
            .collect(),
        costs,
    }
}

/// Whether the observation shows the node's space empty.
fn vanished(node: &SceneNode, obs: &Observation, margin: f64) -> bool {
    let pts = &node.merged_points.points;
    if pts.is_empty() {
        return false;
    }
    let through = pts.iter().filter(|p| obs.depth.sees_through(p, margin)).count();
    through as f64 >= VANISHED_MIN * pts.len() as f64
}

/// Fold one observation into memory. Re-applying an observation of the same
/// step starts again from the memory as it was before that step, so the
/// result does not change. On error the memory is left untouched.
pub fn update_memory(mem: &mut Memory, obs: &Observation, reasoner: &mut dyn Reasoner) -> Result<(), ReasonerError> {
    let (mut graph, mut explored) = match &mem.before_step {
        Some(s) if s.step == obs.step => (s.graph.clone(), s.explored.clone()),
        _ => (mem.graph.clone(), mem.explored.clone()),
    };
    let base = Snapshot { step: obs.step, graph: graph.clone(), explored: explored.clone() };
    let cfg = mem.config;
    explored.integrate(&obs.depth, cfg.carve_margin / 2.0);

    // Instance matching.
    let (ids, costs) = match_cost_matrix(&graph, obs, &cfg);
    let payload = match_payload(&graph, obs, &ids, costs, cfg.theta_match);
    let assignment = reasoner::ask_match(reasoner, &payload)?;

    let mut touched = BTreeSet::new();
    for (det, slot) in obs.detections.iter().zip(&assignment) {
        let entry = ObsEntry {
            step: obs.step,
            descriptor: det.descriptor.clone(),
            visible_fraction: det.visible_fraction,
            frustum_clipped: det.frustum_clipped,
            label: det.observed_label.clone(),
            centroid: det.centroid(),
        };
        let id = match slot {
            Some(id) => {
                let node = graph.nodes.get_mut(id).expect("matched node exists");
                // Drop points the camera now sees past before merging.
                let kept: Vec<_> = node
                    .merged_points
                    .points
                    .iter()
                    .filter(|p| !obs.depth.sees_through(p, cfg.carve_margin))
                    .copied()
                    .collect();
                node.merged_points = PointSet::new(merge_point_sets(&kept, &det.visible_points, cfg.delta));
                node.obs_history.push(entry);
                node.stale = false;
                *id
            }
            None => {
                let id = graph.alloc_id();
                graph.nodes.insert(
                    id,
                    SceneNode {
                        id,
                        kind: NodeKind::Known,
                        obs_history: vec![entry],
                        merged_points: PointSet::new(merge_point_sets(&[], &det.visible_points, cfg.delta)),
                        attrs: NodeAttributes { name: det.observed_label.clone(), ..NodeAttributes::unknown() },
                        created_step: obs.step,
                        tags: BTreeSet::new(),
                        articulation: None,
                        region: None,
                        stale: false,
                    },
                );
                id
            }
        };
        let node = graph.nodes.get_mut(&id).expect("node exists");
        node.tags.extend(det.facet_tags.iter().cloned());
        if det.articulation.is_some() {
            node.articulation = det.articulation;
        }
        touched.insert(id);
    }

    // Known nodes that were not detected although their space is now seen empty.
    for node in graph.nodes.values_mut() {
        if node.is_known() && !node.stale && !touched.contains(&node.id) && vanished(node, obs, cfg.carve_margin) {
            node.stale = true;
            node.attrs.conf *= cfg.gamma_stale;
        }
    }

    // Attributes of every node observed this step.
    if !touched.is_empty() {
        let payload = AttributesPayload {
            theta_full: cfg.theta_full,
            nodes: touched
                .iter()
                .map(|id| AttrQuery { id: *id, history: graph.nodes[id].obs_history.clone() })
                .collect(),
        };
        let attrs = reasoner::ask_attributes(reasoner, &payload)?;
        for (id, a) in touched.iter().zip(attrs) {
            graph.nodes.get_mut(id).expect("node exists").attrs = a;
        }
    }

    // Relations: geometric and semantic edges are recomputed, action edges and
    // edges of Unknown nodes carry over.
    let mut proposed = geometric_relations(&graph, &obs.camera, &cfg, obs.step);
    proposed.extend(action_under_edges(&graph, &mem.history, &cfg));
    let created: BTreeMap<_, u32> = graph.edges.iter().map(|e| (e.key(), e.created_step)).collect();
    let keep = if proposed.is_empty() {
        Vec::new()
    } else {
        let payload = RelationsPayload {
            edges: proposed
                .iter()
                .map(|e| ProposedEdge {
                    edge: e.clone(),
                    src_name: graph.nodes[&e.src].attrs.name.clone(),
                    dst_name: graph.nodes[&e.dst].attrs.name.clone(),
                })
                .collect(),
        };
        reasoner::ask_relations(reasoner, &payload)?
    };
    let unknown: BTreeSet<NodeId> = graph.unknowns().map(|n| n.id).collect();
    graph
        .edges
        .retain(|e| e.provenance == Provenance::Action || unknown.contains(&e.src) || unknown.contains(&e.dst));
    for (e, k) in proposed.into_iter().zip(keep) {
        if k {
            let created_step = created.get(&e.key()).copied().unwrap_or(e.created_step);
            graph.insert_edge(SceneEdge { created_step, ..e });
        }
    }

    hypothesize_unknowns(&mut graph, &obs.camera, &explored, &mem.history, &cfg, obs.step, reasoner)?;

    mem.graph = graph;
    mem.explored = explored;
    mem.before_step = Some(base);
    mem.last_observation = Some(obs.clone());
    Ok(())
}
