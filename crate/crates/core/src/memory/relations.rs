use super::{ActionKind, ActionRecord, MemoryConfig, NodeId, Provenance, Relation, SceneEdge, SceneGraph, SceneNode};
use crate::geometry::{Aabb, Vec3};
use crate::knowledge;
use crate::observation::CameraPose;

/// Distance within which a part is attached to its container.
const BELONG_GAP: f64 = 0.02;
/// Shrink applied to a container box before counting points inside it.
const INSIDE_SHRINK: f64 = 0.002;
/// Shrink applied to an occluder box in the line-of-sight test.
const BEHIND_SHRINK: f64 = 0.005;

struct Shape<'a> {
    node: &'a SceneNode,
    bb: Aabb,
    centroid: Vec3,
    min_z: f64,
    max_z: f64,
}

impl Shape<'_> {
    fn is_container(&self) -> bool {
        self.node.articulation.is_some() || knowledge::is_container_label(&self.node.attrs.name)
    }

    fn is_part(&self) -> bool {
        knowledge::is_part_label(&self.node.attrs.name)
    }

    fn is_support(&self) -> bool {
        knowledge::is_support_label(&self.node.attrs.name)
    }
}

fn edge(src: NodeId, dst: NodeId, relation: Relation, provenance: Provenance, step: u32) -> SceneEdge {
    SceneEdge { src, dst, relation, provenance, created_step: step }
}

/// Relations derived from geometry and the label table, over Known,
/// non-stale nodes. Behind is judged from `camera`.
pub fn geometric_relations(graph: &SceneGraph, camera: &CameraPose, config: &MemoryConfig, step: u32) -> Vec<SceneEdge> {
    let shapes: Vec<Shape> = graph
        .known()
        .filter(|n| !n.stale && !n.merged_points.is_empty())
        .map(|n| Shape {
            node: n,
            bb: n.merged_points.aabb().expect("nonempty"),
            centroid: n.merged_points.centroid().expect("nonempty"),
            min_z: n.merged_points.min_z(),
            max_z: n.merged_points.max_z(),
        })
        .collect();
    let mut out = Vec::new();

    // On, and Under as its inverse when the supporting object is movable.
    for a in &shapes {
        let mut best: Option<(&Shape, f64)> = None;
        for b in &shapes {
            if a.node.id == b.node.id || (a.min_z - b.max_z).abs() > config.contact_eps || a.max_z <= b.max_z {
                continue;
            }
            let overlap = a.bb.footprint_overlap(&b.bb);
            if overlap >= config.footprint_min * a.bb.footprint_area() && overlap > 0.0 && best.is_none_or(|(_, o)| overlap > o) {
                best = Some((b, overlap));
            }
        }
        if let Some((b, _)) = best {
            out.push(edge(a.node.id, b.node.id, Relation::On, Provenance::Geometric, step));
            if b.node.attrs.movable && !b.is_container() {
                out.push(edge(b.node.id, a.node.id, Relation::Under, Provenance::Geometric, step));
            }
        }
    }

    // Inside: most of the points fall within a container's box.
    for a in shapes.iter().filter(|s| !s.is_container() && !s.is_part()) {
        for b in shapes.iter().filter(|s| s.is_container() && s.node.id != a.node.id) {
            let inner = b.bb.inflate(-INSIDE_SHRINK);
            let inside = a.node.merged_points.points.iter().filter(|p| inner.contains(p)).count();
            if inside as f64 >= config.inside_min * a.node.merged_points.len() as f64 {
                out.push(edge(a.node.id, b.node.id, Relation::Inside, Provenance::Geometric, step));
                break;
            }
        }
    }

    // Belong: parts attach to the nearest container.
    for a in shapes.iter().filter(|s| s.is_part()) {
        let near = shapes
            .iter()
            .filter(|b| b.is_container() && b.node.id != a.node.id && a.bb.inflate(BELONG_GAP).overlaps(&b.bb, 0.0))
            .min_by(|x, y| (x.centroid - a.centroid).norm().total_cmp(&(y.centroid - a.centroid).norm()));
        if let Some(b) = near {
            out.push(edge(a.node.id, b.node.id, Relation::Belong, Provenance::Semantic, step));
        }
    }

    // Behind: the line of sight to B's centroid crosses A's box, A nearer.
    let related = |x: NodeId, y: NodeId, out: &[SceneEdge]| {
        out.iter().any(|e| (e.src == x && e.dst == y) || (e.src == y && e.dst == x))
    };
    let eye = camera.position;
    let mut behind = Vec::new();
    for b in &shapes {
        if b.is_support() || b.is_part() {
            continue;
        }
        for a in &shapes {
            if a.node.id == b.node.id || a.is_support() || a.is_part() || a.bb.contains(&b.centroid) {
                continue;
            }
            if (a.centroid - eye).norm() >= (b.centroid - eye).norm() || related(a.node.id, b.node.id, &out) {
                continue;
            }
            let shrunk = a.bb.inflate(-BEHIND_SHRINK);
            if shrunk.is_valid() && shrunk.blocks_segment(&eye, &b.centroid) {
                behind.push(edge(b.node.id, a.node.id, Relation::Behind, Provenance::Geometric, step));
            }
        }
    }
    out.extend(behind);
    out.sort();
    out.dedup_by(|x, y| x.key() == y.key());
    out
}

/// "Lifting one object to reveal another": a node first seen right after a
/// Pick&Place, lying in the lifted object's former footprint, is Under it.
pub fn action_under_edges(graph: &SceneGraph, history: &[ActionRecord], config: &MemoryConfig) -> Vec<SceneEdge> {
    let mut out = Vec::new();
    for rec in history.iter().filter(|r| r.success && r.action == ActionKind::PickPlace) {
        let (Some(p), Some(former)) = (rec.target, rec.former_box) else {
            continue;
        };
        if !graph.nodes.contains_key(&p) {
            continue;
        }
        for n in graph.known().filter(|n| n.id != p && n.created_step == rec.step + 1) {
            let Some(bb) = n.merged_points.aabb() else { continue };
            let overlap = bb.footprint_overlap(&former);
            if overlap > 0.0 && overlap >= config.footprint_min * bb.footprint_area() && bb.min.z <= former.max.z {
                out.push(edge(n.id, p, Relation::Under, Provenance::Action, n.created_step));
            }
        }
    }
    out
}
