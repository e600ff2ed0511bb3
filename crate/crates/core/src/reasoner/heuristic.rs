use crate::actions::PrimitiveKind;
use crate::geometry::Vec3;
use crate::knowledge;
use crate::memory::{heuristic_attributes, solve_assignment, ActionKind, NodeId, NodeKind, Relation};
use crate::world::ContainerState;

use super::{
    DecidePayload, Decision, HighLevelAction, NodeView, PoseChoice, Reasoner, ReasonerError, ReasonerRequest,
    ReasonerResponse, ViewPayload,
};

/// Attempts on one region after which it drops behind fresh ones.
const MAX_ATTEMPTS: usize = 3;
/// Best predicted coverage below which a closer sphere is requested.
const LOOK_CLOSER_BELOW: f64 = 0.2;
/// Distance, in sphere radii, under which the heuristic never asks to look closer.
const LOOK_CLOSER_RATIO: f64 = 1.5;

/// Object requested by an instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSpec {
    /// Fine label, e.g. `shampoo`.
    pub label: String,
    /// Label shown while no discriminating tag has been read, e.g. `bottle`.
    pub class: String,
}

pub fn parse_instruction(text: &str) -> Option<TargetSpec> {
    let label = *knowledge::mentioned_labels(text).first()?;
    let class = knowledge::class_of(label).unwrap_or(label);
    Some(TargetSpec { label: label.to_string(), class: class.to_string() })
}

/// Rule-based reasoner. Answers are pure functions of the request.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeuristicReasoner;

impl Reasoner for HeuristicReasoner {
    fn name(&self) -> String {
        "heuristic".into()
    }

    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        Ok(heuristic_response(request, None))
    }
}

pub(crate) fn heuristic_response(request: &ReasonerRequest, hint: Option<Vec3>) -> ReasonerResponse {
    match request {
        ReasonerRequest::MatchInstances(p) => {
            let cols = solve_assignment(&p.costs, p.threshold);
            ReasonerResponse::Assignment(cols.into_iter().map(|c| c.map(|j| p.nodes[j].id)).collect())
        }
        ReasonerRequest::InferAttributes(p) => {
            ReasonerResponse::Attributes(p.nodes.iter().map(|n| heuristic_attributes(&n.history, p.theta_full)).collect())
        }
        ReasonerRequest::InferRelationsVeto(p) => ReasonerResponse::Keep(vec![true; p.edges.len()]),
        ReasonerRequest::HypothesizeUnknown(p) => ReasonerResponse::Confirm(vec![true; p.proposals.len()]),
        ReasonerRequest::SelectDirection(p) => ReasonerResponse::Direction(best_candidate(p, false).unwrap_or(0)),
        ReasonerRequest::SelectPose(p) => {
            let best = best_candidate(p, true).unwrap_or(0);
            let score = p.candidates.get(best).map_or(0.0, |c| c.score);
            // Closer only pays off when the goal is already in view but far.
            if score < LOOK_CLOSER_BELOW && p.current_score > score && p.distance > LOOK_CLOSER_RATIO * p.radius {
                ReasonerResponse::Pose(PoseChoice::LookCloser)
            } else {
                ReasonerResponse::Pose(PoseChoice::Index(best))
            }
        }
        ReasonerRequest::Decide(p) => ReasonerResponse::Decision(heuristic_decide(p, hint)),
    }
}

/// Highest scoring candidate. Ties go to the lowest index, or the highest
/// with `farthest`, which for poses means the longest move.
fn best_candidate(p: &ViewPayload, farthest: bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in p.candidates.iter().enumerate() {
        if best.is_none_or(|(_, s)| c.score > s || (farthest && c.score == s)) {
            best = Some((i, c.score));
        }
    }
    best.map(|(i, _)| i)
}

fn attempts(p: &DecidePayload, ids: &[NodeId]) -> usize {
    p.history
        .iter()
        .filter(|r| {
            r.target.is_some_and(|t| ids.contains(&t))
                && (!r.success || matches!(r.action, ActionKind::ActivePerception | ActionKind::Rotate))
        })
        .count()
}

fn last_failed(p: &DecidePayload, id: NodeId, kind: ActionKind) -> bool {
    p.history.last().is_some_and(|r| r.target == Some(id) && r.action == kind && !r.success)
}

fn distance_to(n: &NodeView, hint: Option<Vec3>) -> f64 {
    hint.map_or(0.0, |h| {
        let q = h.sup(&n.aabb.min).inf(&n.aabb.max);
        (h - q).norm()
    })
}

/// Pick among equally named nodes: closest to the hint, then most confident,
/// then lowest id.
fn pick<'a>(nodes: Vec<&'a NodeView>, hint: Option<Vec3>) -> Option<&'a NodeView> {
    nodes.into_iter().min_by(|a, b| {
        distance_to(a, hint)
            .total_cmp(&distance_to(b, hint))
            .then(b.attrs.conf.total_cmp(&a.attrs.conf))
            .then(a.id.cmp(&b.id))
    })
}

fn relevance(parent: &NodeView, target: &str) -> f64 {
    if parent.tags.is_empty() {
        return 0.5;
    }
    parent.tags.iter().map(|t| knowledge::tag_relevance(t, target)).fold(0.0, f64::max)
}

/// Next step toward retrieving the instructed object from the memory view.
/// `hint`, when given, is where the object really is; the oracle uses it to
/// break ties that the heuristic resolves blindly.
pub fn heuristic_decide(p: &DecidePayload, hint: Option<Vec3>) -> Decision {
    let Some(spec) = parse_instruction(&p.instruction) else {
        return Decision::fail("instruction names no known object");
    };
    if p.history.last().is_some_and(|r| r.action == ActionKind::Retrieve && r.success && r.step >= p.started) {
        return Decision::done();
    }
    let live: Vec<&NodeView> = p.nodes.iter().filter(|n| n.kind == NodeKind::Known && !n.stale).collect();

    // The object itself is in memory.
    let named: Vec<&NodeView> = live.iter().copied().filter(|n| n.attrs.name == spec.label).collect();
    if let Some(t) = pick(named, hint) {
        let on_top = p
            .edges
            .iter()
            .filter(|e| e.relation == Relation::On && e.dst == t.id)
            .filter_map(|e| live.iter().find(|n| n.id == e.src && n.attrs.movable))
            .min_by_key(|n| n.id);
        if let Some(b) = on_top {
            return Decision::act(
                b.id,
                HighLevelAction::InteractivePerception(PrimitiveKind::PickPlace),
                format!("clear the {} off the {}", b.attrs.name, spec.label),
            );
        }
        if t.seen_last && !last_failed(p, t.id, ActionKind::Retrieve) {
            return Decision::act(t.id, HighLevelAction::Manipulation, format!("retrieve the {}", spec.label));
        }
        return Decision::act(t.id, HighLevelAction::ActivePerception, format!("look at the {}", spec.label));
    }

    // Look-alikes whose tag has not been read yet.
    if spec.class != spec.label {
        let unread: Vec<&NodeView> = live
            .iter()
            .copied()
            .filter(|n| n.attrs.name == spec.class && attempts(p, &[n.id]) < MAX_ATTEMPTS)
            .collect();
        if let Some(c) = pick(unread, hint) {
            let rotated = p.history.iter().any(|r| r.target == Some(c.id) && r.action == ActionKind::Rotate && r.success);
            if c.seen_last && !rotated && !last_failed(p, c.id, ActionKind::Rotate) {
                return Decision::act(
                    c.id,
                    HighLevelAction::InteractivePerception(PrimitiveKind::Rotate),
                    format!("turn the {} to read its label", spec.class),
                );
            }
            return Decision::act(c.id, HighLevelAction::ActivePerception, format!("look at the {}", spec.class));
        }
    }

    // Explore the most promising unknown region.
    let last_targets: Vec<NodeId> = p.history.iter().rev().take(2).filter_map(|r| r.target).collect();
    let mut best: Option<(f64, NodeId, &NodeView, &NodeView)> = None;
    for u in p.nodes.iter().filter(|n| n.kind == NodeKind::Unknown) {
        let Some(region) = &u.region else { continue };
        let Some(parent) = live.iter().find(|n| n.id == region.parent) else { continue };
        let mut score = 10.0 * relevance(parent, &spec.label);
        score += match region.relation {
            Relation::Inside => 3.0,
            Relation::Under => 2.0,
            _ => 1.0,
        };
        score += (region.volume * 1000.0).min(1.0) * 0.1;
        let tried = attempts(p, &[u.id, parent.id]);
        if tried >= MAX_ATTEMPTS {
            score -= 100.0;
        } else if last_targets.iter().any(|t| *t == u.id || *t == parent.id) {
            score += 5.0;
        }
        if let Some(h) = hint {
            if parent.aabb.inflate(0.02).contains(&h) || u.aabb.inflate(0.02).contains(&h) {
                score += 1000.0;
            }
        }
        if best.as_ref().is_none_or(|(s, id, _, _)| score > *s || (score == *s && u.id < *id)) {
            best = Some((score, u.id, u, parent));
        }
    }
    let Some((_, _, u, parent)) = best else {
        return Decision::fail(format!("no {} found and nothing left to explore", spec.label));
    };
    let relation = u.region.as_ref().map(|r| r.relation).expect("unknown has region");
    match relation {
        Relation::Inside => {
            let closed = parent.articulation.is_some_and(|a| a.state == ContainerState::Closed);
            if !closed {
                Decision::act(u.id, HighLevelAction::ActivePerception, format!("look inside the {}", parent.attrs.name))
            } else if parent.handle_seen && !last_failed(p, parent.id, ActionKind::Open) {
                Decision::act(
                    parent.id,
                    HighLevelAction::InteractivePerception(PrimitiveKind::Open),
                    format!("open the {}", parent.attrs.name),
                )
            } else {
                Decision::act(
                    parent.id,
                    HighLevelAction::ActivePerception,
                    format!("view the handle of the {}", parent.attrs.name),
                )
            }
        }
        Relation::Under if !last_failed(p, parent.id, ActionKind::PickPlace) => Decision::act(
            parent.id,
            HighLevelAction::InteractivePerception(PrimitiveKind::PickPlace),
            format!("lift the {}", parent.attrs.name),
        ),
        Relation::Under => {
            Decision::act(parent.id, HighLevelAction::ActivePerception, format!("look at the {}", parent.attrs.name))
        }
        _ => Decision::act(u.id, HighLevelAction::ActivePerception, format!("look behind the {}", parent.attrs.name)),
    }
}
