//! Reasoner interface: typed requests and responses, the in-process
//! heuristic and oracle reasoners, and the external process adapter.

mod external;
mod heuristic;
mod oracle;
mod types;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::memory::{NodeAttributes, NodeId, NodeKind};
use crate::world::WorldState;

pub use external::{decode_request, decode_response, encode_response, ExternalReasoner, DEFAULT_TIMEOUT};
pub use heuristic::{heuristic_decide, parse_instruction, HeuristicReasoner, TargetSpec};
pub use oracle::OracleReasoner;
pub use types::*;

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
}

pub trait Reasoner {
    fn name(&self) -> String;

    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError>;

    /// Ground truth for oracle reasoners; ignored by everything else.
    fn observe_truth(&mut self, _world: &WorldState) {}
}

fn wrong_variant(expected: &str, got: &ReasonerResponse) -> ReasonerError {
    ReasonerError::Protocol(format!("expected a {expected} response, got {}", got.variant()))
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), ReasonerError> {
    if got == want {
        Ok(())
    } else {
        Err(ReasonerError::Schema(format!("{what}: {got} entries for {want} items")))
    }
}

/// Send a request and validate the answer, retrying once on an
/// out-of-range answer.
fn ask<T>(
    r: &mut dyn Reasoner,
    req: ReasonerRequest,
    check: impl Fn(ReasonerResponse) -> Result<T, ReasonerError>,
) -> Result<T, ReasonerError> {
    match r.respond(&req).and_then(&check) {
        Err(ReasonerError::OutOfRange(_)) => r.respond(&req).and_then(&check),
        other => other,
    }
}

pub fn ask_match(r: &mut dyn Reasoner, payload: &MatchPayload) -> Result<Vec<Option<NodeId>>, ReasonerError> {
    if payload.detections.is_empty() {
        return Ok(Vec::new());
    }
    let valid: BTreeSet<NodeId> = payload.nodes.iter().map(|n| n.id).collect();
    ask(r, ReasonerRequest::MatchInstances(payload.clone()), |resp| {
        let ReasonerResponse::Assignment(a) = resp else {
            return Err(wrong_variant("MatchInstances", &resp));
        };
        check_len("assignment", a.len(), payload.detections.len())?;
        let mut used = BTreeSet::new();
        for id in a.iter().flatten() {
            if !valid.contains(id) {
                return Err(ReasonerError::OutOfRange(format!("node {id} is not a match candidate")));
            }
            if !used.insert(*id) {
                return Err(ReasonerError::Schema(format!("node {id} assigned twice")));
            }
        }
        Ok(a)
    })
}

pub fn ask_attributes(r: &mut dyn Reasoner, payload: &AttributesPayload) -> Result<Vec<NodeAttributes>, ReasonerError> {
    ask(r, ReasonerRequest::InferAttributes(payload.clone()), |resp| {
        let ReasonerResponse::Attributes(a) = resp else {
            return Err(wrong_variant("InferAttributes", &resp));
        };
        check_len("attributes", a.len(), payload.nodes.len())?;
        if let Some(bad) = a.iter().find(|x| !(0.0..=1.0).contains(&x.conf)) {
            return Err(ReasonerError::OutOfRange(format!("confidence {} outside [0, 1]", bad.conf)));
        }
        if let Some(bad) = a.iter().find(|x| x.name.trim().is_empty() || x.name == "unknown") {
            return Err(ReasonerError::Schema(format!("invalid node name {:?}", bad.name)));
        }
        Ok(a)
    })
}

pub fn ask_relations(r: &mut dyn Reasoner, payload: &RelationsPayload) -> Result<Vec<bool>, ReasonerError> {
    ask(r, ReasonerRequest::InferRelationsVeto(payload.clone()), |resp| {
        let ReasonerResponse::Keep(k) = resp else {
            return Err(wrong_variant("InferRelationsVeto", &resp));
        };
        check_len("keep", k.len(), payload.edges.len())?;
        Ok(k)
    })
}

pub fn ask_unknowns(r: &mut dyn Reasoner, proposals: &[UnknownProposal]) -> Result<Vec<bool>, ReasonerError> {
    let payload = UnknownPayload { proposals: proposals.to_vec() };
    ask(r, ReasonerRequest::HypothesizeUnknown(payload), |resp| {
        let ReasonerResponse::Confirm(c) = resp else {
            return Err(wrong_variant("HypothesizeUnknown", &resp));
        };
        check_len("confirm", c.len(), proposals.len())?;
        Ok(c)
    })
}

fn check_index(i: usize, n: usize) -> Result<usize, ReasonerError> {
    if i < n {
        Ok(i)
    } else {
        Err(ReasonerError::OutOfRange(format!("candidate {i} of {n}")))
    }
}

pub fn ask_direction(r: &mut dyn Reasoner, payload: &ViewPayload) -> Result<usize, ReasonerError> {
    let n = payload.candidates.len();
    ask(r, ReasonerRequest::SelectDirection(payload.clone()), |resp| match resp {
        ReasonerResponse::Direction(i) => check_index(i, n),
        other => Err(wrong_variant("SelectDirection", &other)),
    })
}

pub fn ask_pose(r: &mut dyn Reasoner, payload: &ViewPayload) -> Result<PoseChoice, ReasonerError> {
    let n = payload.candidates.len();
    ask(r, ReasonerRequest::SelectPose(payload.clone()), |resp| match resp {
        ReasonerResponse::Pose(PoseChoice::Index(i)) => check_index(i, n).map(PoseChoice::Index),
        ReasonerResponse::Pose(PoseChoice::LookCloser) => Ok(PoseChoice::LookCloser),
        other => Err(wrong_variant("SelectPose", &other)),
    })
}

pub fn ask_decide(r: &mut dyn Reasoner, payload: &DecidePayload) -> Result<Decision, ReasonerError> {
    ask(r, ReasonerRequest::Decide(payload.clone()), |resp| {
        let ReasonerResponse::Decision(d) = resp else {
            return Err(wrong_variant("Decide", &resp));
        };
        if d.declare_done || d.declare_failure.is_some() {
            return Ok(d);
        }
        if d.action == HighLevelAction::None {
            return Err(ReasonerError::Schema("decision without an action".into()));
        }
        let Some(id) = d.target else {
            return Err(ReasonerError::Schema("action without a target".into()));
        };
        let Some(node) = payload.node(id) else {
            return Err(ReasonerError::OutOfRange(format!("target {id} is not in memory")));
        };
        if node.kind == NodeKind::Unknown && d.action != HighLevelAction::ActivePerception {
            return Err(ReasonerError::OutOfRange(format!("target {id} is an unknown region")));
        }
        Ok(d)
    })
}
