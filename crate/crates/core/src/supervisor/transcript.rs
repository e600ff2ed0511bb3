use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::{ActionOutcome, Primitive};
use crate::memory::{NodeId, NodeKind, SceneEdge, SceneGraph};
use crate::observation::CameraPose;
use crate::reasoner::Decision;
use crate::world::Category;

use super::Ablation;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum EpisodeStatus {
    Success,
    Failure(String),
    BudgetExhausted,
}

impl EpisodeStatus {
    pub fn is_success(&self) -> bool {
        *self == Self::Success
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub kind: NodeKind,
    pub name: String,
    pub conf: f64,
    pub stale: bool,
}

/// Compact scene-graph view kept per step for replay.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: Vec<NodeSummary>,
    pub edges: Vec<SceneEdge>,
}

impl GraphSummary {
    pub fn of(graph: &SceneGraph) -> Self {
        Self {
            nodes: graph
                .nodes
                .values()
                .map(|n| NodeSummary { id: n.id, kind: n.kind, name: n.attrs.name.clone(), conf: n.attrs.conf, stale: n.stale })
                .collect(),
            edges: graph.edges.clone(),
        }
    }

    /// Human-readable changes from `prev` to `self`, one line each.
    pub fn diff(&self, prev: &GraphSummary) -> Vec<String> {
        let mut out = Vec::new();
        let before: BTreeMap<NodeId, &NodeSummary> = prev.nodes.iter().map(|n| (n.id, n)).collect();
        let after: BTreeMap<NodeId, &NodeSummary> = self.nodes.iter().map(|n| (n.id, n)).collect();
        for (id, n) in &after {
            match before.get(id) {
                None => out.push(format!("+ node {id} {} ({:?})", n.name, n.kind)),
                Some(b) if b.name != n.name => out.push(format!("~ node {id} {} -> {}", b.name, n.name)),
                Some(b) if b.stale != n.stale => out.push(format!("~ node {id} {} stale={}", n.name, n.stale)),
                _ => {}
            }
        }
        for (id, n) in &before {
            if !after.contains_key(id) {
                out.push(format!("- node {id} {}", n.name));
            }
        }
        let name = |map: &BTreeMap<NodeId, &NodeSummary>, id: NodeId| map.get(&id).map_or("?".to_string(), |n| n.name.clone());
        for e in self.edges.iter().filter(|e| !prev.edges.iter().any(|p| p.key() == e.key())) {
            out.push(format!("+ edge {} {} {}", name(&after, e.src), e.relation.as_str(), name(&after, e.dst)));
        }
        for e in prev.edges.iter().filter(|e| !self.edges.iter().any(|p| p.key() == e.key())) {
            out.push(format!("- edge {} {} {}", name(&before, e.src), e.relation.as_str(), name(&before, e.dst)));
        }
        out
    }
}

/// Hex SHA-256 of the serialized graph.
pub fn graph_hash(graph: &SceneGraph) -> String {
    let bytes = serde_json::to_vec(graph).expect("graph serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LowLevelAction {
    MoveCamera { pose: CameraPose, look_closer: bool },
    HoldCamera { reason: String },
    Primitive(Primitive),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub instruction: usize,
    pub camera: CameraPose,
    pub detections: Vec<String>,
    pub memory_hash: String,
    pub graph: GraphSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<LowLevelAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ActionOutcome>,
    /// Ground-truth ids detected so far in the episode, sorted.
    pub discovered: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interventions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstructionResult {
    pub instruction: String,
    pub target: String,
    pub status: EpisodeStatus,
    pub start_step: u32,
    pub steps: u32,
    pub reasoner_calls: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub scenario: String,
    pub category: Category,
    pub seed: u64,
    pub reasoner: String,
    pub ablation: Ablation,
    pub object_count: usize,
    pub steps: Vec<StepRecord>,
    pub instructions: Vec<InstructionResult>,
    pub status: EpisodeStatus,
    pub reasoner_calls: u64,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl Transcript {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Discovered fraction after each step.
    pub fn odr_series(&self) -> Vec<f64> {
        let n = self.object_count.max(1) as f64;
        self.steps.iter().map(|s| s.discovered.len() as f64 / n).collect()
    }

    pub fn final_odr(&self) -> f64 {
        self.odr_series().last().copied().unwrap_or(0.0)
    }

    /// Human-readable step log with per-step graph changes.
    pub fn replay_log(&self) -> String {
        let mut out = format!(
            "scenario {} ({}, seed {}) reasoner {} ablation {}\n",
            self.scenario,
            self.category.as_str(),
            self.seed,
            self.reasoner,
            self.ablation.as_str()
        );
        let mut prev = GraphSummary::default();
        for s in &self.steps {
            out.push_str(&format!("step {} [instruction {}] detections={} discovered={}\n", s.step, s.instruction, s.detections.len(), s.discovered.len()));
            for i in &s.interventions {
                out.push_str(&format!("  intervention: {i}\n"));
            }
            for line in s.graph.diff(&prev) {
                out.push_str(&format!("  {line}\n"));
            }
            if let Some(d) = &s.decision {
                let target = d.target.map_or("-".to_string(), |t| t.to_string());
                out.push_str(&format!("  decide: {:?} on {target}: {}\n", d.action, d.goal_text));
            }
            if let Some(o) = &s.outcome {
                out.push_str(&format!("  outcome: {} ({})\n", if o.success { "ok" } else { "failed" }, o.reason));
            }
            prev = s.graph.clone();
        }
        for r in &self.instructions {
            out.push_str(&format!("instruction {:?}: {:?} in {} steps\n", r.instruction, r.status, r.steps));
        }
        out.push_str(&format!("status: {:?}\n", self.status));
        out
    }
}
