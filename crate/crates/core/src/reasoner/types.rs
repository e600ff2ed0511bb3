use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::actions::PrimitiveKind;
use crate::geometry::{Aabb, Vec3};
use crate::memory::{ActionRecord, NodeAttributes, NodeId, NodeKind, ObsEntry, Relation, SceneEdge};
use crate::observation::{Articulation, CanonicalViews};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionBrief {
    pub index: usize,
    pub label: String,
    pub centroid: Vec3,
    pub descriptor: Vec<f64>,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeBrief {
    pub id: NodeId,
    pub name: String,
    pub centroid: Vec3,
    pub descriptors: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchPayload {
    pub threshold: f64,
    pub detections: Vec<DetectionBrief>,
    pub nodes: Vec<NodeBrief>,
    /// `costs[d][n]`: heuristic pairing cost of detection `d` and node `n`.
    pub costs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrQuery {
    pub id: NodeId,
    pub history: Vec<ObsEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributesPayload {
    pub theta_full: f64,
    pub nodes: Vec<AttrQuery>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposedEdge {
    pub edge: SceneEdge,
    pub src_name: String,
    pub dst_name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationsPayload {
    pub edges: Vec<ProposedEdge>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownProposal {
    pub parent: NodeId,
    pub parent_name: String,
    pub relation: Relation,
    pub volume: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownPayload {
    pub proposals: Vec<UnknownProposal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateBrief {
    pub index: usize,
    pub position: Vec3,
    /// Angle from the current viewing direction about the sphere center, radians.
    pub polar: f64,
    pub azimuth: f64,
    /// Predicted coverage of the goal region from this candidate.
    pub score: f64,
}

/// Paths of the canonical renders written for an external reasoner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterPaths {
    pub front: PathBuf,
    pub left: PathBuf,
    pub right: PathBuf,
    pub front_mask: PathBuf,
    pub left_mask: PathBuf,
    pub right_mask: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPayload {
    pub goal_text: String,
    pub target: Option<NodeId>,
    pub center: Vec3,
    pub radius: f64,
    /// Current camera distance to the sphere center.
    pub distance: f64,
    /// Coverage from the current pose.
    pub current_score: f64,
    pub candidates: Vec<CandidateBrief>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rasters: Option<RasterPaths>,
    #[serde(skip)]
    pub views: Option<CanonicalViews>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionView {
    pub parent: NodeId,
    pub relation: Relation,
    pub volume: f64,
    pub explored: f64,
}

/// Agent-side view of one memory node, as given to the decision step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub kind: NodeKind,
    pub attrs: NodeAttributes,
    pub tags: Vec<String>,
    pub articulation: Option<Articulation>,
    pub centroid: Vec3,
    pub aabb: Aabb,
    /// Detected in the latest observation.
    pub seen_last: bool,
    /// Container whose handle side faced the camera in the latest observation.
    pub handle_seen: bool,
    pub stale: bool,
    pub region: Option<RegionView>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecidePayload {
    pub instruction: String,
    pub step: u32,
    /// Step at which the current instruction was issued.
    pub started: u32,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<SceneEdge>,
    pub history: Vec<ActionRecord>,
}

impl DecidePayload {
    pub fn node(&self, id: NodeId) -> Option<&NodeView> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", content = "payload")]
pub enum ReasonerRequest {
    MatchInstances(MatchPayload),
    InferAttributes(AttributesPayload),
    InferRelationsVeto(RelationsPayload),
    HypothesizeUnknown(UnknownPayload),
    SelectDirection(ViewPayload),
    SelectPose(ViewPayload),
    Decide(DecidePayload),
}

impl ReasonerRequest {
    pub const VARIANTS: [&'static str; 7] = [
        "MatchInstances",
        "InferAttributes",
        "InferRelationsVeto",
        "HypothesizeUnknown",
        "SelectDirection",
        "SelectPose",
        "Decide",
    ];

    pub fn variant(&self) -> &'static str {
        match self {
            Self::MatchInstances(_) => "MatchInstances",
            Self::InferAttributes(_) => "InferAttributes",
            Self::InferRelationsVeto(_) => "InferRelationsVeto",
            Self::HypothesizeUnknown(_) => "HypothesizeUnknown",
            Self::SelectDirection(_) => "SelectDirection",
            Self::SelectPose(_) => "SelectPose",
            Self::Decide(_) => "Decide",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseChoice {
    Index(usize),
    LookCloser,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HighLevelAction {
    ActivePerception,
    InteractivePerception(PrimitiveKind),
    Manipulation,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub target: Option<NodeId>,
    pub action: HighLevelAction,
    pub goal_text: String,
    pub declare_done: bool,
    pub declare_failure: Option<String>,
}

impl Decision {
    pub fn act(target: NodeId, action: HighLevelAction, goal_text: impl Into<String>) -> Self {
        Self { target: Some(target), action, goal_text: goal_text.into(), declare_done: false, declare_failure: None }
    }

    pub fn done() -> Self {
        Self { target: None, action: HighLevelAction::None, goal_text: String::new(), declare_done: true, declare_failure: None }
    }

    pub fn fail(reason: impl Into<String>) -> Self {
        Self {
            target: None,
            action: HighLevelAction::None,
            goal_text: String::new(),
            declare_done: false,
            declare_failure: Some(reason.into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerResponse {
    Assignment(Vec<Option<NodeId>>),
    Attributes(Vec<NodeAttributes>),
    Keep(Vec<bool>),
    Confirm(Vec<bool>),
    Direction(usize),
    Pose(PoseChoice),
    Decision(Decision),
}

impl ReasonerResponse {
    /// Request variant this response answers.
    pub fn variant(&self) -> &'static str {
        match self {
            Self::Assignment(_) => "MatchInstances",
            Self::Attributes(_) => "InferAttributes",
            Self::Keep(_) => "InferRelationsVeto",
            Self::Confirm(_) => "HypothesizeUnknown",
            Self::Direction(_) => "SelectDirection",
            Self::Pose(_) => "SelectPose",
            Self::Decision(_) => "Decide",
        }
    }
}
