//! Decision loop: observe, update memory, decide, act, until the instruction
//! is fulfilled or a budget runs out.

mod transcript;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::actions::{self, free_spot, ActionOutcome, OutcomeReason, Primitive, PrimitiveKind, ARM_BASE};
use crate::active_perception::{self, Aperture, Feasibility, PerceptionError, SphereConfig, ViewGoal};
use crate::exec::Exec;
use crate::geometry::{Aabb, Vec3};
use crate::memory::{update_memory, ActionKind, ActionRecord, Memory, MemoryConfig, Relation, SceneNode};
use crate::observation::{observe_with, CameraIntrinsics, CameraPose, NoiseModel, Observation};
use crate::reasoner::{
    self, DecidePayload, Decision, HighLevelAction, NodeView, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse,
    RegionView,
};
use crate::seed;
use crate::world::{apply_intervention, Scenario, WorldState};

pub use transcript::{graph_hash, EpisodeStatus, GraphSummary, InstructionResult, LowLevelAction, NodeSummary, StepRecord, Transcript};

/// Farthest the wrist camera can be from the arm base.
pub const CAMERA_REACH: f64 = 1.2;
/// Clearance kept between camera positions and known boxes.
const CAMERA_CLEARANCE: f64 = 0.02;
/// Largest gap between a node and the object it is bound to.
const BIND_TOLERANCE: f64 = 0.05;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    Full,
    FixedCamera,
    ThreeFixedCameras,
    GenerativePose,
    NoMemory,
}

impl Ablation {
    pub const ALL: [Ablation; 5] =
        [Ablation::Full, Ablation::FixedCamera, Ablation::ThreeFixedCameras, Ablation::GenerativePose, Ablation::NoMemory];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::FixedCamera => "fixed_camera",
            Self::ThreeFixedCameras => "three_fixed_cameras",
            Self::GenerativePose => "generative_pose",
            Self::NoMemory => "no_memory",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL.iter().copied().find(|a| a.as_str() == norm).ok_or_else(|| format!("unknown ablation `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeConfig {
    pub intr: CameraIntrinsics,
    pub noise: NoiseModel,
    pub ablation: Ablation,
    pub sphere: SphereConfig,
    pub memory: MemoryConfig,
    pub exec: Exec,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            intr: CameraIntrinsics::default(),
            noise: NoiseModel::none(),
            ablation: Ablation::Full,
            sphere: SphereConfig::default(),
            memory: MemoryConfig::default(),
            exec: Exec::default(),
        }
    }
}

/// Counts requests by variant on the way through.
struct Counting<'a> {
    inner: &'a mut dyn Reasoner,
    planning: u64,
    total: u64,
}

impl Reasoner for Counting<'_> {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        self.total += 1;
        if matches!(request, ReasonerRequest::Decide(_) | ReasonerRequest::SelectDirection(_) | ReasonerRequest::SelectPose(_)) {
            self.planning += 1;
        }
        self.inner.respond(request)
    }

    fn observe_truth(&mut self, world: &WorldState) {
        self.inner.observe_truth(world);
    }
}

/// Agent-side summary of one node for the decision request.
fn node_view(mem: &Memory, n: &SceneNode, intr: &CameraIntrinsics) -> NodeView {
    let aabb = n.aabb().unwrap_or(Aabb { min: Vec3::zeros(), max: Vec3::zeros() });
    let seen_last = mem.seen_last(n.id);
    let handle_seen = match (n.articulation, &mem.last_observation) {
        (Some(art), Some(obs)) if seen_last => {
            let face = art.handle_face;
            let mut center = aabb.center();
            center[face.axis()] = if face.is_positive() { aabb.max[face.axis()] } else { aabb.min[face.axis()] };
            (obs.camera.position - center).dot(&face.normal()) > 0.0 && intr.sees(&obs.camera, &center)
        }
        _ => false,
    };
    let region = n.region.as_ref().map(|r| RegionView { parent: r.parent, relation: r.relation, volume: r.region.volume(), explored: r.explored });
    NodeView {
        id: n.id,
        kind: n.kind,
        attrs: n.attrs.clone(),
        tags: n.tags.iter().cloned().collect(),
        articulation: n.articulation,
        centroid: n.centroid().unwrap_or_default(),
        aabb,
        seen_last,
        handle_seen,
        stale: n.stale,
        region,
    }
}

pub fn decide_payload(mem: &Memory, instruction: &str, step: u32, started: u32, intr: &CameraIntrinsics) -> DecidePayload {
    DecidePayload {
        instruction: instruction.to_string(),
        step,
        started,
        nodes: mem.graph.nodes.values().map(|n| node_view(mem, n, intr)).collect(),
        edges: mem.graph.edges.clone(),
        history: mem.history.clone(),
    }
}

/// Ask the reasoner for the next decision on the current memory.
pub fn decide(instruction: &str, mem: &Memory, step: u32, started: u32, intr: &CameraIntrinsics, r: &mut dyn Reasoner) -> Result<Decision, ReasonerError> {
    reasoner::ask_decide(r, &decide_payload(mem, instruction, step, started, intr))
}

fn support_top(mem: &Memory) -> f64 {
    mem.graph
        .known()
        .filter(|n| n.attrs.name == "table" && !n.stale)
        .filter_map(|n| n.aabb().map(|b| b.max.z))
        .fold(0.0, f64::max)
}

fn feasibility(mem: &Memory) -> Feasibility {
    Feasibility {
        floor_z: support_top(mem) + CAMERA_CLEARANCE,
        boxes: mem
            .graph
            .known()
            .filter(|n| !n.stale)
            .filter_map(|n| n.aabb().map(|b| b.inflate(CAMERA_CLEARANCE)))
            .collect(),
        base: ARM_BASE,
        max_distance: CAMERA_REACH,
    }
}

/// Points on the face of `bb`, pushed slightly outward.
fn face_points(bb: &Aabb, face: crate::geometry::Facet) -> Vec<Vec3> {
    let axis = face.axis();
    let mut flat = *bb;
    let v = if face.is_positive() { bb.max[axis] } else { bb.min[axis] } + face.normal()[axis] * 0.005;
    flat.min[axis] = v - 1e-6;
    flat.max[axis] = v + 1e-6;
    let mut n = [4, 4, 4];
    n[axis] = 1;
    flat.grid(n)
}

/// What the camera should look at for an active-perception decision.
fn view_goal(mem: &Memory, d: &Decision) -> Option<ViewGoal> {
    let target = mem.graph.nodes.get(&d.target?)?;
    let blockers: Vec<Aabb> = mem.graph.known().filter(|n| !n.stale).filter_map(|n| n.aabb()).collect();
    let mut goal = ViewGoal {
        text: d.goal_text.clone(),
        target: Some(target.id),
        anchor: Vec::new(),
        probes: Vec::new(),
        blockers,
        aperture: None,
        unexplored_only: false,
    };
    match (&target.region, target.articulation) {
        (Some(r), _) => {
            goal.anchor = r.region.grid([2, 2, 2]);
            goal.probes = r.probes.clone();
            goal.unexplored_only = true;
            if r.relation == Relation::Inside {
                let parent = mem.graph.nodes.get(&r.parent)?;
                if let (Some(art), Some(bb)) = (parent.articulation, parent.aabb()) {
                    goal.aperture = Some(Aperture { region: bb, facet: art.aperture });
                }
            }
        }
        (None, Some(art)) if art.state == crate::world::ContainerState::Closed => {
            let bb = target.aabb()?;
            goal.anchor = target.merged_points.points.clone();
            goal.probes = face_points(&bb, art.handle_face);
        }
        _ => {
            goal.anchor = target.merged_points.points.clone();
            goal.probes = target.merged_points.points.clone();
        }
    }
    (!goal.anchor.is_empty()).then_some(goal)
}

/// World object the node stands for: among objects that could have been
/// seen and lie near the node centroid, the one whose box overlaps the node
/// box most, then the nearest, then the lowest id.
fn bind(world: &WorldState, node: &SceneNode) -> Option<String> {
    let c = node.centroid()?;
    // Points from one face give a flat box; thicken it so overlap is defined.
    let nb = node.aabb()?.inflate(0.01);
    let iou = |a: &Aabb, b: &Aabb| {
        let lo = a.min.sup(&b.min);
        let hi = a.max.inf(&b.max);
        let d = (hi - lo).map(|x| x.max(0.0));
        let inter = d.x * d.y * d.z;
        let union = a.volume() + b.volume() - inter;
        if union > 0.0 { inter / union } else { 0.0 }
    };
    world
        .objects
        .values()
        .filter(|o| o.class_label != "table" && world.enclosing_closed_container(&o.id).is_none())
        .map(|o| {
            let bb = o.aabb();
            let q = c.sup(&bb.min).inf(&bb.max);
            (iou(&nb, &bb), (c - q).norm(), o.id.clone())
        })
        .filter(|(_, gap, _)| *gap <= BIND_TOLERANCE)
        .min_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)))
        .map(|(_, _, id)| id)
}

/// Camera poses for the three-camera ablation: the initial pose and the same
/// pose turned by ±60° about the vertical axis through the table centre.
fn fixed_cameras(initial: &CameraPose, support_z: f64) -> [CameraPose; 3] {
    let center = Vec3::new(0.0, 0.0, support_z + 0.1);
    let turn = |deg: f64| {
        let (s, c) = deg.to_radians().sin_cos();
        let p = initial.position;
        CameraPose::look_at(Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z), center)
    };
    [*initial, turn(60.0), turn(-60.0)]
}

/// Ungrounded absolute pose: a seeded point on a shell around the target,
/// looking roughly toward it.
fn generative_pose(center: &Vec3, seed: u64, step: u32) -> CameraPose {
    use rand::Rng;
    let mut rng = seed::rng(seed, 0x6e70_0000 + u64::from(step));
    let r = rng.random_range(0.4..0.9);
    let az = rng.random_range(0.0..std::f64::consts::TAU);
    let el = rng.random_range(0.1..1.2f64);
    let pos = center + Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * r;
    let jitter = Vec3::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15), rng.random_range(-0.1..0.1));
    CameraPose::look_at(pos, center + jitter)
}

fn observe_step(world: &WorldState, cfg: &EpisodeConfig, seed_base: u64, fixed: Option<&[CameraPose; 3]>) -> Observation {
    let seed = seed::mix(seed_base, u64::from(world.step));
    let mut obs = observe_with(cfg.exec, world, &world.camera, &cfg.intr, &cfg.noise, seed);
    if let Some(cams) = fixed {
        let mut seen: BTreeSet<String> = obs.detections.iter().map(|d| d.source_id.clone()).collect();
        for (k, cam) in cams.iter().enumerate().skip(1) {
            let extra = observe_with(cfg.exec, world, cam, &cfg.intr, &cfg.noise, seed::mix(seed, k as u64));
            for d in extra.detections {
                if seen.insert(d.source_id.clone()) {
                    obs.detections.push(d);
                }
            }
        }
    }
    obs
}

fn action_kind(a: HighLevelAction) -> ActionKind {
    match a {
        HighLevelAction::ActivePerception | HighLevelAction::None => ActionKind::ActivePerception,
        HighLevelAction::Manipulation | HighLevelAction::InteractivePerception(PrimitiveKind::Retrieve) => ActionKind::Retrieve,
        HighLevelAction::InteractivePerception(PrimitiveKind::Open) => ActionKind::Open,
        HighLevelAction::InteractivePerception(PrimitiveKind::Close) => ActionKind::Close,
        HighLevelAction::InteractivePerception(PrimitiveKind::PickPlace) => ActionKind::PickPlace,
        HighLevelAction::InteractivePerception(PrimitiveKind::Rotate) => ActionKind::Rotate,
    }
}

fn hold(reason: &str) -> (LowLevelAction, ActionOutcome) {
    (
        LowLevelAction::HoldCamera { reason: reason.to_string() },
        ActionOutcome { success: false, reason: OutcomeReason::NotObserved, world_delta: Vec::new(), former_box: None },
    )
}

/// Carry out a decision. Returns the low-level action and its outcome;
/// reasoner failures abort the episode.
fn dispatch(
    world: &mut WorldState,
    mem: &Memory,
    decision: &Decision,
    cfg: &EpisodeConfig,
    seed_base: u64,
    r: &mut dyn Reasoner,
) -> Result<(LowLevelAction, ActionOutcome), ReasonerError> {
    let obs = mem.last_observation.as_ref();
    match decision.action {
        HighLevelAction::None => Ok(hold("no action")),
        HighLevelAction::ActivePerception => {
            match cfg.ablation {
                Ablation::FixedCamera | Ablation::ThreeFixedCameras => return Ok(hold("camera is fixed")),
                _ => {}
            }
            let Some(goal) = view_goal(mem, decision) else {
                return Ok(hold("target has no geometry"));
            };
            let current = world.camera;
            let pose = if cfg.ablation == Ablation::GenerativePose {
                let center = goal.anchor.iter().fold(Vec3::zeros(), |a, p| a + p) / goal.anchor.len() as f64;
                (generative_pose(&center, seed_base, world.step), false)
            } else {
                let scene: Vec<Vec3> = mem.graph.known().flat_map(|n| n.merged_points.points.iter().copied()).collect();
                let choice = active_perception::select_view(
                    &current,
                    &goal,
                    &scene,
                    Some(&mem.explored),
                    &cfg.intr,
                    &cfg.sphere,
                    &feasibility(mem),
                    r,
                );
                match choice {
                    Ok(c) => (c.pose, c.look_closer),
                    Err(PerceptionError::Reasoner(e)) => return Err(e),
                    Err(e) => return Ok(hold(&e.to_string())),
                }
            };
            world.camera = pose.0;
            Ok((
                LowLevelAction::MoveCamera { pose: pose.0, look_closer: pose.1 },
                ActionOutcome { success: true, reason: OutcomeReason::Ok, world_delta: vec!["camera".into()], former_box: None },
            ))
        }
        HighLevelAction::InteractivePerception(kind) => execute(world, mem, decision, kind, cfg, obs),
        HighLevelAction::Manipulation => execute(world, mem, decision, PrimitiveKind::Retrieve, cfg, obs),
    }
}

fn execute(
    world: &mut WorldState,
    mem: &Memory,
    decision: &Decision,
    kind: PrimitiveKind,
    cfg: &EpisodeConfig,
    obs: Option<&Observation>,
) -> Result<(LowLevelAction, ActionOutcome), ReasonerError> {
    let node = decision.target.and_then(|t| mem.graph.nodes.get(&t));
    let Some(id) = node.and_then(|n| bind(world, n)) else {
        return Ok(hold("nothing physical at the target"));
    };
    let prim = match kind {
        PrimitiveKind::Open => Primitive::open(&id),
        PrimitiveKind::Close => Primitive::close(&id),
        PrimitiveKind::Rotate => Primitive::rotate(&id, std::f64::consts::PI),
        PrimitiveKind::Retrieve => Primitive::retrieve(&id, world.goal_region),
        PrimitiveKind::PickPlace => match free_spot(world, &id) {
            Some(dest) => Primitive::pick_place(&id, dest),
            None => {
                let failed = ActionOutcome {
                    success: false,
                    reason: OutcomeReason::DestinationBlocked,
                    world_delta: Vec::new(),
                    former_box: None,
                };
                return Ok((LowLevelAction::HoldCamera { reason: "no free spot".into() }, failed));
            }
        },
    };
    let outcome = actions::execute_primitive(world, &prim, obs, &cfg.intr).unwrap_or_else(|e| ActionOutcome {
        success: false,
        reason: OutcomeReason::NotObserved,
        world_delta: vec![e.to_string()],
        former_box: None,
    });
    Ok((LowLevelAction::Primitive(prim), outcome))
}

/// Window over which an Open and a Close on the same container with the
/// same goal count as dithering.
const DITHER_WINDOW: usize = 2;

fn reverses_recent(mem: &Memory, d: &Decision) -> bool {
    let opposite = match d.action {
        HighLevelAction::InteractivePerception(PrimitiveKind::Open) => ActionKind::Close,
        HighLevelAction::InteractivePerception(PrimitiveKind::Close) => ActionKind::Open,
        _ => return false,
    };
    mem.history
        .iter()
        .rev()
        .take(DITHER_WINDOW)
        .any(|r| r.success && r.action == opposite && r.target == d.target && r.goal_text == d.goal_text)
}

fn delivered(world: &WorldState, target: &str) -> bool {
    world.objects.get(target).is_some_and(|o| world.goal_region.contains(&o.centroid()))
}

/// Run every instruction of the scenario in order, with memory carried
/// across instructions. Returns the transcript, final memory and final world.
pub fn run_episode_full(scenario: &Scenario, reasoner: &mut dyn Reasoner, cfg: &EpisodeConfig) -> (Transcript, Memory, WorldState) {
    let started_at = Instant::now();
    let mut world = scenario.initial_world.clone();
    world.step = 0;
    let mut mem = Memory::new(cfg.memory);
    let mut r = Counting { inner: reasoner, planning: 0, total: 0 };
    let fixed = (cfg.ablation == Ablation::ThreeFixedCameras).then(|| fixed_cameras(&world.camera, world.support_z()));
    let mut discovered: BTreeSet<String> = BTreeSet::new();
    let mut steps = Vec::new();
    let mut results = Vec::new();
    let mut pending: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    // A script fires after the action of its trigger step, before the next observation.
    for iv in &scenario.interventions {
        pending.entry(iv.trigger_step + 1).or_default().push(iv.script.clone());
    }

    for (k, instruction) in scenario.instructions.iter().enumerate() {
        let target = scenario.target_ids.get(k).cloned().unwrap_or_default();
        let start = world.step;
        let calls_before = r.planning;
        let total_before = r.total;
        let mut n_steps = 0u32;
        let status = loop {
            if n_steps >= scenario.budgets.max_steps || r.planning - calls_before >= u64::from(scenario.budgets.max_reasoner_calls) {
                break EpisodeStatus::BudgetExhausted;
            }
            let mut notes = Vec::new();
            for script in pending.remove(&world.step).unwrap_or_default() {
                match apply_intervention(&mut world, &script) {
                    Ok(()) => notes.push(format!("{script:?}")),
                    Err(e) => notes.push(format!("{script:?} rejected: {e}")),
                }
            }
            r.observe_truth(&world);
            let obs = observe_step(&world, cfg, scenario.seed, fixed.as_ref());
            discovered.extend(obs.detections.iter().map(|d| d.source_id.clone()));
            if cfg.ablation == Ablation::NoMemory {
                let history = std::mem::take(&mut mem.history);
                mem = Memory::new(cfg.memory);
                mem.history = history;
            }
            let mut record = StepRecord {
                step: world.step,
                instruction: k,
                camera: world.camera,
                detections: obs.detections.iter().map(|d| d.observed_label.clone()).collect(),
                memory_hash: String::new(),
                graph: GraphSummary::default(),
                decision: None,
                action: None,
                outcome: None,
                discovered: discovered.iter().cloned().collect(),
                interventions: notes,
            };
            let updated = update_memory(&mut mem, &obs, &mut r);
            record.memory_hash = graph_hash(&mem.graph);
            record.graph = GraphSummary::of(&mem.graph);
            if let Err(e) = updated {
                steps.push(record);
                break EpisodeStatus::Failure(format!("reasoner: {e}"));
            }
            let decision = match decide(instruction, &mem, world.step, start, &cfg.intr, &mut r) {
                Ok(d) => d,
                Err(e) => {
                    steps.push(record);
                    break EpisodeStatus::Failure(format!("reasoner: {e}"));
                }
            };
            record.decision = Some(decision.clone());
            if decision.declare_done {
                steps.push(record);
                break if delivered(&world, &target) {
                    EpisodeStatus::Success
                } else {
                    EpisodeStatus::Failure("declared done before delivering the target".into())
                };
            }
            if let Some(reason) = &decision.declare_failure {
                steps.push(record);
                break EpisodeStatus::Failure(reason.clone());
            }
            let (action, outcome) = if reverses_recent(&mem, &decision) {
                hold("undoing a recent open or close")
            } else {
                match dispatch(&mut world, &mem, &decision, cfg, scenario.seed, &mut r) {
                    Ok(x) => x,
                    Err(e) => {
                        steps.push(record);
                        break EpisodeStatus::Failure(format!("reasoner: {e}"));
                    }
                }
            };
            mem.record(ActionRecord {
                step: world.step,
                target: decision.target,
                action: action_kind(decision.action),
                goal_text: decision.goal_text.clone(),
                success: outcome.success,
                outcome: outcome.reason.to_string(),
                former_box: outcome.former_box,
            });
            record.action = Some(action);
            record.outcome = Some(outcome);
            steps.push(record);
            world.step += 1;
            n_steps += 1;
            if delivered(&world, &target) {
                break EpisodeStatus::Success;
            }
        };
        results.push(InstructionResult {
            instruction: instruction.clone(),
            target,
            status,
            start_step: start,
            steps: n_steps,
            reasoner_calls: r.total - total_before,
        });
    }

    let status = results
        .iter()
        .map(|x| x.status.clone())
        .find(|s| !s.is_success())
        .unwrap_or(if results.is_empty() { EpisodeStatus::Failure("no instructions".into()) } else { EpisodeStatus::Success });
    let transcript = Transcript {
        scenario: scenario.name.clone(),
        category: scenario.category,
        seed: scenario.seed,
        reasoner: r.name(),
        ablation: cfg.ablation,
        object_count: scenario.initial_world.objects.len(),
        steps,
        instructions: results,
        status,
        reasoner_calls: r.total,
        wall_time: started_at.elapsed(),
    };
    (transcript, mem, world)
}

pub fn run_episode(scenario: &Scenario, reasoner: &mut dyn Reasoner, cfg: &EpisodeConfig) -> Transcript {
    run_episode_full(scenario, reasoner, cfg).0
}
