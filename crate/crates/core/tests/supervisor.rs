use retrieval_core::geometry::{Aabb, Pose, Vec3};
use retrieval_core::harness::generate_scenario;
use retrieval_core::observation::CameraPose;
use retrieval_core::reasoner::{HeuristicReasoner, OracleReasoner};
use retrieval_core::supervisor::{run_episode, run_episode_full, Ablation, EpisodeConfig, EpisodeStatus, LowLevelAction, Transcript};
use retrieval_core::world::{Budgets, Category, ContainerState, InterventionScript, Scenario, ScheduledIntervention, SimObject, WorldState};

fn exposed_cola() -> Scenario {
    let camera = CameraPose::look_at(Vec3::new(0.0, 0.45, 0.6), Vec3::new(0.0, -0.15, 0.0));
    let goal = Aabb::from_center_half(Vec3::new(0.72, -0.25, 0.08), Vec3::repeat(0.08));
    let mut w = WorldState::new(camera, goal);
    w.add_object(SimObject::new("table", "table", "table", Pose::at(Vec3::new(0.0, 0.0, -0.025)), Vec3::new(0.6, 0.4, 0.025), false));
    w.add_object(SimObject::new("cola", "cola", "cola", Pose::at(Vec3::new(0.05, -0.25, 0.055)), Vec3::new(0.025, 0.025, 0.055), true));
    w.recompute_relations();
    Scenario {
        name: "exposed".into(),
        category: Category::HiddenInside,
        seed: 0,
        initial_world: w,
        instructions: vec!["bring me the cola".into()],
        target_ids: vec!["cola".into()],
        interventions: vec![],
        budgets: Budgets::default(),
    }
}

#[test]
fn exposed_target_is_retrieved_quickly() {
    let t = run_episode(&exposed_cola(), &mut HeuristicReasoner, &EpisodeConfig::default());
    assert_eq!(t.status, EpisodeStatus::Success);
    assert!(t.steps.len() <= 3, "{} steps", t.steps.len());
    assert_eq!(t.final_odr(), 1.0);
}

#[test]
fn zero_step_budget_is_exhausted_at_once() {
    let mut s = exposed_cola();
    s.budgets.max_steps = 0;
    let t = run_episode(&s, &mut HeuristicReasoner, &EpisodeConfig::default());
    assert_eq!(t.status, EpisodeStatus::BudgetExhausted);
    assert!(t.steps.is_empty());
}

#[test]
fn reasoner_call_budget_stops_the_episode() {
    let mut s = generate_scenario(Category::HiddenInside, 2).unwrap();
    s.budgets.max_reasoner_calls = 1;
    let t = run_episode(&s, &mut HeuristicReasoner, &EpisodeConfig::default());
    assert_eq!(t.status, EpisodeStatus::BudgetExhausted);
    assert!(t.steps.len() <= 2);
}

#[test]
fn transcripts_round_trip() {
    let s = generate_scenario(Category::HiddenInside, 4).unwrap();
    let t = run_episode(&s, &mut OracleReasoner::new(), &EpisodeConfig::default());
    assert!(t.steps.iter().any(|r| matches!(r.action, Some(LowLevelAction::Primitive(_)))));
    assert!(t.steps.iter().any(|r| matches!(r.action, Some(LowLevelAction::MoveCamera { .. }))));
    let back = Transcript::from_json(&t.to_json()).unwrap();
    assert_eq!(back.to_json(), t.to_json());
    assert_eq!(back.steps, t.steps);
}

#[test]
fn scheduled_intervention_fires_and_is_logged() {
    let mut s = generate_scenario(Category::HiddenInside, 5).unwrap();
    let target = s.target_ids[0].clone();
    let container = s.initial_world.inside_of[&target].clone();
    s.interventions.push(ScheduledIntervention {
        trigger_step: 0,
        script: InterventionScript::SetContainer { id: container.clone(), state: ContainerState::Open },
    });
    let (t, _, world) = run_episode_full(&s, &mut HeuristicReasoner, &EpisodeConfig::default());
    assert!(t.steps[0].interventions.is_empty());
    assert_eq!(t.steps[1].interventions.len(), 1);
    assert_eq!(world.containers[&container].state, ContainerState::Open);
}

#[test]
fn fixed_camera_never_moves() {
    let s = generate_scenario(Category::HiddenInside, 6).unwrap();
    let cfg = EpisodeConfig { ablation: Ablation::FixedCamera, ..EpisodeConfig::default() };
    let t = run_episode(&s, &mut HeuristicReasoner, &cfg);
    assert!(t.steps.iter().all(|r| r.camera == s.initial_world.camera));
}
