use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use retrieval_core::actions::{execute_primitive, Primitive, PrimitiveKind};
use retrieval_core::active_perception::{build_sphere, sample_directions, sample_poses_along, Feasibility, SphereConfig};
use retrieval_core::geometry::{Aabb, Pose, Vec3};
use retrieval_core::harness::{generate_scenario, score_episode, MetricsReport};
use retrieval_core::observation::{observe, sample_visibility, CameraIntrinsics, CameraPose, NoiseModel};
use retrieval_core::reasoner::{decode_request, HeuristicReasoner, Reasoner, ReasonerError, ReasonerRequest, ReasonerResponse};
use retrieval_core::supervisor::{run_episode, run_episode_full, EpisodeConfig, EpisodeStatus, LowLevelAction};
use retrieval_core::world::{apply_intervention, ground_truth_graph, Category, ContainerState, InterventionScript, SimObject};

fn category() -> impl Strategy<Value = Category> {
    prop::sample::select(Category::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn samples_stay_on_their_box(
        hx in 0.005f64..0.2, hy in 0.005f64..0.2, hz in 0.005f64..0.2,
        x in -0.5f64..0.5, y in -0.5f64..0.5, yaw in -3.2f64..3.2,
    ) {
        let o = SimObject::new("o", "box", "box", Pose { yaw, ..Pose::at(Vec3::new(x, y, hz)) }, Vec3::new(hx, hy, hz), true);
        prop_assert_eq!(o.facets.len(), 6);
        let shape = o.shape();
        let grown = Aabb::from_center_half(Vec3::zeros(), o.extent + Vec3::repeat(1e-3));
        for s in o.samples() {
            prop_assert!(grown.contains(&shape.to_local(&s.point)));
        }
    }

    #[test]
    fn interventions_keep_worlds_valid(cat in category(), seed in 0u64..40, pick in 0usize..64, dx in -0.3f64..0.3, dy in -0.3f64..0.3) {
        let s = generate_scenario(cat, seed).unwrap();
        let mut w = s.initial_world.clone();
        let ids: Vec<String> = w.objects.keys().filter(|k| *k != "table").cloned().collect();
        let id = ids[pick % ids.len()].clone();
        let p = w.objects[&id].pose().position;
        let scripts = [
            InterventionScript::MoveObject { id: id.clone(), pose: Pose::at(p + Vec3::new(dx, dy, 0.0)) },
            InterventionScript::SetContainer { id: id.clone(), state: ContainerState::Open },
            InterventionScript::RemoveObject { id: id.clone() },
        ];
        for script in &scripts {
            let before = w.clone();
            match apply_intervention(&mut w, script) {
                Ok(()) => prop_assert!(w.validate().is_ok(), "{:?} broke the world", script),
                Err(_) => prop_assert_eq!(&w, &before),
            }
        }
        let missing = InterventionScript::RemoveObject { id: "ghost".into() };
        let before = w.clone();
        prop_assert!(apply_intervention(&mut w, &missing).is_err());
        prop_assert_eq!(w, before);
    }

    #[test]
    fn ground_truth_grows_with_discovery(cat in category(), seed in 0u64..40, shuffle in any::<u64>()) {
        let w = generate_scenario(cat, seed).unwrap().initial_world;
        let mut ids: Vec<String> = w.objects.keys().cloned().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let mut found = BTreeSet::new();
        let mut prev = ground_truth_graph(&w, &found);
        prop_assert!(prev.nodes.is_empty());
        for id in ids {
            found.insert(id);
            let next = ground_truth_graph(&w, &found);
            let names = |g: &retrieval_core::memory::SceneGraph| g.nodes.values().map(|n| n.attrs.name.clone()).collect::<Vec<_>>();
            let (a, b) = (names(&prev), names(&next));
            prop_assert!(a.iter().all(|n| b.contains(n)));
            let edge_names = |g: &retrieval_core::memory::SceneGraph| -> BTreeSet<(String, String, String)> {
                g.edges.iter().map(|e| (g.nodes[&e.src].attrs.name.clone(), g.nodes[&e.dst].attrs.name.clone(), e.relation.as_str().to_string())).collect()
            };
            prop_assert!(edge_names(&prev).is_subset(&edge_names(&next)));
            prev = next;
        }
    }

    #[test]
    fn removing_an_occluder_never_hides_anything(cat in category(), seed in 0u64..40, pick in 0usize..64, ex in -0.6f64..0.6, ez in 0.2f64..1.0) {
        let w = generate_scenario(cat, seed).unwrap().initial_world;
        let intr = CameraIntrinsics::default();
        let pose = CameraPose::look_at(Vec3::new(ex, -0.7, ez), Vec3::new(0.0, 0.0, 0.05));
        let ids: Vec<String> = w.objects.keys().cloned().collect();
        let gone = &ids[pick % ids.len()];
        let mut lighter = w.clone();
        lighter.objects.remove(gone);
        lighter.containers.remove(gone);
        let fraction = |world: &retrieval_core::world::WorldState, id: &str| {
            let occ = world.occluders();
            let i = world.index_of(id).unwrap();
            sample_visibility(world, &occ, i, &world.objects[id], &pose, &intr).visible.len()
        };
        for id in ids.iter().filter(|i| *i != gone) {
            prop_assert!(fraction(&lighter, id) >= fraction(&w, id), "{} lost samples", id);
        }
        let a = observe(&w, &pose, &intr, &NoiseModel::none(), seed);
        let b = observe(&w, &pose, &intr, &NoiseModel::none(), seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn culled_candidates_respect_feasibility(cx in -0.4f64..0.4, cy in -0.3f64..0.3, cz in 0.02f64..0.2, ex in -1.0f64..1.0, ey in -1.0f64..1.0, ez in 0.05f64..1.0, floor in -0.05f64..0.1) {
        let pts = vec![Vec3::new(cx, cy, cz), Vec3::new(cx + 0.1, cy + 0.05, cz + 0.08)];
        let intr = CameraIntrinsics::default();
        let cfg = SphereConfig::default();
        let sphere = build_sphere(&pts, &intr, &cfg).unwrap();
        let feasible = Feasibility {
            floor_z: floor,
            boxes: vec![Aabb::from_center_half(Vec3::new(cx, cy + 0.2, 0.1), Vec3::new(0.2, 0.05, 0.1))],
            base: Vec3::new(0.0, -0.55, 0.0),
            max_distance: 1.2,
        };
        let current = CameraPose::look_at(Vec3::new(ex, ey, ez), sphere.center);
        let Ok(dirs) = sample_directions(&sphere, &current, &cfg, &feasible) else { return Ok(()) };
        let again = sample_directions(&sphere, &current, &cfg, &feasible).unwrap();
        prop_assert_eq!(&dirs, &again);
        for d in &dirs {
            prop_assert!(feasible.allows(&d.pose.position));
            if let Ok(poses) = sample_poses_along(&sphere, &current, d, &cfg, &feasible) {
                prop_assert!(poses.iter().all(|p| feasible.allows(&p.pose.position) && p.pose.position.z > floor));
            }
        }
    }

    #[test]
    fn report_ignores_row_order(seed in any::<u64>()) {
        let scenarios: Vec<_> = [Category::HiddenInside, Category::RepositionToReveal]
            .iter()
            .flat_map(|c| (0..3).map(move |s| generate_scenario(*c, s).unwrap()))
            .collect();
        let rows: Vec<_> = scenarios.iter().map(|s| score_episode(s, &EpisodeConfig::default(), &mut HeuristicReasoner).0).collect();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(MetricsReport::from_rows(rows), MetricsReport::from_rows(shuffled));
    }
}

#[test]
fn open_then_close_restores_the_world() {
    let intr = CameraIntrinsics::default();
    for seed in 0..10 {
        let w = generate_scenario(Category::HiddenInside, seed).unwrap().initial_world;
        for cid in w.containers.keys() {
            let mut x = w.clone();
            let opened = execute_primitive(&mut x, &Primitive::open(cid), None, &intr).unwrap();
            if !opened.success {
                assert_eq!(x, w, "failed open changed the world");
                continue;
            }
            assert!(execute_primitive(&mut x, &Primitive::close(cid), None, &intr).unwrap().success);
            assert_eq!(x, w);
        }
    }
}

#[test]
fn failed_primitives_change_nothing() {
    let intr = CameraIntrinsics::default();
    let w = generate_scenario(Category::RecursiveSearch, 3).unwrap().initial_world;
    let far = Pose::at(Vec3::new(5.0, 5.0, 0.0));
    for id in w.objects.keys() {
        for prim in [
            Primitive::open(id),
            Primitive::pick_place(id, far),
            Primitive::rotate(id, 1.0),
            Primitive::retrieve(id, w.goal_region),
        ] {
            let mut x = w.clone();
            let out = execute_primitive(&mut x, &prim, None, &intr).unwrap();
            if !out.success {
                assert_eq!(x, w, "{:?} on {id} failed but changed the world", prim.kind);
            }
        }
    }
}

/// Records every request and answers with the heuristic.
struct Recorder(Vec<ReasonerRequest>);

impl Reasoner for Recorder {
    fn name(&self) -> String {
        "recorder".into()
    }

    fn respond(&mut self, request: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
        self.0.push(request.clone());
        HeuristicReasoner.respond(request)
    }
}

#[test]
fn every_request_variant_round_trips() {
    let mut rec = Recorder(Vec::new());
    for cat in Category::ALL {
        run_episode(&generate_scenario(cat, 1).unwrap(), &mut rec, &EpisodeConfig::default());
    }
    let variants: BTreeSet<&str> = rec.0.iter().map(ReasonerRequest::variant).collect();
    assert_eq!(variants.len(), 7, "{variants:?}");
    for (i, req) in rec.0.iter().enumerate() {
        let mut v = serde_json::to_value(req).unwrap();
        v["id"] = i.into();
        let (id, back) = decode_request(&v.to_string()).unwrap();
        assert_eq!(id, i as u64);
        assert_eq!(serde_json::to_value(&back).unwrap(), serde_json::to_value(req).unwrap());
        let resp = HeuristicReasoner.respond(req).unwrap();
        let text = serde_json::to_string(&resp).unwrap();
        assert_eq!(serde_json::from_str::<ReasonerResponse>(&text).unwrap(), resp);
    }
}

#[test]
fn episodes_keep_their_contracts() {
    for cat in Category::ALL {
        for seed in 0..6 {
            let s = generate_scenario(cat, seed).unwrap();
            let (t, _, world) = run_episode_full(&s, &mut HeuristicReasoner, &EpisodeConfig::default());
            // Success exactly when the last target sits in the goal region.
            let last = s.target_ids.last().unwrap();
            let delivered = world.goal_region.contains(&world.objects[last].centroid());
            if t.instructions.last().unwrap().status == EpisodeStatus::Success {
                assert!(delivered, "{} claims success", s.name);
            }
            // Decisions only target nodes that existed at that step.
            for r in &t.steps {
                if let Some(id) = r.decision.as_ref().and_then(|d| d.target) {
                    assert!(r.graph.nodes.iter().any(|n| n.id == id), "{} step {} targets a missing node", s.name, r.step);
                }
            }
            // No open/close flip-flop on one target within the guard window.
            let acts: Vec<(PrimitiveKind, &str, &str)> = t
                .steps
                .iter()
                .filter_map(|r| match (&r.action, &r.decision, &r.outcome) {
                    (Some(LowLevelAction::Primitive(p)), Some(d), Some(o)) if o.success => Some((p.kind, p.object_id.as_str(), d.goal_text.as_str())),
                    _ => None,
                })
                .collect();
            for w in acts.windows(2) {
                let flip = matches!((w[0].0, w[1].0), (PrimitiveKind::Open, PrimitiveKind::Close) | (PrimitiveKind::Close, PrimitiveKind::Open));
                assert!(!(flip && w[0].1 == w[1].1 && w[0].2 == w[1].2), "{} dithers on {}", s.name, w[0].1);
            }
        }
    }
}
