use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::actions::reachable;
use crate::exec::Exec;
use crate::geometry::{Aabb, Facet, Pose, Vec3};
use crate::knowledge::{self, ItemInfo, ITEMS};
use crate::observation::{observe_with, CameraIntrinsics, CameraPose, NoiseModel};
use crate::seed;
use crate::world::{Budgets, Category, Container, ContainerKind, ContainerState, Scenario, SimObject, WorldState};

pub const MAX_ATTEMPTS: u64 = 100;

const TABLE_HALF: [f64; 3] = [0.6, 0.4, 0.025];
const WALL: f64 = 0.012;
const GAP: f64 = 0.02;

/// Things the post-generation check needs to know about a layout.
struct Layout {
    world: WorldState,
    /// Items in the target container, target first.
    contents: Vec<String>,
    container: Option<String>,
    /// Ids that must not be seen from the initial pose.
    hidden: Vec<String>,
    /// Ids that must be seen from the initial pose.
    visible: Vec<String>,
    target: String,
    second: Option<String>,
}

fn table_world(rng: &mut ChaCha8Rng) -> WorldState {
    let eye = Vec3::new(rng.random_range(-0.15..0.15), rng.random_range(0.85..0.95), rng.random_range(0.85..0.95));
    let camera = CameraPose::look_at(eye, Vec3::new(0.0, -0.12, 0.0));
    let gx = rng.random_range(0.7..0.75);
    let gy = rng.random_range(-0.3..-0.2);
    let goal = Aabb::from_center_half(Vec3::new(gx, gy, 0.08), Vec3::new(0.08, 0.08, 0.08));
    let mut w = WorldState::new(camera, goal);
    w.add_object(SimObject::new(
        "table",
        "table",
        "table",
        Pose::at(Vec3::new(0.0, 0.0, -TABLE_HALF[2])),
        Vec3::from(TABLE_HALF),
        false,
    ));
    w
}

fn half(i: &ItemInfo) -> Vec3 {
    Vec3::from(i.half)
}

fn boxes_clear(w: &WorldState, bb: &Aabb) -> bool {
    w.objects.values().filter(|o| o.class_label != "table").all(|o| !o.aabb().overlaps(bb, GAP))
}

/// Items drawn without replacement, skipping labels already in the world.
fn pick_items<'a>(rng: &mut ChaCha8Rng, pool: &[&'a ItemInfo], used: &[String], n: usize) -> Vec<&'a ItemInfo> {
    let mut avail: Vec<&ItemInfo> = pool.iter().copied().filter(|i| !used.iter().any(|u| u == i.label)).collect();
    avail.shuffle(rng);
    avail.truncate(n);
    avail
}

fn labels(w: &WorldState) -> Vec<String> {
    w.objects.values().map(|o| o.fine_label.clone()).collect()
}

fn add_item(w: &mut WorldState, info: &ItemInfo, center: Vec3) -> String {
    let id = info.label.to_string();
    w.add_object(SimObject::new(id.clone(), info.class, info.label, Pose::at(center), half(info), true));
    id
}

/// Place an item on the table inside the `x`/`y` ranges, clear of everything.
fn place_on_table(rng: &mut ChaCha8Rng, w: &mut WorldState, info: &ItemInfo, xs: (f64, f64), ys: (f64, f64)) -> Option<String> {
    let h = half(info);
    for _ in 0..40 {
        let x = rng.random_range(xs.0..xs.1);
        let y = rng.random_range(ys.0..ys.1);
        let c = Vec3::new(x, y, h.z);
        let bb = Aabb::from_center_half(c, h);
        if bb.min.x < -TABLE_HALF[0] + 0.02 || bb.max.x > TABLE_HALF[0] - 0.02 || bb.min.y < -TABLE_HALF[1] + 0.02 || bb.max.y > TABLE_HALF[1] - 0.02 {
            continue;
        }
        if boxes_clear(w, &bb) {
            return Some(add_item(w, info, c));
        }
    }
    None
}

/// Closed containers along the back of the table with handles facing the
/// arm; returns their ids left to right.
fn add_containers(rng: &mut ChaCha8Rng, w: &mut WorldState, n: usize) -> Vec<String> {
    let (hx, xs): (f64, Vec<f64>) = if n >= 3 {
        (rng.random_range(0.15..0.17), vec![-0.38, 0.0, 0.38])
    } else {
        let s = rng.random_range(0.22..0.27);
        (rng.random_range(0.17..0.2), vec![-s, s])
    };
    let mut ids = Vec::new();
    for (k, x) in xs.into_iter().take(n).enumerate() {
        let h = Vec3::new(hx, rng.random_range(0.1..0.12), rng.random_range(0.09..0.12));
        let c = Vec3::new(x + rng.random_range(-0.02..0.02), rng.random_range(0.12..0.16), h.z);
        let kind = if rng.random_bool(0.5) { ContainerKind::Cabinet } else { ContainerKind::Drawer };
        let label = match kind {
            ContainerKind::Cabinet => "cabinet",
            ContainerKind::Drawer => "drawer",
        };
        let id = format!("{label}{k}");
        w.add_object(SimObject::new(id.clone(), label, label, Pose::at(c), h, false));
        w.add_container(Container {
            object_id: id.clone(),
            state: ContainerState::Closed,
            interior_region: Aabb::from_center_half(c, h - Vec3::repeat(WALL)),
            handle_point: Vec3::new(c.x, c.y - h.y, c.z + 0.4 * h.z),
            kind,
            handle_object: None,
        });
        ids.push(id);
    }
    ids
}

/// Fill a container with a row of items from one category.
fn fill_container(rng: &mut ChaCha8Rng, w: &mut WorldState, cid: &str, count: usize) -> Option<Vec<String>> {
    let inner = w.containers[cid].interior_region;
    let size = inner.size();
    let fits = |i: &&ItemInfo| 2.0 * i.half[1] < size.y - 0.02 && 2.0 * i.half[2] < size.z - 0.01 && i.half[0] <= 0.05;
    let mut cats: Vec<&str> = ITEMS.iter().map(|i| i.category).collect();
    cats.dedup();
    cats.shuffle(rng);
    let used = labels(w);
    for cat in cats {
        let pool: Vec<&ItemInfo> = ITEMS.iter().filter(|i| i.category == cat && i.class == i.label).filter(fits).collect();
        let items = pick_items(rng, &pool, &used, count);
        if items.len() < count {
            continue;
        }
        let width: f64 = items.iter().map(|i| 2.0 * i.half[0]).sum();
        let slack = size.x - width;
        if slack < 0.02 * (count + 1) as f64 {
            continue;
        }
        let gap = slack / (count + 1) as f64;
        let mut x = inner.min.x + gap;
        let mut ids = Vec::new();
        for info in items {
            let c = Vec3::new(x + info.half[0], inner.center().y, inner.min.z + info.half[2]);
            x += 2.0 * info.half[0] + gap;
            ids.push(add_item(w, info, c));
        }
        return Some(ids);
    }
    None
}

fn low_items() -> Vec<&'static ItemInfo> {
    ITEMS.iter().filter(|i| i.half[2] <= 0.03 && i.class == i.label).collect()
}

fn plain_items() -> Vec<&'static ItemInfo> {
    ITEMS.iter().filter(|i| i.class == i.label).collect()
}

/// Containers at the back, a row of same-category items in one of them, low
/// clutter in front of it and free items across the front of the table.
fn hidden_inside_layout(rng: &mut ChaCha8Rng) -> Option<Layout> {
    let mut w = table_world(rng);
    let n_cont = if rng.random_bool(0.5) { 2 } else { 3 };
    let containers = add_containers(rng, &mut w, n_cont);
    let cid = containers.choose(rng)?.clone();
    let mut contents = fill_container(rng, &mut w, &cid, 3)?;
    contents.shuffle(rng);

    let cbb = w.objects[&cid].aabb();
    let mut hidden = contents.clone();
    for info in pick_items(rng, &low_items(), &labels(&w), 2) {
        let front = cbb.min.y - GAP;
        let id = place_on_table(
            rng,
            &mut w,
            info,
            (cbb.min.x + info.half[0], cbb.max.x - info.half[0]),
            (front - 0.12 - info.half[1], front - info.half[1]),
        )?;
        hidden.push(id);
    }
    let n_free = rng.random_range(3..=4);
    let mut visible = Vec::new();
    for info in pick_items(rng, &plain_items(), &labels(&w), n_free) {
        let id = place_on_table(rng, &mut w, info, (-0.55, 0.55), (-0.37, -0.2))?;
        visible.push(id);
    }
    visible.push("table".into());
    visible.extend(containers.iter().cloned());
    w.recompute_relations();
    let target = contents[0].clone();
    let second = Some(contents[1].clone());
    Some(Layout { world: w, contents, container: Some(cid), hidden, visible, target, second })
}

/// Look-alike bottles or cans with their label facet turned away from the
/// camera, next to a closed container and some free items.
fn reposition_layout(rng: &mut ChaCha8Rng) -> Option<Layout> {
    let mut w = table_world(rng);
    let containers = add_containers(rng, &mut w, 2);
    let class = if rng.random_bool(0.5) { "bottle" } else { "can" };
    let mut similar: Vec<&ItemInfo> = ITEMS.iter().filter(|i| i.class == class).collect();
    similar.shuffle(rng);
    let n = similar.len().min(rng.random_range(2..=3));
    let mut ids = Vec::new();
    let x0 = rng.random_range(-0.3..0.0);
    for (k, info) in similar.into_iter().take(n).enumerate() {
        let c = Vec3::new(x0 + 0.12 * k as f64, rng.random_range(-0.22..-0.15), info.half[2]);
        let bb = Aabb::from_center_half(c, half(info));
        if !boxes_clear(&w, &bb) {
            return None;
        }
        let id = info.label.to_string();
        w.add_object(SimObject::new(id.clone(), info.class, info.label, Pose::at(c), half(info), true).with_facet_tag(Facet::NegY, info.label));
        ids.push(id);
    }
    let mut visible = ids.clone();
    let n_free = rng.random_range(3..=5);
    for info in pick_items(rng, &plain_items(), &labels(&w), n_free) {
        visible.push(place_on_table(rng, &mut w, info, (-0.55, 0.55), (-0.37, -0.05))?);
    }
    for cid in &containers {
        if rng.random_bool(0.5) {
            fill_container(rng, &mut w, cid, 1)?;
        }
    }
    w.recompute_relations();
    let target = ids.choose(rng)?.clone();
    Some(Layout { world: w, contents: Vec::new(), container: None, hidden: Vec::new(), visible, target, second: None })
}

/// Target under a concealer or behind a tall box, with closed containers
/// and free items around.
fn recursive_layout(rng: &mut ChaCha8Rng) -> Option<Layout> {
    let mut w = table_world(rng);
    let containers = add_containers(rng, &mut w, 2);
    for cid in &containers {
        fill_container(rng, &mut w, cid, 1)?;
    }
    let small: Vec<&ItemInfo> = ITEMS
        .iter()
        .filter(|i| i.class == i.label && i.half[0] <= 0.045 && i.half[1] <= 0.045 && i.half[2] <= 0.04)
        .filter(|i| !labels(&w).iter().any(|l| l == i.label))
        .collect();
    let info = *small.choose(rng)?;
    let x = rng.random_range(-0.4..0.4);
    let y = rng.random_range(-0.3..-0.15);
    let target;
    if rng.random_bool(0.5) {
        let bowl_half = Vec3::new(0.075, 0.075, 0.06);
        let c = Vec3::new(x, y, bowl_half.z);
        if !boxes_clear(&w, &Aabb::from_center_half(c, bowl_half)) {
            return None;
        }
        target = add_item(&mut w, info, Vec3::new(x, y, info.half[2]));
        w.add_object(SimObject::new("bowl", "bowl", "bowl", Pose::at(c), bowl_half, true));
    } else {
        let box_half = Vec3::new(0.1, 0.03, 0.14);
        let c = Vec3::new(x, y, box_half.z);
        let t = Vec3::new(x, y - 0.03 - 0.02 - info.half[1], info.half[2]);
        let bb = Aabb::from_center_half(c, box_half).union(&Aabb::from_center_half(t, half(info)));
        if !boxes_clear(&w, &bb) {
            return None;
        }
        w.add_object(SimObject::new("box", "box", "box", Pose::at(c), box_half, true));
        target = add_item(&mut w, info, t);
    }
    let mut visible = vec!["table".to_string()];
    let n_free = rng.random_range(3..=5);
    for info in pick_items(rng, &plain_items(), &labels(&w), n_free) {
        visible.push(place_on_table(rng, &mut w, info, (-0.55, 0.55), (-0.37, -0.05))?);
    }
    w.recompute_relations();
    Some(Layout { world: w, contents: Vec::new(), container: None, hidden: vec![target.clone()], visible, target, second: None })
}

/// Shelf labels on top of every container, the right one on the target's.
fn add_tags(rng: &mut ChaCha8Rng, layout: &mut Layout) {
    let Some(cid) = layout.container.clone() else { return };
    let cat = knowledge::category_of(&layout.world.objects[&layout.target].fine_label).unwrap_or("snacks");
    let right = knowledge::tag_for_category(cat).unwrap_or("Snacks & Drinks");
    let mut others: Vec<&str> = knowledge::CATEGORY_TAGS.iter().map(|(_, t)| *t).filter(|t| *t != right).collect();
    others.dedup();
    others.shuffle(rng);
    let ids: Vec<String> = layout.world.containers.keys().cloned().collect();
    let mut k = 0;
    for id in ids {
        let tag = if id == cid {
            right.to_string()
        } else {
            k += 1;
            others[(k - 1) % others.len()].to_string()
        };
        let obj = layout.world.objects.remove(&id).expect("container object");
        let mut obj = obj.with_facet_tag(Facet::PosZ, tag.clone());
        obj.semantic_tag = Some(tag);
        layout.world.add_object(obj);
    }
}

/// A tall box in front of the target container, off to one side of it.
fn add_front_occluder(rng: &mut ChaCha8Rng, layout: &mut Layout) -> Option<()> {
    let cid = layout.container.clone()?;
    let cbb = layout.world.objects[&cid].aabb();
    let h = Vec3::new(0.06, 0.03, 0.13);
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let c = Vec3::new(cbb.center().x + side * (cbb.half_extents().x - 0.02), cbb.min.y - 0.2, h.z);
    if !boxes_clear(&layout.world, &Aabb::from_center_half(c, h)) {
        return None;
    }
    layout.world.add_object(SimObject::new("box", "box", "box", Pose::at(c), h, true));
    layout.world.recompute_relations();
    Some(())
}

fn layout_for(category: Category, rng: &mut ChaCha8Rng) -> Option<Layout> {
    match category {
        Category::HiddenInside | Category::SequentialRetrieval => hidden_inside_layout(rng),
        Category::SemanticTargeting => {
            let mut l = hidden_inside_layout(rng)?;
            add_tags(rng, &mut l);
            Some(l)
        }
        Category::CompositionalReasoning => {
            let mut l = hidden_inside_layout(rng)?;
            add_tags(rng, &mut l);
            add_front_occluder(rng, &mut l)?;
            Some(l)
        }
        Category::RepositionToReveal => reposition_layout(rng),
        Category::RecursiveSearch => recursive_layout(rng),
    }
}

/// Simulated checks of the category's guarantees from the initial pose.
fn verify(category: Category, l: &Layout) -> bool {
    let w = &l.world;
    if w.validate().is_err() || !reachable(&w.goal_region.center()) {
        return false;
    }
    // The second item is checked for every category that shares the world,
    // so the same attempt wins for all of them.
    if std::iter::once(&l.target).chain(l.second.as_ref()).any(|t| !reachable(&w.objects[t].centroid())) {
        return false;
    }
    if let Some(cid) = &l.container {
        let c = &w.containers[cid];
        if !reachable(&c.handle_point) || l.contents.iter().any(|id| w.inside_of.get(id) != Some(cid)) {
            return false;
        }
    }
    let obs = observe_with(Exec::Sequential, w, &w.camera, &CameraIntrinsics::default(), &NoiseModel::none(), 0);
    let seen = |id: &str| obs.detections.iter().any(|d| d.source_id == id);
    if l.hidden.iter().any(|id| seen(id)) || !l.visible.iter().all(|id| seen(id)) {
        return false;
    }
    match category {
        Category::RepositionToReveal => obs
            .detections
            .iter()
            .find(|d| d.source_id == l.target)
            .is_some_and(|d| d.observed_label != w.objects[&l.target].fine_label),
        _ => !seen(&l.target),
    }
}

fn instruction(label: &str, follow_up: bool) -> String {
    if follow_up {
        format!("now bring me the {label} as well")
    } else {
        format!("bring me the {label}")
    }
}

/// Seeded scenario of the given category. Hidden Inside, Sequential
/// Retrieval and Semantic Targeting share one world per seed.
pub fn generate_scenario(category: Category, seed: u64) -> Result<Scenario, HarnessError> {
    let family = match category {
        Category::HiddenInside | Category::SequentialRetrieval | Category::SemanticTargeting | Category::CompositionalReasoning => 0,
        Category::RepositionToReveal => 1,
        Category::RecursiveSearch => 2,
    };
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng(seed, (family << 32) | attempt);
        let Some(layout) = layout_for(category, &mut rng) else { continue };
        if !verify(category, &layout) {
            continue;
        }
        let w = &layout.world;
        let mut instructions = vec![instruction(&w.objects[&layout.target].fine_label, false)];
        let mut targets = vec![layout.target.clone()];
        if category == Category::SequentialRetrieval {
            let second = layout.second.clone().expect("hidden inside layouts name a second item");
            instructions.push(instruction(&w.objects[&second].fine_label, true));
            targets.push(second);
        }
        return Ok(Scenario {
            name: format!("{}-{seed}", category.as_str()),
            category,
            seed,
            initial_world: layout.world,
            instructions,
            target_ids: targets,
            interventions: Vec::new(),
            budgets: Budgets::default(),
        });
    }
    Err(HarnessError::GenerationFailed { category, seed, attempts: MAX_ATTEMPTS })
}
