//! Virtual wrist camera: ray-cast visibility, synthetic detections, depth and
//! canonical renders.

mod camera;
mod views;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::geometry::{Facet, Vec3};
use crate::knowledge;
use crate::seed;
use crate::world::{ContainerState, Occluder, SimObject, WorldState, DESCRIPTOR_DIM, SAMPLES_PER_EDGE};

pub use camera::{CameraIntrinsics, CameraPose};
pub use views::{render_canonical_views, CanonicalViews, Raster, SCENE_BOUNDS};

/// A facet counts as camera-facing when this share of its samples is visible.
const FACET_FACING_MIN: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub p_label: f64,
    pub p_drop: f64,
    pub sigma_pt: f64,
    pub sigma_desc: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { p_label: 0.0, p_drop: 0.0, sigma_pt: 0.0, sigma_desc: 0.0 }
    }

    pub fn mild() -> Self {
        Self { p_label: 0.05, p_drop: 0.05, sigma_pt: 0.002, sigma_desc: 0.02 }
    }

    /// Named profile: `none` or `mild`.
    pub fn profile(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Self::none()),
            "mild" => Some(Self::mild()),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::none()
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

/// Observable articulation of a container: its state and opening side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Articulation {
    pub state: ContainerState,
    pub aperture: Facet,
    /// Face carrying the handle.
    pub handle_face: Facet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Ground-truth object id. Only the harness may read this.
    pub source_id: String,
    pub visible_points: Vec<Vec3>,
    pub descriptor: Vec<f64>,
    pub observed_label: String,
    pub visible_fraction: f64,
    pub frustum_clipped: bool,
    pub facet_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<Articulation>,
}

impl Detection {
    pub fn centroid(&self) -> Vec3 {
        let n = self.visible_points.len().max(1) as f64;
        self.visible_points.iter().fold(Vec3::zeros(), |a, p| a + p) / n
    }
}

/// Per-pixel depth along the view axis; `f64::INFINITY` where nothing is hit.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub camera: CameraPose,
    pub intr: CameraIntrinsics,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.intr.depth_w + u]
    }

    /// Smallest depth over the 3x3 neighbourhood of the pixel that `p` falls in,
    /// together with `p`'s own view depth.
    pub fn neighbourhood(&self, p: &Vec3) -> Option<(f64, f64)> {
        if !self.intr.sees(&self.camera, p) {
            return None;
        }
        let (u, v, z) = self.intr.pixel_of(&self.camera, p)?;
        let (w, h) = (self.intr.depth_w, self.intr.depth_h);
        let mut d = f64::INFINITY;
        for vv in v.saturating_sub(1)..=(v + 1).min(h - 1) {
            for uu in u.saturating_sub(1)..=(u + 1).min(w - 1) {
                d = d.min(self.at(uu, vv));
            }
        }
        Some((d, z))
    }

    /// The camera saw past `p` with `margin` to spare: space at `p` is empty.
    pub fn sees_through(&self, p: &Vec3, margin: f64) -> bool {
        self.neighbourhood(p).is_some_and(|(d, z)| d > z + margin)
    }

    /// The camera line of sight reached `p` (surface at or behind it).
    pub fn reaches(&self, p: &Vec3, margin: f64) -> bool {
        if !self.intr.sees(&self.camera, p) {
            return false;
        }
        self.intr.pixel_of(&self.camera, p).is_some_and(|(u, v, z)| self.at(u, v) >= z - margin)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub step: u32,
    pub camera: CameraPose,
    pub detections: Vec<Detection>,
    pub depth: DepthImage,
}

/// Visibility of one object's samples from a pose.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleVisibility {
    /// Indices into the object's samples that are seen.
    pub visible: Vec<usize>,
    /// Samples not hidden by the object's own body.
    pub self_visible: usize,
    pub frustum_clipped: bool,
}

impl SampleVisibility {
    pub fn fraction(&self) -> f64 {
        if self.self_visible == 0 {
            0.0
        } else {
            self.visible.len() as f64 / self.self_visible as f64
        }
    }
}

/// Ray-cast every surface sample of object `index` (in sorted id order) to the camera.
pub fn sample_visibility(
    world: &WorldState,
    occluders: &[Occluder],
    index: usize,
    obj: &SimObject,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
) -> SampleVisibility {
    let removed = world.removed_facet(&obj.id);
    let eye = pose.position;
    let mut out = SampleVisibility::default();
    for (k, s) in obj.samples().iter().enumerate() {
        if Some(s.facet) == removed {
            continue;
        }
        let blocked_by = |own: bool| {
            occluders
                .iter()
                .filter(|o| (o.owner == index) == own)
                .any(|o| o.shape.blocks_segment(&s.point, &eye))
        };
        if blocked_by(true) {
            continue;
        }
        out.self_visible += 1;
        if blocked_by(false) {
            continue;
        }
        if intr.sees(pose, &s.point) {
            out.visible.push(k);
        } else {
            out.frustum_clipped = true;
        }
    }
    out
}

pub fn render_depth(world: &WorldState, pose: &CameraPose, intr: &CameraIntrinsics, exec: Exec) -> DepthImage {
    let occluders = world.occluders();
    let (w, h) = (intr.depth_w, intr.depth_h);
    let depth = exec.map_range(w * h, |i| {
        let dir = intr.pixel_ray(pose, i % w, i / w);
        let t = occluders
            .iter()
            .filter_map(|o| o.shape.ray_entry(&pose.position, &dir))
            .fold(f64::INFINITY, f64::min);
        if t >= intr.near && t <= intr.far {
            t
        } else {
            f64::INFINITY
        }
    });
    DepthImage { camera: *pose, intr: *intr, depth }
}

pub fn observe(
    world: &WorldState,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    noise: &NoiseModel,
    rng_seed: u64,
) -> Observation {
    observe_with(Exec::default(), world, pose, intr, noise, rng_seed)
}

pub fn observe_with(
    exec: Exec,
    world: &WorldState,
    pose: &CameraPose,
    intr: &CameraIntrinsics,
    noise: &NoiseModel,
    rng_seed: u64,
) -> Observation {
    let occluders = world.occluders();
    let objects: Vec<&SimObject> = world.objects.values().collect();
    let detections = exec
        .map_range(objects.len(), |i| {
            let obj = objects[i];
            let vis = sample_visibility(world, &occluders, i, obj, pose, intr);
            if vis.visible.is_empty() || vis.fraction() < intr.min_visible_fraction {
                return None;
            }
            detect(world, obj, &vis, noise, rng_seed)
        })
        .into_iter()
        .flatten()
        .collect();
    Observation { step: world.step, camera: *pose, detections, depth: render_depth(world, pose, intr, exec) }
}

fn detect(world: &WorldState, obj: &SimObject, vis: &SampleVisibility, noise: &NoiseModel, rng_seed: u64) -> Option<Detection> {
    let mut rng = seed::rng(rng_seed, seed::fnv1a(obj.id.as_bytes()));
    if noise.p_drop > 0.0 && rng.random::<f64>() < noise.p_drop {
        return None;
    }
    let samples = obj.samples();
    let mut per_facet = [0usize; 6];
    for &k in &vis.visible {
        per_facet[samples[k].facet.index()] += 1;
    }
    let mut descriptor = vec![0.0; DESCRIPTOR_DIM];
    let mut facet_tags = Vec::new();
    for f in Facet::ALL {
        let n = per_facet[f.index()];
        if n == 0 {
            continue;
        }
        let info = &obj.facets[&f];
        for (d, x) in descriptor.iter_mut().zip(&info.descriptor) {
            *d += *x * n as f64 / vis.visible.len() as f64;
        }
        let facing = n as f64 / (SAMPLES_PER_EDGE * SAMPLES_PER_EDGE) as f64 >= FACET_FACING_MIN;
        if let (true, Some(tag)) = (facing, &info.tag) {
            facet_tags.push(tag.clone());
        }
    }
    let mut observed_label = if !obj.has_tagged_facets() || !facet_tags.is_empty() {
        obj.fine_label.clone()
    } else {
        obj.class_label.clone()
    };
    if noise.p_label > 0.0 && rng.random::<f64>() < noise.p_label {
        let others: Vec<&str> =
            knowledge::ITEMS.iter().map(|i| i.label).filter(|l| *l != observed_label).collect();
        observed_label = others[rng.random_range(0..others.len())].to_string();
    }
    if noise.sigma_desc > 0.0 {
        let n = Normal::new(0.0, noise.sigma_desc).expect("finite sigma");
        descriptor.iter_mut().for_each(|d| *d += n.sample(&mut rng));
    }
    let mut visible_points: Vec<Vec3> = vis.visible.iter().map(|&k| samples[k].point).collect();
    if noise.sigma_pt > 0.0 {
        let n = Normal::new(0.0, noise.sigma_pt).expect("finite sigma");
        for p in &mut visible_points {
            *p += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
        }
    }
    let articulation = world.containers.get(&obj.id).map(|c| c.articulation(&obj.aabb()));
    Some(Detection {
        source_id: obj.id.clone(),
        visible_points,
        descriptor,
        observed_label,
        visible_fraction: vis.fraction(),
        frustum_clipped: vis.frustum_clipped,
        facet_tags,
        articulation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Pose};
    use crate::world::{Container, ContainerKind, SimObject};

    fn empty_world(camera: CameraPose) -> WorldState {
        WorldState::new(camera, Aabb::new(Vec3::new(0.7, -0.2, 0.0), Vec3::new(0.9, 0.0, 0.2)))
    }

    #[test]
    fn empty_world_has_no_detections() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.0), Vec3::zeros());
        let w = empty_world(pose);
        let obs = observe(&w, &pose, &CameraIntrinsics::default(), &NoiseModel::none(), 1);
        assert!(obs.detections.is_empty());
        assert!(obs.depth.depth.iter().all(|d| d.is_infinite()));
    }

    /// Counts front-facing samples with an explicit ray/plane test, independent
    /// of the segment-box code used by `observe`.
    #[test]
    fn cube_on_axis_front_faces() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.0), Vec3::zeros());
        let mut w = empty_world(pose);
        w.add_object(SimObject::new("cube", "cube", "cube", Pose::at(Vec3::zeros()), Vec3::repeat(0.05), true));
        let obs = observe(&w, &pose, &CameraIntrinsics::default(), &NoiseModel::none(), 1);
        assert_eq!(obs.detections.len(), 1);
        let d = &obs.detections[0];
        assert!(d.visible_fraction >= 0.45);
        assert!(!d.frustum_clipped);
        let obj = &w.objects["cube"];
        let oracle = obj
            .samples()
            .iter()
            .filter(|s| {
                // A sample is unobstructed by the cube iff it lies on the plane
                // of some face whose outward normal points at the camera.
                Facet::ALL.iter().any(|f| {
                    let n = f.normal();
                    let on_face = (s.point.dot(&n) - 0.05).abs() < 1e-12;
                    on_face && (pose.position - s.point).dot(&n) > 0.0
                })
            })
            .count();
        assert_eq!(d.visible_points.len(), oracle);
        assert_eq!(oracle, 64 + 4 * SAMPLES_PER_EDGE);
    }

    #[test]
    fn closed_cabinet_hides_contents() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.4), Vec3::new(0.0, 0.2, 0.1));
        let mut w = empty_world(pose);
        w.add_object(SimObject::new("cabinet", "cabinet", "cabinet", Pose::at(Vec3::new(0.0, 0.2, 0.125)), Vec3::new(0.15, 0.12, 0.125), false));
        w.add_object(SimObject::new("lotion", "lotion", "lotion", Pose::at(Vec3::new(0.0, 0.2, 0.075)), Vec3::new(0.025, 0.02, 0.06), true));
        w.add_container(Container {
            object_id: "cabinet".into(),
            state: ContainerState::Closed,
            interior_region: Aabb::new(Vec3::new(-0.135, 0.095, 0.015), Vec3::new(0.135, 0.305, 0.235)),
            handle_point: Vec3::new(0.0, 0.08, 0.2),
            kind: ContainerKind::Cabinet,
            handle_object: None,
        });
        w.recompute_relations();
        let intr = CameraIntrinsics::default();
        let ids = |o: &Observation| o.detections.iter().map(|d| d.source_id.clone()).collect::<Vec<_>>();
        let closed = observe(&w, &pose, &intr, &NoiseModel::none(), 1);
        assert_eq!(ids(&closed), vec!["cabinet"]);
        assert_eq!(closed.detections[0].articulation.unwrap().aperture, Facet::NegY);
        w.containers.get_mut("cabinet").unwrap().state = ContainerState::Open;
        let open = observe(&w, &pose, &intr, &NoiseModel::none(), 1);
        assert_eq!(ids(&open), vec!["cabinet", "lotion"]);
    }

    #[test]
    fn tag_only_seen_from_its_side() {
        let front = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.1), Vec3::zeros());
        let mut w = empty_world(front);
        let bottle = SimObject::new("b", "bottle", "shampoo", Pose::at(Vec3::zeros()), Vec3::new(0.03, 0.025, 0.07), true)
            .with_facet_tag(Facet::PosY, "shampoo");
        w.add_object(bottle);
        let intr = CameraIntrinsics::default();
        let d = &observe(&w, &front, &intr, &NoiseModel::none(), 1).detections[0];
        assert_eq!(d.observed_label, "bottle");
        assert!(d.facet_tags.is_empty());
        let back = CameraPose::look_at(Vec3::new(0.0, 0.5, 0.1), Vec3::zeros());
        let d = &observe(&w, &back, &intr, &NoiseModel::none(), 1).detections[0];
        assert_eq!(d.observed_label, "shampoo");
        assert_eq!(d.facet_tags, vec!["shampoo".to_string()]);
    }

    #[test]
    fn clipped_object_is_flagged() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.3, 0.0), Vec3::zeros());
        let mut w = empty_world(pose);
        // Wide slab: its ends fall outside the horizontal field of view.
        w.add_object(SimObject::new("slab", "board", "board", Pose::at(Vec3::zeros()), Vec3::new(0.5, 0.01, 0.05), false));
        let d = &observe(&w, &pose, &CameraIntrinsics::default(), &NoiseModel::none(), 1).detections[0];
        assert!(d.frustum_clipped);
        assert!(d.visible_fraction < 1.0);
    }

    #[test]
    fn noise_is_seeded() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.0), Vec3::zeros());
        let mut w = empty_world(pose);
        w.add_object(SimObject::new("cube", "cube", "cube", Pose::at(Vec3::zeros()), Vec3::repeat(0.05), true));
        let intr = CameraIntrinsics::default();
        let a = observe(&w, &pose, &intr, &NoiseModel::mild(), 9);
        let b = observe(&w, &pose, &intr, &NoiseModel::mild(), 9);
        assert_eq!(a, b);
        let seq = observe_with(Exec::Sequential, &w, &pose, &intr, &NoiseModel::mild(), 9);
        assert_eq!(a, seq);
    }

    #[test]
    fn depth_sees_through_free_space() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.0), Vec3::zeros());
        let mut w = empty_world(pose);
        w.add_object(SimObject::new("cube", "cube", "cube", Pose::at(Vec3::zeros()), Vec3::repeat(0.05), true));
        let obs = observe(&w, &pose, &CameraIntrinsics::default(), &NoiseModel::none(), 1);
        let (u, v, _) = obs.depth.intr.pixel_of(&pose, &Vec3::zeros()).unwrap();
        assert!((obs.depth.at(u, v) - 0.45).abs() < 1e-9);
        assert!(obs.depth.sees_through(&Vec3::new(0.0, -0.2, 0.0), 0.02));
        assert!(!obs.depth.sees_through(&Vec3::new(0.0, 0.2, 0.0), 0.02));
        assert!(obs.depth.reaches(&Vec3::new(0.0, -0.05, 0.0), 0.005));
    }
}
