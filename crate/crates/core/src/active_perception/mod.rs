//! Viewpoint selection on a perception sphere around the target: candidate
//! directions, candidate poses along the chosen direction, coverage scores
//! and the look-closer move.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{orthogonal_to, Aabb, Facet, Vec3};
use crate::memory::{ExploredGrid, NodeId};
use crate::observation::{render_canonical_views, CameraIntrinsics, CameraPose};
use crate::reasoner::{self, CandidateBrief, PoseChoice, Reasoner, ReasonerError, ViewPayload};

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("target has no points")]
    EmptyTarget,
    #[error("every candidate viewpoint was culled")]
    NoFeasibleCandidate,
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereConfig {
    pub k: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Candidate directions.
    pub n: usize,
    /// Candidate poses per direction.
    pub m: usize,
    /// Geodesic offset of the candidate directions, radians.
    pub alpha: f64,
    /// Arc covered by the candidate poses, radians.
    pub alpha_max: f64,
    pub closer_factor: f64,
}

impl Default for SphereConfig {
    fn default() -> Self {
        Self {
            k: 1.5,
            r_min: 0.25,
            r_max: 1.0,
            n: 8,
            m: 4,
            alpha: 30f64.to_radians(),
            alpha_max: 90f64.to_radians(),
            closer_factor: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionSphere {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewCandidate {
    pub pose: CameraPose,
    pub index: usize,
    /// Geodesic angle from the projection of the current camera position.
    pub polar: f64,
    /// Angle around the radial axis of the current camera position.
    pub azimuth: f64,
    /// Predicted coverage of the view goal.
    pub score: f64,
}

/// Where a camera may be placed: above the support plane, outside every
/// known box and within reach of the arm.
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub floor_z: f64,
    pub boxes: Vec<Aabb>,
    pub base: Vec3,
    pub max_distance: f64,
}

impl Feasibility {
    pub fn free_space() -> Self {
        Self { floor_z: f64::NEG_INFINITY, boxes: Vec::new(), base: Vec3::zeros(), max_distance: f64::INFINITY }
    }

    pub fn allows(&self, p: &Vec3) -> bool {
        p.z > self.floor_z && (p - self.base).norm() <= self.max_distance && !self.boxes.iter().any(|b| b.contains(p))
    }
}

pub fn build_sphere(points: &[Vec3], intr: &CameraIntrinsics, config: &SphereConfig) -> Result<PerceptionSphere, PerceptionError> {
    let bb = Aabb::from_points(points).ok_or(PerceptionError::EmptyTarget)?;
    let center = points.iter().fold(Vec3::zeros(), |a, p| a + p) / points.len() as f64;
    let s = bb.max_extent();
    let fov = intr.fov_h.min(intr.fov_v);
    let radius = (config.k * s / (2.0 * (fov / 2.0).tan())).clamp(config.r_min, config.r_max);
    Ok(PerceptionSphere { center, radius })
}

/// Radial axis through the current camera and a tangent frame around it.
/// Azimuth zero points along the tangent projection of +x.
fn frame(sphere: &PerceptionSphere, current: &Vec3) -> (Vec3, Vec3, Vec3) {
    let d = current - sphere.center;
    let a = if d.norm() > 1e-12 { d.normalize() } else { Vec3::z() };
    let u = orthogonal_to(&a, &Vec3::x());
    let v = a.cross(&u);
    (a, u, v)
}

fn candidate(sphere: &PerceptionSphere, radial: &Vec3, tangent: &Vec3, polar: f64, azimuth: f64) -> ViewCandidate {
    let dir = radial * polar.cos() + tangent * polar.sin();
    let position = sphere.center + dir * sphere.radius;
    ViewCandidate { pose: CameraPose::look_at(position, sphere.center), index: 0, polar, azimuth, score: 0.0 }
}

/// `n` look-at candidates at geodesic distance `alpha` from the current
/// camera's projection onto the sphere, evenly spaced in azimuth. Culled
/// positions are retried at half the distance.
pub fn sample_directions(
    sphere: &PerceptionSphere,
    current: &CameraPose,
    config: &SphereConfig,
    feasible: &Feasibility,
) -> Result<Vec<ViewCandidate>, PerceptionError> {
    let (a, u, v) = frame(sphere, &current.position);
    let n = config.n.max(1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let phi = std::f64::consts::TAU * i as f64 / n as f64;
        let t = u * phi.cos() + v * phi.sin();
        for polar in [config.alpha, config.alpha / 2.0] {
            let c = candidate(sphere, &a, &t, polar, phi);
            if feasible.allows(&c.pose.position) {
                out.push(ViewCandidate { index: out.len(), ..c });
                break;
            }
        }
    }
    if out.is_empty() {
        return Err(PerceptionError::NoFeasibleCandidate);
    }
    Ok(out)
}

/// `m` look-at candidates along the great circle from the current camera's
/// projection through the chosen direction, at fractions `1/m .. 1` of
/// `alpha_max`.
pub fn sample_poses_along(
    sphere: &PerceptionSphere,
    current: &CameraPose,
    chosen: &ViewCandidate,
    config: &SphereConfig,
    feasible: &Feasibility,
) -> Result<Vec<ViewCandidate>, PerceptionError> {
    let (a, u, v) = frame(sphere, &current.position);
    let t = u * chosen.azimuth.cos() + v * chosen.azimuth.sin();
    let m = config.m.max(1);
    let mut out = Vec::with_capacity(m);
    for j in 1..=m {
        let full = config.alpha_max * j as f64 / m as f64;
        for polar in [full, full / 2.0] {
            let c = candidate(sphere, &a, &t, polar, chosen.azimuth);
            if feasible.allows(&c.pose.position) {
                out.push(ViewCandidate { index: out.len(), ..c });
                break;
            }
        }
    }
    if out.is_empty() {
        return Err(PerceptionError::NoFeasibleCandidate);
    }
    Ok(out)
}

/// Box a probe must be seen through, and the face the ray has to enter by.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aperture {
    pub region: Aabb,
    pub facet: Facet,
}

/// What a view should cover.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewGoal {
    pub text: String,
    pub target: Option<NodeId>,
    /// Points the sphere is built around.
    pub anchor: Vec<Vec3>,
    /// Points whose visibility is scored.
    pub probes: Vec<Vec3>,
    /// Known boxes that may hide probes.
    pub blockers: Vec<Aabb>,
    /// Container the probes sit in, if any.
    pub aperture: Option<Aperture>,
    /// Count only probes not explored yet.
    pub unexplored_only: bool,
}

/// Fraction of probes the pose would see: inside the frustum, not behind any
/// blocker box that does not hold the probe, and for probes inside an
/// aperture box, entered through the aperture face.
pub fn coverage(pose: &CameraPose, goal: &ViewGoal, intr: &CameraIntrinsics, explored: Option<&ExploredGrid>) -> f64 {
    let probes: Vec<&Vec3> = goal
        .probes
        .iter()
        .filter(|p| !goal.unexplored_only || explored.is_none_or(|g| !g.is_explored(p)))
        .collect();
    if probes.is_empty() {
        return 0.0;
    }
    let eye = pose.position;
    let seen = probes
        .iter()
        .filter(|p| {
            if !intr.sees(pose, p) {
                return false;
            }
            if let Some(ap) = &goal.aperture {
                if ap.region.contains(p) && ap.region.entry_face(&eye, &(**p - eye)) != Some(ap.facet) {
                    return false;
                }
            }
            !goal.blockers.iter().any(|b| !b.contains(p) && b.blocks_segment(&eye, p))
        })
        .count();
    seen as f64 / probes.len() as f64
}

fn briefs(cands: &[ViewCandidate]) -> Vec<CandidateBrief> {
    cands
        .iter()
        .map(|c| CandidateBrief { index: c.index, position: c.pose.position, polar: c.polar, azimuth: c.azimuth, score: c.score })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewChoice {
    pub pose: CameraPose,
    pub look_closer: bool,
    pub direction: usize,
    pub candidate: Option<usize>,
}

/// Move `factor` of the way from the current position toward the sphere
/// center along the view ray, keeping the orientation and staying at least
/// 5 cm beyond the near plane.
pub fn look_closer(current: &CameraPose, center: &Vec3, factor: f64, intr: &CameraIntrinsics) -> CameraPose {
    let d = (center - current.position).dot(&current.forward);
    let min = intr.near + 0.05;
    let travel = if d > min { (d * factor).min(d - min) } else { 0.0 };
    CameraPose { position: current.position + current.forward * travel, ..*current }
}

/// Two-stage choice of the next camera pose: a direction, then a pose
/// along it. `scene_points` are rendered into the canonical views with the
/// candidates highlighted.
#[allow(clippy::too_many_arguments)]
pub fn select_view(
    current: &CameraPose,
    goal: &ViewGoal,
    scene_points: &[Vec3],
    explored: Option<&ExploredGrid>,
    intr: &CameraIntrinsics,
    config: &SphereConfig,
    feasible: &Feasibility,
    reasoner: &mut dyn Reasoner,
) -> Result<ViewChoice, PerceptionError> {
    let sphere = build_sphere(&goal.anchor, intr, config)?;
    let current_score = coverage(current, goal, intr, explored);
    let score = |mut cands: Vec<ViewCandidate>| {
        for c in &mut cands {
            c.score = coverage(&c.pose, goal, intr, explored);
        }
        cands
    };
    let payload = |cands: &[ViewCandidate]| {
        let highlight: Vec<Vec3> = cands.iter().map(|c| c.pose.position).collect();
        ViewPayload {
            goal_text: goal.text.clone(),
            target: goal.target,
            center: sphere.center,
            radius: sphere.radius,
            distance: (current.position - sphere.center).norm(),
            current_score,
            candidates: briefs(cands),
            rasters: None,
            views: Some(render_canonical_views(scene_points, &highlight, intr.raster_w, intr.raster_h)),
        }
    };

    // A direction is worth what the best pose along it would see.
    // When nothing near the current view is reachable, sample around the
    // sphere point closest to the arm base instead.
    let (reference, dirs) = match sample_directions(&sphere, current, config, feasible) {
        Ok(d) => (*current, d),
        Err(_) => {
            let toward = feasible.base - sphere.center;
            let toward = if toward.norm() > 1e-9 { toward.normalize() } else { Vec3::z() };
            let anchor = CameraPose::look_at(sphere.center + toward * sphere.radius, sphere.center);
            (anchor, sample_directions(&sphere, &anchor, config, feasible)?)
        }
    };
    let mut dirs = score(dirs);
    for d in &mut dirs {
        if let Ok(along) = sample_poses_along(&sphere, &reference, d, config, feasible) {
            d.score = along.iter().map(|c| coverage(&c.pose, goal, intr, explored)).fold(d.score, f64::max);
        }
    }
    let direction = if dirs.len() == 1 { 0 } else { reasoner::ask_direction(reasoner, &payload(&dirs))? };
    let poses = score(sample_poses_along(&sphere, &reference, &dirs[direction], config, feasible)?);
    let choice = if poses.len() == 1 { PoseChoice::Index(0) } else { reasoner::ask_pose(reasoner, &payload(&poses))? };
    Ok(match choice {
        PoseChoice::Index(i) => ViewChoice { pose: poses[i].pose, look_closer: false, direction, candidate: Some(i) },
        PoseChoice::LookCloser => ViewChoice {
            pose: look_closer(current, &sphere.center, config.closer_factor, intr),
            look_closer: true,
            direction,
            candidate: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reasoner::{ReasonerRequest, ReasonerResponse};

    fn cube(c: Vec3, side: f64) -> Vec<Vec3> {
        Aabb::from_center_half(c, Vec3::repeat(side / 2.0)).grid([2, 2, 2]).into_iter().chain([c - Vec3::repeat(side / 2.0), c + Vec3::repeat(side / 2.0)]).collect()
    }

    fn square_fov() -> CameraIntrinsics {
        CameraIntrinsics { fov_h: 60f64.to_radians(), fov_v: 60f64.to_radians(), ..Default::default() }
    }

    #[test]
    fn radius_follows_size_and_fov() {
        let cfg = SphereConfig::default();
        let s = build_sphere(&cube(Vec3::zeros(), 0.2), &square_fov(), &cfg).unwrap();
        let expected = 1.5 * 0.2 / (2.0 * 30f64.to_radians().tan());
        assert!((s.radius - expected).abs() < 1e-9);
        assert!((s.radius - 0.26).abs() < 1e-3);
        assert_eq!(build_sphere(&[Vec3::new(1.0, 2.0, 3.0)], &square_fov(), &cfg).unwrap().radius, 0.25);
        assert_eq!(build_sphere(&cube(Vec3::zeros(), 2.0), &square_fov(), &cfg).unwrap().radius, 1.0);
        assert!(matches!(build_sphere(&[], &square_fov(), &cfg), Err(PerceptionError::EmptyTarget)));
    }

    #[test]
    fn directions_from_the_pole() {
        let sphere = PerceptionSphere { center: Vec3::zeros(), radius: 0.5 };
        let current = CameraPose::look_at(Vec3::new(0.0, 0.0, 2.0), Vec3::zeros());
        let cands = sample_directions(&sphere, &current, &SphereConfig::default(), &Feasibility::free_space()).unwrap();
        assert_eq!(cands.len(), 8);
        for (i, c) in cands.iter().enumerate() {
            assert!((c.azimuth - (45.0 * i as f64).to_radians()).abs() < 1e-12);
            let polar = c.pose.position.normalize().dot(&Vec3::z()).acos();
            assert!((polar - 30f64.to_radians()).abs() < 1e-9);
        }
        let one = SphereConfig { n: 1, ..Default::default() };
        let c = sample_directions(&sphere, &current, &one, &Feasibility::free_space()).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c[0].pose.position.x > 0.0 && c[0].pose.position.y.abs() < 1e-12);
    }

    #[test]
    fn wall_culls_directions() {
        let sphere = PerceptionSphere { center: Vec3::zeros(), radius: 0.5 };
        let current = CameraPose::look_at(Vec3::new(0.0, -2.0, 0.0), Vec3::zeros());
        let wall = Aabb::new(Vec3::new(-5.0, -5.0, -5.0), Vec3::new(5.0, 5.0, -0.1));
        let feas = Feasibility { boxes: vec![wall], ..Feasibility::free_space() };
        let cands = sample_directions(&sphere, &current, &SphereConfig::default(), &feas).unwrap();
        assert!(cands.len() < 8);
        assert!(cands.iter().all(|c| !wall.contains(&c.pose.position)));
    }

    #[test]
    fn poses_along_evenly_spaced() {
        let sphere = PerceptionSphere { center: Vec3::new(0.1, 0.2, 0.3), radius: 0.4 };
        let current = CameraPose::look_at(Vec3::new(0.5, -0.6, 0.9), Vec3::zeros());
        let cfg = SphereConfig::default();
        let dirs = sample_directions(&sphere, &current, &cfg, &Feasibility::free_space()).unwrap();
        let poses = sample_poses_along(&sphere, &current, &dirs[3], &cfg, &Feasibility::free_space()).unwrap();
        let got: Vec<f64> = poses.iter().map(|p| p.polar.to_degrees()).collect();
        for (g, w) in got.iter().zip([22.5, 45.0, 67.5, 90.0]) {
            assert!((g - w).abs() < 1e-9);
        }
        for p in &poses {
            assert!(((p.pose.position - sphere.center).norm() - sphere.radius).abs() < 1e-9);
        }
    }

    #[test]
    fn look_closer_halves_distance() {
        let current = CameraPose::look_at(Vec3::new(0.0, -0.8, 0.0), Vec3::zeros());
        let p = look_closer(&current, &Vec3::zeros(), 0.5, &CameraIntrinsics::default());
        assert!((p.position - Vec3::new(0.0, -0.4, 0.0)).norm() < 1e-12);
        assert_eq!(p.forward, current.forward);
        let near = CameraPose::look_at(Vec3::new(0.0, -0.08, 0.0), Vec3::zeros());
        assert_eq!(look_closer(&near, &Vec3::zeros(), 0.5, &CameraIntrinsics::default()).position, near.position);
    }

    struct Scripted(Vec<ReasonerResponse>);

    impl Reasoner for Scripted {
        fn name(&self) -> String {
            "scripted".into()
        }
        fn respond(&mut self, _: &ReasonerRequest) -> Result<ReasonerResponse, ReasonerError> {
            Ok(self.0.remove(0))
        }
    }

    #[test]
    fn aperture_facing_direction_wins() {
        // Open-topped box: the interior is only visible from above.
        let region = Aabb::new(Vec3::new(-0.1, -0.1, 0.0), Vec3::new(0.1, 0.1, 0.15));
        let goal = ViewGoal {
            text: "inspect cabinet interior".into(),
            target: None,
            anchor: region.grid([2, 2, 2]),
            probes: region.inflate(-0.02).grid([4, 4, 3]),
            blockers: vec![region],
            aperture: Some(Aperture { region, facet: Facet::PosZ }),
            unexplored_only: false,
        };
        let current = CameraPose::look_at(Vec3::new(0.0, -0.6, 0.2), region.center());
        let intr = CameraIntrinsics::default();
        let mut r = crate::reasoner::HeuristicReasoner;
        let cfg = SphereConfig::default();
        let choice = select_view(&current, &goal, &[], None, &intr, &cfg, &Feasibility::free_space(), &mut r).unwrap();
        assert!(choice.pose.position.z > current.position.z);
        assert!(coverage(&choice.pose, &goal, &intr, None) > coverage(&current, &goal, &intr, None));

        let mut closer = Scripted(vec![ReasonerResponse::Direction(0), ReasonerResponse::Pose(PoseChoice::LookCloser)]);
        let c = select_view(&current, &goal, &[], None, &intr, &cfg, &Feasibility::free_space(), &mut closer).unwrap();
        assert!(c.look_closer);
        let mut bad = Scripted(vec![ReasonerResponse::Direction(99), ReasonerResponse::Direction(99)]);
        let err = select_view(&current, &goal, &[], None, &intr, &cfg, &Feasibility::free_space(), &mut bad).unwrap_err();
        assert!(matches!(err, PerceptionError::Reasoner(ReasonerError::OutOfRange(_))));
    }
}
