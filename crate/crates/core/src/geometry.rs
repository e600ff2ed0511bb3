//! Boxes, poses and segment tests shared by the simulator and the agent.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Tolerance used when deciding whether a segment passes through a box.
pub const CONTACT_EPS: f64 = 5e-4;

/// Axis-aligned box in the base frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn from_center_half(center: Vec3, half: Vec3) -> Self {
        Self { min: center - half, max: center + half }
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a Vec3>>(points: I) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bb = Self { min: first, max: first };
        for p in iter {
            bb.min = bb.min.inf(p);
            bb.max = bb.max.sup(p);
        }
        Some(bb)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn half_extents(&self) -> Vec3 {
        self.size() * 0.5
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s.x.max(0.0) * s.y.max(0.0) * s.z.max(0.0)
    }

    pub fn max_extent(&self) -> f64 {
        self.size().max()
    }

    pub fn is_valid(&self) -> bool {
        self.min.iter().zip(self.max.iter()).all(|(a, b)| a <= b)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.contains_inflated(p, 0.0)
    }

    pub fn contains_inflated(&self, p: &Vec3, eps: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - eps && p[i] <= self.max[i] + eps)
    }

    pub fn contains_box(&self, other: &Aabb, eps: f64) -> bool {
        self.contains_inflated(&other.min, eps) && self.contains_inflated(&other.max, eps)
    }

    pub fn inflate(&self, eps: f64) -> Self {
        let d = Vec3::repeat(eps);
        Self { min: self.min - d, max: self.max + d }
    }

    pub fn union(&self, other: &Aabb) -> Self {
        Self { min: self.min.inf(&other.min), max: self.max.sup(&other.max) }
    }

    /// True when the interiors overlap by more than `eps` on every axis.
    pub fn overlaps(&self, other: &Aabb, eps: f64) -> bool {
        (0..3).all(|i| self.min[i] + eps < other.max[i] && other.min[i] + eps < self.max[i])
    }

    pub fn footprint_area(&self) -> f64 {
        let s = self.size();
        s.x.max(0.0) * s.y.max(0.0)
    }

    /// Plan-view (xy) overlap area.
    pub fn footprint_overlap(&self, other: &Aabb) -> f64 {
        let dx = self.max.x.min(other.max.x) - self.min.x.max(other.min.x);
        let dy = self.max.y.min(other.max.y) - self.min.y.max(other.min.y);
        dx.max(0.0) * dy.max(0.0)
    }

    /// Parameter interval where `origin + t * dir` lies inside the box.
    pub fn ray_interval(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        slab_interval(origin, dir, &self.min, &self.max)
    }

    /// Whether the open segment `a -> b` passes through the box interior.
    pub fn blocks_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let shrunk = self.inflate(-CONTACT_EPS);
        if !shrunk.is_valid() {
            return false;
        }
        segment_hits(&shrunk.min, &shrunk.max, a, &(b - a))
    }

    /// Nearest face of the box to a point, as a facet direction.
    pub fn nearest_face(&self, p: &Vec3) -> Facet {
        let candidates = [
            (Facet::NegX, (p.x - self.min.x).abs()),
            (Facet::PosX, (self.max.x - p.x).abs()),
            (Facet::NegY, (p.y - self.min.y).abs()),
            (Facet::PosY, (self.max.y - p.y).abs()),
            (Facet::NegZ, (p.z - self.min.z).abs()),
            (Facet::PosZ, (self.max.z - p.z).abs()),
        ];
        candidates
            .iter()
            .fold((Facet::NegX, f64::INFINITY), |best, &(f, d)| if d < best.1 { (f, d) } else { best })
            .0
    }

    /// Entry face of the ray `origin + t dir` into the box, if it enters from outside.
    pub fn entry_face(&self, origin: &Vec3, dir: &Vec3) -> Option<Facet> {
        let mut t_enter = f64::NEG_INFINITY;
        let mut face = None;
        for i in 0..3 {
            if dir[i].abs() < 1e-15 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let (t0, f0) = if dir[i] > 0.0 {
                ((self.min[i] - origin[i]) / dir[i], Facet::from_axis(i, false))
            } else {
                ((self.max[i] - origin[i]) / dir[i], Facet::from_axis(i, true))
            };
            if t0 > t_enter {
                t_enter = t0;
                face = Some(f0);
            }
        }
        if t_enter <= 0.0 {
            return None;
        }
        face
    }

    /// Evenly spaced grid of points strictly inside the box.
    pub fn grid(&self, n: [usize; 3]) -> Vec<Vec3> {
        let s = self.size();
        let mut out = Vec::with_capacity(n[0] * n[1] * n[2]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    out.push(Vec3::new(
                        self.min.x + s.x * (i as f64 + 0.5) / n[0] as f64,
                        self.min.y + s.y * (j as f64 + 0.5) / n[1] as f64,
                        self.min.z + s.z * (k as f64 + 0.5) / n[2] as f64,
                    ));
                }
            }
        }
        out
    }
}

fn slab_interval(origin: &Vec3, dir: &Vec3, min: &Vec3, max: &Vec3) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for i in 0..3 {
        if dir[i].abs() < 1e-15 {
            if origin[i] < min[i] || origin[i] > max[i] {
                return None;
            }
        } else {
            let inv = 1.0 / dir[i];
            let mut a = (min[i] - origin[i]) * inv;
            let mut b = (max[i] - origin[i]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
    }
    Some((t0, t1))
}

/// Segment `origin + t dir, t in (0, 1)` overlaps the box with positive length.
fn segment_hits(min: &Vec3, max: &Vec3, origin: &Vec3, dir: &Vec3) -> bool {
    match slab_interval(origin, dir, min, max) {
        Some((t0, t1)) => {
            let len = dir.norm().max(1e-12);
            let eps = CONTACT_EPS / len;
            t1.min(1.0 - eps) - t0.max(eps) > 0.0
        }
        None => false,
    }
}

/// Face direction in an object's local frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Facet {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Facet {
    pub const ALL: [Facet; 6] =
        [Facet::PosX, Facet::NegX, Facet::PosY, Facet::NegY, Facet::PosZ, Facet::NegZ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> usize {
        match self {
            Facet::PosX | Facet::NegX => 0,
            Facet::PosY | Facet::NegY => 1,
            Facet::PosZ | Facet::NegZ => 2,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Facet::PosX | Facet::PosY | Facet::PosZ)
    }

    pub fn from_axis(axis: usize, positive: bool) -> Facet {
        match (axis, positive) {
            (0, true) => Facet::PosX,
            (0, false) => Facet::NegX,
            (1, true) => Facet::PosY,
            (1, false) => Facet::NegY,
            (2, true) => Facet::PosZ,
            _ => Facet::NegZ,
        }
    }

    pub fn normal(self) -> Vec3 {
        let mut n = Vec3::zeros();
        n[self.axis()] = if self.is_positive() { 1.0 } else { -1.0 };
        n
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Facet::PosX => "+x",
            Facet::NegX => "-x",
            Facet::PosY => "+y",
            Facet::NegY => "-y",
            Facet::PosZ => "+z",
            Facet::NegZ => "-z",
        }
    }
}

impl fmt::Display for Facet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Facet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Facet::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown facet `{s}`"))
    }
}

impl Serialize for Facet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Facet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Position plus yaw-pitch-roll (radians), serialized as `[x, y, z, yaw, pitch, roll]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Self { position, yaw: 0.0, pitch: 0.0, roll: 0.0 }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw)
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.yaw == 0.0 && self.pitch == 0.0 && self.roll == 0.0
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.position.x, self.position.y, self.position.z, self.yaw, self.pitch, self.roll]
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[f64; 6]>::deserialize(d)?;
        Ok(Pose { position: Vec3::new(v[0], v[1], v[2]), yaw: v[3], pitch: v[4], roll: v[5] })
    }
}

/// Box with arbitrary orientation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub rotation: Rotation3<f64>,
    pub half: Vec3,
}

impl OrientedBox {
    pub fn new(pose: &Pose, half: Vec3) -> Self {
        Self { center: pose.position, rotation: pose.rotation(), half }
    }

    pub fn axis_aligned(bb: &Aabb) -> Self {
        Self { center: bb.center(), rotation: Rotation3::identity(), half: bb.half_extents() }
    }

    pub fn to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.center)
    }

    pub fn to_world(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.center
    }

    pub fn contains(&self, p: &Vec3, eps: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half[i] + eps)
    }

    pub fn aabb(&self) -> Aabb {
        let r = self.rotation.matrix();
        let ext = Vec3::from_fn(|i, _| (0..3).map(|j| r[(i, j)].abs() * self.half[j]).sum());
        Aabb::from_center_half(self.center, ext)
    }

    pub fn blocks_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let la = self.to_local(a);
        let lb = self.to_local(b);
        let h = self.half - Vec3::repeat(CONTACT_EPS);
        if h.iter().any(|v| *v <= 0.0) {
            return false;
        }
        segment_hits(&(-h), &h, &la, &(lb - la))
    }

    /// Nearest positive ray parameter at which `origin + t dir` enters the box.
    pub fn ray_entry(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let lo = self.to_local(origin);
        let ld = self.rotation.inverse() * dir;
        let (t0, t1) = slab_interval(&lo, &ld, &(-self.half), &self.half)?;
        if t1 < 0.0 {
            None
        } else {
            Some(t0.max(0.0))
        }
    }

    /// World-frame outward normal of a local facet.
    pub fn facet_normal(&self, f: Facet) -> Vec3 {
        self.rotation * f.normal()
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half.x * self.half.y * self.half.z
    }
}

/// Unit vector orthogonal to `v`, preferring the projection of `hint`.
pub fn orthogonal_to(v: &Vec3, hint: &Vec3) -> Vec3 {
    let p = hint - v * v.dot(hint);
    if p.norm() > 1e-9 {
        return p.normalize();
    }
    let alt = if v.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    (alt - v * v.dot(&alt)).normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn facet_round_trip() {
        for f in Facet::ALL {
            assert_eq!(f.as_str().parse::<Facet>().unwrap(), f);
            assert_eq!(Facet::from_axis(f.axis(), f.is_positive()), f);
        }
    }

    #[test]
    fn segment_through_box_is_blocked() {
        let bb = Aabb::from_center_half(Vec3::zeros(), Vec3::repeat(0.1));
        assert!(bb.blocks_segment(&Vec3::new(-1.0, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0)));
        assert!(!bb.blocks_segment(&Vec3::new(-1.0, 0.5, 0.0), &Vec3::new(1.0, 0.5, 0.0)));
        // Starting on the surface and leaving outward is not a block.
        assert!(!bb.blocks_segment(&Vec3::new(0.1, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0)));
        // Starting on the far surface and crossing the interior is.
        assert!(bb.blocks_segment(&Vec3::new(-0.1, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0)));
    }

    #[test]
    fn rotated_box_matches_axis_aligned_after_quarter_turn() {
        let pose = Pose { position: Vec3::new(1.0, 0.0, 0.0), yaw: std::f64::consts::FRAC_PI_2, pitch: 0.0, roll: 0.0 };
        let ob = OrientedBox::new(&pose, Vec3::new(0.2, 0.1, 0.05));
        let bb = ob.aabb();
        assert!((bb.half_extents() - Vec3::new(0.1, 0.2, 0.05)).norm() < 1e-12);
        assert!(ob.contains(&Vec3::new(1.0, 0.19, 0.0), 0.0));
        assert!(!ob.contains(&Vec3::new(1.19, 0.0, 0.0), 0.0));
    }

    #[test]
    fn entry_face_reports_side_crossed() {
        let bb = Aabb::from_center_half(Vec3::zeros(), Vec3::repeat(0.1));
        let f = bb.entry_face(&Vec3::new(0.0, -1.0, 0.0), &Vec3::new(0.0, 1.0, 0.0));
        assert_eq!(f, Some(Facet::NegY));
        assert_eq!(bb.entry_face(&Vec3::zeros(), &Vec3::x()), None);
    }

    #[test]
    fn pose_serializes_as_six_numbers() {
        let p = Pose { position: Vec3::new(1.0, 2.0, 3.0), yaw: 0.5, pitch: 0.0, roll: 0.0 };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, "[1.0,2.0,3.0,0.5,0.0,0.0]");
        assert_eq!(serde_json::from_str::<Pose>(&s).unwrap(), p);
    }
}
