use serde::{Deserialize, Serialize};

use crate::geometry::{orthogonal_to, Vec3};

/// Pose of the wrist camera: position plus an orthonormal forward/up pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub forward: Vec3,
    pub up: Vec3,
}

impl CameraPose {
    /// Camera at `position` looking at `target`, with up as close to +z as possible.
    pub fn look_at(position: Vec3, target: Vec3) -> Self {
        let forward = (target - position).normalize();
        let up = orthogonal_to(&forward, &Vec3::z());
        Self { position, forward, up }
    }

    pub fn right(&self) -> Vec3 {
        self.forward.cross(&self.up)
    }

    pub fn is_valid(&self) -> bool {
        (self.forward.norm() - 1.0).abs() <= 1e-9
            && (self.up.norm() - 1.0).abs() <= 1e-9
            && self.forward.dot(&self.up).abs() <= 1e-9
    }

    /// Coordinates in the camera frame: x right, y up, z along the view axis.
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(&self.right()), d.dot(&self.up), d.dot(&self.forward))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fov_h: f64,
    pub fov_v: f64,
    /// Canonical-view raster size.
    pub raster_w: usize,
    pub raster_h: usize,
    /// Depth image size.
    pub depth_w: usize,
    pub depth_h: usize,
    pub near: f64,
    pub far: f64,
    pub min_visible_fraction: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fov_h: 60f64.to_radians(),
            fov_v: 45f64.to_radians(),
            raster_w: 64,
            raster_h: 64,
            depth_w: 64,
            depth_h: 48,
            near: 0.05,
            far: 3.0,
            min_visible_fraction: 0.05,
        }
    }
}

impl CameraIntrinsics {
    pub fn is_valid(&self) -> bool {
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        fov_ok(self.fov_h)
            && fov_ok(self.fov_v)
            && self.near > 0.0
            && self.near < self.far
            && self.min_visible_fraction > 0.0
            && self.min_visible_fraction <= 1.0
            && self.raster_w > 0
            && self.raster_h > 0
            && self.depth_w > 0
            && self.depth_h > 0
    }

    /// Inside the angular field of view (depth range not considered).
    pub fn in_fov(&self, pose: &CameraPose, p: &Vec3) -> bool {
        let c = pose.to_camera(p);
        c.z > 0.0
            && c.x.abs() <= c.z * (self.fov_h * 0.5).tan()
            && c.y.abs() <= c.z * (self.fov_v * 0.5).tan()
    }

    pub fn in_range(&self, pose: &CameraPose, p: &Vec3) -> bool {
        let z = pose.to_camera(p).z;
        z >= self.near && z <= self.far
    }

    pub fn sees(&self, pose: &CameraPose, p: &Vec3) -> bool {
        self.in_fov(pose, p) && self.in_range(pose, p)
    }

    /// Continuous depth-image coordinates `(u, v)` and view depth of a point.
    pub fn project(&self, pose: &CameraPose, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = pose.to_camera(p);
        if c.z <= 0.0 {
            return None;
        }
        let tx = (self.fov_h * 0.5).tan();
        let ty = (self.fov_v * 0.5).tan();
        let u = (c.x / (c.z * tx) + 1.0) * 0.5 * self.depth_w as f64;
        let v = (1.0 - c.y / (c.z * ty)) * 0.5 * self.depth_h as f64;
        Some((u, v, c.z))
    }

    /// Integer pixel a point falls in, if inside the image.
    pub fn pixel_of(&self, pose: &CameraPose, p: &Vec3) -> Option<(usize, usize, f64)> {
        let (u, v, z) = self.project(pose, p)?;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (ui, vi) = (u as usize, v as usize);
        (ui < self.depth_w && vi < self.depth_h).then_some((ui, vi, z))
    }

    /// Base-frame ray direction through a pixel center, scaled to unit view depth.
    pub fn pixel_ray(&self, pose: &CameraPose, u: usize, v: usize) -> Vec3 {
        let tx = (self.fov_h * 0.5).tan();
        let ty = (self.fov_v * 0.5).tan();
        let x = tx * (2.0 * (u as f64 + 0.5) / self.depth_w as f64 - 1.0);
        let y = ty * (1.0 - 2.0 * (v as f64 + 0.5) / self.depth_h as f64);
        pose.forward + pose.right() * x + pose.up * y
    }
}
