use crate::geometry::{Aabb, Vec3};
use crate::observation::DepthImage;

/// Region covered by the exploration grid.
const GRID_BOUNDS: Aabb = Aabb { min: Vec3::new(-1.0, -1.0, -0.1), max: Vec3::new(1.0, 1.0, 0.7) };

/// Voxels of free space the camera has looked through at least once.
#[derive(Clone, Debug, PartialEq)]
pub struct ExploredGrid {
    voxel: f64,
    dims: [usize; 3],
    bits: Vec<u64>,
}

impl ExploredGrid {
    pub fn new(voxel: f64) -> Self {
        let size = GRID_BOUNDS.size();
        let dims = [0, 1, 2].map(|i| (size[i] / voxel).ceil() as usize);
        let cells = dims[0] * dims[1] * dims[2];
        Self { voxel, dims, bits: vec![0; cells.div_ceil(64)] }
    }

    pub fn voxel(&self) -> f64 {
        self.voxel
    }

    fn index(&self, p: &Vec3) -> Option<usize> {
        let mut idx = [0usize; 3];
        for i in 0..3 {
            let c = ((p[i] - GRID_BOUNDS.min[i]) / self.voxel).floor();
            if c < 0.0 || c >= self.dims[i] as f64 {
                return None;
            }
            idx[i] = c as usize;
        }
        Some((idx[2] * self.dims[1] + idx[1]) * self.dims[0] + idx[0])
    }

    pub fn is_explored(&self, p: &Vec3) -> bool {
        self.index(p).is_some_and(|i| self.bits[i / 64] >> (i % 64) & 1 == 1)
    }

    pub fn mark(&mut self, p: &Vec3) {
        if let Some(i) = self.index(p) {
            self.bits[i / 64] |= 1 << (i % 64);
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// March every depth pixel's ray from the near plane to `margin` short
    /// of the first surface (or the far plane), marking the voxels crossed.
    pub fn integrate(&mut self, depth: &DepthImage, margin: f64) {
        let intr = &depth.intr;
        let eye = depth.camera.position;
        for v in 0..intr.depth_h {
            for u in 0..intr.depth_w {
                let dir = intr.pixel_ray(&depth.camera, u, v);
                let d = depth.at(u, v);
                let end = if d.is_finite() { d - margin } else { intr.far };
                let Some((g0, g1)) = GRID_BOUNDS.ray_interval(&eye, &dir) else { continue };
                let (t0, t1) = (intr.near.max(g0), end.min(g1));
                if t1 <= t0 {
                    continue;
                }
                let step = 0.5 * self.voxel / dir.norm();
                let mut t = t0;
                while t <= t1 {
                    self.mark(&(eye + dir * t));
                    t += step;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::geometry::Pose;
    use crate::observation::{render_depth, CameraIntrinsics, CameraPose};
    use crate::world::{SimObject, WorldState};

    #[test]
    fn marks_free_space_only() {
        let pose = CameraPose::look_at(Vec3::new(0.0, -0.5, 0.1), Vec3::new(0.0, 0.0, 0.1));
        let mut w = WorldState::new(pose, Aabb::new(Vec3::zeros(), Vec3::repeat(0.1)));
        w.add_object(SimObject::new("wall", "wall", "wall", Pose::at(Vec3::new(0.0, 0.2, 0.1)), Vec3::new(0.5, 0.02, 0.3), false));
        let depth = render_depth(&w, &pose, &CameraIntrinsics::default(), Exec::Sequential);
        let mut g = ExploredGrid::new(0.02);
        g.integrate(&depth, 0.01);
        assert!(g.is_explored(&Vec3::new(0.0, -0.1, 0.1)));
        assert!(!g.is_explored(&Vec3::new(0.0, 0.4, 0.1)));
        let before = g.count();
        g.integrate(&depth, 0.01);
        assert_eq!(g.count(), before);
    }
}
