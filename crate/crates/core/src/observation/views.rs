//! Orthographic front/left/right renders of a point set, written as PGM.

use crate::geometry::{Aabb, Vec3};

/// Fixed scene bounds shared by all canonical renders.
pub const SCENE_BOUNDS: Aabb = Aabb {
    min: Vec3::new(-1.0, -1.0, -0.3),
    max: Vec3::new(1.0, 1.0, 0.7),
};

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at the top. 0 = empty, larger = nearer.
    pub pixels: Vec<u8>,
    /// 255 where a highlighted point landed.
    pub mask: Vec<u8>,
}

impl Raster {
    fn blank(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0; width * height], mask: vec![0; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn nonzero(&self) -> Vec<(usize, usize)> {
        (0..self.pixels.len()).filter(|i| self.pixels[*i] > 0).map(|i| (i % self.width, i / self.width)).collect()
    }

    fn pgm(&self, data: &[u8]) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(data);
        out
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        self.pgm(&self.pixels)
    }

    pub fn mask_pgm(&self) -> Vec<u8> {
        self.pgm(&self.mask)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalViews {
    pub front: Raster,
    pub left: Raster,
    pub right: Raster,
}

impl CanonicalViews {
    pub fn named(&self) -> [(&'static str, &Raster); 3] {
        [("front", &self.front), ("left", &self.left), ("right", &self.right)]
    }
}

/// One view: the horizontal image axis, and the look direction.
struct Axes {
    right: Vec3,
    look: Vec3,
}

fn splat(r: &mut Raster, axes: &Axes, bounds: &Aabb, p: &Vec3, highlight: bool) {
    let coord = |dir: &Vec3, p: &Vec3| -> (f64, f64, f64) {
        // Project the bounds on `dir` to get the coordinate range.
        let (a, b) = (bounds.min.dot(&dir.abs()), bounds.max.dot(&dir.abs()));
        let sign = dir.sum();
        let c = p.dot(dir);
        if sign >= 0.0 {
            (c, a, b)
        } else {
            (c, -b, -a)
        }
    };
    let cell = |c: f64, lo: f64, hi: f64, n: usize| -> usize {
        (((c - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1)
    };
    let (cx, x0, x1) = coord(&axes.right, p);
    let (cz, z0, z1) = (p.z, bounds.min.z, bounds.max.z);
    let (cd, d0, d1) = coord(&axes.look, p);
    let x = cell(cx, x0, x1, r.width);
    let y = r.height - 1 - cell(cz, z0, z1, r.height);
    let i = y * r.width + x;
    if highlight {
        r.mask[i] = 255;
        return;
    }
    let nearness = 1.0 - ((cd - d0) / (d1 - d0)).clamp(0.0, 1.0);
    let value = 1 + (nearness * 254.0).round() as u8;
    r.pixels[i] = r.pixels[i].max(value);
}

/// Front looks along -y, left along +x, right along -x; z is up in all three.
pub fn render_canonical_views(points: &[Vec3], highlight: &[Vec3], width: usize, height: usize) -> CanonicalViews {
    let views = [
        Axes { right: -Vec3::x(), look: -Vec3::y() },
        Axes { right: -Vec3::y(), look: Vec3::x() },
        Axes { right: Vec3::y(), look: -Vec3::x() },
    ];
    let mut out = [0, 1, 2].map(|_| Raster::blank(width, height));
    for (r, axes) in out.iter_mut().zip(&views) {
        for p in points {
            splat(r, axes, &SCENE_BOUNDS, p, false);
        }
        for p in highlight {
            splat(r, axes, &SCENE_BOUNDS, p, true);
        }
    }
    let [front, left, right] = out;
    CanonicalViews { front, left, right }
}
