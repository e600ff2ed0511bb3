use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec3};

/// Accumulated surface points of one node, one representative per voxel.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointSet {
    pub points: Vec<Vec3>,
}

impl PointSet {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn aabb(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().fold(Vec3::zeros(), |a, p| a + p) / self.points.len() as f64)
    }

    pub fn min_z(&self) -> f64 {
        self.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min)
    }

    pub fn max_z(&self) -> f64 {
        self.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn voxel_key(p: &Vec3, delta: f64) -> (i64, i64, i64) {
    ((p.x / delta).floor() as i64, (p.y / delta).floor() as i64, (p.z / delta).floor() as i64)
}

/// Union of both sets reduced to one centroid per occupied `delta` voxel,
/// ordered by voxel key.
pub fn merge_point_sets(existing: &[Vec3], incoming: &[Vec3], delta: f64) -> Vec<Vec3> {
    assert!(delta > 0.0, "voxel size must be positive");
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, usize)> = BTreeMap::new();
    for p in existing.iter().chain(incoming) {
        let cell = cells.entry(voxel_key(p, delta)).or_insert((Vec3::zeros(), 0));
        cell.0 += p;
        cell.1 += 1;
    }
    cells.into_values().map(|(sum, n)| sum / n as f64).collect()
}
