use std::collections::BTreeMap;

use super::{NodeAttributes, ObsEntry};
use crate::knowledge;

/// Attribute rules over an observation history: modal label, agreement
/// ratio as confidence, and the occluded / partial-view flags.
pub fn heuristic_attributes(history: &[ObsEntry], theta_full: f64) -> NodeAttributes {
    if history.is_empty() {
        return NodeAttributes::unknown();
    }
    // A generic class label counts toward a specific label of that class
    // once the specific one has been seen.
    let refine = |label: &str| -> String {
        history
            .iter()
            .map(|e| e.label.as_str())
            .find(|l| *l != label && knowledge::class_of(l) == Some(label))
            .unwrap_or(label)
            .to_string()
    };
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (i, e) in history.iter().enumerate() {
        let c = counts.entry(refine(&e.label)).or_insert((0, i));
        c.0 += 1;
    }
    // Highest count wins; ties go to the label seen first.
    let (name, (count, _)) = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(k, v)| (k.to_string(), *v))
        .expect("history is nonempty");
    let occl = history.iter().all(|e| e.visible_fraction < theta_full && !e.frustum_clipped);
    let view = history.iter().all(|e| e.frustum_clipped);
    let quality = match (occl, view) {
        (true, _) => "partly hidden behind other objects",
        (_, true) => "cut off by the camera frame",
        _ => "clearly visible",
    };
    let desc = format!("a {name}, {quality}, seen in {} frame(s)", history.len());
    NodeAttributes {
        movable: knowledge::is_movable_label(&name),
        conf: count as f64 / history.len() as f64,
        occl,
        view,
        desc,
        name,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn entry(label: &str, vf: f64, clipped: bool) -> ObsEntry {
        ObsEntry { step: 0, descriptor: vec![], visible_fraction: vf, frustum_clipped: clipped, label: label.into(), centroid: Vec3::zeros() }
    }

    #[test]
    fn unanimous_full_views() {
        let h = vec![entry("mug", 1.0, false); 3];
        let a = heuristic_attributes(&h, 0.6);
        assert_eq!(a.name, "mug");
        assert_eq!(a.conf, 1.0);
        assert!(!a.occl && !a.view && a.movable);
    }

    #[test]
    fn modal_label_and_conf() {
        let h = vec![entry("mug", 1.0, false), entry("mug", 1.0, false), entry("cup", 1.0, false)];
        let a = heuristic_attributes(&h, 0.6);
        assert_eq!(a.name, "mug");
        assert!((a.conf - 2.0 / 3.0).abs() < 1e-12);
        let tie = vec![entry("cup", 1.0, false), entry("mug", 1.0, false)];
        assert_eq!(heuristic_attributes(&tie, 0.6).name, "cup");
    }

    #[test]
    fn specific_label_absorbs_its_class() {
        let h = vec![entry("bottle", 1.0, false), entry("bottle", 1.0, false), entry("conditioner", 1.0, false)];
        let a = heuristic_attributes(&h, 0.6);
        assert_eq!(a.name, "conditioner");
        assert_eq!(a.conf, 1.0);
        assert_eq!(heuristic_attributes(&h[..2], 0.6).name, "bottle");
    }

    #[test]
    fn flags_follow_definitions() {
        let clipped = vec![entry("mug", 0.3, true), entry("mug", 0.9, true)];
        let a = heuristic_attributes(&clipped, 0.6);
        assert!(a.view && !a.occl);
        let hidden = vec![entry("mug", 0.3, false), entry("mug", 0.5, false)];
        let a = heuristic_attributes(&hidden, 0.6);
        assert!(a.occl && !a.view);
        let mixed = vec![entry("mug", 0.3, false), entry("mug", 0.5, true)];
        let a = heuristic_attributes(&mixed, 0.6);
        assert!(!a.occl && !a.view);
        assert!(!heuristic_attributes(&[entry("cabinet", 1.0, false)], 0.6).movable);
    }
}
