//! Static label knowledge: item catalog, categories and label roles.
//!
//! The scenario generators draw objects from this catalog, and the heuristic
//! reasoner uses the same table as its "common sense" about what a label is,
//! whether it can be moved and which shelf label it would be filed under.

#[derive(Clone, Copy, Debug)]
pub struct ItemInfo {
    pub label: &'static str,
    pub class: &'static str,
    pub category: &'static str,
    /// Half extents in meters.
    pub half: [f64; 3],
}

const fn item(label: &'static str, class: &'static str, category: &'static str, half: [f64; 3]) -> ItemInfo {
    ItemInfo { label, class, category, half }
}

pub const ITEMS: &[ItemInfo] = &[
    item("oreos", "oreos", "snacks", [0.035, 0.025, 0.03]),
    item("chips", "chips", "snacks", [0.04, 0.025, 0.05]),
    item("cookies", "cookies", "snacks", [0.035, 0.03, 0.025]),
    item("candy", "candy", "snacks", [0.025, 0.025, 0.02]),
    item("cola", "cola", "drinks", [0.025, 0.025, 0.055]),
    item("juice", "juice", "drinks", [0.03, 0.025, 0.06]),
    item("lotion", "lotion", "toiletries", [0.025, 0.02, 0.06]),
    item("soap", "soap", "toiletries", [0.035, 0.025, 0.015]),
    item("toothpaste", "toothpaste", "toiletries", [0.045, 0.015, 0.015]),
    item("pen", "pen", "stationery", [0.06, 0.01, 0.01]),
    item("stapler", "stapler", "stationery", [0.06, 0.02, 0.025]),
    item("tape", "tape", "stationery", [0.03, 0.03, 0.015]),
    item("notebook", "notebook", "stationery", [0.07, 0.05, 0.01]),
    item("screwdriver", "screwdriver", "tools", [0.07, 0.012, 0.012]),
    item("pliers", "pliers", "tools", [0.06, 0.02, 0.01]),
    item("mug", "mug", "kitchen", [0.04, 0.04, 0.05]),
    item("spoon", "spoon", "kitchen", [0.07, 0.015, 0.008]),
    item("pills", "pills", "medicine", [0.02, 0.02, 0.035]),
    item("bandage", "bandage", "medicine", [0.04, 0.03, 0.015]),
    item("shampoo", "bottle", "toiletries", [0.03, 0.025, 0.07]),
    item("conditioner", "bottle", "toiletries", [0.03, 0.025, 0.07]),
    item("mouthwash", "bottle", "toiletries", [0.03, 0.025, 0.07]),
    item("soda", "can", "drinks", [0.025, 0.025, 0.055]),
    item("tea", "can", "drinks", [0.025, 0.025, 0.055]),
];

/// Shelf labels, one per category.
pub const CATEGORY_TAGS: &[(&str, &str)] = &[
    ("snacks", "Snacks & Drinks"),
    ("drinks", "Snacks & Drinks"),
    ("toiletries", "Toiletries"),
    ("stationery", "Stationery"),
    ("tools", "Tools"),
    ("kitchen", "Kitchenware"),
    ("medicine", "Medicine"),
];

pub fn lookup(label: &str) -> Option<&'static ItemInfo> {
    ITEMS.iter().find(|i| i.label == label)
}

pub fn class_of(label: &str) -> Option<&'static str> {
    lookup(label).map(|i| i.class)
}

pub fn category_of(label: &str) -> Option<&'static str> {
    lookup(label).map(|i| i.category)
}

pub fn tag_for_category(category: &str) -> Option<&'static str> {
    CATEGORY_TAGS.iter().find(|(c, _)| *c == category).map(|(_, t)| *t)
}

pub fn is_container_label(label: &str) -> bool {
    matches!(label, "cabinet" | "drawer")
}

pub fn is_support_label(label: &str) -> bool {
    matches!(label, "table" | "shelf" | "wall")
}

/// Labels naming a part of a larger object (the "belong" relation).
pub fn is_part_label(label: &str) -> bool {
    matches!(label, "handle" | "knob")
}

/// Movable objects that can hide something underneath them.
pub fn is_concealer_label(label: &str) -> bool {
    matches!(label, "bowl" | "basket" | "cloth" | "lid")
}

pub fn is_movable_label(label: &str) -> bool {
    !(is_container_label(label) || is_support_label(label) || is_part_label(label) || label == "unknown")
}

/// How strongly a shelf tag suggests that `target` is filed there (0 or 1).
pub fn tag_relevance(tag: &str, target: &str) -> f64 {
    let Some(category) = category_of(target) else {
        return 0.0;
    };
    let tag = tag.to_lowercase();
    if tag.contains(category) {
        1.0
    } else {
        0.0
    }
}

/// Known item labels mentioned in a free-form instruction, in order of appearance.
pub fn mentioned_labels(instruction: &str) -> Vec<&'static str> {
    instruction
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .filter_map(|w| ITEMS.iter().find(|i| i.label == w).map(|i| i.label))
        .collect()
}
