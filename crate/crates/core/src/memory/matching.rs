use super::{MemoryConfig, NodeId, SceneGraph};
use crate::observation::Observation;

/// Detections per frame up to which the assignment is solved exactly.
const EXACT_LIMIT: usize = 10;

/// Per-detection result: an existing node, or `None` for a new one.
pub type MatchOutcome = Vec<Option<NodeId>>;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cost of pairing each detection with each Known node:
/// closest descriptor in the node history plus `lambda` times the gap between
/// the detection centroid and the node's box.
pub fn match_cost_matrix(graph: &SceneGraph, obs: &Observation, config: &MemoryConfig) -> (Vec<NodeId>, Vec<Vec<f64>>) {
    let nodes: Vec<_> = graph.known().collect();
    let ids = nodes.iter().map(|n| n.id).collect();
    let costs = obs
        .detections
        .iter()
        .map(|d| {
            let c = d.centroid();
            nodes
                .iter()
                .map(|n| {
                    let desc = n
                        .obs_history
                        .iter()
                        .map(|e| distance(&e.descriptor, &d.descriptor))
                        .fold(f64::INFINITY, f64::min);
                    let gap = n.aabb().map_or(f64::INFINITY, |bb| {
                        let q = c.sup(&bb.min).inf(&bb.max);
                        (c - q).norm()
                    });
                    desc + config.lambda * gap
                })
                .collect()
        })
        .collect();
    (ids, costs)
}

/// Injective assignment of rows (detections) to columns (nodes) minimising
/// total cost, where leaving a row unmatched costs `threshold` and pairs
/// costing more than `threshold` are not allowed. Exact up to ten rows,
/// greedy above. Ties go to the lowest column index.
pub fn solve_assignment(costs: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    if costs.len() <= EXACT_LIMIT {
        exact(costs, threshold)
    } else {
        greedy(costs, threshold)
    }
}

fn greedy(costs: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = costs
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter(|(_, c)| **c <= threshold).map(move |(j, c)| (*c, i, j)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let cols = costs.first().map_or(0, Vec::len);
    let mut out = vec![None; costs.len()];
    let mut used = vec![false; cols];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

struct Search<'a> {
    costs: &'a [Vec<f64>],
    threshold: f64,
    /// Optimistic cost of rows `i..` ignoring injectivity.
    tail_bound: Vec<f64>,
    used: Vec<bool>,
    current: Vec<Option<usize>>,
    best: Vec<Option<usize>>,
    best_cost: f64,
}

impl Search<'_> {
    fn run(&mut self, i: usize, acc: f64) {
        if acc + self.tail_bound[i] >= self.best_cost - 1e-12 {
            return;
        }
        if i == self.costs.len() {
            self.best_cost = acc;
            self.best = self.current.clone();
            return;
        }
        for j in 0..self.costs[i].len() {
            let c = self.costs[i][j];
            if self.used[j] || c > self.threshold {
                continue;
            }
            self.used[j] = true;
            self.current[i] = Some(j);
            self.run(i + 1, acc + c);
            self.used[j] = false;
        }
        self.current[i] = None;
        self.run(i + 1, acc + self.threshold);
    }
}

fn exact(costs: &[Vec<f64>], threshold: f64) -> Vec<Option<usize>> {
    let n = costs.len();
    let mut tail_bound = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let best_row = costs[i].iter().copied().filter(|c| *c <= threshold).fold(threshold, f64::min);
        tail_bound[i] = tail_bound[i + 1] + best_row;
    }
    let greedy_start = greedy(costs, threshold);
    let greedy_cost: f64 = greedy_start.iter().enumerate().map(|(i, a)| a.map_or(threshold, |j| costs[i][j])).sum();
    let mut s = Search {
        costs,
        threshold,
        tail_bound,
        used: vec![false; costs.first().map_or(0, Vec::len)],
        current: vec![None; n],
        // Start just above the greedy cost so an equal-cost, lower-index
        // assignment found by the search still replaces it.
        best: greedy_start,
        best_cost: greedy_cost + 1e-9,
    };
    s.run(0, 0.0);
    s.best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates every injective partial assignment.
    fn brute(costs: &[Vec<f64>], threshold: f64) -> f64 {
        fn go(i: usize, costs: &[Vec<f64>], th: f64, used: &mut Vec<bool>) -> f64 {
            if i == costs.len() {
                return 0.0;
            }
            let mut best = th + go(i + 1, costs, th, used);
            for j in 0..costs[i].len() {
                if !used[j] && costs[i][j] <= th {
                    used[j] = true;
                    best = best.min(costs[i][j] + go(i + 1, costs, th, used));
                    used[j] = false;
                }
            }
            best
        }
        go(0, costs, threshold, &mut vec![false; costs.first().map_or(0, Vec::len)])
    }

    fn total(a: &[Option<usize>], costs: &[Vec<f64>], th: f64) -> f64 {
        a.iter().enumerate().map(|(i, x)| x.map_or(th, |j| costs[i][j])).sum()
    }

    #[test]
    fn zero_cost_and_threshold() {
        assert_eq!(solve_assignment(&[vec![0.0, 0.9]], 0.5), vec![Some(0)]);
        assert_eq!(solve_assignment(&[vec![5.0, 5.0]], 0.5), vec![None]);
    }

    #[test]
    fn two_detections_one_node() {
        let costs = vec![vec![0.3], vec![0.1]];
        assert_eq!(solve_assignment(&costs, 0.5), vec![None, Some(0)]);
    }

    #[test]
    fn ties_prefer_lowest_index() {
        assert_eq!(solve_assignment(&[vec![0.2, 0.2]], 0.5), vec![Some(0)]);
    }

    proptest! {
        #[test]
        fn exact_matches_enumeration(
            rows in 0usize..6, cols in 0usize..6,
            vals in prop::collection::vec(0.0f64..1.0, 36),
        ) {
            let costs: Vec<Vec<f64>> = (0..rows).map(|i| (0..cols).map(|j| vals[i * 6 + j]).collect()).collect();
            let a = solve_assignment(&costs, 0.5);
            let mut seen = std::collections::BTreeSet::new();
            for j in a.iter().flatten() {
                prop_assert!(seen.insert(*j));
            }
            prop_assert!((total(&a, &costs, 0.5) - brute(&costs, 0.5)).abs() < 1e-9);
        }
    }
}
