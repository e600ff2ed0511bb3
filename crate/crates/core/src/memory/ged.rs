//! Unit-cost graph edit distance between scene graphs.

use serde::{Deserialize, Serialize};

use super::{Relation, SceneGraph};

/// Graphs with more nodes than this get a greedy upper bound.
pub const EXACT_NODE_LIMIT: usize = 12;
/// Search expansions before the branch and bound gives up on optimality.
const EXPANSION_CAP: u64 = 5_000_000;
const DELETED: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GedResult {
    pub distance: u32,
    pub exact: bool,
}

/// Labels and relation bit masks of one graph in node-id order.
struct Flat {
    labels: Vec<usize>,
    adj: Vec<Vec<u8>>,
}

fn bit(r: Relation) -> u8 {
    1 << Relation::ALL.iter().position(|x| *x == r).expect("relation listed")
}

fn flatten(g: &SceneGraph, names: &mut Vec<String>) -> Flat {
    let ids: Vec<_> = g.nodes.keys().copied().collect();
    let labels = g
        .nodes
        .values()
        .map(|n| match names.iter().position(|x| *x == n.attrs.name) {
            Some(i) => i,
            None => {
                names.push(n.attrs.name.clone());
                names.len() - 1
            }
        })
        .collect();
    let mut adj = vec![vec![0u8; ids.len()]; ids.len()];
    for e in &g.edges {
        let (Ok(s), Ok(d)) = (ids.binary_search(&e.src), ids.binary_search(&e.dst)) else { continue };
        adj[s][d] |= bit(e.relation);
    }
    Flat { labels, adj }
}

fn pair_cost(a: u8, b: u8) -> u32 {
    (a.count_ones().max(b.count_ones())) - (a & b).count_ones()
}

/// Total edit cost of a complete mapping (`DELETED` marks deleted nodes).
fn mapping_cost(g1: &Flat, g2: &Flat, map: &[usize]) -> u32 {
    let mut cost = 0;
    let mut used = vec![false; g2.labels.len()];
    for (i, &m) in map.iter().enumerate() {
        if m == DELETED {
            cost += 1;
        } else {
            used[m] = true;
            cost += u32::from(g1.labels[i] != g2.labels[m]);
        }
    }
    for i in 0..map.len() {
        for k in 0..map.len() {
            let a = g1.adj[i][k];
            cost += if map[i] == DELETED || map[k] == DELETED { a.count_ones() } else { pair_cost(a, g2.adj[map[i]][map[k]]) };
        }
    }
    cost += used.iter().filter(|u| !**u).count() as u32;
    for j in 0..used.len() {
        for l in 0..used.len() {
            if !used[j] || !used[l] {
                cost += g2.adj[j][l].count_ones();
            }
        }
    }
    cost
}

/// Label matches first, leftovers paired in order, then pairwise swaps
/// while they help.
fn greedy(g1: &Flat, g2: &Flat) -> (Vec<usize>, u32) {
    let n1 = g1.labels.len();
    let n2 = g2.labels.len();
    let mut map = vec![DELETED; n1];
    let mut used = vec![false; n2];
    for i in 0..n1 {
        if let Some(j) = (0..n2).find(|j| !used[*j] && g2.labels[*j] == g1.labels[i]) {
            map[i] = j;
            used[j] = true;
        }
    }
    for slot in map.iter_mut().filter(|m| **m == DELETED) {
        if let Some(j) = (0..n2).find(|j| !used[*j]) {
            *slot = j;
            used[j] = true;
        }
    }
    let mut best = mapping_cost(g1, g2, &map);
    let mut improved = true;
    let mut rounds = 0;
    while improved && rounds < 50 {
        improved = false;
        rounds += 1;
        for i in 0..n1 {
            for k in (i + 1)..n1 {
                map.swap(i, k);
                let c = mapping_cost(g1, g2, &map);
                if c < best {
                    best = c;
                    improved = true;
                } else {
                    map.swap(i, k);
                }
            }
            // Try moving i onto an unused target, or deleting it.
            let unused: Vec<usize> = (0..n2).filter(|j| !map.contains(j)).chain([DELETED]).collect();
            for j in unused {
                let old = map[i];
                if old == j {
                    continue;
                }
                map[i] = j;
                let c = mapping_cost(g1, g2, &map);
                if c < best {
                    best = c;
                    improved = true;
                } else {
                    map[i] = old;
                }
            }
        }
    }
    (map, best)
}

struct Search<'a> {
    g1: &'a Flat,
    g2: &'a Flat,
    order: Vec<usize>,
    map: Vec<usize>,
    used: Vec<bool>,
    best: u32,
    expansions: u64,
    capped: bool,
    label_count: usize,
}

impl Search<'_> {
    /// Lower bound on the cost of everything not yet decided.
    fn bound(&self, depth: usize) -> u32 {
        let rest1: Vec<usize> = self.order[depth..].to_vec();
        let rest2: Vec<usize> = (0..self.used.len()).filter(|j| !self.used[*j]).collect();
        let mut c1 = vec![0i64; self.label_count];
        let mut c2 = vec![0i64; self.label_count];
        for &i in &rest1 {
            c1[self.g1.labels[i]] += 1;
        }
        for &j in &rest2 {
            c2[self.g2.labels[j]] += 1;
        }
        let common: i64 = c1.iter().zip(&c2).map(|(a, b)| *a.min(b)).sum();
        let nodes = rest1.len().max(rest2.len()) as i64 - common;
        let mut pending1 = vec![false; self.g1.labels.len()];
        for &i in &rest1 {
            pending1[i] = true;
        }
        let n1 = self.g1.labels.len();
        let mut a = 0i64;
        for i in 0..n1 {
            for k in 0..n1 {
                if pending1[i] || pending1[k] {
                    a += i64::from(self.g1.adj[i][k].count_ones());
                }
            }
        }
        let n2 = self.g2.labels.len();
        let mut b = 0i64;
        for j in 0..n2 {
            for l in 0..n2 {
                if !self.used[j] || !self.used[l] {
                    b += i64::from(self.g2.adj[j][l].count_ones());
                }
            }
        }
        (nodes + (a - b).abs()) as u32
    }

    /// Cost added by deciding node `i` (edges to already decided nodes included).
    fn step_cost(&self, depth: usize, i: usize, j: usize) -> u32 {
        let mut c = if j == DELETED { 1 } else { u32::from(self.g1.labels[i] != self.g2.labels[j]) };
        let mut pairs = |a: u8, b: u8, gone: bool| c += if gone { a.count_ones() } else { pair_cost(a, b) };
        for &k in &self.order[..depth] {
            let m = self.map[k];
            let gone = j == DELETED || m == DELETED;
            let (fw, bw) = if gone { (0, 0) } else { (self.g2.adj[j][m], self.g2.adj[m][j]) };
            pairs(self.g1.adj[i][k], fw, gone);
            pairs(self.g1.adj[k][i], bw, gone);
        }
        c
    }

    fn finish_cost(&self) -> u32 {
        let n2 = self.used.len();
        let mut c = self.used.iter().filter(|u| !**u).count() as u32;
        for j in 0..n2 {
            for l in 0..n2 {
                if !self.used[j] || !self.used[l] {
                    c += self.g2.adj[j][l].count_ones();
                }
            }
        }
        c
    }

    fn run(&mut self, depth: usize, acc: u32) {
        self.expansions += 1;
        if self.expansions > EXPANSION_CAP {
            self.capped = true;
            return;
        }
        if acc + self.bound(depth) >= self.best {
            return;
        }
        if depth == self.order.len() {
            let total = acc + self.finish_cost();
            if total < self.best {
                self.best = total;
            }
            return;
        }
        let i = self.order[depth];
        let mut options: Vec<(u32, usize)> = (0..self.used.len())
            .filter(|j| !self.used[*j])
            .chain([DELETED])
            .map(|j| (self.step_cost(depth, i, j), j))
            .collect();
        options.sort();
        for (c, j) in options {
            if j != DELETED {
                self.used[j] = true;
            }
            self.map[i] = j;
            self.run(depth + 1, acc + c);
            if j != DELETED {
                self.used[j] = false;
            }
            self.map[i] = DELETED;
            if self.capped {
                return;
            }
        }
    }
}

/// Minimum number of unit edits (node insert/delete/relabel, edge
/// insert/delete/relabel) turning `g1` into `g2`. Node labels are the
/// attribute names; node ids play no role.
pub fn graph_edit_distance(g1: &SceneGraph, g2: &SceneGraph) -> GedResult {
    let mut names = Vec::new();
    let f1 = flatten(g1, &mut names);
    let f2 = flatten(g2, &mut names);
    let (_, greedy_cost) = greedy(&f1, &f2);
    if f1.labels.len() > EXACT_NODE_LIMIT || f2.labels.len() > EXACT_NODE_LIMIT {
        return GedResult { distance: greedy_cost, exact: false };
    }
    // Decide high-degree nodes first: their edges prune the most.
    let n1 = f1.labels.len();
    let mut order: Vec<usize> = (0..n1).collect();
    let degree = |i: usize| (0..n1).map(|k| f1.adj[i][k].count_ones() + f1.adj[k][i].count_ones()).sum::<u32>();
    order.sort_by_key(|&i| (std::cmp::Reverse(degree(i)), i));
    let mut s = Search {
        g1: &f1,
        g2: &f2,
        order,
        map: vec![DELETED; n1],
        used: vec![false; f2.labels.len()],
        best: greedy_cost + 1,
        expansions: 0,
        capped: false,
        label_count: names.len(),
    };
    s.run(0, 0);
    GedResult { distance: s.best.min(greedy_cost), exact: !s.capped }
}
