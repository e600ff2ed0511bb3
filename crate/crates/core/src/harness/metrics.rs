use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::memory::{graph_edit_distance, GedResult};
use crate::reasoner::Reasoner;
use crate::supervisor::{run_episode_full, Ablation, EpisodeConfig, Transcript};
use crate::world::{ground_truth_graph, Category, Scenario};

/// Discovered fraction after every step and its final value.
pub fn odr(transcript: &Transcript) -> (Vec<f64>, f64) {
    let series = transcript.odr_series();
    let last = series.last().copied().unwrap_or(0.0);
    (series, last)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub scenario: String,
    pub category: Category,
    pub seed: u64,
    pub reasoner: String,
    pub ablation: Ablation,
    pub success: bool,
    pub status: String,
    pub steps: u32,
    pub instruction_steps: Vec<u32>,
    /// Steps with every failed instruction charged the full step budget.
    pub charged_steps: u32,
    pub final_odr: f64,
    pub ged: u32,
    pub ged_exact: bool,
    pub reasoner_calls: u64,
    pub odr_series: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub category: Category,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_final_odr: f64,
    pub mean_rollout_length: f64,
    pub mean_ged: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub categories: Vec<CategoryStats>,
    /// Mean ODR per step over all rows; finished episodes hold their last value.
    pub mean_odr_series: Vec<f64>,
    pub rows: Vec<SeedRow>,
}

/// Score one finished episode.
pub fn score_episode(scenario: &Scenario, cfg: &EpisodeConfig, reasoner: &mut dyn Reasoner) -> (SeedRow, Transcript) {
    let (t, mem, world) = run_episode_full(scenario, reasoner, cfg);
    let discovered: BTreeSet<String> = t.steps.last().map(|s| s.discovered.iter().cloned().collect()).unwrap_or_default();
    let truth = ground_truth_graph(&world, &discovered);
    let GedResult { distance, exact } = graph_edit_distance(&mem.graph.known_only(), &truth);
    let (series, final_odr) = odr(&t);
    let row = SeedRow {
        scenario: scenario.name.clone(),
        category: scenario.category,
        seed: scenario.seed,
        reasoner: t.reasoner.clone(),
        ablation: cfg.ablation,
        success: t.status.is_success(),
        status: format!("{:?}", t.status),
        steps: t.steps.len() as u32,
        instruction_steps: t.instructions.iter().map(|i| i.steps).collect(),
        charged_steps: t
            .instructions
            .iter()
            .map(|i| if i.status.is_success() { i.steps } else { scenario.budgets.max_steps })
            .sum(),
        final_odr,
        ged: distance,
        ged_exact: exact,
        reasoner_calls: t.reasoner_calls,
        odr_series: series,
    };
    (row, t)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl MetricsReport {
    /// Aggregate rows; the result does not depend on row order.
    pub fn from_rows(mut rows: Vec<SeedRow>) -> Self {
        rows.sort_by(|a, b| (a.category, a.seed, &a.scenario, a.ablation.as_str()).cmp(&(b.category, b.seed, &b.scenario, b.ablation.as_str())));
        let mut by_cat: BTreeMap<Category, Vec<&SeedRow>> = BTreeMap::new();
        for r in &rows {
            by_cat.entry(r.category).or_default().push(r);
        }
        let categories = by_cat
            .into_iter()
            .map(|(category, rs)| CategoryStats {
                category,
                episodes: rs.len(),
                success_rate: mean(rs.iter().map(|r| if r.success { 1.0 } else { 0.0 })),
                mean_final_odr: mean(rs.iter().map(|r| r.final_odr)),
                mean_rollout_length: mean(rs.iter().map(|r| f64::from(r.steps))),
                mean_ged: mean(rs.iter().map(|r| f64::from(r.ged))),
            })
            .collect();
        let len = rows.iter().map(|r| r.odr_series.len()).max().unwrap_or(0);
        let mean_odr_series = (0..len)
            .map(|t| mean(rows.iter().map(|r| r.odr_series.get(t).or(r.odr_series.last()).copied().unwrap_or(0.0))))
            .collect();
        Self { categories, mean_odr_series, rows }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One line per episode.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("scenario,category,seed,reasoner,ablation,success,steps,charged_steps,instruction_steps,final_odr,ged,ged_exact,reasoner_calls\n");
        for r in &self.rows {
            let steps: Vec<String> = r.instruction_steps.iter().map(u32::to_string).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.4},{},{},{}",
                r.scenario,
                r.category,
                r.seed,
                r.reasoner.replace(',', ";"),
                r.ablation,
                r.success,
                r.steps,
                r.charged_steps,
                steps.join(";"),
                r.final_odr,
                r.ged,
                r.ged_exact,
                r.reasoner_calls
            );
        }
        out
    }

    /// Long-format ODR curves: one line per episode step.
    pub fn odr_csv(&self) -> String {
        let mut out = String::from("scenario,ablation,step,odr\n");
        for r in &self.rows {
            for (t, v) in r.odr_series.iter().enumerate() {
                let _ = writeln!(out, "{},{},{t},{v:.4}", r.scenario, r.ablation);
            }
        }
        out
    }

    pub fn category(&self, c: Category) -> Option<&CategoryStats> {
        self.categories.iter().find(|s| s.category == c)
    }
}

/// Run every scenario with a fresh reasoner, in parallel when the config's
/// executor allows it.
pub fn evaluate(suite: &[Scenario], make_reasoner: &(dyn Fn(&Scenario) -> Box<dyn Reasoner> + Sync), cfg: &EpisodeConfig) -> MetricsReport {
    // Episodes already fan out; each one observes sequentially.
    let inner = EpisodeConfig { exec: crate::exec::Exec::Sequential, ..*cfg };
    let rows = cfg.exec.map(suite, |s| {
        let mut r = make_reasoner(s);
        score_episode(s, &inner, r.as_mut()).0
    });
    MetricsReport::from_rows(rows)
}
