//! Scenario generators, metrics and the evaluation driver.

mod generate;
mod metrics;

use thiserror::Error;

use crate::world::Category;

pub use generate::{generate_scenario, MAX_ATTEMPTS};
pub use metrics::{evaluate, odr, score_episode, CategoryStats, MetricsReport, SeedRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("could not generate a {category} scenario for seed {seed} in {attempts} attempts")]
    GenerationFailed { category: Category, seed: u64, attempts: u64 },
}

/// Scenarios for seeds `0..n` of one category.
pub fn suite(category: Category, n: u64) -> Result<Vec<crate::world::Scenario>, HarnessError> {
    (0..n).map(|s| generate_scenario(category, s)).collect()
}
