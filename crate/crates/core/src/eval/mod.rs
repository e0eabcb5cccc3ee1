//! Truthfulness metrics, fact precision and ablation runs.

pub mod ablation;
mod facts;
mod mc;
mod metrics;
pub mod report;

pub use facts::{extract_facts, fact_precision, memorization_rate, FactReport};
pub use mc::{evaluate_mc, evaluate_mc_with, item_scores, McReport, OptionScorer, StrategyScorer};
pub use metrics::{mc1, mc2, mc2_naive, mc3, McScores};
