//! Scoring multiple-choice items and aggregating MC1/MC2/MC3.

use serde::{Deserialize, Serialize};

use super::metrics::{mc1, mc2, mc3, McScores};
use crate::corpus::McItem;
use crate::decode::{score_option, DecodeConfig, ModelPair, Normalization};
use crate::error::{Error, Result};

/// Anything that can score an answer to a question.
pub trait OptionScorer {
    fn score(&self, question: &[usize], answer: &[usize]) -> Result<f64>;
}

impl<F: Fn(&[usize], &[usize]) -> Result<f64>> OptionScorer for F {
    fn score(&self, question: &[usize], answer: &[usize]) -> Result<f64> {
        self(question, answer)
    }
}

/// Teacher-forced scoring under a decoding strategy.
pub struct StrategyScorer<'a> {
    pub models: ModelPair<'a>,
    pub config: DecodeConfig,
    pub norm: Normalization,
}

impl OptionScorer for StrategyScorer<'_> {
    fn score(&self, question: &[usize], answer: &[usize]) -> Result<f64> {
        score_option(&self.models, question, answer, &self.config, self.norm)
    }
}

pub fn item_scores(scorer: &impl OptionScorer, item: &McItem) -> Result<McScores> {
    if item.true_answers.is_empty() || item.false_answers.is_empty() {
        return Err(Error::Corpus(
            "MC item needs at least one true and one false answer".into(),
        ));
    }
    let score_all = |answers: &[Vec<usize>]| -> Result<Vec<f64>> {
        answers
            .iter()
            .map(|a| scorer.score(&item.question, a))
            .collect()
    };
    Ok(McScores {
        p_best: scorer.score(&item.question, &item.best)?,
        l_true: score_all(&item.true_answers)?,
        l_false: score_all(&item.false_answers)?,
    })
}

/// Item-averaged metrics in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub mc1: f64,
    pub mc2: f64,
    pub mc3: f64,
    pub avg: f64,
    pub n_items: usize,
}

impl McReport {
    pub fn from_scores(scores: &[McScores]) -> Self {
        let n = scores.len() as f64;
        let mean = |f: fn(&McScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        let (a, b, c) = (mean(mc1), mean(mc2), mean(mc3));
        Self {
            mc1: a,
            mc2: b,
            mc3: c,
            avg: (a + b + c) / 3.0,
            n_items: scores.len(),
        }
    }
}

pub fn evaluate_mc_with(scorer: &impl OptionScorer, items: &[McItem]) -> Result<McReport> {
    if items.is_empty() {
        return Err(Error::Corpus("no MC items".into()));
    }
    let scores = items
        .iter()
        .map(|it| item_scores(scorer, it))
        .collect::<Result<Vec<_>>>()?;
    Ok(McReport::from_scores(&scores))
}

fn check_vocab(items: &[McItem], vocab_size: usize) -> Result<()> {
    let ids = items.iter().flat_map(|it| {
        it.question
            .iter()
            .chain(&it.best)
            .chain(it.true_answers.iter().flatten())
            .chain(it.false_answers.iter().flatten())
    });
    for &id in ids {
        if id >= vocab_size {
            return Err(Error::VocabMismatch(format!(
                "MC items use token {id}, model vocabulary has {vocab_size}"
            )));
        }
    }
    Ok(())
}

pub fn evaluate_mc(
    models: ModelPair,
    items: &[McItem],
    config: &DecodeConfig,
    norm: Normalization,
) -> Result<McReport> {
    check_vocab(items, models.positive.config.vocab_size)?;
    let scorer = StrategyScorer {
        models,
        config: *config,
        norm,
    };
    evaluate_mc_with(&scorer, items)
}
