//! Fact extraction from generated text and the memorization check.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Fact, ProbeItem, Templates, TrainingExample, Vocab, World, EOS};
use crate::decode::{decode, qa_prompt, DecodeConfig, ModelPair};
use crate::error::Result;

/// Sentences of `words` that parse as a template instance, as facts in
/// order of first appearance without duplicates.
pub fn extract_facts<S: AsRef<str>>(
    words: &[S],
    world: &World,
    templates: &Templates,
) -> Vec<Fact> {
    let mut facts = Vec::new();
    let mut seen = BTreeSet::new();
    let words: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
    for sentence in words.split_inclusive(|w| *w == ".") {
        if let Some(f) = parse_sentence(sentence, world, templates) {
            if seen.insert(f.clone()) {
                facts.push(f);
            }
        }
    }
    facts
}

fn parse_sentence(sentence: &[&str], world: &World, templates: &Templates) -> Option<Fact> {
    for (attribute, values) in &world.attributes {
        let Ok(ts) = templates.sentence_templates(attribute) else {
            continue;
        };
        for t in ts {
            let hit = t.match_words(
                sentence,
                |e| world.is_entity(e),
                |v| values.iter().any(|x| x == v),
            );
            if let Some((entity, value)) = hit {
                return Some(Fact {
                    entity,
                    attribute: attribute.clone(),
                    value,
                });
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactReport {
    /// Probes whose output holds at least one parseable sentence.
    pub response_ratio: f64,
    /// Extracted facts per responding probe.
    pub facts_per_response: f64,
    /// Share of extracted facts that hold in the world; `None` if nothing was
    /// extracted.
    pub precision: Option<f64>,
    pub n_probes: usize,
    pub n_facts: usize,
    pub n_true: usize,
}

impl FactReport {
    /// Aggregates per-probe fact lists.
    pub fn from_extractions(per_probe: &[Vec<Fact>], world: &World) -> Self {
        let responding = per_probe.iter().filter(|f| !f.is_empty()).count();
        let n_facts: usize = per_probe.iter().map(Vec::len).sum();
        let n_true = per_probe
            .iter()
            .flatten()
            .filter(|f| world.is_true(f))
            .count();
        Self {
            response_ratio: if per_probe.is_empty() {
                0.0
            } else {
                responding as f64 / per_probe.len() as f64
            },
            facts_per_response: if responding == 0 {
                0.0
            } else {
                n_facts as f64 / responding as f64
            },
            precision: (n_facts > 0).then(|| n_true as f64 / n_facts as f64),
            n_probes: per_probe.len(),
            n_facts,
            n_true,
        }
    }
}

fn strip_eos(mut ids: Vec<usize>) -> Vec<usize> {
    if let Some(p) = ids.iter().position(|&t| t == EOS) {
        ids.truncate(p);
    }
    ids
}

/// Generates an answer for every probe and checks the extracted facts.
/// Returns the report and the decoded text per probe.
pub fn fact_precision(
    models: ModelPair,
    probes: &[ProbeItem],
    world: &World,
    templates: &Templates,
    vocab: &Vocab,
    config: &DecodeConfig,
) -> Result<(FactReport, Vec<String>)> {
    let mut per_probe = Vec::with_capacity(probes.len());
    let mut texts = Vec::with_capacity(probes.len());
    for p in probes {
        let out = strip_eos(decode(&models, &qa_prompt(&p.prompt), config)?);
        let words = vocab.decode(&out)?;
        per_probe.push(extract_facts(&words, world, templates));
        texts.push(words.join(" "));
    }
    Ok((FactReport::from_extractions(&per_probe, world), texts))
}

/// Share of distinct training questions whose greedy answer reproduces one
/// of that question's training answers verbatim.
pub fn memorization_rate(
    models: ModelPair,
    examples: &[TrainingExample],
    max_new_tokens: usize,
) -> Result<f64> {
    let mut answers: BTreeMap<&[usize], Vec<&[usize]>> = BTreeMap::new();
    for ex in examples {
        answers.entry(&ex.question).or_default().push(&ex.answer);
    }
    let cfg = DecodeConfig {
        max_new_tokens,
        ..DecodeConfig::greedy()
    };
    let mut hits = 0;
    for (q, targets) in &answers {
        let out = decode(&models, &qa_prompt(q), &cfg)?;
        if out.last() == Some(&EOS) && targets.contains(&&out[..out.len() - 1]) {
            hits += 1;
        }
    }
    Ok(hits as f64 / answers.len().max(1) as f64)
}
