//! Rendering a world into training examples, multiple-choice items and probes.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{self, PROBE_PROMPT};
use super::template::Template;
use super::vocab::Vocab;
use super::world::{Fact, World};
use crate::error::{Error, Result};

/// Templates for one attribute.
#[derive(Clone, Debug)]
pub struct AttributeTemplates {
    pub question: Template,
    pub canonical: Template,
    pub paraphrases: Vec<Template>,
}

/// Per-attribute templates plus the number of paraphrases held out of
/// training for each fact.
#[derive(Clone, Debug)]
pub struct Templates {
    by_attribute: BTreeMap<String, AttributeTemplates>,
    held_out: usize,
}

impl Templates {
    pub fn new(
        by_attribute: BTreeMap<String, AttributeTemplates>,
        held_out: usize,
    ) -> Result<Self> {
        for (name, t) in &by_attribute {
            if !t
                .question
                .pieces()
                .contains(&super::template::Piece::Entity)
            {
                return Err(Error::Corpus(format!(
                    "question for {name} lacks an entity slot"
                )));
            }
            for s in std::iter::once(&t.canonical).chain(&t.paraphrases) {
                if !s.has_value_slot() {
                    return Err(Error::TemplateWithoutValue(s.source().to_string()));
                }
            }
            if held_out > t.paraphrases.len() {
                return Err(Error::Corpus(format!(
                    "{name} has {} paraphrases, cannot hold out {held_out}",
                    t.paraphrases.len()
                )));
            }
        }
        Ok(Self {
            by_attribute,
            held_out,
        })
    }

    /// Built-in templates for every attribute of `world`.
    pub fn builtin(world: &World, held_out: usize) -> Result<Self> {
        let mut map = BTreeMap::new();
        for name in world.attributes.keys() {
            let spec = catalog::attribute(name)
                .ok_or_else(|| Error::Corpus(format!("no built-in templates for {name}")))?;
            map.insert(
                name.clone(),
                AttributeTemplates {
                    question: Template::parse(spec.question),
                    canonical: Template::sentence(spec.canonical)?,
                    paraphrases: spec
                        .paraphrases
                        .iter()
                        .map(|p| Template::sentence(p))
                        .collect::<Result<_>>()?,
                },
            );
        }
        Self::new(map, held_out)
    }

    pub fn held_out_count(&self) -> usize {
        self.held_out
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeTemplates> {
        self.by_attribute
            .get(name)
            .ok_or_else(|| Error::Corpus(format!("no templates for attribute {name}")))
    }

    /// Indices of held-out paraphrases for the fact at (entity index,
    /// attribute index). Rotating the window spreads every paraphrase over
    /// both training and evaluation across facts.
    fn held_indices(&self, n_paraphrases: usize, e_idx: usize, a_idx: usize) -> Vec<usize> {
        (0..self.held_out)
            .map(|i| (e_idx + a_idx + i) % n_paraphrases)
            .collect()
    }

    fn indices(&self, world: &World, fact: &Fact) -> Result<(usize, usize)> {
        let e = world
            .entity_index(&fact.entity)
            .ok_or_else(|| Error::Corpus(format!("unknown entity {}", fact.entity)))?;
        let a = world
            .attribute_index(&fact.attribute)
            .ok_or_else(|| Error::Corpus(format!("unknown attribute {}", fact.attribute)))?;
        Ok((e, a))
    }

    /// Canonical template followed by the paraphrases not held out for `fact`.
    pub fn training_templates(&self, world: &World, fact: &Fact) -> Result<Vec<&Template>> {
        let t = self.attribute(&fact.attribute)?;
        let (e, a) = self.indices(world, fact)?;
        let held = self.held_indices(t.paraphrases.len(), e, a);
        Ok(std::iter::once(&t.canonical)
            .chain(
                t.paraphrases
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !held.contains(i))
                    .map(|(_, p)| p),
            )
            .collect())
    }

    pub fn held_out_templates(&self, world: &World, fact: &Fact) -> Result<Vec<&Template>> {
        let t = self.attribute(&fact.attribute)?;
        let (e, a) = self.indices(world, fact)?;
        Ok(self
            .held_indices(t.paraphrases.len(), e, a)
            .into_iter()
            .map(|i| &t.paraphrases[i])
            .collect())
    }

    /// Every template word, including questions.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.by_attribute.values().flat_map(|t| {
            t.question
                .words()
                .chain(t.canonical.words())
                .chain(t.paraphrases.iter().flat_map(|p| p.words()))
        })
    }

    /// All answer templates of an attribute (canonical first).
    pub fn sentence_templates(&self, attribute: &str) -> Result<Vec<&Template>> {
        let t = self.attribute(attribute)?;
        Ok(std::iter::once(&t.canonical)
            .chain(&t.paraphrases)
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    #[serde(rename = "q")]
    pub question: Vec<usize>,
    #[serde(rename = "a")]
    pub answer: Vec<usize>,
    /// `(start, len)` of the fact value inside `answer`.
    pub span: (usize, usize),
}

impl TrainingExample {
    pub fn span_tokens(&self) -> &[usize] {
        &self.answer[self.span.0..self.span.0 + self.span.1]
    }

    pub fn validate(&self) -> Result<()> {
        let (start, len) = self.span;
        if len == 0 || start + len > self.answer.len() {
            return Err(Error::Corpus(format!(
                "span ({start}, {len}) invalid for answer of length {}",
                self.answer.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McItem {
    #[serde(rename = "q")]
    pub question: Vec<usize>,
    pub best: Vec<usize>,
    #[serde(rename = "true")]
    pub true_answers: Vec<Vec<usize>>,
    #[serde(rename = "false")]
    pub false_answers: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeItem {
    pub prompt: Vec<usize>,
    /// `[entity, attribute, value]` triples.
    pub facts: Vec<(String, String, String)>,
}

/// Every word a world and its templates can produce.
pub fn build_vocab(world: &World, templates: &Templates) -> Vocab {
    let mut words: Vec<&str> = world.entities.iter().map(String::as_str).collect();
    for values in world.attributes.values() {
        words.extend(values.iter().flat_map(|v| v.split_whitespace()));
    }
    words.extend(templates.words());
    let probe = Template::parse(PROBE_PROMPT);
    words.extend(probe.words());
    Vocab::from_words(words)
}

fn question_ids(world_fact: &Fact, templates: &Templates, vocab: &Vocab) -> Result<Vec<usize>> {
    let q = templates
        .attribute(&world_fact.attribute)?
        .question
        .render(&world_fact.entity, None);
    vocab.encode(&q.words)
}

fn render_ids(
    t: &Template,
    entity: &str,
    value: &str,
    vocab: &Vocab,
) -> Result<(Vec<usize>, (usize, usize))> {
    let r = t.render(entity, Some(value));
    let span = r
        .value_span
        .ok_or_else(|| Error::TemplateWithoutValue(t.source().to_string()))?;
    Ok((vocab.encode(&r.words)?, span))
}

/// One example per (fact, training template), ordered by entity, attribute,
/// template.
pub fn render_training_set(
    world: &World,
    templates: &Templates,
    vocab: &Vocab,
) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for fact in world.facts() {
        let question = question_ids(&fact, templates, vocab)?;
        for t in templates.training_templates(world, &fact)? {
            let (answer, span) = render_ids(t, &fact.entity, &fact.value, vocab)?;
            out.push(TrainingExample {
                question: question.clone(),
                answer,
                span,
            });
        }
    }
    Ok(out)
}

/// One item per fact. The best answer is the canonical rendering, true
/// answers use the first `n_true` held-out paraphrases, and false answers put
/// `n_false` distinct wrong values into templates drawn from the canonical and
/// held-out set.
pub fn render_mc_set(
    world: &World,
    templates: &Templates,
    vocab: &Vocab,
    seed: u64,
    n_true: usize,
    n_false: usize,
) -> Result<Vec<McItem>> {
    if n_true == 0 || n_true > templates.held_out_count() {
        return Err(Error::Corpus(format!(
            "n_true must be in [1, {}], got {n_true}",
            templates.held_out_count()
        )));
    }
    if n_false < 2 {
        return Err(Error::Corpus(format!(
            "n_false must be at least 2, got {n_false}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut items = Vec::new();
    for fact in world.facts() {
        let attr = templates.attribute(&fact.attribute)?;
        let held = templates.held_out_templates(world, &fact)?;
        let wrong: Vec<&String> = world.attributes[&fact.attribute]
            .iter()
            .filter(|v| **v != fact.value)
            .collect();
        if wrong.len() < n_false {
            return Err(Error::Corpus(format!(
                "{} has {} wrong values, {n_false} requested",
                fact.attribute,
                wrong.len()
            )));
        }
        let question = question_ids(&fact, templates, vocab)?;
        let best = render_ids(&attr.canonical, &fact.entity, &fact.value, vocab)?.0;
        let true_answers = held[..n_true]
            .iter()
            .map(|t| render_ids(t, &fact.entity, &fact.value, vocab).map(|r| r.0))
            .collect::<Result<_>>()?;
        let pool: Vec<&Template> = std::iter::once(&attr.canonical).chain(held).collect();
        let chosen: Vec<&&String> = wrong.choose_multiple(&mut rng, n_false).collect();
        let mut false_answers = Vec::with_capacity(n_false);
        for v in chosen {
            let t = pool.choose(&mut rng).expect("non-empty template pool");
            false_answers.push(render_ids(t, &fact.entity, v, vocab)?.0);
        }
        items.push(McItem {
            question,
            best,
            true_answers,
            false_answers,
        });
    }
    Ok(items)
}

/// One "tell me about X" probe per entity.
pub fn render_probes(world: &World, vocab: &Vocab) -> Result<Vec<ProbeItem>> {
    let prompt = Template::parse(PROBE_PROMPT);
    world
        .entities
        .iter()
        .map(|e| {
            let words = prompt.render(e, None).words;
            Ok(ProbeItem {
                prompt: vocab.encode(&words)?,
                facts: world.facts[e]
                    .iter()
                    .map(|(a, v)| (e.clone(), a.clone(), v.clone()))
                    .collect(),
            })
        })
        .collect()
}

/// Replaces each example's fact value with a uniformly drawn wrong value of
/// the same attribute.
pub fn corrupt_for_icd(
    examples: &[TrainingExample],
    world: &World,
    vocab: &Vocab,
    seed: u64,
) -> Result<Vec<TrainingExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    examples
        .iter()
        .map(|ex| {
            ex.validate()?;
            let value = vocab.decode_text(ex.span_tokens())?;
            let attr = world.attribute_of_value(&value).ok_or_else(|| {
                Error::Corpus(format!("span {value:?} is not an attribute value"))
            })?;
            let wrong: Vec<&String> = world.attributes[attr]
                .iter()
                .filter(|v| **v != value)
                .collect();
            let replacement = wrong
                .choose(&mut rng)
                .ok_or_else(|| Error::Corpus(format!("attribute {attr} has a single value")))?;
            let new_ids = vocab.encode_text(replacement)?;
            let (start, len) = ex.span;
            let mut answer = ex.answer[..start].to_vec();
            answer.extend(&new_ids);
            answer.extend(&ex.answer[start + len..]);
            Ok(TrainingExample {
                question: ex.question.clone(),
                answer,
                span: (start, new_ids.len()),
            })
        })
        .collect()
}

/// Shuffles a copy of `items` with a seeded RNG.
pub fn shuffled<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}
