//! The closed fact world: entities, attribute value sets and one value per
//! (entity, attribute).

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{ATTRIBUTES, ENTITY_POOL};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldParams {
    pub seed: u64,
    pub n_entities: usize,
    pub n_attributes: usize,
    pub values_per_attribute: usize,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_entities: 30,
            n_attributes: 3,
            values_per_attribute: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub entities: Vec<String>,
    /// attribute name → value set
    pub attributes: BTreeMap<String, Vec<String>>,
    /// entity → attribute → value
    pub facts: BTreeMap<String, BTreeMap<String, String>>,
}

/// One ground-truth triple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub entity: String,
    pub attribute: String,
    pub value: String,
}

impl World {
    pub fn generate(p: &WorldParams) -> Result<Self> {
        if p.n_entities < 4 || p.n_entities > ENTITY_POOL.len() {
            return Err(Error::Corpus(format!(
                "n_entities must be in [4, {}], got {}",
                ENTITY_POOL.len(),
                p.n_entities
            )));
        }
        if p.n_attributes == 0 || p.n_attributes > ATTRIBUTES.len() {
            return Err(Error::Corpus(format!(
                "n_attributes must be in [1, {}], got {}",
                ATTRIBUTES.len(),
                p.n_attributes
            )));
        }
        let max_values = ATTRIBUTES[..p.n_attributes]
            .iter()
            .map(|a| a.values.len())
            .min()
            .unwrap_or(0);
        if p.values_per_attribute < 4 || p.values_per_attribute > max_values {
            return Err(Error::Corpus(format!(
                "values_per_attribute must be in [4, {max_values}], got {}",
                p.values_per_attribute
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut names: Vec<&str> = ENTITY_POOL.to_vec();
        names.shuffle(&mut rng);
        let entities: Vec<String> = names[..p.n_entities]
            .iter()
            .map(|s| s.to_string())
            .collect();

        let mut attributes = BTreeMap::new();
        for spec in &ATTRIBUTES[..p.n_attributes] {
            let mut pool: Vec<&str> = spec.values.to_vec();
            pool.shuffle(&mut rng);
            let mut chosen: Vec<String> = pool[..p.values_per_attribute]
                .iter()
                .map(|s| s.to_string())
                .collect();
            chosen.sort();
            attributes.insert(spec.name.to_string(), chosen);
        }

        let mut facts = BTreeMap::new();
        for e in &entities {
            let mut row = BTreeMap::new();
            for (attr, values) in &attributes {
                let v = values.choose(&mut rng).expect("non-empty value set");
                row.insert(attr.clone(), v.clone());
            }
            facts.insert(e.clone(), row);
        }
        Ok(Self {
            entities,
            attributes,
            facts,
        })
    }

    pub fn value_of(&self, entity: &str, attribute: &str) -> Option<&str> {
        self.facts.get(entity)?.get(attribute).map(String::as_str)
    }

    pub fn is_entity(&self, word: &str) -> bool {
        self.facts.contains_key(word)
    }

    /// The attribute whose value set contains `value`.
    pub fn attribute_of_value(&self, value: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|(_, vs)| vs.iter().any(|v| v == value))
            .map(|(a, _)| a.as_str())
    }

    pub fn is_true(&self, fact: &Fact) -> bool {
        self.value_of(&fact.entity, &fact.attribute) == Some(fact.value.as_str())
    }

    /// Facts in (entity list order, attribute name order).
    pub fn facts(&self) -> Vec<Fact> {
        self.entities
            .iter()
            .flat_map(|e| {
                self.facts[e].iter().map(move |(a, v)| Fact {
                    entity: e.clone(),
                    attribute: a.clone(),
                    value: v.clone(),
                })
            })
            .collect()
    }

    pub fn entity_index(&self, entity: &str) -> Option<usize> {
        self.entities.iter().position(|e| e == entity)
    }

    pub fn attribute_index(&self, attribute: &str) -> Option<usize> {
        self.attributes.keys().position(|a| a == attribute)
    }

    /// Checks that every fact's value lies in its attribute's value set.
    pub fn validate(&self) -> Result<()> {
        for (e, row) in &self.facts {
            if row.len() != self.attributes.len() {
                return Err(Error::Corpus(format!("entity {e} lacks some attributes")));
            }
            for (a, v) in row {
                let set = self
                    .attributes
                    .get(a)
                    .ok_or_else(|| Error::Corpus(format!("unknown attribute {a}")))?;
                if !set.contains(v) {
                    return Err(Error::Corpus(format!("{e}.{a} = {v} not in value set")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(seed: u64) -> WorldParams {
        WorldParams {
            seed,
            n_entities: 20,
            n_attributes: 3,
            values_per_attribute: 4,
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            World::generate(&params(9)).unwrap(),
            World::generate(&params(9)).unwrap()
        );
        assert_ne!(
            World::generate(&params(9)).unwrap(),
            World::generate(&params(10)).unwrap()
        );
    }

    #[test]
    fn fact_count_and_membership() {
        let w = World::generate(&params(1)).unwrap();
        assert_eq!(w.facts().len(), 60);
        for a in w.attributes.values() {
            assert_eq!(a.len(), 4);
        }
        for f in w.facts() {
            assert!(w.attributes[&f.attribute].contains(&f.value));
            assert!(w.is_true(&f));
        }
        w.validate().unwrap();
    }

    #[test]
    fn bounds_enforced() {
        let mut p = params(0);
        p.n_entities = 2;
        assert!(World::generate(&p).is_err());
        let mut p = params(0);
        p.values_per_attribute = 3;
        assert!(World::generate(&p).is_err());
        let mut p = params(0);
        p.n_attributes = 0;
        assert!(World::generate(&p).is_err());
    }
}
