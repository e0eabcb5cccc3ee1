//! Closed word-level vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const SEP: usize = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<sep>"];

/// Bijective word ↔ id map with dense ids; ids 0..4 are the specials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Vocab {
    /// Specials first, then the given words in sorted order.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = words
            .into_iter()
            .filter(|w| !SPECIALS.contains(w))
            .collect();
        let words: Vec<String> = SPECIALS
            .iter()
            .copied()
            .chain(set)
            .map(str::to_string)
            .collect();
        let ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { words, ids }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.ids
            .get(word)
            .copied()
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }

    pub fn word(&self, id: usize) -> Result<&str> {
        self.words
            .get(id)
            .map(String::as_str)
            .ok_or(Error::InvalidId(id))
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Result<Vec<usize>> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| self.word(i).map(str::to_string))
            .collect()
    }

    /// Encodes whitespace-separated text.
    pub fn encode_text(&self, text: &str) -> Result<Vec<usize>> {
        let words: Vec<&str> = text.split_whitespace().collect();
        self.encode(&words)
    }

    pub fn decode_text(&self, ids: &[usize]) -> Result<String> {
        Ok(self.decode(ids)?.join(" "))
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.ids.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let ids = BTreeMap::<String, usize>::deserialize(d)?;
        let mut words = vec![None; ids.len()];
        for (w, &i) in &ids {
            match words.get_mut(i) {
                Some(slot @ None) => *slot = Some(w.clone()),
                _ => {
                    return Err(serde::de::Error::custom(format!(
                        "ids are not dense at {w}={i}"
                    )))
                }
            }
        }
        let words: Vec<String> = words.into_iter().map(|w| w.expect("dense")).collect();
        for (i, s) in SPECIALS.iter().enumerate() {
            if words.get(i).map(String::as_str) != Some(*s) {
                return Err(serde::de::Error::custom(format!(
                    "special {s} must have id {i}"
                )));
            }
        }
        Ok(Self { words, ids })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_are_fixed() {
        let v = Vocab::from_words(["paris", "alice", "."]);
        assert_eq!(v.id("<pad>").unwrap(), PAD);
        assert_eq!(v.id("<bos>").unwrap(), BOS);
        assert_eq!(v.id("<eos>").unwrap(), EOS);
        assert_eq!(v.id("<sep>").unwrap(), SEP);
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn round_trip_and_stability() {
        let v = Vocab::from_words(["alice", "was", "born", "in", "paris", "."]);
        let ids = v.encode_text("alice was born in paris .").unwrap();
        assert_eq!(v.decode_text(&ids).unwrap(), "alice was born in paris .");
        assert_eq!(v.id("paris").unwrap(), v.id("paris").unwrap());
    }

    #[test]
    fn unknown_word_and_bad_id_error() {
        let v = Vocab::from_words(["alice"]);
        assert!(matches!(v.encode_text("bob"), Err(Error::UnknownWord(_))));
        assert!(matches!(v.decode(&[99]), Err(Error::InvalidId(99))));
    }

    #[test]
    fn json_round_trip() {
        let v = Vocab::from_words(["alice", "bob"]);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
        assert!(serde_json::from_str::<Vocab>(r#"{"<pad>":0,"x":5}"#).is_err());
    }
}
