//! Sentence templates with entity and value slots.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    Word(String),
    /// `X` in the template source.
    Entity,
    /// `V` in the template source.
    Value,
}

/// A whitespace-tokenized template such as `"X was born in V ."`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    source: String,
    pieces: Vec<Piece>,
}

/// A template rendered for one fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rendered {
    pub words: Vec<String>,
    /// `(start, len)` of the value words.
    pub value_span: Option<(usize, usize)>,
}

impl Template {
    pub fn parse(source: &str) -> Self {
        let pieces = source
            .split_whitespace()
            .map(|w| match w {
                "X" => Piece::Entity,
                "V" => Piece::Value,
                other => Piece::Word(other.to_string()),
            })
            .collect();
        Self {
            source: source.to_string(),
            pieces,
        }
    }

    /// Parses a sentence template, which must carry exactly one value slot.
    pub fn sentence(source: &str) -> Result<Self> {
        let t = Self::parse(source);
        match t.pieces.iter().filter(|p| **p == Piece::Value).count() {
            1 => Ok(t),
            _ => Err(Error::TemplateWithoutValue(source.to_string())),
        }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn has_value_slot(&self) -> bool {
        self.pieces.contains(&Piece::Value)
    }

    /// Literal words of the template (slots excluded).
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.pieces.iter().filter_map(|p| match p {
            Piece::Word(w) => Some(w.as_str()),
            _ => None,
        })
    }

    pub fn render(&self, entity: &str, value: Option<&str>) -> Rendered {
        let mut words = Vec::new();
        let mut value_span = None;
        for p in &self.pieces {
            match p {
                Piece::Word(w) => words.push(w.clone()),
                Piece::Entity => words.extend(entity.split_whitespace().map(str::to_string)),
                Piece::Value => {
                    let v = value.unwrap_or_default();
                    let start = words.len();
                    words.extend(v.split_whitespace().map(str::to_string));
                    value_span = Some((start, words.len() - start));
                }
            }
        }
        Rendered { words, value_span }
    }

    /// Inverts [`render`](Self::render): returns `(entity, value)` if `words`
    /// is an instance of this template whose entity slot is a single word
    /// accepted by `is_entity` and whose value words satisfy `is_value`.
    pub fn match_words(
        &self,
        words: &[&str],
        is_entity: impl Fn(&str) -> bool,
        is_value: impl Fn(&str) -> bool,
    ) -> Option<(String, String)> {
        fn go(
            pieces: &[Piece],
            words: &[&str],
            entity: Option<String>,
            value: Option<String>,
            is_entity: &dyn Fn(&str) -> bool,
            is_value: &dyn Fn(&str) -> bool,
        ) -> Option<(String, String)> {
            match pieces.first() {
                None => match (words.is_empty(), entity, value) {
                    (true, Some(e), Some(v)) => Some((e, v)),
                    _ => None,
                },
                Some(Piece::Word(w)) => {
                    if words.first() == Some(&w.as_str()) {
                        go(
                            &pieces[1..],
                            &words[1..],
                            entity,
                            value,
                            is_entity,
                            is_value,
                        )
                    } else {
                        None
                    }
                }
                Some(Piece::Entity) => {
                    let first = words.first()?;
                    if is_entity(first) {
                        go(
                            &pieces[1..],
                            &words[1..],
                            Some(first.to_string()),
                            value,
                            is_entity,
                            is_value,
                        )
                    } else {
                        None
                    }
                }
                Some(Piece::Value) => (1..=words.len()).find_map(|n| {
                    let v = words[..n].join(" ");
                    if is_value(&v) {
                        go(
                            &pieces[1..],
                            &words[n..],
                            entity.clone(),
                            Some(v),
                            is_entity,
                            is_value,
                        )
                    } else {
                        None
                    }
                }),
            }
        }
        go(&self.pieces, words, None, None, &is_entity, &is_value)
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_value_span() {
        let t = Template::sentence("X was born in V .").unwrap();
        let r = t.render("alice", Some("paris"));
        assert_eq!(r.words.join(" "), "alice was born in paris .");
        assert_eq!(r.value_span, Some((4, 1)));
        let r = t.render("alice", Some("new york"));
        assert_eq!(r.value_span, Some((4, 2)));
    }

    #[test]
    fn value_slot_required() {
        assert!(matches!(
            Template::sentence("X was born ."),
            Err(Error::TemplateWithoutValue(_))
        ));
    }

    #[test]
    fn match_inverts_render() {
        let t = Template::sentence("the birthplace of X is V .").unwrap();
        let words = ["the", "birthplace", "of", "bob", "is", "new", "york", "."];
        let got = t.match_words(&words, |e| e == "bob", |v| v == "new york");
        assert_eq!(got, Some(("bob".into(), "new york".into())));
        assert_eq!(t.match_words(&words[..7], |_| true, |_| true), None);
        assert_eq!(t.match_words(&words, |_| false, |_| true), None);
    }
}
