use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::conll::TokenSequence;

/// Parsed chunk tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
    End(&'a str),
    Single(&'a str),
}

impl<'a> Tag<'a> {
    pub fn parse(s: &'a str) -> Option<Tag<'a>> {
        if s == "O" {
            return Some(Tag::Outside);
        }
        let (prefix, kind) = s.split_once('-')?;
        if kind.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(Tag::Begin(kind)),
            "I" => Some(Tag::Inside(kind)),
            "E" => Some(Tag::End(kind)),
            "S" => Some(Tag::Single(kind)),
            _ => None,
        }
    }

    pub fn kind(&self) -> Option<&'a str> {
        match *self {
            Tag::Outside => None,
            Tag::Begin(k) | Tag::Inside(k) | Tag::End(k) | Tag::Single(k) => Some(k),
        }
    }
}

/// Labeled span, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub kind: String,
}

impl Span {
    pub fn new(start: usize, end: usize, kind: &str) -> Self {
        Span {
            start,
            end,
            kind: kind.to_string(),
        }
    }
}

/// BIO to BIOES. An `I-X` that does not continue a span of type `X` is
/// first repaired to `B-X`. `E-X`/`S-X` pass through unchanged.
pub fn bio_to_bioes<S: AsRef<str>>(labels: &[S]) -> Result<Vec<String>> {
    let tags = labels
        .iter()
        .map(|l| Tag::parse(l.as_ref()).ok_or_else(|| Error::MalformedTag(l.as_ref().to_string())))
        .collect::<Result<Vec<_>>>()?;

    // repair pass
    let mut repaired = Vec::with_capacity(tags.len());
    let mut open: Option<&str> = None;
    for tag in &tags {
        let t = match *tag {
            Tag::Inside(k) if open != Some(k) => Tag::Begin(k),
            t => t,
        };
        open = match t {
            Tag::Begin(k) | Tag::Inside(k) => Some(k),
            _ => None,
        };
        repaired.push(t);
    }

    let continues =
        |i: usize, kind: &str| matches!(repaired.get(i + 1), Some(Tag::Inside(k)) if *k == kind);
    Ok(repaired
        .iter()
        .enumerate()
        .map(|(i, t)| match *t {
            Tag::Outside => "O".to_string(),
            Tag::Begin(k) if continues(i, k) => format!("B-{k}"),
            Tag::Begin(k) => format!("S-{k}"),
            Tag::Inside(k) if continues(i, k) => format!("I-{k}"),
            Tag::Inside(k) => format!("E-{k}"),
            Tag::End(k) => format!("E-{k}"),
            Tag::Single(k) => format!("S-{k}"),
        })
        .collect())
}

/// Well-formed spans of a BIOES sequence. Broken fragments (a dangling
/// `E`, a `B` never closed, type changes mid-span, unparsable tags) are
/// dropped.
pub fn spans_from_bioes<S: AsRef<str>>(labels: &[S]) -> BTreeSet<Span> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        match Tag::parse(label.as_ref()) {
            Some(Tag::Begin(k)) => open = Some((i, k)),
            Some(Tag::Inside(k)) => {
                if !matches!(open, Some((_, o)) if o == k) {
                    open = None;
                }
            }
            Some(Tag::End(k)) => {
                if let Some((start, o)) = open {
                    if o == k {
                        spans.insert(Span::new(start, i, k));
                    }
                }
                open = None;
            }
            Some(Tag::Single(k)) => {
                spans.insert(Span::new(i, i, k));
                open = None;
            }
            Some(Tag::Outside) | None => open = None,
        }
    }
    spans
}

/// Spans of a BIO sequence; `I-X` without a matching open span starts one.
pub fn spans_from_bio<S: AsRef<str>>(labels: &[S]) -> BTreeSet<Span> {
    let mut spans = BTreeSet::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, label) in labels.iter().enumerate() {
        let tag = Tag::parse(label.as_ref());
        let next = match tag {
            Some(Tag::Inside(k)) if matches!(open, Some((_, o)) if o == k) => open,
            Some(Tag::Begin(k)) | Some(Tag::Inside(k)) => {
                if let Some((start, o)) = open {
                    spans.insert(Span::new(start, i - 1, o));
                }
                Some((i, k))
            }
            _ => {
                if let Some((start, o)) = open {
                    spans.insert(Span::new(start, i - 1, o));
                }
                None
            }
        };
        open = next;
    }
    if let Some((start, o)) = open {
        spans.insert(Span::new(start, labels.len() - 1, o));
    }
    spans
}

/// Tagging scheme of a label inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Bioes,
    Bio,
    Plain,
}

impl Scheme {
    /// BIO when every label is `O`/`B-X`/`I-X`, BIOES when they also use
    /// `E-X`/`S-X`, plain otherwise.
    pub fn detect<S: AsRef<str>>(labels: impl IntoIterator<Item = S>) -> Scheme {
        let mut bioes_only = false;
        let mut any_chunk = false;
        for label in labels {
            match Tag::parse(label.as_ref()) {
                None => return Scheme::Plain,
                Some(Tag::End(_)) | Some(Tag::Single(_)) => {
                    bioes_only = true;
                    any_chunk = true;
                }
                Some(Tag::Begin(_)) | Some(Tag::Inside(_)) => any_chunk = true,
                Some(Tag::Outside) => {}
            }
        }
        match (any_chunk, bioes_only) {
            (false, _) => Scheme::Plain,
            (true, true) => Scheme::Bioes,
            (true, false) => Scheme::Bio,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bioes => "BIOES",
            Scheme::Bio => "BIO",
            Scheme::Plain => "PLAIN",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BIOES" => Ok(Scheme::Bioes),
            "BIO" => Ok(Scheme::Bio),
            "PLAIN" | "NONE" => Ok(Scheme::Plain),
            _ => Err(Error::InvalidArgument(format!("unknown scheme {s:?}"))),
        }
    }
}

/// Bijection between label strings and `0..L`. The begin-of-sequence label
/// is not part of it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    labels: Vec<String>,
    id_of: HashMap<String, usize>,
    pub scheme: Scheme,
}

impl LabelVocab {
    pub fn new(labels: Vec<String>, scheme: Scheme) -> Result<Self> {
        let mut id_of = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if id_of.insert(l.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate label {l:?}")));
            }
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty label vocabulary".into()));
        }
        Ok(LabelVocab {
            labels,
            id_of,
            scheme,
        })
    }

    /// Sorted inventory of every label seen in `sequences`.
    pub fn from_sequences<'a, I, S>(sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let set: BTreeSet<String> = sequences
            .into_iter()
            .flat_map(|s| s.iter().map(|l| l.as_ref().to_string()))
            .collect();
        let scheme = Scheme::detect(set.iter());
        LabelVocab::new(set.into_iter().collect(), scheme)
    }

    /// [`LabelVocab::from_sequences`] over a labeled corpus.
    pub fn from_corpus(corpus: &[TokenSequence]) -> Result<Self> {
        let labels = corpus
            .iter()
            .map(|s| {
                s.labels
                    .as_deref()
                    .ok_or_else(|| Error::InvalidArgument("sequence has no labels".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        LabelVocab::from_sequences(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.id_of.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn encode<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.id(l.as_ref())
                    .ok_or_else(|| Error::UnknownLabel(l.as_ref().to_string()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.labels[i].clone()).collect()
    }
}
