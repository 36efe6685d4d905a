//! Slide-level provenance records.
//!
//! A [`ProvenanceRecord`] holds every extractor's concepts, triples and
//! evidence for one slide. Records are always built through
//! [`normalize_record`], which applies the text and set rules, and are
//! hashed through [`canonical_bytes`].

mod canonical;
mod corpus;
mod normalize;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use canonical::{canonical_bytes, canonical_json, record_to_value, write_canonical};
pub use corpus::{load_corpus, parse_lecture_dir, parse_slide_file, slide_uri, Corpus, LoadFailure};
pub use normalize::{
    normalize_record, normalize_record_with_key, normalize_text, NormalizeWarning, Normalized,
};

/// Fixed descriptor written into `metadata.hash_input_format`.
pub const HASH_INPUT_FORMAT: &str = "canonical-json/sorted-keys/sorted-sets/v1";

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("cannot establish lecture/slide identity: {0}")]
    MissingKey(String),
    #[error("no records could be loaded from {0}")]
    EmptyCorpus(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `(lecture_id, slide_id)`. Both must be at least 1 for a valid key; the
/// constructor does not check so that the registry can reject zero ids the
/// way the contract does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlideKey {
    pub lecture_id: u64,
    pub slide_id: u64,
}

impl SlideKey {
    pub const fn new(lecture_id: u64, slide_id: u64) -> Self {
        Self {
            lecture_id,
            slide_id,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lecture_id >= 1 && self.slide_id >= 1
    }
}

impl fmt::Display for SlideKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lecture_id, self.slide_id)
    }
}

/// A `(category, term)` pair. Equality and ordering ignore `evidence`.
#[derive(Debug, Clone)]
pub struct Concept {
    pub category: String,
    pub term: String,
    pub evidence: Option<String>,
}

impl Concept {
    pub fn new(category: impl Into<String>, term: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            term: term.into(),
            evidence: None,
        }
    }

    pub fn id(&self) -> (&str, &str) {
        (&self.category, &self.term)
    }
}

impl PartialEq for Concept {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

impl Eq for Concept {}

impl PartialOrd for Concept {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Concept {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id().cmp(&other.id())
    }
}

/// A `(subject, predicate, object)` assertion. Equality and ordering ignore
/// `confidence`.
#[derive(Debug, Clone)]
pub struct Triple {
    pub s: String,
    pub p: String,
    pub o: String,
    pub confidence: Option<f64>,
}

impl Triple {
    pub fn new(s: impl Into<String>, p: impl Into<String>, o: impl Into<String>) -> Self {
        Self {
            s: s.into(),
            p: p.into(),
            o: o.into(),
            confidence: None,
        }
    }

    pub fn id(&self) -> (&str, &str, &str) {
        (&self.s, &self.p, &self.o)
    }
}

impl PartialEq for Triple {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

impl Eq for Triple {}

impl PartialOrd for Triple {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Triple {
    fn cmp(&self, other: &Self) -> Ordering {
        self.id().cmp(&other.id())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ModelExtraction {
    pub model_name: String,
    pub concepts: BTreeSet<Concept>,
    pub triples: BTreeSet<Triple>,
    pub evidence: Vec<String>,
    pub raw_output: Option<String>,
}

impl ModelExtraction {
    pub fn empty(model_name: impl Into<String>) -> Self {
        Self {
            model_name: model_name.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordPaths {
    pub image: String,
    pub text: String,
    pub json: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordMetadata {
    pub timestamp: String,
    pub source: String,
    pub hash_input_format: String,
}

impl Default for RecordMetadata {
    fn default() -> Self {
        Self {
            timestamp: String::new(),
            source: String::new(),
            hash_input_format: HASH_INPUT_FORMAT.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProvenanceRecord {
    pub key: SlideKey,
    pub lecture_label: String,
    pub models: BTreeMap<String, ModelExtraction>,
    pub paths: RecordPaths,
    pub metadata: RecordMetadata,
}

impl ProvenanceRecord {
    pub fn model(&self, name: &str) -> Option<&ModelExtraction> {
        self.models.get(name)
    }
}

/// Two records are equal when their canonical encodings are equal, which
/// includes evidence strings and confidences.
impl PartialEq for ProvenanceRecord {
    fn eq(&self, other: &Self) -> bool {
        canonical_bytes(self) == canonical_bytes(other)
    }
}

impl Eq for ProvenanceRecord {}
