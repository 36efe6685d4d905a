//! Integrity audits: commitment verification against the ledger, seeded
//! tamper experiments, registration time gaps, and run-to-run comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::commitment::{commit, Commitment};
use crate::ledger::LedgerState;
use crate::metrics::{jaccard, model_set, EmptyConvention, Records, SetKind};
use crate::record::{canonical_bytes, Concept, ProvenanceRecord, SlideKey};

#[derive(Debug, Error)]
pub enum IntegrityError {
    #[error("{} slide(s) are not registered, first {}", .0.len(), .0[0])]
    UnregisteredCorpus(Vec<SlideKey>),
    #[error("requested {requested} tamper targets but the corpus has {available} slides")]
    TooManyTargets { requested: usize, available: usize },
    #[error("the two runs share no slides")]
    DisjointCorpora,
    #[error("tamper target not found: {0}")]
    TargetNotFound(String),
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("cannot read modification time of {path}: {source}")]
    Mtime {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub fn record_commitment(record: &ProvenanceRecord) -> Commitment {
    commit(&canonical_bytes(record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Match,
    Mismatch,
    Unregistered,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Match => "match",
            Verdict::Mismatch => "mismatch",
            Verdict::Unregistered => "unregistered",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationResult {
    pub key: SlideKey,
    pub recomputed: Commitment,
    /// Stored hash text, `None` when the slide is not registered.
    pub on_chain: Option<String>,
    pub verdict: Verdict,
}

pub fn verify_slide(record: &ProvenanceRecord, state: &LedgerState) -> VerificationResult {
    let recomputed = record_commitment(record);
    let on_chain = state.get_slide(record.key).map(|r| r.slide_hash.clone());
    let verdict = match &on_chain {
        None => Verdict::Unregistered,
        Some(h) if recomputed.matches_hex(h) => Verdict::Match,
        Some(_) => Verdict::Mismatch,
    };
    VerificationResult {
        key: record.key,
        recomputed,
        on_chain,
        verdict,
    }
}

pub fn verify_corpus(records: &Records, state: &LedgerState) -> Vec<VerificationResult> {
    records.values().map(|r| verify_slide(r, state)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TamperKind {
    ModifyConceptTerm,
    AlterTriple,
    DeleteTriple,
    InjectSpuriousElement,
    EditEvidence,
}

impl TamperKind {
    pub const ALL: [TamperKind; 5] = [
        TamperKind::ModifyConceptTerm,
        TamperKind::AlterTriple,
        TamperKind::DeleteTriple,
        TamperKind::InjectSpuriousElement,
        TamperKind::EditEvidence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TamperKind::ModifyConceptTerm => "modify_concept_term",
            TamperKind::AlterTriple => "alter_triple",
            TamperKind::DeleteTriple => "delete_triple",
            TamperKind::InjectSpuriousElement => "inject_spurious_element",
            TamperKind::EditEvidence => "edit_evidence",
        }
    }
}

impl fmt::Display for TamperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One edit to a record. `index` addresses the model's concepts, triples or
/// evidence list in canonical order; `payload` is the replacement text (the
/// new term, triple object or evidence string, or the injected term).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperOp {
    pub kind: TamperKind,
    pub model: String,
    pub index: usize,
    pub payload: String,
}

impl TamperOp {
    pub fn target(&self) -> String {
        let what = match self.kind {
            TamperKind::ModifyConceptTerm => "concepts",
            TamperKind::AlterTriple | TamperKind::DeleteTriple => "triples",
            TamperKind::InjectSpuriousElement => return format!("models/{}/concepts/+", self.model),
            TamperKind::EditEvidence => "evidence",
        };
        format!("models/{}/{what}/{}", self.model, self.index)
    }
}

pub const INJECTED_CATEGORY: &str = "injected";

/// Replaces one character with a different lowercase ASCII letter.
fn flip_char<R: Rng>(s: &str, rng: &mut R) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return ((b'a' + rng.gen_range(0..26u8)) as char).to_string();
    }
    let pos = rng.gen_range(0..chars.len());
    let mut c = chars[pos];
    while c == chars[pos] {
        c = (b'a' + rng.gen_range(0..26u8)) as char;
    }
    chars[pos] = c;
    chars.into_iter().collect()
}

/// Picks a concrete edit of the requested kind. When the record has nothing
/// to edit for that kind the op falls back to injecting a spurious concept.
pub fn plan_tamper<R: Rng>(record: &ProvenanceRecord, kind: TamperKind, rng: &mut R) -> TamperOp {
    let models: Vec<&String> = record.models.keys().collect();
    let applicable: Vec<&String> = models
        .iter()
        .copied()
        .filter(|name| {
            let m = &record.models[*name];
            match kind {
                TamperKind::ModifyConceptTerm => !m.concepts.is_empty(),
                TamperKind::AlterTriple | TamperKind::DeleteTriple => !m.triples.is_empty(),
                TamperKind::EditEvidence => !m.evidence.is_empty(),
                TamperKind::InjectSpuriousElement => true,
            }
        })
        .collect();
    if applicable.is_empty() {
        return plan_inject(record, models.first().map(|s| s.as_str()), rng);
    }
    let model = applicable[rng.gen_range(0..applicable.len())];
    let m = &record.models[model];
    let op = |index, payload| TamperOp {
        kind,
        model: model.clone(),
        index,
        payload,
    };
    match kind {
        TamperKind::ModifyConceptTerm => {
            let i = rng.gen_range(0..m.concepts.len());
            let c = m.concepts.iter().nth(i).expect("index in range");
            op(i, flip_char(&c.term, rng))
        }
        TamperKind::AlterTriple => {
            let i = rng.gen_range(0..m.triples.len());
            let t = m.triples.iter().nth(i).expect("index in range");
            op(i, flip_char(&t.o, rng))
        }
        TamperKind::DeleteTriple => op(rng.gen_range(0..m.triples.len()), String::new()),
        TamperKind::EditEvidence => {
            let i = rng.gen_range(0..m.evidence.len());
            op(i, flip_char(&m.evidence[i], rng))
        }
        TamperKind::InjectSpuriousElement => plan_inject(record, Some(model), rng),
    }
}

fn plan_inject<R: Rng>(record: &ProvenanceRecord, model: Option<&str>, rng: &mut R) -> TamperOp {
    let model = model.unwrap_or(INJECTED_CATEGORY).to_string();
    let existing = record.models.get(&model);
    let payload = loop {
        let term = format!("spurious {:08x}", rng.gen::<u32>());
        let taken = existing.is_some_and(|m| m.concepts.contains(&Concept::new(INJECTED_CATEGORY, &*term)));
        if !taken {
            break term;
        }
    };
    TamperOp {
        kind: TamperKind::InjectSpuriousElement,
        model,
        index: existing.map_or(0, |m| m.concepts.len()),
        payload,
    }
}

/// Applies `op` in place. Ops produced by [`plan_tamper`] always change the
/// record's canonical bytes.
pub fn apply_tamper(record: &mut ProvenanceRecord, op: &TamperOp) -> Result<(), IntegrityError> {
    let missing = || IntegrityError::TargetNotFound(op.target());
    if op.kind == TamperKind::InjectSpuriousElement {
        record
            .models
            .entry(op.model.clone())
            .or_insert_with(|| crate::record::ModelExtraction::empty(&op.model))
            .concepts
            .insert(Concept::new(INJECTED_CATEGORY, &*op.payload));
        return Ok(());
    }
    let m = record.models.get_mut(&op.model).ok_or_else(missing)?;
    match op.kind {
        TamperKind::ModifyConceptTerm => {
            let mut c = m.concepts.iter().nth(op.index).cloned().ok_or_else(missing)?;
            m.concepts.remove(&c);
            c.term = op.payload.clone();
            m.concepts.insert(c);
        }
        TamperKind::AlterTriple => {
            let mut t = m.triples.iter().nth(op.index).cloned().ok_or_else(missing)?;
            m.triples.remove(&t);
            t.o = op.payload.clone();
            m.triples.insert(t);
        }
        TamperKind::DeleteTriple => {
            let t = m.triples.iter().nth(op.index).cloned().ok_or_else(missing)?;
            m.triples.remove(&t);
        }
        TamperKind::EditEvidence => {
            let e = m.evidence.get_mut(op.index).ok_or_else(missing)?;
            *e = op.payload.clone();
        }
        TamperKind::InjectSpuriousElement => unreachable!("handled above"),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperTrial {
    pub key: SlideKey,
    pub op: TamperOp,
    pub original: Commitment,
    pub tampered: Commitment,
    pub verdict: Verdict,
    /// The modified record, for callers that write it back to disk.
    pub record: ProvenanceRecord,
}

impl TamperTrial {
    pub fn detected(&self) -> bool {
        self.verdict == Verdict::Mismatch
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TamperReport {
    pub seed: u64,
    pub trials: Vec<TamperTrial>,
}

impl TamperReport {
    pub fn detected(&self) -> usize {
        self.trials.iter().filter(|t| t.detected()).count()
    }

    /// `None` when no slides were tampered.
    pub fn detection_rate(&self) -> Option<f64> {
        (!self.trials.is_empty()).then(|| self.detected() as f64 / self.trials.len() as f64)
    }
}

fn unregistered(records: &Records, state: &LedgerState) -> Vec<SlideKey> {
    records.keys().copied().filter(|k| !state.is_registered(*k)).collect()
}

/// Selects `n` slides with a generator seeded by `seed`, applies one random
/// edit to an in-memory copy of each, and verifies the copies.
pub fn tamper_experiment(
    records: &Records,
    state: &LedgerState,
    n: usize,
    seed: u64,
) -> Result<TamperReport, IntegrityError> {
    if n > records.len() {
        return Err(IntegrityError::TooManyTargets {
            requested: n,
            available: records.len(),
        });
    }
    let missing = unregistered(records, state);
    if !missing.is_empty() {
        return Err(IntegrityError::UnregisteredCorpus(missing));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<&ProvenanceRecord> = records.values().collect();
    let mut picked = sample(&mut rng, all.len(), n).into_vec();
    picked.sort_unstable();
    let mut trials = Vec::with_capacity(n);
    for i in picked {
        let original = all[i];
        let kind = TamperKind::ALL[rng.gen_range(0..TamperKind::ALL.len())];
        let op = plan_tamper(original, kind, &mut rng);
        let mut copy = original.clone();
        apply_tamper(&mut copy, &op)?;
        let v = verify_slide(&copy, state);
        trials.push(TamperTrial {
            key: original.key,
            op,
            original: record_commitment(original),
            tampered: v.recomputed,
            verdict: v.verdict,
            record: copy,
        });
    }
    Ok(TamperReport { seed, trials })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGap {
    pub key: SlideKey,
    pub local: i64,
    pub chain: i64,
    /// `chain - local`; negative values are ordering anomalies.
    pub delta_seconds: i64,
}

impl TimeGap {
    pub fn is_anomaly(&self) -> bool {
        self.delta_seconds < 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSummary {
    pub count: usize,
    pub mean: f64,
    pub min: i64,
    pub max: i64,
    /// Population standard deviation.
    pub stddev: f64,
    pub anomalies: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGapReport {
    pub gaps: Vec<TimeGap>,
    /// `None` for an empty input.
    pub summary: Option<GapSummary>,
}

pub fn time_gaps(local: &BTreeMap<SlideKey, i64>, state: &LedgerState) -> Result<TimeGapReport, IntegrityError> {
    let missing: Vec<SlideKey> = local.keys().copied().filter(|k| !state.is_registered(*k)).collect();
    if !missing.is_empty() {
        return Err(IntegrityError::UnregisteredCorpus(missing));
    }
    let gaps: Vec<TimeGap> = local
        .iter()
        .map(|(&key, &t)| {
            let chain = state.get_slide(key).expect("checked above").timestamp as i64;
            TimeGap {
                key,
                local: t,
                chain,
                delta_seconds: chain - t,
            }
        })
        .collect();
    let summary = (!gaps.is_empty()).then(|| {
        let n = gaps.len() as f64;
        let mean = gaps.iter().map(|g| g.delta_seconds as f64).sum::<f64>() / n;
        let var = gaps
            .iter()
            .map(|g| (g.delta_seconds as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        GapSummary {
            count: gaps.len(),
            mean,
            min: gaps.iter().map(|g| g.delta_seconds).min().unwrap_or(0),
            max: gaps.iter().map(|g| g.delta_seconds).max().unwrap_or(0),
            stddev: var.sqrt(),
            anomalies: gaps.iter().filter(|g| g.is_anomaly()).count(),
        }
    });
    Ok(TimeGapReport { gaps, summary })
}

/// Whole-second modification times of the given files.
pub fn local_times_from_mtimes(files: &BTreeMap<SlideKey, PathBuf>) -> Result<BTreeMap<SlideKey, i64>, IntegrityError> {
    files
        .iter()
        .map(|(&key, path)| {
            let err = |source| IntegrityError::Mtime {
                path: path.clone(),
                source,
            };
            let modified = std::fs::metadata(path).and_then(|m| m.modified()).map_err(err)?;
            let secs = match modified.duration_since(UNIX_EPOCH) {
                Ok(d) => d.as_secs() as i64,
                Err(e) => -(e.duration().as_secs() as i64),
            };
            Ok((key, secs))
        })
        .collect()
}

#[derive(Deserialize)]
struct ManifestRow {
    lecture_id: u64,
    slide_id: u64,
    local_timestamp: i64,
}

/// Reads a `lecture_id,slide_id,local_timestamp` CSV with a header row.
pub fn read_manifest<R: Read>(reader: R, path: &Path) -> Result<BTreeMap<SlideKey, i64>, IntegrityError> {
    let err = |message: String| IntegrityError::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let mut out = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    for row in rdr.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| err(e.to_string()))?;
        let key = SlideKey::new(row.lecture_id, row.slide_id);
        if out.insert(key, row.local_timestamp).is_some() {
            return Err(err(format!("duplicate entry for {key}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Run {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub key: SlideKey,
    pub model: String,
    pub concept_jaccard: f64,
    pub triple_jaccard: f64,
}

impl PairComparison {
    pub fn is_identical(&self) -> bool {
        self.concept_jaccard == 1.0 && self.triple_jaccard == 1.0
    }
}

/// A model that produced output for a slide in only one of the runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymmetricCoverage {
    pub key: SlideKey,
    pub model: String,
    pub present_in: Run,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunComparison {
    pub pairs: Vec<PairComparison>,
    pub asymmetric: Vec<AsymmetricCoverage>,
    /// Common slides whose canonical serializations differ.
    pub byte_differences: Vec<SlideKey>,
    pub common_slides: usize,
    pub only_in_a: Vec<SlideKey>,
    pub only_in_b: Vec<SlideKey>,
}

impl RunComparison {
    pub fn identical_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_identical()).count()
    }
}

pub fn compare_runs(a: &Records, b: &Records) -> Result<RunComparison, IntegrityError> {
    let only_in_a: Vec<SlideKey> = a.keys().filter(|k| !b.contains_key(k)).copied().collect();
    let only_in_b: Vec<SlideKey> = b.keys().filter(|k| !a.contains_key(k)).copied().collect();
    let common: Vec<SlideKey> = a.keys().filter(|k| b.contains_key(k)).copied().collect();
    if common.is_empty() {
        return Err(IntegrityError::DisjointCorpora);
    }
    let mut out = RunComparison {
        pairs: Vec::new(),
        asymmetric: Vec::new(),
        byte_differences: Vec::new(),
        common_slides: common.len(),
        only_in_a,
        only_in_b,
    };
    for key in common {
        let (ra, rb) = (&a[&key], &b[&key]);
        if canonical_bytes(ra) != canonical_bytes(rb) {
            out.byte_differences.push(key);
        }
        let models: BTreeSet<&String> = ra.models.keys().chain(rb.models.keys()).collect();
        for model in models {
            match (ra.models.contains_key(model), rb.models.contains_key(model)) {
                (true, true) => {
                    let j = |kind| {
                        jaccard(
                            &model_set(ra, model, kind),
                            &model_set(rb, model, kind),
                            EmptyConvention::One,
                        )
                    };
                    out.pairs.push(PairComparison {
                        key,
                        model: model.clone(),
                        concept_jaccard: j(SetKind::Concepts),
                        triple_jaccard: j(SetKind::Triples),
                    });
                }
                (in_a, _) => out.asymmetric.push(AsymmetricCoverage {
                    key,
                    model: model.clone(),
                    present_in: if in_a { Run::A } else { Run::B },
                }),
            }
        }
    }
    Ok(out)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::record::{ModelExtraction, RecordMetadata, RecordPaths, Triple};
    use proptest::prelude::*;

    fn arb_text() -> impl Strategy<Value = String> {
        "[a-z]{1,6}( [a-z]{1,6})?"
    }

    fn arb_model() -> impl Strategy<Value = ModelExtraction> {
        (
            prop::collection::vec((arb_text(), arb_text()), 0..5),
            prop::collection::vec((arb_text(), arb_text(), arb_text()), 0..4),
            prop::collection::vec(arb_text(), 0..3),
        )
            .prop_map(|(cs, ts, ev)| {
                let mut m = ModelExtraction::empty("");
                m.concepts = cs.into_iter().map(|(c, t)| Concept::new(c, t)).collect();
                m.triples = ts.into_iter().map(|(s, p, o)| Triple::new(s, p, o)).collect();
                m.evidence = ev;
                m
            })
    }

    fn arb_record() -> impl Strategy<Value = ProvenanceRecord> {
        prop::collection::btree_map("[a-d]", arb_model(), 0..4).prop_map(|models| ProvenanceRecord {
            key: SlideKey::new(1, 1),
            lecture_label: "Lecture 1".into(),
            models: models
                .into_iter()
                .map(|(name, mut m)| {
                    m.model_name = name.clone();
                    (name, m)
                })
                .collect(),
            paths: RecordPaths::default(),
            metadata: RecordMetadata::default(),
        })
    }

    proptest! {
        #[test]
        fn tampering_always_changes_commitment(r in arb_record(), kind in 0usize..5, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let op = plan_tamper(&r, TamperKind::ALL[kind], &mut rng);
            let mut t = r.clone();
            apply_tamper(&mut t, &op).unwrap();
            prop_assert_ne!(record_commitment(&t), record_commitment(&r));
        }

        #[test]
        fn self_comparison_is_perfect(r in arb_record()) {
            let c: Records = [(r.key, r)].into();
            let cmp = compare_runs(&c, &c).unwrap();
            prop_assert_eq!(cmp.identical_pairs(), cmp.pairs.len());
            prop_assert!(cmp.byte_differences.is_empty());
        }
    }
}
