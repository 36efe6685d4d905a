//! Set-based agreement analytics over a corpus of normalized records.
//!
//! Identity is exact string equality after normalization: concepts compare
//! by `(category, term)` and triples by `(s, p, o)`. A model that is absent
//! from a slide contributes an empty set there.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::record::{ProvenanceRecord, SlideKey};

pub type Records = BTreeMap<SlideKey, ProvenanceRecord>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("need at least 2 models for pairwise comparison, found {0}")]
    InsufficientModels(usize),
    #[error("need at least 4 slides for quartile bands, found {0}")]
    TooFewSlides(usize),
    #[error("baseline model {0:?} does not appear in the corpus")]
    UnknownBaselineModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SetKind {
    Concepts,
    Triples,
}

impl SetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SetKind::Concepts => "concepts",
            SetKind::Triples => "triples",
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value of `J(∅, ∅)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyConvention {
    #[default]
    One,
    Zero,
}

/// Sorted union of model names across the corpus.
pub fn corpus_models(records: &Records) -> Vec<String> {
    records
        .values()
        .flat_map(|r| r.models.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Borrowed identity of a concept or triple; the metrics never look at
/// evidence or confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ElementId<'a> {
    Concept(&'a str, &'a str),
    Triple(&'a str, &'a str, &'a str),
}

/// The set a model produced on a slide, or an empty set when the model is
/// missing there.
pub fn model_set<'a>(record: &'a ProvenanceRecord, model: &str, kind: SetKind) -> BTreeSet<ElementId<'a>> {
    let Some(m) = record.models.get(model) else {
        return BTreeSet::new();
    };
    match kind {
        SetKind::Concepts => m
            .concepts
            .iter()
            .map(|c| ElementId::Concept(&c.category, &c.term))
            .collect(),
        SetKind::Triples => m
            .triples
            .iter()
            .map(|t| ElementId::Triple(&t.s, &t.p, &t.o))
            .collect(),
    }
}

fn union_set(record: &ProvenanceRecord, kind: SetKind) -> BTreeSet<ElementId<'_>> {
    record
        .models
        .keys()
        .flat_map(|m| model_set(record, m, kind))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlideDisagreement {
    pub key: SlideKey,
    pub concept_union_size: usize,
    pub triple_union_size: usize,
}

/// Size of the union of all models' sets on one slide.
pub fn disagreement(record: &ProvenanceRecord) -> SlideDisagreement {
    SlideDisagreement {
        key: record.key,
        concept_union_size: union_set(record, SetKind::Concepts).len(),
        triple_union_size: union_set(record, SetKind::Triples).len(),
    }
}

pub fn corpus_disagreement(records: &Records) -> Vec<SlideDisagreement> {
    records.values().map(disagreement).collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>, empty: EmptyConvention) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return match empty {
            EmptyConvention::One => 1.0,
            EmptyConvention::Zero => 0.0,
        };
    }
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidePairJaccard {
    pub key: SlideKey,
    /// Indices into [`JaccardMatrix::models`], `a < b`.
    pub a: usize,
    pub b: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JaccardMatrix {
    pub kind: SetKind,
    pub models: Vec<String>,
    /// Symmetric; `values[i][j]` is the mean per-slide Jaccard of models `i`
    /// and `j` over every slide in the corpus.
    pub values: Vec<Vec<f64>>,
    pub per_slide: Vec<SlidePairJaccard>,
}

pub fn pairwise_jaccard(
    records: &Records,
    kind: SetKind,
    empty: EmptyConvention,
) -> Result<JaccardMatrix, MetricsError> {
    let models = corpus_models(records);
    let m = models.len();
    if m < 2 {
        return Err(MetricsError::InsufficientModels(m));
    }
    let mut sums = vec![vec![0.0f64; m]; m];
    let mut per_slide = Vec::with_capacity(records.len() * m * (m - 1) / 2);
    for rec in records.values() {
        let sets: Vec<_> = models.iter().map(|name| model_set(rec, name, kind)).collect();
        for a in 0..m {
            for b in a + 1..m {
                let value = jaccard(&sets[a], &sets[b], empty);
                sums[a][b] += value;
                per_slide.push(SlidePairJaccard {
                    key: rec.key,
                    a,
                    b,
                    value,
                });
            }
        }
    }
    let n = records.len().max(1) as f64;
    let mut values = vec![vec![1.0f64; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            values[a][b] = sums[a][b] / n;
            values[b][a] = values[a][b];
        }
    }
    Ok(JaccardMatrix {
        kind,
        models,
        values,
        per_slide,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LectureAggregate {
    pub lecture_id: u64,
    pub slides: usize,
    pub mean_concept: f64,
    pub mean_triple: f64,
}

pub fn lecture_aggregate(records: &Records) -> Vec<LectureAggregate> {
    let mut groups: BTreeMap<u64, (usize, usize, usize)> = BTreeMap::new();
    for d in corpus_disagreement(records) {
        let g = groups.entry(d.key.lecture_id).or_default();
        g.0 += 1;
        g.1 += d.concept_union_size;
        g.2 += d.triple_union_size;
    }
    groups
        .into_iter()
        .map(|(lecture_id, (n, c, t))| LectureAggregate {
            lecture_id,
            slides: n,
            mean_concept: c as f64 / n as f64,
            mean_triple: t as f64 / n as f64,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stability {
    Stable,
    Moderate,
    Unstable,
}

impl Stability {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Moderate => "moderate",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityLabel {
    pub key: SlideKey,
    pub label: Stability,
    pub d_concept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub q1: f64,
    pub q3: f64,
    pub labels: Vec<StabilityLabel>,
}

impl StabilityReport {
    pub fn count(&self, s: Stability) -> usize {
        self.labels.iter().filter(|l| l.label == s).count()
    }
}

/// Percentile with linear interpolation between closest ranks
/// (`h = p (n - 1)`). `sorted` must be ascending and non-empty.
pub fn percentile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stable when `d ≤ Q1`, unstable when `d > Q3`, moderate otherwise, with
/// quartiles over concept disagreement.
pub fn classify_stability(records: &Records) -> Result<StabilityReport, MetricsError> {
    let d = corpus_disagreement(records);
    if d.len() < 4 {
        return Err(MetricsError::TooFewSlides(d.len()));
    }
    let mut sorted: Vec<f64> = d.iter().map(|x| x.concept_union_size as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = percentile_linear(&sorted, 0.25);
    let q3 = percentile_linear(&sorted, 0.75);
    let labels = d
        .iter()
        .map(|x| {
            let v = x.concept_union_size as f64;
            let label = if v <= q1 {
                Stability::Stable
            } else if v > q3 {
                Stability::Unstable
            } else {
                Stability::Moderate
            };
            StabilityLabel {
                key: x.key,
                label,
                d_concept: x.concept_union_size,
            }
        })
        .collect();
    Ok(StabilityReport { q1, q3, labels })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFootprint {
    pub model: String,
    pub mean_concepts: f64,
    pub mean_triples: f64,
    /// Slides where the model had no entry; they count as zero.
    pub missing_slides: Vec<SlideKey>,
}

pub fn model_footprint(records: &Records) -> Vec<ModelFootprint> {
    let n = records.len().max(1) as f64;
    corpus_models(records)
        .into_iter()
        .map(|model| {
            let (mut c, mut t) = (0usize, 0usize);
            let mut missing = Vec::new();
            for rec in records.values() {
                match rec.models.get(&model) {
                    Some(m) => {
                        c += m.concepts.len();
                        t += m.triples.len();
                    }
                    None => missing.push(rec.key),
                }
            }
            ModelFootprint {
                model,
                mean_concepts: c as f64 / n,
                mean_triples: t as f64 / n,
                missing_slides: missing,
            }
        })
        .collect()
}

/// Model with the largest mean concept count; ties go to the first name in
/// sort order.
pub fn densest_model(records: &Records) -> Option<String> {
    model_footprint(records)
        .into_iter()
        .fold(None::<ModelFootprint>, |best, f| match best {
            Some(b) if b.mean_concepts >= f.mean_concepts => Some(b),
            _ => Some(f),
        })
        .map(|f| f.model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageLoss {
    pub key: SlideKey,
    pub concept_loss: f64,
    pub triple_loss: f64,
    pub baseline_model: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub baseline_model: String,
    pub losses: Vec<CoverageLoss>,
    pub concept_mean: f64,
    pub concept_median: f64,
    pub triple_mean: f64,
    pub triple_median: f64,
}

/// `|U \ S| / |U|`, or 0 when the union is empty.
pub fn loss_fraction<T: Ord>(union: &BTreeSet<T>, single: &BTreeSet<T>) -> f64 {
    if union.is_empty() {
        return 0.0;
    }
    union.difference(single).count() as f64 / union.len() as f64
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Fraction of each slide's multi-model union that `baseline` misses.
pub fn coverage_loss(records: &Records, baseline: &str) -> Result<CoverageReport, MetricsError> {
    if !records.values().any(|r| r.models.contains_key(baseline)) {
        return Err(MetricsError::UnknownBaselineModel(baseline.to_string()));
    }
    let losses: Vec<CoverageLoss> = records
        .values()
        .map(|rec| CoverageLoss {
            key: rec.key,
            concept_loss: loss_fraction(
                &union_set(rec, SetKind::Concepts),
                &model_set(rec, baseline, SetKind::Concepts),
            ),
            triple_loss: loss_fraction(
                &union_set(rec, SetKind::Triples),
                &model_set(rec, baseline, SetKind::Triples),
            ),
            baseline_model: baseline.to_string(),
        })
        .collect();
    let c: Vec<f64> = losses.iter().map(|l| l.concept_loss).collect();
    let t: Vec<f64> = losses.iter().map(|l| l.triple_loss).collect();
    Ok(CoverageReport {
        baseline_model: baseline.to_string(),
        concept_mean: mean(&c),
        concept_median: median(&c),
        triple_mean: mean(&t),
        triple_median: median(&t),
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Concept, ModelExtraction, ProvenanceRecord, RecordMetadata, RecordPaths, Triple};

    fn rec(key: SlideKey, models: &[(&str, &[&str], &[&str])]) -> ProvenanceRecord {
        ProvenanceRecord {
            key,
            lecture_label: format!("Lecture {}", key.lecture_id),
            models: models
                .iter()
                .map(|(name, cs, ts)| {
                    let mut m = ModelExtraction::empty(*name);
                    m.concepts = cs.iter().map(|t| Concept::new("m", *t)).collect();
                    m.triples = ts.iter().map(|o| Triple::new("s", "p", *o)).collect();
                    (name.to_string(), m)
                })
                .collect(),
            paths: RecordPaths::default(),
            metadata: RecordMetadata::default(),
        }
    }

    fn corpus(recs: Vec<ProvenanceRecord>) -> Records {
        recs.into_iter().map(|r| (r.key, r)).collect()
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn disagreement_examples() {
        let k = SlideKey::new(1, 1);
        assert_eq!(
            disagreement(&rec(k, &[("a", &["x"], &[]), ("b", &["x"], &[])])).concept_union_size,
            1
        );
        let d = disagreement(&rec(
            k,
            &[("a", &["x", "y"], &[]), ("b", &["z"], &[]), ("c", &[], &[]), ("d", &[], &[])],
        ));
        assert_eq!(d.concept_union_size, 3);
        let d = disagreement(&rec(k, &[("a", &[], &[]), ("b", &[], &[]), ("c", &[], &[]), ("d", &[], &[])]));
        assert_eq!((d.concept_union_size, d.triple_union_size), (0, 0));
    }

    #[test]
    fn concept_identity_includes_category() {
        let k = SlideKey::new(1, 1);
        let mut r = rec(k, &[("a", &["x"], &[]), ("b", &[], &[])]);
        r.models.get_mut("b").unwrap().concepts.insert(Concept::new("other", "x"));
        assert_eq!(disagreement(&r).concept_union_size, 2);
    }

    #[test]
    fn jaccard_examples() {
        let one = EmptyConvention::One;
        assert!((jaccard(&set(&["a", "b"]), &set(&["b", "c"]), one) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(jaccard(&set(&["a", "b"]), &set(&["a", "b"]), one), 1.0);
        assert_eq!(jaccard(&set(&["a"]), &set(&["b"]), one), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&[]), one), 1.0);
        assert_eq!(jaccard(&set(&[]), &set(&[]), EmptyConvention::Zero), 0.0);
        assert_eq!(jaccard(&set(&[]), &set(&["a"]), one), 0.0);
    }

    #[test]
    fn matrix_means_and_symmetry() {
        let c = corpus(vec![
            rec(SlideKey::new(1, 1), &[("a", &["x", "y"], &[]), ("b", &["y", "z"], &[])]),
            rec(SlideKey::new(1, 2), &[("a", &["x"], &[]), ("b", &["x"], &[])]),
        ]);
        let m = pairwise_jaccard(&c, SetKind::Concepts, EmptyConvention::One).unwrap();
        assert_eq!(m.models, vec!["a", "b"]);
        assert!((m.values[0][1] - (1.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
        assert_eq!(m.values[0][1], m.values[1][0]);
        assert_eq!(m.values[0][0], 1.0);
        assert_eq!(m.per_slide.len(), 2);
        // both emit no triples anywhere
        let t = pairwise_jaccard(&c, SetKind::Triples, EmptyConvention::One).unwrap();
        assert_eq!(t.values[0][1], 1.0);
    }

    #[test]
    fn matrix_needs_two_models() {
        let c = corpus(vec![rec(SlideKey::new(1, 1), &[("a", &["x"], &[])])]);
        assert_eq!(
            pairwise_jaccard(&c, SetKind::Concepts, EmptyConvention::One),
            Err(MetricsError::InsufficientModels(1))
        );
    }

    #[test]
    fn lecture_means() {
        let c = corpus(vec![
            rec(SlideKey::new(1, 1), &[("a", &["x", "y"], &[])]),
            rec(SlideKey::new(1, 2), &[("a", &["x", "y", "z", "w"], &[])]),
            rec(SlideKey::new(2, 1), &[("a", &["q"], &["o"])]),
        ]);
        let agg = lecture_aggregate(&c);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].mean_concept, 3.0);
        assert_eq!(agg[1].mean_concept, 1.0);
        assert_eq!(agg[1].mean_triple, 1.0);
        // corpus mean equals slide-weighted mean of lecture means
        let corpus_mean = corpus_disagreement(&c)
            .iter()
            .map(|d| d.concept_union_size as f64)
            .sum::<f64>()
            / 3.0;
        let weighted = agg.iter().map(|a| a.mean_concept * a.slides as f64).sum::<f64>() / 3.0;
        assert!((corpus_mean - weighted).abs() < 1e-12);
    }

    fn with_sizes(sizes: &[usize]) -> Records {
        let terms: Vec<String> = (0..*sizes.iter().max().unwrap_or(&0)).map(|i| format!("t{i}")).collect();
        corpus(
            sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    let ts: Vec<&str> = terms[..n].iter().map(String::as_str).collect();
                    rec(SlideKey::new(1, i as u64 + 1), &[("a", &ts, &[])])
                })
                .collect(),
        )
    }

    #[test]
    fn quartile_bands() {
        let r = classify_stability(&with_sizes(&[1, 2, 3, 4, 5, 6, 7, 8])).unwrap();
        assert_eq!(r.q1, 2.75);
        assert_eq!(r.q3, 6.25);
        let labels: Vec<_> = r.labels.iter().map(|l| l.label).collect();
        use Stability::*;
        assert_eq!(
            labels,
            vec![Stable, Stable, Moderate, Moderate, Moderate, Moderate, Unstable, Unstable]
        );
    }

    #[test]
    fn constant_values_all_stable() {
        let r = classify_stability(&with_sizes(&[3, 3, 3, 3, 3])).unwrap();
        assert_eq!((r.q1, r.q3), (3.0, 3.0));
        assert_eq!(r.count(Stability::Stable), 5);
    }

    #[test]
    fn too_few_slides() {
        assert_eq!(
            classify_stability(&with_sizes(&[1, 2, 3])),
            Err(MetricsError::TooFewSlides(3))
        );
    }

    #[test]
    fn percentile_interpolation() {
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(percentile_linear(&v, 0.25), 250.75);
        assert_eq!(percentile_linear(&v, 0.75), 750.25);
        assert_eq!(percentile_linear(&[5.0], 0.25), 5.0);
    }

    #[test]
    fn footprint_counts_missing_as_zero() {
        let c = corpus(vec![
            rec(SlideKey::new(1, 1), &[("a", &["x", "y"], &[]), ("b", &["x"], &[])]),
            rec(SlideKey::new(1, 2), &[("a", &["x", "y", "z", "w"], &[])]),
        ]);
        let f = model_footprint(&c);
        assert_eq!(f[0].model, "a");
        assert_eq!(f[0].mean_concepts, 3.0);
        assert_eq!(f[1].mean_concepts, 0.5);
        assert_eq!(f[1].missing_slides, vec![SlideKey::new(1, 2)]);
        assert_eq!(densest_model(&c).as_deref(), Some("a"));
    }

    #[test]
    fn coverage_examples() {
        let c = corpus(vec![
            rec(SlideKey::new(1, 1), &[("a", &["x"], &[]), ("b", &["x", "y", "z"], &["o"])]),
            rec(SlideKey::new(1, 2), &[("a", &["x"], &[]), ("b", &["x"], &[])]),
        ]);
        let r = coverage_loss(&c, "a").unwrap();
        assert!((r.losses[0].concept_loss - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.losses[0].triple_loss, 1.0);
        assert_eq!(r.losses[1].concept_loss, 0.0);
        assert_eq!(r.losses[1].triple_loss, 0.0);
        assert!((r.concept_median - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            coverage_loss(&c, "zzz"),
            Err(MetricsError::UnknownBaselineModel("zzz".into()))
        );
    }
}
