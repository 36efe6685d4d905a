use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::{
    canonical_json, Concept, ModelExtraction, ProvenanceRecord, RecordError, RecordMetadata,
    RecordPaths, SlideKey, Triple, HASH_INPUT_FORMAT,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NormalizeWarning {
    /// The document's own slide id disagrees with the file-derived one.
    SlideIdConflict { document: u64, path: u64 },
    /// The document's lecture label disagrees with the file-derived lecture.
    LectureConflict { document: String, path: u64 },
    /// A model entry was neither an object nor null.
    MalformedModel { model: String },
    /// A `concepts` or `triples` container had an unusable shape.
    MalformedField { model: String, field: &'static str },
    /// Entries dropped because they were empty or malformed.
    DroppedEntries {
        model: String,
        field: &'static str,
        count: usize,
    },
}

impl std::fmt::Display for NormalizeWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormalizeWarning::SlideIdConflict { document, path } => {
                write!(f, "document slide_id {document} disagrees with file slide {path}; using {path}")
            }
            NormalizeWarning::LectureConflict { document, path } => {
                write!(f, "document lecture {document:?} disagrees with directory lecture {path}; using {path}")
            }
            NormalizeWarning::MalformedModel { model } => write!(f, "model {model:?} is not an object; treated as empty"),
            NormalizeWarning::MalformedField { model, field } => {
                write!(f, "model {model:?} has malformed {field}; treated as empty")
            }
            NormalizeWarning::DroppedEntries { model, field, count } => {
                write!(f, "model {model:?}: dropped {count} empty or malformed {field} entries")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub record: ProvenanceRecord,
    pub warnings: Vec<NormalizeWarning>,
}

/// Single-code-point lowercase. `char::to_lowercase` only expands for
/// U+0130, whose simple mapping is U+0069.
fn simple_lowercase(c: char) -> char {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => l,
        _ if c == '\u{130}' => 'i',
        _ => c,
    }
}

/// Lowercases, collapses interior whitespace runs to one space and trims.
pub fn normalize_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        out.push(simple_lowercase(c));
    }
    out
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn trailing_int(s: &str) -> Option<u64> {
    let s = s.trim();
    let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return None;
    }
    s[s.len() - digits..].parse().ok()
}

fn id_field(v: Option<&Value>) -> Option<u64> {
    match v? {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => trailing_int(s),
        _ => None,
    }
}

#[derive(Default)]
struct Tally {
    dropped: usize,
    malformed: bool,
}

fn merge_evidence(a: Option<String>, b: Option<String>) -> Option<String> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) | (None, x) => x,
    }
}

fn merge_confidence(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) | (None, x) => x,
    }
}

type ConceptAcc = BTreeMap<(String, String), Option<String>>;

fn push_concept(acc: &mut ConceptAcc, tally: &mut Tally, cat: &str, term: &str, ev: Option<String>) {
    let (cat, term) = (normalize_text(cat), normalize_text(term));
    if cat.is_empty() || term.is_empty() {
        tally.dropped += 1;
        return;
    }
    let slot = acc.entry((cat, term)).or_insert(None);
    *slot = merge_evidence(slot.take(), ev);
}

/// Flattens lists, single objects and `{category: [terms]}` maps into
/// `(category, term)` pairs.
fn collect_concepts(v: &Value, ctx: Option<&str>, acc: &mut ConceptAcc, tally: &mut Tally) {
    match v {
        Value::Null => {}
        Value::Array(items) => {
            for item in items {
                collect_concepts(item, ctx, acc, tally);
            }
        }
        Value::Object(obj) if obj.contains_key("term") || obj.contains_key("category") => {
            let cat = obj
                .get("category")
                .and_then(scalar_text)
                .or_else(|| ctx.map(str::to_string));
            let term = obj.get("term").and_then(scalar_text);
            let ev = obj.get("evidence").and_then(|e| e.as_str()).map(str::to_string);
            match (cat, term) {
                (Some(c), Some(t)) => push_concept(acc, tally, &c, &t, ev),
                _ => tally.dropped += 1,
            }
        }
        Value::Object(obj) => {
            for (cat, inner) in obj {
                collect_concepts(inner, Some(cat), acc, tally);
            }
        }
        Value::String(s) => match ctx {
            Some(cat) => push_concept(acc, tally, cat, s, None),
            None => tally.dropped += 1,
        },
        _ => tally.dropped += 1,
    }
}

type TripleAcc = BTreeMap<(String, String, String), Option<f64>>;

fn confidence_of(v: Option<&Value>) -> Option<f64> {
    let f = match v? {
        Value::Number(n) => n.as_f64()?,
        Value::String(s) => s.trim().parse::<f64>().ok()?,
        _ => return None,
    };
    // Adding 0.0 folds -0.0 into +0.0.
    (f.is_finite() && (0.0..=1.0).contains(&f)).then_some(f + 0.0)
}

fn push_triple(acc: &mut TripleAcc, tally: &mut Tally, spo: [Option<String>; 3], conf: Option<f64>) {
    let [Some(s), Some(p), Some(o)] = spo else {
        tally.dropped += 1;
        return;
    };
    let (s, p, o) = (normalize_text(&s), normalize_text(&p), normalize_text(&o));
    if s.is_empty() || p.is_empty() || o.is_empty() {
        tally.dropped += 1;
        return;
    }
    let slot = acc.entry((s, p, o)).or_insert(None);
    *slot = merge_confidence(slot.take(), conf);
}

fn is_tuple_triple(items: &[Value]) -> bool {
    matches!(items.len(), 3 | 4) && items[..3].iter().all(Value::is_string)
}

fn collect_triples(v: &Value, top: bool, acc: &mut TripleAcc, tally: &mut Tally) {
    match v {
        Value::Null => {}
        Value::Array(items) if is_tuple_triple(items) => {
            let spo = [0, 1, 2].map(|i| scalar_text(&items[i]));
            push_triple(acc, tally, spo, confidence_of(items.get(3)));
        }
        Value::Array(items) => {
            for item in items {
                collect_triples(item, false, acc, tally);
            }
        }
        Value::Object(obj) => {
            let field = |short: &str, long: &str| {
                obj.get(short).or_else(|| obj.get(long)).and_then(scalar_text)
            };
            let spo = [
                field("s", "subject"),
                field("p", "predicate"),
                field("o", "object"),
            ];
            push_triple(acc, tally, spo, confidence_of(obj.get("confidence")));
        }
        _ if top => tally.malformed = true,
        _ => tally.dropped += 1,
    }
}

fn normalize_model(
    name: &str,
    raw: &Value,
    warnings: &mut Vec<NormalizeWarning>,
) -> ModelExtraction {
    let obj = match raw {
        Value::Object(obj) => obj,
        Value::Null => return ModelExtraction::empty(name),
        _ => {
            warnings.push(NormalizeWarning::MalformedModel {
                model: name.to_string(),
            });
            return ModelExtraction::empty(name);
        }
    };

    let mut concept_acc = ConceptAcc::new();
    let mut tally = Tally::default();
    if let Some(c) = obj.get("concepts") {
        if c.is_string() || c.is_number() || c.is_boolean() {
            tally.malformed = true;
        } else {
            collect_concepts(c, None, &mut concept_acc, &mut tally);
        }
    }
    report(warnings, name, "concepts", &tally);

    let mut triple_acc = TripleAcc::new();
    let mut tally = Tally::default();
    if let Some(t) = obj.get("triples") {
        collect_triples(t, true, &mut triple_acc, &mut tally);
    }
    report(warnings, name, "triples", &tally);

    let evidence = match obj.get("evidence") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|e| e.as_str().map(str::to_string))
            .collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => Vec::new(),
    };

    let raw_output = match obj.get("raw_output") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(other) => Some(String::from_utf8(canonical_json(other)).expect("utf-8")),
    };

    ModelExtraction {
        model_name: name.to_string(),
        concepts: concept_acc
            .into_iter()
            .map(|((category, term), evidence)| Concept {
                category,
                term,
                evidence,
            })
            .collect(),
        triples: triple_acc
            .into_iter()
            .map(|((s, p, o), confidence)| Triple { s, p, o, confidence })
            .collect(),
        evidence,
        raw_output,
    }
}

fn report(warnings: &mut Vec<NormalizeWarning>, model: &str, field: &'static str, t: &Tally) {
    if t.malformed {
        warnings.push(NormalizeWarning::MalformedField {
            model: model.to_string(),
            field,
        });
    }
    if t.dropped > 0 {
        warnings.push(NormalizeWarning::DroppedEntries {
            model: model.to_string(),
            field,
            count: t.dropped,
        });
    }
}

fn text_field(obj: Option<&Map<String, Value>>, key: &str) -> String {
    obj.and_then(|o| o.get(key))
        .and_then(|v| v.as_str())
        .unwrap_or_default()
        .to_string()
}

/// Normalizes a parsed document, deriving the slide identity from the
/// document itself.
pub fn normalize_record(raw: &Value) -> Result<ProvenanceRecord, RecordError> {
    normalize_record_with_key(raw, None).map(|n| n.record)
}

/// Normalizes a parsed document. When `path_key` is given (the identity
/// derived from the file location) it takes precedence over the document's
/// own fields, and disagreements are reported as warnings.
pub fn normalize_record_with_key(
    raw: &Value,
    path_key: Option<SlideKey>,
) -> Result<Normalized, RecordError> {
    let root = raw
        .as_object()
        .ok_or_else(|| RecordError::MalformedDocument("top level is not an object".into()))?;
    let mut warnings = Vec::new();

    let doc_lecture = id_field(root.get("lecture")).or_else(|| id_field(root.get("lecture_id")));
    let doc_slide = id_field(root.get("slide_id"));

    let key = match path_key {
        Some(k) => {
            if let Some(d) = doc_slide.filter(|&d| d != k.slide_id) {
                warnings.push(NormalizeWarning::SlideIdConflict {
                    document: d,
                    path: k.slide_id,
                });
            }
            if doc_lecture.is_some_and(|d| d != k.lecture_id) {
                warnings.push(NormalizeWarning::LectureConflict {
                    document: root
                        .get("lecture")
                        .and_then(scalar_text)
                        .unwrap_or_default(),
                    path: k.lecture_id,
                });
            }
            k
        }
        None => {
            let lecture = doc_lecture
                .ok_or_else(|| RecordError::MissingKey("no lecture identifier".into()))?;
            let slide = doc_slide.ok_or_else(|| RecordError::MissingKey("no slide_id".into()))?;
            SlideKey::new(lecture, slide)
        }
    };
    if !key.is_valid() {
        return Err(RecordError::MissingKey(format!(
            "lecture and slide ids must be positive, got {key}"
        )));
    }

    let lecture_label = match root.get("lecture") {
        Some(Value::String(s)) if trailing_int(s) == Some(key.lecture_id) => s.clone(),
        _ => format!("Lecture {}", key.lecture_id),
    };

    let mut models = BTreeMap::new();
    match root.get("models") {
        Some(Value::Object(map)) => {
            for (name, m) in map {
                models.insert(name.clone(), normalize_model(name, m, &mut warnings));
            }
        }
        Some(Value::Array(items)) => {
            for item in items {
                let name = ["model_name", "model", "name"]
                    .iter()
                    .find_map(|k| item.get(k).and_then(|v| v.as_str()));
                match name {
                    Some(name) => {
                        models.insert(name.to_string(), normalize_model(name, item, &mut warnings));
                    }
                    None => {
                        return Err(RecordError::MalformedDocument(
                            "model entry without a name".into(),
                        ))
                    }
                }
            }
        }
        _ => {}
    }
    if models.is_empty() {
        return Err(RecordError::MalformedDocument("record has no models".into()));
    }

    let paths = root.get("paths").and_then(Value::as_object);
    let metadata = root.get("metadata").and_then(Value::as_object);

    Ok(Normalized {
        record: ProvenanceRecord {
            key,
            lecture_label,
            models,
            paths: RecordPaths {
                image: text_field(paths, "image"),
                text: text_field(paths, "text"),
                json: text_field(paths, "json"),
            },
            metadata: RecordMetadata {
                timestamp: text_field(metadata, "timestamp"),
                source: text_field(metadata, "source"),
                hash_input_format: HASH_INPUT_FORMAT.to_string(),
            },
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{canonical_bytes, record_to_value};
    use serde_json::json;

    fn doc(models: Value) -> Value {
        json!({
            "lecture": "Lecture 1",
            "slide_id": 2,
            "models": models,
            "paths": {"image": "img/1_2.png", "text": "t", "json": "Lecture 1/Slide2.json"},
            "metadata": {"timestamp": "2025-01-01T00:00:00Z", "source": "test"}
        })
    }

    #[test]
    fn text_rules() {
        assert_eq!(normalize_text("  X-Ray  "), "x-ray");
        assert_eq!(normalize_text("Magnetic\t\n Resonance"), "magnetic resonance");
        assert_eq!(normalize_text("   "), "");
        assert_eq!(normalize_text("\u{130}stanbul"), "istanbul");
        assert_eq!(normalize_text("ΣΑΣ"), "σασ");
        assert_eq!(normalize_text("a\u{3000}b"), "a b");
    }

    #[test]
    fn concept_dedup_after_normalization() {
        let r = normalize_record(&doc(json!({"m": {"concepts": [
            {"category": "  Modality", "term": "X-Ray "},
            {"category": "modality", "term": "x-ray"}
        ]}})))
        .unwrap();
        let c: Vec<_> = r.models["m"].concepts.iter().map(|c| c.id()).collect();
        assert_eq!(c, vec![("modality", "x-ray")]);
    }

    #[test]
    fn null_triples_are_empty() {
        let r = normalize_record(&doc(json!({"m": {"triples": null}}))).unwrap();
        assert!(r.models["m"].triples.is_empty());
        assert!(r.models["m"].concepts.is_empty());
        assert!(r.models["m"].evidence.is_empty());
    }

    #[test]
    fn empty_term_dropped() {
        let n = normalize_record_with_key(
            &doc(json!({"m": {"concepts": [{"category": "anatomy", "term": ""},
                                            {"category": "anatomy", "term": "lung"}]}})),
            None,
        )
        .unwrap();
        assert_eq!(n.record.models["m"].concepts.len(), 1);
        assert!(n.warnings.contains(&NormalizeWarning::DroppedEntries {
            model: "m".into(),
            field: "concepts",
            count: 1
        }));
    }

    #[test]
    fn concept_container_shapes() {
        let r = normalize_record(&doc(json!({
            "single": {"concepts": {"category": "Anatomy", "term": "Heart"}},
            "bymap": {"concepts": {"modality": ["CT", "MRI"], "anatomy": "Brain"}},
            "nested": {"concepts": [[{"category": "a", "term": "b"}], null, 5, "orphan"]},
            "scalar": {"concepts": "just text"}
        })))
        .unwrap();
        let ids = |m: &str| -> Vec<(String, String)> {
            r.models[m]
                .concepts
                .iter()
                .map(|c| (c.category.clone(), c.term.clone()))
                .collect()
        };
        assert_eq!(ids("single"), vec![("anatomy".into(), "heart".into())]);
        assert_eq!(
            ids("bymap"),
            vec![
                ("anatomy".into(), "brain".into()),
                ("modality".into(), "ct".into()),
                ("modality".into(), "mri".into())
            ]
        );
        assert_eq!(ids("nested"), vec![("a".into(), "b".into())]);
        assert!(ids("scalar").is_empty());
    }

    #[test]
    fn triple_shapes_and_confidence() {
        let r = normalize_record(&doc(json!({"m": {"triples": [
            {"s": "CT", "p": "Uses", "o": "X-Rays", "confidence": 0.9, "extra": {"x": 1}},
            {"subject": "ct", "predicate": "uses", "object": "x-rays", "confidence": 0.4},
            ["MRI", "uses", "magnets"],
            ["pet", "detects", "photons", 1.7],
            {"s": "missing", "p": "object"},
            {"s": "", "p": "x", "o": "y"}
        ]}})))
        .unwrap();
        let t: Vec<_> = r.models["m"].triples.iter().collect();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].id(), ("ct", "uses", "x-rays"));
        assert_eq!(t[0].confidence, Some(0.9));
        assert_eq!(t[1].id(), ("mri", "uses", "magnets"));
        assert_eq!(t[1].confidence, None);
        // out-of-range confidence is discarded
        assert_eq!(t[2].confidence, None);
    }

    #[test]
    fn malformed_triples_field_is_empty_set() {
        let n = normalize_record_with_key(&doc(json!({"m": {"triples": "oops"}})), None).unwrap();
        assert!(n.record.models["m"].triples.is_empty());
        assert!(n.warnings.contains(&NormalizeWarning::MalformedField {
            model: "m".into(),
            field: "triples"
        }));
    }

    #[test]
    fn evidence_kept_verbatim() {
        let r = normalize_record(&doc(json!({"m": {
            "evidence": ["  Mixed CASE  ", null, "second"],
            "concepts": [{"category": "c", "term": "t", "evidence": "  Raw Snippet "}]
        }})))
        .unwrap();
        assert_eq!(r.models["m"].evidence, vec!["  Mixed CASE  ", "second"]);
        assert_eq!(
            r.models["m"].concepts.first().unwrap().evidence.as_deref(),
            Some("  Raw Snippet ")
        );
    }

    #[test]
    fn duplicate_merge_is_order_independent() {
        let a = normalize_record(&doc(json!({"m": {
            "concepts": [{"category": "c", "term": "t", "evidence": "b"},
                         {"category": "C", "term": "T", "evidence": "a"}],
            "triples": [{"s": "a", "p": "b", "o": "c", "confidence": 0.2},
                        {"s": "A", "p": "B", "o": "C", "confidence": 0.7}]
        }})))
        .unwrap();
        let b = normalize_record(&doc(json!({"m": {
            "concepts": [{"category": "C", "term": "T", "evidence": "a"},
                         {"category": "c", "term": "t", "evidence": "b"}],
            "triples": [{"s": "A", "p": "B", "o": "C", "confidence": 0.7},
                        {"s": "a", "p": "b", "o": "c", "confidence": 0.2}]
        }})))
        .unwrap();
        assert_eq!(canonical_bytes(&a), canonical_bytes(&b));
        assert_eq!(a.models["m"].triples.first().unwrap().confidence, Some(0.7));
    }

    #[test]
    fn missing_identity() {
        let err = normalize_record(&json!({"models": {"m": {}}})).unwrap_err();
        assert!(matches!(err, RecordError::MissingKey(_)));
        let err = normalize_record(&json!({"lecture": "Lecture 0", "slide_id": 1, "models": {"m": {}}}))
            .unwrap_err();
        assert!(matches!(err, RecordError::MissingKey(_)));
    }

    #[test]
    fn missing_models_rejected() {
        let err = normalize_record(&json!({"lecture": "Lecture 1", "slide_id": 1})).unwrap_err();
        assert!(matches!(err, RecordError::MalformedDocument(_)));
        let err = normalize_record(&json!([1, 2])).unwrap_err();
        assert!(matches!(err, RecordError::MalformedDocument(_)));
    }

    #[test]
    fn path_key_wins() {
        let n = normalize_record_with_key(
            &json!({"lecture": "Lecture 3", "slide_id": "9", "models": {"m": {}}}),
            Some(SlideKey::new(1, 2)),
        )
        .unwrap();
        assert_eq!(n.record.key, SlideKey::new(1, 2));
        assert_eq!(n.record.lecture_label, "Lecture 1");
        assert_eq!(n.warnings.len(), 2);
        // The result is self-consistent without the path hint.
        let again = normalize_record(&record_to_value(&n.record)).unwrap();
        assert_eq!(again.key, SlideKey::new(1, 2));
    }

    #[test]
    fn string_slide_id_accepted() {
        let r = normalize_record(&json!({"lecture": "Lecture 4", "slide_id": "Slide12", "models": {"m": null}}))
            .unwrap();
        assert_eq!(r.key, SlideKey::new(4, 12));
    }

    #[test]
    fn model_list_form() {
        let r = normalize_record(&json!({"lecture": 2, "slide_id": 1, "models": [
            {"model_name": "a", "concepts": [{"category": "x", "term": "y"}]},
            {"model": "b"}
        ]}))
        .unwrap();
        assert_eq!(r.models.keys().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(r.lecture_label, "Lecture 2");
    }

    #[test]
    fn raw_output_participates() {
        let a = normalize_record(&doc(json!({"m": {"raw_output": "x"}}))).unwrap();
        let b = normalize_record(&doc(json!({"m": {"raw_output": "y"}}))).unwrap();
        let c = normalize_record(&doc(json!({"m": {}}))).unwrap();
        assert_ne!(canonical_bytes(&a), canonical_bytes(&b));
        assert_ne!(canonical_bytes(&a), canonical_bytes(&c));
    }

    #[test]
    fn hash_input_format_is_fixed() {
        let mut d = doc(json!({"m": {}}));
        d["metadata"]["hash_input_format"] = json!("whatever");
        let r = normalize_record(&d).unwrap();
        assert_eq!(r.metadata.hash_input_format, HASH_INPUT_FORMAT);
    }
}
