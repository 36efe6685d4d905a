use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{normalize_record_with_key, NormalizeWarning, ProvenanceRecord, RecordError, SlideKey};

#[derive(Debug, Clone)]
pub struct LoadFailure {
    pub path: PathBuf,
    pub key: Option<SlideKey>,
    pub error: String,
}

/// Records loaded from a `by_slide/Lecture <n>/Slide<m>.json` tree.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub root: PathBuf,
    pub records: BTreeMap<SlideKey, ProvenanceRecord>,
    pub files: BTreeMap<SlideKey, PathBuf>,
    pub failures: Vec<LoadFailure>,
    pub warnings: Vec<(SlideKey, NormalizeWarning)>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// `"Lecture 12"` → 12. Also accepts `Lecture_12` and `Lecture12`.
pub fn parse_lecture_dir(name: &str) -> Option<u64> {
    let rest = name.strip_prefix("Lecture")?;
    let rest = rest.trim_start_matches([' ', '_', '-']);
    if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

/// `"Slide7.json"` → 7.
pub fn parse_slide_file(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("Slide")?.strip_suffix(".json")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Off-chain location of a slide relative to the `by_slide` directory.
pub fn slide_uri(key: SlideKey) -> String {
    format!("Lecture {}/Slide{}.json", key.lecture_id, key.slide_id)
}

fn sorted_entries(dir: &Path) -> Result<Vec<(String, PathBuf)>, RecordError> {
    let io = |source| RecordError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let entry = entry.map_err(io)?;
        if let Some(name) = entry.file_name().to_str() {
            out.push((name.to_string(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every slide under `root` (or `root/by_slide` when present).
/// Unreadable or malformed files are collected in [`Corpus::failures`]
/// without aborting the batch.
pub fn load_corpus(root: &Path) -> Result<Corpus, RecordError> {
    let by_slide = root.join("by_slide");
    let base = if by_slide.is_dir() { by_slide } else { root.to_path_buf() };

    let mut corpus = Corpus {
        root: base.clone(),
        ..Corpus::default()
    };

    for (dir_name, dir_path) in sorted_entries(&base)? {
        let Some(lecture) = parse_lecture_dir(&dir_name) else {
            continue;
        };
        if !dir_path.is_dir() {
            continue;
        }
        for (file_name, path) in sorted_entries(&dir_path)? {
            let Some(slide) = parse_slide_file(&file_name) else {
                continue;
            };
            let key = SlideKey::new(lecture, slide);
            let fail = |error: String| LoadFailure {
                path: path.clone(),
                key: Some(key),
                error,
            };
            if corpus.records.contains_key(&key) {
                corpus.failures.push(fail(format!(
                    "duplicate slide {key}, already loaded from {}",
                    corpus.files[&key].display()
                )));
                continue;
            }
            let text = match fs::read(&path) {
                Ok(t) => t,
                Err(e) => {
                    corpus.failures.push(fail(e.to_string()));
                    continue;
                }
            };
            let value: serde_json::Value = match serde_json::from_slice(&text) {
                Ok(v) => v,
                Err(e) => {
                    corpus
                        .failures
                        .push(fail(RecordError::MalformedDocument(e.to_string()).to_string()));
                    continue;
                }
            };
            match normalize_record_with_key(&value, Some(key)) {
                Ok(n) => {
                    corpus
                        .warnings
                        .extend(n.warnings.into_iter().map(|w| (key, w)));
                    corpus.records.insert(key, n.record);
                    corpus.files.insert(key, path.clone());
                }
                Err(e) => corpus.failures.push(fail(e.to_string())),
            }
        }
    }

    if corpus.records.is_empty() {
        return Err(RecordError::EmptyCorpus(root.to_path_buf()));
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write(root: &Path, lecture: &str, file: &str, body: &str) {
        let dir = root.join("by_slide").join(lecture);
        fs::create_dir_all(&dir).unwrap();
        fs::write(dir.join(file), body).unwrap();
    }

    fn slide_doc(l: u64, s: u64) -> String {
        json!({
            "lecture": format!("Lecture {l}"),
            "slide_id": s,
            "models": {"m": {"concepts": [{"category": "c", "term": format!("t{s}")}]}}
        })
        .to_string()
    }

    #[test]
    fn name_parsing() {
        assert_eq!(parse_lecture_dir("Lecture 12"), Some(12));
        assert_eq!(parse_lecture_dir("Lecture_3"), Some(3));
        assert_eq!(parse_lecture_dir("Lecture"), None);
        assert_eq!(parse_lecture_dir("Lecture x"), None);
        assert_eq!(parse_lecture_dir("notes"), None);
        assert_eq!(parse_slide_file("Slide7.json"), Some(7));
        assert_eq!(parse_slide_file("Slide7.json.bak"), None);
        assert_eq!(parse_slide_file("Slide.json"), None);
        assert_eq!(slide_uri(SlideKey::new(1, 1)), "Lecture 1/Slide1.json");
    }

    #[test]
    fn loads_two_slides() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "Lecture 1", "Slide1.json", &slide_doc(1, 1));
        write(tmp.path(), "Lecture 1", "Slide2.json", &slide_doc(1, 2));
        write(tmp.path(), "Lecture 1", "README.txt", "ignored");
        let c = load_corpus(tmp.path()).unwrap();
        assert_eq!(
            c.records.keys().copied().collect::<Vec<_>>(),
            vec![SlideKey::new(1, 1), SlideKey::new(1, 2)]
        );
        assert!(c.failures.is_empty());
    }

    #[test]
    fn bad_file_isolated() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "Lecture 1", "Slide1.json", &slide_doc(1, 1));
        write(tmp.path(), "Lecture 1", "Slide2.json", &slide_doc(1, 2));
        write(tmp.path(), "Lecture 1", "Slide3.json", "{not json");
        let c = load_corpus(tmp.path()).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.failures.len(), 1);
        assert_eq!(c.failures[0].key, Some(SlideKey::new(1, 3)));
        assert!(c.failures[0].error.contains("malformed"));
    }

    #[test]
    fn empty_root() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(tmp.path()),
            Err(RecordError::EmptyCorpus(_))
        ));
    }

    #[test]
    fn missing_root_is_io_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(&tmp.path().join("nope")),
            Err(RecordError::Io { .. })
        ));
    }

    #[test]
    fn file_key_overrides_document() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "Lecture 2", "Slide5.json", &slide_doc(9, 9));
        let c = load_corpus(tmp.path()).unwrap();
        let key = SlideKey::new(2, 5);
        assert!(c.records.contains_key(&key));
        assert_eq!(c.warnings.len(), 2);
    }

    #[test]
    fn duplicate_lecture_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "Lecture 1", "Slide1.json", &slide_doc(1, 1));
        write(tmp.path(), "Lecture 01", "Slide1.json", &slide_doc(1, 1));
        let c = load_corpus(tmp.path()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.failures.len(), 1);
    }
}
