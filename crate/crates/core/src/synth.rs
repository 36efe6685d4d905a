//! Seeded generator of slide corpora in the on-disk document layout.
//!
//! Models draw concepts and triples from a small per-slide topic pool, so
//! they overlap partially the way independent extractors do. The `messy`
//! option adds casing noise, stray whitespace, duplicates, tuple-form
//! triples, null fields and category maps to exercise normalization.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::record::{slide_uri, RecordError, SlideKey};

const CATEGORIES: [&str; 5] = ["modality", "anatomy", "pathology", "method", "concept"];

const TERMS: [&str; 40] = [
    "x-ray", "computed tomography", "magnetic resonance", "ultrasound", "pet",
    "spect", "fluoroscopy", "mammography", "lung", "heart", "liver", "kidney",
    "brain", "spine", "knee", "pelvis", "tumor", "fracture", "edema",
    "pneumonia", "stenosis", "hemorrhage", "nodule", "lesion", "segmentation",
    "registration", "filtering", "reconstruction", "fourier transform",
    "back projection", "contrast", "resolution", "signal to noise ratio",
    "attenuation", "radiation dose", "k-space", "echo time", "voxel",
    "hounsfield unit", "artifact",
];

const PREDICATES: [&str; 8] = [
    "images", "detects", "measures", "reduces", "improves", "depends on",
    "is part of", "causes",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub lectures: u64,
    pub slides_per_lecture: u64,
    pub models: Vec<String>,
    pub seed: u64,
    pub messy: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lectures: 3,
            slides_per_lecture: 8,
            models: ["model_a", "model_b", "model_c", "model_d"].map(String::from).to_vec(),
            seed: 0,
            messy: false,
        }
    }
}

/// Unnormalized slide documents in key order.
pub fn generate(cfg: &SynthConfig) -> Vec<(SlideKey, Value)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let mut n = 0u64;
    for l in 1..=cfg.lectures {
        for s in 1..=cfg.slides_per_lecture {
            let key = SlideKey::new(l, s);
            out.push((key, slide_doc(key, n, cfg, &mut rng)));
            n += 1;
        }
    }
    out
}

fn noisy<R: Rng>(text: &str, messy: bool, rng: &mut R) -> String {
    if !messy || rng.gen_bool(0.5) {
        return text.to_string();
    }
    let mut s: String = text
        .chars()
        .map(|c| if rng.gen_bool(0.3) { c.to_ascii_uppercase() } else { c })
        .collect();
    s = s.replace(' ', if rng.gen_bool(0.5) { "  " } else { " \t" });
    format!("{}{s}{}", " ".repeat(rng.gen_range(0..2)), " ".repeat(rng.gen_range(0..3)))
}

fn slide_doc<R: Rng>(key: SlideKey, index: u64, cfg: &SynthConfig, rng: &mut R) -> Value {
    let mut pool: Vec<(&str, &str)> = TERMS
        .choose_multiple(rng, 10)
        .map(|t| (*CATEGORIES.choose(rng).expect("non-empty"), *t))
        .collect();
    pool.sort();
    let messy = cfg.messy;

    let mut models = Map::new();
    for name in &cfg.models {
        let k = rng.gen_range(0..=7usize);
        let mut concepts: Vec<Value> = pool
            .choose_multiple(rng, k)
            .map(|(c, t)| {
                json!({
                    "category": noisy(c, messy, rng),
                    "term": noisy(t, messy, rng),
                    "evidence": format!("Slide mentions {t}"),
                })
            })
            .collect();
        if messy && !concepts.is_empty() && rng.gen_bool(0.3) {
            let dup = concepts[0].clone();
            concepts.push(dup);
        }

        let mut triples = Vec::new();
        for _ in 0..rng.gen_range(0..=3usize) {
            let (_, s) = pool[rng.gen_range(0..pool.len())];
            let (_, o) = pool[rng.gen_range(0..pool.len())];
            let p = *PREDICATES.choose(rng).expect("non-empty");
            let conf = f64::from(rng.gen_range(50..=100u32)) / 100.0;
            if messy && rng.gen_bool(0.3) {
                triples.push(json!([noisy(s, messy, rng), p, noisy(o, messy, rng), conf]));
            } else {
                triples.push(json!({"s": noisy(s, messy, rng), "p": p, "o": o, "confidence": conf}));
            }
        }

        let evidence: Vec<Value> = (0..rng.gen_range(0..=2usize))
            .map(|i| Value::String(format!("{name} note {i} on slide {}", key.slide_id)))
            .collect();

        let concepts_value = if messy && rng.gen_bool(0.15) {
            // category → terms map
            let mut by_cat = Map::new();
            for c in &concepts {
                let cat = c["category"].as_str().unwrap_or_default().to_string();
                by_cat
                    .entry(cat)
                    .or_insert_with(|| Value::Array(Vec::new()))
                    .as_array_mut()
                    .expect("array")
                    .push(c["term"].clone());
            }
            Value::Object(by_cat)
        } else {
            Value::Array(concepts)
        };
        let triples_value = if messy && triples.is_empty() && rng.gen_bool(0.5) {
            Value::Null
        } else {
            Value::Array(triples)
        };
        models.insert(
            name.clone(),
            json!({
                "concepts": concepts_value,
                "triples": triples_value,
                "evidence": evidence,
            }),
        );
    }

    let secs = index % 86_400;
    json!({
        "lecture": format!("Lecture {}", key.lecture_id),
        "slide_id": key.slide_id,
        "models": models,
        "paths": {
            "image": format!("images/Lecture {}/Slide{}.png", key.lecture_id, key.slide_id),
            "text": format!("text/Lecture {}/Slide{}.txt", key.lecture_id, key.slide_id),
            "json": slide_uri(key),
        },
        "metadata": {
            "timestamp": format!("2025-01-01T{:02}:{:02}:{:02}Z", secs / 3600, secs / 60 % 60, secs % 60),
            "source": "synthetic",
        },
    })
}

/// Path of a slide document below a corpus root.
pub fn slide_path(root: &Path, key: SlideKey) -> PathBuf {
    root.join("by_slide").join(slide_uri(key))
}

/// Writes documents as pretty-printed JSON under `root/by_slide`.
pub fn write_corpus(root: &Path, docs: &[(SlideKey, Value)]) -> Result<Vec<PathBuf>, RecordError> {
    let mut written = Vec::with_capacity(docs.len());
    for (key, doc) in docs {
        let path = slide_path(root, *key);
        let io = |source| RecordError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let mut text = serde_json::to_string_pretty(doc).expect("serializable");
        text.push('\n');
        fs::write(&path, text).map_err(io)?;
        written.push(path);
    }
    Ok(written)
}
