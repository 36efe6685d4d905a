use serde_json::{Map, Number, Value};

use super::{Concept, ModelExtraction, ProvenanceRecord, Triple};

/// Writes `value` as compact JSON with object keys sorted by UTF-8 bytes.
///
/// Strings escape only `"`, `\` and control characters below U+0020; all
/// other code points are written as raw UTF-8. Numbers use serde_json's
/// formatting (integers verbatim, floats in shortest round-trip form).
pub fn write_canonical(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (k, v)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(k, out);
                out.push(b':');
                write_canonical(v, out);
            }
            out.push(b'}');
        }
    }
}

pub fn canonical_json(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_canonical(value, &mut out);
    out
}

fn write_number(n: &Number, out: &mut Vec<u8>) {
    if let Some(f) = n.as_f64().filter(|_| n.is_f64()) {
        // -0.0 and 0.0 are the same value; emit one spelling.
        if f == 0.0 {
            out.extend_from_slice(b"0.0");
            return;
        }
    }
    out.extend_from_slice(n.to_string().as_bytes());
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    let bytes = s.as_bytes();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let escape: Option<&[u8]> = match b {
            b'"' => Some(b"\\\""),
            b'\\' => Some(b"\\\\"),
            b'\n' => Some(b"\\n"),
            b'\r' => Some(b"\\r"),
            b'\t' => Some(b"\\t"),
            0x08 => Some(b"\\b"),
            0x0c => Some(b"\\f"),
            0x00..=0x1f => None,
            _ => continue,
        };
        out.extend_from_slice(&bytes[start..i]);
        match escape {
            Some(e) => out.extend_from_slice(e),
            None => out.extend_from_slice(format!("\\u{b:04x}").as_bytes()),
        }
        start = i + 1;
    }
    out.extend_from_slice(&bytes[start..]);
    out.push(b'"');
}

fn concept_value(c: &Concept) -> Value {
    let mut m = Map::new();
    m.insert("category".into(), Value::String(c.category.clone()));
    m.insert("term".into(), Value::String(c.term.clone()));
    m.insert(
        "evidence".into(),
        c.evidence.clone().map_or(Value::Null, Value::String),
    );
    Value::Object(m)
}

fn triple_value(t: &Triple) -> Value {
    let mut m = Map::new();
    m.insert("s".into(), Value::String(t.s.clone()));
    m.insert("p".into(), Value::String(t.p.clone()));
    m.insert("o".into(), Value::String(t.o.clone()));
    m.insert(
        "confidence".into(),
        t.confidence
            .and_then(Number::from_f64)
            .map_or(Value::Null, Value::Number),
    );
    Value::Object(m)
}

/// Set elements are ordered by their own canonical encoding so that equal
/// sets always serialize identically.
fn sorted_by_encoding(values: impl Iterator<Item = Value>) -> Value {
    let mut keyed: Vec<(Vec<u8>, Value)> = values.map(|v| (canonical_json(&v), v)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Value::Array(keyed.into_iter().map(|(_, v)| v).collect())
}

fn model_value(m: &ModelExtraction) -> Value {
    let mut obj = Map::new();
    obj.insert(
        "concepts".into(),
        sorted_by_encoding(m.concepts.iter().map(concept_value)),
    );
    obj.insert(
        "triples".into(),
        sorted_by_encoding(m.triples.iter().map(triple_value)),
    );
    obj.insert(
        "evidence".into(),
        Value::Array(m.evidence.iter().cloned().map(Value::String).collect()),
    );
    obj.insert(
        "raw_output".into(),
        m.raw_output.clone().map_or(Value::Null, Value::String),
    );
    Value::Object(obj)
}

/// The record as a JSON document in the on-disk schema. Feeding this back
/// through normalization yields the same record.
pub fn record_to_value(record: &ProvenanceRecord) -> Value {
    let mut models = Map::new();
    for (name, m) in &record.models {
        models.insert(name.clone(), model_value(m));
    }
    let mut paths = Map::new();
    paths.insert("image".into(), Value::String(record.paths.image.clone()));
    paths.insert("text".into(), Value::String(record.paths.text.clone()));
    paths.insert("json".into(), Value::String(record.paths.json.clone()));
    let mut metadata = Map::new();
    metadata.insert(
        "timestamp".into(),
        Value::String(record.metadata.timestamp.clone()),
    );
    metadata.insert("source".into(), Value::String(record.metadata.source.clone()));
    metadata.insert(
        "hash_input_format".into(),
        Value::String(record.metadata.hash_input_format.clone()),
    );

    let mut root = Map::new();
    root.insert("lecture".into(), Value::String(record.lecture_label.clone()));
    root.insert("slide_id".into(), Value::from(record.key.slide_id));
    root.insert("models".into(), Value::Object(models));
    root.insert("paths".into(), Value::Object(paths));
    root.insert("metadata".into(), Value::Object(metadata));
    Value::Object(root)
}

pub fn canonical_bytes(record: &ProvenanceRecord) -> Vec<u8> {
    canonical_json(&record_to_value(record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted() {
        let mut m = Map::new();
        m.insert("b".into(), json!(1));
        m.insert("a".into(), json!(2));
        let bytes = canonical_json(&Value::Object(m));
        assert!(bytes.starts_with(br#"{"a":2,"b":1"#));
        assert_eq!(bytes, br#"{"a":2,"b":1}"#);
    }

    #[test]
    fn keys_sorted_by_bytes_not_chars() {
        // U+00E9 encodes as 0xC3 0xA9, which sorts after 'z' (0x7A).
        let v = json!({"\u{e9}": 1, "z": 2, "Z": 3});
        assert_eq!(
            String::from_utf8(canonical_json(&v)).unwrap(),
            "{\"Z\":3,\"z\":2,\"\u{e9}\":1}"
        );
    }

    #[test]
    fn nested_objects_and_arrays() {
        let v = json!({"outer": {"y": [3, {"q": null, "p": true}], "x": "s"}});
        assert_eq!(
            canonical_json(&v),
            br#"{"outer":{"x":"s","y":[3,{"p":true,"q":null}]}}"#
        );
    }

    #[test]
    fn string_escapes() {
        let v = Value::String("a\"b\\c\nd\u{1}e\u{2028}é".into());
        assert_eq!(
            String::from_utf8(canonical_json(&v)).unwrap(),
            "\"a\\\"b\\\\c\\nd\\u0001e\u{2028}é\""
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(canonical_json(&json!(0.5)), b"0.5");
        assert_eq!(canonical_json(&json!(1.0)), b"1.0");
        assert_eq!(canonical_json(&json!(-0.0)), b"0.0");
        assert_eq!(canonical_json(&json!(0.1 + 0.2)), b"0.30000000000000004");
        assert_eq!(canonical_json(&json!(42)), b"42");
        assert_eq!(canonical_json(&json!(-7)), b"-7");
    }

    #[test]
    fn output_parses_back_to_same_value() {
        let v = json!({"k": ["x", 1, 2.25, null, {"z": false}], "\t": "\u{7f}"});
        let parsed: Value = serde_json::from_slice(&canonical_json(&v)).unwrap();
        assert_eq!(parsed, v);
    }
}
