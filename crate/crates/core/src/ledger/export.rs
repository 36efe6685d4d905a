//! Canonical JSON export of a [`LedgerState`].
//!
//! ```text
//! { "cursor":  { "baseFeeWei": "<decimal string>", "nextBlock": n, "nextTimestamp": t },
//!   "events":  [ { blockNumber, lectureId, slideId, slideHash, uri, registrant, timestamp } ... ],
//!   "format":  "slideprov-ledger/1",
//!   "records": [ { storageKey, lectureId, slideId, slideHash, uri, registrant, timestamp } ... ] }
//! ```
//!
//! Records are listed in storage-key order and events in block order, so
//! identical states always export identical bytes.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Address, LedgerError, LedgerState, SlideRecord, SlideRegistered, Wei};
use crate::commitment::{storage_key, StorageKey};
use crate::record::{canonical_json, SlideKey};

pub const LEDGER_FORMAT: &str = "slideprov-ledger/1";

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct CursorDoc {
    base_fee_wei: String,
    next_block: u64,
    next_timestamp: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct RecordDoc {
    storage_key: String,
    lecture_id: u64,
    slide_id: u64,
    slide_hash: String,
    uri: String,
    registrant: String,
    timestamp: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
struct EventDoc {
    block_number: u64,
    lecture_id: u64,
    slide_id: u64,
    slide_hash: String,
    uri: String,
    registrant: String,
    timestamp: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LedgerDoc {
    format: String,
    cursor: CursorDoc,
    records: Vec<RecordDoc>,
    events: Vec<EventDoc>,
}

fn corrupt(msg: impl Into<String>) -> LedgerError {
    LedgerError::CorruptLedgerFile(msg.into())
}

impl LedgerState {
    pub fn to_document(&self) -> Value {
        let records: Vec<Value> = self
            .records
            .iter()
            .map(|(sk, r)| {
                json!({
                    "storageKey": sk.to_hex(),
                    "lectureId": r.key.lecture_id,
                    "slideId": r.key.slide_id,
                    "slideHash": r.slide_hash,
                    "uri": r.uri,
                    "registrant": r.registrant.to_hex(),
                    "timestamp": r.timestamp,
                })
            })
            .collect();
        let events: Vec<Value> = self.events.iter().map(event_value).collect();
        json!({
            "format": LEDGER_FORMAT,
            "cursor": {
                "baseFeeWei": self.base_fee.0.to_string(),
                "nextBlock": self.next_block,
                "nextTimestamp": self.next_timestamp,
            },
            "records": records,
            "events": events,
        })
    }

    pub fn export(&self) -> Vec<u8> {
        let mut out = canonical_json(&self.to_document());
        out.push(b'\n');
        out
    }

    /// Parses an export and checks its internal consistency: storage keys
    /// match their ids, every record has exactly one matching event, and the
    /// block cursor agrees with the event log.
    pub fn import(bytes: &[u8]) -> Result<Self, LedgerError> {
        let doc: LedgerDoc = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
        if doc.format != LEDGER_FORMAT {
            return Err(corrupt(format!("unknown format {:?}", doc.format)));
        }
        let base_fee = doc
            .cursor
            .base_fee_wei
            .parse::<u128>()
            .map(Wei)
            .map_err(|_| corrupt("baseFeeWei is not an integer"))?;

        let mut records = BTreeMap::new();
        for r in doc.records {
            let key = SlideKey::new(r.lecture_id, r.slide_id);
            if !key.is_valid() {
                return Err(corrupt(format!("record with zero id {key}")));
            }
            let sk: StorageKey = r
                .storage_key
                .parse()
                .map_err(|e| corrupt(format!("storage key of {key}: {e}")))?;
            if sk != storage_key(key) {
                return Err(corrupt(format!("storage key does not match ids {key}")));
            }
            if r.timestamp == 0 {
                return Err(corrupt(format!("record {key} has zero timestamp")));
            }
            let registrant = Address::parse_hex(&r.registrant)
                .ok_or_else(|| corrupt(format!("bad registrant for {key}")))?;
            let rec = SlideRecord {
                key,
                slide_hash: r.slide_hash,
                uri: r.uri,
                timestamp: r.timestamp,
                registrant,
            };
            if records.insert(sk, rec).is_some() {
                return Err(corrupt(format!("duplicate record {key}")));
            }
        }

        let mut events = Vec::with_capacity(doc.events.len());
        for (i, e) in doc.events.into_iter().enumerate() {
            let key = SlideKey::new(e.lecture_id, e.slide_id);
            let registrant = Address::parse_hex(&e.registrant)
                .ok_or_else(|| corrupt(format!("bad registrant in event {i}")))?;
            if e.block_number != i as u64 + 1 {
                return Err(corrupt(format!("event {i} has block {}", e.block_number)));
            }
            let ev = SlideRegistered {
                block_number: e.block_number,
                key,
                slide_hash: e.slide_hash,
                uri: e.uri,
                registrant,
                timestamp: e.timestamp,
            };
            let matches = records.get(&storage_key(key)).is_some_and(|r: &SlideRecord| {
                r.slide_hash == ev.slide_hash
                    && r.uri == ev.uri
                    && r.registrant == ev.registrant
                    && r.timestamp == ev.timestamp
            });
            if !matches {
                return Err(corrupt(format!("event {i} for {key} has no matching record")));
            }
            if events
                .last()
                .is_some_and(|prev: &SlideRegistered| prev.timestamp >= ev.timestamp)
            {
                return Err(corrupt(format!("event {i} timestamp is not increasing")));
            }
            events.push(ev);
        }
        if events.len() != records.len() {
            return Err(corrupt(format!(
                "{} records but {} events",
                records.len(),
                events.len()
            )));
        }
        if doc.cursor.next_block != events.len() as u64 + 1 {
            return Err(corrupt("block cursor disagrees with event log"));
        }
        if events
            .last()
            .is_some_and(|e| e.timestamp >= doc.cursor.next_timestamp)
        {
            return Err(corrupt("timestamp cursor is behind the event log"));
        }

        Ok(Self {
            records,
            next_block: doc.cursor.next_block,
            next_timestamp: doc.cursor.next_timestamp,
            base_fee,
            events,
        })
    }
}

fn event_value(e: &SlideRegistered) -> Value {
    json!({
        "blockNumber": e.block_number,
        "lectureId": e.key.lecture_id,
        "slideId": e.key.slide_id,
        "slideHash": e.slide_hash,
        "uri": e.uri,
        "registrant": e.registrant.to_hex(),
        "timestamp": e.timestamp,
    })
}

/// One canonical JSON object per line, in block order.
pub fn events_jsonl(state: &LedgerState) -> Vec<u8> {
    let mut out = Vec::new();
    for e in state.events() {
        out.extend(canonical_json(&event_value(e)));
        out.push(b'\n');
    }
    out
}
