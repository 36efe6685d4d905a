//! Slide-level provenance: canonical records, Keccak-256 commitments, an
//! in-process registry ledger with gas and fee accounting, semantic
//! agreement metrics across extractors, integrity audits and cost
//! projection.

#![forbid(unsafe_code)]

pub mod commitment;
pub mod keccak;
pub mod record;
pub mod ledger;
pub mod metrics;
pub mod integrity;
pub mod projection;
pub mod synth;
