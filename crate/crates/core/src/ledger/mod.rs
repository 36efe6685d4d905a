//! In-process slide registry.
//!
//! [`LedgerState`] mirrors the observable behaviour of the on-chain registry
//! contract (keyed records, duplicate rejection, `SlideRegistered` events)
//! together with the development-chain execution model: one block sealed
//! per registration, timestamps advancing by a fixed interval and a base fee
//! that follows the EIP-1559 update rule.

mod export;
mod fees;
mod gas;

use std::collections::BTreeMap;
use std::fmt;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::commitment::{storage_key, Commitment, StorageKey};
use crate::keccak::keccak256;
use crate::record::SlideKey;

pub use export::{events_jsonl, LEDGER_FORMAT};
pub use fees::{next_base_fee, FeeConfig, Wei, WEI_PER_GWEI};
pub use gas::{
    calldata_profile, estimate_gas, CalldataProfile, GasConfig, CANONICAL_GAS, DEFAULT_EXEC_BASE,
    REGISTER_SLIDE_SELECTOR,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("lectureId must be > 0")]
    InvalidLecture,
    #[error("slideId must be > 0")]
    InvalidSlide,
    #[error("slide hash {0:?} is not a 0x-prefixed 32-byte hex commitment")]
    InvalidHash(String),
    #[error("slide already registered: {0}")]
    AlreadyRegistered(SlideKey),
    #[error("corrupt ledger file: {0}")]
    CorruptLedgerFile(String),
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
}

/// 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(42);
        s.push_str("0x");
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn parse_hex(s: &str) -> Option<Self> {
        let body = s.strip_prefix("0x")?;
        if body.len() != 40 || !body.is_ascii() {
            return None;
        }
        let mut out = [0u8; 20];
        for (i, pair) in body.as_bytes().chunks_exact(2).enumerate() {
            out[i] = u8::from_str_radix(std::str::from_utf8(pair).ok()?, 16).ok()?;
        }
        Some(Self(out))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

pub const DEV_ACCOUNT_COUNT: usize = 20;

/// The fixed set of development accounts. Account `i` is the low 20 bytes
/// of `keccak256("dev-account:" ++ i)`.
pub fn dev_accounts() -> Vec<Address> {
    (0..DEV_ACCOUNT_COUNT)
        .map(|i| {
            let h = keccak256(format!("dev-account:{i}").as_bytes());
            let mut a = [0u8; 20];
            a.copy_from_slice(&h[12..]);
            Address(a)
        })
        .collect()
}

pub fn dev_account(index: usize) -> Option<Address> {
    dev_accounts().get(index).copied()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainConfig {
    pub fees: FeeConfig,
    pub gas: GasConfig,
}

/// Stored entry, as returned by `getSlide`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideRecord {
    pub key: SlideKey,
    /// Commitment as submitted (0x-hex text).
    pub slide_hash: String,
    pub uri: String,
    /// Block timestamp of registration; never 0 for a stored record.
    pub timestamp: u64,
    pub registrant: Address,
}

/// Log entry emitted once per successful registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideRegistered {
    pub block_number: u64,
    pub key: SlideKey,
    pub slide_hash: String,
    pub uri: String,
    pub registrant: Address,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationReceipt {
    pub key: SlideKey,
    pub gas_used: u64,
    pub effective_gas_price: Wei,
    pub block_number: u64,
    pub timestamp: u64,
    pub cost: Wei,
    pub tx_cost_eth: Decimal,
    pub tx_cost_usd: Decimal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerState {
    records: BTreeMap<StorageKey, SlideRecord>,
    next_block: u64,
    next_timestamp: u64,
    base_fee: Wei,
    events: Vec<SlideRegistered>,
}

impl LedgerState {
    /// Empty chain: block 0 sealed at the genesis timestamp, so the first
    /// registration lands in block 1 at `genesis + interval`.
    pub fn genesis(fees: &FeeConfig) -> Self {
        Self {
            records: BTreeMap::new(),
            next_block: 1,
            next_timestamp: fees.genesis_timestamp + fees.block_interval,
            base_fee: fees.initial_base_fee,
            events: Vec::new(),
        }
    }

    pub fn next_block(&self) -> u64 {
        self.next_block
    }

    pub fn next_timestamp(&self) -> u64 {
        self.next_timestamp
    }

    /// Base fee that the next sealed block will charge.
    pub fn base_fee(&self) -> Wei {
        self.base_fee
    }

    pub fn events(&self) -> &[SlideRegistered] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in storage-key order.
    pub fn records(&self) -> impl Iterator<Item = (&StorageKey, &SlideRecord)> {
        self.records.iter()
    }

    pub fn get_slide(&self, key: SlideKey) -> Option<&SlideRecord> {
        self.records.get(&storage_key(key))
    }

    pub fn is_registered(&self, key: SlideKey) -> bool {
        self.records.contains_key(&storage_key(key))
    }

    /// Registers one slide and seals a block. On error the state is left
    /// untouched.
    pub fn register_slide(
        &mut self,
        cfg: &ChainConfig,
        key: SlideKey,
        slide_hash: &str,
        uri: &str,
        registrant: Address,
    ) -> Result<RegistrationReceipt, LedgerError> {
        if key.lecture_id == 0 {
            return Err(LedgerError::InvalidLecture);
        }
        if key.slide_id == 0 {
            return Err(LedgerError::InvalidSlide);
        }
        if slide_hash.parse::<Commitment>().is_err() {
            return Err(LedgerError::InvalidHash(slide_hash.to_string()));
        }
        let skey = storage_key(key);
        if self.records.contains_key(&skey) {
            return Err(LedgerError::AlreadyRegistered(key));
        }

        let gas_used = estimate_gas(slide_hash, uri, &cfg.gas);
        let price = self.base_fee + cfg.fees.priority_tip;
        let cost = price
            .checked_mul_gas(gas_used as u128)
            .ok_or(LedgerError::Overflow("transaction cost"))?;
        let tx_cost_eth = cost.to_eth().ok_or(LedgerError::Overflow("transaction cost"))?;
        let tx_cost_usd = tx_cost_eth
            .checked_mul(cfg.fees.eth_usd)
            .ok_or(LedgerError::Overflow("transaction cost"))?;

        let block_number = self.next_block;
        let timestamp = self.next_timestamp;
        self.records.insert(
            skey,
            SlideRecord {
                key,
                slide_hash: slide_hash.to_string(),
                uri: uri.to_string(),
                timestamp,
                registrant,
            },
        );
        self.events.push(SlideRegistered {
            block_number,
            key,
            slide_hash: slide_hash.to_string(),
            uri: uri.to_string(),
            registrant,
            timestamp,
        });
        self.next_block += 1;
        self.next_timestamp += cfg.fees.block_interval;
        self.base_fee = next_base_fee(
            self.base_fee,
            gas_used,
            cfg.fees.gas_target,
            cfg.fees.change_denominator,
        );

        Ok(RegistrationReceipt {
            key,
            gas_used,
            effective_gas_price: price,
            block_number,
            timestamp,
            cost,
            tx_cost_eth,
            tx_cost_usd,
        })
    }

    /// Registers `items` in order. Failures are collected; with
    /// `halt_on_error` the batch stops at the first one.
    pub fn batch_register(
        &mut self,
        cfg: &ChainConfig,
        items: &[BatchItem],
        opts: BatchOptions,
    ) -> BatchOutcome {
        let mut receipts = Vec::with_capacity(items.len());
        let mut failures = Vec::new();
        for item in items {
            match self.register_slide(cfg, item.key, &item.slide_hash, &item.uri, opts.registrant) {
                Ok(r) => receipts.push(r),
                Err(e) => {
                    failures.push((item.key, e));
                    if opts.halt_on_error {
                        break;
                    }
                }
            }
        }
        let summary = BatchSummary::from_receipts(&receipts, failures.len(), &cfg.fees);
        BatchOutcome {
            receipts,
            failures,
            summary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub key: SlideKey,
    pub slide_hash: String,
    pub uri: String,
}

impl BatchItem {
    pub fn new(key: SlideKey, commitment: Commitment, uri: impl Into<String>) -> Self {
        Self {
            key,
            slide_hash: commitment.to_hex(),
            uri: uri.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub registrant: Address,
    pub halt_on_error: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            registrant: dev_accounts()[0],
            halt_on_error: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub receipts: Vec<RegistrationReceipt>,
    pub failures: Vec<(SlideKey, LedgerError)>,
    pub summary: BatchSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub registered: usize,
    pub failed: usize,
    pub min_gas: u64,
    pub max_gas: u64,
    pub mean_gas: Decimal,
    pub total_gas: u128,
    pub total_cost: Wei,
    pub total_cost_eth: Decimal,
    pub total_cost_usd: Decimal,
    pub min_cost_usd: Decimal,
    pub max_cost_usd: Decimal,
    pub first_timestamp: u64,
    pub last_timestamp: u64,
    /// `t_last - t_first` in modeled seconds.
    pub elapsed_seconds: u64,
    /// `N / max(elapsed, interval)` slides per second.
    pub throughput: f64,
}

impl BatchSummary {
    pub fn from_receipts(receipts: &[RegistrationReceipt], failed: usize, fees: &FeeConfig) -> Self {
        let n = receipts.len();
        let total_gas: u128 = receipts.iter().map(|r| r.gas_used as u128).sum();
        let total_cost = Wei(receipts.iter().map(|r| r.cost.0).sum());
        let total_cost_eth = total_cost.to_eth().unwrap_or(Decimal::MAX);
        let first_timestamp = receipts.first().map_or(0, |r| r.timestamp);
        let last_timestamp = receipts.last().map_or(0, |r| r.timestamp);
        let elapsed_seconds = last_timestamp - first_timestamp;
        let throughput = if n == 0 {
            0.0
        } else {
            n as f64 / elapsed_seconds.max(fees.block_interval) as f64
        };
        Self {
            registered: n,
            failed,
            min_gas: receipts.iter().map(|r| r.gas_used).min().unwrap_or(0),
            max_gas: receipts.iter().map(|r| r.gas_used).max().unwrap_or(0),
            mean_gas: if n == 0 {
                Decimal::ZERO
            } else {
                Decimal::from(total_gas as u64) / Decimal::from(n as u64)
            },
            total_gas,
            total_cost,
            total_cost_eth,
            total_cost_usd: total_cost_eth.saturating_mul(fees.eth_usd),
            min_cost_usd: receipts.iter().map(|r| r.tx_cost_usd).min().unwrap_or_default(),
            max_cost_usd: receipts.iter().map(|r| r.tx_cost_usd).max().unwrap_or_default(),
            first_timestamp,
            last_timestamp,
            elapsed_seconds,
            throughput,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::commit;

    fn hash(i: u64) -> String {
        commit(&i.to_be_bytes()).to_hex()
    }

    fn fresh() -> (LedgerState, ChainConfig) {
        let cfg = ChainConfig::default();
        (LedgerState::genesis(&cfg.fees), cfg)
    }

    fn acct() -> Address {
        dev_accounts()[0]
    }

    #[test]
    fn first_registration() {
        let (mut s, cfg) = fresh();
        let r = s
            .register_slide(&cfg, SlideKey::new(1, 1), &hash(1), "Lecture 1/Slide1.json", acct())
            .unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(r.block_number, 1);
        assert_eq!(r.timestamp, cfg.fees.genesis_timestamp + 1);
        assert_eq!(s.events().len(), 1);
        assert_eq!(s.next_block(), 2);
    }

    #[test]
    fn duplicate_rejected_state_unchanged() {
        let (mut s, cfg) = fresh();
        let k = SlideKey::new(1, 1);
        s.register_slide(&cfg, k, &hash(1), "a", acct()).unwrap();
        let before = s.clone();
        let err = s.register_slide(&cfg, k, &hash(2), "b", acct()).unwrap_err();
        assert_eq!(err, LedgerError::AlreadyRegistered(k));
        assert_eq!(err.to_string(), "slide already registered: (1, 1)");
        assert_eq!(s, before);
        assert!(s.is_registered(k));
        assert_eq!(s.get_slide(k).unwrap().slide_hash, hash(1));
    }

    #[test]
    fn zero_ids_rejected() {
        let (mut s, cfg) = fresh();
        let before = s.clone();
        assert_eq!(
            s.register_slide(&cfg, SlideKey::new(0, 1), &hash(1), "", acct()),
            Err(LedgerError::InvalidLecture)
        );
        assert_eq!(
            s.register_slide(&cfg, SlideKey::new(1, 0), &hash(1), "", acct()),
            Err(LedgerError::InvalidSlide)
        );
        assert_eq!(s, before);
    }

    #[test]
    fn bad_hash_rejected() {
        let (mut s, cfg) = fresh();
        assert!(matches!(
            s.register_slide(&cfg, SlideKey::new(1, 1), "deadbeef", "", acct()),
            Err(LedgerError::InvalidHash(_))
        ));
        assert!(s.is_empty());
    }

    #[test]
    fn lookups() {
        let (mut s, cfg) = fresh();
        assert!(!s.is_registered(SlideKey::new(5, 5)));
        assert!(s.get_slide(SlideKey::new(5, 5)).is_none());
        for i in 1..=3 {
            s.register_slide(&cfg, SlideKey::new(1, i), &hash(i), "u", acct())
                .unwrap();
        }
        let first = s.get_slide(SlideKey::new(1, 1)).unwrap().timestamp;
        for rank in 1..=3u64 {
            let rec = s.get_slide(SlideKey::new(1, rank)).unwrap();
            assert_eq!(rec.timestamp, first + (rank - 1) * cfg.fees.block_interval);
            assert_eq!(rec.registrant, acct());
        }
    }

    #[test]
    fn receipt_cost_identity() {
        let (mut s, cfg) = fresh();
        let r = s
            .register_slide(&cfg, SlideKey::new(1, 1), &hash(1), &"x".repeat(30), acct())
            .unwrap();
        assert_eq!(r.gas_used, 231_430);
        assert_eq!(r.effective_gas_price, Wei(1_770_000_000));
        // gas * gwei * 1e-9
        let expected_eth = Decimal::from(r.gas_used) * r.effective_gas_price.to_gwei()
            / Decimal::from(1_000_000_000u64);
        assert_eq!(r.tx_cost_eth, expected_eth);
        assert_eq!(r.tx_cost_usd, r.tx_cost_eth * Decimal::from(3000));
    }

    #[test]
    fn batch_summary_and_failures() {
        let (mut s, cfg) = fresh();
        let items: Vec<BatchItem> = [1u64, 2, 2, 3]
            .iter()
            .map(|&i| BatchItem {
                key: SlideKey::new(1, i),
                slide_hash: hash(i),
                uri: "x".repeat(30),
            })
            .collect();
        let out = s.batch_register(&cfg, &items, BatchOptions::default());
        assert_eq!(out.receipts.len(), 3);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.summary.total_gas, 3 * 231_430);
        assert_eq!(out.summary.elapsed_seconds, 2);
        assert_eq!(out.summary.throughput, 1.5);
        // Failed item does not consume a block.
        assert_eq!(
            out.receipts.iter().map(|r| r.block_number).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );

        let (mut s, _) = fresh();
        let halted = s.batch_register(
            &cfg,
            &items,
            BatchOptions {
                halt_on_error: true,
                ..BatchOptions::default()
            },
        );
        assert_eq!(halted.receipts.len(), 2);
        assert_eq!(halted.failures.len(), 1);
    }

    #[test]
    fn single_item_throughput_uses_interval() {
        let (mut s, cfg) = fresh();
        let out = s.batch_register(
            &cfg,
            &[BatchItem {
                key: SlideKey::new(1, 1),
                slide_hash: hash(1),
                uri: String::new(),
            }],
            BatchOptions::default(),
        );
        assert_eq!(out.summary.elapsed_seconds, 0);
        assert_eq!(out.summary.throughput, 1.0);
    }

    #[test]
    fn dev_accounts_are_distinct() {
        let a = dev_accounts();
        assert_eq!(a.len(), 20);
        let set: std::collections::BTreeSet<_> = a.iter().collect();
        assert_eq!(set.len(), 20);
        assert_eq!(Address::parse_hex(&a[3].to_hex()), Some(a[3]));
        assert_eq!(dev_account(20), None);
    }
}
