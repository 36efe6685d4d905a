//! Keccak-256 commitments over canonical record bytes and contract storage
//! keys over slide identities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::keccak::keccak256;
use crate::record::SlideKey;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexError {
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("expected 64 hex digits, found {0}")]
    BadLength(usize),
    #[error("invalid hex digit {0:?}")]
    BadDigit(char),
}

fn encode_hex(bytes: &[u8; 32]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(66);
    s.push_str("0x");
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 0x0f) as usize] as char);
    }
    s
}

fn decode_hex(s: &str) -> Result<[u8; 32], HexError> {
    let body = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or(HexError::MissingPrefix)?;
    if body.len() != 64 || !body.is_ascii() {
        return Err(HexError::BadLength(body.chars().count()));
    }
    let nibble = |c: u8| -> Result<u8, HexError> {
        (c as char)
            .to_digit(16)
            .map(|d| d as u8)
            .ok_or(HexError::BadDigit(c as char))
    };
    let mut out = [0u8; 32];
    for (i, pair) in body.as_bytes().chunks_exact(2).enumerate() {
        out[i] = (nibble(pair[0])? << 4) | nibble(pair[1])?;
    }
    Ok(out)
}

/// A 32-byte Keccak-256 digest. Its wire form is `0x` plus 64 lowercase hex
/// digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Commitment([u8; 32]);

impl Commitment {
    pub const fn from_digest(digest: [u8; 32]) -> Self {
        Self(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        encode_hex(&self.0)
    }

    /// Case-insensitive comparison against a stored hex string, mirroring
    /// how the registry keeps the commitment as text.
    pub fn matches_hex(&self, stored: &str) -> bool {
        decode_hex(stored.trim()).is_ok_and(|d| d == self.0)
    }
}

impl fmt::Display for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

impl FromStr for Commitment {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_hex(s).map(Self)
    }
}

impl Serialize for Commitment {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Commitment {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Registry index for a slide: Keccak-256 over the packed pair of 32-byte
/// big-endian words `(lecture_id, slide_id)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StorageKey([u8; 32]);

impl StorageKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        encode_hex(&self.0)
    }
}

impl fmt::Display for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for StorageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StorageKey({})", self.to_hex())
    }
}

impl FromStr for StorageKey {
    type Err = HexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_hex(s).map(Self)
    }
}

pub fn commit(bytes: &[u8]) -> Commitment {
    Commitment(keccak256(bytes))
}

/// Big-endian 32-byte word, as `abi.encodePacked` lays out a `uint256`.
pub(crate) fn u256_word(v: u64) -> [u8; 32] {
    let mut w = [0u8; 32];
    w[24..].copy_from_slice(&v.to_be_bytes());
    w
}

pub fn storage_key(key: SlideKey) -> StorageKey {
    let mut packed = [0u8; 64];
    packed[..32].copy_from_slice(&u256_word(key.lecture_id));
    packed[32..].copy_from_slice(&u256_word(key.slide_id));
    StorageKey(keccak256(&packed))
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn hex_round_trip(bytes in prop::array::uniform32(any::<u8>())) {
            let c = Commitment::from_digest(bytes);
            prop_assert_eq!(c.to_hex().parse::<Commitment>().unwrap(), c);
            prop_assert_eq!(c.to_hex().len(), 66);
        }

        #[test]
        fn matches_reference_keccak(data in prop::collection::vec(any::<u8>(), 0..600)) {
            use sha3::Digest;
            let reference = sha3::Keccak256::digest(&data);
            let ours = commit(&data);
            prop_assert_eq!(ours.digest().as_slice(), reference.as_slice());
        }
    }
}
