//! Parametric gas model for `registerSlide`.
//!
//! Gas is `intrinsic + calldata + exec_base`, where calldata is priced per
//! byte of the ABI encoding of `registerSlide(uint256,uint256,string,string)`:
//!
//! ```text
//! selector(4) | lectureId | slideId | off(hash) | off(uri)
//!             | len(hash) | hash bytes, zero-padded to 32
//!             | len(uri)  | uri bytes, zero-padded to 32
//! ```
//!
//! Offsets, lengths and string contents are counted exactly. The two id
//! words are modelled as holding one non-zero byte each (ids below 256), so
//! the estimate depends only on the submitted texts.

use crate::commitment::u256_word;

/// `keccak256("registerSlide(uint256,uint256,string,string)")[..4]`
pub const REGISTER_SLIDE_SELECTOR: [u8; 4] = [0xa3, 0x2b, 0x59, 0x4b];

/// Calibrated so that a registration with a 66-character hash and a
/// 30-character uri costs 231,430 gas.
pub const DEFAULT_EXEC_BASE: u64 = 207_862;

/// Gas of that reference registration under the default config.
pub const CANONICAL_GAS: u64 = 231_430;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GasConfig {
    pub intrinsic: u64,
    pub calldata_nonzero: u64,
    pub calldata_zero: u64,
    pub exec_base: u64,
}

impl Default for GasConfig {
    fn default() -> Self {
        Self {
            intrinsic: 21_000,
            calldata_nonzero: 16,
            calldata_zero: 4,
            exec_base: DEFAULT_EXEC_BASE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CalldataProfile {
    pub nonzero: u64,
    pub zero: u64,
}

impl CalldataProfile {
    fn add_bytes(&mut self, bytes: &[u8]) {
        let z = bytes.iter().filter(|&&b| b == 0).count() as u64;
        self.zero += z;
        self.nonzero += bytes.len() as u64 - z;
    }

    fn add_word(&mut self, v: u64) {
        self.add_bytes(&u256_word(v));
    }

    pub fn len(&self) -> u64 {
        self.nonzero + self.zero
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn padded(len: usize) -> usize {
    len.div_ceil(32) * 32
}

pub fn calldata_profile(slide_hash: &str, uri: &str) -> CalldataProfile {
    let mut p = CalldataProfile::default();
    p.add_bytes(&REGISTER_SLIDE_SELECTOR);
    // lectureId, slideId
    p.nonzero += 2;
    p.zero += 2 * 31;
    let hash_off = 4 * 32;
    p.add_word(hash_off as u64);
    p.add_word((hash_off + 32 + padded(slide_hash.len())) as u64);
    for s in [slide_hash.as_bytes(), uri.as_bytes()] {
        p.add_word(s.len() as u64);
        p.add_bytes(s);
        p.zero += (padded(s.len()) - s.len()) as u64;
    }
    p
}

pub fn estimate_gas(slide_hash: &str, uri: &str, cfg: &GasConfig) -> u64 {
    let p = calldata_profile(slide_hash, uri);
    cfg.intrinsic + cfg.calldata_nonzero * p.nonzero + cfg.calldata_zero * p.zero + cfg.exec_base
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keccak::keccak256;

    const HASH66: &str = "0xc5d2460186f7233c927e7db2dcc703c0e500b653ca82273b7bfad8045d85a470";

    fn uri(n: usize) -> String {
        "u".repeat(n)
    }

    /// Builds the literal ABI calldata for ids (1, 1), independent of the
    /// profile arithmetic above.
    fn literal_calldata(hash: &str, uri: &str) -> Vec<u8> {
        let word = |v: usize| {
            let mut w = [0u8; 32];
            w[24..].copy_from_slice(&(v as u64).to_be_bytes());
            w
        };
        let tail = |s: &str| {
            let mut t = word(s.len()).to_vec();
            let mut body = s.as_bytes().to_vec();
            body.resize(s.len().div_ceil(32) * 32, 0);
            t.extend(body);
            t
        };
        let (th, tu) = (tail(hash), tail(uri));
        let mut cd = keccak256(b"registerSlide(uint256,uint256,string,string)")[..4].to_vec();
        for w in [word(1), word(1), word(0x80), word(0x80 + th.len())] {
            cd.extend_from_slice(&w);
        }
        cd.extend(th);
        cd.extend(tu);
        cd
    }

    #[test]
    fn selector_matches_signature() {
        assert_eq!(
            keccak256(b"registerSlide(uint256,uint256,string,string)")[..4],
            REGISTER_SLIDE_SELECTOR
        );
    }

    #[test]
    fn profile_matches_literal_encoding() {
        for (h, u) in [(HASH66, uri(30)), (HASH66, uri(0)), ("0x", uri(65)), (HASH66, uri(200))] {
            let cd = literal_calldata(h, &u);
            let zero = cd.iter().filter(|&&b| b == 0).count() as u64;
            let p = calldata_profile(h, &u);
            assert_eq!(p.len(), cd.len() as u64);
            assert_eq!(p.zero, zero);
        }
    }

    #[test]
    fn calibration_point() {
        // Oracle: solve exec_base from the literal calldata.
        let cd = literal_calldata(HASH66, &uri(30));
        let zero = cd.iter().filter(|&&b| b == 0).count() as u64;
        let nonzero = cd.len() as u64 - zero;
        assert_eq!((nonzero, zero), (106, 218));
        let exec_base = 231_430 - 21_000 - 16 * nonzero - 4 * zero;
        assert_eq!(exec_base, DEFAULT_EXEC_BASE);
        assert_eq!(estimate_gas(HASH66, &uri(30), &GasConfig::default()), 231_430);
    }

    #[test]
    fn longer_uri_is_linear() {
        let cfg = GasConfig::default();
        let base = estimate_gas(HASH66, &uri(30), &cfg);
        assert_eq!(estimate_gas(HASH66, &uri(62), &cfg), base + 32 * 16);
    }

    #[test]
    fn equal_lengths_equal_gas() {
        let cfg = GasConfig::default();
        let other = format!("0x{}", "f".repeat(64));
        assert_eq!(
            estimate_gas(HASH66, "Lecture 1/Slide1.json", &cfg),
            estimate_gas(&other, "Lecture 9/Slide9.json", &cfg)
        );
    }
}
