use std::fmt;
use std::ops::Add;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;

use super::LedgerError;

pub const WEI_PER_GWEI: u128 = 1_000_000_000;

/// An amount of ether in wei. All fee arithmetic is done on integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Wei(pub u128);

impl Wei {
    pub const fn from_gwei(gwei: u64) -> Self {
        Self(gwei as u128 * WEI_PER_GWEI)
    }

    /// Accepts fractional gwei down to 1 wei of precision.
    pub fn from_gwei_decimal(gwei: Decimal) -> Result<Self, LedgerError> {
        let wei = gwei
            .checked_mul(Decimal::from(WEI_PER_GWEI as u64))
            .ok_or_else(|| LedgerError::InvalidConfig(format!("{gwei} gwei out of range")))?;
        if wei.is_sign_negative() || wei.fract() != Decimal::ZERO {
            return Err(LedgerError::InvalidConfig(format!(
                "{gwei} gwei is not a non-negative whole number of wei"
            )));
        }
        wei.to_u128()
            .map(Self)
            .ok_or_else(|| LedgerError::InvalidConfig(format!("{gwei} gwei out of range")))
    }

    pub fn to_gwei(self) -> Decimal {
        (Decimal::from_i128_with_scale(self.0 as i128, 9)).normalize()
    }

    /// Exact ether value; fails only beyond ~7.9e10 ETH.
    pub fn to_eth(self) -> Option<Decimal> {
        i128::try_from(self.0)
            .ok()
            .and_then(|w| Decimal::try_from_i128_with_scale(w, 18).ok())
    }

    pub fn checked_mul_gas(self, gas: u128) -> Option<Self> {
        self.0.checked_mul(gas).map(Self)
    }
}

impl Add for Wei {
    type Output = Wei;

    fn add(self, rhs: Wei) -> Wei {
        Wei(self.0 + rhs.0)
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} gwei", self.to_gwei())
    }
}

/// Fee and block-production parameters of the simulated chain.
///
/// The defaults reproduce a development chain that starts at a 0.77 gwei
/// base fee, adds a 1 gwei priority tip, and seals one block per
/// transaction one second apart.
#[derive(Debug, Clone, PartialEq)]
pub struct FeeConfig {
    pub initial_base_fee: Wei,
    pub priority_tip: Wei,
    /// Gas target per block for the base fee update rule.
    pub gas_target: u64,
    /// Maximum relative change of the base fee per block is `1 / denominator`.
    pub change_denominator: u64,
    pub eth_usd: Decimal,
    pub block_interval: u64,
    pub genesis_timestamp: u64,
}

impl Default for FeeConfig {
    fn default() -> Self {
        Self {
            initial_base_fee: Wei(770_000_000),
            priority_tip: Wei::from_gwei(1),
            gas_target: 15_000_000,
            change_denominator: 8,
            eth_usd: Decimal::from(3000),
            block_interval: 1,
            // 2025-01-01T00:00:00Z
            genesis_timestamp: 1_735_689_600,
        }
    }
}

impl FeeConfig {
    pub fn validate(&self) -> Result<(), LedgerError> {
        let bad = |what: &str| Err(LedgerError::InvalidConfig(format!("{what} must be positive")));
        if self.initial_base_fee.0 == 0 {
            return bad("initial base fee");
        }
        if self.priority_tip.0 == 0 {
            return bad("priority tip");
        }
        if self.gas_target == 0 {
            return bad("gas target");
        }
        if self.change_denominator == 0 {
            return bad("base fee change denominator");
        }
        if self.eth_usd <= Decimal::ZERO {
            return bad("ETH/USD rate");
        }
        if self.block_interval == 0 {
            return bad("block interval");
        }
        if self.genesis_timestamp == 0 {
            return bad("genesis timestamp");
        }
        Ok(())
    }
}

/// Base fee of the next block given the gas used in the current one.
///
/// Integer form of `base * (1 + (used - target) / (denominator * target))`,
/// rounding the adjustment toward zero, with an increase of at least 1 wei
/// when the block is above target.
pub fn next_base_fee(base: Wei, gas_used: u64, gas_target: u64, denominator: u64) -> Wei {
    let (base, used, target, denom) = (base.0, gas_used as u128, gas_target as u128, denominator as u128);
    match used.cmp(&target) {
        std::cmp::Ordering::Equal => Wei(base),
        std::cmp::Ordering::Greater => {
            let delta = (base * (used - target) / target / denom).max(1);
            Wei(base + delta)
        }
        std::cmp::Ordering::Less => {
            let delta = base * (target - used) / target / denom;
            Wei(base - delta)
        }
    }
}
