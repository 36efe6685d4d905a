//! Linear extrapolation of registration gas, cost and time to large corpora
//! under fixed gas prices.

use std::str::FromStr;

use rust_decimal::Decimal;
use thiserror::Error;

use crate::ledger::CANONICAL_GAS;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProjectionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid network profile config: {0}")]
    Config(String),
    #[error("projection overflows decimal range")]
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkProfile {
    pub name: String,
    pub gas_price_gwei: Decimal,
}

impl NetworkProfile {
    pub fn new(name: impl Into<String>, gas_price_gwei: Decimal) -> Result<Self, ProjectionError> {
        if gas_price_gwei <= Decimal::ZERO {
            return Err(ProjectionError::InvalidParameter(format!(
                "gas price must be positive, got {gas_price_gwei}"
            )));
        }
        Ok(Self {
            name: name.into(),
            gas_price_gwei,
        })
    }
}

pub fn presets() -> Vec<NetworkProfile> {
    [("Ethereum L1", 30), ("Polygon PoS", 5), ("Optimistic L2", 1)]
        .into_iter()
        .map(|(name, gwei)| NetworkProfile {
            name: name.to_string(),
            gas_price_gwei: Decimal::from(gwei),
        })
        .collect()
}

/// Parses profiles from TOML:
///
/// ```toml
/// [[network]]
/// name = "Sidechain"
/// gas_price_gwei = 0.25
/// ```
///
/// Prices may be integers, floats or decimal strings.
pub fn parse_profiles(text: &str) -> Result<Vec<NetworkProfile>, ProjectionError> {
    let cfg = |m: String| ProjectionError::Config(m);
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg(e.to_string()))?;
    let nets = doc
        .get("network")
        .and_then(|v| v.as_array())
        .ok_or_else(|| cfg("expected one or more [[network]] tables".into()))?;
    let mut out = Vec::with_capacity(nets.len());
    for (i, net) in nets.iter().enumerate() {
        let t = net
            .as_table()
            .ok_or_else(|| cfg(format!("network {i} is not a table")))?;
        let name = t
            .get("name")
            .and_then(|v| v.as_str())
            .ok_or_else(|| cfg(format!("network {i} has no name")))?;
        let price = match t.get("gas_price_gwei") {
            Some(toml::Value::Integer(n)) => Some(Decimal::from(*n)),
            Some(toml::Value::Float(f)) => Decimal::from_str(&f.to_string()).ok(),
            Some(toml::Value::String(s)) => Decimal::from_str(s.trim()).ok(),
            _ => None,
        }
        .ok_or_else(|| cfg(format!("network {name:?} needs a numeric gas_price_gwei")))?;
        out.push(NetworkProfile::new(name, price)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionParams {
    pub mean_gas: u64,
    pub eth_usd: Decimal,
    /// Slides per second.
    pub throughput: Decimal,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            mean_gas: CANONICAL_GAS,
            eth_usd: Decimal::from(3000),
            throughput: Decimal::ONE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Projection {
    pub n_slides: u64,
    pub network: String,
    pub gas_price_gwei: Decimal,
    pub total_gas: u128,
    pub total_cost_eth: Decimal,
    pub total_cost_usd: Decimal,
    pub expected_seconds: Decimal,
}

pub fn project(
    n: u64,
    profiles: &[NetworkProfile],
    params: &ProjectionParams,
) -> Result<Vec<Projection>, ProjectionError> {
    let invalid = |m: &str| Err(ProjectionError::InvalidParameter(m.to_string()));
    if n == 0 {
        return invalid("slide count must be at least 1");
    }
    if params.mean_gas == 0 {
        return invalid("mean gas must be positive");
    }
    if params.eth_usd <= Decimal::ZERO {
        return invalid("ETH/USD rate must be positive");
    }
    if params.throughput <= Decimal::ZERO {
        return invalid("throughput must be positive");
    }
    let total_gas = n as u128 * params.mean_gas as u128;
    let gas = Decimal::try_from_i128_with_scale(total_gas as i128, 0).map_err(|_| ProjectionError::Overflow)?;
    let gwei_per_eth = Decimal::from(1_000_000_000u64);
    let expected_seconds = Decimal::from(n)
        .checked_div(params.throughput)
        .ok_or(ProjectionError::Overflow)?;
    profiles
        .iter()
        .map(|p| {
            let gwei = gas.checked_mul(p.gas_price_gwei).ok_or(ProjectionError::Overflow)?;
            let eth = gwei.checked_div(gwei_per_eth).ok_or(ProjectionError::Overflow)?;
            let usd = eth.checked_mul(params.eth_usd).ok_or(ProjectionError::Overflow)?;
            Ok(Projection {
                n_slides: n,
                network: p.name.clone(),
                gas_price_gwei: p.gas_price_gwei,
                total_gas,
                total_cost_eth: eth.normalize(),
                total_cost_usd: usd.normalize(),
                expected_seconds: expected_seconds.normalize(),
            })
        })
        .collect()
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn linear_in_n(n in 1u64..1_000_000_000, gas in 1u64..10_000_000) {
            let params = ProjectionParams { mean_gas: gas, ..ProjectionParams::default() };
            let one = project(n, &presets(), &params).unwrap();
            let two = project(2 * n, &presets(), &params).unwrap();
            for (a, b) in one.iter().zip(&two) {
                prop_assert_eq!(b.total_gas, 2 * a.total_gas);
                prop_assert_eq!(b.total_cost_eth, a.total_cost_eth * Decimal::TWO);
                prop_assert_eq!(a.total_cost_usd, a.total_cost_eth * params.eth_usd);
            }
        }

        #[test]
        fn cheaper_network_costs_less(n in 1u64..1_000_000, lo in 1u32..1000, extra in 1u32..1000) {
            let profiles = [
                NetworkProfile::new("lo", Decimal::from(lo)).unwrap(),
                NetworkProfile::new("hi", Decimal::from(lo + extra)).unwrap(),
            ];
            let p = project(n, &profiles, &ProjectionParams::default()).unwrap();
            prop_assert!(p[0].total_cost_usd < p[1].total_cost_usd);
        }
    }
}
