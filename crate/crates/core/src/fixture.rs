//! The 45-asset cross-section of PIN, PH, market capitalization and
//! transaction counts (Budapest Stock Exchange equities, 2008).

use serde::{Deserialize, Serialize};

use crate::stats::SizeEntry;

const TABLE_A1: &str = include_str!("../data/table_a1.csv");

/// Market caps in the source table are quoted in millions of HUF.
pub const MARKET_CAP_UNIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRow {
    pub ticker: String,
    pub pin: f64,
    pub ph: f64,
    /// HUF.
    pub market_cap: f64,
    /// Total number of transactions over the sample year.
    pub transactions: u64,
}

#[derive(Deserialize)]
struct RawRow {
    ticker: String,
    pin: f64,
    ph: f64,
    market_cap_mhuf: f64,
    transactions: u64,
}

/// Rows in the source order, market cap rescaled to HUF.
pub fn table_a1() -> Vec<FixtureRow> {
    csv::Reader::from_reader(TABLE_A1.as_bytes())
        .deserialize::<RawRow>()
        .map(|r| {
            let r = r.expect("bundled fixture is well-formed");
            FixtureRow {
                ticker: r.ticker,
                pin: r.pin,
                ph: r.ph,
                market_cap: r.market_cap_mhuf * MARKET_CAP_UNIT,
                transactions: r.transactions,
            }
        })
        .collect()
}

pub fn size_entries() -> Vec<SizeEntry> {
    table_a1()
        .into_iter()
        .map(|r| SizeEntry {
            asset_id: r.ticker,
            market_cap: r.market_cap,
            pin: r.pin,
            ph: r.ph,
        })
        .collect()
}
