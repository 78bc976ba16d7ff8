//! Trade, market-index and asset-metadata ingestion.
//!
//! File formats (comma-delimited by default, one header row):
//!
//! | file      | header                                           |
//! |-----------|--------------------------------------------------|
//! | trades    | `timestamp,ticker,price,quantity,side` (`B`/`S`/`U`) |
//! | counts    | `date,ticker,buys,sells`                         |
//! | market    | `date,return` or `date,close`                    |
//! | metadata  | `ticker,market_cap,mean_daily_volume,is_equity`  |
//! | panel     | `ticker,date,buys,sells,indicator`               |
//!
//! Lines beginning with `#` are comments.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::IngestError;
use crate::model::{DailyCounts, EstimationWindow, Indicator};

pub const TRADES_HEADER: &str = "timestamp,ticker,price,quantity,side";
pub const COUNTS_HEADER: &str = "date,ticker,buys,sells";
pub const METADATA_HEADER: &str = "ticker,market_cap,mean_daily_volume,is_equity";
pub const PANEL_HEADER: &str = "ticker,date,buys,sells,indicator";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelimitedFormat {
    pub delimiter: u8,
}

impl Default for DelimitedFormat {
    fn default() -> Self {
        DelimitedFormat { delimiter: b',' }
    }
}

impl DelimitedFormat {
    fn reader<R: Read>(&self, input: R) -> csv::Reader<R> {
        csv::ReaderBuilder::new()
            .delimiter(self.delimiter)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .has_headers(false)
            .from_reader(input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Buy,
    Sell,
    Unknown,
}

impl Side {
    pub fn code(self) -> &'static str {
        match self {
            Side::Buy => "B",
            Side::Sell => "S",
            Side::Unknown => "U",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub timestamp: NaiveDateTime,
    pub asset_id: String,
    pub price: f64,
    pub quantity: u64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMethod {
    /// Sides come from the input; unknown sides are an error.
    PreSigned,
    /// Uptick buy, downtick sell, zero tick carries the previous sign; the first
    /// trade of each asset is a buy.
    TickTest,
}

/// Rows read from a delimited file, with 1-based line numbers.
struct Rows {
    rows: Vec<(u64, csv::StringRecord)>,
}

fn read_rows<R: Read>(input: R, format: &DelimitedFormat, expected: &[&str]) -> Result<Rows, IngestError> {
    let mut reader = format.reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => {
            return Err(IngestError::Header {
                expected: expected.join(","),
                found: String::new(),
            })
        }
    };
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(IngestError::Header {
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok(Rows { rows })
}

fn row_err(line: u64, field: &str, message: impl Into<String>) -> IngestError {
    IngestError::Row {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<&'a str, IngestError> {
    rec.get(idx).ok_or_else(|| row_err(line, name, "missing field"))
}

fn parse_f64(s: &str, name: &str, line: u64) -> Result<f64, IngestError> {
    let v: f64 = s.parse().map_err(|_| row_err(line, name, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(row_err(line, name, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn parse_u64(s: &str, name: &str, line: u64) -> Result<u64, IngestError> {
    s.parse()
        .map_err(|_| row_err(line, name, format!("`{s}` is not a non-negative integer")))
}

fn parse_date(s: &str, name: &str, line: u64) -> Result<NaiveDate, IngestError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| row_err(line, name, format!("`{s}`: {e}")))
}

/// ISO-8601 timestamp; an explicit offset is dropped after conversion to that
/// offset's local time, so trades stay on the exchange's calendar day.
fn parse_timestamp(s: &str, line: u64) -> Result<NaiveDateTime, IngestError> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.naive_local());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(dt);
        }
    }
    Err(row_err(line, "timestamp", format!("`{s}` is not an ISO-8601 date-time")))
}

pub fn parse_trades<R: Read>(input: R, format: &DelimitedFormat) -> Result<Vec<TradeRecord>, IngestError> {
    let expected: Vec<&str> = TRADES_HEADER.split(',').collect();
    let rows = read_rows(input, format, &expected)?;
    let mut out = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        let line = *line;
        if rec.len() != expected.len() {
            return Err(row_err(line, "row", format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let timestamp = parse_timestamp(field(rec, 0, "timestamp", line)?, line)?;
        let asset_id = field(rec, 1, "ticker", line)?.to_string();
        if asset_id.is_empty() {
            return Err(row_err(line, "ticker", "empty ticker"));
        }
        let price = parse_f64(field(rec, 2, "price", line)?, "price", line)?;
        if price <= 0.0 {
            return Err(row_err(line, "price", format!("price must be positive, got {price}")));
        }
        let quantity = parse_u64(field(rec, 3, "quantity", line)?, "quantity", line)?;
        if quantity == 0 {
            return Err(row_err(line, "quantity", "quantity must be at least 1"));
        }
        let side = match field(rec, 4, "side", line)? {
            "B" | "b" => Side::Buy,
            "S" | "s" => Side::Sell,
            "U" | "u" | "" => Side::Unknown,
            other => return Err(row_err(line, "side", format!("`{other}` is not one of B, S, U"))),
        };
        out.push(TradeRecord {
            timestamp,
            asset_id,
            price,
            quantity,
            side,
        });
    }
    Ok(out)
}

pub fn write_trades<W: Write>(out: W, trades: &[TradeRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRADES_HEADER.split(','))?;
    for t in trades {
        w.write_record([
            t.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            t.asset_id.clone(),
            t.price.to_string(),
            t.quantity.to_string(),
            t.side.code().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Assigns buy/sell sides. Input must be sorted by timestamp within each asset.
pub fn classify_trade_signs(trades: &[TradeRecord], method: SignMethod) -> Result<Vec<TradeRecord>, IngestError> {
    match method {
        SignMethod::PreSigned => {
            let unknown: Vec<usize> = trades
                .iter()
                .enumerate()
                .filter(|(_, t)| t.side == Side::Unknown)
                .map(|(i, _)| i)
                .collect();
            if unknown.is_empty() {
                Ok(trades.to_vec())
            } else {
                Err(IngestError::UnknownSides(unknown))
            }
        }
        SignMethod::TickTest => {
            let mut last: HashMap<&str, (f64, Side)> = HashMap::new();
            Ok(trades
                .iter()
                .map(|t| {
                    let side = match last.get(t.asset_id.as_str()) {
                        None => Side::Buy,
                        Some(&(prev, prev_side)) => {
                            if t.price > prev {
                                Side::Buy
                            } else if t.price < prev {
                                Side::Sell
                            } else {
                                prev_side
                            }
                        }
                    };
                    last.insert(t.asset_id.as_str(), (t.price, side));
                    TradeRecord { side, ..t.clone() }
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DayCount {
    pub buys: u64,
    pub sells: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetMetadata {
    /// Quote-currency units.
    pub market_cap: f64,
    pub mean_daily_volume: f64,
    pub is_equity: bool,
}

/// Per-asset daily buy/sell transaction counts plus static asset metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssetDayPanel {
    pub counts: BTreeMap<String, BTreeMap<NaiveDate, DayCount>>,
    pub metadata: BTreeMap<String, AssetMetadata>,
}

impl AssetDayPanel {
    pub fn assets(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn total_trades(&self) -> u64 {
        self.counts
            .values()
            .flat_map(|days| days.values())
            .map(|c| c.buys + c.sells)
            .sum()
    }

    pub fn asset_trades(&self, asset: &str) -> u64 {
        self.counts
            .get(asset)
            .map(|d| d.values().map(|c| c.buys + c.sells).sum())
            .unwrap_or(0)
    }

    pub fn with_metadata(mut self, metadata: BTreeMap<String, AssetMetadata>) -> Self {
        self.metadata = metadata;
        self
    }
}

/// Counts transactions (not shares) per asset per calendar day.
pub fn aggregate_daily(trades: &[TradeRecord]) -> Result<AssetDayPanel, IngestError> {
    let mut panel = AssetDayPanel::default();
    for (i, t) in trades.iter().enumerate() {
        let cell = panel
            .counts
            .entry(t.asset_id.clone())
            .or_default()
            .entry(t.timestamp.date())
            .or_default();
        match t.side {
            Side::Buy => cell.buys += 1,
            Side::Sell => cell.sells += 1,
            Side::Unknown => return Err(IngestError::UnknownSides(vec![i])),
        }
    }
    Ok(panel)
}

pub fn parse_daily_counts<R: Read>(input: R, format: &DelimitedFormat) -> Result<AssetDayPanel, IngestError> {
    let expected: Vec<&str> = COUNTS_HEADER.split(',').collect();
    let rows = read_rows(input, format, &expected)?;
    let mut panel = AssetDayPanel::default();
    for (line, rec) in &rows.rows {
        let line = *line;
        let date = parse_date(field(rec, 0, "date", line)?, "date", line)?;
        let ticker = field(rec, 1, "ticker", line)?.to_string();
        let buys = parse_u64(field(rec, 2, "buys", line)?, "buys", line)?;
        let sells = parse_u64(field(rec, 3, "sells", line)?, "sells", line)?;
        let cell = panel.counts.entry(ticker).or_default().entry(date).or_default();
        cell.buys += buys;
        cell.sells += sells;
    }
    Ok(panel)
}

pub fn write_daily_counts<W: Write>(out: W, panel: &AssetDayPanel) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COUNTS_HEADER.split(','))?;
    // Date-major so the file reads like an exchange end-of-day feed.
    let mut rows: Vec<(NaiveDate, &str, DayCount)> = panel
        .counts
        .iter()
        .flat_map(|(t, days)| days.iter().map(move |(d, c)| (*d, t.as_str(), *c)))
        .collect();
    rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for (d, t, c) in rows {
        w.write_record([d.to_string(), t.to_string(), c.buys.to_string(), c.sells.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_metadata<R: Read>(
    input: R,
    format: &DelimitedFormat,
) -> Result<BTreeMap<String, AssetMetadata>, IngestError> {
    let expected: Vec<&str> = METADATA_HEADER.split(',').collect();
    let rows = read_rows(input, format, &expected)?;
    let mut out = BTreeMap::new();
    for (line, rec) in &rows.rows {
        let line = *line;
        let ticker = field(rec, 0, "ticker", line)?.to_string();
        let market_cap = parse_f64(field(rec, 1, "market_cap", line)?, "market_cap", line)?;
        let mean_daily_volume = parse_f64(field(rec, 2, "mean_daily_volume", line)?, "mean_daily_volume", line)?;
        let is_equity = match field(rec, 3, "is_equity", line)?.to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "y" => true,
            "false" | "0" | "no" | "n" => false,
            other => return Err(row_err(line, "is_equity", format!("`{other}` is not a boolean"))),
        };
        if out
            .insert(
                ticker.clone(),
                AssetMetadata {
                    market_cap,
                    mean_daily_volume,
                    is_equity,
                },
            )
            .is_some()
        {
            return Err(row_err(line, "ticker", format!("duplicate ticker `{ticker}`")));
        }
    }
    Ok(out)
}

pub fn write_metadata<W: Write>(out: W, metadata: &BTreeMap<String, AssetMetadata>) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METADATA_HEADER.split(','))?;
    for (t, m) in metadata {
        w.write_record([
            t.clone(),
            m.market_cap.to_string(),
            m.mean_daily_volume.to_string(),
            m.is_equity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Daily market-index returns and their signs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub indicators: Vec<Indicator>,
}

impl MarketSeries {
    pub fn from_returns(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self, IngestError> {
        if dates.len() != returns.len() {
            return Err(IngestError::Invalid(format!(
                "{} dates but {} returns",
                dates.len(),
                returns.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(IngestError::UnorderedDates(format!("{} then {}", w[0], w[1])));
        }
        let indicators = returns.iter().map(|&r| Indicator::from_return(r)).collect();
        Ok(MarketSeries {
            dates,
            returns,
            indicators,
        })
    }

    /// Simple returns `close_t / close_{t-1} - 1`; the first date has no return
    /// and is not part of the series.
    pub fn from_closes(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self, IngestError> {
        if dates.len() != closes.len() {
            return Err(IngestError::Invalid(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if let Some(c) = closes.iter().find(|&&c| c <= 0.0) {
            return Err(IngestError::Invalid(format!("close must be positive, got {c}")));
        }
        let returns = closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        Self::from_returns(dates.into_iter().skip(1).collect(), returns)
    }
}

pub fn parse_market<R: Read>(input: R, format: &DelimitedFormat) -> Result<MarketSeries, IngestError> {
    let mut input = input;
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let header = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .unwrap_or("");
    let delim = (format.delimiter as char).to_string();
    let closes = header == ["date", "close"].join(&delim);
    let expected: [&str; 2] = if closes { ["date", "close"] } else { ["date", "return"] };
    let rows = read_rows(text.as_bytes(), format, &expected)?;
    let mut dates = Vec::with_capacity(rows.rows.len());
    let mut values = Vec::with_capacity(rows.rows.len());
    for (line, rec) in &rows.rows {
        dates.push(parse_date(field(rec, 0, "date", *line)?, "date", *line)?);
        values.push(parse_f64(field(rec, 1, expected[1], *line)?, expected[1], *line)?);
    }
    if closes {
        MarketSeries::from_closes(dates, values)
    } else {
        MarketSeries::from_returns(dates, values)
    }
}

pub fn write_market_returns<W: Write>(out: W, market: &MarketSeries) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "return"])?;
    for (d, r) in market.dates.iter().zip(&market.returns) {
        w.write_record([d.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Prior-day indicators keyed by the day they apply to.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IndicatorSeries {
    pub by_date: BTreeMap<NaiveDate, Indicator>,
    /// Market days without a preceding return.
    pub dropped: Vec<NaiveDate>,
}

impl IndicatorSeries {
    /// The trading calendar: days that carry an indicator.
    pub fn trading_days(&self) -> Vec<NaiveDate> {
        self.by_date.keys().copied().collect()
    }
}

/// Pairs market day `t` with the sign of the return on market day `t-1`.
pub fn build_indicator_series(market: &MarketSeries) -> IndicatorSeries {
    let mut series = IndicatorSeries::default();
    if let Some(first) = market.dates.first() {
        tracing::warn!(date = %first, "no prior-day market return; dropping first day");
        series.dropped.push(*first);
    }
    for (i, d) in market.dates.iter().enumerate().skip(1) {
        series.by_date.insert(*d, market.indicators[i - 1]);
    }
    series
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExclusionReason {
    MissingMetadata,
    NonEquity,
    /// First trading day lacking at least one buy and one sell.
    InactiveDay(NaiveDate),
}

impl std::fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExclusionReason::MissingMetadata => f.write_str("missing metadata"),
            ExclusionReason::NonEquity => f.write_str("not an equity"),
            ExclusionReason::InactiveDay(d) => write!(f, "no buy and sell on {d}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub assets_before: usize,
    pub assets_after: usize,
    pub trades_before: u64,
    pub trades_after: u64,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Keeps equities with at least one buy and one sell on every trading day.
pub fn filter_universe(panel: &AssetDayPanel, trading_days: &[NaiveDate]) -> AssetDayPanel {
    filter_universe_with_report(panel, trading_days).0
}

pub fn filter_universe_with_report(panel: &AssetDayPanel, trading_days: &[NaiveDate]) -> (AssetDayPanel, FilterReport) {
    let mut kept = AssetDayPanel {
        counts: BTreeMap::new(),
        metadata: BTreeMap::new(),
    };
    let mut excluded = Vec::new();
    for (asset, days) in &panel.counts {
        let reason = match panel.metadata.get(asset) {
            None => Some(ExclusionReason::MissingMetadata),
            Some(m) if !m.is_equity => Some(ExclusionReason::NonEquity),
            Some(_) => trading_days
                .iter()
                .find(|d| !matches!(days.get(d), Some(c) if c.buys >= 1 && c.sells >= 1))
                .map(|d| ExclusionReason::InactiveDay(*d)),
        };
        match reason {
            Some(r) => excluded.push((asset.clone(), r)),
            None => {
                kept.counts.insert(asset.clone(), days.clone());
                kept.metadata.insert(asset.clone(), panel.metadata[asset]);
            }
        }
    }
    let report = FilterReport {
        assets_before: panel.counts.len(),
        assets_after: kept.counts.len(),
        trades_before: panel.total_trades(),
        trades_after: kept.total_trades(),
        excluded,
    };
    (kept, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodScheme {
    Quarterly,
    Monthly,
}

impl PeriodScheme {
    pub fn label(self, date: NaiveDate) -> String {
        match self {
            PeriodScheme::Quarterly => format!("{}-Q{}", date.year(), (date.month() - 1) / 3 + 1),
            PeriodScheme::Monthly => format!("{}-{:02}", date.year(), date.month()),
        }
    }
}

impl std::str::FromStr for PeriodScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "quarterly" => Ok(PeriodScheme::Quarterly),
            "monthly" => Ok(PeriodScheme::Monthly),
            other => Err(format!("unknown period scheme `{other}` (expected quarterly or monthly)")),
        }
    }
}

/// Calendar quarter (1-4) of a period label produced by [`PeriodScheme::label`].
pub fn quarter_of_label(label: &str) -> Option<u32> {
    let (_, rest) = label.split_once('-')?;
    if let Some(q) = rest.strip_prefix('Q') {
        return q.parse().ok().filter(|q| (1..=4).contains(q));
    }
    let m: u32 = rest.parse().ok()?;
    (1..=12).contains(&m).then(|| (m - 1) / 3 + 1)
}

/// One window per asset per calendar period over days that carry an indicator.
/// Windows are ordered by asset, then period.
pub fn partition_periods(
    panel: &AssetDayPanel,
    indicators: &BTreeMap<NaiveDate, Indicator>,
    scheme: PeriodScheme,
) -> Vec<EstimationWindow> {
    let mut out = Vec::new();
    for (asset, days) in &panel.counts {
        let mut periods: BTreeMap<String, Vec<DailyCounts>> = BTreeMap::new();
        for (date, c) in days {
            if let Some(&ind) = indicators.get(date) {
                periods
                    .entry(scheme.label(*date))
                    .or_default()
                    .push(DailyCounts::new(c.buys, c.sells, ind));
            }
        }
        for (label, days) in periods {
            out.push(EstimationWindow {
                asset_id: asset.clone(),
                period_label: label,
                days,
            });
        }
    }
    out
}

/// Writes the filtered panel restricted to days that carry an indicator.
pub fn write_panel<W: Write>(
    out: W,
    panel: &AssetDayPanel,
    indicators: &BTreeMap<NaiveDate, Indicator>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PANEL_HEADER.split(','))?;
    for (asset, days) in &panel.counts {
        for (date, c) in days {
            if let Some(ind) = indicators.get(date) {
                w.write_record([
                    asset.clone(),
                    date.to_string(),
                    c.buys.to_string(),
                    c.sells.to_string(),
                    ind.sign().to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a panel file back into counts and the indicator calendar.
pub fn read_panel<R: Read>(
    input: R,
    format: &DelimitedFormat,
) -> Result<(AssetDayPanel, BTreeMap<NaiveDate, Indicator>), IngestError> {
    let expected: Vec<&str> = PANEL_HEADER.split(',').collect();
    let rows = read_rows(input, format, &expected)?;
    let mut panel = AssetDayPanel::default();
    let mut indicators = BTreeMap::new();
    for (line, rec) in &rows.rows {
        let line = *line;
        let ticker = field(rec, 0, "ticker", line)?.to_string();
        let date = parse_date(field(rec, 1, "date", line)?, "date", line)?;
        let buys = parse_u64(field(rec, 2, "buys", line)?, "buys", line)?;
        let sells = parse_u64(field(rec, 3, "sells", line)?, "sells", line)?;
        let raw = field(rec, 4, "indicator", line)?;
        let ind = raw
            .parse::<i64>()
            .ok()
            .and_then(|v| Indicator::try_from(v).ok())
            .ok_or_else(|| row_err(line, "indicator", format!("`{raw}` is not +1 or -1")))?;
        if let Some(prev) = indicators.insert(date, ind) {
            if prev != ind {
                return Err(row_err(line, "indicator", format!("conflicting indicators on {date}")));
            }
        }
        panel.counts.entry(ticker).or_default().insert(date, DayCount { buys, sells });
    }
    Ok((panel, indicators))
}

/// Tickers of assets whose metadata is absent, for join diagnostics.
pub fn missing_metadata<'a>(assets: impl IntoIterator<Item = &'a str>, metadata: &BTreeMap<String, AssetMetadata>) -> BTreeSet<String> {
    assets
        .into_iter()
        .filter(|a| !metadata.contains_key(*a))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn trade(ts: &str, asset: &str, price: f64, side: Side) -> TradeRecord {
        TradeRecord {
            timestamp: NaiveDateTime::parse_from_str(ts, "%Y-%m-%dT%H:%M:%S").unwrap(),
            asset_id: asset.into(),
            price,
            quantity: 1,
            side,
        }
    }

    #[test]
    fn empty_trades_file_with_header() {
        let t = parse_trades(format!("{TRADES_HEADER}\n").as_bytes(), &DelimitedFormat::default()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn parses_well_formed_rows() {
        let text = format!(
            "{TRADES_HEADER}\n2008-01-02T09:00:01,OTP,7450.5,10,B\n2008-01-02T09:00:02,OTP,7451,3,S\n2008-01-02T10:15:00+01:00,MOL,20000,1,U\n"
        );
        let t = parse_trades(text.as_bytes(), &DelimitedFormat::default()).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].asset_id, "OTP");
        assert_eq!(t[0].price, 7450.5);
        assert_eq!(t[1].quantity, 3);
        assert_eq!(t[1].side, Side::Sell);
        assert_eq!(t[2].side, Side::Unknown);
        assert_eq!(t[2].timestamp.date(), date("2008-01-02"));
        let mut buf = Vec::new();
        write_trades(&mut buf, &t).unwrap();
        assert_eq!(parse_trades(&buf[..], &DelimitedFormat::default()).unwrap(), t);
    }

    #[test]
    fn negative_price_is_line_addressed() {
        let text = format!("{TRADES_HEADER}\n2008-01-02T09:00:01,OTP,1,1,B\n2008-01-02T09:00:02,OTP,-3,1,S\n");
        match parse_trades(text.as_bytes(), &DelimitedFormat::default()) {
            Err(IngestError::Row { line, field, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(field, "price");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_and_side_rejected() {
        assert!(matches!(
            parse_trades("time,ticker,price,quantity,side\n".as_bytes(), &DelimitedFormat::default()),
            Err(IngestError::Header { .. })
        ));
        let text = format!("{TRADES_HEADER}\n2008-01-02T09:00:01,OTP,1,1,X\n");
        assert!(matches!(
            parse_trades(text.as_bytes(), &DelimitedFormat::default()),
            Err(IngestError::Row { line: 2, .. })
        ));
    }

    #[test]
    fn semicolon_delimiter() {
        let text = "timestamp;ticker;price;quantity;side\n2008-01-02 09:00:01;OTP;1.5;2;B\n";
        let t = parse_trades(text.as_bytes(), &DelimitedFormat { delimiter: b';' }).unwrap();
        assert_eq!(t[0].price, 1.5);
    }

    #[test]
    fn tick_test_trace() {
        let trades: Vec<_> = [100.0, 101.0, 101.0, 99.0]
            .iter()
            .enumerate()
            .map(|(i, &p)| trade(&format!("2008-01-02T09:00:0{i}"), "A", p, Side::Unknown))
            .collect();
        let signed = classify_trade_signs(&trades, SignMethod::TickTest).unwrap();
        let sides: Vec<Side> = signed.iter().map(|t| t.side).collect();
        assert_eq!(sides, vec![Side::Buy, Side::Buy, Side::Buy, Side::Sell]);

        let single = classify_trade_signs(&trades[..1], SignMethod::TickTest).unwrap();
        assert_eq!(single[0].side, Side::Buy);
    }

    #[test]
    fn tick_test_is_per_asset() {
        let trades = vec![
            trade("2008-01-02T09:00:00", "A", 100.0, Side::Unknown),
            trade("2008-01-02T09:00:01", "B", 50.0, Side::Unknown),
            trade("2008-01-02T09:00:02", "A", 99.0, Side::Unknown),
            trade("2008-01-02T09:00:03", "B", 50.0, Side::Unknown),
        ];
        let s = classify_trade_signs(&trades, SignMethod::TickTest).unwrap();
        let sides: Vec<Side> = s.iter().map(|t| t.side).collect();
        assert_eq!(sides, vec![Side::Buy, Side::Buy, Side::Sell, Side::Buy]);
    }

    #[test]
    fn pre_signed_pass_through_and_unknowns() {
        let trades = vec![
            trade("2008-01-02T09:00:00", "A", 100.0, Side::Sell),
            trade("2008-01-02T09:00:01", "A", 101.0, Side::Buy),
        ];
        assert_eq!(classify_trade_signs(&trades, SignMethod::PreSigned).unwrap(), trades);
        let mut bad = trades.clone();
        bad.push(trade("2008-01-02T09:00:02", "A", 101.0, Side::Unknown));
        match classify_trade_signs(&bad, SignMethod::PreSigned) {
            Err(IngestError::UnknownSides(rows)) => assert_eq!(rows, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn aggregation_counts_transactions_by_day() {
        let mut trades = vec![
            trade("2008-01-02T09:00:00", "A", 100.0, Side::Buy),
            trade("2008-01-02T09:30:00", "A", 100.0, Side::Buy),
            trade("2008-01-02T23:59:59", "A", 100.0, Side::Sell),
            trade("2008-01-03T00:00:00", "A", 100.0, Side::Sell),
        ];
        trades[1].quantity = 1_000_000;
        let p = aggregate_daily(&trades).unwrap();
        let a = &p.counts["A"];
        assert_eq!(a[&date("2008-01-02")], DayCount { buys: 2, sells: 1 });
        assert_eq!(a[&date("2008-01-03")], DayCount { buys: 0, sells: 1 });
    }

    #[test]
    fn indicator_alignment() {
        let m = MarketSeries::from_returns(
            vec![date("2008-01-02"), date("2008-01-03"), date("2008-01-04")],
            vec![-0.02, 0.01, 0.0],
        )
        .unwrap();
        let s = build_indicator_series(&m);
        assert_eq!(s.dropped, vec![date("2008-01-02")]);
        assert_eq!(s.by_date[&date("2008-01-03")], Indicator::Down);
        assert_eq!(s.by_date[&date("2008-01-04")], Indicator::Up);
        assert_eq!(s.by_date.len(), 2);
        assert_eq!(Indicator::from_return(0.0), Indicator::Up);
    }

    #[test]
    fn market_file_variants() {
        let r = parse_market("date,return\n2008-01-02,0.01\n2008-01-03,-0.02\n".as_bytes(), &DelimitedFormat::default())
            .unwrap();
        assert_eq!(r.indicators, vec![Indicator::Up, Indicator::Down]);
        let c = parse_market("date,close\n2008-01-02,100\n2008-01-03,99\n2008-01-04,99\n".as_bytes(), &DelimitedFormat::default())
            .unwrap();
        assert_eq!(c.dates, vec![date("2008-01-03"), date("2008-01-04")]);
        assert!((c.returns[0] + 0.01).abs() < 1e-15);
        assert_eq!(c.indicators, vec![Indicator::Down, Indicator::Up]);
        assert!(matches!(
            parse_market("date,return\n2008-01-03,0.01\n2008-01-02,0.01\n".as_bytes(), &DelimitedFormat::default()),
            Err(IngestError::UnorderedDates(_))
        ));
    }

    fn meta(is_equity: bool) -> AssetMetadata {
        AssetMetadata {
            market_cap: 1e9,
            mean_daily_volume: 100.0,
            is_equity,
        }
    }

    fn full_days(days: &[NaiveDate]) -> BTreeMap<NaiveDate, DayCount> {
        days.iter().map(|d| (*d, DayCount { buys: 3, sells: 2 })).collect()
    }

    #[test]
    fn universe_filter_rules() {
        let cal = vec![date("2008-01-02"), date("2008-01-03"), date("2008-01-04")];
        let mut panel = AssetDayPanel::default();
        panel.counts.insert("GOOD".into(), full_days(&cal));
        panel.counts.insert("FUND".into(), full_days(&cal));
        let mut gap = full_days(&cal);
        gap.insert(cal[1], DayCount { buys: 4, sells: 0 });
        panel.counts.insert("GAP".into(), gap);
        panel.counts.insert("ORPHAN".into(), full_days(&cal));
        panel.metadata.insert("GOOD".into(), meta(true));
        panel.metadata.insert("FUND".into(), meta(false));
        panel.metadata.insert("GAP".into(), meta(true));

        let (kept, report) = filter_universe_with_report(&panel, &cal);
        assert_eq!(kept.counts.keys().collect::<Vec<_>>(), vec!["GOOD"]);
        assert_eq!(kept.counts["GOOD"], panel.counts["GOOD"]);
        assert_eq!(report.assets_before, 4);
        assert_eq!(report.assets_after, 1);
        assert_eq!(report.trades_after, 15);
        assert!(report.excluded.contains(&("GAP".into(), ExclusionReason::InactiveDay(cal[1]))));
        assert!(report.excluded.contains(&("FUND".into(), ExclusionReason::NonEquity)));
        assert!(report.excluded.contains(&("ORPHAN".into(), ExclusionReason::MissingMetadata)));
        assert_eq!(filter_universe(&kept, &cal), kept);
    }

    #[test]
    fn partitions_by_quarter_and_month() {
        let days: Vec<NaiveDate> = date("2008-01-01")
            .iter_days()
            .take_while(|d| d.year() == 2008)
            .collect();
        let indicators: BTreeMap<_, _> = days.iter().map(|d| (*d, Indicator::Up)).collect();
        let mut panel = AssetDayPanel::default();
        panel.counts.insert("A".into(), full_days(&days));
        panel.counts.insert("B".into(), full_days(&days));
        let q = partition_periods(&panel, &indicators, PeriodScheme::Quarterly);
        assert_eq!(q.len(), 8);
        assert_eq!(q[3].period_label, "2008-Q4");
        assert_eq!(q.iter().filter(|w| w.asset_id == "A").map(|w| w.len()).sum::<usize>(), 366);
        let m = partition_periods(&panel, &indicators, PeriodScheme::Monthly);
        assert_eq!(m.len(), 24);
        assert_eq!(m[8].period_label, "2008-09");

        let mut one = AssetDayPanel::default();
        one.counts.insert("A".into(), full_days(&days[..60]));
        assert_eq!(partition_periods(&one, &indicators, PeriodScheme::Quarterly).len(), 1);
    }

    #[test]
    fn quarter_labels() {
        assert_eq!(quarter_of_label("2008-Q4"), Some(4));
        assert_eq!(quarter_of_label("2008-09"), Some(3));
        assert_eq!(quarter_of_label("2008-10"), Some(4));
        assert_eq!(quarter_of_label("junk"), None);
        assert_eq!("Monthly".parse::<PeriodScheme>().unwrap(), PeriodScheme::Monthly);
        assert!("weekly".parse::<PeriodScheme>().is_err());
    }

    #[test]
    fn panel_file_round_trip() {
        let cal = vec![date("2008-01-02"), date("2008-01-03")];
        let ind: BTreeMap<_, _> = [(cal[0], Indicator::Down), (cal[1], Indicator::Up)].into_iter().collect();
        let mut panel = AssetDayPanel::default();
        panel.counts.insert("A".into(), full_days(&cal));
        let mut buf = Vec::new();
        write_panel(&mut buf, &panel, &ind).unwrap();
        let (p2, ind2) = read_panel(&buf[..], &DelimitedFormat::default()).unwrap();
        assert_eq!(p2.counts, panel.counts);
        assert_eq!(ind2, ind);
    }

    #[test]
    fn metadata_parse() {
        let text = format!("{METADATA_HEADER}\nOTP,2480000000000,95000,true\nETF,100,1,0\n");
        let m = parse_metadata(text.as_bytes(), &DelimitedFormat::default()).unwrap();
        assert!(m["OTP"].is_equity);
        assert!(!m["ETF"].is_equity);
        let dup = format!("{METADATA_HEADER}\nA,1,1,true\nA,1,1,true\n");
        assert!(parse_metadata(dup.as_bytes(), &DelimitedFormat::default()).is_err());
    }
}
