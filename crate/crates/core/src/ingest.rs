//! Price-file parsing, calendar alignment, and log returns.
//!
//! A panel of markets rarely shares one trading calendar: holidays differ per
//! exchange. Everything downstream therefore works on *aligned* pairs, the
//! sorted intersection of two date sets. Missing rows are dropped, never
//! interpolated, so no fabricated return can leak into the symbol
//! distribution.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::error::{Error, Result};

/// Which column of a Yahoo-style OHLC file carries the price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceColumn {
    #[default]
    Close,
    AdjClose,
}

impl PriceColumn {
    fn header_name(self) -> &'static str {
        match self {
            PriceColumn::Close => "Close",
            PriceColumn::AdjClose => "Adj Close",
        }
    }
}

/// Supported on-disk price file layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceFormat {
    /// Header `Date,Open,High,Low,Close,Adj Close,Volume`.
    YahooOhlc(PriceColumn),
    /// Header `date,close`.
    TwoColumn,
}

const YAHOO_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];
const TWO_COLUMN_HEADER: [&str; 2] = ["date", "close"];

/// Dated close-price sequence for one market symbol.
///
/// Invariants enforced on construction: dates strictly increasing, all
/// prices strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    observations: Vec<(NaiveDate, f64)>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, observations: Vec<(NaiveDate, f64)>) -> Result<Self> {
        for window in observations.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(Error::InvalidData(format!(
                    "dates not strictly increasing: {} then {}",
                    window[0].0, window[1].0
                )));
            }
        }
        if let Some((date, close)) = observations.iter().find(|(_, c)| !(*c > 0.0)) {
            return Err(Error::InvalidData(format!(
                "non-positive close {close} on {date}"
            )));
        }
        Ok(Self {
            symbol: symbol.into(),
            observations,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn with_symbol(mut self, symbol: impl Into<String>) -> Self {
        self.symbol = symbol.into();
        self
    }

    pub fn observations(&self) -> &[(NaiveDate, f64)] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Serialize as a `date,close` file. Prices use shortest round-trip
    /// formatting, so parse → write is a fixpoint on files we produced.
    pub fn write_two_column<W: Write>(&self, mut w: W) -> Result<W> {
        let io_err = |source| Error::Io {
            path: PathBuf::from("<writer>"),
            source,
        };
        writeln!(w, "date,close").map_err(io_err)?;
        for (date, close) in &self.observations {
            writeln!(w, "{},{:?}", date.format("%Y-%m-%d"), close).map_err(io_err)?;
        }
        Ok(w)
    }
}

/// Dimensionless log-return samples, each stamped with the *later* of the
/// two trading days it spans.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    symbol: String,
    samples: Vec<(NaiveDate, f64)>,
}

impl ReturnSeries {
    pub fn new(symbol: impl Into<String>, samples: Vec<(NaiveDate, f64)>) -> Self {
        Self {
            symbol: symbol.into(),
            samples,
        }
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn samples(&self) -> &[(NaiveDate, f64)] {
        &self.samples
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|(_, v)| *v).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.samples.iter().map(|(d, _)| *d).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Two return series restricted to their common calendar.
#[derive(Debug, Clone)]
pub struct AlignedPair {
    pub left: ReturnSeries,
    pub right: ReturnSeries,
}

impl AlignedPair {
    pub fn dates(&self) -> Vec<NaiveDate> {
        self.left.dates()
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }
}

/// How a panel's differing trading calendars are reconciled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignMode {
    /// Each ordered pair keeps every date the two series share.
    #[default]
    PairwiseIntersection,
    /// All series are first cut down to the dates shared by the whole panel.
    GlobalIntersection,
}

/// A parse result: the series plus how many rows were dropped for a
/// missing/null price.
#[derive(Debug, Clone)]
pub struct ParsedPrices {
    pub series: PriceSeries,
    pub dropped_rows: usize,
}

/// Parse one price file. The symbol defaults to the file stem.
pub fn parse_price_csv(path: &Path, format: PriceFormat) -> Result<ParsedPrices> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    parse_price_reader(BufReader::new(file), format, &symbol, path)
}

/// Parse price rows from any reader. Errors carry `path` and a 1-based line
/// number.
pub fn parse_price_reader<R: Read>(
    reader: R,
    format: PriceFormat,
    symbol: &str,
    path: &Path,
) -> Result<ParsedPrices> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?
        .clone();
    let expected: &[&str] = match format {
        PriceFormat::YahooOhlc(_) => &YAHOO_HEADER,
        PriceFormat::TwoColumn => &TWO_COLUMN_HEADER,
    };
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got.len() != expected.len()
        || !got
            .iter()
            .zip(expected)
            .all(|(g, e)| g.eq_ignore_ascii_case(e))
    {
        return Err(parse_err(
            1,
            format!(
                "header {:?} does not match expected {:?}",
                got.join(","),
                expected.join(",")
            ),
        ));
    }
    let price_idx = match format {
        PriceFormat::TwoColumn => 1,
        PriceFormat::YahooOhlc(column) => expected
            .iter()
            .position(|h| *h == column.header_name())
            .expect("column is part of the fixed header"),
    };

    let mut observations: Vec<(NaiveDate, f64)> = Vec::new();
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, format!("unparseable row: {e}"))
        })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(observations.len() + 2);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }

        let date_field = record
            .get(0)
            .ok_or_else(|| parse_err(line, "missing date field".into()))?
            .trim();
        let date = parse_date(date_field)
            .ok_or_else(|| parse_err(line, format!("unparseable date {date_field:?}")))?;

        let price_field = record
            .get(price_idx)
            .map(str::trim)
            .unwrap_or("");
        if price_field.is_empty() || price_field.eq_ignore_ascii_case("null") {
            dropped += 1;
            continue;
        }
        let close: f64 = price_field
            .parse()
            .map_err(|_| parse_err(line, format!("unparseable price {price_field:?}")))?;
        if !(close > 0.0) {
            return Err(parse_err(line, format!("non-positive price {close}")));
        }

        if let Some((prev_date, _)) = observations.last() {
            if date == *prev_date {
                return Err(parse_err(line, format!("duplicate date {date}")));
            }
            if date < *prev_date {
                return Err(parse_err(
                    line,
                    format!("date {date} out of order (previous {prev_date})"),
                ));
            }
        }
        observations.push((date, close));
    }

    Ok(ParsedPrices {
        series: PriceSeries::new(symbol, observations)?,
        dropped_rows: dropped,
    })
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

/// Log returns `ln(close[n+1] / close[n])`, stamped with the later date.
pub fn log_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::InvalidData(format!(
            "series {} has {} observation(s); need at least 2 for returns",
            prices.symbol(),
            prices.len()
        )));
    }
    let samples = prices
        .observations
        .windows(2)
        .map(|w| (w[1].0, (w[1].1 / w[0].1).ln()))
        .collect();
    Ok(ReturnSeries::new(prices.symbol.clone(), samples))
}

/// Restrict two return series to their common dates (sorted intersection).
pub fn align(a: &ReturnSeries, b: &ReturnSeries) -> Result<AlignedPair> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidData(format!(
            "cannot align {} and {}: empty series",
            a.symbol(),
            b.symbol()
        )));
    }
    try_align(a, b).ok_or_else(|| {
        Error::InvalidData(format!(
            "no common dates between {} and {}",
            a.symbol(),
            b.symbol()
        ))
    })
}

/// Like [`align`], but an empty intersection is `None` instead of an error;
/// panel builders treat such pairs as missing rather than fatal.
pub fn try_align(a: &ReturnSeries, b: &ReturnSeries) -> Option<AlignedPair> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        let (da, va) = a.samples[i];
        let (db, vb) = b.samples[j];
        match da.cmp(&db) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                left.push((da, va));
                right.push((db, vb));
                i += 1;
                j += 1;
            }
        }
    }
    if left.is_empty() {
        return None;
    }
    Some(AlignedPair {
        left: ReturnSeries::new(a.symbol.clone(), left),
        right: ReturnSeries::new(b.symbol.clone(), right),
    })
}

/// Cut every series down to the dates shared by the entire panel.
pub fn align_global(panel: &[ReturnSeries]) -> Result<Vec<ReturnSeries>> {
    if panel.is_empty() {
        return Err(Error::InvalidData("empty panel".into()));
    }
    let mut common: BTreeSet<NaiveDate> = panel[0].dates().into_iter().collect();
    for series in &panel[1..] {
        let dates: BTreeSet<NaiveDate> = series.dates().into_iter().collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::InvalidData(
            "no date shared by every series in the panel".into(),
        ));
    }
    Ok(panel
        .iter()
        .map(|s| {
            let samples = s
                .samples
                .iter()
                .filter(|(d, _)| common.contains(d))
                .copied()
                .collect();
            ReturnSeries::new(s.symbol.clone(), samples)
        })
        .collect())
}

/// One market in a panel manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub symbol: String,
    /// Resolved against the manifest file's directory when relative.
    pub path: PathBuf,
    pub region: String,
}

/// Panel roster: `symbol,path,region` rows, `#` comments allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(BufReader::new(file), base, path)
}

pub fn parse_manifest<R: Read>(reader: R, base: &Path, path: &Path) -> Result<Manifest> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, format!("bad header: {e}")))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    if headers != ["symbol", "path", "region"] {
        return Err(parse_err(
            1,
            format!("manifest header must be symbol,path,region; got {headers:?}"),
        ));
    }
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, format!("unparseable row: {e}"))
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, got {}", record.len())));
        }
        let raw = PathBuf::from(&record[1]);
        let resolved = if raw.is_absolute() { raw } else { base.join(raw) };
        entries.push(ManifestEntry {
            symbol: record[0].to_string(),
            path: resolved,
            region: record[2].to_string(),
        });
    }
    if entries.is_empty() {
        return Err(parse_err(1, "manifest lists no markets".into()));
    }
    Ok(Manifest { entries })
}
