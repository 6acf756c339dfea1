//! Daily OHLC price series: loading, validation, and the rolling-window
//! opening-price features used by the trading environment.

use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PRICE_CSV_HEADER: [&str; 7] = ["Date", "Open", "High", "Low", "Close", "Adj Close", "Volume"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    /// Loaded for completeness; the environment trades on `open` only.
    pub adj_close: f64,
    pub volume: u64,
}

impl PriceBar {
    pub fn validate(&self) -> Result<(), String> {
        let prices = [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
            ("adj close", self.adj_close),
        ];
        for (name, value) in prices {
            if !value.is_finite() || value <= 0.0 {
                return Err(format!("{name} price must be positive and finite, got {value}"));
            }
        }
        if self.high < self.low {
            return Err(format!("high {} is below low {}", self.high, self.low));
        }
        if self.open < self.low || self.open > self.high {
            return Err(format!("open {} outside [low {}, high {}]", self.open, self.low, self.high));
        }
        if self.close < self.low || self.close > self.high {
            return Err(format!("close {} outside [low {}, high {}]", self.close, self.low, self.high));
        }
        Ok(())
    }
}

/// A validated, strictly date-ordered, non-empty run of daily bars for one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    bars: Vec<PriceBar>,
}

impl PriceSeries {
    pub fn new(symbol: impl Into<String>, bars: Vec<PriceBar>) -> Result<Self> {
        if bars.is_empty() {
            return Err(Error::EmptySeries);
        }
        for bar in &bars {
            bar.validate()
                .map_err(|msg| Error::Integrity(format!("{}: {msg}", bar.date)))?;
        }
        for pair in bars.windows(2) {
            if pair[1].date <= pair[0].date {
                return Err(Error::Integrity(format!(
                    "dates must be strictly increasing: {} follows {}",
                    pair[1].date, pair[0].date
                )));
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            bars,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[PriceBar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.bars[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.bars[self.bars.len() - 1].date
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.bars.binary_search_by_key(&date, |b| b.date).ok()
    }

    fn require_index(&self, date: NaiveDate) -> Result<usize> {
        self.index_of(date)
            .ok_or_else(|| Error::Lookup(format!("{date} is not a trading date of {}", self.symbol)))
    }

    pub fn open(&self, date: NaiveDate) -> Result<f64> {
        Ok(self.bars[self.require_index(date)?].open)
    }

    pub fn open_at(&self, index: usize) -> f64 {
        self.bars[index].open
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.bars[index].date
    }

    /// `open(date)` minus the mean open of the `window` trading days strictly
    /// before `date`.
    pub fn rolling_open_diff(&self, date: NaiveDate, window: usize) -> Result<f64> {
        let index = self.require_index(date)?;
        self.rolling_open_diff_at(index, window)
    }

    pub fn rolling_open_diff_at(&self, index: usize, window: usize) -> Result<f64> {
        if window == 0 {
            return Err(Error::Argument("window must be positive".into()));
        }
        if index >= self.bars.len() {
            return Err(Error::Lookup(format!("bar index {index} out of range")));
        }
        if index < window {
            return Err(Error::WarmUp {
                date: self.bars[index].date,
                needed: window,
                available: index,
            });
        }
        let sum: f64 = self.bars[index - window..index].iter().map(|b| b.open).sum();
        Ok(self.bars[index].open - sum / window as f64)
    }

    /// Indices of the bars whose dates fall in the closed interval `[start, end]`.
    pub fn index_range(&self, start: NaiveDate, end: NaiveDate) -> Result<Range<usize>> {
        if start > end {
            return Err(Error::Argument(format!("start {start} is after end {end}")));
        }
        let lo = self.bars.partition_point(|b| b.date < start);
        let hi = self.bars.partition_point(|b| b.date <= end);
        Ok(lo..hi)
    }

    pub fn trading_dates(&self, start: NaiveDate, end: NaiveDate) -> Result<Vec<NaiveDate>> {
        let range = self.index_range(start, end)?;
        Ok(self.bars[range].iter().map(|b| b.date).collect())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Integrity(format!("csv write failed: {e}"));
        out.write_record(PRICE_CSV_HEADER).map_err(to_err)?;
        for bar in &self.bars {
            out.write_record([
                bar.date.format("%Y-%m-%d").to_string(),
                bar.open.to_string(),
                bar.high.to_string(),
                bar.low.to_string(),
                bar.close.to_string(),
                bar.adj_close.to_string(),
                bar.volume.to_string(),
            ])
            .map_err(to_err)?;
        }
        out.flush().map_err(|e| Error::Integrity(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

pub fn load_price_series(path: impl AsRef<Path>, symbol: &str) -> Result<PriceSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_price_series(file, symbol, &path.display().to_string())
}

/// Parses the Yahoo-style price CSV. `source_name` only labels diagnostics.
pub fn read_price_series<R: Read>(reader: R, symbol: &str, source_name: &str) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(Error::EmptySeries),
        Some(rec) => rec.map_err(|e| csv_error(source_name, e))?,
    };
    // A UTF-8 byte-order mark would otherwise glue itself to "Date".
    let header_fields: Vec<&str> = header.iter().map(|f| f.trim_start_matches('\u{feff}')).collect();
    if header_fields != PRICE_CSV_HEADER {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header `{}`, found `{}`", PRICE_CSV_HEADER.join(","), header_fields.join(",")),
        ));
    }

    let mut bars: Vec<PriceBar> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(source_name, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != PRICE_CSV_HEADER.len() {
            return Err(Error::parse(
                source_name,
                line,
                format!("expected {} fields, found {}", PRICE_CSV_HEADER.len(), rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::parse(source_name, line, format!("bad date `{}`: {e}", &rec[0])))?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| {
                Error::parse(source_name, line, format!("bad {} value `{}`", PRICE_CSV_HEADER[i], &rec[i]))
            })
        };
        let volume = rec[6]
            .parse::<u64>()
            .map_err(|_| Error::parse(source_name, line, format!("bad Volume value `{}`", &rec[6])))?;
        let bar = PriceBar {
            date,
            open: num(1)?,
            high: num(2)?,
            low: num(3)?,
            close: num(4)?,
            adj_close: num(5)?,
            volume,
        };
        bar.validate().map_err(|msg| Error::parse(source_name, line, msg))?;
        if let Some(prev) = bars.last() {
            if bar.date <= prev.date {
                return Err(Error::Integrity(format!(
                    "{source_name}:{line}: date {} is not after previous date {}",
                    bar.date, prev.date
                )));
            }
        }
        bars.push(bar);
    }
    PriceSeries::new(symbol, bars)
}

fn csv_error(source_name: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(source_name, line, e.to_string())
}
