//! Daily close prices and market capitalizations, aligned into a gap-free panel.
//!
//! Missing observations stay missing: nothing is forward-filled here. Coins
//! with holes are dropped later, at portfolio selection.

mod csv_io;
mod remote;
mod validate;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{parse_csv, read_csv, write_csv, write_csv_to, CSV_HEADER};
pub use remote::{fetch_remote, HttpSource, MarketDataSource, RateLimiter, RemoteConfig};
pub use validate::{validate_panel, CoinCoverage, ValidationReport};

/// One observation for one coin on one UTC calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRecord {
    pub coin_id: String,
    pub date: NaiveDate,
    pub close: f64,
    /// `None` when the source reported a price but no capitalization.
    pub market_cap: Option<f64>,
}

impl PriceRecord {
    pub(crate) fn check(&self, line: u64) -> Result<()> {
        if !(self.close.is_finite() && self.close > 0.0) {
            return Err(Error::NonPositiveClose {
                line,
                coin_id: self.coin_id.clone(),
                date: self.date,
                close: self.close,
            });
        }
        if let Some(cap) = self.market_cap {
            if !(cap.is_finite() && cap >= 0.0) {
                return Err(Error::NegativeMarketCap {
                    line,
                    coin_id: self.coin_id.clone(),
                    date: self.date,
                    market_cap: cap,
                });
            }
        }
        Ok(())
    }
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidParameter(format!(
                "date range ends ({end}) before it starts ({start})"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        self.start.iter_days().take_while(|d| *d <= self.end).collect()
    }
}

/// Coins × days panel of closes and market caps with explicit missing cells.
///
/// Coins are kept in lexicographic order and dates form a contiguous run of
/// calendar days.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PricePanel {
    coins: Vec<String>,
    dates: Vec<NaiveDate>,
    close: Vec<Option<f64>>,
    market_cap: Vec<Option<f64>>,
}

impl PricePanel {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Assembles a panel spanning the min..=max date of `records`.
    ///
    /// Each record is paired with the line it came from, used for error
    /// reporting (pass 0 when there is no meaningful line).
    pub fn from_records<I>(records: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, PriceRecord)>,
    {
        let mut seen = HashSet::new();
        let mut by_coin: BTreeMap<String, Vec<PriceRecord>> = BTreeMap::new();
        for (line, record) in records {
            record.check(line)?;
            if !seen.insert((record.coin_id.clone(), record.date)) {
                return Err(Error::DuplicateRecord {
                    line,
                    coin_id: record.coin_id,
                    date: record.date,
                });
            }
            by_coin.entry(record.coin_id.clone()).or_default().push(record);
        }
        let span = by_coin
            .values()
            .flatten()
            .map(|r| r.date)
            .fold(None, |acc: Option<(NaiveDate, NaiveDate)>, d| match acc {
                None => Some((d, d)),
                Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
            });
        let Some((first, last)) = span else {
            return Ok(Self::empty());
        };
        let dates = DateRange { start: first, end: last }.days();
        let n_dates = dates.len();
        let coins: Vec<String> = by_coin.keys().cloned().collect();
        let mut close = vec![None; coins.len() * n_dates];
        let mut market_cap = vec![None; coins.len() * n_dates];
        for (row, records) in by_coin.values().enumerate() {
            for r in records {
                let col = (r.date - first).num_days() as usize;
                close[row * n_dates + col] = Some(r.close);
                market_cap[row * n_dates + col] = r.market_cap;
            }
        }
        Ok(Self {
            coins,
            dates,
            close,
            market_cap,
        })
    }

    pub fn coins(&self) -> &[String] {
        &self.coins
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_coins(&self) -> usize {
        self.coins.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coins.is_empty()
    }

    pub fn coin_index(&self, coin_id: &str) -> Option<usize> {
        self.coins.binary_search_by(|c| c.as_str().cmp(coin_id)).ok()
    }

    /// Column of `date`, if it lies inside the panel's span.
    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        let first = *self.dates.first()?;
        let offset = (date - first).num_days();
        (offset >= 0 && (offset as usize) < self.dates.len()).then_some(offset as usize)
    }

    pub fn close(&self, coin: usize, day: usize) -> Option<f64> {
        self.close[coin * self.dates.len() + day]
    }

    pub fn market_cap(&self, coin: usize, day: usize) -> Option<f64> {
        self.market_cap[coin * self.dates.len() + day]
    }

    pub fn close_row(&self, coin: usize) -> &[Option<f64>] {
        let n = self.dates.len();
        &self.close[coin * n..(coin + 1) * n]
    }

    pub fn market_cap_row(&self, coin: usize) -> &[Option<f64>] {
        let n = self.dates.len();
        &self.market_cap[coin * n..(coin + 1) * n]
    }

    /// Present observations in (date, coin) order.
    pub fn records(&self) -> Vec<PriceRecord> {
        let mut out = Vec::new();
        for (day, date) in self.dates.iter().enumerate() {
            for (coin, coin_id) in self.coins.iter().enumerate() {
                if let Some(close) = self.close(coin, day) {
                    out.push(PriceRecord {
                        coin_id: coin_id.clone(),
                        date: *date,
                        close,
                        market_cap: self.market_cap(coin, day),
                    });
                }
            }
        }
        out
    }

    /// Sub-panel restricted to `range`, keeping coins that have at least one
    /// observation inside it.
    pub fn restrict(&self, range: DateRange) -> Self {
        let records = self
            .records()
            .into_iter()
            .filter(|r| range.contains(r.date))
            .map(|r| (0, r));
        // Records from a valid panel cannot fail validation again.
        Self::from_records(records).expect("restriction of a valid panel")
    }

    /// Adds an empty row for each coin in `coin_ids` not already present.
    pub fn with_coins(mut self, coin_ids: &[String]) -> Self {
        let wanted: BTreeSet<&String> = coin_ids.iter().collect();
        if wanted.iter().all(|c| self.coin_index(c).is_some()) {
            return self;
        }
        let mut coins: Vec<String> = self.coins.to_vec();
        coins.extend(wanted.into_iter().cloned());
        coins.sort();
        coins.dedup();
        let n = self.dates.len();
        let mut close = vec![None; coins.len() * n];
        let mut market_cap = vec![None; coins.len() * n];
        for (row, coin) in coins.iter().enumerate() {
            if let Some(old) = self.coin_index(coin) {
                close[row * n..(row + 1) * n].copy_from_slice(self.close_row(old));
                market_cap[row * n..(row + 1) * n].copy_from_slice(self.market_cap_row(old));
            }
        }
        self.coins = coins;
        self.close = close;
        self.market_cap = market_cap;
        self
    }

    pub(crate) fn date_after(date: NaiveDate, days: u64) -> NaiveDate {
        date.checked_add_days(Days::new(days)).expect("date in range")
    }
}
