//! Log returns, trailing-window local normalization, disjoint epochs and
//! per-epoch top-K portfolios.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PricePanel;

/// Smallest trailing window that still yields a normalized value.
pub const MIN_NORMALIZATION_WINDOW: usize = 5;

/// Date-ordered values for one coin. Dates without a value are simply absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    pub coin_id: String,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
}

/// Locally normalized returns; same layout as [`ReturnSeries`].
pub type NormalizedReturnSeries = ReturnSeries;

impl ReturnSeries {
    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.dates.binary_search(&date).ok().map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values on every date of `days`, or `None` if any is missing.
    pub fn window(&self, days: &[NaiveDate]) -> Option<Vec<f64>> {
        let start = self.dates.binary_search(days.first()?).ok()?;
        let slice = self.dates.get(start..start + days.len())?;
        (slice == days).then(|| self.values[start..start + days.len()].to_vec())
    }
}

/// `ln S(t) − ln S(t−1)` for every day where both closes are present.
///
/// Computed as the log of the price ratio, which keeps the result exactly
/// unchanged when all closes are scaled by a power of two.
pub fn log_returns(panel: &PricePanel) -> Vec<ReturnSeries> {
    (0..panel.n_coins())
        .map(|coin| {
            let row = panel.close_row(coin);
            let mut dates = Vec::new();
            let mut values = Vec::new();
            for day in 1..row.len() {
                if let (Some(prev), Some(cur)) = (row[day - 1], row[day]) {
                    dates.push(panel.dates()[day]);
                    values.push((cur / prev).ln());
                }
            }
            ReturnSeries {
                coin_id: panel.coins()[coin].clone(),
                dates,
                values,
            }
        })
        .collect()
}

/// Standardizes each return by the mean and population standard deviation
/// of the trailing window of `n` calendar days ending at (and including) it.
///
/// Windows holding fewer than [`MIN_NORMALIZATION_WINDOW`] returns produce
/// no value.
pub fn local_normalize(series: &ReturnSeries, n: usize) -> Result<NormalizedReturnSeries> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "normalization window must be at least 2, got {n}"
        )));
    }
    let mut dates = Vec::with_capacity(series.len());
    let mut values = Vec::with_capacity(series.len());
    let mut lo = 0;
    for (i, &date) in series.dates.iter().enumerate() {
        while (date - series.dates[lo]).num_days() >= n as i64 {
            lo += 1;
        }
        let window = &series.values[lo..=i];
        if window.len() < MIN_NORMALIZATION_WINDOW.min(n) {
            continue;
        }
        let len = window.len() as f64;
        let mean = window.iter().sum::<f64>() / len;
        let var = window.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / len;
        let sd = var.sqrt();
        let scale = window.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if !(sd > 1e-12 * scale) {
            return Err(Error::ZeroWindowVariance {
                coin_id: series.coin_id.clone(),
                date,
            });
        }
        dates.push(date);
        values.push((series.values[i] - mean) / sd);
    }
    Ok(ReturnSeries {
        coin_id: series.coin_id.clone(),
        dates,
        values,
    })
}

/// A disjoint window of `length` consecutive timeline dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch {
    pub index: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub length: usize,
}

impl Epoch {
    /// The epoch's dates within the timeline it was sliced from.
    pub fn days<'a>(&self, timeline: &'a [NaiveDate]) -> &'a [NaiveDate] {
        let start = timeline.partition_point(|d| *d < self.start_date);
        let end = timeline.partition_point(|d| *d <= self.end_date);
        &timeline[start..end]
    }
}

/// Tiles `dates` from the first entry into `floor(D / length)` epochs,
/// dropping any shorter remainder.
pub fn slice_epochs(dates: &[NaiveDate], length: usize) -> Result<Vec<Epoch>> {
    if length < 2 {
        return Err(Error::InvalidParameter(format!(
            "epoch length must be at least 2, got {length}"
        )));
    }
    Ok(dates
        .chunks_exact(length)
        .enumerate()
        .map(|(index, chunk)| Epoch {
            index,
            start_date: chunk[0],
            end_date: chunk[length - 1],
            length,
        })
        .collect())
}

/// Sorted union of all dates carried by `series`.
pub fn timeline(series: &[ReturnSeries]) -> Vec<NaiveDate> {
    let mut dates: Vec<NaiveDate> = series.iter().flat_map(|s| s.dates.iter().copied()).collect();
    dates.sort_unstable();
    dates.dedup();
    dates
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub epoch: Epoch,
    pub coin_ids: Vec<String>,
    /// Mean market cap over the epoch, aligned with `coin_ids`.
    pub ranking_stat: Vec<f64>,
}

/// Picks the `k` coins with the largest mean market cap over the epoch,
/// among coins with a normalized return on every epoch day.
///
/// Ties are broken by ascending coin id.
pub fn select_top_k(
    panel: &PricePanel,
    epoch: &Epoch,
    timeline: &[NaiveDate],
    normalized: &[NormalizedReturnSeries],
    k: usize,
) -> Result<Portfolio> {
    let days = epoch.days(timeline);
    let by_coin: HashMap<&str, &NormalizedReturnSeries> =
        normalized.iter().map(|s| (s.coin_id.as_str(), s)).collect();
    let day_columns: Vec<usize> = days.iter().filter_map(|d| panel.date_index(*d)).collect();

    let mut ranked: Vec<(&str, f64)> = panel
        .coins()
        .iter()
        .enumerate()
        .filter(|(_, coin)| {
            by_coin
                .get(coin.as_str())
                .is_some_and(|s| s.window(days).is_some())
        })
        .filter_map(|(row, coin)| {
            let caps: Vec<f64> = day_columns
                .iter()
                .filter_map(|&col| panel.market_cap(row, col))
                .collect();
            (!caps.is_empty()).then(|| (coin.as_str(), caps.iter().sum::<f64>() / caps.len() as f64))
        })
        .collect();
    if ranked.len() < k {
        return Err(Error::InsufficientBreadth {
            epoch: epoch.index,
            eligible: ranked.len(),
            required: k,
        });
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    Ok(Portfolio {
        epoch: epoch.clone(),
        coin_ids: ranked.iter().map(|(c, _)| c.to_string()).collect(),
        ranking_stat: ranked.iter().map(|(_, s)| *s).collect(),
    })
}
