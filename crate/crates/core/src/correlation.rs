//! Per-epoch Pearson matrices, the signed power map, and epoch summary statistics.

use std::collections::HashMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{Epoch, NormalizedReturnSeries, Portfolio, ReturnSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub epoch: Epoch,
    pub coin_ids: Vec<String>,
    pub values: DMatrix<f64>,
    /// Exponent of the power map applied so far; 1 for a raw matrix.
    pub q_applied: f64,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.coin_ids.len()
    }

    pub fn is_raw(&self) -> bool {
        self.q_applied == 1.0
    }
}

/// Standardizes `x` with population moments. `None` for a (numerically) constant series.
fn standardize(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (sd > 1e-12 * scale).then(|| x.iter().map(|v| (v - mean) / sd).collect())
}

/// Population-moment Pearson matrix of the given rows (one row per coin).
pub fn pearson_from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, usize> {
    let k = rows.len();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| standardize(r).ok_or(i))
        .collect::<std::result::Result<_, _>>()?;
    let t = rows.first().map_or(0, Vec::len) as f64;
    let mut c = DMatrix::identity(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let v = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum::<f64>() / t;
            let v = v.clamp(-1.0, 1.0);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Pearson cross-correlations of the portfolio's normalized returns over the epoch.
pub fn pearson_matrix(
    portfolio: &Portfolio,
    timeline: &[NaiveDate],
    normalized: &[NormalizedReturnSeries],
) -> Result<CorrelationMatrix> {
    let days = portfolio.epoch.days(timeline);
    let rows = collect_rows(&portfolio.coin_ids, days, normalized)?;
    let values = pearson_from_rows(&rows).map_err(|i| Error::ZeroVariance {
        coin_id: portfolio.coin_ids[i].clone(),
        epoch: portfolio.epoch.index,
    })?;
    Ok(CorrelationMatrix {
        epoch: portfolio.epoch.clone(),
        coin_ids: portfolio.coin_ids.clone(),
        values,
        q_applied: 1.0,
    })
}

fn collect_rows(coins: &[String], days: &[NaiveDate], series: &[ReturnSeries]) -> Result<Vec<Vec<f64>>> {
    let by_coin: HashMap<&str, &ReturnSeries> = series.iter().map(|s| (s.coin_id.as_str(), s)).collect();
    coins
        .iter()
        .map(|coin| {
            let s = by_coin.get(coin.as_str());
            s.and_then(|s| s.window(days)).ok_or_else(|| {
                let date = days
                    .iter()
                    .copied()
                    .find(|d| s.and_then(|s| s.get(*d)).is_none())
                    .or(days.first().copied())
                    .unwrap_or_default();
                Error::MissingReturn {
                    coin_id: coin.clone(),
                    date,
                }
            })
        })
        .collect()
}

/// Signed element-wise power `sign(C)·|C|^q`. The diagonal stays 1.
pub fn power_map(matrix: &CorrelationMatrix, q: f64) -> Result<CorrelationMatrix> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("power-map exponent must be positive, got {q}")));
    }
    let mut values = matrix.values.map(|c| c.signum() * c.abs().powf(q));
    values.fill_diagonal(1.0);
    Ok(CorrelationMatrix {
        epoch: matrix.epoch.clone(),
        coin_ids: matrix.coin_ids.clone(),
        values,
        q_applied: matrix.q_applied * q,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean raw log return over all portfolio coins and epoch days.
    pub mean_return: f64,
    /// Mean of the upper-triangle off-diagonal correlations.
    pub mean_correlation: f64,
}

pub fn mean_off_diagonal(values: &DMatrix<f64>) -> f64 {
    let k = values.nrows();
    if k < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            sum += values[(i, j)];
        }
    }
    sum / (k * (k - 1) / 2) as f64
}

pub fn epoch_stats(
    portfolio: &Portfolio,
    timeline: &[NaiveDate],
    returns: &[ReturnSeries],
    matrix: &CorrelationMatrix,
) -> Result<EpochStats> {
    let days = portfolio.epoch.days(timeline);
    let rows = collect_rows(&portfolio.coin_ids, days, returns)?;
    let count = rows.iter().map(Vec::len).sum::<usize>();
    let mean_return = if count == 0 {
        0.0
    } else {
        rows.iter().flatten().sum::<f64>() / count as f64
    };
    Ok(EpochStats {
        epoch: portfolio.epoch.index,
        mean_return,
        mean_correlation: mean_off_diagonal(&matrix.values),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(values: DMatrix<f64>) -> CorrelationMatrix {
        let k = values.nrows();
        CorrelationMatrix {
            epoch: Epoch {
                index: 0,
                start_date: NaiveDate::default(),
                end_date: NaiveDate::default(),
                length: 2,
            },
            coin_ids: (0..k).map(|i| format!("c{i}")).collect(),
            values,
            q_applied: 1.0,
        }
    }

    #[test]
    fn brute_force_moments() {
        let c = pearson_from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 3.0, 2.0, 4.0]]).unwrap();
        // <xy> - <x><y> = 7.25 - 6.25 = 1, σx = σy = sqrt(1.25)
        assert!((c[(0, 1)] - 0.8).abs() < 1e-15);
        assert_eq!(c[(0, 0)], 1.0);
    }

    #[test]
    fn perfect_anticorrelation() {
        let c = pearson_from_rows(&[vec![1.0, 2.0, 4.0], vec![-1.0, -2.0, -4.0]]).unwrap();
        assert!((c[(0, 1)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_row_is_reported() {
        assert_eq!(pearson_from_rows(&[vec![1.0, 2.0], vec![3.0, 3.0]]), Err(1));
    }

    #[test]
    fn power_map_values() {
        let m = matrix(DMatrix::from_row_slice(3, 3, &[1.0, -0.5, 1.0, -0.5, 1.0, -1.0, 1.0, -1.0, 1.0]));
        let p = power_map(&m, 1.5).unwrap();
        // -(0.5^1.5) = -0.35355339059327376220
        assert!((p.values[(0, 1)] + 0.353_553_390_593_273_8).abs() < 1e-15);
        assert_eq!(p.values[(0, 2)], 1.0);
        assert_eq!(p.values[(1, 2)], -1.0);
        assert_eq!(p.q_applied, 1.5);
        assert_eq!(power_map(&m, 1.0).unwrap().values, m.values);
        assert!(power_map(&m, 0.0).is_err());
    }

    #[test]
    fn mean_correlation_cases() {
        assert_eq!(mean_off_diagonal(&DMatrix::identity(4, 4)), 0.0);
        assert_eq!(mean_off_diagonal(&DMatrix::from_element(4, 4, 1.0)), 1.0);
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.4, 0.2, 1.0, 0.6, 0.4, 0.6, 1.0]);
        assert!((mean_off_diagonal(&m) - 0.4).abs() < 1e-15);
    }
}
