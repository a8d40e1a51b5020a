//! On-disk formats of the stage outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::correlation::EpochStats;
use crate::error::{Error, Result};
use crate::timeseries::{Epoch, Portfolio, ReturnSeries};

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn rows(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let records = rdr.records().collect::<std::result::Result<_, _>>()?;
    Ok((header, records))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::format(path, format!("bad field {i} in row {:?}", rec.iter().collect::<Vec<_>>())))
}

/// Square matrix with a header row of labels and one row per label.
pub fn write_matrix<L: ToString>(path: &Path, labels: &[L], m: &DMatrix<f64>) -> Result<()> {
    let mut out = labels.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    out.push('\n');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt17(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write(path, out)
}

pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = read(path)?;
    let mut lines = text.lines();
    let labels: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty matrix file"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let n = labels.len();
    let mut values = Vec::with_capacity(n * n);
    for line in lines.filter(|l| !l.is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::format(path, format!("bad value {v:?}"))))
            .collect::<Result<_>>()?;
        if row.len() != n {
            return Err(Error::format(path, format!("row has {} values, expected {n}", row.len())));
        }
        values.extend(row);
    }
    if values.len() != n * n {
        return Err(Error::format(path, "matrix is not square"));
    }
    Ok((labels, DMatrix::from_row_slice(n, n, &values)))
}

pub fn write_epochs(path: &Path, epochs: &[Epoch]) -> Result<()> {
    let mut out = String::from("index,start,end\n");
    for e in epochs {
        out.push_str(&format!("{},{},{}\n", e.index, e.start_date, e.end_date));
    }
    write(path, out)
}

pub fn read_epochs(path: &Path, length: usize) -> Result<Vec<Epoch>> {
    let (_, recs) = rows(path)?;
    recs.iter()
        .map(|r| {
            Ok(Epoch {
                index: field(path, r, 0)?,
                start_date: field(path, r, 1)?,
                end_date: field(path, r, 2)?,
                length,
            })
        })
        .collect()
}

/// Long `date,coin_id,value` table, rows ordered by date then coin.
pub fn write_series(path: &Path, series: &[ReturnSeries]) -> Result<()> {
    let mut rows: Vec<(NaiveDate, &str, f64)> = series
        .iter()
        .flat_map(|s| s.dates.iter().zip(&s.values).map(move |(d, v)| (*d, s.coin_id.as_str(), *v)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
    let mut out = String::from("date,coin_id,value\n");
    for (d, c, v) in rows {
        out.push_str(&format!("{d},{c},{}\n", fmt17(v)));
    }
    write(path, out)
}

pub fn read_series(path: &Path) -> Result<Vec<ReturnSeries>> {
    let (_, recs) = rows(path)?;
    let mut by_coin: BTreeMap<String, ReturnSeries> = BTreeMap::new();
    for r in &recs {
        let date: NaiveDate = field(path, r, 0)?;
        let coin: String = field(path, r, 1)?;
        let value: f64 = field(path, r, 2)?;
        let s = by_coin.entry(coin.clone()).or_insert_with(|| ReturnSeries {
            coin_id: coin,
            dates: Vec::new(),
            values: Vec::new(),
        });
        s.dates.push(date);
        s.values.push(value);
    }
    Ok(by_coin.into_values().collect())
}

pub fn write_portfolios(path: &Path, portfolios: &[Portfolio]) -> Result<()> {
    let mut out = String::from("epoch,rank,coin_id,mean_market_cap\n");
    for p in portfolios {
        for (rank, (coin, stat)) in p.coin_ids.iter().zip(&p.ranking_stat).enumerate() {
            out.push_str(&format!("{},{},{},{}\n", p.epoch.index, rank, coin, fmt17(*stat)));
        }
    }
    write(path, out)
}

pub fn read_portfolios(path: &Path, epochs: &[Epoch]) -> Result<Vec<Portfolio>> {
    let (_, recs) = rows(path)?;
    let mut out: Vec<Portfolio> = epochs
        .iter()
        .map(|e| Portfolio {
            epoch: e.clone(),
            coin_ids: Vec::new(),
            ranking_stat: Vec::new(),
        })
        .collect();
    for r in &recs {
        let epoch: usize = field(path, r, 0)?;
        let p = out
            .iter_mut()
            .find(|p| p.epoch.index == epoch)
            .ok_or_else(|| Error::format(path, format!("unknown epoch {epoch}")))?;
        p.coin_ids.push(field(path, r, 2)?);
        p.ranking_stat.push(field(path, r, 3)?);
    }
    Ok(out)
}

pub fn write_stats(path: &Path, stats: &[EpochStats]) -> Result<()> {
    let mut out = String::from("epoch,mean_return,mean_correlation\n");
    for s in stats {
        out.push_str(&format!("{},{},{}\n", s.epoch, fmt17(s.mean_return), fmt17(s.mean_correlation)));
    }
    write(path, out)
}

pub fn read_stats(path: &Path) -> Result<Vec<EpochStats>> {
    let (_, recs) = rows(path)?;
    recs.iter()
        .map(|r| {
            Ok(EpochStats {
                epoch: field(path, r, 0)?,
                mean_return: field(path, r, 1)?,
                mean_correlation: field(path, r, 2)?,
            })
        })
        .collect()
}

/// `epoch,regime` planted labels.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("epoch,regime\n");
    for (e, l) in labels.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    write(path, out)
}

pub fn read_labels(path: &Path) -> Result<BTreeMap<usize, usize>> {
    let (_, recs) = rows(path)?;
    recs.iter().map(|r| Ok((field(path, r, 0)?, field(path, r, 1)?))).collect()
}

/// Parses a simple CSV table into rows of trimmed strings, header excluded.
pub(crate) fn read_table(path: &Path) -> Result<Vec<Vec<String>>> {
    let (_, recs) = rows(path)?;
    Ok(recs
        .iter()
        .map(|r| r.iter().map(|s| s.trim().to_string()).collect())
        .collect())
}
