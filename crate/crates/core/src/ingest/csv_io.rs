use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{PricePanel, PriceRecord};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 4] = ["date", "coin_id", "close", "market_cap"];

/// Parses a `date,coin_id,close,market_cap` file into a panel.
pub fn parse_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), path)
}

/// Like [`parse_csv`] but from any reader; `path` is only used in error messages.
pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<PricePanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let malformed = |line: u64, message: String| Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records = Vec::new();
    let mut header_seen = false;
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if !header_seen {
            let fields: Vec<&str> = row.iter().map(str::trim).collect();
            if fields != CSV_HEADER {
                return Err(malformed(
                    line,
                    format!("expected header {:?}, got {:?}", CSV_HEADER.join(","), fields.join(",")),
                ));
            }
            header_seen = true;
            continue;
        }
        if row.len() == 1 && row[0].trim().is_empty() {
            continue;
        }
        if row.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, got {}", row.len())));
        }
        let date = NaiveDate::parse_from_str(row[0].trim(), "%Y-%m-%d").map_err(|_| Error::BadDate {
            line,
            value: row[0].to_string(),
        })?;
        let coin_id = row[1].trim();
        if coin_id.is_empty() {
            return Err(malformed(line, "empty coin_id".into()));
        }
        let close: f64 = row[2]
            .trim()
            .parse()
            .map_err(|_| malformed(line, format!("close {:?} is not a number", &row[2])))?;
        let cap_field = row[3].trim();
        let market_cap = if cap_field.is_empty() {
            None
        } else {
            Some(
                cap_field
                    .parse::<f64>()
                    .map_err(|_| malformed(line, format!("market_cap {cap_field:?} is not a number")))?,
            )
        };
        records.push((
            line,
            PriceRecord {
                coin_id: coin_id.to_string(),
                date,
                close,
                market_cap,
            },
        ));
    }
    if !header_seen {
        return Err(malformed(1, "missing header row".into()));
    }
    PricePanel::from_records(records)
}

/// Writes every present cell of `panel` in (date, coin) order.
///
/// Values use the shortest representation that round-trips, so
/// `parse_csv(write_csv(p)) == p` bit for bit.
pub fn write_csv(panel: &PricePanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv_to(panel, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv_to<W: Write>(panel: &PricePanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in panel.records() {
        let cap = r.market_cap.map(|c| c.to_string()).unwrap_or_default();
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            r.coin_id,
            r.close.to_string(),
            cap,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn parse(text: &str) -> Result<PricePanel> {
        read_csv(text.as_bytes(), &PathBuf::from("test.csv"))
    }

    #[test]
    fn three_consecutive_days() {
        let p = parse(
            "date,coin_id,close,market_cap\n\
             2017-01-01,btc,1000,1e10\n\
             2017-01-02,btc,1010,1.01e10\n\
             2017-01-03,btc,990.5,9.9e9\n",
        )
        .unwrap();
        assert_eq!((p.n_coins(), p.n_dates()), (1, 3));
        assert!(p.close_row(0).iter().all(Option::is_some));
    }

    #[test]
    fn gap_day_is_missing() {
        let p = parse(
            "date,coin_id,close,market_cap\n\
             2017-01-01,a,1,1\n\
             2017-01-03,a,3,1\n",
        )
        .unwrap();
        assert_eq!((p.n_coins(), p.n_dates()), (1, 3));
        assert_eq!(p.close(0, 1), None);
    }

    #[test]
    fn non_positive_close_reports_line() {
        let err = parse("date,coin_id,close,market_cap\n2017-01-01,btc,-5,0\n").unwrap_err();
        match err {
            Error::NonPositiveClose { line, close, .. } => {
                assert_eq!(line, 2);
                assert_eq!(close, -5.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn error_paths() {
        let dup = parse("date,coin_id,close,market_cap\n2017-01-01,a,1,1\n2017-01-01,a,2,1\n");
        assert!(matches!(dup, Err(Error::DuplicateRecord { line: 3, .. })));
        let bad_date = parse("date,coin_id,close,market_cap\n01/02/2017,a,1,1\n");
        assert!(matches!(bad_date, Err(Error::BadDate { line: 2, .. })));
        let short = parse("date,coin_id,close,market_cap\n2017-01-01,a,1\n");
        assert!(matches!(short, Err(Error::MalformedRow { line: 2, .. })));
        let header = parse("day,coin,close,cap\n");
        assert!(matches!(header, Err(Error::MalformedRow { line: 1, .. })));
        let nan = parse("date,coin_id,close,market_cap\n2017-01-01,a,abc,1\n");
        assert!(matches!(nan, Err(Error::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn quoted_fields_and_missing_cap() {
        let p = parse("date,coin_id,close,market_cap\n2017-01-01,\"a\",\"1.5\",\n").unwrap();
        assert_eq!(p.close(0, 0), Some(1.5));
        assert_eq!(p.market_cap(0, 0), None);
    }
}
