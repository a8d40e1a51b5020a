use serde::{Deserialize, Serialize};

use super::{DateRange, PricePanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoinCoverage {
    pub coin_id: String,
    /// Fraction of panel days with a close price.
    pub coverage: f64,
    pub missing: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub coins: Vec<CoinCoverage>,
    pub missing_cells: usize,
    pub span: Option<DateRange>,
}

/// Coverage summary of a panel. Never fails and never touches the panel.
pub fn validate_panel(panel: &PricePanel) -> ValidationReport {
    let n_dates = panel.n_dates();
    let coins: Vec<CoinCoverage> = panel
        .coins()
        .iter()
        .enumerate()
        .map(|(i, coin_id)| {
            let missing = panel.close_row(i).iter().filter(|c| c.is_none()).count();
            CoinCoverage {
                coin_id: coin_id.clone(),
                coverage: if n_dates == 0 {
                    0.0
                } else {
                    (n_dates - missing) as f64 / n_dates as f64
                },
                missing,
            }
        })
        .collect();
    let span = match (panel.dates().first(), panel.dates().last()) {
        (Some(&start), Some(&end)) if !coins.is_empty() => Some(DateRange { start, end }),
        _ => None,
    };
    ValidationReport {
        missing_cells: coins.iter().map(|c| c.missing).sum(),
        coins,
        span,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PriceRecord;

    fn panel(days: &[u32]) -> PricePanel {
        PricePanel::from_records(days.iter().map(|&d| {
            (
                0,
                PriceRecord {
                    coin_id: "a".into(),
                    date: chrono::NaiveDate::from_ymd_opt(2020, 1, d).unwrap(),
                    close: 1.0,
                    market_cap: Some(1.0),
                },
            )
        }))
        .unwrap()
    }

    #[test]
    fn full_panel_has_unit_coverage() {
        let r = validate_panel(&panel(&[1, 2, 3, 4]));
        assert_eq!(r.coins[0].coverage, 1.0);
        assert_eq!(r.missing_cells, 0);
    }

    #[test]
    fn one_missing_of_ten() {
        let r = validate_panel(&panel(&[1, 2, 3, 4, 5, 7, 8, 9, 10]));
        assert_eq!(r.coins[0].missing, 1);
        assert!((r.coins[0].coverage - 0.9).abs() < 1e-15);
        assert_eq!(r.span.unwrap().end, chrono::NaiveDate::from_ymd_opt(2020, 1, 10).unwrap());
    }

    #[test]
    fn empty_panel_empty_report() {
        let r = validate_panel(&PricePanel::empty());
        assert_eq!(r, ValidationReport::default());
    }
}
