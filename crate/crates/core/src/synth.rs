//! Synthetic return panels with planted, time-switching block-correlation regimes.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{PricePanel, PriceRecord};
use crate::linalg::symmetric_eigen;
use crate::seed;
use crate::timeseries::MIN_NORMALIZATION_WINDOW;

/// A correlation regime: coins in the same block correlate at `rho_in`,
/// all other pairs at `rho_out`. Coins listed in no block are singletons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub id: usize,
    pub blocks: Vec<Vec<usize>>,
    pub rho_in: f64,
    pub rho_out: f64,
    /// Epochs governed by this regime.
    pub epochs: Vec<usize>,
}

impl RegimeSpec {
    /// The implied `k × k` correlation matrix; fails if it is not PSD.
    pub fn correlation(&self, k: usize) -> Result<DMatrix<f64>> {
        if !(0.0..1.0).contains(&self.rho_in) || !(0.0..=self.rho_in).contains(&self.rho_out) {
            return Err(Error::InvalidParameter(format!(
                "regime {} needs 0 <= rho_out <= rho_in < 1, got rho_in = {}, rho_out = {}",
                self.id, self.rho_in, self.rho_out
            )));
        }
        let mut owner: Vec<Option<usize>> = vec![None; k];
        for (b, block) in self.blocks.iter().enumerate() {
            for &coin in block {
                match owner.get_mut(coin) {
                    Some(slot @ None) => *slot = Some(b),
                    Some(Some(_)) => {
                        return Err(Error::InvalidParameter(format!(
                            "regime {}: coin {coin} is in two blocks",
                            self.id
                        )))
                    }
                    None => {
                        return Err(Error::InvalidParameter(format!(
                            "regime {}: coin {coin} out of range for {k} coins",
                            self.id
                        )))
                    }
                }
            }
        }
        let c = DMatrix::from_fn(k, k, |i, j| match (i == j, owner[i], owner[j]) {
            (true, _, _) => 1.0,
            (false, Some(a), Some(b)) if a == b => self.rho_in,
            _ => self.rho_out,
        });
        let (vals, _) = symmetric_eigen(&c);
        if let Some(&min) = vals.first() {
            if min < -1e-10 {
                return Err(Error::RegimeNotPsd(min));
            }
        }
        Ok(c)
    }
}

/// Per-epoch regime id, in epoch order.
pub fn planted_labels(specs: &[RegimeSpec]) -> Result<Vec<usize>> {
    let n = specs.iter().flat_map(|s| s.epochs.iter()).max().map_or(0, |m| m + 1);
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for spec in specs {
        for &e in &spec.epochs {
            if labels[e].replace(spec.id).is_some() {
                return Err(Error::ScheduleOverlap(e));
            }
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(e, l)| l.ok_or(Error::ScheduleGap(e)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Innovations {
    Gaussian,
    /// Multivariate Student-t with unit variance (needs `dof > 2`).
    StudentT { dof: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub coins: usize,
    pub epoch_length: usize,
    pub epochs: usize,
    pub seed: u64,
    pub innovations: Innovations,
    pub start: NaiveDate,
    /// Daily return volatility of the first coin; later coins scale up to 2×.
    pub volatility: f64,
}

impl SynthOptions {
    pub fn new(coins: usize, epoch_length: usize, epochs: usize, seed: u64) -> Self {
        Self {
            coins,
            epoch_length,
            epochs,
            seed,
            innovations: Innovations::Gaussian,
            start: NaiveDate::from_ymd_opt(2017, 1, 1).expect("valid date"),
            volatility: 0.03,
        }
    }

    /// Return days preceding the first epoch, consumed by the normalization warm-up.
    pub fn warmup(&self) -> usize {
        MIN_NORMALIZATION_WINDOW - 1
    }
}

/// Zero-padded synthetic coin id, so lexicographic order equals index order.
pub fn coin_id(i: usize) -> String {
    format!("c{i:03}")
}

fn symmetric_sqrt(c: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = symmetric_eigen(c);
    let root = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.max(0.0).sqrt()));
    &vecs * DMatrix::from_diagonal(&root) * vecs.transpose()
}

pub fn generate_panel(specs: &[RegimeSpec], coins: usize, epoch_length: usize, epochs: usize, seed: u64) -> Result<PricePanel> {
    generate_panel_with(specs, &SynthOptions::new(coins, epoch_length, epochs, seed))
}

/// Draws a price panel whose epoch `e` returns follow the regime governing `e`.
///
/// The panel starts with a short warm-up (governed by epoch 0's regime) so
/// that the first epoch has fully normalized returns. Market caps are
/// constant and strictly decreasing in coin index.
pub fn generate_panel_with(specs: &[RegimeSpec], opts: &SynthOptions) -> Result<PricePanel> {
    let labels = planted_labels(specs)?;
    if labels.len() < opts.epochs {
        return Err(Error::ScheduleGap(labels.len()));
    }
    if opts.epoch_length < 2 || opts.coins == 0 {
        return Err(Error::InvalidParameter("need at least one coin and epochs of 2+ days".into()));
    }
    if let Innovations::StudentT { dof } = opts.innovations {
        if !(dof > 2.0) {
            return Err(Error::InvalidParameter(format!("Student-t dof must exceed 2, got {dof}")));
        }
    }
    let factors: Vec<DMatrix<f64>> = specs
        .iter()
        .map(|s| s.correlation(opts.coins).map(|c| symmetric_sqrt(&c)))
        .collect::<Result<_>>()?;
    let factor_of = |epoch: usize| {
        let id = labels[epoch];
        &factors[specs.iter().position(|s| s.id == id).expect("label from specs")]
    };

    let k = opts.coins;
    let vol: Vec<f64> = (0..k).map(|i| opts.volatility * (1.0 + i as f64 / k as f64)).collect();
    let mut rng = seed::rng(opts.seed, "synth/panel");
    let return_days = opts.warmup() + opts.epochs * opts.epoch_length;
    let mut price: Vec<f64> = (0..k).map(|i| 100.0 / (1.0 + i as f64)).collect();
    let mut records = Vec::with_capacity(k * (return_days + 1));
    let cap = |i: usize| 1e9 * (k - i) as f64;
    let push_day = |day: usize, price: &[f64], records: &mut Vec<(u64, PriceRecord)>| {
        let date = PricePanel::date_after(opts.start, day as u64);
        for (i, &p) in price.iter().enumerate() {
            records.push((
                0,
                PriceRecord {
                    coin_id: coin_id(i),
                    date,
                    close: p,
                    market_cap: Some(cap(i)),
                },
            ));
        }
    };
    push_day(0, &price, &mut records);
    for day in 0..return_days {
        let epoch = day.saturating_sub(opts.warmup()) / opts.epoch_length;
        let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let scale = match opts.innovations {
            Innovations::Gaussian => 1.0,
            Innovations::StudentT { dof } => {
                let g: f64 = ChiSquared::new(dof).expect("dof > 2").sample(&mut rng);
                ((dof - 2.0) / g).sqrt()
            }
        };
        let x = factor_of(epoch) * z * scale;
        for i in 0..k {
            price[i] *= (vol[i] * x[i]).exp();
        }
        push_day(day + 1, &price, &mut records);
    }
    PricePanel::from_records(records)
}

/// Quarter pairs used by [`cyclic_block_regimes`]; complementary pairs come first.
const QUARTER_PAIRS: [(usize, usize); 6] = [(0, 1), (2, 3), (0, 2), (1, 3), (0, 3), (1, 2)];

/// `regimes` regimes (at most 6) assigned cyclically to `epochs` epochs.
///
/// The coins are cut into four contiguous quarters. Regime `r` correlates the
/// union of one pair of quarters at `rho_in`; every other pair of coins sits at
/// `rho_out`. Regimes 0 and 1 (and 2 and 3) activate complementary halves.
pub fn cyclic_block_regimes(
    coins: usize,
    regimes: usize,
    epochs: usize,
    rho_in: f64,
    rho_out: f64,
) -> Result<Vec<RegimeSpec>> {
    if regimes == 0 || regimes > QUARTER_PAIRS.len() {
        return Err(Error::InvalidParameter(format!(
            "cyclic block regimes support 1 to {} regimes, got {regimes}",
            QUARTER_PAIRS.len()
        )));
    }
    if coins < 4 {
        return Err(Error::InvalidParameter(format!("need at least 4 coins, got {coins}")));
    }
    let quarter = |q: usize| q * coins / 4..(q + 1) * coins / 4;
    Ok(QUARTER_PAIRS[..regimes]
        .iter()
        .enumerate()
        .map(|(r, &(a, b))| RegimeSpec {
            id: r,
            blocks: vec![quarter(a).chain(quarter(b)).collect()],
            rho_in,
            rho_out,
            epochs: (r..epochs).step_by(regimes).collect(),
        })
        .collect())
}

/// One regime with every coin in a single block at correlation `rho`.
pub fn uniform_regime(id: usize, coins: usize, rho: f64, epochs: Vec<usize>) -> RegimeSpec {
    RegimeSpec {
        id,
        blocks: vec![(0..coins).collect()],
        rho_in: rho,
        rho_out: rho,
        epochs,
    }
}
