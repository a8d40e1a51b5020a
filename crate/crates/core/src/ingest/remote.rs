use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, NaiveDate, NaiveTime};
use serde::{Deserialize, Serialize};

use super::{parse_csv, write_csv, DateRange, PricePanel, PriceRecord};
use crate::error::{Error, Result};
use crate::par;

/// A provider of daily close/market-cap history for one coin at a time.
pub trait MarketDataSource: Sync {
    fn fetch_coin(&self, coin_id: &str, range: DateRange) -> Result<Vec<PriceRecord>>;
}

/// Endpoint description for an HTTP market-data aggregator.
///
/// The request is `GET {base_url}{path}?{from_param}=<unix>&{to_param}=<unix>&{extra_query}`
/// with `{coin_id}` substituted into `path`. The response is a JSON object
/// whose `prices_field` and `market_caps_field` hold `[timestamp, value]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub path: String,
    pub from_param: String,
    pub to_param: String,
    #[serde(default)]
    pub extra_query: BTreeMap<String, String>,
    pub prices_field: String,
    pub market_caps_field: String,
    #[serde(default = "default_true")]
    pub timestamp_millis: bool,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_true() -> bool {
    true
}
fn default_rpm() -> u32 {
    10
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_timeout() -> u64 {
    30
}

/// Spaces calls at least `60 / requests_per_minute` seconds apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(requests))
        };
        Self {
            interval,
            next_slot: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue one request.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct HttpSource {
    config: RemoteConfig,
    agent: ureq::Agent,
    limiter: RateLimiter,
}

impl HttpSource {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = RateLimiter::per_minute(config.requests_per_minute);
        Self {
            config,
            agent,
            limiter,
        }
    }

    fn url(&self, coin_id: &str) -> String {
        format!(
            "{}{}",
            self.config.base_url.trim_end_matches('/'),
            self.config.path.replace("{coin_id}", coin_id)
        )
    }

    fn get(&self, coin_id: &str, range: DateRange) -> Result<String> {
        let from = range.start.and_time(NaiveTime::MIN).and_utc().timestamp();
        let to = range
            .end
            .and_time(NaiveTime::from_hms_opt(23, 59, 59).expect("valid time"))
            .and_utc()
            .timestamp();
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.retry_backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            self.limiter.acquire();
            let mut req = self
                .agent
                .get(self.url(coin_id))
                .query(&self.config.from_param, from.to_string())
                .query(&self.config.to_param, to.to_string());
            for (k, v) in &self.config.extra_query {
                req = req.query(k, v);
            }
            match req.call() {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    match status {
                        200..=299 => {
                            return resp.body_mut().read_to_string().map_err(|e| Error::Http {
                                coin_id: coin_id.to_string(),
                                attempts: attempt + 1,
                                message: e.to_string(),
                            })
                        }
                        404 => return Err(Error::UnknownCoin(coin_id.to_string())),
                        429 | 500..=599 => last_error = format!("status {status}"),
                        _ => {
                            return Err(Error::Http {
                                coin_id: coin_id.to_string(),
                                attempts: attempt + 1,
                                message: format!("status {status}"),
                            })
                        }
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
            log::debug!("request for {coin_id} failed (attempt {}): {last_error}", attempt + 1);
        }
        Err(Error::Http {
            coin_id: coin_id.to_string(),
            attempts,
            message: last_error,
        })
    }
}

impl MarketDataSource for HttpSource {
    fn fetch_coin(&self, coin_id: &str, range: DateRange) -> Result<Vec<PriceRecord>> {
        let body = self.get(coin_id, range)?;
        parse_series_response(&self.config, coin_id, &body, range)
    }
}

/// Collapses `[timestamp, value]` pairs to one value per UTC day (the last one seen).
fn daily_series(
    value: &serde_json::Value,
    field: &str,
    millis: bool,
    coin_id: &str,
) -> Result<BTreeMap<NaiveDate, f64>> {
    let bad = |message: String| Error::BadResponse {
        coin_id: coin_id.to_string(),
        message,
    };
    let points = value
        .get(field)
        .and_then(|v| v.as_array())
        .ok_or_else(|| bad(format!("field {field:?} missing or not an array")))?;
    let mut out: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
    for p in points {
        let pair = p.as_array().filter(|a| a.len() == 2);
        let (ts, v) = match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
            Some((Some(ts), Some(v))) => (ts, v),
            // Aggregators occasionally emit nulls for gaps.
            Some((Some(_), None)) => continue,
            _ => return Err(bad(format!("malformed point {p} in {field:?}"))),
        };
        let secs = if millis { ts / 1000.0 } else { ts };
        let date = DateTime::from_timestamp(secs.floor() as i64, 0)
            .ok_or_else(|| bad(format!("timestamp {ts} out of range")))?
            .date_naive();
        match out.get(&date) {
            Some(&(seen, _)) if seen > ts => {}
            _ => {
                out.insert(date, (ts, v));
            }
        }
    }
    Ok(out.into_iter().map(|(d, (_, v))| (d, v)).collect())
}

pub(crate) fn parse_series_response(
    config: &RemoteConfig,
    coin_id: &str,
    body: &str,
    range: DateRange,
) -> Result<Vec<PriceRecord>> {
    let value: serde_json::Value = serde_json::from_str(body).map_err(|e| Error::BadResponse {
        coin_id: coin_id.to_string(),
        message: e.to_string(),
    })?;
    let prices = daily_series(&value, &config.prices_field, config.timestamp_millis, coin_id)?;
    let caps = daily_series(&value, &config.market_caps_field, config.timestamp_millis, coin_id)?;
    Ok(prices
        .into_iter()
        .filter(|(date, close)| range.contains(*date) && *close > 0.0)
        .map(|(date, close)| PriceRecord {
            coin_id: coin_id.to_string(),
            date,
            close,
            market_cap: caps.get(&date).copied().filter(|c| *c >= 0.0),
        })
        .collect())
}

fn cache_path(cache_dir: &Path, coin_id: &str) -> PathBuf {
    cache_dir.join(format!("{coin_id}.csv"))
}

fn load_or_fetch(
    source: &dyn MarketDataSource,
    coin_id: &str,
    range: DateRange,
    cache_dir: &Path,
) -> Result<Vec<PriceRecord>> {
    let path = cache_path(cache_dir, coin_id);
    if path.exists() {
        return Ok(parse_csv(&path)?.records());
    }
    let records = source.fetch_coin(coin_id, range)?;
    let panel = PricePanel::from_records(records.into_iter().map(|r| (0, r)))?;
    let tmp = path.with_extension("csv.partial");
    write_csv(&panel, &tmp).map_err(|e| match e {
        Error::Io { path, source } => Error::CacheWrite { path, source },
        other => other,
    })?;
    std::fs::rename(&tmp, &path).map_err(|source| Error::CacheWrite {
        path: path.clone(),
        source,
    })?;
    Ok(panel.records())
}

/// Fetches `coin_ids` over `range` through a per-coin CSV cache.
///
/// A coin whose `<cache_dir>/<coin_id>.csv` exists is read from disk and
/// never requested again. Coins are fetched concurrently; the source is
/// responsible for rate limiting.
pub fn fetch_remote(
    source: &dyn MarketDataSource,
    coin_ids: &[String],
    range: DateRange,
    cache_dir: &Path,
) -> Result<PricePanel> {
    if coin_ids.is_empty() {
        return Ok(PricePanel::empty());
    }
    std::fs::create_dir_all(cache_dir).map_err(|source| Error::CacheWrite {
        path: cache_dir.to_path_buf(),
        source,
    })?;
    let fetched = par::map_slice(coin_ids, |coin| load_or_fetch(source, coin, range, cache_dir));
    let mut records = Vec::new();
    for batch in fetched {
        records.extend(batch?.into_iter().filter(|r| range.contains(r.date)).map(|r| (0, r)));
    }
    Ok(PricePanel::from_records(records)?.with_coins(coin_ids))
}
