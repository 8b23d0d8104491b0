//! Trade ingestion and the zero-return detection series.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::EventSequence;

/// Aggressor side of a marketable order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Hits the bid: a sell aggressor.
    Bid,
    /// Lifts the ask: a buy aggressor.
    Ask,
}

impl Side {
    /// Trade sign: +1 for buy aggressors, −1 for sell aggressors.
    pub fn sign(self) -> f64 {
        match self {
            Side::Bid => -1.0,
            Side::Ask => 1.0,
        }
    }
}

impl FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bid" | "b" | "sell" | "s" => Ok(Side::Bid),
            "ask" | "a" | "buy" => Ok(Side::Ask),
            other => Err(Error::Parse(format!("unknown side `{other}`"))),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TradeRecord {
    pub timestamp_us: i64,
    pub price: f64,
    pub size: f64,
    pub side: Side,
    pub order_id: String,
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<TradeRecord, String> {
    if rec.len() != 5 {
        return Err(format!("expected 5 fields, found {}", rec.len()));
    }
    let timestamp_us: i64 = rec[0].parse().map_err(|_| format!("bad timestamp `{}`", &rec[0]))?;
    let price: f64 = rec[1].parse().map_err(|_| format!("bad price `{}`", &rec[1]))?;
    let size: f64 = rec[2].parse().map_err(|_| format!("bad size `{}`", &rec[2]))?;
    if !(price > 0.0 && price.is_finite()) || !(size > 0.0 && size.is_finite()) {
        return Err("price and size must be positive".into());
    }
    let side = rec[3].parse::<Side>().map_err(|e| e.to_string())?;
    if rec[4].is_empty() {
        return Err("empty order id".into());
    }
    Ok(TradeRecord { timestamp_us, price, size, side, order_id: rec[4].to_string() })
}

/// Reads fills and aggregates them by order id: one record per order, stamped
/// and priced by its first fill, with the sizes summed.
pub fn ingest_trades(path: &Path) -> Result<Vec<TradeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let want = ["timestamp_us", "price", "size", "side", "order_id"];
    if headers.iter().collect::<Vec<_>>() != want {
        return Err(Error::Parse(format!("{}: header must be `{}`", path.display(), want.join(","))));
    }
    let mut fills = Vec::new();
    let mut bad = Vec::new();
    let mut last_ts = i64::MIN;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match parse_row(&rec) {
            Ok(t) => {
                if t.timestamp_us < last_ts {
                    bad.push(format!("line {line}: timestamp {} is earlier than {last_ts}", t.timestamp_us));
                }
                last_ts = last_ts.max(t.timestamp_us);
                fills.push(t);
            }
            Err(msg) => bad.push(format!("line {line}: {msg}")),
        }
    }
    if !bad.is_empty() {
        let shown: Vec<_> = bad.iter().take(20).cloned().collect();
        let more = if bad.len() > 20 { format!(" (and {} more)", bad.len() - 20) } else { String::new() };
        return Err(Error::Parse(format!("{}: {}{more}", path.display(), shown.join("; "))));
    }
    if fills.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no trades", path.display())));
    }
    Ok(aggregate_fills(fills))
}

/// Merges fills sharing an order id, keeping first-fill order.
pub fn aggregate_fills(fills: Vec<TradeRecord>) -> Vec<TradeRecord> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<TradeRecord> = Vec::new();
    for f in fills {
        match index.get(&f.order_id) {
            Some(&k) => out[k].size += f.size,
            None => {
                index.insert(f.order_id.clone(), out.len());
                out.push(f);
            }
        }
    }
    out
}

pub fn write_trades(path: &Path, trades: &[TradeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp_us", "price", "size", "side", "order_id"])?;
    for t in trades {
        w.write_record([
            t.timestamp_us.to_string(),
            t.price.to_string(),
            t.size.to_string(),
            t.side.to_string(),
            t.order_id.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Half-open UTC interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Window {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if end <= start {
            return Err(Error::InvalidInput(format!("empty window {start} .. {end}")));
        }
        Ok(Self { start, end })
    }

    /// Window from a `HH:MM-HH:MM` wall-clock spec on `date`.
    pub fn on_date(date: NaiveDate, spec: &str) -> Result<Self> {
        let (a, b) = spec
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("window `{spec}` is not of the form HH:MM-HH:MM")))?;
        let parse = |s: &str| {
            NaiveTime::parse_from_str(s.trim(), "%H:%M")
                .or_else(|_| NaiveTime::parse_from_str(s.trim(), "%H:%M:%S"))
                .map_err(|_| Error::Parse(format!("bad time of day `{s}`")))
        };
        let start = Utc.from_utc_datetime(&date.and_time(parse(a)?));
        let end = Utc.from_utc_datetime(&date.and_time(parse(b)?));
        Self::new(start, end)
    }

    pub fn start_us(&self) -> i64 {
        self.start.timestamp_micros()
    }

    pub fn end_us(&self) -> i64 {
        self.end.timestamp_micros()
    }
}

/// UTC calendar date of a microsecond timestamp.
pub fn utc_date(timestamp_us: i64) -> Result<NaiveDate> {
    DateTime::<Utc>::from_timestamp_micros(timestamp_us)
        .map(|d| d.date_naive())
        .ok_or_else(|| Error::OutOfRange(format!("timestamp {timestamp_us} µs")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSeries {
    /// Event times in seconds from the window start, strictly increasing.
    pub times: Vec<f64>,
    /// Microsecond stamps after de-duplication.
    pub timestamps_us: Vec<i64>,
    /// Index of each event in the ingested trade list.
    pub trade_index: Vec<usize>,
    pub window: Window,
    pub side: Side,
    /// Events shifted by 1 µs to break ties.
    pub perturbed: usize,
}

impl DetectionSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn events(&self) -> Result<EventSequence<f64>> {
        EventSequence::from_times(self.times.clone())
    }
}

/// Same-side trades inside the window whose price equals the previous
/// same-side trade price, rebased to seconds from the window start.
///
/// Simultaneous stamps (and one at the window start) are pushed forward by
/// 1 µs so that times are strictly increasing and positive.
pub fn build_detection_series(trades: &[TradeRecord], side: Side, window: Window) -> DetectionSeries {
    let (lo, hi) = (window.start_us(), window.end_us());
    let mut out = DetectionSeries {
        times: Vec::new(),
        timestamps_us: Vec::new(),
        trade_index: Vec::new(),
        window,
        side,
        perturbed: 0,
    };
    let mut prev_price: Option<f64> = None;
    let mut last_us = lo;
    for (i, t) in trades.iter().enumerate() {
        if t.side != side || t.timestamp_us < lo || t.timestamp_us >= hi {
            continue;
        }
        let zero_return = prev_price == Some(t.price);
        prev_price = Some(t.price);
        if !zero_return {
            continue;
        }
        let mut ts = t.timestamp_us;
        if ts <= last_us {
            ts = last_us + 1;
            out.perturbed += 1;
        }
        last_us = ts;
        out.times.push((ts - lo) as f64 * 1e-6);
        out.timestamps_us.push(ts);
        out.trade_index.push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trade(ts: i64, price: f64, side: Side, id: &str) -> TradeRecord {
        TradeRecord { timestamp_us: ts, price, size: 1.0, side, order_id: id.into() }
    }

    fn day() -> Window {
        Window::on_date(NaiveDate::from_ymd_opt(2023, 3, 3).unwrap(), "05:00-12:00").unwrap()
    }

    #[test]
    fn zero_return_filter() {
        let w = day();
        let t0 = w.start_us();
        let trades: Vec<_> =
            [10.0, 10.0, 11.0, 11.0, 11.0].iter().enumerate().map(|(i, &p)| trade(t0 + 1_000_000 * (i as i64 + 1), p, Side::Ask, &i.to_string())).collect();
        let s = build_detection_series(&trades, Side::Ask, w);
        assert_eq!(s.trade_index, vec![1, 3, 4]);
        assert_eq!(s.times, vec![2.0, 4.0, 5.0]);
        let distinct: Vec<_> = (0..5).map(|i| trade(t0 + 10 + i, 10.0 + i as f64, Side::Ask, &i.to_string())).collect();
        assert!(build_detection_series(&distinct, Side::Ask, w).is_empty());
    }

    #[test]
    fn sides_partition_the_zero_return_trades() {
        let w = day();
        let t0 = w.start_us();
        let prices = [5.0, 5.0, 5.0, 6.0, 5.0, 5.0, 6.0, 6.0];
        let trades: Vec<_> = prices
            .iter()
            .enumerate()
            .map(|(i, &p)| trade(t0 + 100 * (i as i64 + 1), p, if i % 3 == 0 { Side::Bid } else { Side::Ask }, &i.to_string()))
            .collect();
        let bid = build_detection_series(&trades, Side::Bid, w);
        let ask = build_detection_series(&trades, Side::Ask, w);
        assert!(bid.trade_index.iter().all(|i| !ask.trade_index.contains(i)));
        // Per-side counts of zero-return trades, computed directly.
        let count = |side: Side| {
            let ps: Vec<f64> = trades.iter().filter(|t| t.side == side).map(|t| t.price).collect();
            ps.windows(2).filter(|w| w[0] == w[1]).count()
        };
        assert_eq!(bid.len() + ask.len(), count(Side::Bid) + count(Side::Ask));
        assert_eq!(build_detection_series(&trades, Side::Ask, w), ask);
    }

    #[test]
    fn window_clipping_and_ties() {
        let w = day();
        let t0 = w.start_us();
        let trades = vec![
            trade(t0 - 5, 1.0, Side::Bid, "a"),
            trade(t0, 1.0, Side::Bid, "b"),
            trade(t0, 1.0, Side::Bid, "c"),
            trade(t0 + 7, 1.0, Side::Bid, "d"),
            trade(t0 + 7, 1.0, Side::Bid, "e"),
            trade(w.end_us(), 1.0, Side::Bid, "f"),
        ];
        let s = build_detection_series(&trades, Side::Bid, w);
        // "b" opens the window and has no predecessor inside it.
        assert_eq!(s.trade_index, vec![2, 3, 4]);
        assert_eq!(s.timestamps_us, vec![t0 + 1, t0 + 7, t0 + 8]);
        assert_eq!(s.perturbed, 2);
        assert!(s.events().is_ok());
    }

    #[test]
    fn aggregation_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trades.csv");
        std::fs::write(
            &path,
            "timestamp_us,price,size,side,order_id\n100,10.5,1,ask,x\n100,10.6,2,ask,x\n150,10.4,0.5,bid,y\n",
        )
        .unwrap();
        let t = ingest_trades(&path).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0], TradeRecord { timestamp_us: 100, price: 10.5, size: 3.0, side: Side::Ask, order_id: "x".into() });
        let out = dir.path().join("again.csv");
        write_trades(&out, &t).unwrap();
        assert_eq!(ingest_trades(&out).unwrap(), t);
    }

    #[test]
    fn malformed_input_is_reported_by_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trades.csv");
        std::fs::write(&path, "timestamp_us,price,size,side,order_id\n100,1,1,ask,a\n90,1,1,bid,b\n120,-1,1,ask,c\n130,1,1,up,d\n").unwrap();
        let err = ingest_trades(&path).unwrap_err().to_string();
        for line in ["line 3", "line 4", "line 5"] {
            assert!(err.contains(line), "{err}");
        }
        std::fs::write(&path, "timestamp_us,price,size,side,order_id\n").unwrap();
        assert!(ingest_trades(&path).is_err());
        std::fs::write(&path, "ts,price\n1,2\n").unwrap();
        assert!(ingest_trades(&path).is_err());
    }

    #[test]
    fn window_parsing() {
        let w = day();
        assert_eq!(w.end_us() - w.start_us(), 7 * 3600 * 1_000_000);
        assert_eq!(utc_date(w.start_us()).unwrap(), NaiveDate::from_ymd_opt(2023, 3, 3).unwrap());
        let d = NaiveDate::from_ymd_opt(2023, 3, 3).unwrap();
        assert!(Window::on_date(d, "12:00-05:00").is_err());
        assert!(Window::on_date(d, "noon").is_err());
    }
}
