//! State characterization: intraday seasonality, order-book imbalance at
//! regime switches and the mid-price response after them.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::data::trades::{utc_date, DetectionSeries, TradeRecord};
use crate::error::{Error, Result};

const Z95: f64 = 1.959_963_984_540_054;

/// Mean with a normal-approximation 95% interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Fewer than two samples: the interval carries no information.
    pub degenerate: bool,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci_low: f64::NAN, ci_high: f64::NAN, n, degenerate: true };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self { mean, ci_low: mean, ci_high: mean, n, degenerate: true };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let half = Z95 * (var / n as f64).sqrt();
        Self { mean, ci_low: mean - half, ci_high: mean + half, n, degenerate: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityRow {
    /// Bin start in seconds after midnight UTC.
    pub bin_start_s: u32,
    /// Events per second.
    pub intensity: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonalityProfile {
    pub bin_s: u32,
    pub days: Vec<NaiveDate>,
    pub overall: Vec<SeasonalityRow>,
    pub by_weekday: BTreeMap<String, Vec<SeasonalityRow>>,
}

/// Per-bin trading intensity averaged across the days present in `trades`.
pub fn seasonality_profile(trades: &[TradeRecord], bin_s: u32) -> Result<SeasonalityProfile> {
    if bin_s == 0 || 86_400 % bin_s != 0 {
        return Err(Error::InvalidInput(format!("bin width {bin_s} s must divide a day")));
    }
    if trades.is_empty() {
        return Err(Error::InvalidInput("no trades".into()));
    }
    let nbins = (86_400 / bin_s) as usize;
    let mut counts: BTreeMap<NaiveDate, Vec<f64>> = BTreeMap::new();
    for t in trades {
        let date = utc_date(t.timestamp_us)?;
        let sec = t.timestamp_us.rem_euclid(86_400_000_000) / 1_000_000;
        counts.entry(date).or_insert_with(|| vec![0.0; nbins])[sec as usize / bin_s as usize] += 1.0;
    }
    let rate = |days: &[&Vec<f64>]| -> Vec<SeasonalityRow> {
        (0..nbins)
            .map(|b| {
                let xs: Vec<f64> = days.iter().map(|d| d[b] / bin_s as f64).collect();
                SeasonalityRow { bin_start_s: b as u32 * bin_s, intensity: Estimate::from_samples(&xs) }
            })
            .collect()
    };
    let all: Vec<&Vec<f64>> = counts.values().collect();
    let mut by_weekday = BTreeMap::new();
    for wd in [Weekday::Mon, Weekday::Tue, Weekday::Wed, Weekday::Thu, Weekday::Fri, Weekday::Sat, Weekday::Sun] {
        let days: Vec<&Vec<f64>> = counts.iter().filter(|(d, _)| d.weekday() == wd).map(|(_, c)| c).collect();
        if !days.is_empty() {
            by_weekday.insert(format!("{wd}"), rate(&days));
        }
    }
    Ok(SeasonalityProfile { bin_s, days: counts.keys().copied().collect(), overall: rate(&all), by_weekday })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LobSnapshot {
    pub timestamp_us: i64,
    pub bid_price: f64,
    pub ask_price: f64,
    pub bid_size: f64,
    pub ask_size: f64,
}

impl LobSnapshot {
    /// `(q^b − q^a) / (q^b + q^a)`, undefined for an empty top of book.
    pub fn imbalance(&self) -> Option<f64> {
        let tot = self.bid_size + self.ask_size;
        (tot > 0.0).then(|| (self.bid_size - self.ask_size) / tot)
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.bid_price + self.ask_price)
    }
}

/// Reads `timestamp_us,bid_price,ask_price,bid_size,ask_size` snapshots.
pub fn read_lob(path: &Path) -> Result<Vec<LobSnapshot>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let want = ["timestamp_us", "bid_price", "ask_price", "bid_size", "ask_size"];
    if rdr.headers()?.iter().collect::<Vec<_>>() != want {
        return Err(Error::Parse(format!("{}: header must be `{}`", path.display(), want.join(","))));
    }
    let mut out: Vec<LobSnapshot> = Vec::new();
    let mut bad = Vec::new();
    for (i, rec) in rdr.deserialize::<LobSnapshot>().enumerate() {
        let line = i + 2;
        match rec {
            Ok(s) if !(s.bid_price < s.ask_price) => bad.push(format!("line {line}: crossed book")),
            Ok(s) if !(s.bid_size >= 0.0 && s.ask_size >= 0.0) => bad.push(format!("line {line}: negative size")),
            Ok(s) if out.last().is_some_and(|p| p.timestamp_us > s.timestamp_us) => {
                bad.push(format!("line {line}: timestamps go backwards"))
            }
            Ok(s) => out.push(s),
            Err(e) => bad.push(format!("line {line}: {e}")),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Parse(format!("{}: {}", path.display(), bad.join("; "))));
    }
    Ok(out)
}

/// Mid-price changes: `(timestamp_us, mid)` at the first snapshot and at every move.
pub fn mid_series(lob: &[LobSnapshot]) -> Vec<(i64, f64)> {
    let mut out: Vec<(i64, f64)> = Vec::new();
    for s in lob {
        let m = s.mid();
        if out.last().is_none_or(|&(_, p)| p != m) {
            out.push((s.timestamp_us, m));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSamples {
    /// `by_state[i]`: imbalance right before each switch into state `i`.
    pub by_state: Vec<Vec<f64>>,
    pub summary: Vec<Estimate>,
    /// Switches without a fresh enough snapshot.
    pub dropped: usize,
}

fn check_alignment(series: &DetectionSeries, states: &[usize], m: usize) -> Result<()> {
    if states.len() != series.len() {
        return Err(Error::InvalidInput(format!("{} decoded states for {} events", states.len(), series.len())));
    }
    if let Some(s) = states.iter().find(|&&s| s >= m) {
        return Err(Error::InvalidInput(format!("decoded state {s} outside 0..{m}")));
    }
    Ok(())
}

/// Events `n ≥ 1` where the decoded state differs from the previous one.
fn switches(states: &[usize]) -> impl Iterator<Item = usize> + '_ {
    (1..states.len()).filter(move |&n| states[n] != states[n - 1])
}

/// Imbalance from the last snapshot strictly before each regime switch.
pub fn imbalance_at_transitions(
    lob: &[LobSnapshot],
    series: &DetectionSeries,
    states: &[usize],
    m: usize,
    staleness_s: f64,
) -> Result<ImbalanceSamples> {
    check_alignment(series, states, m)?;
    let max_gap = (staleness_s * 1e6).round() as i64;
    let mut by_state = vec![Vec::new(); m];
    let mut dropped = 0;
    for n in switches(states) {
        let ts = series.timestamps_us[n];
        let k = lob.partition_point(|s| s.timestamp_us < ts);
        let sample = k
            .checked_sub(1)
            .map(|j| &lob[j])
            .filter(|s| ts - s.timestamp_us <= max_gap)
            .and_then(|s| s.imbalance());
        match sample {
            Some(v) => by_state[states[n]].push(v),
            None => dropped += 1,
        }
    }
    let summary = by_state.iter().map(|v| Estimate::from_samples(v)).collect();
    Ok(ImbalanceSamples { by_state, summary, dropped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseCell {
    pub h: usize,
    pub state: usize,
    /// Basis points.
    pub response: Estimate,
    pub low_support: bool,
}

/// Mid-price response `R(h, s)`: mean of `ε_n (p_{n+h}/p_n − 1)` in basis
/// points over switches into `s`, with `h` counted in mid-price moves after
/// the event and `p_n` the mid in force just before it.
pub fn price_response(
    mid: &[(i64, f64)],
    series: &DetectionSeries,
    states: &[usize],
    signs: &[f64],
    m: usize,
    horizon: usize,
) -> Result<Vec<ResponseCell>> {
    check_alignment(series, states, m)?;
    if signs.len() != series.len() {
        return Err(Error::InvalidInput("one trade sign per event is required".into()));
    }
    let mut samples = vec![vec![Vec::new(); m]; horizon];
    for n in switches(states) {
        let ts = series.timestamps_us[n];
        let Some(j) = mid.partition_point(|&(t, _)| t < ts).checked_sub(1) else { continue };
        let p0 = mid[j].1;
        for h in 1..=horizon {
            if let Some(&(_, ph)) = mid.get(j + h) {
                samples[h - 1][states[n]].push(1e4 * signs[n] * (ph / p0 - 1.0));
            }
        }
    }
    let mut out = Vec::with_capacity(horizon * m);
    for (h, row) in samples.iter().enumerate() {
        for (s, xs) in row.iter().enumerate() {
            out.push(ResponseCell { h: h + 1, state: s, response: Estimate::from_samples(xs), low_support: xs.len() < 5 });
        }
    }
    Ok(out)
}
