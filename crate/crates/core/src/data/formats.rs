//! On-disk formats: event CSV, hidden-path CSV and the model JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::model::{EventSequence, ModelParams};

/// Reads a `time_s` event file. The horizon is the last event time.
pub fn read_events(path: &Path) -> Result<EventSequence<f64>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "time_s")
        .ok_or_else(|| Error::Parse(format!("{}: missing `time_s` column", path.display())))?;
    let mut times = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("");
        let t: f64 = field
            .parse()
            .map_err(|_| Error::Parse(format!("{}: line {}: bad time `{field}`", path.display(), i + 2)))?;
        times.push(t);
    }
    EventSequence::from_times(times)
}

pub fn write_events(path: &Path, events: &EventSequence<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s"])?;
    for t in events.times() {
        w.write_record([t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `time_s,state` rows (hidden paths and decoded states share the layout).
pub fn read_states(path: &Path) -> Result<Vec<(f64, usize)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing `{name}` column", path.display())))
    };
    let (tc, sc) = (find("time_s")?, find("state")?);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse(format!("{}: line {}: malformed row", path.display(), i + 2));
        let t: f64 = rec.get(tc).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let s: usize = rec.get(sc).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        out.push((t, s));
    }
    Ok(out)
}

pub fn write_states(path: &Path, rows: &[(f64, usize)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "state"])?;
    for (t, s) in rows {
        w.write_record([t.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub fitted_loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub label_order: Vec<usize>,
}

/// JSON form of [`ModelParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "M")]
    pub m: usize,
    pub mu: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub xi0: Vec<f64>,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<ModelMeta>,
}

impl ModelFile {
    pub fn from_params(p: &ModelParams<f64>) -> Self {
        Self {
            m: p.m(),
            mu: p.mu.clone(),
            alpha: p.alpha.clone(),
            beta: p.beta.clone(),
            q: p.q.rows(),
            xi0: p.xi0.clone(),
            delta: p.delta,
            meta: None,
        }
    }

    pub fn from_fit(fit: &FitResult<f64>) -> Self {
        let mut out = Self::from_params(&fit.params);
        out.meta = Some(ModelMeta {
            fitted_loglik: fit.loglik,
            aic: fit.aic,
            bic: fit.bic,
            label_order: fit.label_order.clone(),
        });
        out
    }

    pub fn params(&self) -> Result<ModelParams<f64>> {
        let lens = [self.mu.len(), self.alpha.len(), self.beta.len(), self.xi0.len(), self.q.len()];
        if lens.iter().any(|&l| l != self.m) {
            return Err(Error::InvalidParams(format!("vector lengths {lens:?} do not match M = {}", self.m)));
        }
        let q = Mat::from_rows(&self.q)?;
        ModelParams::new(self.mu.clone(), self.alpha.clone(), self.beta.clone(), q, self.xi0.clone(), self.delta)
    }
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_model(path: &Path, model: &ModelFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Fit summary written next to the model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub events: usize,
    pub horizon: f64,
    pub mmpp: bool,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub steps: usize,
    pub converged: bool,
    pub restart: usize,
    pub loglik_trace: Vec<f64>,
    pub model: ModelFile,
}

impl FitReport {
    pub fn new(fit: &FitResult<f64>, events: &EventSequence<f64>) -> Self {
        Self {
            events: events.len(),
            horizon: events.horizon(),
            mmpp: fit.mmpp,
            loglik: fit.loglik,
            aic: fit.aic,
            bic: fit.bic,
            steps: fit.steps,
            converged: fit.converged,
            restart: fit.restart,
            loglik_trace: fit.loglik_trace.clone(),
            model: ModelFile::from_fit(fit),
        }
    }
}
