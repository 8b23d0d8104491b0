use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mmhp::data::{self, analytics, trades, FitReport, ModelFile, Side, Window};
use mmhp::decode::{online_init, path_occupancy, viterbi_events};
use mmhp::em::{fit, select_models, FitConfig};
use mmhp::gof::{qq_export, residuals};
use mmhp::simulate::{simulate_mmhp_continuous, simulate_mmhp_delta, Stop};
use mmhp::{EventSequence64, ModelParams64};

#[derive(Parser)]
#[command(name = "mmhp", version, about = "Markov-modulated Hawkes processes: simulate, fit, decode and check")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate events from a model file.
    Simulate(SimulateArgs),
    /// Fit a model by EM.
    Fit(FitArgs),
    /// Most likely hidden state after each event.
    Decode(DecodeArgs),
    /// Decode a live feed of event times read from standard input.
    Stream(StreamArgs),
    /// Residual goodness-of-fit report.
    Gof(GofArgs),
    /// Rank models over a grid of state counts and δ values.
    Select(SelectArgs),
    /// Detection series, regime decoding and state analytics for trade data.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Stop after this many events.
    #[arg(long, conflicts_with = "horizon", required_unless_present = "horizon")]
    events: Option<usize>,
    /// Stop at this time (seconds).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the hidden path (`time_s,state`).
    #[arg(long)]
    hidden: Option<PathBuf>,
    /// Use the exponential kernel without δ-freezing (Ogata thinning).
    #[arg(long)]
    continuous: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long = "M")]
    m: usize,
    /// Defaults to the config value.
    #[arg(long)]
    delta: Option<f64>,
    /// Fit configuration JSON; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Fit the MMPP (no self-excitation).
    #[arg(long)]
    mmpp: bool,
    /// Also write the full fit report (trace, criteria).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also report the state every `tick` seconds between events.
    #[arg(long)]
    tick: Option<f64>,
}

#[derive(Args)]
struct GofArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    qq: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long = "M-grid", value_delimiter = ',', required = true)]
    m_grid: Vec<usize>,
    #[arg(long = "delta-grid", value_delimiter = ',', required = true)]
    delta_grid: Vec<f64>,
    /// Add one MMPP per state count.
    #[arg(long)]
    mmpp: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trades: PathBuf,
    #[arg(long)]
    side: Side,
    /// UTC wall-clock window, `HH:MM-HH:MM`.
    #[arg(long, default_value = "05:00-12:00")]
    window: String,
    /// Day of the window (`YYYY-MM-DD`); defaults to the day of the first trade.
    #[arg(long)]
    date: Option<chrono::NaiveDate>,
    #[arg(long)]
    lob: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Seasonality bin width in seconds.
    #[arg(long, default_value_t = 300)]
    bin: u32,
    /// Maximum age of the snapshot used for an imbalance sample, seconds.
    #[arg(long, default_value_t = 5.0)]
    staleness: f64,
    /// Price-response horizon in mid-price moves.
    #[arg(long, default_value_t = 10)]
    horizon: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Decode(a) => decode(a),
        Command::Stream(a) => stream(a),
        Command::Gof(a) => gof(a),
        Command::Select(a) => select(a),
        Command::Analyze(a) => analyze(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_params(path: &Path) -> Result<ModelParams64> {
    let mf = data::load_model(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(mf.params()?)
}

fn load_events(path: &Path) -> Result<EventSequence64> {
    data::read_events(path).with_context(|| format!("reading events {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<FitConfig<f64>> {
    match path {
        None => Ok(FitConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing fit config {}", p.display()))
        }
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let params = load_params(&a.model)?;
    let stop = match (a.events, a.horizon) {
        (Some(k), _) => Stop::Events(k),
        (None, Some(t)) => Stop::Horizon(t),
        (None, None) => bail!("one of --events or --horizon is required"),
    };
    let sim = if a.continuous {
        simulate_mmhp_continuous(&params, stop, a.seed)?
    } else {
        simulate_mmhp_delta(&params, stop, a.seed)?
    };
    data::write_events(&a.out, &sim.events)?;
    if let Some(h) = &a.hidden {
        data::write_states(h, &sim.hidden_path)?;
    }
    println!("simulated {} events up to t = {} (seed {})", sim.events.len(), sim.events.horizon(), sim.seed);
    Ok(())
}

fn fit_cmd(a: FitArgs) -> Result<()> {
    let events = load_events(&a.events)?;
    let mut config = load_config(a.config.as_deref())?;
    if let Some(d) = a.delta {
        config.delta = d;
    }
    if a.mmpp {
        config.fix_alpha_zero = true;
    }
    if let Some(s) = a.max_steps {
        config.max_steps = s;
    }
    if let Some(r) = a.restarts {
        config.restarts = r;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let res = fit(&events, a.m, &config)?;
    data::save_model(&a.out, &ModelFile::from_fit(&res))?;
    if let Some(r) = &a.report {
        write_json(r, &FitReport::new(&res, &events))?;
    }
    let p = &res.params;
    println!("loglik {:.6}  aic {:.4}  bic {:.4}  steps {}  converged {}", res.loglik, res.aic, res.bic, res.steps, res.converged);
    println!("mu    {}", fmt_vec(&p.mu));
    println!("alpha {}", fmt_vec(&p.alpha));
    println!("beta  {}", fmt_vec(&p.beta));
    println!("q     {}", fmt_vec(&(0..p.m()).map(|i| p.exit_rate(i)).collect::<Vec<_>>()));
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let params = load_params(&a.model)?;
    let events = load_events(&a.events)?;
    let trace = viterbi_events(&params, &events)?;
    let rows: Vec<(f64, usize)> = events.times().iter().copied().zip(trace.states.iter().copied()).collect();
    data::write_states(&a.out, &rows)?;
    let occ = path_occupancy(&events, &trace.states, params.m());
    println!("decoded {} events; occupancy {}", events.len(), fmt_vec(&occ));
    Ok(())
}

fn stream(a: StreamArgs) -> Result<()> {
    let params = load_params(&a.model)?;
    if let Some(t) = a.tick {
        if !(t > 0.0) {
            bail!("--tick must be positive");
        }
    }
    let mut dec = online_init(&params, &EventSequence64::from_times(Vec::new())?)?;
    let stdin = std::io::stdin();
    let mut out = BufWriter::new(std::io::stdout().lock());
    let header: Vec<String> = std::iter::once("time_s".to_string())
        .chain(std::iter::once("state".to_string()))
        .chain((0..params.m()).map(|i| format!("log_eta_{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let emit = |out: &mut BufWriter<_>, t: f64, state: usize, eta: &[f64]| -> Result<()> {
        let cols: Vec<String> = eta.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{t},{state},{}", cols.join(","))?;
        Ok(())
    };
    let mut ticks = 1u64;
    for (i, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') || (i == 0 && s == "time_s") {
            continue;
        }
        let t: f64 = s.parse().with_context(|| format!("line {}: bad event time `{s}`", i + 1))?;
        if let Some(step) = a.tick {
            while (ticks as f64) * step < t {
                let now = ticks as f64 * step;
                let st = dec.online_advance(now)?;
                emit(&mut out, now, st, dec.log_eta())?;
                ticks += 1;
            }
        }
        let st = dec.online_event(t).with_context(|| format!("line {}", i + 1))?;
        emit(&mut out, t, st, dec.log_eta())?;
        out.flush()?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GofReport {
    events: usize,
    ks_statistic: f64,
    ks_pvalue: f64,
    tau_mean: f64,
    loglik: f64,
}

fn gof(a: GofArgs) -> Result<()> {
    let params = load_params(&a.model)?;
    let events = load_events(&a.events)?;
    let rep = residuals(&params, &events)?;
    let loglik = mmhp::inference::log_likelihood(&params, &mmhp::TransitionBundle64::build(&params, &events)?)?;
    if let Some(q) = &a.qq {
        qq_export(&rep, q)?;
    }
    let out = GofReport {
        events: events.len(),
        ks_statistic: rep.ks_statistic,
        ks_pvalue: rep.ks_pvalue,
        tau_mean: rep.tau.iter().sum::<f64>() / rep.tau.len() as f64,
        loglik,
    };
    write_json(&a.out, &out)?;
    println!("KS D = {:.6}, p = {:.6}", out.ks_statistic, out.ks_pvalue);
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let events = load_events(&a.events)?;
    let mut config = load_config(a.config.as_deref())?;
    if let Some(s) = a.max_steps {
        config.max_steps = s;
    }
    let rows = select_models(&events, &a.m_grid, &a.delta_grid, a.mmpp, &config)?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    for r in rows.iter().filter(|r| r.rank_aic == 1 || r.rank_bic == 1) {
        println!("best ({}{}): {}", if r.rank_aic == 1 { "AIC" } else { "" }, if r.rank_bic == 1 { " BIC" } else { "" }, r.label);
    }
    Ok(())
}

#[derive(Serialize)]
struct SeriesInfo {
    side: Side,
    window: Window,
    events: usize,
    perturbed: usize,
}

#[derive(Serialize)]
struct Analytics {
    series: SeriesInfo,
    states: usize,
    /// Share of window time per decoded state.
    occupancy: Vec<f64>,
    /// Share of detected traded volume per decoded state.
    volume_share: Vec<f64>,
    seasonality: analytics::SeasonalityProfile,
    imbalance: Option<analytics::ImbalanceSamples>,
    price_response: Option<Vec<analytics::ResponseCell>>,
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let params = load_params(&a.model)?;
    let m = params.m();
    let all = trades::ingest_trades(&a.trades)?;
    let date = match a.date {
        Some(d) => d,
        None => trades::utc_date(all[0].timestamp_us)?,
    };
    let window = Window::on_date(date, &a.window)?;
    let series = trades::build_detection_series(&all, a.side, window);
    if series.len() < 2 {
        bail!("the detection series has {} events; nothing to decode", series.len());
    }
    if series.perturbed > 0 {
        eprintln!("note: {} simultaneous events shifted by 1 µs", series.perturbed);
    }
    let events = series.events()?;
    let states = viterbi_events(&params, &events)?.states;
    let occupancy = path_occupancy(&events, &states, m);
    let mut volume = vec![0.0; m];
    for (&k, &s) in series.trade_index.iter().zip(&states) {
        volume[s] += all[k].size;
    }
    let total: f64 = volume.iter().sum();
    volume.iter_mut().for_each(|v| *v /= total);
    let side_trades: Vec<_> = all.iter().filter(|t| t.side == a.side).cloned().collect();
    let seasonality = analytics::seasonality_profile(&side_trades, a.bin)?;
    let (imbalance, price_response) = match &a.lob {
        Some(p) => {
            let lob = analytics::read_lob(p)?;
            let imb = analytics::imbalance_at_transitions(&lob, &series, &states, m, a.staleness)?;
            if imb.dropped > 0 {
                eprintln!("note: {} imbalance samples dropped (stale or empty book)", imb.dropped);
            }
            let mid = analytics::mid_series(&lob);
            let signs = vec![a.side.sign(); series.len()];
            let resp = analytics::price_response(&mid, &series, &states, &signs, m, a.horizon)?;
            (Some(imb), Some(resp))
        }
        None => (None, None),
    };
    let out = Analytics {
        series: SeriesInfo { side: a.side, window, events: series.len(), perturbed: series.perturbed },
        states: m,
        occupancy,
        volume_share: volume,
        seasonality,
        imbalance,
        price_response,
    };
    write_json(&a.out, &out)?;
    println!("{} events in the detection series; occupancy {}", series.len(), fmt_vec(&out.occupancy));
    Ok(())
}
