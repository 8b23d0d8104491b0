//! Expectation–maximization for the MMHP-δ.
//!
//! Each step runs the E-step of [`crate::inference`], then updates the
//! Markov part in closed form and the Hawkes part state by state by
//! numerical maximization. The Hawkes objective for state `i` is
//!
//! ```text
//! Fᵢ(μ, α, β) = Σ_n ξⁱ_{t_n|T} log λⁱ(n, ℓ_n) − Σ_n Σ_k occ_{n,k,i} λⁱ(n, k)
//! ```
//!
//! where `occ_{n,k,i} = (B_{n,k})_{ii} / c_n` is the posterior time spent in `i`
//! during step `k` of interval `n`. The occupancies are frozen during the
//! M-step, so `Fᵢ` costs one pass over the grid per evaluation.
//!
//! For fixed β, `Fᵢ` is concave in `(μ, α)`; the default inner solver
//! maximizes it there by Newton's method and searches log β with Brent's
//! method. A plain simplex over all three log-parameters is available too.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{infer, log_likelihood, InferenceState};
use crate::matrix::Mat;
use crate::model::{EventSequence, ModelParams, MAX_STATES};
use crate::optimize::{brent_minimize, nelder_mead, SimplexOptions};
use crate::scalar::Scalar;
use crate::transition::TransitionBundle;

/// Inner solver of the Hawkes M-step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    /// Newton in `(μ, α)` nested in a Brent search over log β.
    #[default]
    Profile,
    /// Nelder–Mead over `(log μ, log α, log β)`.
    NelderMead,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: DeserializeOwned + Scalar"), default)]
pub struct FitConfig<T> {
    /// Maximum number of EM steps.
    pub max_steps: usize,
    /// Stop once an E-step improves the log-likelihood by less than this.
    pub tol: T,
    pub inner_method: InnerMethod,
    pub inner_max_iter: usize,
    pub inner_xtol: T,
    /// Number of starting points; the first is the deterministic heuristic.
    pub restarts: usize,
    pub seed: u64,
    /// Fit the MMPP (every α held at 0).
    pub fix_alpha_zero: bool,
    pub delta: T,
    /// Hold α at these values instead of estimating it.
    pub pin_alpha: Option<Vec<T>>,
    /// Hold β at these values instead of estimating it.
    pub pin_beta: Option<Vec<T>>,
}

impl<T: Scalar> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            max_steps: 2000,
            tol: T::of(1e-6),
            inner_method: InnerMethod::Profile,
            inner_max_iter: 200,
            inner_xtol: T::of(1e-8),
            restarts: 3,
            seed: 0,
            fix_alpha_zero: false,
            delta: T::of(0.1),
            pin_alpha: None,
            pin_beta: None,
        }
    }
}

impl<T: Scalar> FitConfig<T> {
    pub fn new(delta: T) -> Self {
        Self { delta, ..Self::default() }
    }

    pub fn mmpp(mut self) -> Self {
        self.fix_alpha_zero = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidInput("max_steps must be at least 1".into()));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        if !(self.delta > T::zero()) || !self.delta.is_finite() {
            return Err(Error::InvalidInput("delta must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be at least 1".into()));
        }
        Ok(())
    }

    fn alpha_pinned(&self, i: usize) -> Option<T> {
        if self.fix_alpha_zero {
            return Some(T::zero());
        }
        self.pin_alpha.as_ref().map(|a| a[i])
    }

    fn beta_pinned(&self, i: usize) -> Option<T> {
        self.pin_beta.as_ref().map(|b| b[i])
    }
}

#[derive(Clone, Debug)]
pub struct FitResult<T> {
    /// Estimated parameters, states sorted by ascending α (μ for an MMPP).
    pub params: ModelParams<T>,
    /// Log-likelihood of the iterate at each E-step.
    pub loglik_trace: Vec<T>,
    pub loglik: T,
    pub steps: usize,
    pub converged: bool,
    pub aic: T,
    pub bic: T,
    /// `label_order[k]` is the pre-sorting index of state `k`.
    pub label_order: Vec<usize>,
    pub mmpp: bool,
    pub restart: usize,
}

/// Number of free parameters.
pub fn param_count(m: usize, mmpp: bool) -> usize {
    let hawkes = if mmpp { m } else { 3 * m };
    hawkes + m * (m - 1) + (m - 1)
}

/// `(AIC, BIC)` of a fit on `k_events` events.
pub fn information_criteria<T: Scalar>(result: &FitResult<T>, k_events: usize) -> (T, T) {
    criteria(result.loglik, result.params.m(), result.mmpp, k_events)
}

fn criteria<T: Scalar>(loglik: T, m: usize, mmpp: bool, k_events: usize) -> (T, T) {
    let k = T::of_usize(param_count(m, mmpp));
    let two = T::of(2.0);
    (two * k - two * loglik, k * T::of_usize(k_events).ln() - two * loglik)
}

/// Closed-form update of `(Q, ξ₀)`.
pub fn m_step_markov<T: Scalar>(inf: &InferenceState<T>) -> Result<(Mat<T>, Vec<T>)> {
    let m = inf.m();
    if !inf.estep_done {
        return Err(Error::InvalidInput("E-step statistics have not been computed".into()));
    }
    let mut q = Mat::zeros(m);
    if m > 1 {
        for i in 0..m {
            if !(inf.ed[i] > T::zero()) {
                return Err(Error::StateStarvation { state: i, occupancy: inf.ed[i].as_f64() });
            }
            let mut exit = T::zero();
            for j in 0..m {
                if i != j {
                    let v = (inf.ew[(i, j)] / inf.ed[i]).max(T::zero());
                    q[(i, j)] = v;
                    exit += v;
                }
            }
            q[(i, i)] = -exit;
        }
    }
    let total: T = inf.smoothed_initial.iter().copied().sum();
    let xi0 = if m == 1 {
        vec![T::one()]
    } else if total > T::zero() && total.is_finite() {
        inf.smoothed_initial.iter().map(|&v| v / total).collect()
    } else {
        return Err(Error::Numerical("smoothed initial distribution is degenerate".into()));
    };
    Ok((q, xi0))
}

/// Per-state data of the Hawkes objective, frozen during one M-step.
struct StateObjective<T> {
    durations: Vec<T>,
    /// ℓ_n δ, the lag of the grid point in force at each event.
    arrival_lag: Vec<T>,
    delta: T,
    weights: Vec<T>,
    weight_total: T,
    /// Posterior occupancy of every step of every interval.
    occ: Vec<Vec<T>>,
    occ_total: T,
}

impl<T: Scalar> StateObjective<T> {
    fn new(bundles: &TransitionBundle<T>, inf: &InferenceState<T>, i: usize) -> Self {
        let k = bundles.len();
        let mut durations = Vec::with_capacity(k);
        let mut arrival_lag = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        let mut occ = Vec::with_capacity(k);
        let mut occ_total = T::zero();
        for n in 0..k {
            let iv = bundles.interval(n);
            durations.push(iv.duration);
            arrival_lag.push(T::of_usize(iv.ell) * iv.delta);
            weights.push(inf.smoothed_at_events[n][i]);
            let row: Vec<T> = (0..=iv.ell).map(|s| inf.occupancy(n, s)[i]).collect();
            occ_total += row.iter().copied().sum::<T>();
            occ.push(row);
        }
        let weight_total = weights.iter().copied().sum();
        let delta = bundles.grid.delta;
        Self { durations, arrival_lag, delta, weights, weight_total, occ, occ_total }
    }

    fn value(&self, mu: T, alpha: T, beta: T) -> T {
        if alpha == T::zero() {
            return self.weight_total * mu.ln() - mu * self.occ_total;
        }
        let r = (-beta * self.delta).exp();
        let mut acc = T::zero();
        let mut gain = T::zero();
        let mut comp = T::zero();
        for n in 0..self.durations.len() {
            if n > 0 {
                acc = acc * (-beta * self.durations[n - 1]).exp() + T::one();
            }
            let lam_end = mu + alpha * acc * (-beta * self.arrival_lag[n]).exp();
            if self.weights[n] > T::zero() {
                gain += self.weights[n] * lam_end.ln();
            }
            if acc > T::zero() {
                let mut horner = T::zero();
                for &o in self.occ[n].iter().rev() {
                    horner = horner * r + o;
                }
                comp += acc * horner;
            }
        }
        gain - mu * self.occ_total - alpha * comp
    }

    /// For fixed β: `a_n = A_n e^{-β ℓ_n δ}` and `C = Σ_n A_n Σ_k occ_{n,k} e^{-β kδ}`,
    /// so that `F = Σ w_n log(μ + α a_n) − μ S − α C`.
    fn profile(&self, beta: T) -> (Vec<T>, T) {
        let r = (-beta * self.delta).exp();
        let mut acc = T::zero();
        let mut comp = T::zero();
        let mut a = Vec::with_capacity(self.durations.len());
        for n in 0..self.durations.len() {
            if n > 0 {
                acc = acc * (-beta * self.durations[n - 1]).exp() + T::one();
            }
            a.push(acc * (-beta * self.arrival_lag[n]).exp());
            if acc > T::zero() {
                let mut horner = T::zero();
                for &o in self.occ[n].iter().rev() {
                    horner = horner * r + o;
                }
                comp += acc * horner;
            }
        }
        (a, comp)
    }

    fn profile_value(&self, a: &[T], comp: T, mu: T, alpha: T) -> T {
        let mut gain = T::zero();
        for (&w, &an) in self.weights.iter().zip(a) {
            if w > T::zero() {
                gain += w * (mu + alpha * an).ln();
            }
        }
        gain - mu * self.occ_total - alpha * comp
    }

    /// Maximizes the concave profile in `(μ, α ≥ 0)`, or in μ alone when α is held.
    fn solve_mu_alpha(&self, a: &[T], comp: T, mu0: T, alpha0: T, alpha_free: bool) -> (T, T, T) {
        let s = self.occ_total;
        let mut mu = mu0;
        let mut alpha = alpha0.max(T::zero());
        let mut val = self.profile_value(a, comp, mu, alpha);
        let tiny = T::of(1e-14);
        for _ in 0..100 {
            let (mut g1, mut g2, mut h11, mut h12, mut h22) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
            for (&w, &an) in self.weights.iter().zip(a) {
                if w > T::zero() {
                    let inv = T::one() / (mu + alpha * an);
                    let wi = w * inv;
                    g1 += wi;
                    g2 += wi * an;
                    let wi2 = wi * inv;
                    h11 += wi2;
                    h12 += wi2 * an;
                    h22 += wi2 * an * an;
                }
            }
            g1 -= s;
            g2 -= comp;
            let (dmu, dalpha) = if alpha_free {
                let det = h11 * h22 - h12 * h12;
                if det > tiny * h11 * h22 {
                    ((h22 * g1 - h12 * g2) / det, (h11 * g2 - h12 * g1) / det)
                } else {
                    (g1 / h11, T::zero())
                }
            } else {
                (g1 / h11, T::zero())
            };
            if !(dmu.is_finite() && dalpha.is_finite()) {
                break;
            }
            // Boundary α = 0: take it when the unconstrained step would cross it.
            let mut cand = None;
            if alpha_free && alpha + dalpha < T::zero() {
                let mu_b = self.weight_total / s;
                let v_b = self.profile_value(a, comp, mu_b, T::zero());
                if v_b >= val {
                    cand = Some((mu_b, T::zero(), v_b));
                }
            }
            if cand.is_none() {
                let mut t = T::one();
                while t > T::of(1e-12) {
                    let (m1, a1) = (mu + t * dmu, (alpha + t * dalpha).max(T::zero()));
                    if m1 > T::zero() {
                        let v1 = self.profile_value(a, comp, m1, a1);
                        if v1 >= val {
                            cand = Some((m1, a1, v1));
                            break;
                        }
                    }
                    t *= T::of(0.5);
                }
            }
            let Some((m1, a1, v1)) = cand else { break };
            let moved = (m1 - mu).abs() / mu + (a1 - alpha).abs() / (mu + alpha);
            mu = m1;
            alpha = a1;
            val = v1;
            if moved < T::of(1e-13) {
                break;
            }
        }
        (mu, alpha, val)
    }
}

/// Numerical update of `(μ, α, β)`; never returns a point with a lower objective.
pub fn m_step_hawkes<T: Scalar>(
    params: &ModelParams<T>,
    bundles: &TransitionBundle<T>,
    inf: &InferenceState<T>,
    config: &FitConfig<T>,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let m = params.m();
    let mut mu = params.mu.clone();
    let mut alpha = params.alpha.clone();
    let mut beta = params.beta.clone();
    for i in 0..m {
        let obj = StateObjective::new(bundles, inf, i);
        let a_pin = config.alpha_pinned(i);
        let b_pin = config.beta_pinned(i);
        let a0 = a_pin.unwrap_or(params.alpha[i]);
        let b0 = b_pin.unwrap_or(params.beta[i]);
        let current = obj.value(params.mu[i], a0, b0);
        if !current.is_finite() {
            return Err(Error::Numerical(format!("Hawkes objective of state {i} is not finite")));
        }
        if a_pin == Some(T::zero()) {
            // Poisson state: stationarity in μ gives the update directly.
            if obj.occ_total > T::zero() && obj.weight_total > T::zero() {
                mu[i] = obj.weight_total / obj.occ_total;
            }
            alpha[i] = T::zero();
            beta[i] = b0;
            continue;
        }
        let (mu_n, a_n, b_n, v_n) = match config.inner_method {
            InnerMethod::Profile => profile_search(&obj, params.mu[i], a0, b0, a_pin.is_none(), b_pin.is_none(), config),
            InnerMethod::NelderMead => simplex_search(&obj, params.mu[i], a0, b0, a_pin, b_pin, config),
        };
        if v_n.is_finite() && v_n > current && mu_n > T::zero() && b_n > T::zero() && a_n >= T::zero() {
            mu[i] = mu_n;
            alpha[i] = a_n;
            beta[i] = b_n;
        } else {
            alpha[i] = a0;
            beta[i] = b0;
        }
    }
    Ok((mu, alpha, beta))
}

fn profile_search<T: Scalar>(
    obj: &StateObjective<T>,
    mu0: T,
    a0: T,
    b0: T,
    alpha_free: bool,
    beta_free: bool,
    config: &FitConfig<T>,
) -> (T, T, T, T) {
    if !beta_free {
        let (a, comp) = obj.profile(b0);
        let (mu, alpha, v) = obj.solve_mu_alpha(&a, comp, mu0, a0, alpha_free);
        return (mu, alpha, b0, v);
    }
    let mut warm = (mu0, a0);
    let mut best = (mu0, a0, b0, T::neg_infinity());
    let span = T::of(2.5);
    let lb = b0.ln();
    brent_minimize(
        |lb| {
            let b = lb.exp();
            let (a, comp) = obj.profile(b);
            let (mu, alpha, v) = obj.solve_mu_alpha(&a, comp, warm.0, warm.1, alpha_free);
            if v.is_finite() {
                warm = (mu, alpha);
                if v > best.3 {
                    best = (mu, alpha, b, v);
                }
            }
            -v
        },
        lb - span,
        lb + span,
        config.inner_xtol,
        config.inner_max_iter,
    );
    best
}

fn simplex_search<T: Scalar>(
    obj: &StateObjective<T>,
    mu0: T,
    a0: T,
    b0: T,
    a_pin: Option<T>,
    b_pin: Option<T>,
    config: &FitConfig<T>,
) -> (T, T, T, T) {
    // Free coordinates in log space: μ always, then α and β unless held.
    let a0 = if a_pin.is_none() && a0 == T::zero() { T::of(1e-3) * mu0 } else { a0 };
    let mut x0 = vec![mu0.ln()];
    if a_pin.is_none() {
        x0.push(a0.ln());
    }
    if b_pin.is_none() {
        x0.push(b0.ln());
    }
    let unpack = |x: &[T]| {
        let mut it = x.iter().map(|v| v.exp());
        let mu = it.next().unwrap();
        let a = if a_pin.is_none() { it.next().unwrap() } else { a0 };
        let b = if b_pin.is_none() { it.next().unwrap() } else { b0 };
        (mu, a, b)
    };
    let opts = SimplexOptions { max_iter: config.inner_max_iter, xtol: config.inner_xtol, ftol: T::zero(), step: T::of(0.05) };
    let res = nelder_mead(
        |x| {
            let (mu, a, b) = unpack(x);
            -obj.value(mu, a, b)
        },
        &x0,
        &opts,
    );
    let (mu, a, b) = unpack(&res.x);
    (mu, a, b, -res.fx)
}

/// Deterministic starting point.
pub fn initial_params<T: Scalar>(events: &EventSequence<T>, m: usize, config: &FitConfig<T>) -> Result<ModelParams<T>> {
    if events.len() < 2 {
        return Err(Error::InvalidInput("at least two events are needed to fit".into()));
    }
    if m == 0 || m > MAX_STATES {
        return Err(Error::InvalidInput(format!("number of states must be in 1..={MAX_STATES}")));
    }
    let k = events.len();
    let t_k = events.last_time();
    let rate = T::of_usize(k) / t_k;
    let mf = T::of_usize(m);
    let centre = (m as f64 - 1.0) / 2.0;
    let mut mu = Vec::with_capacity(m);
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    for i in 0..m {
        let mu_i = rate * T::of(2f64.powf(i as f64 - centre));
        let a_i = T::of(0.5) * mu_i * T::of_usize(i + 1) / mf;
        mu.push(mu_i);
        beta.push(T::of(2.0) * a_i * mf);
        alpha.push(a_i);
    }
    for i in 0..m {
        if let Some(a) = config.alpha_pinned(i) {
            alpha[i] = a;
        }
        if let Some(b) = config.beta_pinned(i) {
            beta[i] = b;
        }
    }
    let sojourns = T::of(10.0).max(T::of_usize(k) / T::of(100.0));
    let off = (mf / t_k * sojourns).max(T::of(1e-4)).min(T::of(10.0));
    let mut q = Mat::zeros(m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                q[(i, j)] = off;
            }
        }
        q[(i, i)] = -off * T::of_usize(m - 1);
    }
    let xi0 = vec![T::one() / mf; m];
    ModelParams::new(mu, alpha, beta, q, xi0, config.delta)
}

fn jittered<T: Scalar>(p: &ModelParams<T>, config: &FitConfig<T>, rng: &mut ChaCha8Rng) -> Result<ModelParams<T>> {
    let mut out = p.clone();
    let mut jit = |v: T| v * T::of(rng.gen_range(-0.3..=0.3f64).exp());
    let m = p.m();
    for i in 0..m {
        out.mu[i] = jit(out.mu[i]);
        if config.alpha_pinned(i).is_none() {
            out.alpha[i] = jit(out.alpha[i]);
        }
        if config.beta_pinned(i).is_none() {
            out.beta[i] = jit(out.beta[i]);
        }
    }
    for i in 0..m {
        let mut exit = T::zero();
        for j in 0..m {
            if i != j {
                out.q[(i, j)] = jit(out.q[(i, j)]);
                exit += out.q[(i, j)];
            }
        }
        out.q[(i, i)] = -exit;
    }
    out.validate()?;
    Ok(out)
}

/// Sorts states by ascending α (μ for an MMPP), ties broken by μ then index.
pub fn canonicalize<T: Scalar>(params: &ModelParams<T>, mmpp: bool) -> (ModelParams<T>, Vec<usize>) {
    let mut perm: Vec<usize> = (0..params.m()).collect();
    perm.sort_by(|&a, &b| {
        let key = |i: usize| if mmpp { (params.mu[i], params.mu[i]) } else { (params.alpha[i], params.mu[i]) };
        key(a).partial_cmp(&key(b)).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    (params.permuted(&perm), perm)
}

/// EM from a given starting point, no restarts.
pub fn fit_from<T: Scalar>(events: &EventSequence<T>, start: &ModelParams<T>, config: &FitConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    if events.len() < 2 {
        return Err(Error::InvalidInput("at least two events are needed to fit".into()));
    }
    let mut params = start.with_delta(config.delta);
    for i in 0..params.m() {
        if let Some(a) = config.alpha_pinned(i) {
            params.alpha[i] = a;
        }
        if let Some(b) = config.beta_pinned(i) {
            params.beta[i] = b;
        }
    }
    params.validate()?;
    let t_k = events.last_time();
    let starvation = T::of(1e-8) * t_k;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut steps = 0;
    let mut final_loglik = None;
    for _ in 0..config.max_steps {
        let (bundles, inf) = infer(&params, events)?;
        steps += 1;
        let ll = inf.loglik;
        if let Some(&prev) = trace.last() {
            if ll - prev < config.tol {
                trace.push(ll);
                final_loglik = Some(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if params.m() > 1 {
            for (i, &d) in inf.ed.iter().enumerate() {
                if d < starvation {
                    return Err(Error::StateStarvation { state: i, occupancy: d.as_f64() });
                }
            }
        }
        let (q, xi0) = m_step_markov(&inf)?;
        let (mu, alpha, beta) = m_step_hawkes(&params, &bundles, &inf, config)?;
        params = ModelParams::new(mu, alpha, beta, q, xi0, config.delta)?;
    }
    let loglik = match final_loglik {
        Some(ll) => ll,
        None => {
            // Step budget exhausted: score the last M-step output.
            let bundles = TransitionBundle::build(&params, events)?;
            let ll = log_likelihood(&params, &bundles)?;
            trace.push(ll);
            ll
        }
    };
    let (params, label_order) = canonicalize(&params, config.fix_alpha_zero);
    let (aic, bic) = criteria(loglik, params.m(), config.fix_alpha_zero, events.len());
    Ok(FitResult {
        params,
        loglik_trace: trace,
        loglik,
        steps,
        converged,
        aic,
        bic,
        label_order,
        mmpp: config.fix_alpha_zero,
        restart: 0,
    })
}

/// Full fit: heuristic start plus `restarts - 1` jittered starts, best log-likelihood wins.
pub fn fit<T: Scalar>(events: &EventSequence<T>, m: usize, config: &FitConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    let base = initial_params(events, m, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<FitResult<T>> = None;
    let mut last_err = None;
    for r in 0..config.restarts {
        let start = if r == 0 { base.clone() } else { jittered(&base, config, &mut rng)? };
        match fit_from(events, &start, config) {
            Ok(mut res) => {
                res.restart = r;
                if best.as_ref().map_or(true, |b| res.loglik > b.loglik) {
                    best = Some(res);
                }
            }
            Err(e @ (Error::StateStarvation { .. } | Error::IntervalFailure { .. } | Error::Numerical(_))) => {
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Numerical("no restart succeeded".into())))
}

/// One model of a selection grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SelectionRow {
    pub label: String,
    pub m: usize,
    /// `None` for an MMPP, where δ plays no role.
    pub delta: Option<f64>,
    pub mmpp: bool,
    pub params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub rank_aic: usize,
    pub rank_bic: usize,
    pub error: Option<String>,
}

/// Fits every `(M, δ)` MMHP-δ plus one MMPP per `M` and ranks them by AIC and BIC.
pub fn select_models<T: Scalar>(
    events: &EventSequence<T>,
    m_grid: &[usize],
    delta_grid: &[T],
    include_mmpp: bool,
    config: &FitConfig<T>,
) -> Result<Vec<SelectionRow>> {
    if m_grid.is_empty() || (delta_grid.is_empty() && !include_mmpp) {
        return Err(Error::InvalidInput("empty model grid".into()));
    }
    let mut rows = Vec::new();
    let mut push = |label: String, m: usize, delta: Option<T>, mmpp: bool, res: Result<FitResult<T>>| {
        let (loglik, aic, bic, error) = match res {
            Ok(r) => (r.loglik.as_f64(), r.aic.as_f64(), r.bic.as_f64(), None),
            Err(e) => (f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
        };
        rows.push(SelectionRow {
            label,
            m,
            delta: delta.map(|d| d.as_f64()),
            mmpp,
            params: param_count(m, mmpp),
            loglik,
            aic,
            bic,
            rank_aic: 0,
            rank_bic: 0,
            error,
        });
    };
    for &m in m_grid {
        for &d in delta_grid {
            let cfg = FitConfig { delta: d, fix_alpha_zero: false, ..config.clone() };
            push(format!("MMHP-δ M={m} δ={d}"), m, Some(d), false, fit(events, m, &cfg));
        }
        if include_mmpp {
            let d = delta_grid.first().copied().unwrap_or(config.delta);
            let cfg = FitConfig { delta: d, fix_alpha_zero: true, ..config.clone() };
            push(format!("MMPP M={m}"), m, None, true, fit(events, m, &cfg));
        }
    }
    rank_by(&mut rows, |r| r.aic, |r, k| r.rank_aic = k);
    rank_by(&mut rows, |r| r.bic, |r, k| r.rank_bic = k);
    Ok(rows)
}

fn rank_by(rows: &mut [SelectionRow], key: impl Fn(&SelectionRow) -> f64, set: impl Fn(&mut SelectionRow, usize)) {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (key(&rows[a]), key(&rows[b]));
        match (x.is_nan(), y.is_nan()) {
            (false, false) => x.partial_cmp(&y).unwrap(),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            (true, true) => std::cmp::Ordering::Equal,
        }
        .then(a.cmp(&b))
    });
    for (rank, &i) in idx.iter().enumerate() {
        set(&mut rows[i], rank + 1);
    }
}
