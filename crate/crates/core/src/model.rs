//! Model parameters, event sequences, the δ-grid decomposition of inter-event
//! intervals and the piecewise-constant conditional intensity.
//!
//! Intervals and states are 0-based: interval `n` spans `(t_{n-1}, t_n]` with
//! `t_{-1} := 0`, and grid step `k` of interval `n` starts at `t_{n-1} + kδ`.
//! Within interval `n` the intensity of state `i` on `(t_{n-1}+kδ, t_{n-1}+(k+1)δ]`
//! is frozen at
//!
//! ```text
//! λⁱ(n, k) = μⁱ + αⁱ Σ_{t_l ≤ t_{n-1}} exp(-βⁱ (t_{n-1} + kδ - t_l))
//! ```
//!
//! so the event that opened the interval contributes its full jump `αⁱ` on the
//! first step.

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::scalar::Scalar;

/// Upper bound on the number of hidden states.
pub const MAX_STATES: usize = 10;

/// Intensities of every state at one grid point, events per second.
pub type IntensityVector<T> = Vec<T>;

/// Full parameter set: Hawkes part `(μ, α, β)`, Markov part `(Q, ξ₀)` and the
/// discretization step δ.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub mu: Vec<T>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    pub q: Mat<T>,
    pub xi0: Vec<T>,
    pub delta: T,
}

impl<T: Scalar> ModelParams<T> {
    pub fn new(
        mu: Vec<T>,
        alpha: Vec<T>,
        beta: Vec<T>,
        q: Mat<T>,
        xi0: Vec<T>,
        delta: T,
    ) -> Result<Self> {
        let p = Self { mu, alpha, beta, q, xi0, delta };
        p.validate()?;
        Ok(p)
    }

    /// Number of hidden states.
    #[inline]
    pub fn m(&self) -> usize {
        self.mu.len()
    }

    /// Exit rate `q_i = -q_ii`.
    pub fn exit_rate(&self, i: usize) -> T {
        -self.q[(i, i)]
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mu.len();
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if m == 0 || m > MAX_STATES {
            return bad(format!("number of states must be in 1..={MAX_STATES}, got {m}"));
        }
        if self.alpha.len() != m || self.beta.len() != m || self.xi0.len() != m || self.q.order() != m {
            return bad("parameter dimensions disagree".into());
        }
        for i in 0..m {
            if !(self.mu[i] > T::zero()) || !self.mu[i].is_finite() {
                return bad(format!("mu[{i}] must be positive"));
            }
            if !(self.alpha[i] >= T::zero()) || !self.alpha[i].is_finite() {
                return bad(format!("alpha[{i}] must be non-negative"));
            }
            if !(self.beta[i] > T::zero()) || !self.beta[i].is_finite() {
                return bad(format!("beta[{i}] must be positive"));
            }
        }
        let tol = T::of(1e-12);
        for i in 0..m {
            let mut row = T::zero();
            for j in 0..m {
                let v = self.q[(i, j)];
                if !v.is_finite() {
                    return bad(format!("Q[{i}][{j}] is not finite"));
                }
                if i != j && v < T::zero() {
                    return bad(format!("Q[{i}][{j}] must be non-negative"));
                }
                row += v;
            }
            let scale = T::one().max(self.q[(i, i)].abs());
            if row.abs() > tol * scale {
                return bad(format!("row {i} of Q sums to {row}, expected 0"));
            }
        }
        let mut total = T::zero();
        for (i, &x) in self.xi0.iter().enumerate() {
            if !(x >= T::zero()) {
                return bad(format!("xi0[{i}] must be non-negative"));
            }
            total += x;
        }
        if (total - T::one()).abs() > tol.max(T::epsilon() * T::of(8.0)) {
            return bad(format!("xi0 sums to {total}, expected 1"));
        }
        if !(self.delta > T::zero()) || !self.delta.is_finite() {
            return bad("delta must be positive".into());
        }
        Ok(())
    }

    /// Same parameters with every excitation set to zero (the MMPP special case).
    pub fn without_excitation(&self) -> Self {
        let mut p = self.clone();
        p.alpha.iter_mut().for_each(|a| *a = T::zero());
        p
    }

    /// Relabels states: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let m = self.m();
        assert_eq!(perm.len(), m);
        let pick = |v: &[T]| perm.iter().map(|&p| v[p]).collect::<Vec<_>>();
        let mut q = Mat::zeros(m);
        for a in 0..m {
            for b in 0..m {
                q[(a, b)] = self.q[(perm[a], perm[b])];
            }
        }
        Self {
            mu: pick(&self.mu),
            alpha: pick(&self.alpha),
            beta: pick(&self.beta),
            q,
            xi0: pick(&self.xi0),
            delta: self.delta,
        }
    }

    pub fn kernel(&self, i: usize) -> ExponentialKernel<T> {
        ExponentialKernel { alpha: self.alpha[i], beta: self.beta[i] }
    }

    pub fn with_delta(&self, delta: T) -> Self {
        Self { delta, ..self.clone() }
    }
}

/// Excitation kernel: a non-negative, non-increasing function of the lag.
pub trait Kernel<T> {
    fn value(&self, lag: T) -> T;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentialKernel<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> Kernel<T> for ExponentialKernel<T> {
    #[inline]
    fn value(&self, lag: T) -> T {
        self.alpha * (-self.beta * lag).exp()
    }
}

/// Strictly increasing event times on `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EventSequence<T> {
    times: Vec<T>,
    horizon: T,
}

impl<T: Scalar> EventSequence<T> {
    pub fn new(times: Vec<T>, horizon: T) -> Result<Self> {
        let mut prev = T::zero();
        for (n, &t) in times.iter().enumerate() {
            if !t.is_finite() || t <= prev {
                return Err(Error::InvalidInput(format!(
                    "event times must be finite and strictly increasing from 0; event {n} at {t} follows {prev}"
                )));
            }
            prev = t;
        }
        if !horizon.is_finite() || horizon < prev {
            return Err(Error::InvalidInput(format!(
                "horizon {horizon} precedes the last event {prev}"
            )));
        }
        Ok(Self { times, horizon })
    }

    /// Sequence whose horizon is its last event time.
    pub fn from_times(times: Vec<T>) -> Result<Self> {
        let horizon = times.last().copied().unwrap_or(T::zero());
        Self::new(times, horizon)
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Last event time, or 0 for an empty sequence.
    pub fn last_time(&self) -> T {
        self.times.last().copied().unwrap_or(T::zero())
    }

    /// Start of interval `n`, i.e. `t_{n-1}` with `t_{-1} = 0`.
    pub fn interval_start(&self, n: usize) -> T {
        if n == 0 {
            T::zero()
        } else {
            self.times[n - 1]
        }
    }

    pub fn durations(&self) -> Vec<T> {
        let mut prev = T::zero();
        self.times
            .iter()
            .map(|&t| {
                let x = t - prev;
                prev = t;
                x
            })
            .collect()
    }

    /// First `k` events, with the horizon moved to the last retained event.
    pub fn truncated(&self, k: usize) -> Self {
        let times = self.times[..k.min(self.times.len())].to_vec();
        let horizon = times.last().copied().unwrap_or(T::zero());
        Self { times, horizon }
    }
}

/// Decomposition `x_n = ℓ_n δ + Δ_n` of one inter-event interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridStep<T> {
    /// Number of full δ-steps before the residual segment.
    pub ell: usize,
    /// Length of the residual segment, in `(0, δ]`.
    pub residual: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalGrid<T> {
    pub delta: T,
    pub steps: Vec<GridStep<T>>,
}

impl<T: Scalar> IntervalGrid<T> {
    /// Total number of segments (full steps plus residuals) across all intervals.
    pub fn segment_count(&self) -> usize {
        self.steps.iter().map(|s| s.ell + 1).sum()
    }

    /// Grid with a single segment per interval. Only meaningful when the
    /// intensity does not change inside an interval (no excitation).
    pub fn collapsed(events: &EventSequence<T>) -> Self {
        let durations = events.durations();
        let delta = durations.iter().copied().fold(T::zero(), T::max);
        Self {
            delta: if delta > T::zero() { delta } else { T::one() },
            steps: durations.into_iter().map(|x| GridStep { ell: 0, residual: x }).collect(),
        }
    }
}

/// Splits a duration into full δ-steps and a residual in `(0, δ]`. An exact
/// multiple `x = Lδ` yields `(L-1, δ)`.
pub fn split_duration<T: Scalar>(x: T, delta: T) -> GridStep<T> {
    let ratio = x / delta;
    let mut ell = ratio.floor().to_usize().unwrap_or(0);
    let mut residual = x - T::of_usize(ell) * delta;
    let tie = delta * T::epsilon() * T::of(16.0);
    if residual <= tie && ell > 0 {
        ell -= 1;
        residual = residual + delta;
    }
    if residual > delta + tie {
        // floor() landed one step low because of rounding in x/δ.
        let extra = ((residual - delta) / delta).ceil().to_usize().unwrap_or(1).max(1);
        ell += extra;
        residual = x - T::of_usize(ell) * delta;
    }
    if residual <= T::zero() {
        residual = x.min(delta).max(T::min_positive_value());
    }
    GridStep { ell, residual }
}

/// Computes `(ℓ_n, Δ_n)` for every interval.
pub fn grid_decompose<T: Scalar>(events: &EventSequence<T>, delta: T) -> Result<IntervalGrid<T>> {
    if !(delta > T::zero()) || !delta.is_finite() {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let mut steps = Vec::with_capacity(events.len());
    for (n, x) in events.durations().into_iter().enumerate() {
        if !(x > T::zero()) {
            return Err(Error::InvalidInput(format!("interval {n} has non-positive duration")));
        }
        steps.push(split_duration(x, delta));
    }
    Ok(IntervalGrid { delta, steps })
}

/// Grid intensities of the exponential-kernel model.
///
/// Holds the per-interval excitation sums `Aⁱ_n = Σ_{t_l ≤ t_{n-1}} exp(-βⁱ(t_{n-1}-t_l))`,
/// built in one pass, so that every grid value costs O(M).
#[derive(Clone, Debug)]
pub struct IntensityTable<T> {
    mu: Vec<T>,
    alpha: Vec<T>,
    beta: Vec<T>,
    delta: T,
    excitation: Vec<Vec<T>>,
}

impl<T: Scalar> IntensityTable<T> {
    pub fn new(params: &ModelParams<T>, events: &EventSequence<T>) -> Self {
        let m = params.m();
        let mut excitation = Vec::with_capacity(events.len());
        let mut acc = vec![T::zero(); m];
        let durations = events.durations();
        for n in 0..durations.len() {
            if n > 0 {
                // Fold in the event at t_{n-1} after decaying over the previous interval.
                absorb_event(&mut acc, &params.beta, durations[n - 1]);
            }
            excitation.push(acc.clone());
        }
        Self {
            mu: params.mu.clone(),
            alpha: params.alpha.clone(),
            beta: params.beta.clone(),
            delta: params.delta,
            excitation,
        }
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    /// `Aⁱ_n` for every state.
    pub fn excitation(&self, n: usize) -> &[T] {
        &self.excitation[n]
    }

    /// `λⁱ(n, k)` for every state.
    pub fn at(&self, n: usize, k: usize) -> IntensityVector<T> {
        frozen_intensity(&self.mu, &self.alpha, &self.beta, &self.excitation[n], k, self.delta)
    }
}

/// Decays the excitation sums over `x` and adds the event at the end of it.
pub fn absorb_event<T: Scalar>(acc: &mut [T], beta: &[T], x: T) {
    for (a, &b) in acc.iter_mut().zip(beta) {
        *a = *a * (-b * x).exp() + T::one();
    }
}

/// `μⁱ + αⁱ Aⁱ e^{-βⁱ kδ}` for every state, given the excitation sums `Aⁱ` at the anchor.
pub fn frozen_intensity<T: Scalar>(mu: &[T], alpha: &[T], beta: &[T], acc: &[T], k: usize, delta: T) -> IntensityVector<T> {
    let lag = T::of_usize(k) * delta;
    (0..mu.len())
        .map(|i| {
            let ex = if acc[i] == T::zero() || alpha[i] == T::zero() {
                T::zero()
            } else {
                alpha[i] * acc[i] * (-beta[i] * lag).exp()
            };
            mu[i] + ex
        })
        .collect()
}

/// `λ(t_{n-1} + kδ)` for `0 ≤ k ≤ ℓ_n`.
pub fn intensity_at_grid<T: Scalar>(
    params: &ModelParams<T>,
    events: &EventSequence<T>,
    grid: &IntervalGrid<T>,
    n: usize,
    k: usize,
) -> Result<IntensityVector<T>> {
    let step = grid
        .steps
        .get(n)
        .ok_or_else(|| Error::OutOfRange(format!("interval {n} of {}", grid.steps.len())))?;
    if k > step.ell {
        return Err(Error::OutOfRange(format!("step {k} exceeds ell = {}", step.ell)));
    }
    Ok(IntensityTable::new(params, events).at(n, k))
}

/// Stationary distribution π of an irreducible generator (πQ = 0, Σπ = 1).
pub fn stationary_distribution<T: Scalar>(q: &Mat<T>) -> Result<Vec<T>> {
    let m = q.order();
    if m == 1 {
        return Ok(vec![T::one()]);
    }
    // Qᵀ πᵀ = 0 with the last equation replaced by the normalization.
    let mut a = q.transpose();
    for j in 0..m {
        a[(m - 1, j)] = T::one();
    }
    let mut rhs = Mat::zeros(m);
    rhs[(m - 1, 0)] = T::one();
    let sol = a.solve(&rhs).map_err(|_| {
        Error::Numerical("generator is reducible: stationary system is singular".into())
    })?;
    let pi: Vec<T> = (0..m).map(|i| sol[(i, 0)]).collect();
    let tol = T::of(1e-10);
    if let Some(i) = pi.iter().position(|&p| !(p > tol) || !p.is_finite()) {
        return Err(Error::Numerical(format!(
            "generator is not irreducible: stationary mass of state {i} is {}",
            pi[i]
        )));
    }
    let residual = q.left_mul_vec(&pi).iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if residual > T::of(1e-8) * T::one().max(q.max_abs()) {
        return Err(Error::Numerical(format!("stationary residual {residual} too large")));
    }
    Ok(pi)
}
