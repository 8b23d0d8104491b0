//! Joint simulation of the hidden chain and the event stream.
//!
//! The δ-model is sampled exactly with competing exponential clocks: between
//! a chain jump, an event and the next δ-boundary every hazard is constant.
//! The continuous-kernel model uses Ogata thinning with the intensity at the
//! current point as the bound (the kernel only decays between events).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{absorb_event, frozen_intensity, EventSequence, ModelParams};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop<T> {
    /// Stop at the K-th event; the horizon becomes `t_K`.
    Events(usize),
    /// Stop at time T.
    Horizon(T),
}

#[derive(Clone, Debug)]
pub struct SimulationResult<T> {
    pub events: EventSequence<T>,
    /// `(time, state)` at time 0 and after every chain jump.
    pub hidden_path: Vec<(T, usize)>,
    pub seed: u64,
    pub params: ModelParams<T>,
}

impl<T: Scalar> SimulationResult<T> {
    /// Hidden state in force at time `t`.
    pub fn state_at(&self, t: T) -> usize {
        let idx = self.hidden_path.partition_point(|&(s, _)| s <= t);
        self.hidden_path[idx.saturating_sub(1)].1
    }

    /// Fraction of `[0, horizon]` spent in each state.
    pub fn occupancy(&self) -> Vec<T> {
        let m = self.params.m();
        let horizon = self.events.horizon();
        let mut out = vec![T::zero(); m];
        for (w, &(t, s)) in self.hidden_path.iter().enumerate() {
            let end = self.hidden_path.get(w + 1).map_or(horizon, |&(u, _)| u).min(horizon);
            if end > t {
                out[s] += end - t;
            }
        }
        if horizon > T::zero() {
            out.iter_mut().for_each(|v| *v /= horizon);
        }
        out
    }
}

struct Clocks {
    rng: ChaCha8Rng,
}

impl Clocks {
    fn exp<T: Scalar>(&mut self, rate: T) -> T {
        if !(rate > T::zero()) {
            return T::infinity();
        }
        let u: f64 = self.rng.gen();
        T::of(-(1.0 - u).ln()) / rate
    }

    fn categorical<T: Scalar>(&mut self, weights: impl Iterator<Item = (usize, T)> + Clone) -> usize {
        let total: T = weights.clone().map(|(_, w)| w).sum();
        let target = T::of(self.rng.gen::<f64>()) * total;
        let mut acc = T::zero();
        let mut last = 0;
        for (i, w) in weights {
            if w > T::zero() {
                last = i;
                acc += w;
                if target < acc {
                    return i;
                }
            }
        }
        last
    }

    fn initial_state<T: Scalar>(&mut self, xi0: &[T]) -> usize {
        self.categorical(xi0.iter().copied().enumerate())
    }

    fn jump<T: Scalar>(&mut self, params: &ModelParams<T>, from: usize) -> usize {
        let m = params.m();
        self.categorical((0..m).filter(move |&j| j != from).map(move |j| (j, params.q[(from, j)])))
    }
}

fn check_stop<T: Scalar>(stop: &Stop<T>) -> Result<()> {
    match *stop {
        Stop::Events(0) => Err(Error::InvalidInput("event target must be positive".into())),
        Stop::Horizon(t) if !(t > T::zero()) || !t.is_finite() => {
            Err(Error::InvalidInput("horizon must be positive and finite".into()))
        }
        _ => Ok(()),
    }
}

fn finish<T: Scalar>(
    times: Vec<T>,
    mut path: Vec<(T, usize)>,
    stop: &Stop<T>,
    seed: u64,
    params: &ModelParams<T>,
) -> Result<SimulationResult<T>> {
    let horizon = match *stop {
        Stop::Events(_) => times.last().copied().unwrap_or(T::zero()),
        Stop::Horizon(t) => t,
    };
    path.retain(|&(t, _)| t <= horizon);
    let events = EventSequence::new(times, horizon)?;
    Ok(SimulationResult { events, hidden_path: path, seed, params: params.clone() })
}

/// Exact simulation of the MMHP-δ.
pub fn simulate_mmhp_delta<T: Scalar>(params: &ModelParams<T>, stop: Stop<T>, seed: u64) -> Result<SimulationResult<T>> {
    params.validate()?;
    check_stop(&stop)?;
    let m = params.m();
    let mut clk = Clocks { rng: ChaCha8Rng::seed_from_u64(seed) };
    let mut state = clk.initial_state(&params.xi0);
    let mut path = vec![(T::zero(), state)];
    let mut times: Vec<T> = Vec::new();
    let mut acc = vec![T::zero(); m];
    let mut t = T::zero();
    // Grid anchored at the last event; before the first event the intensity is μ.
    let mut anchor: Option<T> = None;
    let mut step = 0usize;
    let limit = match stop {
        Stop::Horizon(h) => h,
        Stop::Events(_) => T::infinity(),
    };
    loop {
        let lam = frozen_intensity(&params.mu, &params.alpha, &params.beta, &acc, step, params.delta)[state];
        let boundary = anchor.map_or(T::infinity(), |a| a + T::of_usize(step + 1) * params.delta);
        let t_jump = t + clk.exp(params.exit_rate(state));
        let t_event = t + clk.exp(lam);
        let next = t_jump.min(t_event).min(boundary);
        if next > limit {
            break;
        }
        if next == t_event {
            if t_event <= t {
                // Draw below the time resolution; memorylessness allows a redraw.
                continue;
            }
            if let Some(prev) = times.last().copied() {
                absorb_event(&mut acc, &params.beta, t_event - prev);
            } else {
                acc.iter_mut().for_each(|a| *a = T::one());
            }
            t = t_event;
            times.push(t);
            anchor = Some(t);
            step = 0;
            if let Stop::Events(k) = stop {
                if times.len() == k {
                    break;
                }
            }
        } else if next == t_jump {
            t = t_jump;
            state = clk.jump(params, state);
            path.push((t, state));
        } else {
            t = boundary;
            step += 1;
        }
    }
    finish(times, path, &stop, seed, params)
}

/// Ogata-thinning simulation of the continuous-kernel MMHP.
pub fn simulate_mmhp_continuous<T: Scalar>(
    params: &ModelParams<T>,
    stop: Stop<T>,
    seed: u64,
) -> Result<SimulationResult<T>> {
    params.validate()?;
    check_stop(&stop)?;
    let m = params.m();
    let mut clk = Clocks { rng: ChaCha8Rng::seed_from_u64(seed) };
    let mut state = clk.initial_state(&params.xi0);
    let mut path = vec![(T::zero(), state)];
    let mut times: Vec<T> = Vec::new();
    // Σ_l e^{-βⁱ(t_last - t_l)} including the last event.
    let mut acc = vec![T::zero(); m];
    let limit = match stop {
        Stop::Horizon(h) => h,
        Stop::Events(_) => T::infinity(),
    };
    let intensity = |acc: &[T], times: &[T], s: usize, at: T| -> T {
        match times.last() {
            None => params.mu[s],
            Some(&last) => params.mu[s] + params.alpha[s] * acc[s] * (-params.beta[s] * (at - last)).exp(),
        }
    };
    let mut t = T::zero();
    loop {
        let bound = intensity(&acc, &times, state, t);
        let t_jump = t + clk.exp(params.exit_rate(state));
        let t_cand = t + clk.exp(bound);
        if t_jump.min(t_cand) > limit {
            break;
        }
        if t_jump < t_cand {
            t = t_jump;
            state = clk.jump(params, state);
            path.push((t, state));
            continue;
        }
        t = t_cand;
        let lam = intensity(&acc, &times, state, t);
        assert!(lam <= bound * (T::one() + T::epsilon() * T::of(16.0)), "thinning bound violated");
        let u = T::of(clk.rng.gen::<f64>());
        if u * bound < lam && t > times.last().copied().unwrap_or(T::zero()) {
            match times.last().copied() {
                Some(prev) => absorb_event(&mut acc, &params.beta, t - prev),
                None => acc.iter_mut().for_each(|a| *a = T::one()),
            }
            times.push(t);
            if let Stop::Events(k) = stop {
                if times.len() == k {
                    break;
                }
            }
        }
    }
    finish(times, path, &stop, seed, params)
}
