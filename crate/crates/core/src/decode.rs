//! Most likely hidden path: batch Viterbi and its streaming counterpart.
//!
//! The path score is `max_{s₀} ξ₀(s₀) ∏_n f⁽ⁿ⁾_{s_{n-1} s_n}` with
//! `f = H Λ(t_n⁻)`, computed in the log domain.

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::model::{absorb_event, frozen_intensity, split_duration, EventSequence, ModelParams};
use crate::scalar::Scalar;
use crate::transition::{substochastic_exp, IntervalBundle, TransitionBundle};

#[derive(Clone, Debug)]
pub struct ViterbiTrace<T> {
    /// `log η_n^j`: best log score of a path ending in `j` right after event `n`.
    pub log_eta: Vec<Vec<T>>,
    /// `psi[n][j]`: state before event `n` on the best path into `j`
    /// (for `n = 0`, the state at time 0).
    pub psi: Vec<Vec<usize>>,
    /// Decoded state right after each event.
    pub states: Vec<usize>,
}

impl<T: Scalar> ViterbiTrace<T> {
    /// Log score of the decoded path.
    pub fn best_score(&self) -> T {
        self.log_eta.last().map_or(T::neg_infinity(), |row| row[argmax(row)])
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `η_j = max_i prev_i + ln f_ij`, with the maximizing `i`.
fn max_product<T: Scalar>(prev: &[T], f: &Mat<T>) -> (Vec<T>, Vec<usize>) {
    let m = prev.len();
    let mut eta = vec![T::neg_infinity(); m];
    let mut arg = vec![0; m];
    for j in 0..m {
        for i in 0..m {
            let v = prev[i] + f[(i, j)].ln();
            if v > eta[j] {
                eta[j] = v;
                arg[j] = i;
            }
        }
    }
    (eta, arg)
}

fn log_vec<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|x| x.ln()).collect()
}

/// Batch Viterbi over prebuilt transition factors.
pub fn viterbi<T: Scalar>(params: &ModelParams<T>, bundles: &TransitionBundle<T>) -> Result<ViterbiTrace<T>> {
    let k = bundles.len();
    if k == 0 {
        return Err(Error::InvalidInput("cannot decode an empty event sequence".into()));
    }
    let mut log_eta = Vec::with_capacity(k);
    let mut psi = Vec::with_capacity(k);
    let mut prev = log_vec(&params.xi0);
    for (n, iv) in bundles.intervals.iter().enumerate() {
        let (eta, arg) = max_product(&prev, &iv.f);
        if eta.iter().all(|v| *v == T::neg_infinity()) || eta.iter().any(|v| v.is_nan()) {
            return Err(Error::Decode(n));
        }
        prev = eta.clone();
        log_eta.push(eta);
        psi.push(arg);
    }
    let mut states = vec![0; k];
    states[k - 1] = argmax(&log_eta[k - 1]);
    for n in (0..k - 1).rev() {
        states[n] = psi[n + 1][states[n + 1]];
    }
    Ok(ViterbiTrace { log_eta, psi, states })
}

/// Builds the transition factors and decodes.
pub fn viterbi_events<T: Scalar>(params: &ModelParams<T>, events: &EventSequence<T>) -> Result<ViterbiTrace<T>> {
    let bundles = TransitionBundle::build(params, events)?;
    viterbi(params, &bundles)
}

/// Fraction of `[0, t_K]` attributed to each state, counting the interval
/// ending at event `n` as spent in `states[n]`.
pub fn path_occupancy<T: Scalar>(events: &EventSequence<T>, states: &[usize], m: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m];
    let total = events.last_time();
    for (x, &s) in events.durations().into_iter().zip(states) {
        out[s] += x;
    }
    if total > T::zero() {
        out.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Streaming decoder.
///
/// Scores are anchored at the last event; the no-event transition from the
/// anchor to the current time is rebuilt from cached δ-step factors, so any
/// sequence of advances gives the same scores as a single one.
#[derive(Clone, Debug)]
pub struct OnlineDecoderState<T> {
    params: ModelParams<T>,
    /// Renormalized `log η` right after the last event (`log ξ₀` before any event).
    anchor_eta: Vec<T>,
    anchor: T,
    now: T,
    count: usize,
    /// Excitation sums in force after the anchor.
    acc: Vec<T>,
    /// `E_0 ⋯ E_{k-1}` from the anchor, divided by `e^{prod_log_scale}`.
    prod: Mat<T>,
    prod_steps: usize,
    prod_log_scale: T,
    log_eta: Vec<T>,
    state: usize,
}

impl<T: Scalar> OnlineDecoderState<T> {
    /// Current renormalized `log η` (maximum entry 0).
    pub fn log_eta(&self) -> &[T] {
        &self.log_eta
    }

    /// Most likely current state.
    pub fn state(&self) -> usize {
        self.state
    }

    pub fn time(&self) -> T {
        self.now
    }

    pub fn last_event_time(&self) -> T {
        self.anchor
    }

    pub fn event_count(&self) -> usize {
        self.count
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    fn lam(&self, k: usize) -> Vec<T> {
        let p = &self.params;
        frozen_intensity(&p.mu, &p.alpha, &p.beta, &self.acc, k, p.delta)
    }

    fn set_anchor(&mut self, eta: Vec<T>, at: T) {
        let top = eta[argmax(&eta)];
        let eta: Vec<T> = eta.into_iter().map(|v| v - top).collect();
        self.state = argmax(&eta);
        self.log_eta = eta.clone();
        self.anchor_eta = eta;
        self.anchor = at;
        self.now = at;
        self.prod = Mat::identity(self.params.m());
        self.prod_steps = 0;
        self.prod_log_scale = T::zero();
    }

    /// Moves the clock to `now` without an event and returns the most likely state.
    pub fn online_advance(&mut self, now: T) -> Result<usize> {
        if !(now >= self.now) || !now.is_finite() {
            return Err(Error::InvalidInput(format!("time went backwards: {now} < {}", self.now)));
        }
        let u = now - self.anchor;
        self.now = now;
        if u == T::zero() {
            self.log_eta = self.anchor_eta.clone();
            self.state = argmax(&self.log_eta);
            return Ok(self.state);
        }
        let step = split_duration(u, self.params.delta);
        while self.prod_steps < step.ell {
            let e = substochastic_exp(&self.params.q.minus_diag(&self.lam(self.prod_steps)), self.params.delta)?;
            let next = &self.prod * &e;
            let top = next.max_abs();
            if !(top > T::zero()) || !top.is_finite() {
                return Err(Error::Numerical("no-event transition underflowed".into()));
            }
            self.prod = next.scale(T::one() / top);
            self.prod_log_scale += top.ln();
            self.prod_steps += 1;
        }
        let partial = substochastic_exp(&self.params.q.minus_diag(&self.lam(step.ell)), step.residual)?;
        let r = &self.prod * &partial;
        let (mut eta, _) = max_product(&self.anchor_eta, &r);
        if eta.iter().all(|v| *v == T::neg_infinity()) {
            return Err(Error::Decode(self.count));
        }
        let top = eta[argmax(&eta)];
        eta.iter_mut().for_each(|v| *v -= top);
        self.state = argmax(&eta);
        self.log_eta = eta;
        Ok(self.state)
    }

    /// Processes an event at `t` and returns the most likely state right after it.
    pub fn online_event(&mut self, t: T) -> Result<usize> {
        if !(t >= self.now) || !t.is_finite() {
            return Err(Error::InvalidInput(format!("time went backwards: {t} < {}", self.now)));
        }
        let x = t - self.anchor;
        if !(x > T::zero()) {
            return Err(Error::InvalidInput(format!("event at {t} does not follow the previous one")));
        }
        let p = &self.params;
        let step = split_duration(x, p.delta);
        let lam: Vec<Vec<T>> = (0..=step.ell).map(|k| self.lam(k)).collect();
        let bundle = IntervalBundle::new(&p.q, lam, x, step.ell, step.residual, p.delta)
            .map_err(|e| Error::IntervalFailure { interval: self.count, reason: e.to_string() })?;
        let (eta, _) = max_product(&self.anchor_eta, &bundle.f);
        if eta.iter().all(|v| *v == T::neg_infinity()) {
            return Err(Error::Decode(self.count));
        }
        let beta = self.params.beta.clone();
        absorb_event(&mut self.acc, &beta, x);
        self.count += 1;
        self.set_anchor(eta, t);
        Ok(self.state)
    }
}

/// Primes a streaming decoder with a history (possibly empty).
pub fn online_init<T: Scalar>(params: &ModelParams<T>, history: &EventSequence<T>) -> Result<OnlineDecoderState<T>> {
    params.validate()?;
    let m = params.m();
    let mut st = OnlineDecoderState {
        params: params.clone(),
        anchor_eta: Vec::new(),
        anchor: T::zero(),
        now: T::zero(),
        count: 0,
        acc: vec![T::zero(); m],
        prod: Mat::identity(m),
        prod_steps: 0,
        prod_log_scale: T::zero(),
        log_eta: Vec::new(),
        state: 0,
    };
    if history.is_empty() {
        let eta = log_vec(&params.xi0);
        st.state = argmax(&eta);
        st.log_eta = eta.clone();
        st.anchor_eta = eta;
        return Ok(st);
    }
    let trace = viterbi_events(params, history)?;
    for x in history.durations() {
        absorb_event(&mut st.acc, &params.beta, x);
    }
    st.count = history.len();
    st.set_anchor(trace.log_eta.last().unwrap().clone(), history.last_time());
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::simulate::{simulate_mmhp_delta, Stop};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(m: usize, rng: &mut ChaCha8Rng) -> ModelParams<f64> {
        let mut q = Mat::zeros(m);
        for i in 0..m {
            let mut s = 0.0;
            for j in 0..m {
                if i != j {
                    q[(i, j)] = rng.gen_range(0.1..2.0);
                    s += q[(i, j)];
                }
            }
            q[(i, i)] = -s;
        }
        let mut xi0: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
        let tot: f64 = xi0.iter().sum();
        xi0.iter_mut().for_each(|x| *x /= tot);
        ModelParams::new(
            (0..m).map(|_| rng.gen_range(0.3..2.0)).collect(),
            (0..m).map(|_| rng.gen_range(0.0..3.0)).collect(),
            (0..m).map(|_| rng.gen_range(1.0..8.0)).collect(),
            q,
            xi0,
            rng.gen_range(0.05..0.3),
        )
        .unwrap()
    }

    fn random_events(k: usize, rng: &mut ChaCha8Rng) -> EventSequence<f64> {
        let mut t = 0.0;
        EventSequence::from_times((0..k).map(|_| { t += rng.gen_range(0.01..1.2); t }).collect()).unwrap()
    }

    fn brute_force(params: &ModelParams<f64>, bundles: &TransitionBundle<f64>) -> (f64, Vec<usize>) {
        let m = params.m();
        let k = bundles.len();
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let total = m.pow(k as u32);
        for code in 0..total {
            let mut c = code;
            let path: Vec<usize> = (0..k).map(|_| { let s = c % m; c /= m; s }).collect();
            let mut score = f64::NEG_INFINITY;
            for s0 in 0..m {
                let mut v = params.xi0[s0].ln();
                let mut prev = s0;
                for (n, &s) in path.iter().enumerate() {
                    v += bundles.interval(n).f[(prev, s)].ln();
                    prev = s;
                }
                score = score.max(v);
            }
            if score > best.0 {
                best = (score, path);
            }
        }
        best
    }

    #[test]
    fn matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..20 {
            let m = 2 + case % 2;
            let k = rng.gen_range(1..=7);
            let p = random_params(m, &mut rng);
            let ev = random_events(k, &mut rng);
            let b = TransitionBundle::build(&p, &ev).unwrap();
            let tr = viterbi(&p, &b).unwrap();
            let (score, path) = brute_force(&p, &b);
            assert_eq!(tr.states, path, "case {case}");
            assert!((tr.best_score() - score).abs() < 1e-9);
        }
    }

    #[test]
    fn occupancy_of_a_path() {
        let ev = EventSequence::from_times(vec![1.0, 1.5, 4.0]).unwrap();
        assert_eq!(path_occupancy(&ev, &[0, 1, 1], 3), vec![0.25, 0.75, 0.0]);
    }

    #[test]
    fn single_state_and_frozen_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::new(vec![1.0], vec![0.5], vec![2.0], Mat::zeros(1), vec![1.0], 0.1).unwrap();
        let ev = random_events(6, &mut rng);
        assert_eq!(viterbi_events(&p, &ev).unwrap().states, vec![0; 6]);
        let mut p = random_params(2, &mut rng);
        p.q = Mat::zeros(2);
        p.xi0 = vec![0.0, 1.0];
        assert_eq!(viterbi_events(&p, &ev).unwrap().states, vec![1; 6]);
    }

    #[test]
    fn backpointers_reproduce_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_params(3, &mut rng);
        let ev = random_events(40, &mut rng);
        let b = TransitionBundle::build(&p, &ev).unwrap();
        let tr = viterbi(&p, &b).unwrap();
        let s0 = tr.psi[0][tr.states[0]];
        let mut v = p.xi0[s0].ln();
        let mut prev = s0;
        for (n, &s) in tr.states.iter().enumerate() {
            v += b.interval(n).f[(prev, s)].ln();
            prev = s;
        }
        assert!((v - tr.best_score()).abs() < 1e-9);
    }

    #[test]
    fn online_matches_batch_at_events() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_params(2, &mut rng);
        let sim = simulate_mmhp_delta(&p, Stop::Events(300), 4).unwrap();
        let tr = viterbi_events(&p, &sim.events).unwrap();
        let mut dec = online_init(&p, &EventSequence::from_times(vec![]).unwrap()).unwrap();
        assert_eq!(dec.log_eta(), log_vec(&p.xi0).as_slice());
        let mut prev = 0.0;
        for (n, &t) in sim.events.times().iter().enumerate() {
            dec.online_advance(prev + 0.5 * (t - prev)).unwrap();
            let s = dec.online_event(t).unwrap();
            assert_eq!(s, argmax(&tr.log_eta[n]), "event {n}");
            prev = t;
        }
    }

    #[test]
    fn init_from_history_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_params(3, &mut rng);
        let ev = random_events(100, &mut rng);
        let tr = viterbi_events(&p, &ev).unwrap();
        let dec = online_init(&p, &ev).unwrap();
        assert_eq!(dec.state(), tr.states[99]);
        let one = online_init(&p, &ev.truncated(1)).unwrap();
        let row = &tr.log_eta[0];
        let top = row[argmax(row)];
        for (a, b) in one.log_eta().iter().zip(row) {
            assert!((a - (b - top)).abs() < 1e-12);
        }
        // Continuing online from the history equals a batch run over everything.
        let mut cont = online_init(&p, &ev.truncated(60)).unwrap();
        for (n, &t) in ev.times().iter().enumerate().skip(60) {
            assert_eq!(cont.online_event(t).unwrap(), argmax(&tr.log_eta[n]));
        }
    }

    #[test]
    fn advances_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_params(2, &mut rng);
        let ev = random_events(10, &mut rng);
        let mut a = online_init(&p, &ev).unwrap();
        let mut b = a.clone();
        let t = ev.last_time();
        a.online_advance(t + 0.37).unwrap();
        a.online_advance(t + 1.93).unwrap();
        b.online_advance(t + 1.93).unwrap();
        assert_eq!(a.log_eta(), b.log_eta());
        assert_eq!(a.state(), b.state());
        let before = b.log_eta().to_vec();
        b.online_advance(t + 1.93).unwrap();
        assert_eq!(b.log_eta(), before.as_slice());
        assert!(b.online_advance(t).is_err());
        assert!(b.online_event(t + 1.0).is_err());
    }

    #[test]
    fn single_state_bookkeeping() {
        let p = ModelParams::new(vec![1.5], vec![0.0], vec![1.0], Mat::zeros(1), vec![1.0], 0.1).unwrap();
        let mut dec = online_init(&p, &EventSequence::from_times(vec![]).unwrap()).unwrap();
        let b = TransitionBundle::build(&p, &EventSequence::from_times(vec![0.8f64]).unwrap()).unwrap();
        // log f = −∫λ + log λ for a single state.
        assert!((b.interval(0).f[(0, 0)].ln() - (-1.5 * 0.8 + 1.5f64.ln())).abs() < 1e-12);
        assert_eq!(dec.online_event(0.8).unwrap(), 0);
        assert_eq!(dec.log_eta(), &[0.0]);
    }

    #[test]
    fn silence_flips_to_the_quiet_state() {
        // State 1 is busy and leaves quickly; after a burst, a long silence
        // makes the quiet state 0 the better explanation.
        let p = ModelParams::new(
            vec![0.2, 5.0],
            vec![0.0, 2.0],
            vec![1.0, 4.0],
            Mat::from_rows(&[vec![-0.05, 0.05], vec![3.0, -3.0]]).unwrap(),
            vec![0.5, 0.5],
            0.1,
        )
        .unwrap();
        let times: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
        let ev = EventSequence::from_times(times.clone()).unwrap();
        let mut dec = online_init(&p, &ev).unwrap();
        assert_eq!(dec.state(), 1);
        let t = ev.last_time();
        let mut flipped = None;
        for s in 1..=100 {
            let now = t + 0.05 * s as f64;
            if dec.online_advance(now).unwrap() == 0 {
                flipped = Some(now);
                break;
            }
        }
        let at = flipped.expect("never switched to the quiet state");
        // Cross-check the scores at the switch against the RK4 transition over the silence.
        let mut ext = times.clone();
        ext.push(at);
        let h = oracle::rk4_forward_h(&p, &EventSequence::from_times(ext).unwrap(), 20, at - t);
        let full = viterbi_events(&p, &ev).unwrap();
        let anchor = full.log_eta.last().unwrap();
        let mut eta: Vec<f64> = (0..2)
            .map(|j| (0..2).map(|i| anchor[i] + h[(i, j)].ln()).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let top = eta[argmax(&eta)];
        eta.iter_mut().for_each(|v| *v -= top);
        for (a, b) in dec.log_eta().iter().zip(&eta) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}
