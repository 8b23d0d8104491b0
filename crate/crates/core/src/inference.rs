//! Scaled forward–backward recursions and E-step sufficient statistics.
//!
//! With `f_n` the duration density matrix of interval `n` (0-based):
//!
//! ```text
//! c_n   = L(n) f_n 𝟙          L(n+1) = L(n) f_n / c_n,    L(0) = ξ₀
//! R(n)  = f_n R(n+1) / c_n    R(K)   = 𝟙
//! ```
//!
//! so `log-likelihood = Σ log c_n`, `L(n)` is the filtered distribution right
//! after the n-th event and `L(n)ᵢ R(n)ᵢ` the smoothed one.
//!
//! The E-step integrates the smoothed state probabilities over each δ-step
//! with Van Loan block exponentials. For step `k` of interval `n` the coupling
//! block is the rank-one matrix
//!
//! ```text
//! Ω_k = (E_{k+1} ⋯ E_{ℓ-1} E_res Λ(t_n⁻) R(n+1)) · (L(n) E_0 ⋯ E_{k-1})
//! ```
//!
//! and `B_k = ∫₀^δ e^{A_k(δ-x)} Ω_k e^{A_k x} dx` carries the posterior
//! occupancy (`diag B_k / c_n`) and transition flux (`q_ij (B_k)_ji / c_n`).

use crate::error::{Error, Result};
use crate::matexp::{vanloan_upper_right, VanLoanBlock};
use crate::matrix::Mat;
use crate::model::{EventSequence, ModelParams};
use crate::scalar::Scalar;
use crate::transition::TransitionBundle;

#[derive(Clone, Debug)]
pub struct InferenceState<T> {
    /// Scaling factors `c_n`.
    pub c: Vec<T>,
    /// Scaled forward rows `L(0) … L(K)`.
    pub l: Vec<Vec<T>>,
    /// Scaled backward columns `R(0) … R(K)`, `R(K) = 𝟙`.
    pub r: Vec<Vec<T>>,
    pub loglik: T,
    /// Smoothed state distribution right after each event.
    pub smoothed_at_events: Vec<Vec<T>>,
    /// Smoothed distribution at time 0.
    pub smoothed_initial: Vec<T>,
    /// `E[D_i | F_T]`, expected time spent in each state.
    pub ed: Vec<T>,
    /// `E[w_ij | F_T]`, expected transition counts (diagonal zero).
    pub ew: Mat<T>,
    /// `∫ ξⁱ_{t|T} λⁱ_t dt` per state.
    pub eint_lambda: Vec<T>,
    /// Compensator increments `τ_n`.
    pub tau: Vec<T>,
    /// Per interval, `diag(B_k)/c_n` for `k = 0..=ℓ_n`, flattened row-major.
    pub segment_occupancy: Vec<Vec<T>>,
    pub estep_done: bool,
}

impl<T: Scalar> InferenceState<T> {
    pub fn m(&self) -> usize {
        self.smoothed_initial.len()
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Occupancy weights of step `k` of interval `n`.
    pub fn occupancy(&self, n: usize, k: usize) -> &[T] {
        let m = self.m();
        &self.segment_occupancy[n][k * m..(k + 1) * m]
    }
}

/// Filtered distribution after the n-th event (`n = 0` gives ξ₀).
pub fn filtered_probabilities<T: Scalar>(inf: &InferenceState<T>, n: usize) -> &[T] {
    &inf.l[n]
}

/// Forward pass only: log-likelihood `Σ log c_n`.
pub fn log_likelihood<T: Scalar>(params: &ModelParams<T>, bundles: &TransitionBundle<T>) -> Result<T> {
    let mut row = params.xi0.clone();
    let mut total = T::zero();
    for (n, iv) in bundles.intervals.iter().enumerate() {
        let next = iv.f.left_mul_vec(&row);
        let c: T = next.iter().copied().sum();
        check_scale(n, c)?;
        total += c.ln();
        row = next.into_iter().map(|v| v / c).collect();
    }
    Ok(total)
}

fn check_scale<T: Scalar>(n: usize, c: T) -> Result<()> {
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::IntervalFailure {
            interval: n,
            reason: format!("scaling factor c = {c} is not a positive finite number"),
        });
    }
    Ok(())
}

/// Scaled forward and backward passes.
pub fn forward_backward<T: Scalar>(
    params: &ModelParams<T>,
    bundles: &TransitionBundle<T>,
) -> Result<InferenceState<T>> {
    let m = params.m();
    let k = bundles.len();
    let mut c = Vec::with_capacity(k);
    let mut l = Vec::with_capacity(k + 1);
    l.push(params.xi0.clone());
    let mut loglik = T::zero();
    for (n, iv) in bundles.intervals.iter().enumerate() {
        let next = iv.f.left_mul_vec(&l[n]);
        let cn: T = next.iter().copied().sum();
        check_scale(n, cn)?;
        loglik += cn.ln();
        c.push(cn);
        l.push(next.into_iter().map(|v| v / cn).collect());
    }
    let mut r = vec![vec![T::one(); m]; k + 1];
    for n in (0..k).rev() {
        let col = bundles.intervals[n].f.mul_vec(&r[n + 1]);
        r[n] = col.into_iter().map(|v| v / c[n]).collect();
        if r[n].iter().any(|v| !v.is_finite()) {
            return Err(Error::IntervalFailure {
                interval: n,
                reason: "backward vector is not finite".into(),
            });
        }
    }
    let smoothed_at_events = (0..k)
        .map(|n| (0..m).map(|i| l[n + 1][i] * r[n + 1][i]).collect())
        .collect();
    let smoothed_initial = (0..m).map(|i| params.xi0[i] * r[0][i]).collect();
    Ok(InferenceState {
        c,
        l,
        r,
        loglik,
        smoothed_at_events,
        smoothed_initial,
        ed: vec![T::zero(); m],
        ew: Mat::zeros(m),
        eint_lambda: vec![T::zero(); m],
        tau: vec![T::zero(); k],
        segment_occupancy: Vec::new(),
        estep_done: false,
    })
}

/// Fills the expected occupancies, transition counts, integrated intensities
/// and compensator increments.
pub fn estep_statistics<T: Scalar>(
    params: &ModelParams<T>,
    bundles: &TransitionBundle<T>,
    inf: &mut InferenceState<T>,
) -> Result<()> {
    let m = params.m();
    let q = &params.q;
    let mut ed = vec![T::zero(); m];
    let mut flux = Mat::zeros(m);
    let mut eint = vec![T::zero(); m];
    let mut tau = Vec::with_capacity(bundles.len());
    let mut occupancy = Vec::with_capacity(bundles.len());

    for (n, iv) in bundles.intervals.iter().enumerate() {
        let inv_c = T::one() / inf.c[n];
        let lam_end = iv.arrival_intensity();
        let lr: Vec<T> = (0..m).map(|a| lam_end[a] * inf.r[n + 1][a]).collect();
        let ell = iv.ell;

        // Right factors E_{k+1} ⋯ E_{ℓ-1} E_res Λ R for k = 0..ℓ-1.
        let mut cols = vec![Vec::new(); ell];
        if ell > 0 {
            let mut col = iv.res_exp.mul_vec(&lr);
            for kk in (0..ell).rev() {
                if kk + 1 < ell {
                    col = iv.seg_exp[kk + 1].mul_vec(&col);
                }
                cols[kk] = col.clone();
            }
        }

        let mut occ = Vec::with_capacity((ell + 1) * m);
        let mut tau_n = T::zero();
        let mut row = inf.l[n].clone();
        let fail = |e: Error| Error::IntervalFailure { interval: n, reason: e.to_string() };
        for kk in 0..=ell {
            let (w, dt) = if kk < ell {
                (Mat::outer(&cols[kk], &row), iv.delta)
            } else {
                (Mat::outer(&lr, &row), iv.residual)
            };
            let block = VanLoanBlock::new(iv.generator(q, kk), w, dt).map_err(fail)?;
            let b = vanloan_upper_right(&block).map_err(fail)?;
            let lam = &iv.lam[kk];
            for i in 0..m {
                let d = b[(i, i)] * inv_c;
                ed[i] += d;
                eint[i] += lam[i] * d;
                tau_n += lam[i] * d;
                occ.push(d);
                for j in 0..m {
                    if i != j {
                        flux[(j, i)] += b[(j, i)] * inv_c;
                    }
                }
            }
            if kk < ell {
                row = iv.seg_exp[kk].left_mul_vec(&row);
            }
        }
        if !tau_n.is_finite() {
            return Err(Error::IntervalFailure { interval: n, reason: "non-finite compensator".into() });
        }
        tau.push(tau_n);
        occupancy.push(occ);
    }

    let mut ew = Mat::zeros(m);
    for i in 0..m {
        for j in 0..m {
            if i != j {
                // E[w_ij] = q_ij ∫ αⁱ βʲ / L dt, the integral sitting at (j, i) of B.
                ew[(i, j)] = q[(i, j)] * flux[(j, i)];
            }
        }
    }
    inf.ed = ed;
    inf.ew = ew;
    inf.eint_lambda = eint;
    inf.tau = tau;
    inf.segment_occupancy = occupancy;
    inf.estep_done = true;
    Ok(())
}

/// Builds the transition factors and runs the full E-step.
pub fn infer<T: Scalar>(
    params: &ModelParams<T>,
    events: &EventSequence<T>,
) -> Result<(TransitionBundle<T>, InferenceState<T>)> {
    let bundles = TransitionBundle::build(params, events)?;
    let mut inf = forward_backward(params, &bundles)?;
    estep_statistics(params, &bundles, &mut inf)?;
    Ok((bundles, inf))
}
