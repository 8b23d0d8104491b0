//! Per-interval transition matrices of the piecewise-constant model.
//!
//! On interval `n` the generator-minus-intensity matrix `A_k = Q - Λ(n, k)` is
//! constant on each δ-step, so the forward matrix `H(u)` (probability of the
//! arrival state and no event over `(t_{n-1}, t_{n-1}+u]`) is an ordered
//! product of segment exponentials `E_k = e^{A_k δ}` closed by a partial step.
//! Every quantity below is assembled from those cached factors.

use crate::error::{Error, Result};
use crate::matexp::expm;
use crate::matrix::Mat;
use crate::model::{grid_decompose, EventSequence, IntensityTable, IntervalGrid, ModelParams};
use crate::scalar::Scalar;

/// `e^{A t}` for a generator-minus-intensity `A`, with round-off negatives clipped to 0.
pub fn substochastic_exp<T: Scalar>(a: &Mat<T>, t: T) -> Result<Mat<T>> {
    Ok(expm(a, t)?.map(|x| if x < T::zero() { T::zero() } else { x }))
}

/// Cached factors of one inter-event interval.
#[derive(Clone, Debug)]
pub struct IntervalBundle<T> {
    pub duration: T,
    pub ell: usize,
    pub residual: T,
    pub delta: T,
    /// `Λ(n, k)` for `k = 0..=ell`.
    pub lam: Vec<Vec<T>>,
    /// `E_k = e^{(Q - Λ_k) δ}` for `k < ell`.
    pub seg_exp: Vec<Mat<T>>,
    /// `e^{(Q - Λ_ell) Δ}`.
    pub res_exp: Mat<T>,
    /// `H(x_n)`.
    pub h: Mat<T>,
    /// `f(x_n) = H(x_n) Λ(t_n⁻)`.
    pub f: Mat<T>,
}

impl<T: Scalar> IntervalBundle<T> {
    /// Assembles the factors from the frozen intensities `lam[k]`, `k = 0..=ell`.
    pub fn new(q: &Mat<T>, lam: Vec<Vec<T>>, duration: T, ell: usize, residual: T, delta: T) -> Result<Self> {
        let mut seg_exp = Vec::with_capacity(ell);
        let mut h = Mat::identity(q.order());
        for lam_k in lam.iter().take(ell) {
            let e = substochastic_exp(&q.minus_diag(lam_k), delta)?;
            h = &h * &e;
            seg_exp.push(e);
        }
        let res_exp = substochastic_exp(&q.minus_diag(&lam[ell]), residual)?;
        h = &h * &res_exp;
        let f = h.scale_cols(&lam[ell]);
        Ok(Self { duration, ell, residual, delta, lam, seg_exp, res_exp, h, f })
    }

    /// `Q - Λ_k`.
    pub fn generator(&self, q: &Mat<T>, k: usize) -> Mat<T> {
        q.minus_diag(&self.lam[k])
    }

    /// Intensity just before the event closing the interval.
    pub fn arrival_intensity(&self) -> &[T] {
        &self.lam[self.ell]
    }

    /// Prefix products `Ξ_k = E_0 ⋯ E_{k-1}` for `k = 0..=ell` (`Ξ_0 = I`).
    pub fn prefix_products(&self) -> Vec<Mat<T>> {
        let m = self.h.order();
        let mut out = Vec::with_capacity(self.ell + 1);
        out.push(Mat::identity(m));
        for e in &self.seg_exp {
            let next = out.last().unwrap() * e;
            out.push(next);
        }
        out
    }

    /// Suffix products `Ψ_j = E_{ell-j} ⋯ E_{ell-1}` for `j = 0..=ell` (`Ψ_0 = I`).
    pub fn suffix_products(&self) -> Vec<Mat<T>> {
        let m = self.h.order();
        let mut out = Vec::with_capacity(self.ell + 1);
        out.push(Mat::identity(m));
        for e in self.seg_exp.iter().rev() {
            let next = e * out.last().unwrap();
            out.push(next);
        }
        out
    }

    /// Segment containing offset `u`, capped at the residual segment.
    fn segment_of(&self, u: T) -> usize {
        let k = (u / self.delta).floor().to_usize().unwrap_or(0);
        k.min(self.ell)
    }

    fn segment_start(&self, k: usize) -> T {
        T::of_usize(k) * self.delta
    }

    fn segment_end(&self, k: usize) -> T {
        if k == self.ell {
            self.duration
        } else {
            T::of_usize(k + 1) * self.delta
        }
    }

    fn check_offset(&self, u: T) -> Result<()> {
        let slack = self.duration * T::epsilon() * T::of(64.0);
        if !(u >= T::zero()) || u > self.duration + slack {
            return Err(Error::OutOfRange(format!(
                "offset {u} outside [0, {}]",
                self.duration
            )));
        }
        Ok(())
    }

    /// `H(u) = Ξ_{ℓ(u)} e^{A_{ℓ(u)} (u - ℓ(u)δ)}`.
    pub fn forward_h(&self, q: &Mat<T>, u: T) -> Result<Mat<T>> {
        self.check_offset(u)?;
        let u = u.min(self.duration);
        if u == self.duration {
            return Ok(self.h.clone());
        }
        let k = self.segment_of(u);
        let mut h = Mat::identity(q.order());
        for e in &self.seg_exp[..k] {
            h = &h * e;
        }
        let partial = substochastic_exp(&self.generator(q, k), u - self.segment_start(k))?;
        Ok(&h * &partial)
    }

    /// `G(u)`: probability of no event over `(t_n - u, t_n]` and of the state at `t_n`.
    pub fn backward_g(&self, q: &Mat<T>, u: T) -> Result<Mat<T>> {
        self.check_offset(u)?;
        let u = u.min(self.duration);
        if u <= self.residual {
            return substochastic_exp(&self.generator(q, self.ell), u);
        }
        // Position of t_n - u measured from t_{n-1}; lies in a full step k < ell.
        let s = (self.duration - u).max(T::zero());
        let k = self.segment_of(s).min(self.ell - 1);
        let partial = substochastic_exp(&self.generator(q, k), self.segment_end(k) - s)?;
        let mut g = partial;
        for e in &self.seg_exp[k + 1..] {
            g = &g * e;
        }
        Ok(&g * &self.res_exp)
    }

    /// Transition over `(u, u2]` as a direct product of (partial) segment
    /// exponentials; equals `H(u)⁻¹ H(u2)` whenever `H(u)` is invertible.
    pub fn intra_r(&self, q: &Mat<T>, u: T, u2: T) -> Result<Mat<T>> {
        self.check_offset(u)?;
        self.check_offset(u2)?;
        if u2 < u {
            return Err(Error::InvalidInput(format!("intra_r needs u <= u2, got {u} > {u2}")));
        }
        let (u, u2) = (u.min(self.duration), u2.min(self.duration));
        segment_product(q, self.delta, u, u2, Some(self.ell), |k| self.lam[k].clone())
    }
}

/// Product of segment exponentials over `(u, u2]` for an interval anchored at
/// offset 0 with step `delta`. `lam_at(k)` gives the intensities frozen on
/// step `k`; `last_segment` caps the step index (the residual segment).
pub fn segment_product<T: Scalar>(
    q: &Mat<T>,
    delta: T,
    u: T,
    u2: T,
    last_segment: Option<usize>,
    lam_at: impl Fn(usize) -> Vec<T>,
) -> Result<Mat<T>> {
    let m = q.order();
    if u2 <= u {
        return Ok(Mat::identity(m));
    }
    let cap = |k: usize| last_segment.map_or(k, |c| k.min(c));
    let seg_of = |x: T| cap((x / delta).floor().to_usize().unwrap_or(0));
    let k0 = seg_of(u);
    let k1 = {
        // Step containing u2 from the left: (kδ, (k+1)δ] convention.
        let r = u2 / delta;
        let mut k = r.floor().to_usize().unwrap_or(0);
        if T::of_usize(k) * delta >= u2 && k > 0 {
            k -= 1;
        }
        cap(k)
    };
    let mut out = Mat::identity(m);
    let mut pos = u;
    for k in k0..=k1.max(k0) {
        let end = if k == k1.max(k0) {
            u2
        } else {
            T::of_usize(k + 1) * delta
        };
        let len = end - pos;
        if len > T::zero() {
            let e = substochastic_exp(&q.minus_diag(&lam_at(k)), len)?;
            out = &out * &e;
        }
        pos = end;
    }
    Ok(out)
}

/// Transition factors for every interval of an event sequence.
#[derive(Clone, Debug)]
pub struct TransitionBundle<T> {
    pub q: Mat<T>,
    pub grid: IntervalGrid<T>,
    pub intervals: Vec<IntervalBundle<T>>,
}

impl<T: Scalar> TransitionBundle<T> {
    /// Builds the δ-grid factors for `params.delta`.
    pub fn build(params: &ModelParams<T>, events: &EventSequence<T>) -> Result<Self> {
        let grid = grid_decompose(events, params.delta)?;
        Self::build_with_grid(params, events, grid)
    }

    /// Builds factors for an explicit grid. With [`IntervalGrid::collapsed`]
    /// this is the Markov-modulated Poisson route (one exponential per interval).
    pub fn build_with_grid(
        params: &ModelParams<T>,
        events: &EventSequence<T>,
        grid: IntervalGrid<T>,
    ) -> Result<Self> {
        params.validate()?;
        if grid.steps.len() != events.len() {
            return Err(Error::InvalidInput("grid does not match the event sequence".into()));
        }
        let table = IntensityTable::new(params, events);
        let durations = events.durations();
        let mut intervals = Vec::with_capacity(events.len());
        for (n, step) in grid.steps.iter().enumerate() {
            let lam: Vec<Vec<T>> = (0..=step.ell).map(|k| table.at(n, k)).collect();
            let bundle = IntervalBundle::new(&params.q, lam, durations[n], step.ell, step.residual, grid.delta)
                .map_err(|e| Error::IntervalFailure { interval: n, reason: e.to_string() })?;
            intervals.push(bundle);
        }
        Ok(Self { q: params.q.clone(), grid, intervals })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn interval(&self, n: usize) -> &IntervalBundle<T> {
        &self.intervals[n]
    }

    fn get(&self, n: usize) -> Result<&IntervalBundle<T>> {
        self.intervals
            .get(n)
            .ok_or_else(|| Error::OutOfRange(format!("interval {n} of {}", self.intervals.len())))
    }

    pub fn forward_h(&self, n: usize, u: T) -> Result<Mat<T>> {
        self.get(n)?.forward_h(&self.q, u)
    }

    pub fn backward_g(&self, n: usize, u: T) -> Result<Mat<T>> {
        self.get(n)?.backward_g(&self.q, u)
    }

    /// `f(x_n) = H(x_n) Λ(t_n⁻)`.
    pub fn density_f(&self, n: usize) -> Result<&Mat<T>> {
        Ok(&self.get(n)?.f)
    }

    pub fn intra_r(&self, n: usize, u: T, u2: T) -> Result<Mat<T>> {
        self.get(n)?.intra_r(&self.q, u, u2)
    }
}
