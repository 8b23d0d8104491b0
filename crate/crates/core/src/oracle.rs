//! Reference integrators for the transition matrices.
//!
//! These solve the forward and backward ODEs with classical fourth-order
//! Runge–Kutta, evaluating the intensity from the raw kernel sum. They share no
//! code with the closed forms in [`crate::transition`] and exist to check them.

use crate::matrix::Mat;
use crate::model::{EventSequence, Kernel, ModelParams};
use crate::scalar::Scalar;

/// Grid intensity `λ(t_{n-1} + kδ)` from the direct kernel sum.
pub fn direct_intensity<T: Scalar>(
    params: &ModelParams<T>,
    events: &EventSequence<T>,
    n: usize,
    k: usize,
) -> Vec<T> {
    let at = events.interval_start(n) + T::of_usize(k) * params.delta;
    (0..params.m())
        .map(|i| {
            let kern = params.kernel(i);
            params.mu[i] + events.times()[..n].iter().map(|&tl| kern.value(at - tl)).sum::<T>()
        })
        .collect()
}

/// Segments `(start, end, step index)` covering `[0, x]` for the left-anchored grid.
fn segments<T: Scalar>(x: T, delta: T) -> Vec<(T, T, usize)> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let start = T::of_usize(k) * delta;
        if start >= x {
            break;
        }
        let end = (T::of_usize(k + 1) * delta).min(x);
        out.push((start, end, k));
        k += 1;
    }
    out
}

fn rk4_steps<T: Scalar>(len: T, delta: T) -> (usize, T) {
    let h_target = delta / T::of(1000.0);
    let steps = (len / h_target).ceil().to_usize().unwrap_or(1).max(1);
    (steps, len / T::of_usize(steps))
}

/// Integrates `dH/du = H (Q - Λ(u))`, `H(0) = I`, up to `u` at step δ/1000.
pub fn rk4_forward_h<T: Scalar>(params: &ModelParams<T>, events: &EventSequence<T>, n: usize, u: T) -> Mat<T> {
    let m = params.m();
    let mut h = Mat::identity(m);
    for (start, end, k) in segments(u, params.delta) {
        let a = params.q.minus_diag(&direct_intensity(params, events, n, k));
        let (steps, dt) = rk4_steps(end - start, params.delta);
        let half = dt / T::of(2.0);
        for _ in 0..steps {
            let k1 = &h * &a;
            let k2 = &(&h + &k1.scale(half)) * &a;
            let k3 = &(&h + &k2.scale(half)) * &a;
            let k4 = &(&h + &k3.scale(dt)) * &a;
            let incr = &(&(&k1 + &k2.scale(T::of(2.0))) + &k3.scale(T::of(2.0))) + &k4;
            h = &h + &incr.scale(dt / T::of(6.0));
        }
    }
    h
}

/// Integrates `dG/du = (Q - Λ(t_n - u)) G`, `G(0) = I`, up to `u` at step δ/1000.
pub fn rk4_backward_g<T: Scalar>(params: &ModelParams<T>, events: &EventSequence<T>, n: usize, u: T) -> Mat<T> {
    let m = params.m();
    let x = events.times()[n] - events.interval_start(n);
    let mut g = Mat::identity(m);
    // Walk the forward segments from the right end of the interval.
    for (start, end, k) in segments(x, params.delta).into_iter().rev() {
        let covered = x - end;
        if covered >= u {
            break;
        }
        let len = (end - start).min(u - covered);
        let a = params.q.minus_diag(&direct_intensity(params, events, n, k));
        let (steps, dt) = rk4_steps(len, params.delta);
        let half = dt / T::of(2.0);
        for _ in 0..steps {
            let k1 = &a * &g;
            let k2 = &a * &(&g + &k1.scale(half));
            let k3 = &a * &(&g + &k2.scale(half));
            let k4 = &a * &(&g + &k3.scale(dt));
            let incr = &(&(&k1 + &k2.scale(T::of(2.0))) + &k3.scale(T::of(2.0))) + &k4;
            g = &g + &incr.scale(dt / T::of(6.0));
        }
    }
    g
}

/// Compensator increment `τ_n = ∫ Σᵢ ξⁱ_{t|T} λⁱ_t dt` by composite Simpson
/// quadrature at step δ/100, given the scaled forward row `l = L(n)`, the
/// backward column `r = R(n+1)` and the scaling factor `c = c_n`.
///
/// The smoothed probability at `u` into the interval is
/// `(l H(u))ᵢ (G(x−u) Λ(t_n⁻) r)ᵢ / c`; both factors are carried by RK4.
pub fn quadrature_tau<T: Scalar>(
    params: &ModelParams<T>,
    events: &EventSequence<T>,
    n: usize,
    l: &[T],
    r: &[T],
    c: T,
) -> T {
    let m = params.m();
    let x = events.times()[n] - events.interval_start(n);
    let segs = segments(x, params.delta);
    let lam: Vec<Vec<T>> = segs.iter().map(|&(_, _, k)| direct_intensity(params, events, n, k)).collect();
    let gens: Vec<Mat<T>> = lam.iter().map(|l| params.q.minus_diag(l)).collect();
    // Grid per segment: an even number of sub-steps of at most δ/200.
    let grids: Vec<(usize, T)> = segs
        .iter()
        .map(|&(s, e, _)| {
            let h_target = params.delta / T::of(200.0);
            let mut steps = ((e - s) / h_target).ceil().to_usize().unwrap_or(2).max(2);
            steps += steps % 2;
            (steps, (e - s) / T::of_usize(steps))
        })
        .collect();

    let row_step = |v: &[T], a: &Mat<T>, h: T| -> Vec<T> {
        let f = |w: &[T]| a.left_mul_vec(w);
        let add = |w: &[T], d: &[T], s: T| -> Vec<T> { w.iter().zip(d).map(|(&p, &q)| p + s * q).collect() };
        let k1 = f(v);
        let k2 = f(&add(v, &k1, h / T::of(2.0)));
        let k3 = f(&add(v, &k2, h / T::of(2.0)));
        let k4 = f(&add(v, &k3, h));
        (0..v.len()).map(|i| v[i] + h / T::of(6.0) * (k1[i] + T::of(2.0) * (k2[i] + k3[i]) + k4[i])).collect()
    };
    let col_step = |v: &[T], a: &Mat<T>, h: T| -> Vec<T> {
        let f = |w: &[T]| a.mul_vec(w);
        let add = |w: &[T], d: &[T], s: T| -> Vec<T> { w.iter().zip(d).map(|(&p, &q)| p + s * q).collect() };
        let k1 = f(v);
        let k2 = f(&add(v, &k1, h / T::of(2.0)));
        let k3 = f(&add(v, &k2, h / T::of(2.0)));
        let k4 = f(&add(v, &k3, h));
        (0..v.len()).map(|i| v[i] + h / T::of(6.0) * (k1[i] + T::of(2.0) * (k2[i] + k3[i]) + k4[i])).collect()
    };

    // Forward rows at every grid point.
    let mut fwd: Vec<Vec<Vec<T>>> = Vec::with_capacity(segs.len());
    let mut a = l.to_vec();
    for (s, &(steps, h)) in grids.iter().enumerate() {
        let mut pts = vec![a.clone()];
        for _ in 0..steps {
            a = row_step(&a, &gens[s], h);
            pts.push(a.clone());
        }
        fwd.push(pts);
    }
    // Backward columns, starting from Λ(t_n⁻) r at the right end.
    let last = lam.last().unwrap();
    let mut b: Vec<T> = (0..m).map(|i| last[i] * r[i]).collect();
    let mut bwd: Vec<Vec<Vec<T>>> = vec![Vec::new(); segs.len()];
    for s in (0..segs.len()).rev() {
        let (steps, h) = grids[s];
        let mut pts = vec![b.clone()];
        for _ in 0..steps {
            b = col_step(&b, &gens[s], h);
            pts.push(b.clone());
        }
        pts.reverse();
        bwd[s] = pts;
    }

    let mut total = T::zero();
    for s in 0..segs.len() {
        let (steps, h) = grids[s];
        let g = |j: usize| -> T { (0..m).map(|i| fwd[s][j][i] * bwd[s][j][i] * lam[s][i]).sum::<T>() };
        let mut acc = g(0) + g(steps);
        for j in 1..steps {
            acc += g(j) * if j % 2 == 1 { T::of(4.0) } else { T::of(2.0) };
        }
        total += acc * h / T::of(3.0);
    }
    total / c
}
