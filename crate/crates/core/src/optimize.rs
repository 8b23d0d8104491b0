//! Derivative-free minimization: Nelder–Mead simplex and Brent's method on a line.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct SimplexOptions<T> {
    pub max_iter: usize,
    /// Stop once the simplex diameter falls below this (in parameter units).
    pub xtol: T,
    /// ... and the spread of objective values below this.
    pub ftol: T,
    /// Initial edge length along each coordinate.
    pub step: T,
}

impl<T: Scalar> Default for SimplexOptions<T> {
    fn default() -> Self {
        Self { max_iter: 200, xtol: T::of(1e-8), ftol: T::of(1e-12), step: T::of(0.1) }
    }
}

#[derive(Clone, Debug)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub fx: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as `+∞`.
pub fn nelder_mead<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    x0: &[T],
    opts: &SimplexOptions<T>,
) -> SimplexResult<T> {
    let n = x0.len();
    let mut eval = |x: &[T]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    if n == 0 {
        let fx = eval(x0);
        return SimplexResult { x: Vec::new(), fx, iterations: 0, converged: true };
    }
    let half = T::of(0.5);
    let two = T::of(2.0);

    let mut pts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for j in 0..n {
        let mut p = x0.to_vec();
        p[j] += opts.step;
        pts.push(p);
    }
    let mut vals: Vec<T> = pts.iter().map(|p| eval(p)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let diameter = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        let spread = (vals[n] - vals[0]).abs();
        if diameter <= opts.xtol && (spread <= opts.ftol || !vals[n].is_finite()) {
            converged = true;
            break;
        }
        if diameter <= opts.xtol * T::of(1e-3) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); n];
        for p in &pts[..n] {
            for (c, &v) in centroid.iter_mut().zip(p) {
                *c += v;
            }
        }
        let inv = T::one() / T::of_usize(n);
        centroid.iter_mut().for_each(|c| *c *= inv);
        let along = |t: T| -> Vec<T> {
            centroid.iter().zip(&pts[n]).map(|(&c, &w)| c + t * (w - c)).collect()
        };

        let xr = along(-T::one());
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = along(-two);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(-half);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(half);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        let best = pts[0].clone();
        for i in 1..=n {
            let p: Vec<T> = best.iter().zip(&pts[i]).map(|(&b, &v)| b + half * (v - b)).collect();
            vals[i] = eval(&p);
            pts[i] = p;
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    SimplexResult { x: pts[best].clone(), fx: vals[best], iterations, converged }
}

/// Minimizes a univariate `f` on `[lo, hi]` with Brent's method
/// (golden-section steps safeguarded by parabolic interpolation).
/// Returns `(x, f(x))`.
pub fn brent_minimize<T: Scalar>(mut f: impl FnMut(T) -> T, lo: T, hi: T, tol: T, max_iter: usize) -> (T, T) {
    let golden = T::of(0.381_966_011_250_105_1);
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut eval = |x: T| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    let half = T::of(0.5);
    let two = T::of(2.0);
    for _ in 0..max_iter {
        let xm = half * (a + b);
        let tol1 = tol * x.abs() + T::of(1e-12);
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - half * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (half * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > T::zero() { x + tol1 } else { x - tol1 };
        let fu = eval(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
