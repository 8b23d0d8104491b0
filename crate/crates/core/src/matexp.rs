//! Matrix exponential by scaling and squaring with diagonal Padé approximants,
//! and the Van Loan block construction for integrals of the form
//! `∫₀^s e^{A(s-x)} W e^{Ax} dx`.
//!
//! The degree selection follows Higham (2005): the cheapest Padé degree in
//! {3, 5, 7, 9, 13} whose backward-error bound covers `‖A‖₁` is used, and only
//! degree 13 is combined with scaling.

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::scalar::Scalar;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^{A t}`.
pub fn expm<T: Scalar>(a: &Mat<T>, t: T) -> Result<Mat<T>> {
    if !t.is_finite() || !a.is_finite() {
        return Err(Error::Numerical("non-finite input to matrix exponential".into()));
    }
    let at = a.scale(t);
    let e = expm_unscaled(&at)?;
    if !e.is_finite() {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(e)
}

fn expm_unscaled<T: Scalar>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = a.order();
    let norm = a.norm1();
    if norm == T::zero() {
        return Ok(Mat::identity(n));
    }
    let ident = Mat::identity(n);
    let a2 = a * a;

    for &(m, theta) in THETA.iter() {
        if norm <= T::of(theta) {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            // Even powers A^0, A^2, ..., A^{m-1}.
            let mut powers = vec![ident.clone(), a2.clone()];
            while powers.len() < (m + 1) / 2 {
                let next = powers.last().unwrap() * &a2;
                powers.push(next);
            }
            let mut u = Mat::zeros(n);
            let mut v = Mat::zeros(n);
            for (j, p) in powers.iter().enumerate() {
                u.axpy(T::of(b[2 * j + 1]), p);
                v.axpy(T::of(b[2 * j]), p);
            }
            let u = a * &u;
            return pade_quotient(&u, &v);
        }
    }

    // Degree 13 with scaling.
    let ratio = (norm / T::of(THETA_13)).as_f64();
    let s = if ratio > 1.0 { ratio.log2().ceil() as i32 } else { 0 };
    let (a, a2) = if s > 0 {
        let f = T::of(2f64.powi(-s));
        let a = a.scale(f);
        let a2 = a2.scale(f * f);
        (a, a2)
    } else {
        (a.clone(), a2)
    };
    let b = B13.map(T::of);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let combo = |c: [T; 3]| {
        let mut m = a6.scale(c[0]);
        m.axpy(c[1], &a4);
        m.axpy(c[2], &a2);
        m
    };
    let mut u = &a6 * &combo([b[13], b[11], b[9]]);
    u.axpy(b[7], &a6);
    u.axpy(b[5], &a4);
    u.axpy(b[3], &a2);
    u.axpy(b[1], &ident);
    let u = &a * &u;
    let mut v = &a6 * &combo([b[12], b[10], b[8]]);
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &ident);

    let mut r = pade_quotient(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_quotient<T: Scalar>(u: &Mat<T>, v: &Mat<T>) -> Result<Mat<T>> {
    let p = v + u;
    let q = v - u;
    q.solve(&p)
}

/// Generator-minus-intensity block `A`, coupling block `W` and duration for
/// a Van Loan integral.
#[derive(Clone, Debug)]
pub struct VanLoanBlock<T> {
    pub a: Mat<T>,
    pub w: Mat<T>,
    pub dt: T,
}

impl<T: Scalar> VanLoanBlock<T> {
    pub fn new(a: Mat<T>, w: Mat<T>, dt: T) -> Result<Self> {
        if a.order() != w.order() {
            return Err(Error::InvalidInput("Van Loan blocks must have equal order".into()));
        }
        if dt < T::zero() {
            return Err(Error::InvalidInput("Van Loan duration must be non-negative".into()));
        }
        Ok(Self { a, w, dt })
    }

    /// The assembled `[[A, W], [0, A]]`.
    pub fn assembled(&self) -> Mat<T> {
        Mat::block_upper(&self.a, &self.w)
    }
}

/// Upper-right block of `exp([[A, W], [0, A]] dt)`, which equals
/// `∫₀^dt e^{A(dt-x)} W e^{Ax} dx`.
pub fn vanloan_upper_right<T: Scalar>(block: &VanLoanBlock<T>) -> Result<Mat<T>> {
    if block.dt == T::zero() {
        return Ok(Mat::zeros(block.a.order()));
    }
    // The upper-right block is linear in W, so W is rescaled by a power of two
    // to the size of A; this keeps the Padé degree set by A alone.
    let wn = block.w.norm1();
    if wn == T::zero() {
        return Ok(Mat::zeros(block.a.order()));
    }
    let an = block.a.norm1().max(T::min_positive_value());
    let shift = (an / wn).log2().round();
    let scale = T::of(2.0).powf(shift);
    let scaled = Mat::block_upper(&block.a, &block.w.scale(scale));
    Ok(expm(&scaled, block.dt)?.upper_right().scale(T::one() / scale))
}
