//! Time-rescaling residuals and Kolmogorov–Smirnov tests.
//!
//! Under a correctly specified model the compensator increments
//! `τ_n = ∫_{t_{n-1}}^{t_n} Σᵢ ξⁱ_{t|T} λⁱ_t dt` are i.i.d. Exp(1).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::inference::infer;
use crate::model::{EventSequence, ModelParams};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ResidualReport<T> {
    pub tau: Vec<T>,
    pub ks_statistic: T,
    pub ks_pvalue: T,
    /// `(theoretical, empirical)` quantile pairs, ascending.
    pub qq_points: Vec<(T, T)>,
}

/// Residuals of `events` under `params` (no refit, so this also serves
/// out-of-sample checks).
pub fn residuals<T: Scalar>(params: &ModelParams<T>, events: &EventSequence<T>) -> Result<ResidualReport<T>> {
    if events.len() < 2 {
        return Err(Error::InvalidInput("at least two events are needed for residuals".into()));
    }
    let (_, inf) = infer(params, events)?;
    report_from_tau(inf.tau)
}

/// KS test and QQ pairs for a given residual vector.
pub fn report_from_tau<T: Scalar>(tau: Vec<T>) -> Result<ResidualReport<T>> {
    if tau.is_empty() {
        return Err(Error::InvalidInput("no residuals".into()));
    }
    let (d, p) = ks_exponential(&tau);
    let qq_points = qq_points(&tau);
    Ok(ResidualReport { tau, ks_statistic: d, ks_pvalue: p, qq_points })
}

/// `sup |F̂ − F|` of a sample against a continuous CDF.
pub fn ks_statistic<T: Scalar>(sample: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = T::of_usize(xs.len());
    let mut d = T::zero();
    for (r, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        let above = T::of_usize(r + 1) / k - f;
        let below = f - T::of_usize(r) / k;
        d = d.max(above).max(below);
    }
    d
}

/// Asymptotic Kolmogorov survival function `P(K > λ) = 2 Σ (−1)^{j−1} e^{−2 j² λ²}`.
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda < 0.2 {
        // The alternating series is useless here and the true value is 1 to 15 digits.
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS test against Exp(1): `(D, p)`.
pub fn ks_exponential<T: Scalar>(sample: &[T]) -> (T, T) {
    let d = ks_statistic(sample, |x| if x <= T::zero() { T::zero() } else { T::one() - (-x).exp() });
    let lambda = (sample.len() as f64).sqrt() * d.as_f64();
    (d, T::of(kolmogorov_pvalue(lambda)))
}

/// Two-sample KS test: `(D, p)` with the effective size `nm/(n+m)`.
pub fn ks_two_sample<T: Scalar>(a: &[T], b: &[T]) -> (T, T) {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < na && j < nb {
        let x = if xa[i] <= xb[j] { xa[i] } else { xb[j] };
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let en = (na * nb) as f64 / (na + nb) as f64;
    (T::of(d), T::of(kolmogorov_pvalue(en.sqrt() * d)))
}

/// QQ pairs with plotting positions `(r − 0.5)/K`.
pub fn qq_points<T: Scalar>(tau: &[T]) -> Vec<(T, T)> {
    let mut xs = tau.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = T::of_usize(xs.len());
    xs.into_iter()
        .enumerate()
        .map(|(r, x)| {
            let p = (T::of_usize(r + 1) - T::of(0.5)) / k;
            (-(T::one() - p).ln(), x)
        })
        .collect()
}

/// Writes the QQ pairs as CSV preceded by `#` comment lines.
pub fn qq_export<T: Scalar>(report: &ResidualReport<T>, path: &Path) -> Result<()> {
    if report.qq_points.is_empty() {
        return Err(Error::InvalidInput("no QQ points to export".into()));
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "# QQ plot of compensator residuals against Exp(1)")?;
    writeln!(out, "# n = {}, KS D = {}, p = {}", report.tau.len(), report.ks_statistic, report.ks_pvalue)?;
    writeln!(out, "theoretical,empirical")?;
    for (t, e) in &report.qq_points {
        writeln!(out, "{t},{e}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_point_sample() {
        let (d, _) = ks_exponential(&[2f64.ln()]);
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pvalue_reference_points() {
        // Classical critical values of the Kolmogorov distribution.
        assert!((kolmogorov_pvalue(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_pvalue(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_pvalue(1.2238) - 0.10).abs() < 1e-4);
        assert_eq!(kolmogorov_pvalue(0.0), 1.0);
        let mut prev = 1.0;
        for s in 1..400 {
            let p = kolmogorov_pvalue(s as f64 * 0.01);
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }

    #[test]
    fn qq_plotting_positions() {
        let q = qq_points(&[2.0, 0.1, 0.5]);
        let want: Vec<f64> = [1.0 / 6.0, 0.5, 5.0 / 6.0].iter().map(|p: &f64| -(1.0 - p).ln()).collect();
        for ((t, e), (w, x)) in q.iter().zip(want.iter().zip([0.1, 0.5, 2.0])) {
            assert!((t - w).abs() < 1e-15);
            assert_eq!(*e, x);
        }
    }

    #[test]
    fn exponential_sample_qq_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tau: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let rep = report_from_tau(tau).unwrap();
        // Compare in probability space where the DKW band applies.
        let worst = rep
            .qq_points
            .iter()
            .map(|(t, e)| ((-t).exp() - (-e).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.02);
        assert!(rep.ks_pvalue > 0.01);
    }

    #[test]
    fn empty_residuals_rejected() {
        assert!(report_from_tau(Vec::<f64>::new()).is_err());
    }

    #[test]
    fn poisson_residuals_are_scaled_durations() {
        let p = ModelParams::new(vec![2.5], vec![0.0], vec![1.0], Mat::zeros(1), vec![1.0], 0.1).unwrap();
        let ev = EventSequence::from_times(vec![0.2f64, 0.9, 1.0, 3.3]).unwrap();
        let rep = residuals(&p, &ev).unwrap();
        for (t, x) in rep.tau.iter().zip(ev.durations()) {
            assert!((t - 2.5 * x).abs() < 1e-12f64);
        }
    }

    #[test]
    fn trace_formula_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..3 {
            let q01 = rng.gen_range(0.2..2.0);
            let q10 = rng.gen_range(0.2..2.0);
            let q = Mat::from_rows(&[vec![-q01, q01], vec![q10, -q10]]).unwrap();
            let p = ModelParams::new(
                vec![rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)],
                vec![rng.gen_range(0.0..2.0), rng.gen_range(0.0..4.0)],
                vec![rng.gen_range(1.0..6.0), rng.gen_range(1.0..12.0)],
                q,
                vec![0.3, 0.7],
                0.1,
            )
            .unwrap();
            let mut t = 0.0f64;
            let ev = EventSequence::from_times((0..12).map(|_| { t += rng.gen_range(0.02..1.5); t }).collect()).unwrap();
            let (_, inf) = crate::inference::infer(&p, &ev).unwrap();
            for n in 0..ev.len() {
                let quad = crate::oracle::quadrature_tau(&p, &ev, n, &inf.l[n], &inf.r[n + 1], inf.c[n]);
                assert!((inf.tau[n] - quad).abs() <= 1e-6 * quad, "interval {n}: {} vs {quad}", inf.tau[n]);
            }
        }
    }

    #[test]
    fn two_sample_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert_eq!(p, 1.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!((d - 0.5).abs() <= 0.002 + 1e-12 && p < 1e-10, "{d} {p}");
    }

    #[test]
    fn qq_export_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("qq.csv");
        let rep = report_from_tau(vec![0.1f64, 0.5, 2.0]).unwrap();
        qq_export(&rep, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "theoretical,empirical");
        assert_eq!(rows.len(), 4);
    }
}
