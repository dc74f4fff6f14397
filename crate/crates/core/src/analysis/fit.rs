//! Least-squares fits: saturation curves, damped FID cosines and log-log
//! scaling lines.
//!
//! Nonlinear fits use a damped Gauss-Newton (Levenberg-Marquardt) loop with
//! analytic Jacobians. Non-convergence is not an error: the best iterate is
//! returned with `converged = false`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::spectral::{peak_frequency, signal_of, uniform_spacing};
use crate::error::{Error, Result};
use crate::master_eq::Trajectory;

/// Relative change in cost or parameters below which iteration stops.
pub const RELATIVE_TOLERANCE: f64 = 1e-8;
/// Maximum number of accepted or rejected damping steps.
pub const ITERATION_CAP: usize = 200;

/// Residuals and Jacobian rows (`d r_i / d p_j`) at a parameter vector.
type Linearization = (Vec<f64>, Vec<Vec<f64>>);

#[derive(Debug, Clone)]
struct LmOutcome {
    params: Vec<f64>,
    cost: f64,
    converged: bool,
    /// Residual-scaled inverse normal matrix; `None` when singular or when
    /// there are no spare degrees of freedom.
    covariance: Option<DMatrix<f64>>,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn normal_equations(r: &[f64], jac: &[Vec<f64>], n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let j = DMatrix::from_fn(r.len(), n, |i, k| jac[i][k]);
    let jt = j.transpose();
    (&jt * &j, jt * DVector::from_column_slice(r))
}

/// Minimizes `sum r_i(p)^2`. `project` maps a trial point back into the
/// feasible set.
fn levenberg_marquardt(
    p0: Vec<f64>,
    eval: impl Fn(&[f64]) -> Linearization,
    project: impl Fn(&mut [f64]),
) -> LmOutcome {
    let n = p0.len();
    let mut p = p0;
    project(&mut p);
    let (mut r, mut jac) = eval(&p);
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut converged = !cost.is_finite() || cost == 0.0;
    let mut iter = 0;
    while !converged && iter < ITERATION_CAP {
        iter += 1;
        let (jtj, jtr) = normal_equations(&r, &jac, n);
        let mut damped = jtj.clone();
        for k in 0..n {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-&jtr))) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        project(&mut trial);
        let (tr, tj) = eval(&trial);
        let trial_cost = sum_sq(&tr);
        if trial_cost.is_finite() && trial_cost <= cost {
            let moved = p.iter().zip(&trial).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = p.iter().map(|a| a.abs()).fold(0.0, f64::max) + RELATIVE_TOLERANCE;
            let drop = cost - trial_cost;
            p = trial;
            r = tr;
            jac = tj;
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-12);
            converged =
                cost == 0.0 || drop <= RELATIVE_TOLERANCE * cost || moved <= RELATIVE_TOLERANCE * scale;
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no descent direction left: stationary point
                converged = true;
            }
        }
    }
    let m = r.len();
    let covariance = if m > n {
        let (jtj, _) = normal_equations(&r, &jac, n);
        jtj.try_inverse().map(|inv| inv * (cost / (m - n) as f64))
    } else {
        None
    };
    LmOutcome { params: p, cost, converged, covariance }
}

fn stderr_of(cov: &Option<DMatrix<f64>>, k: usize) -> f64 {
    cov.as_ref().map_or(f64::NAN, |c| c[(k, k)].max(0.0).sqrt())
}

/// Exponent handling for [`fit_saturation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Fixed(f64),
    Free,
}

/// `S = S_max * L^c / (L0 + L^c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationFit {
    pub s_max: f64,
    pub lambda0: f64,
    pub c: f64,
    pub residual_norm: f64,
    /// Standard errors of `(s_max, lambda0, c)`; zero for a fixed exponent.
    pub stderr: [f64; 3],
    pub converged: bool,
    /// All signals were zero; parameters are the initial guess.
    pub degenerate: bool,
}

pub fn saturation_model(lambda: f64, s_max: f64, lambda0: f64, c: f64) -> f64 {
    let x = lambda.powf(c);
    s_max * x / (lambda0 + x)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Fits the saturation law to `(Lambda, S)` points, `Lambda > 0`.
///
/// Parameters are `(S_max, ln L0[, c])`. Starts from `S_max` = last signal
/// and `L0 = median(Lambda)^c`; a free exponent is started from each of
/// `c = 1, 2, 3` and the lowest-cost result kept.
pub fn fit_saturation(points: &[(f64, f64)], exponent: Exponent) -> Result<SaturationFit> {
    if points.len() < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: points.len() });
    }
    for (i, &(l, s)) in points.iter().enumerate() {
        if !(l > 0.0 && l.is_finite()) || !s.is_finite() {
            return Err(Error::NonPositivePoint { index: i, x: l, y: s });
        }
    }
    if let Exponent::Fixed(c) = exponent {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("saturation exponent must be positive, got {c}")));
        }
    }
    let lam: Vec<f64> = points.iter().map(|p| p.0).collect();
    let sig: Vec<f64> = points.iter().map(|p| p.1).collect();
    let med = median(&lam);
    let s_last = sig[sig.len() - 1];

    if sig.iter().all(|&s| s == 0.0) {
        let c = match exponent {
            Exponent::Fixed(c) => c,
            Exponent::Free => 1.0,
        };
        return Ok(SaturationFit {
            s_max: 0.0,
            lambda0: med.powf(c),
            c,
            residual_norm: 0.0,
            stderr: [0.0; 3],
            converged: true,
            degenerate: true,
        });
    }

    let eval = |p: &[f64], c_fixed: Option<f64>| -> Linearization {
        let (s_max, l0) = (p[0], p[1].exp());
        let c = c_fixed.unwrap_or_else(|| p[2]);
        let mut r = Vec::with_capacity(lam.len());
        let mut j = Vec::with_capacity(lam.len());
        for (&l, &s) in lam.iter().zip(&sig) {
            let x = l.powf(c);
            let den = l0 + x;
            r.push(s_max * x / den - s);
            let d_smax = x / den;
            let d_lnl0 = -s_max * x * l0 / (den * den);
            let mut row = vec![d_smax, d_lnl0];
            if c_fixed.is_none() {
                row.push(s_max * l0 * x * l.ln() / (den * den));
            }
            j.push(row);
        }
        (r, j)
    };

    let outcome = match exponent {
        Exponent::Fixed(c) => {
            let o = levenberg_marquardt(vec![s_last, c * med.ln()], |p| eval(p, Some(c)), |_| {});
            (o, c)
        }
        Exponent::Free => {
            let mut best: Option<LmOutcome> = None;
            for c0 in [1.0, 2.0, 3.0] {
                let o = levenberg_marquardt(vec![s_last, c0 * med.ln(), c0], |p| eval(p, None), |p| {
                    p[2] = p[2].clamp(1e-3, 20.0);
                });
                if best.as_ref().is_none_or(|b| o.cost < b.cost) {
                    best = Some(o);
                }
            }
            let o = best.expect("three starts");
            let c = o.params[2];
            (o, c)
        }
    };
    let (o, c) = outcome;
    let lambda0 = o.params[1].exp();
    let free = matches!(exponent, Exponent::Free);
    Ok(SaturationFit {
        s_max: o.params[0],
        lambda0,
        c,
        residual_norm: o.cost.sqrt(),
        stderr: [
            stderr_of(&o.covariance, 0),
            lambda0 * stderr_of(&o.covariance, 1),
            if free { stderr_of(&o.covariance, 2) } else { 0.0 },
        ],
        converged: o.converged,
        degenerate: false,
    })
}

/// `A cos(2 pi f t - phi) exp(-t / T2*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FidFit {
    pub a: f64,
    pub f_mhz: f64,
    pub phi: f64,
    pub t2_star_us: f64,
    pub residual_norm: f64,
    /// Standard errors of `(a, f, phi, t2_star)`.
    pub stderr: [f64; 4],
    pub converged: bool,
    /// `T2*` reached [`FID_T2_CAP_SPANS`] record lengths (undamped data).
    pub t2_at_bound: bool,
}

/// Upper bound on the fitted `T2*`, in units of the record length.
pub const FID_T2_CAP_SPANS: f64 = 1000.0;

pub fn fid_model(t: f64, a: f64, f: f64, phi: f64, t2: f64) -> f64 {
    a * (2.0 * PI * f * t - phi).cos() * (-t / t2).exp()
}

/// Envelope decay time from a line through `ln |s|` at the local maxima of
/// `|s|`; `None` when it does not decay.
fn envelope_t2(t: &[f64], s: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = (0..s.len())
        .filter(|&i| {
            let a = s[i].abs();
            a > 0.0
                && (i == 0 || a >= s[i - 1].abs())
                && (i + 1 == s.len() || a >= s[i + 1].abs())
        })
        .map(|i| (t[i], s[i].abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -1.0 / slope)
}

/// Fits a damped cosine to an FID difference trace (at least 8 uniformly
/// spaced points). `f` starts at the dominant Fourier component, `T2*` at
/// the log-envelope estimate, and `A`, `phi` at the linear least-squares
/// solution for those two.
pub fn fit_fid(traj: &Trajectory) -> Result<FidFit> {
    let s = signal_of(traj)?;
    let t = &traj.times;
    let dt = uniform_spacing(t, 8)?;
    let span = t[t.len() - 1] - t[0];
    let cap = FID_T2_CAP_SPANS * span;
    let f0 = peak_frequency(s, dt)?;
    let t2_0 = envelope_t2(t, s).unwrap_or(span).min(cap);

    // linear solve for c1 cos + c2 sin under the initial envelope
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&ti, &si) in t.iter().zip(s) {
        let e = (-ti / t2_0).exp();
        let (sn, cs) = (2.0 * PI * f0 * ti).sin_cos();
        let (u, v) = (e * cs, e * sn);
        a11 += u * u;
        a12 += u * v;
        a22 += v * v;
        b1 += u * si;
        b2 += v * si;
    }
    let det = a11 * a22 - a12 * a12;
    let (c1, c2) = if det.abs() > 0.0 {
        ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
    } else {
        (s[0], 0.0)
    };
    let a0 = c1.hypot(c2);
    let phi0 = c2.atan2(c1);

    let eval = |p: &[f64]| -> Linearization {
        let (a, f, phi, t2) = (p[0], p[1], p[2], p[3]);
        let mut r = Vec::with_capacity(t.len());
        let mut j = Vec::with_capacity(t.len());
        for (&ti, &si) in t.iter().zip(s) {
            let e = (-ti / t2).exp();
            let arg = 2.0 * PI * f * ti - phi;
            let (sn, cs) = arg.sin_cos();
            r.push(a * cs * e - si);
            j.push(vec![
                cs * e,
                -a * sn * e * 2.0 * PI * ti,
                a * sn * e,
                a * cs * e * ti / (t2 * t2),
            ]);
        }
        (r, j)
    };
    let floor = dt * 1e-3;
    let o = levenberg_marquardt(vec![a0, f0, phi0, t2_0], eval, |p| {
        p[3] = p[3].clamp(floor, cap);
    });

    let (mut a, mut f, mut phi) = (o.params[0], o.params[1], o.params[2]);
    if f < 0.0 {
        f = -f;
        phi = -phi;
    }
    if a < 0.0 {
        a = -a;
        phi += PI;
    }
    phi = phi.rem_euclid(2.0 * PI);
    let t2 = o.params[3];
    Ok(FidFit {
        a,
        f_mhz: f,
        phi,
        t2_star_us: t2,
        residual_norm: o.cost.sqrt(),
        stderr: [
            stderr_of(&o.covariance, 0),
            stderr_of(&o.covariance, 1),
            stderr_of(&o.covariance, 2),
            stderr_of(&o.covariance, 3),
        ],
        converged: o.converged,
        t2_at_bound: t2 >= cap * (1.0 - 1e-9),
    })
}

/// `ln R = a ln Omega1 + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub a: f64,
    pub b: f64,
    pub stderr_a: f64,
    pub stderr_b: f64,
}

/// Ordinary least squares on `(ln x, ln y)`; every coordinate must be
/// positive and at least three points are required.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: points.len() });
    }
    for (i, &(x, y)) in points.iter().enumerate() {
        if !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::NonPositivePoint { index: i, x, y });
        }
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("log-log fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let s2 = ssr / (n - 2.0);
    Ok(LogLogFit {
        a,
        b,
        stderr_a: (s2 / sxx).sqrt(),
        stderr_b: (s2 * (1.0 / n + mx * mx / sxx)).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn power_grid() -> Vec<f64> {
        (1..=12).map(|k| 0.1 * k as f64).collect()
    }

    fn synth(s_max: f64, l0: f64, c: f64) -> Vec<(f64, f64)> {
        power_grid().into_iter().map(|l| (l, saturation_model(l, s_max, l0, c))).collect()
    }

    #[test]
    fn saturation_round_trip_v3_row() {
        let fit = fit_saturation(&synth(0.219, 0.488, 1.0), Exponent::Fixed(1.0)).unwrap();
        assert!(fit.converged && !fit.degenerate);
        assert_abs_diff_eq!(fit.s_max, 0.219, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.lambda0, 0.488, epsilon = 1e-6);
    }

    #[test]
    fn saturation_round_trip_v2_row() {
        let fit = fit_saturation(&synth(-0.111, 0.825, 1.0), Exponent::Fixed(1.0)).unwrap();
        assert_abs_diff_eq!(fit.s_max, -0.111, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.lambda0, 0.825, epsilon = 1e-6);
    }

    #[test]
    fn saturation_free_exponent() {
        let fit = fit_saturation(&synth(0.05, 0.3, 2.0), Exponent::Free).unwrap();
        assert_abs_diff_eq!(fit.c, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.s_max, 0.05, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.lambda0, 0.3, epsilon = 1e-6);
    }

    #[test]
    fn zero_signal_is_degenerate() {
        let pts: Vec<(f64, f64)> = power_grid().into_iter().map(|l| (l, 0.0)).collect();
        let fit = fit_saturation(&pts, Exponent::Free).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.s_max, 0.0);
    }

    #[test]
    fn saturation_rejects_bad_input() {
        assert!(matches!(
            fit_saturation(&synth(1.0, 1.0, 1.0)[..3], Exponent::Free),
            Err(Error::TooFewSamples { .. })
        ));
        let mut pts = synth(1.0, 1.0, 1.0);
        pts[2].0 = 0.0;
        assert!(matches!(
            fit_saturation(&pts, Exponent::Free),
            Err(Error::NonPositivePoint { index: 2, .. })
        ));
    }

    fn fid_trace(a: f64, f: f64, phi: f64, t2: f64, n: usize, dt: f64) -> Trajectory {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let s = t.iter().map(|&t| fid_model(t, a, f, phi, t2)).collect();
        Trajectory::from_signal(t, s).unwrap()
    }

    #[test]
    fn fid_round_trip() {
        let fit = fit_fid(&fid_trace(1.0, 40.0, 0.0, 0.062, 250, 0.002)).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.a, 1.0, max_relative = 1e-4);
        assert_relative_eq!(fit.f_mhz, 40.0, max_relative = 1e-4);
        assert_relative_eq!(fit.t2_star_us, 0.062, max_relative = 1e-4);
        let wrapped = fit.phi.min(2.0 * PI - fit.phi);
        assert!(wrapped < 1e-4);
    }

    #[test]
    fn undamped_cosine_hits_the_cap() {
        let fit = fit_fid(&fid_trace(0.5, 12.0, 0.3, f64::INFINITY, 200, 0.005)).unwrap();
        assert!(fit.t2_at_bound);
        assert_relative_eq!(fit.f_mhz, 12.0, max_relative = 1e-6);
    }

    #[test]
    fn loglog_identity() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, k as f64)).collect();
        let fit = fit_loglog(&pts).unwrap();
        assert_abs_diff_eq!(fit.a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.b, 0.0, epsilon = 1e-12);
        let bad = [(1.0, 1.0), (2.0, -1.0), (3.0, 3.0)];
        assert!(matches!(fit_loglog(&bad), Err(Error::NonPositivePoint { index: 1, .. })));
    }

    proptest! {
        #[test]
        fn loglog_slope_ignores_rescaling(
            a in 0.5f64..3.0, b in -2.0f64..2.0, k in 0.01f64..100.0,
        ) {
            let pts: Vec<(f64, f64)> =
                (1..8).map(|i| { let x = 0.7 * i as f64; (x, (b + a * x.ln()).exp()) }).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, k * y)).collect();
            let f1 = fit_loglog(&pts).unwrap();
            let f2 = fit_loglog(&scaled).unwrap();
            prop_assert!((f1.a - f2.a).abs() < 1e-9);
            prop_assert!((f2.b - f1.b - k.ln()).abs() < 1e-9);
        }

        #[test]
        fn saturation_exact_on_own_model(
            s_max in -1.0f64..1.0, l0 in 0.05f64..2.0,
        ) {
            prop_assume!(s_max.abs() > 1e-3);
            let pts = synth(s_max, l0, 1.0);
            let fit = fit_saturation(&pts, Exponent::Fixed(1.0)).unwrap();
            prop_assert!(fit.residual_norm <= 1e-8 * s_max.abs());
        }

        #[test]
        fn fid_exact_on_own_model(
            f in 20.0f64..60.0, t2 in 0.04f64..0.2, phi in 0.0f64..6.0,
        ) {
            let tr = fid_trace(0.8, f, phi, t2, 300, 0.002);
            let fit = fit_fid(&tr).unwrap();
            prop_assert!(fit.residual_norm <= 1e-8 * 0.8, "residual {}", fit.residual_norm);
        }
    }
}
