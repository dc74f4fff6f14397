//! Zero-padded FFT spectra, dominant-frequency estimation and peak picking.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::master_eq::Trajectory;
use crate::sequences::Spectrum;

/// Zero-padding factor applied before every transform.
pub const ZERO_PAD: usize = 8;
/// Minimum number of samples accepted by the spectral estimators.
pub const MIN_SAMPLES: usize = 16;

/// Checks the time grid is uniform and returns its spacing.
pub(crate) fn uniform_spacing(times: &[f64], needed: usize) -> Result<f64> {
    if times.len() < needed.max(2) {
        return Err(Error::TooFewSamples { needed: needed.max(2), got: times.len() });
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let deviation = times
        .windows(2)
        .map(|w| (w[1] - w[0] - dt).abs())
        .fold(0.0f64, f64::max);
    if !(dt > 0.0) || deviation > 1e-6 * dt {
        return Err(Error::NonUniformGrid { deviation });
    }
    Ok(dt)
}

/// One-sided magnitude spectrum of the mean-removed signal, `|X_k| / N`,
/// on bins `0..=M/2` of the `M = 8N` point transform.
fn padded_magnitudes(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let m = n * ZERO_PAD;
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat_n(Complex::new(0.0, 0.0), m - n))
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    buf[..=m / 2].iter().map(|z| z.norm() / n as f64).collect()
}

pub(crate) fn signal_of(traj: &Trajectory) -> Result<&[f64]> {
    if traj.signal.len() != traj.times.len() {
        return Err(Error::invalid("trajectory carries no signal"));
    }
    Ok(&traj.signal)
}

/// Magnitude spectrum on the zero-padded frequency grid (MHz).
pub fn fft_spectrum(traj: &Trajectory) -> Result<Spectrum> {
    let signal = signal_of(traj)?;
    let dt = uniform_spacing(&traj.times, MIN_SAMPLES)?;
    let mags = padded_magnitudes(signal);
    let df = 1.0 / (dt * (signal.len() * ZERO_PAD) as f64);
    let freqs = (0..mags.len()).map(|k| k as f64 * df).collect();
    Spectrum::new(freqs, mags)
}

/// Vertex offset of the parabola through three equally spaced samples, in
/// units of the spacing, within [-1/2, 1/2] when `b` is the largest.
pub fn parabolic_offset(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom == 0.0 || !denom.is_finite() {
        0.0
    } else {
        (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
    }
}

/// Frequency (MHz) of the strongest nonzero Fourier component, refined by a
/// parabola through the log-magnitudes of the peak bin and its neighbours.
pub fn dominant_frequency(traj: &Trajectory) -> Result<f64> {
    let signal = signal_of(traj)?;
    let dt = uniform_spacing(&traj.times, MIN_SAMPLES)?;
    peak_frequency(signal, dt)
}

/// Dominant-frequency estimate on a grid already known to be uniform.
pub(crate) fn peak_frequency(signal: &[f64], dt: f64) -> Result<f64> {
    let mags = padded_magnitudes(signal);
    let scale = signal.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let (k, peak) = mags
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, 0.0f64), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
    if k == 0 || peak <= 1e-12 * scale {
        return Err(Error::NoOscillation);
    }
    let offset = if k + 1 < mags.len() && mags[k - 1] > 0.0 && mags[k + 1] > 0.0 {
        parabolic_offset(mags[k - 1].ln(), peak.ln(), mags[k + 1].ln())
    } else {
        0.0
    };
    Ok((k as f64 + offset) / (dt * (signal.len() * ZERO_PAD) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub freq_mhz: f64,
    /// Signed extremum value; negative for dips.
    pub amplitude: f64,
    pub prominence: f64,
}

/// Topographic prominence of the maximum at `i`.
fn prominence(v: &[f64], i: usize) -> f64 {
    let h = v[i];
    let side_min = |range: &mut dyn Iterator<Item = usize>| {
        let mut lowest = h;
        for j in range {
            if v[j] > h {
                break;
            }
            lowest = lowest.min(v[j]);
        }
        lowest
    };
    let left = side_min(&mut (0..i).rev());
    let right = side_min(&mut (i + 1..v.len()));
    h - left.max(right)
}

fn maxima(v: &[f64], min_prominence: f64) -> Vec<(usize, f64)> {
    let n = v.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            // walk over a plateau
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let mid = (i + j) / 2;
                let p = prominence(v, mid);
                if p >= min_prominence && p > 0.0 {
                    out.push((mid, p));
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Positive maxima and negative-going dips whose prominence reaches
/// `min_prominence`, refined by parabolic interpolation and sorted by
/// frequency.
pub fn find_peaks(spectrum: &Spectrum, min_prominence: f64) -> Vec<Peak> {
    let v = &spectrum.values;
    let f = &spectrum.freqs_mhz;
    let mut peaks = Vec::new();
    for sign in [1.0, -1.0] {
        let s: Vec<f64> = v.iter().map(|x| sign * x).collect();
        for (i, p) in maxima(&s, min_prominence) {
            if s[i] <= 0.0 {
                continue;
            }
            let offset = parabolic_offset(s[i - 1], s[i], s[i + 1]);
            let step = if offset >= 0.0 { f[i + 1] - f[i] } else { f[i] - f[i - 1] };
            let (a, b, c) = (s[i - 1], s[i], s[i + 1]);
            let top = b - 0.25 * (a - c) * offset;
            peaks.push(Peak { freq_mhz: f[i] + offset * step, amplitude: sign * top, prominence: p });
        }
    }
    peaks.sort_by(|a, b| a.freq_mhz.total_cmp(&b.freq_mhz));
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn sampled(f: impl Fn(f64) -> f64, dt: f64, n: usize) -> Trajectory {
        let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let s = t.iter().map(|&t| f(t)).collect();
        Trajectory::from_signal(t, s).unwrap()
    }

    #[test]
    fn pure_tone() {
        let tr = sampled(|t| (2.0 * PI * 5.0 * t).cos(), 0.001, 2001);
        assert_abs_diff_eq!(dominant_frequency(&tr).unwrap(), 5.0, epsilon = 0.01);
    }

    #[test]
    fn larger_component_wins() {
        let tr = sampled(|t| 0.3 * (2.0 * PI * 3.0 * t).cos() + (2.0 * PI * 7.0 * t).cos(), 0.001, 2001);
        assert_abs_diff_eq!(dominant_frequency(&tr).unwrap(), 7.0, epsilon = 0.02);
    }

    #[test]
    fn constant_signal_has_no_oscillation() {
        let tr = sampled(|_| 0.7, 0.01, 64);
        assert!(matches!(dominant_frequency(&tr), Err(Error::NoOscillation)));
    }

    #[test]
    fn grid_checks() {
        let tr = sampled(|t| t.sin(), 0.01, 10);
        assert!(matches!(dominant_frequency(&tr), Err(Error::TooFewSamples { .. })));
        let mut t: Vec<f64> = (0..32).map(|k| k as f64 * 0.01).collect();
        t[5] += 0.003;
        let s = t.iter().map(|t| t.sin()).collect();
        let tr = Trajectory::from_signal(t, s).unwrap();
        assert!(matches!(dominant_frequency(&tr), Err(Error::NonUniformGrid { .. })));
    }

    #[test]
    fn spectrum_of_tone_and_silence() {
        let tr = sampled(|t| (2.0 * PI * 40.0 * t).cos(), 0.002, 200);
        let sp = fft_spectrum(&tr).unwrap();
        let (k, _) = sp.values.iter().enumerate().fold((0, 0.0), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
        assert!((sp.freqs_mhz[k] - 40.0).abs() < 0.5);
        let zero = sampled(|_| 0.0, 0.002, 200);
        assert!(fft_spectrum(&zero).unwrap().values.iter().all(|&v| v == 0.0));
    }

    fn lorentz(f0: f64, w: f64, a: f64) -> impl Fn(f64) -> f64 {
        move |f| a * w * w / ((f - f0).powi(2) + w * w)
    }

    #[test]
    fn peaks_and_dips() {
        let freqs: Vec<f64> = (0..=400).map(|k| k as f64 * 0.25).collect();
        let bump = lorentz(28.0, 1.0, 1.0);
        let dip = lorentz(64.0, 2.0, -0.5);
        let vals = freqs.iter().map(|&f| bump(f) + dip(f)).collect();
        let sp = Spectrum::new(freqs, vals).unwrap();
        let p = find_peaks(&sp, 0.1);
        assert_eq!(p.len(), 2);
        assert_abs_diff_eq!(p[0].freq_mhz, 28.0, epsilon = 0.0625);
        assert!(p[0].amplitude > 0.0);
        assert_abs_diff_eq!(p[1].freq_mhz, 64.0, epsilon = 0.0625);
        assert!(p[1].amplitude < 0.0);
        let flat = Spectrum::new(vec![1.0, 2.0, 3.0], vec![0.5; 3]).unwrap();
        assert!(find_peaks(&flat, 0.0).is_empty());
    }

    #[test]
    fn off_grid_peak_is_interpolated() {
        let freqs: Vec<f64> = (0..=200).map(|k| k as f64 * 0.5).collect();
        let g = |f: f64| (-(f - 28.2f64).powi(2) / 8.0).exp();
        let sp = Spectrum::new(freqs.clone(), freqs.iter().map(|&f| g(f)).collect()).unwrap();
        let p = find_peaks(&sp, 0.1);
        assert_eq!(p.len(), 1);
        assert_abs_diff_eq!(p[0].freq_mhz, 28.2, epsilon = 0.125);
    }
}
