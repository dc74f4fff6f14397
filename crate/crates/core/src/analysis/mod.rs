//! Spectral estimation and least-squares fitting.

pub mod fit;
pub mod spectral;

pub use fit::{fit_fid, fit_loglog, fit_saturation, Exponent, FidFit, LogLogFit, SaturationFit};
pub use spectral::{dominant_frequency, fft_spectrum, find_peaks, Peak};
