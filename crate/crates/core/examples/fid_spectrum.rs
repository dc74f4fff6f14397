//! Phase-cycled free induction decay of V3 after 1-, 2- and 3-photon pulses,
//! with the spectral line and a damped-cosine fit for each.

use odmr_lab::analysis::{fft_spectrum, find_peaks, fit_fid};
use odmr_lab::defaults::{FID_BETA, FID_DETUNING_MHZ, FID_PULSE_US, PULSED_ALPHA};
use odmr_lab::sequences::simulate_fid;
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let sys = VacancySystem::new(VacancyKind::V3);
    let relax = RelaxationParams::new(PULSED_ALPHA, FID_BETA, 0.0);
    let tau: Vec<f64> = (0..300).map(|k| k as f64 * 0.002).collect();
    for omega in [28.0, 14.0, 9.3] {
        let trace = simulate_fid(&sys, &RFDrive::linear(9.1, omega), &relax, FID_DETUNING_MHZ, FID_PULSE_US, &tau, None)?;
        let spectrum = fft_spectrum(&trace)?;
        let strongest = find_peaks(&spectrum, 0.0)
            .into_iter()
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
            .expect("an FID has a spectral line");
        let fit = fit_fid(&trace)?;
        println!(
            "omega = {omega:>4} MHz: line at {:.2} MHz, fit f = {:.2} MHz, T2* = {:.1} ns",
            strongest.freq_mhz,
            fit.f_mhz,
            fit.t2_star_us * 1e3
        );
    }
    Ok(())
}
