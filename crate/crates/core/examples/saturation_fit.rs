//! CW peak amplitude of the V3 lines against drive strength, fitted with the
//! saturation law `S = S_max L^c / (L0 + L^c)` with a free exponent.

use odmr_lab::analysis::{fit_saturation, Exponent};
use odmr_lab::defaults::*;
use odmr_lab::sequences::{cw_spectrum, CwSettings};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let sys = VacancySystem::new(VacancyKind::V3);
    let relax = RelaxationParams::new(CW_ALPHA_V3, CW_BETA_V3, CW_DELTA_V3);
    let settings = CwSettings::default();
    let cases: [(usize, f64, &[f64]); 3] = [
        (1, 28.0, &[0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.15, 0.2]),
        (2, 14.0, &[0.3, 0.5, 0.7, 1.0, 1.5, 2.0, 3.0]),
        (3, 28.0 / 3.0, &[1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0]),
    ];
    for (photons, f0, omega1s) in cases {
        let grid: Vec<f64> = (0..=40).map(|k| f0 - 0.4 + 0.03 * k as f64).collect();
        let mut points = Vec::new();
        for &omega1 in omega1s {
            let sp = cw_spectrum(&sys, &relax, &RFDrive::linear(omega1, f0), &grid, None, &settings)?;
            let (_, amplitude) = sp.extremum_in(f0 - 0.4, f0 + 0.8).expect("nonempty window");
            // Lambda is the square root of RF power, Omega1 / kappa
            points.push((omega1 / KAPPA_BY_PHOTONS[photons - 1], amplitude));
        }
        let fit = fit_saturation(&points, Exponent::Free)?;
        println!(
            "{photons}-photon: S_max = {:.3}, Lambda0 = {:.3e}, c = {:.2} +- {:.2}",
            fit.s_max, fit.lambda0, fit.c, fit.stderr[2]
        );
    }
    Ok(())
}
