//! Rabi frequency against drive strength on a log-log scale for the 1-, 2-
//! and 3-photon resonances of V3 and V2.

use odmr_lab::analysis::{dominant_frequency, fit_loglog};
use odmr_lab::sequences::{period_grid, simulate_rabi, InhomogeneityModel};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    for (kind, lo, hi) in [(VacancyKind::V3, 2.0f64, 8.0), (VacancyKind::V2, 6.0, 20.0)] {
        let sys = VacancySystem::new(kind);
        let gap = (2.0 * sys.d_mhz).abs();
        for photons in 1..=3 {
            let omega = gap / photons as f64;
            let tau = period_grid(omega, 16.0)?;
            let mut points = Vec::new();
            for k in 0..7 {
                let omega1 = lo * (hi / lo).powf(k as f64 / 6.0);
                let trace = simulate_rabi(
                    &sys,
                    &RFDrive::linear(omega1, omega),
                    &RelaxationParams::closed(),
                    &InhomogeneityModel::homogeneous(),
                    &tau,
                    None,
                )?;
                points.push((omega1, dominant_frequency(&trace)?));
            }
            let fit = fit_loglog(&points)?;
            println!("{kind} {photons}-photon: a = {:.3} +- {:.3}, b = {:.3}", fit.a, fit.stderr_a, fit.b);
        }
    }
    Ok(())
}
