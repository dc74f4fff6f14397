//! Zero-field CW ODMR spectra of V3 and V2: positive V3 lines at 28, 14 and
//! 9.33 MHz, negative V2 lines at 128 and 64 MHz.

use odmr_lab::analysis::find_peaks;
use odmr_lab::defaults::*;
use odmr_lab::sequences::{cw_spectrum, CwSettings};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let grid: Vec<f64> = (0..281).map(|k| 0.5 + 0.5 * k as f64).collect();
    let cases = [
        (VacancyKind::V3, 2.5, RelaxationParams::new(CW_ALPHA_V3, CW_BETA_V3, CW_DELTA_V3)),
        (VacancyKind::V2, 3.0, RelaxationParams::new(CW_ALPHA_V2, CW_BETA_V2, CW_DELTA_V2)),
    ];
    for (kind, omega1, relax) in cases {
        let sys = VacancySystem::new(kind);
        let spectrum = cw_spectrum(&sys, &relax, &RFDrive::linear(omega1, 1.0), &grid, None, &CwSettings::default())?;
        println!("{kind} at Omega1 = {omega1} MHz:");
        for p in find_peaks(&spectrum, 1e-3) {
            println!("  {:7.3} MHz  {:+.4}  (prominence {:.4})", p.freq_mhz, p.amplitude, p.prominence);
        }
    }
    Ok(())
}
