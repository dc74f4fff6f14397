//! Closed-system Rabi nutation of V3 on its 1-, 2- and 3-photon resonances.
//!
//! Run with `cargo run --release --example rabi_nutation`.

use odmr_lab::analysis::dominant_frequency;
use odmr_lab::sequences::{period_grid, simulate_rabi, InhomogeneityModel};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let sys = VacancySystem::new(VacancyKind::V3);
    for (photons, omega) in [(1, 28.0), (2, 14.0), (3, 9.3)] {
        let tau = period_grid(omega, 4.0)?;
        let trace = simulate_rabi(
            &sys,
            &RFDrive::linear(9.1, omega),
            &RelaxationParams::closed(),
            &InhomogeneityModel::homogeneous(),
            &tau,
            None,
        )?;
        println!("{photons}-photon (omega = {omega} MHz): Rabi frequency {:.3} MHz", dominant_frequency(&trace)?);
    }
    Ok(())
}
