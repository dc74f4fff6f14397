//! Effect of an RF component along the c-axis on the V3 CW lines: the 2- and
//! 3-photon peaks grow while the 1-photon peak barely moves.

use odmr_lab::defaults::*;
use odmr_lab::sequences::{cw_spectrum, CwSettings, InhomogeneityModel};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let sys = VacancySystem::new(VacancyKind::V3);
    let relax = RelaxationParams::new(CW_ALPHA_V3, CW_BETA_V3, CW_DELTA_V3);
    let inhom = InhomogeneityModel::z_drive_preset();
    let windows = [(1, 27.0, 29.5), (2, 13.6, 14.8), (3, 9.0, 10.0)];
    for p_z in [0.0, 1.0] {
        let drive = RFDrive::linear(ZDRIVE_OMEGA1_MHZ, 1.0).with_p_z(p_z);
        let mut line = format!("p = {p_z}:");
        for (photons, lo, hi) in windows {
            let grid: Vec<f64> = (0..=((hi - lo) / 0.05) as usize).map(|k| lo + 0.05 * k as f64).collect();
            let sp = cw_spectrum(&sys, &relax, &drive, &grid, Some(&inhom), &CwSettings::default())?;
            let (f, v) = sp.extremum_in(lo, hi).expect("nonempty window");
            line += &format!("  {photons}-photon {v:.4} at {f:.2} MHz");
        }
        println!("{line}");
    }
    Ok(())
}
