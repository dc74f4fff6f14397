//! Population dynamics of V3 under linearly and circularly polarized 2- and
//! 3-photon drive, starting from the pumped state with no relaxation.

use odmr_lab::master_eq::evolve;
use odmr_lab::{CollapseSet, DensityMatrix, RFDrive, VacancyKind, VacancySystem};
use std::f64::consts::FRAC_PI_4;

fn main() -> odmr_lab::Result<()> {
    let sys = VacancySystem::new(VacancyKind::V3);
    let rho0 = DensityMatrix::from_populations(VacancyKind::V3.pumped_populations())?;
    for (name, phi) in [("linear", 0.0), ("circular", FRAC_PI_4)] {
        for omega in [14.0, 9.3] {
            let drive = RFDrive::linear(9.1, omega).with_phi(phi);
            let run = evolve(&rho0, 0.0, 1.0, 2.5e-4, Some(&drive), &sys, &CollapseSet::empty(), None)?;
            let pops = run.trajectory.populations.as_ref().expect("populations recorded");
            println!("{name} drive at {omega} MHz (populations of 3/2, 1/2, -1/2, -3/2):");
            for k in (0..pops.len()).step_by(pops.len() / 5) {
                let p = pops[k];
                println!("  t = {:.2} us: {:.3} {:.3} {:.3} {:.3}", run.trajectory.times[k], p[0], p[1], p[2], p[3]);
            }
        }
    }
    Ok(())
}
