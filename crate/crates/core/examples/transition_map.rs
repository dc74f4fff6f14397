//! Eigenvalue transition map of V3 along the c-axis and the field-per-
//! frequency slope of each labelled branch.

use odmr_lab::sequences::{branch_slopes, transition_map};
use odmr_lab::{VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let fields: Vec<f64> = (0..=100).map(|k| 0.1 * k as f64).collect();
    let lines = transition_map(&VacancySystem::new(VacancyKind::V3), &fields, 3)?;
    let slopes = branch_slopes(&lines);
    let unit = slopes.iter().find(|s| s.label == "P3^1a").expect("1-photon branch").mt_per_mhz;
    println!("{:8} {:>4} {:>4} {:>12} {:>8}", "label", "dp", "dm", "mT/MHz", "ratio");
    for s in &slopes {
        println!("{:8} {:>4} {:>4} {:>12.6e} {:>8.4}", s.label, s.delta_p, s.delta_ms, s.mt_per_mhz, s.mt_per_mhz / unit);
    }
    Ok(())
}
