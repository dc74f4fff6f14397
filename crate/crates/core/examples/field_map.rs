//! CW map of V3 for fields 2.5 degrees off the c-axis: the strongest lines
//! at each field.

use odmr_lab::analysis::find_peaks;
use odmr_lab::defaults::*;
use odmr_lab::sequences::{field_sweep, CwSettings, FieldPath};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};

fn main() -> odmr_lab::Result<()> {
    let sys = VacancySystem::new(VacancyKind::V3);
    let relax = RelaxationParams::new(CW_ALPHA_V3, CW_BETA_V3, CW_DELTA_V3);
    let path = FieldPath::tilted_parallel(&[0.0, 1.5, 3.0, 4.5], PARALLEL_TILT_DEG);
    let grid: Vec<f64> = (2..=200).map(|k| k as f64).collect();
    let drive = RFDrive::linear(FIELD_MAP_OMEGA1_MHZ, grid[0]);
    let map = field_sweep(&sys, &relax, &drive, &path, &grid, None, &CwSettings::default())?;
    for (i, b) in path.labels_mt.iter().enumerate() {
        let mut peaks = find_peaks(&map.row(i), 0.02);
        peaks.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
        let lines: Vec<String> = peaks.iter().take(6).map(|p| format!("{:.1}", p.freq_mhz)).collect();
        println!("B = {b:.1} mT: strongest lines at {} MHz", lines.join(", "));
    }
    Ok(())
}
