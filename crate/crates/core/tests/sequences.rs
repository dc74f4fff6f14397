//! Protocol-level identities: ensemble averaging, field paths, spectra and
//! transition maps.

use odmr_lab::defaults::*;
use odmr_lab::sequences::{
    cw_point, cw_spectrum, field_sweep, period_grid, simulate_fid, simulate_rabi, transition_map, CwSettings,
    FieldPath, InhomogeneityModel,
};
use odmr_lab::{RFDrive, RelaxationParams, VacancyKind, VacancySystem};
use proptest::prelude::*;

fn short() -> CwSettings {
    CwSettings { duration_us: 0.5, steps: 1000, scale: 1.0 }
}

fn v3_cw() -> RelaxationParams {
    RelaxationParams::new(CW_ALPHA_V3, CW_BETA_V3, CW_DELTA_V3)
}

#[test]
fn single_member_ensemble_matches_the_plain_spectrum() {
    let sys = VacancySystem::new(VacancyKind::V3);
    let grid = [13.5, 14.0, 27.5, 28.0];
    let drive = RFDrive::linear(3.0, 1.0);
    let one = InhomogeneityModel::new(vec![(1.0, 1.0)]).unwrap();
    let plain = cw_spectrum(&sys, &v3_cw(), &drive, &grid, None, &short()).unwrap();
    let averaged = cw_spectrum(&sys, &v3_cw(), &drive, &grid, Some(&one), &short()).unwrap();
    assert_eq!(plain, averaged);
}

#[test]
fn spectrum_points_equal_single_cw_points() {
    let sys = VacancySystem::new(VacancyKind::V2);
    let relax = RelaxationParams::new(CW_ALPHA_V2, CW_BETA_V2, CW_DELTA_V2);
    let grid = [64.0, 128.0];
    let drive = RFDrive::linear(3.0, 1.0);
    let sp = cw_spectrum(&sys, &relax, &drive, &grid, None, &short()).unwrap();
    for (w, v) in grid.iter().zip(&sp.values) {
        assert_eq!(*v, cw_point(&sys, &relax, &drive.with_omega(*w), &short()).unwrap());
    }
}

#[test]
fn output_scale_multiplies_contrast() {
    let sys = VacancySystem::new(VacancyKind::V3);
    let drive = RFDrive::linear(3.0, 28.0);
    let base = cw_point(&sys, &v3_cw(), &drive, &short()).unwrap();
    let scaled = cw_point(&sys, &v3_cw(), &drive, &CwSettings { scale: -2.5, ..short() }).unwrap();
    assert!((scaled + 2.5 * base).abs() < 1e-15);
}

#[test]
fn zero_transverse_field_sweep_is_the_parallel_sweep() {
    let sys = VacancySystem::new(VacancyKind::V3);
    let drive = RFDrive::linear(3.0, 1.0);
    let grid = [20.0, 28.0, 40.0];
    let perp = field_sweep(&sys, &v3_cw(), &drive, &FieldPath::perpendicular(2.0, &[0.0]), &grid, None, &short()).unwrap();
    let par = field_sweep(&sys, &v3_cw(), &drive, &FieldPath::tilted_parallel(&[2.0], 0.0), &grid, None, &short()).unwrap();
    assert_eq!(perp.contrast, par.contrast);
}

#[test]
fn field_map_rows_match_fixed_field_spectra() {
    let sys = VacancySystem::new(VacancyKind::V3);
    let drive = RFDrive::linear(3.0, 1.0);
    let grid = [30.0, 55.0];
    let path = FieldPath::tilted_parallel(&[0.0, 1.5], PARALLEL_TILT_DEG);
    let map = field_sweep(&sys, &v3_cw(), &drive, &path, &grid, None, &short()).unwrap();
    for (i, b) in path.vectors_mt.iter().enumerate() {
        let sp = cw_spectrum(&sys.clone().with_field(*b), &v3_cw(), &drive, &grid, None, &short()).unwrap();
        assert_eq!(map.row(i).values, sp.values);
    }
}

#[test]
fn rabi_signal_starts_at_zero_and_stays_bounded() {
    let sys = VacancySystem::new(VacancyKind::V3);
    let tau = period_grid(28.0, 0.5).unwrap();
    let tr = simulate_rabi(
        &sys,
        &RFDrive::linear(9.1, 28.0),
        &RelaxationParams::new(PULSED_ALPHA, RABI_BETA_BY_PHOTONS[0], 0.0),
        &InhomogeneityModel::rabi_preset(),
        &tau,
        None,
    )
    .unwrap();
    assert!(tr.signal[0].abs() < 1e-12);
    assert!(tr.signal.iter().all(|s| s.abs() <= 1.0 + 1e-9));
    assert!(tr.signal.iter().any(|s| s.abs() > 0.1));
}

#[test]
fn fid_vanishes_without_drive() {
    let sys = VacancySystem::new(VacancyKind::V3);
    let tau: Vec<f64> = (0..20).map(|k| 0.002 * k as f64).collect();
    let relax = RelaxationParams::new(PULSED_ALPHA, FID_BETA, 0.0);
    let tr = simulate_fid(&sys, &RFDrive::linear(0.0, 28.0), &relax, FID_DETUNING_MHZ, FID_PULSE_US, &tau, None).unwrap();
    assert!(tr.signal.iter().all(|s| s.abs() < 1e-12));
}

#[test]
fn period_grid_samples_whole_rf_periods() {
    let g = period_grid(28.0, 1.0).unwrap();
    assert_eq!(g.len(), 29);
    assert!((g[28] - 1.0).abs() < 1e-12);
    assert!(period_grid(0.0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn transition_frequencies_are_level_gaps_over_photon_number(b in 0.0f64..8.0) {
        let sys = VacancySystem::new(VacancyKind::V3);
        let lines = transition_map(&sys, &[b], 3).unwrap();
        let h = odmr_lab::static_hamiltonian(&sys.clone().with_field(nalgebra::Vector3::new(0.0, 0.0, b)));
        let levels = odmr_lab::eigensystem(&h).unwrap().values;
        prop_assert!(!lines.is_empty());
        for l in &lines {
            let n = l.delta_p as f64;
            let gap = l.freq_mhz * n;
            prop_assert!(levels.iter().any(|a| levels.iter().any(|c| ((a - c).abs() - gap).abs() < 1e-9)));
            prop_assert!((l.signed_freq_mhz.abs() - l.freq_mhz).abs() < 1e-9);
        }
    }

    #[test]
    fn ensemble_weights_must_sum_to_one(w in 0.1f64..0.9, err in 1e-6f64..0.1) {
        prop_assert!(InhomogeneityModel::new(vec![(0.9, w), (1.1, 1.0 - w)]).is_ok());
        prop_assert!(InhomogeneityModel::new(vec![(0.9, w), (1.1, 1.0 - w + err)]).is_err());
    }
}
