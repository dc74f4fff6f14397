//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 when
//! any criterion fails. Every tolerance and scenario parameter is pinned
//! here.

use std::process::ExitCode;
use std::time::Instant;

use odmr_lab::analysis::{dominant_frequency, fft_spectrum, find_peaks, fit_fid, fit_loglog, fit_saturation, Exponent};
use odmr_lab::defaults::*;
use odmr_lab::master_eq::{propagator_oracle, Integrator};
use odmr_lab::sequences::{
    branch_slopes, cw_spectrum, period_grid, simulate_fid, simulate_rabi, transition_map, CwSettings,
    InhomogeneityModel, Spectrum,
};
use odmr_lab::{
    collapse_set, eigensystem, CollapseSet, DensityMatrix, Mat4, RFDrive, RelaxationParams, VacancyKind,
    VacancySystem,
};

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn v3() -> VacancySystem {
    VacancySystem::new(VacancyKind::V3)
}

fn cw_relax(kind: VacancyKind) -> RelaxationParams {
    match kind {
        VacancyKind::V2 => RelaxationParams::new(CW_ALPHA_V2, CW_BETA_V2, CW_DELTA_V2),
        VacancyKind::V3 => RelaxationParams::new(CW_ALPHA_V3, CW_BETA_V3, CW_DELTA_V3),
    }
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect()
}

fn max_entry(a: &Mat4) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

fn rabi_frequency(sys: &VacancySystem, omega1: f64, omega: f64, record_us: f64) -> odmr_lab::Result<f64> {
    let tau = period_grid(omega, record_us)?;
    let tr = simulate_rabi(
        sys,
        &RFDrive::linear(omega1, omega),
        &RelaxationParams::closed(),
        &InhomogeneityModel::homogeneous(),
        &tau,
        None,
    )?;
    dominant_frequency(&tr)
}

// 1. Rabi frequencies on the 1-, 2- and 3-photon resonances.
const RABI_OMEGA1: f64 = 9.1;
const RABI_CASES: [(f64, f64); 3] = [(28.0, 7.8), (14.0, 3.39), (9.3, 2.56)];
const RABI_RECORD_US: f64 = 8.0;
const RABI_REL_TOL: f64 = 0.05;
const RABI_RUNTIME_S: f64 = 30.0;

fn rabi(r: &mut Report) -> odmr_lab::Result<()> {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (omega, target) in RABI_CASES {
        let f = rabi_frequency(&v3(), RABI_OMEGA1, omega, RABI_RECORD_US)?;
        let rel = (f - target) / target;
        ok &= rel.abs() <= RABI_REL_TOL;
        parts.push(format!("{f:.3} MHz vs {target} ({:+.1}%)", 100.0 * rel));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < RABI_RUNTIME_S;
    r.line("1 (Rabi frequencies)", ok, format!("{}; {secs:.1} s", parts.join(", ")));
    Ok(())
}

// 2. FID spectral lines and T2*.
const FID_OMEGA1: f64 = 9.1;
const FID_CASES: [(f64, f64); 3] = [(28.0, 40.0), (14.0, 54.0), (9.3, 58.7)];
const FID_TAU_STEP_US: f64 = 0.002;
const FID_TAU_END_US: f64 = 0.6;
const FID_LINE_TOL_MHZ: f64 = 1.0;
const FID_T2_US: f64 = 0.062;
const FID_T2_REL_TOL: f64 = 0.10;

fn fid(r: &mut Report) -> odmr_lab::Result<()> {
    let relax = RelaxationParams::new(PULSED_ALPHA, FID_BETA, 0.0);
    let tau = grid(0.0, FID_TAU_END_US, FID_TAU_STEP_US);
    let mut ok = true;
    let mut parts = Vec::new();
    for (omega, target) in FID_CASES {
        let tr = simulate_fid(&v3(), &RFDrive::linear(FID_OMEGA1, omega), &relax, FID_DETUNING_MHZ, FID_PULSE_US, &tau, None)?;
        let line = find_peaks(&fft_spectrum(&tr)?, 0.0)
            .into_iter()
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
            .map_or(f64::NAN, |p| p.freq_mhz);
        let t2 = fit_fid(&tr)?.t2_star_us;
        let rel = (t2 - FID_T2_US) / FID_T2_US;
        ok &= (line - target).abs() <= FID_LINE_TOL_MHZ && rel.abs() <= FID_T2_REL_TOL;
        parts.push(format!("{line:.2} MHz vs {target}, T2* {:.1} ns ({:+.1}%)", t2 * 1e3, 100.0 * rel));
    }
    r.line("2 (FID lines and T2*)", ok, parts.join("; "));
    Ok(())
}

// 3. Zero-field CW peaks; also timed for criterion 9.
const CW_GRID: (f64, f64, f64) = (0.5, 140.5, 0.5);
const CW_V3_OMEGA1: f64 = 2.5;
const CW_V2_OMEGA1: f64 = 3.0;
const CW_V3_LINES: [f64; 3] = [28.0, 14.0, 28.0 / 3.0];
const CW_V2_LINES: [f64; 2] = [128.0, 64.0];
const CW_MIN_PROMINENCE: f64 = 1e-3;
const CW_SEARCH_MHZ: f64 = 2.0;
const CW_LINE_TOL_MHZ: f64 = 0.5;
const CW_SWEEP_RUNTIME_S: f64 = 60.0;

fn signed_line(sp: &Spectrum, target: f64, sign: f64) -> Option<f64> {
    find_peaks(sp, CW_MIN_PROMINENCE)
        .into_iter()
        .filter(|p| (p.freq_mhz - target).abs() <= CW_SEARCH_MHZ && p.amplitude * sign > 0.0)
        .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
        .map(|p| p.freq_mhz)
}

fn cw_peaks(r: &mut Report) -> odmr_lab::Result<f64> {
    let freqs = grid(CW_GRID.0, CW_GRID.1, CW_GRID.2);
    let settings = CwSettings::default();
    let mut ok = true;
    let mut parts = Vec::new();
    let start = Instant::now();
    let v3_sp = cw_spectrum(&v3(), &cw_relax(VacancyKind::V3), &RFDrive::linear(CW_V3_OMEGA1, 1.0), &freqs, None, &settings)?;
    let sweep_secs = start.elapsed().as_secs_f64();
    let v2 = VacancySystem::new(VacancyKind::V2);
    let v2_sp = cw_spectrum(&v2, &cw_relax(VacancyKind::V2), &RFDrive::linear(CW_V2_OMEGA1, 1.0), &freqs, None, &settings)?;
    for (sp, lines, sign, name) in [(&v3_sp, &CW_V3_LINES[..], 1.0, "V3"), (&v2_sp, &CW_V2_LINES[..], -1.0, "V2")] {
        for &target in lines {
            match signed_line(sp, target, sign) {
                Some(f) => {
                    ok &= (f - target).abs() <= CW_LINE_TOL_MHZ;
                    parts.push(format!("{name} {f:.2} vs {target:.2}"));
                }
                None => {
                    ok = false;
                    parts.push(format!("{name} no line near {target:.2}"));
                }
            }
        }
    }
    r.line("3 (zero-field CW peaks)", ok, parts.join(", "));
    Ok(sweep_secs)
}

// 4. Log-log slope of the Rabi frequency against drive.
const LOGLOG_POINTS: usize = 7;
const LOGLOG_RECORD_US: f64 = 16.0;
const LOGLOG_CASES: [(VacancyKind, f64, f64, [f64; 3]); 2] = [
    (VacancyKind::V3, 2.0, 8.0, [1.05, 2.01, 2.02]),
    (VacancyKind::V2, 6.0, 20.0, [1.02, 2.00, 2.05]),
];
const LOGLOG_TOL: f64 = 0.15;

fn loglog(r: &mut Report) -> odmr_lab::Result<()> {
    let mut ok = true;
    let mut parts = Vec::new();
    for (kind, lo, hi, targets) in LOGLOG_CASES {
        let sys = VacancySystem::new(kind);
        let gap = (2.0 * sys.d_mhz).abs();
        for (n, target) in (1..=3).zip(targets) {
            let omega = gap / n as f64;
            let mut pts = Vec::new();
            for omega1 in log_grid(lo, hi, LOGLOG_POINTS) {
                pts.push((omega1, rabi_frequency(&sys, omega1, omega, LOGLOG_RECORD_US)?));
            }
            let a = fit_loglog(&pts)?.a;
            ok &= (a - target).abs() <= LOGLOG_TOL;
            parts.push(format!("{kind} n={n} a={a:.3} vs {target}"));
        }
    }
    r.line("4 (log-log slopes)", ok, parts.join(", "));
    Ok(())
}

// 5. Saturation exponents of the V3 CW peaks against drive.
const SAT_POINTS: usize = 8;
const SAT_P_Z: f64 = 1.0;
const SAT_FREQ_STEP: f64 = 0.05;
const SAT_CASES: [(usize, f64, f64, f64, f64, f64); 3] = [
    // (photons, omega1 lo, omega1 hi, window lo, window hi, target c)
    (1, 0.005, 0.5, 27.0, 29.5, 1.0),
    (2, 0.1, 4.0, 14.0 - 0.4, 14.0 + 0.8, 2.0),
    (3, 0.5, 8.0, 28.0 / 3.0 - 0.4, 28.0 / 3.0 + 0.8, 3.0),
];
const SAT_TOL: f64 = 0.3;

fn saturation(r: &mut Report) -> odmr_lab::Result<()> {
    let sys = v3();
    let relax = cw_relax(VacancyKind::V3);
    let inhom = InhomogeneityModel::z_drive_preset();
    let settings = CwSettings::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, lo, hi, w_lo, w_hi, target) in SAT_CASES {
        let freqs = grid(w_lo, w_hi, SAT_FREQ_STEP);
        let mut pts = Vec::new();
        for omega1 in log_grid(lo, hi, SAT_POINTS) {
            let drive = RFDrive::linear(omega1, freqs[0]).with_p_z(SAT_P_Z);
            let sp = cw_spectrum(&sys, &relax, &drive, &freqs, Some(&inhom), &settings)?;
            let (_, s) = sp.extremum_in(w_lo, w_hi).expect("nonempty window");
            pts.push((omega1 / KAPPA_BY_PHOTONS[n - 1], s));
        }
        let c = fit_saturation(&pts, Exponent::Free)?.c;
        ok &= (c - target).abs() <= SAT_TOL;
        parts.push(format!("n={n} c={c:.2} vs {target}"));
    }
    r.line("5 (saturation exponents)", ok, parts.join(", "));
    Ok(())
}

// 6. Field-per-frequency slopes of the labelled branches.
const SLOPE_ROWS: [(&str, f64); 5] = [("P3^1a", 1.0), ("d3^a", 0.5), ("P3^2a1", 2.0), ("P3^2a2", 1.0), ("P3^3a", 3.0)];
const SLOPE_REL_TOL: f64 = 1e-6;

fn slopes(r: &mut Report) -> odmr_lab::Result<()> {
    let fields = grid(0.0, 10.0, 0.1);
    let table = branch_slopes(&transition_map(&v3(), &fields, 3)?);
    let slope = |label: &str| table.iter().find(|s| s.label == label).map_or(f64::NAN, |s| s.mt_per_mhz);
    let unit = slope(SLOPE_ROWS[0].0);
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, ratio) in SLOPE_ROWS {
        let got = slope(label) / unit;
        ok &= ((got - ratio) / ratio).abs() <= SLOPE_REL_TOL;
        parts.push(format!("{label} {got:.7}"));
    }
    r.line("6 (transition slope ratios)", ok, parts.join(", "));
    Ok(())
}

// 7. Drive component along the c-axis.
const ZD_WINDOWS: [(f64, f64); 3] = [(27.0, 29.5), (13.6, 14.8), (9.0, 10.0)];
const ZD_FREQ_STEP: f64 = 0.05;
const ZD_ONE_PHOTON_REL_TOL: f64 = 0.05;

fn z_drive(r: &mut Report) -> odmr_lab::Result<()> {
    let sys = v3();
    let relax = cw_relax(VacancyKind::V3);
    let inhom = InhomogeneityModel::z_drive_preset();
    let mut amp = [[0.0; 3]; 2];
    for (row, p_z) in [0.0, 1.0].into_iter().enumerate() {
        for (k, (lo, hi)) in ZD_WINDOWS.into_iter().enumerate() {
            let drive = RFDrive::linear(ZDRIVE_OMEGA1_MHZ, lo).with_p_z(p_z);
            let sp = cw_spectrum(&sys, &relax, &drive, &grid(lo, hi, ZD_FREQ_STEP), Some(&inhom), &CwSettings::default())?;
            amp[row][k] = sp.extremum_in(lo, hi).expect("nonempty window").1;
        }
    }
    let one = (amp[1][0] - amp[0][0]) / amp[0][0];
    let ok = one.abs() < ZD_ONE_PHOTON_REL_TOL && amp[1][1] > amp[0][1] && amp[1][2] > amp[0][2];
    r.line(
        "7 (z-axis drive)",
        ok,
        format!(
            "1-photon {:.4} -> {:.4} ({:+.1}%), 2-photon {:.4} -> {:.4}, 3-photon {:.4} -> {:.4}",
            amp[0][0],
            amp[1][0],
            100.0 * one,
            amp[0][1],
            amp[1][1],
            amp[0][2],
            amp[1][2]
        ),
    );
    Ok(())
}

// 8. Integrator soundness.
const DRIFT_STEPS: usize = 8000;
const DRIFT_DT_US: f64 = 5e-4;
const DRIFT_TOL: f64 = 1e-8;
const POSITIVITY_FLOOR: f64 = -1e-6;
const ORACLE_SPAN_US: f64 = 1.0;
const ORACLE_RK4_DT_US: f64 = 1.25e-4;
const ORACLE_SLICES: usize = 400_000;
const ORACLE_TOL: f64 = 1e-6;
const ORDER_SPAN_US: f64 = 0.25;
const ORDER_COARSE_DT_US: f64 = 1e-3;
const ORDER_RATIO: (f64, f64) = (12.0, 20.0);

fn soundness(r: &mut Report) -> odmr_lab::Result<()> {
    let sys = v3();
    let drive = RFDrive::linear(9.1, 28.0);
    let pumped = DensityMatrix::from_populations(VacancyKind::V3.pumped_populations())?;

    let open = collapse_set(&cw_relax(VacancyKind::V3), VacancyKind::V3);
    let integ = Integrator::new(&sys, Some(&drive), &open)?;
    let mut drift: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    integ.advance(*pumped.matrix(), 0.0, DRIFT_STEPS as f64 * DRIFT_DT_US, DRIFT_DT_US, |_, _, rho| {
        drift = drift.max((rho.trace().re - 1.0).abs());
        if let Ok(e) = eigensystem(rho) {
            min_eig = min_eig.min(e.values.iter().cloned().fold(f64::INFINITY, f64::min));
        }
    })?;

    let closed = CollapseSet::empty();
    let integ = Integrator::new(&sys, Some(&drive), &closed)?;
    let rk4 = |dt: f64, span: f64| integ.advance(*pumped.matrix(), 0.0, span, dt, |_, _, _| {});
    let oracle = propagator_oracle(&pumped, 0.0, ORACLE_SPAN_US, ORACLE_SLICES, Some(&drive), &sys, &closed)?;
    let oracle_err = max_entry(&(rk4(ORACLE_RK4_DT_US, ORACLE_SPAN_US)? - oracle.matrix()));

    let reference = rk4(ORDER_COARSE_DT_US / 64.0, ORDER_SPAN_US)?;
    let e1 = max_entry(&(rk4(ORDER_COARSE_DT_US, ORDER_SPAN_US)? - reference));
    let e2 = max_entry(&(rk4(ORDER_COARSE_DT_US / 2.0, ORDER_SPAN_US)? - reference));
    let ratio = e1 / e2;

    let ok = drift <= DRIFT_TOL
        && min_eig >= POSITIVITY_FLOOR
        && oracle_err <= ORACLE_TOL
        && (ORDER_RATIO.0..=ORDER_RATIO.1).contains(&ratio);
    r.line(
        "8 (numerical soundness)",
        ok,
        format!(
            "trace drift {drift:.1e}, min eigenvalue {min_eig:.1e}, RK4 vs oracle {oracle_err:.1e}, halving ratio {ratio:.2}"
        ),
    );
    Ok(())
}

fn main() -> ExitCode {
    let mut r = Report { failures: 0 };
    let result = (|| -> odmr_lab::Result<()> {
        rabi(&mut r)?;
        fid(&mut r)?;
        let sweep_secs = cw_peaks(&mut r)?;
        loglog(&mut r)?;
        saturation(&mut r)?;
        slopes(&mut r)?;
        z_drive(&mut r)?;
        soundness(&mut r)?;
        r.line(
            "9 (CW sweep runtime)",
            sweep_secs < CW_SWEEP_RUNTIME_S,
            format!("281-point V3 sweep in {sweep_secs:.1} s on {} threads", rayon::current_num_threads()),
        );
        Ok(())
    })();
    if let Err(e) = result {
        println!("FAIL acceptance aborted: {e}");
        return ExitCode::FAILURE;
    }
    println!("{} of 9 criteria failed", r.failures);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
