//! Experiment protocols built on the master-equation integrator: Rabi
//! nutation, phase-cycled free induction decay, CW ODMR points, spectra and
//! field maps, plus the eigenvalue transition map.
//!
//! Every grid cell is an independent trajectory; grids are evaluated in
//! parallel and reassembled in input order, so results do not depend on
//! scheduling.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::defaults;
use crate::error::{Error, Result};
use crate::master_eq::{collapse_set, Integrator, RelaxationParams, Trajectory};
use crate::spin::{
    cw_initial_state, eigensystem, static_hamiltonian, DensityMatrix, Mat4, RFDrive, VacancyKind,
    VacancySystem, M_VALUES, PL_WEIGHTS,
};

fn pl_signal(rho: &Mat4) -> f64 {
    (0..4).map(|i| PL_WEIGHTS[i] * rho[(i, i)].re).sum()
}

fn populations(rho: &Mat4) -> [f64; 4] {
    [rho[(0, 0)].re, rho[(1, 1)].re, rho[(2, 2)].re, rho[(3, 3)].re]
}

fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("{what} grid is empty")));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid(format!("{what} grid must be strictly increasing")));
    }
    Ok(())
}

/// Weighted set of RF amplitude scale factors modelling drive inhomogeneity.
#[derive(Debug, Clone, PartialEq)]
pub struct InhomogeneityModel {
    members: Vec<(f64, f64)>,
}

impl InhomogeneityModel {
    pub fn new(members: Vec<(f64, f64)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("inhomogeneity model needs at least one member"));
        }
        if members.iter().any(|&(s, w)| !(s >= 0.0 && s.is_finite()) || !(w >= 0.0)) {
            return Err(Error::invalid("inhomogeneity scales and weights must be non-negative"));
        }
        let total: f64 = members.iter().map(|m| m.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("inhomogeneity weights sum to {total}, not 1")));
        }
        Ok(InhomogeneityModel { members })
    }

    /// A single member at the nominal amplitude.
    pub fn homogeneous() -> Self {
        InhomogeneityModel { members: vec![(1.0, 1.0)] }
    }

    pub fn rabi_preset() -> Self {
        InhomogeneityModel { members: defaults::RABI_INHOMOGENEITY.to_vec() }
    }

    pub fn z_drive_preset() -> Self {
        InhomogeneityModel { members: defaults::ZDRIVE_INHOMOGENEITY.to_vec() }
    }

    pub fn members(&self) -> &[(f64, f64)] {
        &self.members
    }
}

/// Values on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs_mhz: Vec<f64>,
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn new(freqs_mhz: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_increasing(&freqs_mhz, "frequency")?;
        if values.len() != freqs_mhz.len() {
            return Err(Error::invalid("spectrum values do not match the frequency grid"));
        }
        Ok(Spectrum { freqs_mhz, values })
    }

    pub fn len(&self) -> usize {
        self.freqs_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_mhz.is_empty()
    }

    /// Largest value within `[lo, hi]` MHz by magnitude, with its frequency.
    pub fn extremum_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.freqs_mhz
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| (lo..=hi).contains(*f))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(f, v)| (*f, *v))
    }
}

/// Sample times `k / omega` in `[0, t_end_us]`: one per RF period, which
/// suppresses the micromotion at harmonics of the carrier.
pub fn period_grid(omega_mhz: f64, t_end_us: f64) -> Result<Vec<f64>> {
    if !(omega_mhz > 0.0) || !(t_end_us >= 0.0) {
        return Err(Error::invalid("period grid needs omega > 0 and t_end >= 0"));
    }
    let n = (t_end_us * omega_mhz + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 / omega_mhz).collect())
}

/// Default pulsed step: at most 0.5 ns and 50 samples per period of the
/// faster of carrier and coupling, tightened to the stability bound.
pub fn pulsed_dt(drive: &RFDrive, stability_bound: f64) -> f64 {
    let fastest = drive.omega_mhz.max(drive.omega1_mhz);
    let by_drive = if fastest > 0.0 {
        1.0 / (defaults::PULSED_SAMPLES_PER_PERIOD * fastest)
    } else {
        f64::INFINITY
    };
    defaults::MAX_PULSED_DT_US.min(by_drive).min(stability_bound)
}

/// Samples `sum w_i rho_ii`-style readouts of one trajectory at each time of
/// `grid` (starting from `rho0` at t = 0).
fn sample_on_grid<T>(
    integ: &Integrator,
    rho0: &Mat4,
    grid: &[f64],
    max_dt: f64,
    read: impl Fn(&Mat4) -> T,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut rho = *rho0;
    let mut t = 0.0;
    for &tau in grid {
        if tau > t {
            rho = integ.advance(rho, t, tau, max_dt, |_, _, _| {})?;
            t = tau;
        }
        out.push(read(&rho));
    }
    Ok(out)
}

/// Rabi nutation: the pumped state is driven for each `tau` on the grid and
/// read out as `0.5 (1 + rho11 - rho22 - rho33 + rho44)`. The returned signal
/// is the ensemble-averaged driven readout minus the undriven reference;
/// populations are those of the driven ensemble.
pub fn simulate_rabi(
    sys: &VacancySystem,
    drive: &RFDrive,
    relax: &RelaxationParams,
    inhom: &InhomogeneityModel,
    tau_grid: &[f64],
    dt: Option<f64>,
) -> Result<Trajectory> {
    check_increasing(tau_grid, "pulse length")?;
    if tau_grid[0] < 0.0 {
        return Err(Error::invalid("pulse lengths must be non-negative"));
    }
    relax.validate()?;
    let ls = collapse_set(relax, sys.kind);
    let rho0 = *DensityMatrix::from_populations(sys.kind.pumped_populations())?.matrix();
    let readout = |rho: &Mat4| (0.5 * (1.0 + pl_signal(rho)), populations(rho));

    let reference = Integrator::new(sys, None, &ls)?;
    let ref_dt = dt.unwrap_or_else(|| pulsed_dt(drive, reference.stability_bound()));
    let baseline = sample_on_grid(&reference, &rho0, tau_grid, ref_dt, |r| readout(r).0)?;

    type Weighted = (f64, Vec<(f64, [f64; 4])>);
    let runs: Vec<Result<Weighted>> = inhom
        .members()
        .par_iter()
        .map(|&(scale, weight)| {
            let d = drive.with_omega1(drive.omega1_mhz * scale);
            let integ = Integrator::new(sys, Some(&d), &ls)?;
            let step = dt.unwrap_or_else(|| pulsed_dt(&d, integ.stability_bound()));
            Ok((weight, sample_on_grid(&integ, &rho0, tau_grid, step, readout)?))
        })
        .collect();

    let mut signal = vec![0.0; tau_grid.len()];
    let mut pops = vec![[0.0; 4]; tau_grid.len()];
    for run in runs {
        let (w, samples) = run?;
        for (k, (s, p)) in samples.into_iter().enumerate() {
            signal[k] += w * s;
            for i in 0..4 {
                pops[k][i] += w * p[i];
            }
        }
    }
    for (s, b) in signal.iter_mut().zip(&baseline) {
        *s -= b;
    }
    Trajectory::new(tau_grid.to_vec(), signal, Some(pops))
}

/// Free induction decay with phase cycling.
///
/// A pulse of length `pulse_len_us` (carrier phase `chi`), free evolution
/// for `tau`, then a second pulse with carrier phase `chi + 2 pi f_det tau`,
/// read out as `rho11 - rho22 - rho33 + rho44`. The same is repeated with an
/// extra `pi` on the second pulse and the difference is returned. The
/// carrier runs on the absolute clock, so the second pulse also carries the
/// phase accumulated during the delay.
#[allow(clippy::too_many_arguments)]
pub fn simulate_fid(
    sys: &VacancySystem,
    drive: &RFDrive,
    relax: &RelaxationParams,
    f_det_mhz: f64,
    pulse_len_us: f64,
    tau_grid: &[f64],
    dt: Option<f64>,
) -> Result<Trajectory> {
    if !(pulse_len_us > 0.0) {
        return Err(Error::invalid(format!("pulse length must be positive, got {pulse_len_us}")));
    }
    check_increasing(tau_grid, "delay")?;
    if tau_grid[0] < 0.0 {
        return Err(Error::invalid("delays must be non-negative"));
    }
    relax.validate()?;
    let ls = collapse_set(relax, sys.kind);
    let rho0 = *DensityMatrix::from_populations(sys.kind.pumped_populations())?.matrix();

    let first = Integrator::new(sys, Some(drive), &ls)?;
    let step = dt.unwrap_or_else(|| pulsed_dt(drive, first.stability_bound()));
    let after_pulse = first.advance(rho0, 0.0, pulse_len_us, step, |_, _, _| {})?;

    let free = Integrator::new(sys, None, &ls)?;
    let free_step = dt.unwrap_or_else(|| pulsed_dt(drive, free.stability_bound()));
    let mut precessed = Vec::with_capacity(tau_grid.len());
    let mut rho = after_pulse;
    let mut t = pulse_len_us;
    for &tau in tau_grid {
        let t_next = pulse_len_us + tau;
        if t_next > t {
            rho = free.advance(rho, t, t_next, free_step, |_, _, _| {})?;
            t = t_next;
        }
        precessed.push(rho);
    }

    let signal: Vec<Result<f64>> = tau_grid
        .par_iter()
        .zip(precessed.par_iter())
        .map(|(&tau, rho)| {
            let phase = 2.0 * PI * f_det_mhz * tau;
            let start = pulse_len_us + tau;
            let mut readouts = [0.0; 2];
            for (slot, extra) in [0.0, PI].into_iter().enumerate() {
                let d = drive.with_chi(drive.chi_rad + phase + extra);
                let integ = Integrator::new(sys, Some(&d), &ls)?;
                let out = integ.advance(*rho, start, start + pulse_len_us, step, |_, _, _| {})?;
                readouts[slot] = pl_signal(&out);
            }
            Ok(readouts[0] - readouts[1])
        })
        .collect();
    let signal = signal.into_iter().collect::<Result<Vec<_>>>()?;
    Trajectory::from_signal(tau_grid.to_vec(), signal)
}

/// CW integration window and optional output scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwSettings {
    pub duration_us: f64,
    /// Minimum number of RK4 steps; raised automatically when the stability
    /// bound demands it.
    pub steps: usize,
    /// Multiplies every reported contrast.
    pub scale: f64,
}

impl Default for CwSettings {
    fn default() -> Self {
        CwSettings { duration_us: defaults::CW_DURATION_US, steps: defaults::CW_STEPS, scale: 1.0 }
    }
}

impl CwSettings {
    fn validate(&self) -> Result<()> {
        if !(self.duration_us > 0.0) || self.steps == 0 {
            return Err(Error::invalid("CW duration and step count must be positive"));
        }
        Ok(())
    }
}

/// Final `rho11 - rho22 - rho33 + rho44` after the CW window.
fn cw_signal(
    sys: &VacancySystem,
    relax: &RelaxationParams,
    drive: Option<&RFDrive>,
    settings: &CwSettings,
) -> Result<f64> {
    let ls = collapse_set(relax, sys.kind);
    let rho0 = cw_initial_state(sys.kind, relax)?;
    let integ = Integrator::new(sys, drive, &ls)?;
    let nominal = settings.duration_us / settings.steps as f64;
    let dt = nominal.min(integ.stability_bound());
    let out = integ.advance(*rho0.matrix(), 0.0, settings.duration_us, dt, |_, _, _| {})?;
    Ok(pl_signal(&out))
}

/// Ensemble-averaged driven CW signal.
fn cw_driven(
    sys: &VacancySystem,
    relax: &RelaxationParams,
    drive: &RFDrive,
    inhom: Option<&InhomogeneityModel>,
    settings: &CwSettings,
) -> Result<f64> {
    let homogeneous = InhomogeneityModel::homogeneous();
    let model = inhom.unwrap_or(&homogeneous);
    let mut total = 0.0;
    for &(scale, weight) in model.members() {
        let d = drive.with_omega1(drive.omega1_mhz * scale);
        total += weight * cw_signal(sys, relax, Some(&d), settings)?;
    }
    Ok(total)
}

/// CW ODMR contrast `S_RF - S_0` at one drive setting. `S_0` is the same
/// integration without RF at the same field.
pub fn cw_point(
    sys: &VacancySystem,
    relax: &RelaxationParams,
    drive: &RFDrive,
    settings: &CwSettings,
) -> Result<f64> {
    settings.validate()?;
    relax.validate()?;
    let s_rf = cw_signal(sys, relax, Some(drive), settings)?;
    let s_0 = cw_signal(sys, relax, None, settings)?;
    Ok(settings.scale * (s_rf - s_0))
}

/// CW contrast over a carrier-frequency grid. The RF-off reference does not
/// depend on the carrier and is integrated once.
pub fn cw_spectrum(
    sys: &VacancySystem,
    relax: &RelaxationParams,
    drive_template: &RFDrive,
    omega_grid: &[f64],
    inhom: Option<&InhomogeneityModel>,
    settings: &CwSettings,
) -> Result<Spectrum> {
    check_increasing(omega_grid, "frequency")?;
    settings.validate()?;
    relax.validate()?;
    let s_0 = cw_signal(sys, relax, None, settings)?;
    let values: Vec<Result<f64>> = omega_grid
        .par_iter()
        .map(|&w| {
            let d = drive_template.with_omega(w);
            Ok(settings.scale * (cw_driven(sys, relax, &d, inhom, settings)? - s_0))
        })
        .collect();
    Spectrum::new(omega_grid.to_vec(), values.into_iter().collect::<Result<_>>()?)
}

/// Sequence of static fields for a map, each with the scalar used to label
/// its row.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub labels_mt: Vec<f64>,
    pub vectors_mt: Vec<Vector3<f64>>,
}

impl FieldPath {
    /// Field of magnitude `b` tilted by `tilt_deg` from the c-axis towards x.
    pub fn tilted_parallel(magnitudes_mt: &[f64], tilt_deg: f64) -> Self {
        let (s, c) = tilt_deg.to_radians().sin_cos();
        FieldPath {
            labels_mt: magnitudes_mt.to_vec(),
            vectors_mt: magnitudes_mt.iter().map(|&b| Vector3::new(b * s, 0.0, b * c)).collect(),
        }
    }

    /// Fixed axial field plus a swept component along x.
    pub fn perpendicular(b_parallel_mt: f64, perpendicular_mt: &[f64]) -> Self {
        FieldPath {
            labels_mt: perpendicular_mt.to_vec(),
            vectors_mt: perpendicular_mt.iter().map(|&b| Vector3::new(b, 0.0, b_parallel_mt)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels_mt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_mt.is_empty()
    }
}

/// CW contrast over a (field, frequency) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub path: FieldPath,
    pub freqs_mhz: Vec<f64>,
    /// `contrast[i][j]` at field `i`, frequency `j`.
    pub contrast: Vec<Vec<f64>>,
}

impl FieldMap {
    pub fn row(&self, i: usize) -> Spectrum {
        Spectrum { freqs_mhz: self.freqs_mhz.clone(), values: self.contrast[i].clone() }
    }
}

pub fn field_sweep(
    sys_template: &VacancySystem,
    relax: &RelaxationParams,
    drive: &RFDrive,
    path: &FieldPath,
    omega_grid: &[f64],
    inhom: Option<&InhomogeneityModel>,
    settings: &CwSettings,
) -> Result<FieldMap> {
    if path.is_empty() {
        return Err(Error::invalid("field path is empty"));
    }
    check_increasing(omega_grid, "frequency")?;
    settings.validate()?;
    relax.validate()?;
    let systems: Vec<VacancySystem> =
        path.vectors_mt.iter().map(|b| sys_template.clone().with_field(*b)).collect();
    let references: Vec<Result<f64>> =
        systems.par_iter().map(|s| cw_signal(s, relax, None, settings)).collect();
    let references = references.into_iter().collect::<Result<Vec<_>>>()?;

    let nw = omega_grid.len();
    let cells: Vec<Result<f64>> = (0..systems.len() * nw)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / nw, idx % nw);
            let d = drive.with_omega(omega_grid[j]);
            Ok(settings.scale * (cw_driven(&systems[i], relax, &d, inhom, settings)? - references[i]))
        })
        .collect();
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;
    let contrast = cells.chunks(nw).map(|r| r.to_vec()).collect();
    Ok(FieldMap { path: path.clone(), freqs_mhz: omega_grid.to_vec(), contrast })
}

/// One resonance of the transition map.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLine {
    pub b_mt: f64,
    /// Resonance carrier frequency, `|E_i - E_j| / n`.
    pub freq_mhz: f64,
    /// `(E(m_a) - E(m_b)) / n` with `m_a` the level of larger `|m|`; follows
    /// the branch linearly through level crossings.
    pub signed_freq_mhz: f64,
    pub delta_ms: u8,
    pub delta_p: u8,
    pub label: String,
    /// Spin projections assigned to the two levels, larger `|m|` first.
    pub m_levels: (f64, f64),
    /// Smaller of the two `|<m|v>|^2` overlaps used for the assignment.
    pub overlap: f64,
}

/// Assigns `m` to an eigenvector: largest `|<m|v>|^2`, ties to smaller `|m|`.
fn assign_m(v: &nalgebra::Vector4<crate::spin::C64>) -> (usize, f64) {
    let mut best = (0usize, -1.0f64);
    for k in 0..4 {
        let w = v[k].norm_sqr();
        let better = w > best.1 + 1e-12
            || ((w - best.1).abs() <= 1e-12 && M_VALUES[k].abs() < M_VALUES[best.0].abs());
        if better {
            best = (k, w);
        }
    }
    best
}

/// Peak label in the `P_v^{n, branch}` / `d_v^{branch}` scheme.
///
/// Branch `a` involves `+3/2`, branch `b` involves `-3/2`; the
/// `+1/2 <-> -1/2` line is branch `c`.
pub fn transition_label(kind: VacancyKind, m_a: f64, m_b: f64, photons: u8) -> String {
    let v = kind.label_index();
    let dm = (m_a - m_b).abs().round() as u8;
    let branch = if m_a == 1.5 || m_b == 1.5 {
        "a"
    } else if m_a == -1.5 || m_b == -1.5 {
        "b"
    } else {
        "c"
    };
    match (dm, photons) {
        (2, 1) => format!("d{v}^{branch}"),
        (1, 1) | (1, 3) => format!("P{v}^{photons}{branch}"),
        (1, n) => format!("P{v}^{n}{branch}1"),
        (_, n) => format!("P{v}^{n}{branch}2"),
    }
}

/// Resonances `|E_i - E_j| / n` of the static Hamiltonian for fields along
/// the c-axis, for every level pair with `|delta m| <= 2` and
/// `n = 1..=max_photons`. Zero-frequency lines are dropped.
pub fn transition_map(
    sys_template: &VacancySystem,
    b_parallel_grid: &[f64],
    max_photons: u8,
) -> Result<Vec<TransitionLine>> {
    if max_photons == 0 {
        return Err(Error::invalid("max_photons must be at least 1"));
    }
    let mut lines = Vec::new();
    for &b in b_parallel_grid {
        let sys = sys_template.clone().with_field(Vector3::new(0.0, 0.0, b));
        sys.validate()?;
        let eig = eigensystem(&static_hamiltonian(&sys))?;
        let levels: Vec<(f64, f64, f64)> = (0..4)
            .map(|k| {
                let (idx, w) = assign_m(&eig.vector(k));
                (M_VALUES[idx], eig.values[k], w)
            })
            .collect();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let (mut a, mut bb) = (levels[i], levels[j]);
                if bb.0.abs() > a.0.abs() || (bb.0.abs() == a.0.abs() && bb.0 > a.0) {
                    std::mem::swap(&mut a, &mut bb);
                }
                let dm = (a.0 - bb.0).abs().round() as u8;
                if !(1..=2).contains(&dm) {
                    continue;
                }
                for n in 1..=max_photons {
                    let signed = (a.1 - bb.1) / n as f64;
                    if signed.abs() <= 1e-9 {
                        continue;
                    }
                    lines.push(TransitionLine {
                        b_mt: b,
                        freq_mhz: signed.abs(),
                        signed_freq_mhz: signed,
                        delta_ms: dm,
                        delta_p: n,
                        label: transition_label(sys.kind, a.0, bb.0, n),
                        m_levels: (a.0, bb.0),
                        overlap: a.2.min(bb.2),
                    });
                }
            }
        }
    }
    Ok(lines)
}

/// Least-squares slope of one labelled branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSlope {
    pub label: String,
    pub delta_ms: u8,
    pub delta_p: u8,
    /// `|d f / d B|`, MHz per mT.
    pub mhz_per_mt: f64,
    /// `|d B / d f|`, mT per MHz.
    pub mt_per_mhz: f64,
}

/// Fits each labelled branch of a transition map with a straight line in B.
/// Branches with fewer than two distinct fields are skipped. Output is
/// sorted by label.
pub fn branch_slopes(lines: &[TransitionLine]) -> Vec<BranchSlope> {
    let mut labels: Vec<&str> = lines.iter().map(|l| l.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    labels
        .into_iter()
        .filter_map(|label| {
            let pts: Vec<&TransitionLine> = lines.iter().filter(|l| l.label == label).collect();
            let n = pts.len() as f64;
            let mb = pts.iter().map(|l| l.b_mt).sum::<f64>() / n;
            let mf = pts.iter().map(|l| l.signed_freq_mhz).sum::<f64>() / n;
            let sbb: f64 = pts.iter().map(|l| (l.b_mt - mb).powi(2)).sum();
            if !(sbb > 0.0) {
                return None;
            }
            let sbf: f64 = pts.iter().map(|l| (l.b_mt - mb) * (l.signed_freq_mhz - mf)).sum();
            let slope = (sbf / sbb).abs();
            Some(BranchSlope {
                label: label.to_string(),
                delta_ms: pts[0].delta_ms,
                delta_p: pts[0].delta_p,
                mhz_per_mt: slope,
                mt_per_mhz: 1.0 / slope,
            })
        })
        .collect()
}
