//! Lindblad master equation for the vacancy spin: collapse operators, the
//! right-hand side, a fixed-step RK4 integrator and a piecewise-exact unitary
//! propagator used to check it.
//!
//! The equation of motion is
//!
//! ```text
//! d rho / dt = -2 pi i [H(t), rho] + sum_k (L_k rho L_k^+ - 1/2 {L_k^+ L_k, rho})
//! ```
//!
//! with H in MHz and t in microseconds.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::spin::{
    c, drive_hamiltonian, eigensystem, hermitize, max_abs, spin_operators, static_hamiltonian,
    DensityMatrix, Mat4, RFDrive, VacancyKind, VacancySystem, C64,
};

/// Spin-lattice relaxation enters either as `sqrt(2 alpha) Sx` or through the
/// explicit rate-matrix operator built from alpha and gamma. The two coincide
/// when gamma = 3 alpha / 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpinLatticeForm {
    #[default]
    ScaledSx,
    RateMatrix,
}

/// Relaxation and pumping rates, all per microsecond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationParams {
    /// Spin-lattice rate between `+1/2` and `-1/2`.
    pub alpha: f64,
    /// Dephasing rate.
    pub beta: f64,
    /// Optical pumping rate.
    pub delta: f64,
    pub spin_lattice: SpinLatticeForm,
}

impl RelaxationParams {
    pub fn new(alpha: f64, beta: f64, delta: f64) -> Self {
        RelaxationParams { alpha, beta, delta, spin_lattice: SpinLatticeForm::ScaledSx }
    }

    /// No relaxation at all.
    pub fn closed() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    /// Rate between `+-3/2` and `+-1/2`.
    pub fn gamma(&self) -> f64 {
        0.75 * self.alpha
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("delta", self.delta)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("rate {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Ordered collapse operators: five optical pumping channels, dephasing and
/// spin-lattice relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseSet {
    pub ops: Vec<Mat4>,
}

impl CollapseSet {
    pub fn empty() -> Self {
        CollapseSet { ops: Vec::new() }
    }

    /// True when every operator vanishes.
    pub fn is_closed(&self) -> bool {
        self.ops.iter().all(|l| max_abs(l) == 0.0)
    }
}

fn unit(row: usize, col: usize) -> Mat4 {
    let mut m = Mat4::zeros();
    m[(row, col)] = c(1.0);
    m
}

/// Pumping targets as (row, col) pairs of the unit jumps, per vacancy type.
/// L5 holds two entries.
fn pumping_entries(kind: VacancyKind) -> [&'static [(usize, usize)]; 5] {
    match kind {
        // +-3/2 -> +-1/2
        VacancyKind::V3 => [&[(1, 0)], &[(1, 3)], &[(2, 0)], &[(2, 3)], &[(1, 2), (2, 1)]],
        // +-1/2 -> +-3/2
        VacancyKind::V2 => [&[(0, 1)], &[(3, 1)], &[(0, 2)], &[(3, 2)], &[(0, 3), (3, 0)]],
    }
}

pub fn collapse_set(r: &RelaxationParams, kind: VacancyKind) -> CollapseSet {
    let s = spin_operators();
    let mut ops = Vec::with_capacity(7);
    let sd = r.delta.sqrt();
    for entries in pumping_entries(kind) {
        let m: Mat4 = entries.iter().map(|&(i, j)| unit(i, j)).sum();
        ops.push(m * c(sd));
    }
    ops.push(s.sz * c((2.0 * r.beta).sqrt()));
    let lattice = match r.spin_lattice {
        SpinLatticeForm::ScaledSx => s.sx * c((2.0 * r.alpha).sqrt()),
        SpinLatticeForm::RateMatrix => {
            let (sa, sg) = (r.alpha.sqrt(), r.gamma().sqrt());
            let mut m = Mat4::zeros();
            for (i, v) in [(0, sg), (1, sa), (2, sg)] {
                m[(i, i + 1)] = c(v);
                m[(i + 1, i)] = c(v);
            }
            m * c(2f64.sqrt())
        }
    };
    ops.push(lattice);
    CollapseSet { ops }
}

/// A collapse operator stored by its nonzero entries.
#[derive(Debug, Clone)]
struct SparseJump {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseJump {
    fn from_dense(l: &Mat4) -> Option<Self> {
        let mut entries = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if l[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((i, j, l[(i, j)]));
                }
            }
        }
        (!entries.is_empty()).then_some(SparseJump { entries })
    }

    /// Accumulates `L rho L^+` into `out`.
    fn sandwich_into(&self, rho: &Mat4, out: &mut Mat4) {
        for &(i, j, a) in &self.entries {
            for &(k, l, b) in &self.entries {
                out[(i, k)] += a * rho[(j, l)] * b.conj();
            }
        }
    }
}

/// The dissipative part of the generator, prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Dissipator {
    jumps: Vec<SparseJump>,
    /// `1/2 sum L^+ L`.
    half_decay: Mat4,
}

impl Dissipator {
    pub(crate) fn new(ls: &CollapseSet) -> Self {
        let half_decay = ls.ops.iter().map(|l| l.adjoint() * l).sum::<Mat4>() * c(0.5);
        let jumps = ls.ops.iter().filter_map(SparseJump::from_dense).collect();
        Dissipator { jumps, half_decay }
    }

    /// Generator for a Hamiltonian `h`. Relies on `rho` being Hermitian:
    /// with `A = -2 pi i h - K/2` the commutator and anticommutator terms are
    /// `A rho + (A rho)^+`.
    fn rhs(&self, rho: &Mat4, h: &Mat4) -> Mat4 {
        let a = h * C64::new(0.0, -2.0 * PI) - self.half_decay;
        let x = a * rho;
        let mut out = x + x.adjoint();
        for j in &self.jumps {
            j.sandwich_into(rho, &mut out);
        }
        out
    }
}

/// Full right-hand side for a Hermitian state, in per-microsecond units.
pub fn lindblad_rhs(rho: &DensityMatrix, h_total: &Mat4, ls: &CollapseSet) -> Mat4 {
    Dissipator::new(ls).rhs(rho.matrix(), h_total)
}

/// A time-dependent Hamiltonian together with its fastest frequency scale.
pub trait HamiltonianSource {
    fn at(&self, t_us: f64) -> Mat4;
    /// Largest of the carrier frequency, the coupling strength and the
    /// eigenvalue spread of the static part, in MHz.
    fn max_frequency(&self) -> f64;
}

/// Static vacancy Hamiltonian plus an optional RF drive.
#[derive(Debug, Clone)]
pub struct DrivenHamiltonian {
    static_h: Mat4,
    drive: Option<(RFDrive, Mat4, Mat4)>,
    f_max: f64,
}

impl DrivenHamiltonian {
    pub fn new(sys: &VacancySystem, drive: Option<&RFDrive>) -> Result<Self> {
        sys.validate()?;
        let static_h = static_hamiltonian(sys);
        let mut f_max = eigensystem(&static_h)?.spread();
        let drive = match drive {
            Some(d) => {
                d.validate()?;
                f_max = f_max.max(d.omega_mhz.abs()).max(d.omega1_mhz.abs());
                let (a, b) = d.quadratures();
                Some((*d, a, b))
            }
            None => None,
        };
        Ok(DrivenHamiltonian { static_h, drive, f_max })
    }

    /// A constant Hamiltonian; the frequency scale is its eigenvalue spread.
    pub fn constant(h: Mat4) -> Result<Self> {
        let f_max = eigensystem(&h)?.spread();
        Ok(DrivenHamiltonian { static_h: h, drive: None, f_max })
    }
}

impl HamiltonianSource for DrivenHamiltonian {
    fn at(&self, t_us: f64) -> Mat4 {
        match &self.drive {
            None => self.static_h,
            Some((d, a, b)) => {
                let th = d.phase_at(t_us);
                self.static_h + a * c(th.cos()) + b * c(th.sin())
            }
        }
    }

    fn max_frequency(&self) -> f64 {
        self.f_max
    }
}

/// Steps per period of the fastest frequency scale demanded of every RK4
/// step.
pub const STABILITY_STEPS_PER_PERIOD: f64 = 10.0;

/// Largest admissible step for a given frequency scale.
pub fn stability_bound(f_max_mhz: f64) -> f64 {
    if f_max_mhz > 0.0 {
        1.0 / (STABILITY_STEPS_PER_PERIOD * f_max_mhz)
    } else {
        f64::INFINITY
    }
}

fn check_step(dt: f64, f_max: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    let bound = stability_bound(f_max);
    // 1e-12 relative slack so that a step chosen exactly at the bound passes
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge { dt_us: dt, bound_us: bound });
    }
    Ok(())
}

fn rk4_raw<H: HamiltonianSource + ?Sized>(
    diss: &Dissipator,
    h: &H,
    rho: &Mat4,
    t: f64,
    dt: f64,
) -> Mat4 {
    let half = c(0.5 * dt);
    let h_mid = h.at(t + 0.5 * dt);
    let k1 = diss.rhs(rho, &h.at(t));
    let k2 = diss.rhs(&(rho + k1 * half), &h_mid);
    let k3 = diss.rhs(&(rho + k2 * half), &h_mid);
    let k4 = diss.rhs(&(rho + k3 * c(dt)), &h.at(t + dt));
    let next = rho + (k1 + (k2 + k3) * c(2.0) + k4) * c(dt / 6.0);
    hermitize(&next)
}

/// One classical RK4 step, re-Hermitized.
pub fn rk4_step<H: HamiltonianSource + ?Sized>(
    rho: &DensityMatrix,
    t: f64,
    dt: f64,
    h_of_t: &H,
    ls: &CollapseSet,
) -> Result<DensityMatrix> {
    check_step(dt, h_of_t.max_frequency())?;
    let diss = Dissipator::new(ls);
    Ok(DensityMatrix::from_trusted(rk4_raw(&diss, h_of_t, rho.matrix(), t, dt)))
}

/// Largest allowed `|trace - 1|` during integration.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Reusable integrator for one (system, drive, collapse set) triple.
#[derive(Debug, Clone)]
pub struct Integrator {
    hamiltonian: DrivenHamiltonian,
    dissipator: Dissipator,
}

impl Integrator {
    pub fn new(sys: &VacancySystem, drive: Option<&RFDrive>, ls: &CollapseSet) -> Result<Self> {
        Ok(Integrator {
            hamiltonian: DrivenHamiltonian::new(sys, drive)?,
            dissipator: Dissipator::new(ls),
        })
    }

    pub fn stability_bound(&self) -> f64 {
        stability_bound(self.hamiltonian.max_frequency())
    }

    /// Number of equal steps no longer than `max_dt` covering `span`.
    pub fn steps_for(span: f64, max_dt: f64) -> usize {
        ((span / max_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// Integrates from `t0` to `t1` in equal steps no longer than `max_dt`,
    /// calling `on_step(k, t, rho)` after each step.
    pub fn advance<F>(&self, rho: Mat4, t0: f64, t1: f64, max_dt: f64, mut on_step: F) -> Result<Mat4>
    where
        F: FnMut(usize, f64, &Mat4),
    {
        if !(t1 > t0) {
            return Err(Error::invalid(format!("empty time span [{t0}, {t1}]")));
        }
        let n = Self::steps_for(t1 - t0, max_dt);
        let dt = (t1 - t0) / n as f64;
        check_step(dt, self.hamiltonian.max_frequency())?;
        let mut rho = rho;
        for k in 0..n {
            let t = t0 + k as f64 * dt;
            rho = rk4_raw(&self.dissipator, &self.hamiltonian, &rho, t, dt);
            let drift = (rho.trace().re - 1.0).abs();
            if drift > TRACE_DRIFT_LIMIT || !drift.is_finite() {
                return Err(Error::TraceDrift { step: k + 1, drift });
            }
            on_step(k + 1, t0 + (k + 1) as f64 * dt, &rho);
        }
        Ok(rho)
    }
}

/// Sampled observable and populations along an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One value per time; empty when no observable was recorded.
    pub signal: Vec<f64>,
    pub populations: Option<Vec<[f64; 4]>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, signal: Vec<f64>, populations: Option<Vec<[f64; 4]>>) -> Result<Self> {
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trajectory times must be strictly increasing"));
        }
        if !signal.is_empty() && signal.len() != times.len() {
            return Err(Error::invalid("signal length does not match the time grid"));
        }
        if let Some(p) = &populations {
            if p.len() != times.len() {
                return Err(Error::invalid("population count does not match the time grid"));
            }
        }
        Ok(Trajectory { times, signal, populations })
    }

    pub fn from_signal(times: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        Self::new(times, signal, None)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub final_state: DensityMatrix,
}

/// Integrates `rho0` over `[t0, t1]` with steps no longer than `dt`,
/// recording populations at every step and `sum w_i rho_ii` when weights
/// are given.
#[allow(clippy::too_many_arguments)]
pub fn evolve(
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    dt: f64,
    drive: Option<&RFDrive>,
    sys: &VacancySystem,
    ls: &CollapseSet,
    observable: Option<&[f64; 4]>,
) -> Result<Evolution> {
    let integ = Integrator::new(sys, drive, ls)?;
    let n = Integrator::steps_for(t1 - t0, dt);
    let mut times = Vec::with_capacity(n + 1);
    let mut pops = Vec::with_capacity(n + 1);
    let mut signal = Vec::new();
    let mut record = |t: f64, rho: &Mat4| {
        let p = [rho[(0, 0)].re, rho[(1, 1)].re, rho[(2, 2)].re, rho[(3, 3)].re];
        times.push(t);
        pops.push(p);
        if let Some(w) = observable {
            signal.push(p.iter().zip(w).map(|(p, w)| p * w).sum());
        }
    };
    record(t0, rho0.matrix());
    let last = integ.advance(*rho0.matrix(), t0, t1, dt, |_, t, rho| record(t, rho))?;
    let final_state = DensityMatrix::from_trusted(last);
    Ok(Evolution { trajectory: Trajectory::new(times, signal, Some(pops))?, final_state })
}

/// Minimum oracle resolution, slices per microsecond.
pub const ORACLE_MIN_SLICES_PER_US: f64 = 1000.0;

/// Closed-system reference propagation: piecewise-constant Hamiltonian over
/// `n_slices` equal slices, each applied as the exact unitary
/// `exp(-2 pi i H(t_mid) dt)` built from its eigendecomposition.
pub fn propagator_oracle(
    rho0: &DensityMatrix,
    t0: f64,
    t1: f64,
    n_slices: usize,
    drive: Option<&RFDrive>,
    sys: &VacancySystem,
    ls: &CollapseSet,
) -> Result<DensityMatrix> {
    if !ls.is_closed() {
        return Err(Error::OpenSystem);
    }
    if !(t1 > t0) {
        return Err(Error::invalid(format!("empty time span [{t0}, {t1}]")));
    }
    let needed = (ORACLE_MIN_SLICES_PER_US * (t1 - t0) - 1e-9).ceil().max(1.0) as usize;
    if n_slices < needed {
        return Err(Error::invalid(format!(
            "oracle needs at least {needed} slices for this span, got {n_slices}"
        )));
    }
    let h = DrivenHamiltonian::new(sys, drive)?;
    let dt = (t1 - t0) / n_slices as f64;
    let mut rho = *rho0.matrix();
    for k in 0..n_slices {
        let t_mid = t0 + (k as f64 + 0.5) * dt;
        let u = unitary_step(&h.at(t_mid), dt)?;
        rho = u * rho * u.adjoint();
    }
    Ok(DensityMatrix::from_trusted(hermitize(&rho)))
}

/// `exp(-2 pi i h dt)` for Hermitian `h`.
pub fn unitary_step(h: &Mat4, dt: f64) -> Result<Mat4> {
    let e = eigensystem(h)?;
    let mut phases = Mat4::zeros();
    for k in 0..4 {
        phases[(k, k)] = C64::from_polar(1.0, -2.0 * PI * e.values[k] * dt);
    }
    Ok(e.vectors * phases * e.vectors.adjoint())
}

/// Convenience for tests and examples: the drive-aware Hamiltonian at `t`.
pub fn total_hamiltonian(sys: &VacancySystem, drive: Option<&RFDrive>, t_us: f64) -> Mat4 {
    let h0 = static_hamiltonian(sys);
    match drive {
        Some(d) => h0 + drive_hamiltonian(d, t_us),
        None => h0,
    }
}
