//! Spin-3/2 operators, the static and RF Hamiltonians of a silicon vacancy,
//! Hermitian eigensystems and the optically pumped starting states.
//!
//! Energies are in MHz (h = 1), times in microseconds and fields in mT. The
//! basis is ordered `|3/2>, |1/2>, |-1/2>, |-3/2>` throughout the crate.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix4, Vector3, Vector4};
use num_complex::Complex64;

use crate::defaults;
use crate::error::{Error, Result};
use crate::master_eq::RelaxationParams;

pub type C64 = Complex64;
pub type Mat4 = Matrix4<C64>;

/// Spin projections of the basis states, in basis order.
pub const M_VALUES: [f64; 4] = [1.5, 0.5, -0.5, -1.5];

/// Observable weights for `rho11 - rho22 - rho33 + rho44`.
pub const PL_WEIGHTS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Largest entrywise modulus of `a - a^dagger`.
pub fn max_asymmetry(a: &Mat4) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in i..4 {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub(crate) fn max_abs(a: &Mat4) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub(crate) fn hermitize(a: &Mat4) -> Mat4 {
    (a + a.adjoint()) * c(0.5)
}

/// The spin-3/2 angular momentum matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    pub sx: Mat4,
    pub sy: Mat4,
    pub sz: Mat4,
}

pub fn spin_operators() -> SpinOperators {
    let h = 3f64.sqrt() / 2.0;
    let i = C64::i();
    // <m+1|S+|m> = sqrt(s(s+1) - m(m+1)): sqrt(3), 2, sqrt(3) for s = 3/2
    let raise = [h, 1.0, h];
    let mut sx = Mat4::zeros();
    let mut sy = Mat4::zeros();
    for (k, &v) in raise.iter().enumerate() {
        sx[(k, k + 1)] = c(v);
        sx[(k + 1, k)] = c(v);
        sy[(k, k + 1)] = -i * v;
        sy[(k + 1, k)] = i * v;
    }
    let sz = Mat4::from_diagonal(&Vector4::from_iterator(M_VALUES.iter().map(|&m| c(m))));
    SpinOperators { sx, sy, sz }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VacancyKind {
    V2,
    V3,
}

impl VacancyKind {
    pub fn default_d_mhz(self) -> f64 {
        match self {
            VacancyKind::V2 => defaults::V2_D_MHZ,
            VacancyKind::V3 => defaults::V3_D_MHZ,
        }
    }

    /// Index used in peak labels (`P3^1a`, `d2^b`, ...).
    pub fn label_index(self) -> u8 {
        match self {
            VacancyKind::V2 => 2,
            VacancyKind::V3 => 3,
        }
    }

    /// Fully pumped populations: `+-1/2` for V3, `+-3/2` for V2.
    pub fn pumped_populations(self) -> [f64; 4] {
        match self {
            VacancyKind::V3 => [0.0, 0.5, 0.5, 0.0],
            VacancyKind::V2 => [0.5, 0.0, 0.0, 0.5],
        }
    }
}

impl fmt::Display for VacancyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VacancyKind::V2 => "V2",
            VacancyKind::V3 => "V3",
        })
    }
}

impl std::str::FromStr for VacancyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "V2" | "v2" => Ok(VacancyKind::V2),
            "V3" | "v3" => Ok(VacancyKind::V3),
            other => Err(Error::invalid(format!("unknown vacancy kind `{other}`"))),
        }
    }
}

/// A silicon vacancy in a static field. `b_field` is in the crystal frame
/// with z along the c-axis.
#[derive(Debug, Clone, PartialEq)]
pub struct VacancySystem {
    pub kind: VacancyKind,
    pub d_mhz: f64,
    pub g_factor: f64,
    pub b_field: Vector3<f64>,
}

impl VacancySystem {
    pub fn new(kind: VacancyKind) -> Self {
        VacancySystem {
            kind,
            d_mhz: kind.default_d_mhz(),
            g_factor: defaults::G_FACTOR,
            b_field: Vector3::zeros(),
        }
    }

    pub fn with_field(mut self, b_mt: Vector3<f64>) -> Self {
        self.b_field = b_mt;
        self
    }

    pub fn with_d(mut self, d_mhz: f64) -> Self {
        self.d_mhz = d_mhz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g_factor > 0.0 && self.g_factor.is_finite()) {
            return Err(Error::invalid(format!("g factor must be positive, got {}", self.g_factor)));
        }
        if !self.d_mhz.is_finite() || self.b_field.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("vacancy parameters must be finite"));
        }
        Ok(())
    }

    /// Zeeman frequency per mT, `g * mu_B / h`.
    pub fn zeeman_mhz_per_mt(&self) -> f64 {
        self.g_factor * defaults::BOHR_MHZ_PER_MT
    }
}

/// `D (Sz^2 - S(S+1)/3) + g mu_B B.S` in MHz.
pub fn static_hamiltonian(sys: &VacancySystem) -> Mat4 {
    let ops = spin_operators();
    let zfs = (ops.sz * ops.sz - Mat4::identity() * c(1.25)) * c(sys.d_mhz);
    let z = sys.zeeman_mhz_per_mt();
    let b = sys.b_field;
    zfs + ops.sx * c(z * b.x) + ops.sy * c(z * b.y) + ops.sz * c(z * b.z)
}

/// Linearly, elliptically or circularly polarized RF field, optionally with a
/// component along the c-axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RFDrive {
    /// Coupling strength in MHz.
    pub omega1_mhz: f64,
    /// Carrier frequency in MHz.
    pub omega_mhz: f64,
    /// Polarization angle; 0 is linear along x, pi/4 circular.
    pub phi_rad: f64,
    /// Fraction of the drive along z.
    pub p_z: f64,
    /// Carrier phase, used for pulse phase cycling.
    pub chi_rad: f64,
}

impl RFDrive {
    pub fn linear(omega1_mhz: f64, omega_mhz: f64) -> Self {
        RFDrive { omega1_mhz, omega_mhz, phi_rad: 0.0, p_z: 0.0, chi_rad: 0.0 }
    }

    pub fn with_phi(mut self, phi_rad: f64) -> Self {
        self.phi_rad = phi_rad;
        self
    }

    pub fn with_p_z(mut self, p_z: f64) -> Self {
        self.p_z = p_z;
        self
    }

    pub fn with_chi(mut self, chi_rad: f64) -> Self {
        self.chi_rad = chi_rad;
        self
    }

    pub fn with_omega1(mut self, omega1_mhz: f64) -> Self {
        self.omega1_mhz = omega1_mhz;
        self
    }

    pub fn with_omega(mut self, omega_mhz: f64) -> Self {
        self.omega_mhz = omega_mhz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega1_mhz >= 0.0 && self.omega1_mhz.is_finite()) {
            return Err(Error::invalid(format!("omega1 must be >= 0, got {}", self.omega1_mhz)));
        }
        if !(self.omega_mhz > 0.0 && self.omega_mhz.is_finite()) {
            return Err(Error::invalid(format!("omega must be > 0, got {}", self.omega_mhz)));
        }
        if !(0.0..=1.0).contains(&self.p_z) {
            return Err(Error::invalid(format!("p_z must lie in [0, 1], got {}", self.p_z)));
        }
        if !self.phi_rad.is_finite() || !self.chi_rad.is_finite() {
            return Err(Error::invalid("drive angles must be finite"));
        }
        Ok(())
    }

    /// The two fixed operators multiplying `cos(2 pi w t + chi)` and
    /// `sin(2 pi w t + chi)`.
    pub(crate) fn quadratures(&self) -> (Mat4, Mat4) {
        let ops = spin_operators();
        let w1 = self.omega1_mhz;
        let in_phase = ops.sx * c(w1 * self.phi_rad.cos()) + ops.sz * c(w1 * self.p_z);
        let quadrature = ops.sy * c(w1 * self.phi_rad.sin());
        (in_phase, quadrature)
    }

    pub(crate) fn phase_at(&self, t_us: f64) -> f64 {
        2.0 * PI * self.omega_mhz * t_us + self.chi_rad
    }
}

/// `W1 [cos(phi) cos(th) Sx + sin(phi) sin(th) Sy + p cos(th) Sz]` with
/// `th = 2 pi w t + chi`.
pub fn drive_hamiltonian(d: &RFDrive, t_us: f64) -> Mat4 {
    let (a, b) = d.quadratures();
    let th = d.phase_at(t_us);
    a * c(th.cos()) + b * c(th.sin())
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// as columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: [f64; 4],
    pub vectors: Mat4,
}

impl EigenSystem {
    pub fn vector(&self, k: usize) -> Vector4<C64> {
        self.vectors.column(k).into_owned()
    }

    /// Largest gap between any two eigenvalues.
    pub fn spread(&self) -> f64 {
        self.values[3] - self.values[0]
    }
}

pub const HERMITIAN_TOL: f64 = 1e-9;

pub fn eigensystem(h: &Mat4) -> Result<EigenSystem> {
    let asym = max_asymmetry(h);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian { max_asymmetry: asym });
    }
    let eig = hermitize(h).symmetric_eigen();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut values = [0.0; 4];
    let mut vectors = Mat4::zeros();
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenSystem { values, vectors })
}

/// A 4x4 spin density matrix: Hermitian, unit trace, positive semidefinite
/// within numerical tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(Mat4);

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-9;
    pub const TRACE_TOL: f64 = 1e-9;
    pub const MIN_EIGENVALUE: f64 = -1e-6;

    pub fn new(m: Mat4) -> Result<Self> {
        let asym = max_asymmetry(&m);
        if asym > Self::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (max asymmetry {asym:.3e})")));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, expected 1")));
        }
        let lowest = eigensystem(&m)?.values[0];
        if lowest < Self::MIN_EIGENVALUE {
            return Err(Error::InvalidState(format!("negative eigenvalue {lowest:.3e}")));
        }
        Ok(DensityMatrix(m))
    }

    /// Skips the eigenvalue check; used for integrator output whose trace
    /// and hermiticity are enforced separately.
    pub(crate) fn from_trusted(m: Mat4) -> Self {
        DensityMatrix(m)
    }

    pub fn from_populations(p: [f64; 4]) -> Result<Self> {
        Self::new(Mat4::from_diagonal(&Vector4::from_iterator(p.iter().map(|&x| c(x)))))
    }

    pub fn maximally_mixed() -> Self {
        DensityMatrix(Mat4::identity() * c(0.25))
    }

    /// Projector onto a normalized pure state.
    pub fn pure(psi: &Vector4<C64>) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v = psi / c(n);
        Self::new(v * v.adjoint())
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat4 {
        self.0
    }

    pub fn populations(&self) -> [f64; 4] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re, self.0[(3, 3)].re]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `sum_i w_i rho_ii`.
    pub fn weighted_populations(&self, w: &[f64; 4]) -> f64 {
        self.populations().iter().zip(w).map(|(p, w)| p * w).sum()
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        eigensystem(&hermitize(&self.0)).map(|e| e.values[0]).unwrap_or(f64::NAN)
    }
}

/// Diagonal starting state of the CW simulations: the pumping/relaxation
/// balance between the `+-3/2` and `+-1/2` manifolds.
pub fn cw_initial_state(kind: VacancyKind, r: &RelaxationParams) -> Result<DensityMatrix> {
    r.validate()?;
    let g = r.gamma();
    let d = r.delta;
    if g + d == 0.0 {
        return Ok(DensityMatrix::maximally_mixed());
    }
    let norm = 4.0 * (g + d);
    let outer = g / norm;
    let inner = (g + 2.0 * d) / norm;
    let p = match kind {
        VacancyKind::V3 => [outer, inner, inner, outer],
        VacancyKind::V2 => [inner, outer, outer, inner],
    };
    DensityMatrix::from_populations(p)
}
