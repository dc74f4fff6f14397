//! Every built-in physical constant and protocol default, in one place.
//!
//! Units: MHz, microseconds, mT. Rates are per microsecond.

/// Zero-field splitting parameter of V2 (2D = 128 MHz).
pub const V2_D_MHZ: f64 = 64.0;
/// Zero-field splitting parameter of V3 (2D = -28 MHz).
pub const V3_D_MHZ: f64 = -14.0;
/// Electron g factor.
pub const G_FACTOR: f64 = 2.0;
/// Bohr magneton over Planck's constant, MHz per mT.
pub const BOHR_MHZ_PER_MT: f64 = 13.996;

/// CW spin-lattice rates alpha (10.8 and 9.3 per ms).
pub const CW_ALPHA_V2: f64 = 0.0108;
pub const CW_ALPHA_V3: f64 = 0.0093;
/// CW optical pumping rates delta (1.4 and 6.8 per ms).
pub const CW_DELTA_V2: f64 = 0.0014;
pub const CW_DELTA_V3: f64 = 0.0068;
/// CW dephasing rates beta under RF.
pub const CW_BETA_V2: f64 = 2.5;
pub const CW_BETA_V3: f64 = 1.3;
/// CW integration window and step count (0.5 ns steps).
pub const CW_DURATION_US: f64 = 4.0;
pub const CW_STEPS: usize = 8000;

/// Spin-lattice rate used for the pulsed simulations (1/107 per us).
pub const PULSED_ALPHA: f64 = 1.0 / 107.0;
/// Rabi dephasing rates for 1-, 2- and 3-photon drive (1/148, 1/500 and
/// 1/1000 per ns).
pub const RABI_BETA_BY_PHOTONS: [f64; 3] = [1000.0 / 148.0, 1000.0 / 500.0, 1.0];
/// FID free-precession dephasing rate (1/62 per ns).
pub const FID_BETA: f64 = 1000.0 / 62.0;
/// Duration of each FID pulse (25 ns).
pub const FID_PULSE_US: f64 = 0.025;
/// FID phase-increment detuning frequency.
pub const FID_DETUNING_MHZ: f64 = -40.0;

/// RF coupling used for the Rabi, FID and population simulations.
pub const PULSED_OMEGA1_MHZ: f64 = 9.1;
/// RF coupling used for the parallel-field CW maps.
pub const FIELD_MAP_OMEGA1_MHZ: f64 = 6.0;
/// RF coupling used for the perpendicular-field CW maps.
pub const PERP_MAP_OMEGA1_MHZ: f64 = 2.0;
/// RF coupling used for the z-drive CW spectra.
pub const ZDRIVE_OMEGA1_MHZ: f64 = 4.7;

/// Tilt of the nominally parallel field from the c-axis, degrees.
pub const PARALLEL_TILT_DEG: f64 = 2.5;
/// Axial field held fixed during the perpendicular sweep.
pub const PERP_SWEEP_B_PARALLEL_MT: f64 = 9.0;

/// RF amplitude inhomogeneity of the pulsed experiments: (scale, weight).
pub const RABI_INHOMOGENEITY: [(f64, f64); 3] = [(0.97, 0.3), (1.0, 0.4), (1.03, 0.3)];
/// RF amplitude inhomogeneity of the z-drive CW experiments.
pub const ZDRIVE_INHOMOGENEITY: [(f64, f64); 3] = [(0.5, 0.33), (1.0, 0.34), (1.5, 0.33)];

/// `Omega1 = kappa * sqrt(P)`: 0.25 for 1-photon and about 1 for 2- and
/// 3-photon peaks.
pub const KAPPA_BY_PHOTONS: [f64; 3] = [0.25, 1.0, 1.0];

/// Largest pulsed integration step (0.5 ns).
pub const MAX_PULSED_DT_US: f64 = 0.0005;
/// Pulsed steps resolve the fastest of omega and Omega1 with this many
/// samples per period.
pub const PULSED_SAMPLES_PER_PERIOD: f64 = 50.0;
