//! Experiment configuration: a line-oriented `[section]` / `key = value`
//! format with `#` comments, versioned by a top-level `format = 1`.
//!
//! Loading fills every omitted key with its built-in default, so the
//! rendered form of a loaded configuration is fully explicit and loads back
//! to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Vector3;

use crate::analysis::Exponent;
use crate::defaults;
use crate::error::{Error, Result};
use crate::master_eq::{collapse_set, Integrator, RelaxationParams, SpinLatticeForm};
use crate::sequences::{FieldPath, InhomogeneityModel};
use crate::spin::{RFDrive, VacancyKind, VacancySystem};

pub const FORMAT_VERSION: u32 = 1;

const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["format"]),
    ("vacancy", &["kind", "d_mhz", "g"]),
    ("field", &["mode", "b_mt", "sweep_mt", "tilt_deg", "b_parallel_mt"]),
    ("drive", &["omega1_mhz", "omega_mhz", "omega_grid_mhz", "phi_rad", "p_z", "chi_rad", "kappa", "photons"]),
    ("relaxation", &["alpha", "beta", "delta", "spin_lattice"]),
    ("protocol", &["name", "tau_grid_us", "duration_us", "steps", "f_det_mhz", "pulse_us", "max_photons"]),
    ("inhomogeneity", &["preset", "members"]),
    ("integrator", &["dt_us"]),
    ("output", &["path", "scale"]),
    ("fit", &["input", "exponent"]),
];

/// Either `start:stop:step` (inclusive, step count rounded) or an explicit
/// comma-separated list.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Range { start, stop, step } => {
                let n = ((stop - start) / step).round() as usize;
                (0..=n).map(|k| start + k as f64 * step).collect()
            }
            Grid::List(v) => v.clone(),
        }
    }

    fn validate(&self, what: &str) -> std::result::Result<(), String> {
        if let Grid::Range { start, stop, step } = self {
            if !(*step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
                return Err(format!("{what}: range needs step > 0 and stop >= start"));
            }
            if (stop - start) / step > 1e7 {
                return Err(format!("{what}: range has too many points"));
            }
        }
        let v = self.values();
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(format!("{what}: grid must be nonempty and strictly increasing"));
        }
        Ok(())
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.contains(':') {
            let parts: Vec<&str> = s.split(':').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("expected start:stop:step, got `{s}`"));
            }
            let [start, stop, step] = [parts[0], parts[1], parts[2]].map(parse_f64);
            Ok(Grid::Range { start: start?, stop: stop?, step: step? })
        } else {
            Ok(Grid::List(parse_list(s)?))
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grid::Range { start, stop, step } => write!(f, "{start}:{stop}:{step}"),
            Grid::List(v) => write!(f, "{}", join(v)),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("expected a number, got `{}`", s.trim()))
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(parse_f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Cw,
    Rabi,
    Fid,
    FieldSweep,
    Transitions,
    FitPower,
    FitFid,
    FitLoglog,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 8] = [
        ProtocolKind::Cw,
        ProtocolKind::Rabi,
        ProtocolKind::Fid,
        ProtocolKind::FieldSweep,
        ProtocolKind::Transitions,
        ProtocolKind::FitPower,
        ProtocolKind::FitFid,
        ProtocolKind::FitLoglog,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Cw => "cw",
            ProtocolKind::Rabi => "rabi",
            ProtocolKind::Fid => "fid",
            ProtocolKind::FieldSweep => "field-sweep",
            ProtocolKind::Transitions => "transitions",
            ProtocolKind::FitPower => "fit-power",
            ProtocolKind::FitFid => "fit-fid",
            ProtocolKind::FitLoglog => "fit-loglog",
        }
    }

    fn is_fit(self) -> bool {
        matches!(self, ProtocolKind::FitPower | ProtocolKind::FitFid | ProtocolKind::FitLoglog)
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Fixed(Vector3<f64>),
    /// Magnitudes along a direction tilted from the c-axis.
    Tilted { sweep_mt: Grid, tilt_deg: f64 },
    /// Fixed axial field with a swept transverse component.
    Perpendicular { b_parallel_mt: f64, sweep_mt: Grid },
    /// Axial field values (transition maps).
    Parallel { sweep_mt: Grid },
}

impl FieldSpec {
    pub fn path(&self) -> FieldPath {
        match self {
            FieldSpec::Fixed(b) => FieldPath { labels_mt: vec![b.norm()], vectors_mt: vec![*b] },
            FieldSpec::Tilted { sweep_mt, tilt_deg } => FieldPath::tilted_parallel(&sweep_mt.values(), *tilt_deg),
            FieldSpec::Perpendicular { b_parallel_mt, sweep_mt } => {
                FieldPath::perpendicular(*b_parallel_mt, &sweep_mt.values())
            }
            FieldSpec::Parallel { sweep_mt } => FieldPath::tilted_parallel(&sweep_mt.values(), 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriveSpec {
    pub omega1_mhz: f64,
    pub omega_mhz: Option<f64>,
    pub omega_grid_mhz: Option<Grid>,
    pub phi_rad: f64,
    pub p_z: f64,
    pub chi_rad: f64,
    /// `Omega1 = kappa * sqrt(P)`, used to report drive power.
    pub kappa: f64,
    pub photons: Option<u8>,
}

impl DriveSpec {
    /// Drive at carrier `omega` with the configured amplitude and shape.
    pub fn at(&self, omega_mhz: f64) -> RFDrive {
        RFDrive::linear(self.omega1_mhz, omega_mhz)
            .with_phi(self.phi_rad)
            .with_p_z(self.p_z)
            .with_chi(self.chi_rad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolSpec {
    Cw { duration_us: f64, steps: usize },
    Rabi { tau_grid_us: Grid },
    Fid { tau_grid_us: Grid, f_det_mhz: f64, pulse_us: f64 },
    FieldSweep { duration_us: f64, steps: usize },
    Transitions { max_photons: u8 },
    FitPower,
    FitFid,
    FitLoglog,
}

impl ProtocolSpec {
    pub fn kind(&self) -> ProtocolKind {
        match self {
            ProtocolSpec::Cw { .. } => ProtocolKind::Cw,
            ProtocolSpec::Rabi { .. } => ProtocolKind::Rabi,
            ProtocolSpec::Fid { .. } => ProtocolKind::Fid,
            ProtocolSpec::FieldSweep { .. } => ProtocolKind::FieldSweep,
            ProtocolSpec::Transitions { .. } => ProtocolKind::Transitions,
            ProtocolSpec::FitPower => ProtocolKind::FitPower,
            ProtocolSpec::FitFid => ProtocolKind::FitFid,
            ProtocolSpec::FitLoglog => ProtocolKind::FitLoglog,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InhomogeneitySpec {
    None,
    Rabi,
    ZDrive,
    Members(Vec<(f64, f64)>),
}

impl InhomogeneitySpec {
    pub fn model(&self) -> Option<InhomogeneityModel> {
        match self {
            InhomogeneitySpec::None => None,
            InhomogeneitySpec::Rabi => Some(InhomogeneityModel::rabi_preset()),
            InhomogeneitySpec::ZDrive => Some(InhomogeneityModel::z_drive_preset()),
            InhomogeneitySpec::Members(m) => InhomogeneityModel::new(m.clone()).ok(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub vacancy: VacancySystem,
    pub field: FieldSpec,
    pub drive: DriveSpec,
    pub relaxation: RelaxationParams,
    pub protocol: ProtocolSpec,
    pub inhomogeneity: InhomogeneitySpec,
    pub dt_us: Option<f64>,
    pub output_path: Option<String>,
    pub output_scale: f64,
    pub fit_input: Option<String>,
    pub fit_exponent: Exponent,
}

impl ExperimentConfig {
    /// The vacancy with the configured fixed field (zero field for sweeps).
    pub fn system(&self) -> VacancySystem {
        match &self.field {
            FieldSpec::Fixed(b) => self.vacancy.clone().with_field(*b),
            _ => self.vacancy.clone().with_field(Vector3::zeros()),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: Option<usize>,
}

type Raw = BTreeMap<(String, String), Entry>;

fn parse_raw(text: &str) -> Result<Raw> {
    let mut raw = Raw::new();
    let mut section = String::new();
    for (idx, full) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = full.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line_no, "unterminated section header"))?
                .trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) || name.is_empty() {
                return Err(Error::config(line_no, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line_no, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let keys = SCHEMA.iter().find(|(s, _)| *s == section).map(|s| s.1).unwrap_or(&[]);
        if !keys.contains(&key) {
            let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
            return Err(Error::config(line_no, format!("unknown key `{key}` in {place}")));
        }
        let slot = (section.clone(), key.to_string());
        if raw.contains_key(&slot) {
            return Err(Error::config(line_no, format!("duplicate key `{key}`")));
        }
        raw.insert(slot, Entry { value: value.trim().to_string(), line: Some(line_no) });
    }
    Ok(raw)
}

/// Applies a `section.key=value` override.
fn apply_override(raw: &mut Raw, spec: &str) -> Result<()> {
    let (path, value) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(None, format!("override `{spec}` is not `section.key=value`")))?;
    let (section, key) = path.trim().split_once('.').unwrap_or(("", path.trim()));
    let known = SCHEMA.iter().any(|(s, keys)| *s == section && keys.contains(&key));
    if !known {
        return Err(Error::config(None, format!("override names unknown key `{}`", path.trim())));
    }
    raw.insert((section.to_string(), key.to_string()), Entry { value: value.trim().to_string(), line: None });
    Ok(())
}

struct Reader {
    raw: Raw,
}

impl Reader {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.raw.get(&(section.to_string(), key.to_string()))
    }

    fn get<T>(&self, section: &str, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.entry(section, key) {
            None => Ok(None),
            Some(e) => parse(&e.value)
                .map(Some)
                .map_err(|m| Error::config(e.line, format!("{}: {m}", qualified(section, key)))),
        }
    }

    fn num(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key, parse_f64)
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.entry(section, key).and_then(|e| e.line)
    }

    fn fail(&self, section: &str, key: &str, msg: impl Into<String>) -> Error {
        Error::config(self.line(section, key), format!("{}: {}", qualified(section, key), msg.into()))
    }
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

fn parse_uint<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("expected a non-negative integer, got `{s}`"))
}

fn parse_vector(s: &str) -> std::result::Result<Vector3<f64>, String> {
    let v = parse_list(s)?;
    if v.len() != 3 {
        return Err(format!("expected three components, got {}", v.len()));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_members(s: &str) -> std::result::Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(|item| {
            let (a, b) = item
                .split_once(':')
                .ok_or_else(|| format!("expected scale:weight, got `{}`", item.trim()))?;
            Ok((parse_f64(a)?, parse_f64(b)?))
        })
        .collect()
}

/// Photon number of the resonance closest to `omega` at zero field.
fn infer_photons(sys: &VacancySystem, omega: f64) -> u8 {
    let gap = (2.0 * sys.d_mhz).abs();
    (1..=3u8)
        .min_by(|&a, &b| {
            let da = (gap / a as f64 - omega).abs();
            let db = (gap / b as f64 - omega).abs();
            da.total_cmp(&db)
        })
        .unwrap_or(1)
}

/// Parses and validates a configuration, filling defaults.
pub fn load_config(text: &str) -> Result<ExperimentConfig> {
    load_config_with(text, &[], None)
}

/// As [`load_config`], with `section.key=value` overrides applied first and
/// an optional protocol supplied when the text names none. A protocol that
/// disagrees with `protocol_hint` is rejected.
pub fn load_config_with(text: &str, overrides: &[String], protocol_hint: Option<ProtocolKind>) -> Result<ExperimentConfig> {
    let mut raw = parse_raw(text)?;
    for o in overrides {
        apply_override(&mut raw, o)?;
    }
    let r = Reader { raw };

    if let Some(v) = r.get("", "format", parse_uint::<u32>)? {
        if v != FORMAT_VERSION {
            return Err(r.fail("", "format", format!("unsupported version {v}")));
        }
    }

    let protocol_kind = match (r.get("protocol", "name", |s| s.parse::<ProtocolKind>())?, protocol_hint) {
        (Some(p), Some(h)) if p != h => {
            return Err(r.fail("protocol", "name", format!("config is for `{}`, not `{}`", p.name(), h.name())))
        }
        (Some(p), _) | (None, Some(p)) => p,
        (None, None) => return Err(Error::config(None, "missing protocol")),
    };

    // vacancy
    let kind = r.get("vacancy", "kind", |s| s.parse::<VacancyKind>().map_err(|e| e.to_string()))?;
    let kind = match kind {
        Some(k) => k,
        None if protocol_kind.is_fit() => VacancyKind::V3,
        None => return Err(Error::config(None, "missing vacancy.kind")),
    };
    let mut vacancy = VacancySystem::new(kind);
    if let Some(d) = r.num("vacancy", "d_mhz")? {
        vacancy = vacancy.with_d(d);
    }
    if let Some(g) = r.num("vacancy", "g")? {
        vacancy.g_factor = g;
    }
    vacancy.validate().map_err(|e| Error::config(r.line("vacancy", "g"), e.to_string()))?;

    // field
    let mode = r.get("field", "mode", |s| Ok::<_, String>(s.to_string()))?;
    let default_mode = match protocol_kind {
        ProtocolKind::FieldSweep => "tilted",
        ProtocolKind::Transitions => "parallel",
        _ => "fixed",
    };
    let sweep = |r: &Reader| -> Result<Grid> {
        let g = r
            .get("field", "sweep_mt", |s| s.parse::<Grid>())?
            .ok_or_else(|| Error::config(None, "missing field.sweep_mt"))?;
        g.validate("field.sweep_mt").map_err(|m| Error::config(r.line("field", "sweep_mt"), m))?;
        Ok(g)
    };
    let field = match mode.as_deref().unwrap_or(default_mode) {
        "fixed" => FieldSpec::Fixed(r.get("field", "b_mt", parse_vector)?.unwrap_or_else(Vector3::zeros)),
        "tilted" => FieldSpec::Tilted {
            sweep_mt: sweep(&r)?,
            tilt_deg: r.num("field", "tilt_deg")?.unwrap_or(defaults::PARALLEL_TILT_DEG),
        },
        "perpendicular" => FieldSpec::Perpendicular {
            b_parallel_mt: r.num("field", "b_parallel_mt")?.unwrap_or(defaults::PERP_SWEEP_B_PARALLEL_MT),
            sweep_mt: sweep(&r)?,
        },
        "parallel" => FieldSpec::Parallel { sweep_mt: sweep(&r)? },
        other => return Err(r.fail("field", "mode", format!("unknown mode `{other}`"))),
    };
    if let FieldSpec::Fixed(b) = &field {
        if b.iter().any(|x| !x.is_finite()) {
            return Err(r.fail("field", "b_mt", "components must be finite"));
        }
    }
    match (protocol_kind, &field) {
        (ProtocolKind::FieldSweep, FieldSpec::Fixed(_)) => {
            return Err(Error::config(r.line("field", "mode"), "field-sweep needs a tilted or perpendicular field sweep"))
        }
        (ProtocolKind::Transitions, f) if !matches!(f, FieldSpec::Parallel { .. }) => {
            return Err(Error::config(r.line("field", "mode"), "transitions needs field.mode = parallel"))
        }
        (ProtocolKind::Cw | ProtocolKind::Rabi | ProtocolKind::Fid, f) if !matches!(f, FieldSpec::Fixed(_)) => {
            return Err(Error::config(r.line("field", "mode"), format!("{} needs field.mode = fixed", protocol_kind.name())))
        }
        _ => {}
    }

    // drive
    let omega1_default = match protocol_kind {
        ProtocolKind::Rabi | ProtocolKind::Fid => defaults::PULSED_OMEGA1_MHZ,
        ProtocolKind::FieldSweep => match field {
            FieldSpec::Perpendicular { .. } => defaults::PERP_MAP_OMEGA1_MHZ,
            _ => defaults::FIELD_MAP_OMEGA1_MHZ,
        },
        _ => defaults::FIELD_MAP_OMEGA1_MHZ,
    };
    let photons = r.get("drive", "photons", parse_uint::<u8>)?;
    if let Some(n) = photons {
        if !(1..=3).contains(&n) {
            return Err(r.fail("drive", "photons", "must be 1, 2 or 3"));
        }
    }
    let omega_grid = r.get("drive", "omega_grid_mhz", |s| s.parse::<Grid>())?;
    if let Some(g) = &omega_grid {
        g.validate("drive.omega_grid_mhz").map_err(|m| Error::config(r.line("drive", "omega_grid_mhz"), m))?;
        if g.values()[0] <= 0.0 {
            return Err(r.fail("drive", "omega_grid_mhz", "carrier frequencies must be positive"));
        }
    }
    let drive = DriveSpec {
        omega1_mhz: r.num("drive", "omega1_mhz")?.unwrap_or(omega1_default),
        omega_mhz: r.num("drive", "omega_mhz")?,
        omega_grid_mhz: omega_grid,
        phi_rad: r.num("drive", "phi_rad")?.unwrap_or(0.0),
        p_z: r.num("drive", "p_z")?.unwrap_or(0.0),
        chi_rad: r.num("drive", "chi_rad")?.unwrap_or(0.0),
        kappa: r.num("drive", "kappa")?.unwrap_or(defaults::KAPPA_BY_PHOTONS[0]),
        photons,
    };
    drive
        .at(drive.omega_mhz.unwrap_or(1.0))
        .validate()
        .map_err(|e| Error::config(r.line("drive", "omega1_mhz"), e.to_string()))?;
    if !(drive.kappa > 0.0) {
        return Err(r.fail("drive", "kappa", "must be positive"));
    }
    match protocol_kind {
        ProtocolKind::Rabi | ProtocolKind::Fid if drive.omega_mhz.is_none() => {
            return Err(Error::config(None, format!("{} needs drive.omega_mhz", protocol_kind.name())));
        }
        ProtocolKind::Cw | ProtocolKind::FieldSweep if drive.omega_grid_mhz.is_none() => {
            return Err(Error::config(None, format!("{} needs drive.omega_grid_mhz", protocol_kind.name())));
        }
        _ => {}
    }

    // relaxation
    let cw_rates = match kind {
        VacancyKind::V2 => (defaults::CW_ALPHA_V2, defaults::CW_BETA_V2, defaults::CW_DELTA_V2),
        VacancyKind::V3 => (defaults::CW_ALPHA_V3, defaults::CW_BETA_V3, defaults::CW_DELTA_V3),
    };
    let (alpha0, beta0, delta0) = match protocol_kind {
        ProtocolKind::Rabi => {
            let n = photons.unwrap_or_else(|| infer_photons(&vacancy, drive.omega_mhz.unwrap_or(0.0)));
            (defaults::PULSED_ALPHA, defaults::RABI_BETA_BY_PHOTONS[n as usize - 1], 0.0)
        }
        ProtocolKind::Fid => (defaults::PULSED_ALPHA, defaults::FID_BETA, 0.0),
        _ => cw_rates,
    };
    let mut relaxation = RelaxationParams::new(
        r.num("relaxation", "alpha")?.unwrap_or(alpha0),
        r.num("relaxation", "beta")?.unwrap_or(beta0),
        r.num("relaxation", "delta")?.unwrap_or(delta0),
    );
    relaxation.spin_lattice = match r.get("relaxation", "spin_lattice", |s| Ok::<_, String>(s.to_string()))?.as_deref() {
        None | Some("scaled-sx") => SpinLatticeForm::ScaledSx,
        Some("rate-matrix") => SpinLatticeForm::RateMatrix,
        Some(other) => return Err(r.fail("relaxation", "spin_lattice", format!("unknown form `{other}`"))),
    };
    relaxation.validate().map_err(|e| Error::config(None, e.to_string()))?;

    // protocol
    let tau = |r: &Reader| -> Result<Grid> {
        let g = r
            .get("protocol", "tau_grid_us", |s| s.parse::<Grid>())?
            .ok_or_else(|| Error::config(None, "missing protocol.tau_grid_us"))?;
        g.validate("protocol.tau_grid_us").map_err(|m| Error::config(r.line("protocol", "tau_grid_us"), m))?;
        if g.values()[0] < 0.0 {
            return Err(r.fail("protocol", "tau_grid_us", "times must be non-negative"));
        }
        Ok(g)
    };
    let cw_window = |r: &Reader| -> Result<(f64, usize)> {
        let d = r.num("protocol", "duration_us")?.unwrap_or(defaults::CW_DURATION_US);
        let n = r.get("protocol", "steps", parse_uint::<usize>)?.unwrap_or(defaults::CW_STEPS);
        if !(d > 0.0) || n == 0 {
            return Err(Error::config(r.line("protocol", "duration_us"), "duration and steps must be positive"));
        }
        Ok((d, n))
    };
    let protocol = match protocol_kind {
        ProtocolKind::Cw => {
            let (duration_us, steps) = cw_window(&r)?;
            ProtocolSpec::Cw { duration_us, steps }
        }
        ProtocolKind::FieldSweep => {
            let (duration_us, steps) = cw_window(&r)?;
            ProtocolSpec::FieldSweep { duration_us, steps }
        }
        ProtocolKind::Rabi => ProtocolSpec::Rabi { tau_grid_us: tau(&r)? },
        ProtocolKind::Fid => {
            let pulse_us = r.num("protocol", "pulse_us")?.unwrap_or(defaults::FID_PULSE_US);
            if !(pulse_us > 0.0) {
                return Err(r.fail("protocol", "pulse_us", "must be positive"));
            }
            ProtocolSpec::Fid {
                tau_grid_us: tau(&r)?,
                f_det_mhz: r.num("protocol", "f_det_mhz")?.unwrap_or(defaults::FID_DETUNING_MHZ),
                pulse_us,
            }
        }
        ProtocolKind::Transitions => {
            let n = r.get("protocol", "max_photons", parse_uint::<u8>)?.unwrap_or(3);
            if !(1..=3).contains(&n) {
                return Err(r.fail("protocol", "max_photons", "must be 1, 2 or 3"));
            }
            ProtocolSpec::Transitions { max_photons: n }
        }
        ProtocolKind::FitPower => ProtocolSpec::FitPower,
        ProtocolKind::FitFid => ProtocolSpec::FitFid,
        ProtocolKind::FitLoglog => ProtocolSpec::FitLoglog,
    };

    // inhomogeneity
    let preset = r.get("inhomogeneity", "preset", |s| Ok::<_, String>(s.to_string()))?;
    let members = r.get("inhomogeneity", "members", parse_members)?;
    let inhomogeneity = match (preset.as_deref(), members) {
        (Some(_), Some(_)) => {
            return Err(r.fail("inhomogeneity", "members", "give either a preset or members, not both"))
        }
        (None, Some(m)) => {
            InhomogeneityModel::new(m.clone()).map_err(|e| r.fail("inhomogeneity", "members", e.to_string()))?;
            InhomogeneitySpec::Members(m)
        }
        (None | Some("none"), None) => InhomogeneitySpec::None,
        (Some("rabi"), None) => InhomogeneitySpec::Rabi,
        (Some("z-drive"), None) => InhomogeneitySpec::ZDrive,
        (Some(other), None) => return Err(r.fail("inhomogeneity", "preset", format!("unknown preset `{other}`"))),
    };

    // integrator
    let dt_us = r.num("integrator", "dt_us")?;
    if let Some(dt) = dt_us {
        if !(dt > 0.0) {
            return Err(r.fail("integrator", "dt_us", "must be positive"));
        }
    }

    // output and fit
    let output_path = r.get("output", "path", |s| Ok::<_, String>(s.to_string()))?;
    let output_scale = r.num("output", "scale")?.unwrap_or(1.0);
    if !output_scale.is_finite() {
        return Err(r.fail("output", "scale", "must be finite"));
    }
    let fit_input = r.get("fit", "input", |s| Ok::<_, String>(s.to_string()))?;
    let fit_exponent = match r.get("fit", "exponent", |s| Ok::<_, String>(s.to_string()))?.as_deref() {
        None | Some("free") => Exponent::Free,
        Some(s) => {
            let c = parse_f64(s).map_err(|m| r.fail("fit", "exponent", m))?;
            if !(c > 0.0) {
                return Err(r.fail("fit", "exponent", "must be positive or `free`"));
            }
            Exponent::Fixed(c)
        }
    };
    if protocol_kind.is_fit() && fit_input.is_none() {
        return Err(Error::config(None, format!("{} needs fit.input", protocol_kind.name())));
    }

    let cfg = ExperimentConfig {
        vacancy,
        field,
        drive,
        relaxation,
        protocol,
        inhomogeneity,
        dt_us,
        output_path,
        output_scale,
        fit_input,
        fit_exponent,
    };
    if let Some(dt) = dt_us {
        let bound = stability_bound_for(&cfg)?;
        if dt > bound {
            return Err(Error::config(
                r.line("integrator", "dt_us"),
                format!("integrator.dt_us = {dt} exceeds the stability bound {bound:.6e} us"),
            ));
        }
    }
    Ok(cfg)
}

/// Smallest stability bound over every drive and field the protocol visits.
pub fn stability_bound_for(cfg: &ExperimentConfig) -> Result<f64> {
    let ls = collapse_set(&cfg.relaxation, cfg.vacancy.kind);
    let max_scale = cfg
        .inhomogeneity
        .model()
        .map_or(1.0, |m| m.members().iter().map(|x| x.0).fold(0.0, f64::max));
    let omega = match (&cfg.drive.omega_grid_mhz, cfg.drive.omega_mhz) {
        (Some(g), _) => g.values().into_iter().fold(0.0, f64::max),
        (None, Some(w)) => w,
        (None, None) => 1.0,
    };
    let drive = cfg.drive.at(omega).with_omega1(cfg.drive.omega1_mhz * max_scale);
    let mut bound = f64::INFINITY;
    for b in cfg.field.path().vectors_mt {
        let sys = cfg.vacancy.clone().with_field(b);
        bound = bound.min(Integrator::new(&sys, Some(&drive), &ls)?.stability_bound());
    }
    Ok(bound)
}

/// Fully explicit text form; `load_config(&render(c)) == c`.
pub fn render(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format = {FORMAT_VERSION}");
    let _ = writeln!(s, "\n[vacancy]\nkind = {}\nd_mhz = {}\ng = {}", cfg.vacancy.kind, cfg.vacancy.d_mhz, cfg.vacancy.g_factor);
    s.push_str("\n[field]\n");
    match &cfg.field {
        FieldSpec::Fixed(b) => {
            let _ = writeln!(s, "mode = fixed\nb_mt = {}", join(&[b.x, b.y, b.z]));
        }
        FieldSpec::Tilted { sweep_mt, tilt_deg } => {
            let _ = writeln!(s, "mode = tilted\nsweep_mt = {sweep_mt}\ntilt_deg = {tilt_deg}");
        }
        FieldSpec::Perpendicular { b_parallel_mt, sweep_mt } => {
            let _ = writeln!(s, "mode = perpendicular\nb_parallel_mt = {b_parallel_mt}\nsweep_mt = {sweep_mt}");
        }
        FieldSpec::Parallel { sweep_mt } => {
            let _ = writeln!(s, "mode = parallel\nsweep_mt = {sweep_mt}");
        }
    }
    let d = &cfg.drive;
    let _ = writeln!(s, "\n[drive]\nomega1_mhz = {}", d.omega1_mhz);
    if let Some(w) = d.omega_mhz {
        let _ = writeln!(s, "omega_mhz = {w}");
    }
    if let Some(g) = &d.omega_grid_mhz {
        let _ = writeln!(s, "omega_grid_mhz = {g}");
    }
    let _ = writeln!(s, "phi_rad = {}\np_z = {}\nchi_rad = {}\nkappa = {}", d.phi_rad, d.p_z, d.chi_rad, d.kappa);
    if let Some(n) = d.photons {
        let _ = writeln!(s, "photons = {n}");
    }
    let r = &cfg.relaxation;
    let form = match r.spin_lattice {
        SpinLatticeForm::ScaledSx => "scaled-sx",
        SpinLatticeForm::RateMatrix => "rate-matrix",
    };
    let _ = writeln!(s, "\n[relaxation]\nalpha = {}\nbeta = {}\ndelta = {}\nspin_lattice = {form}", r.alpha, r.beta, r.delta);
    let _ = writeln!(s, "\n[protocol]\nname = {}", cfg.protocol.kind().name());
    match &cfg.protocol {
        ProtocolSpec::Cw { duration_us, steps } | ProtocolSpec::FieldSweep { duration_us, steps } => {
            let _ = writeln!(s, "duration_us = {duration_us}\nsteps = {steps}");
        }
        ProtocolSpec::Rabi { tau_grid_us } => {
            let _ = writeln!(s, "tau_grid_us = {tau_grid_us}");
        }
        ProtocolSpec::Fid { tau_grid_us, f_det_mhz, pulse_us } => {
            let _ = writeln!(s, "tau_grid_us = {tau_grid_us}\nf_det_mhz = {f_det_mhz}\npulse_us = {pulse_us}");
        }
        ProtocolSpec::Transitions { max_photons } => {
            let _ = writeln!(s, "max_photons = {max_photons}");
        }
        ProtocolSpec::FitPower | ProtocolSpec::FitFid | ProtocolSpec::FitLoglog => {}
    }
    s.push_str("\n[inhomogeneity]\n");
    match &cfg.inhomogeneity {
        InhomogeneitySpec::None => s.push_str("preset = none\n"),
        InhomogeneitySpec::Rabi => s.push_str("preset = rabi\n"),
        InhomogeneitySpec::ZDrive => s.push_str("preset = z-drive\n"),
        InhomogeneitySpec::Members(m) => {
            let items: Vec<String> = m.iter().map(|(a, b)| format!("{a}:{b}")).collect();
            let _ = writeln!(s, "members = {}", items.join(", "));
        }
    }
    if let Some(dt) = cfg.dt_us {
        let _ = writeln!(s, "\n[integrator]\ndt_us = {dt}");
    }
    let _ = writeln!(s, "\n[output]\nscale = {}", cfg.output_scale);
    if let Some(p) = &cfg.output_path {
        let _ = writeln!(s, "path = {p}");
    }
    s.push_str("\n[fit]\n");
    if let Some(p) = &cfg.fit_input {
        let _ = writeln!(s, "input = {p}");
    }
    match cfg.fit_exponent {
        Exponent::Free => s.push_str("exponent = free\n"),
        Exponent::Fixed(c) => {
            let _ = writeln!(s, "exponent = {c}");
        }
    }
    s
}
