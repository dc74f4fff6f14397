//! CSV emission. Headers name columns with units, numbers carry nine
//! significant digits, lines end in LF.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::master_eq::Trajectory;
use crate::sequences::{FieldMap, Spectrum, TransitionLine};

/// One fitted parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub parameter: String,
    pub value: f64,
    pub stderr: f64,
}

impl FitRow {
    pub fn new(parameter: &str, value: f64, stderr: f64) -> Self {
        FitRow { parameter: parameter.to_string(), value, stderr }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CsvTable<'a> {
    Spectrum(&'a Spectrum),
    Trajectory(&'a Trajectory),
    FieldMap(&'a FieldMap),
    Transitions(&'a [TransitionLine]),
    Fit(&'a [FitRow]),
}

fn num(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn render_csv(table: CsvTable<'_>) -> String {
    let mut s = String::new();
    match table {
        CsvTable::Spectrum(sp) => {
            s.push_str("freq_mhz,contrast\n");
            for (f, v) in sp.freqs_mhz.iter().zip(&sp.values) {
                let _ = writeln!(s, "{},{}", num(*f), num(*v));
            }
        }
        CsvTable::Trajectory(tr) => match &tr.populations {
            Some(pops) => {
                s.push_str("t_us,signal,p_3h,p_1h,p_m1h,p_m3h\n");
                for ((t, v), p) in tr.times.iter().zip(&tr.signal).zip(pops) {
                    let _ = writeln!(s, "{},{},{},{},{},{}", num(*t), num(*v), num(p[0]), num(p[1]), num(p[2]), num(p[3]));
                }
            }
            None => {
                s.push_str("t_us,signal\n");
                for (t, v) in tr.times.iter().zip(&tr.signal) {
                    let _ = writeln!(s, "{},{}", num(*t), num(*v));
                }
            }
        },
        CsvTable::FieldMap(map) => {
            s.push_str("b_mt,freq_mhz,contrast\n");
            for (b, row) in map.path.labels_mt.iter().zip(&map.contrast) {
                for (f, v) in map.freqs_mhz.iter().zip(row) {
                    let _ = writeln!(s, "{},{},{}", num(*b), num(*f), num(*v));
                }
            }
        }
        CsvTable::Transitions(lines) => {
            s.push_str("b_mt,freq_mhz,delta_ms,delta_p,label,overlap\n");
            for l in lines {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    num(l.b_mt),
                    num(l.freq_mhz),
                    l.delta_ms,
                    l.delta_p,
                    l.label,
                    num(l.overlap)
                );
            }
        }
        CsvTable::Fit(rows) => {
            s.push_str("parameter,value,stderr\n");
            for r in rows {
                let _ = writeln!(s, "{},{},{}", r.parameter, num(r.value), num(r.stderr));
            }
        }
    }
    s
}

pub fn write_csv(table: CsvTable<'_>, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(table)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Reads the first two numeric columns of a CSV file, skipping a header
/// row and blank lines.
pub fn read_xy(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let parsed = match (cols.next(), cols.next()) {
            (Some(a), Some(b)) => a.parse::<f64>().ok().zip(b.parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => out.push(p),
            None if i == 0 => {}
            None => {
                return Err(Error::invalid(format!("{}: line {} is not two numbers", path.display(), i + 1)));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_of_three_points() {
        let sp = Spectrum::new(vec![1.0, 2.0, 3.0], vec![0.0, 0.5, -0.25]).unwrap();
        let csv = render_csv(CsvTable::Spectrum(&sp));
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(csv.lines().nth(2).unwrap(), "2.00000000e0,5.00000000e-1");
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn trajectory_schema() {
        let tr = Trajectory::new(vec![0.0], vec![0.0], Some(vec![[0.0, 0.5, 0.5, 0.0]])).unwrap();
        let csv = render_csv(CsvTable::Trajectory(&tr));
        assert!(csv.starts_with("t_us,signal,p_3h,p_1h,p_m1h,p_m3h\n"));
    }

    #[test]
    fn nine_significant_digits_round_trip_closely() {
        let x = 1.0 / 3.0;
        let back: f64 = num(x).parse().unwrap();
        assert!((back - x).abs() < 1e-9);
    }

    #[test]
    fn xy_reader_skips_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "x,y\n1,2\n\n3,4e-1\n").unwrap();
        assert_eq!(read_xy(&p).unwrap(), vec![(1.0, 2.0), (3.0, 0.4)]);
        std::fs::write(&p, "x,y\n1,2\nfoo,bar\n").unwrap();
        assert!(read_xy(&p).is_err());
        assert!(matches!(read_xy(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }
}
