//! Two-port Touchstone (v1) subset: `S` parameters in `RI` or `DB` format,
//! frequency units `HZ`, `KHZ`, `MHZ` or `GHZ`, `!` comments, data rows
//! `f S11 S21 S12 S22` on one line.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::to_db;

use super::{fmt_f64, read_to_string, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    /// Real / imaginary.
    Ri,
    /// Magnitude in dB / angle in degrees.
    Db,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SParamPoint {
    pub f_hz: f64,
    /// `s[i][j]` is S_(i+1)(j+1).
    pub s: [[Complex64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SParamTable {
    pub z0_ohm: f64,
    pub points: Vec<SParamPoint>,
}

impl SParamTable {
    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| !(w[1].f_hz > w[0].f_hz)) {
            return Err(Error::InvalidInput(
                "S-parameter frequencies must be strictly increasing".into(),
            ));
        }
        let finite = self.points.iter().all(|p| {
            p.f_hz.is_finite()
                && p.s
                    .iter()
                    .flatten()
                    .all(|c| c.re.is_finite() && c.im.is_finite())
        });
        if !finite {
            return Err(Error::InvalidInput("non-finite S-parameter entry".into()));
        }
        Ok(())
    }
}

struct Options {
    scale: f64,
    format: DataFormat,
    z0: f64,
}

fn unsupported(detail: impl Into<String>) -> Error {
    Error::Unsupported {
        what: "touchstone option",
        detail: detail.into(),
    }
}

fn parse_options(line: &str) -> Result<Options> {
    let mut opts = Options {
        scale: 1e9,
        format: DataFormat::Ri,
        z0: 50.0,
    };
    // Touchstone defaults are GHZ S MA R 50; MA is outside the subset, so the
    // format token is required.
    let mut saw_format = false;
    let mut tokens = line.trim_start_matches('#').split_whitespace();
    while let Some(tok) = tokens.next() {
        match tok.to_ascii_uppercase().as_str() {
            "HZ" => opts.scale = 1.0,
            "KHZ" => opts.scale = 1e3,
            "MHZ" => opts.scale = 1e6,
            "GHZ" => opts.scale = 1e9,
            "S" => {}
            "RI" => {
                opts.format = DataFormat::Ri;
                saw_format = true;
            }
            "DB" => {
                opts.format = DataFormat::Db;
                saw_format = true;
            }
            "R" => {
                let z = tokens
                    .next()
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|z| *z > 0.0)
                    .ok_or_else(|| unsupported("R must be followed by a positive impedance"))?;
                opts.z0 = z;
            }
            "MA" => return Err(unsupported("data format MA (only RI and DB)")),
            p @ ("Y" | "Z" | "H" | "G") => {
                return Err(unsupported(format!("parameter type {p} (only S)")))
            }
            other => return Err(unsupported(format!("token '{other}'"))),
        }
    }
    if !saw_format {
        return Err(unsupported("missing data format (RI or DB required)"));
    }
    Ok(opts)
}

fn pair(format: DataFormat, a: f64, b: f64) -> Complex64 {
    match format {
        DataFormat::Ri => Complex64::new(a, b),
        DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
    }
}

pub fn parse_touchstone(text: &str, source: &str) -> Result<SParamTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut opts: Option<Options> = None;
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('!').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if opts.is_some() {
                return Err(err(line_no, "second option line".into()));
            }
            opts = Some(parse_options(line).map_err(|e| err(line_no, e.to_string()))?);
            continue;
        }
        let o = opts
            .as_ref()
            .ok_or_else(|| err(line_no, "data before the option line".into()))?;
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(line_no, format!("non-numeric token in '{line}'")))?;
        if nums.len() != 9 {
            return Err(err(
                line_no,
                format!("expected 9 values for a 2-port row, found {}", nums.len()),
            ));
        }
        let c = |k: usize| pair(o.format, nums[1 + 2 * k], nums[2 + 2 * k]);
        points.push(SParamPoint {
            f_hz: nums[0] * o.scale,
            s: [[c(0), c(2)], [c(1), c(3)]],
        });
    }
    let o = opts.ok_or_else(|| err(0, "no option line".into()))?;
    let table = SParamTable {
        z0_ohm: o.z0,
        points,
    };
    table.validate()?;
    Ok(table)
}

pub fn read_touchstone_subset(path: &Path) -> Result<SParamTable> {
    parse_touchstone(&read_to_string(path)?, &path.display().to_string())
}

/// Serialize with frequencies in hertz.
pub fn format_touchstone(table: &SParamTable, format: DataFormat) -> String {
    let tag = match format {
        DataFormat::Ri => "RI",
        DataFormat::Db => "DB",
    };
    let mut out = format!("! 2-port S-parameters\n# HZ S {tag} R {}\n", table.z0_ohm);
    for p in &table.points {
        let mut row = vec![fmt_f64(p.f_hz)];
        for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let c = p.s[i][j];
            let (a, b) = match format {
                DataFormat::Ri => (c.re, c.im),
                DataFormat::Db => (20.0 * c.norm().log10(), c.arg().to_degrees()),
            };
            row.push(fmt_f64(a));
            row.push(fmt_f64(b));
        }
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_touchstone(table: &SParamTable, format: DataFormat, path: &Path) -> Result<()> {
    write_atomic(path, format_touchstone(table, format).as_bytes())
}

/// Flatness and match summary of a (nominally flat) attenuator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttenuationReport {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub n_points: usize,
    /// Mean of `-20 log10 |S21|`.
    pub attenuation_mean_db: f64,
    pub attenuation_min_db: f64,
    pub attenuation_max_db: f64,
    /// Peak-to-peak attenuation variation.
    pub flatness_db: f64,
    pub s11_max_db: f64,
    pub s22_max_db: f64,
    /// Both reflections stay below -20 dB.
    pub matched: bool,
}

pub fn attenuation_report(table: &SParamTable) -> Result<AttenuationReport> {
    if table.points.is_empty() {
        return Err(Error::InvalidInput("empty S-parameter table".into()));
    }
    let att: Vec<f64> = table
        .points
        .iter()
        .map(|p| -to_db(p.s[1][0].norm_sqr()))
        .collect();
    let max_db = |i: usize| {
        table
            .points
            .iter()
            .map(|p| to_db(p.s[i][i].norm_sqr()))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let lo = att.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = att.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (s11, s22) = (max_db(0), max_db(1));
    Ok(AttenuationReport {
        f_min_hz: table.points[0].f_hz,
        f_max_hz: table.points[table.points.len() - 1].f_hz,
        n_points: att.len(),
        attenuation_mean_db: att.iter().sum::<f64>() / att.len() as f64,
        attenuation_min_db: lo,
        attenuation_max_db: hi,
        flatness_db: hi - lo,
        s11_max_db: s11,
        s22_max_db: s22,
        matched: s11 < -20.0 && s22 < -20.0,
    })
}
