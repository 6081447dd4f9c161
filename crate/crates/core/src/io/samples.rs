//! Noise-sample CSV.
//!
//! ```text
//! # schema: noise-samples/1
//! path,f_signal_hz,f_idler_hz,t_bath_k,t_bath_err_k,p_out_w,p_out_err_db,g_twpa_db,g_conv_db
//! thru,6.0000000000000000e9,,1.3500000000000001e-1,...
//! ```
//!
//! The schema comment is optional on input; a different major version is
//! rejected. Idler and gain columns may be empty on Thru rows.

use std::path::Path;

use crate::error::{Error, Result};
use crate::units::Frequency;
use crate::yfit::{NoiseSample, SignalPath};

use super::{fmt_f64, read_to_string, write_atomic};

pub const HEADER: [&str; 9] = [
    "path",
    "f_signal_hz",
    "f_idler_hz",
    "t_bath_k",
    "t_bath_err_k",
    "p_out_w",
    "p_out_err_db",
    "g_twpa_db",
    "g_conv_db",
];
pub const SCHEMA_NAME: &str = "noise-samples";
pub const SCHEMA_MAJOR: u32 = 1;
/// Bath readings at or above this are taken as a unit mistake (mK vs K).
pub const MAX_BATH_K: f64 = 400.0;

fn schema_line() -> String {
    format!("# schema: {SCHEMA_NAME}/{SCHEMA_MAJOR}")
}

/// Serialize samples, schema comment first.
pub fn format_noise_csv(samples: &[NoiseSample]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let mut out = String::with_capacity(64 + samples.len() * 200);
    out.push_str(&schema_line());
    out.push('\n');
    out.push_str(&HEADER.join(","));
    out.push('\n');
    for s in samples {
        let row = [
            s.path.as_str().to_string(),
            fmt_f64(s.f_signal.hz()),
            opt(s.f_idler.map(Frequency::hz)),
            fmt_f64(s.t_bath),
            fmt_f64(s.t_bath_err),
            fmt_f64(s.p_out),
            fmt_f64(s.p_out_err_db),
            opt(s.g_twpa_db),
            opt(s.g_conv_db),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_noise_csv(samples: &[NoiseSample], path: &Path) -> Result<()> {
    write_atomic(path, format_noise_csv(samples).as_bytes())
}

pub fn read_noise_csv(path: &Path) -> Result<Vec<NoiseSample>> {
    parse_noise_csv(&read_to_string(path)?, &path.display().to_string())
}

fn check_schema(line: &str, source: &str) -> Result<()> {
    let Some(rest) = line.trim().strip_prefix('#') else {
        return Ok(());
    };
    let Some(tag) = rest.trim().strip_prefix("schema:") else {
        return Ok(());
    };
    let tag = tag.trim();
    let major = tag
        .strip_prefix(SCHEMA_NAME)
        .and_then(|v| v.strip_prefix('/'))
        .and_then(|v| v.split('.').next())
        .and_then(|v| v.parse::<u32>().ok());
    match major {
        Some(SCHEMA_MAJOR) => Ok(()),
        _ => Err(Error::SchemaVersion {
            found: format!("{tag} in {source}"),
            expected: SCHEMA_MAJOR,
        }),
    }
}

/// Parse CSV text; `source` names the input in error messages.
pub fn parse_noise_csv(text: &str, source: &str) -> Result<Vec<NoiseSample>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    // leading comment lines: schema tag and free-form notes
    let mut body_start = 0;
    let mut skipped = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with('#') {
            check_schema(line, source)?;
            body_start += line.len();
            skipped += 1;
        } else {
            break;
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(&text.as_bytes()[body_start..]);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(skipped + 1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(
            skipped + 1,
            format!("header must be exactly: {}", HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize + skipped);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize) + skipped;
        let sample = parse_row(&record).map_err(|m| parse_err(line, m))?;
        out.push(sample);
    }
    Ok(out)
}

fn parse_row(r: &csv::StringRecord) -> std::result::Result<NoiseSample, String> {
    let field = |i: usize| r.get(i).unwrap_or("");
    let number = |i: usize| -> std::result::Result<f64, String> {
        let raw = field(i);
        let v: f64 = raw
            .parse()
            .map_err(|_| format!("column {}: '{raw}' is not a number", HEADER[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("column {}: value must be finite", HEADER[i]))
        }
    };
    let optional = |i: usize| -> std::result::Result<Option<f64>, String> {
        if field(i).is_empty() {
            Ok(None)
        } else {
            number(i).map(Some)
        }
    };
    let freq =
        |v: f64, i: usize| Frequency::new(v).map_err(|e| format!("column {}: {e}", HEADER[i]));

    let path: SignalPath = field(0).parse().map_err(|e: Error| e.to_string())?;
    let f_signal = freq(number(1)?, 1)?;
    let f_idler = optional(2)?.map(|v| freq(v, 2)).transpose()?;
    let t_bath = number(3)?;
    if t_bath >= MAX_BATH_K {
        return Err(format!(
            "column t_bath_k: {t_bath} K is implausible (>= {MAX_BATH_K} K); values must be in kelvin"
        ));
    }
    let sample = NoiseSample {
        path,
        f_signal,
        f_idler,
        t_bath,
        t_bath_err: number(4)?,
        p_out: number(5)?,
        p_out_err_db: number(6)?,
        g_twpa_db: optional(7)?,
        g_conv_db: optional(8)?,
    };
    if path == SignalPath::Twpa {
        for (i, v) in [
            (2, sample.f_idler.is_some()),
            (7, sample.g_twpa_db.is_some()),
            (8, sample.g_conv_db.is_some()),
        ] {
            if !v {
                return Err(format!("column {} is required on twpa rows", HEADER[i]));
            }
        }
    }
    sample.validate().map_err(|e| e.to_string())?;
    Ok(sample)
}
