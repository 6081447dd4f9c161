//! Versioned JSON documents, run configuration and numeric CSV tables.
//!
//! Every JSON output is wrapped in a [`Document`]:
//!
//! ```json
//! { "schema": "cryonoise.fit.v1", "meta": { ... }, "data": { ... } }
//! ```
//!
//! `meta` records the invocation, the resolved configuration and the seed so
//! the run can be replayed.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisecalc::ChainConfig;
use crate::thermal::{DecayCurve, ThermalConfig};
use crate::twpa::{GainSweepPoint, PumpSetting, TwpaParams};
use crate::vlab::{CampaignPlan, InstrumentErrors};
use crate::yfit::LossBounds;

use super::{fmt_f64, read_to_string, write_atomic};

pub const SCHEMA_PREFIX: &str = "cryonoise";
pub const SCHEMA_MAJOR: u32 = 1;

pub fn schema_tag(kind: &str) -> String {
    format!("{SCHEMA_PREFIX}.{kind}.v{SCHEMA_MAJOR}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    /// Command line that produced the document.
    pub invocation: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(invocation: Vec<String>) -> Self {
        Self {
            tool: SCHEMA_PREFIX.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation,
            config: None,
            seed: None,
        }
    }

    pub fn with_config<C: Serialize>(mut self, config: &C) -> Result<Self> {
        self.config = Some(serde_json::to_value(config)?);
        Ok(self)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub schema: String,
    pub meta: Meta,
    pub data: T,
}

impl<T> Document<T> {
    pub fn new(kind: &str, meta: Meta, data: T) -> Self {
        Self {
            schema: schema_tag(kind),
            meta,
            data,
        }
    }
}

/// Check a `cryonoise.<kind>.v<major>` tag.
pub fn check_schema(tag: &str, kind: &str) -> Result<()> {
    let mismatch = || Error::SchemaVersion {
        found: tag.to_string(),
        expected: SCHEMA_MAJOR,
    };
    let rest = tag
        .strip_prefix(SCHEMA_PREFIX)
        .and_then(|r| r.strip_prefix('.'))
        .and_then(|r| r.strip_prefix(kind))
        .and_then(|r| r.strip_prefix(".v"))
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "schema '{tag}' is not a {kind} document (expected {})",
                schema_tag(kind)
            ))
        })?;
    let major: u32 = rest
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .ok_or_else(mismatch)?;
    if major == SCHEMA_MAJOR {
        Ok(())
    } else {
        Err(mismatch())
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn format_document<T: Serialize>(doc: &Document<T>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_document<T: DeserializeOwned>(text: &str, kind: &str) -> Result<Document<T>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let tag = value
        .get("schema")
        .and_then(|s| s.as_str())
        .ok_or_else(|| Error::InvalidInput("document has no 'schema' string".into()))?;
    check_schema(tag, kind)?;
    Ok(serde_json::from_value(value)?)
}

pub fn write_document<T: Serialize>(doc: &Document<T>, path: &Path) -> Result<()> {
    write_atomic(path, format_document(doc)?.as_bytes())
}

pub fn read_document<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Document<T>> {
    parse_document(&read_to_string(path)?, kind)
}

/// Everything a command may need; each command checks for its own sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub chain: ChainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twpa: Option<TwpaParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump: Option<PumpSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<CampaignPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<InstrumentErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<LossBounds>,
}

fn missing(section: &str) -> Error {
    Error::InvalidInput(format!(
        "config section '{section}' is required for this command"
    ))
}

impl RunConfig {
    pub fn new(chain: ChainConfig) -> Self {
        Self {
            schema: Some(schema_tag("config")),
            chain,
            twpa: None,
            pump: None,
            thermal: None,
            plan: None,
            errors: None,
            bounds: None,
        }
    }

    /// Validate every section that is present.
    pub fn validate(&self) -> Result<()> {
        if let Some(tag) = &self.schema {
            check_schema(tag, "config")?;
        }
        self.chain.validate()?;
        if let Some(t) = &self.twpa {
            t.validate()?;
        }
        if let Some(t) = &self.thermal {
            t.validate()?;
        }
        if let Some(p) = &self.plan {
            p.validate()?;
        }
        Ok(())
    }

    pub fn twpa(&self) -> Result<&TwpaParams> {
        self.twpa.as_ref().ok_or_else(|| missing("twpa"))
    }

    pub fn pump(&self) -> Result<&PumpSetting> {
        self.pump.as_ref().ok_or_else(|| missing("pump"))
    }

    pub fn thermal(&self) -> Result<&ThermalConfig> {
        self.thermal.as_ref().ok_or_else(|| missing("thermal"))
    }

    pub fn plan(&self) -> Result<&CampaignPlan> {
        self.plan.as_ref().ok_or_else(|| missing("plan"))
    }
}

pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_run_config(path: &Path) -> Result<RunConfig> {
    parse_run_config(&read_to_string(path)?)
}

/// A plot-ready numeric CSV table with a schema comment and fixed header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableSchema {
    pub name: &'static str,
    pub major: u32,
    pub header: &'static [&'static str],
}

pub const SWEEP_TABLE: TableSchema = TableSchema {
    name: "twpa-sweep",
    major: 1,
    header: &["f_hz", "gain_db", "loss_db", "conv_gain_db"],
};

pub const DECAY_TABLE: TableSchema = TableSchema {
    name: "thermal-decay",
    major: 1,
    header: &["time_s", "temperature_k"],
};

impl TableSchema {
    pub fn format(&self, rows: &[Vec<f64>]) -> String {
        let mut out = format!(
            "# schema: {}/{}\n{}\n",
            self.name,
            self.major,
            self.header.join(",")
        );
        for row in rows {
            let cells: Vec<String> = row.iter().copied().map(fmt_f64).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Parse rows. Non-finite cells are allowed (a pump-off conversion gain
    /// is `-inf` dB); everything else must be a number.
    pub fn parse(&self, text: &str, source: &str) -> Result<Vec<Vec<f64>>> {
        let err = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix("schema:") {
                    self.check(tag.trim())?;
                }
                continue;
            }
            if !seen_header {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                if cols != self.header {
                    return Err(err(
                        i + 1,
                        format!("header must be exactly: {}", self.header.join(",")),
                    ));
                }
                seen_header = true;
                continue;
            }
            let row = line
                .split(',')
                .enumerate()
                .map(|(j, cell)| {
                    let cell = cell.trim();
                    let name = self.header.get(j).copied().unwrap_or("?");
                    cell.parse::<f64>()
                        .ok()
                        .filter(|v| !v.is_nan())
                        .ok_or_else(|| {
                            err(i + 1, format!("column {name}: '{cell}' is not a number"))
                        })
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != self.header.len() {
                return Err(err(
                    i + 1,
                    format!(
                        "expected {} columns, found {}",
                        self.header.len(),
                        row.len()
                    ),
                ));
            }
            rows.push(row);
        }
        if !seen_header {
            return Err(err(0, "missing header".into()));
        }
        Ok(rows)
    }

    fn check(&self, tag: &str) -> Result<()> {
        let major = tag
            .strip_prefix(self.name)
            .and_then(|v| v.strip_prefix('/'))
            .and_then(|v| v.split('.').next())
            .and_then(|v| v.parse::<u32>().ok());
        if major == Some(self.major) {
            Ok(())
        } else {
            Err(Error::SchemaVersion {
                found: tag.to_string(),
                expected: self.major,
            })
        }
    }
}

pub fn format_sweep_csv(points: &[GainSweepPoint]) -> String {
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![p.f_hz, p.gain_db, p.loss_db, p.conv_gain_db])
        .collect();
    SWEEP_TABLE.format(&rows)
}

pub fn parse_sweep_csv(text: &str, source: &str) -> Result<Vec<GainSweepPoint>> {
    Ok(SWEEP_TABLE
        .parse(text, source)?
        .into_iter()
        .map(|r| GainSweepPoint {
            f_hz: r[0],
            gain_db: r[1],
            loss_db: r[2],
            conv_gain_db: r[3],
        })
        .collect())
}

pub fn write_sweep_csv(points: &[GainSweepPoint], path: &Path) -> Result<()> {
    write_atomic(path, format_sweep_csv(points).as_bytes())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<GainSweepPoint>> {
    parse_sweep_csv(&read_to_string(path)?, &path.display().to_string())
}

pub fn format_decay_csv(curve: &DecayCurve) -> String {
    let rows: Vec<Vec<f64>> = curve.samples.iter().map(|&(t, k)| vec![t, k]).collect();
    DECAY_TABLE.format(&rows)
}

pub fn parse_decay_csv(text: &str, source: &str) -> Result<DecayCurve> {
    let rows = DECAY_TABLE.parse(text, source)?;
    DecayCurve::new(rows.into_iter().map(|r| (r[0], r[1])).collect())
}

pub fn write_decay_csv(curve: &DecayCurve, path: &Path) -> Result<()> {
    write_atomic(path, format_decay_csv(curve).as_bytes())
}

pub fn read_decay_csv(path: &Path) -> Result<DecayCurve> {
    parse_decay_csv(&read_to_string(path)?, &path.display().to_string())
}
