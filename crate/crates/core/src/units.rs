//! Validated physical quantities.
//!
//! Constructors reject non-finite values and enforce the sign constraint of
//! each quantity. Derived quantities that may legitimately be negative (TWPA
//! intrinsic noise, photon numbers) are plain `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planck constant, exact SI-2019 value (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, exact SI-2019 value (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

fn finite(quantity: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidValue {
            quantity,
            value,
            reason: "not finite",
        })
    }
}

/// Frequency in hertz, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Frequency(f64);

impl Frequency {
    pub fn new(hz: f64) -> Result<Self> {
        let hz = finite("frequency", hz)?;
        if hz <= 0.0 {
            return Err(Error::InvalidValue {
                quantity: "frequency",
                value: hz,
                reason: "must be > 0",
            });
        }
        Ok(Self(hz))
    }

    pub fn from_ghz(ghz: f64) -> Result<Self> {
        Self::new(ghz * 1e9)
    }

    pub fn hz(self) -> f64 {
        self.0
    }

    pub fn ghz(self) -> f64 {
        self.0 * 1e-9
    }

    pub fn angular(self) -> f64 {
        2.0 * std::f64::consts::PI * self.0
    }
}

impl TryFrom<f64> for Frequency {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Frequency> for f64 {
    fn from(f: Frequency) -> f64 {
        f.0
    }
}

/// Noise temperature in kelvin, non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseTemperature(f64);

impl NoiseTemperature {
    pub const ZERO: NoiseTemperature = NoiseTemperature(0.0);

    pub fn new(kelvin: f64) -> Result<Self> {
        let kelvin = finite("noise temperature", kelvin)?;
        if kelvin < 0.0 {
            return Err(Error::InvalidValue {
                quantity: "noise temperature",
                value: kelvin,
                reason: "must be >= 0",
            });
        }
        Ok(Self(kelvin))
    }

    pub fn kelvin(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NoiseTemperature {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<NoiseTemperature> for f64 {
    fn from(t: NoiseTemperature) -> f64 {
        t.0
    }
}

/// Dimensionless power gain, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LinearGain(f64);

impl LinearGain {
    pub const UNITY: LinearGain = LinearGain(1.0);

    pub fn new(ratio: f64) -> Result<Self> {
        let ratio = finite("linear gain", ratio)?;
        if ratio <= 0.0 {
            return Err(Error::InvalidValue {
                quantity: "linear gain",
                value: ratio,
                reason: "must be > 0",
            });
        }
        Ok(Self(ratio))
    }

    pub fn from_db(db: f64) -> Result<Self> {
        Self::new(10f64.powf(finite("gain (dB)", db)? / 10.0))
    }

    pub fn ratio(self) -> f64 {
        self.0
    }

    pub fn db(self) -> f64 {
        10.0 * self.0.log10()
    }
}

impl TryFrom<f64> for LinearGain {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LinearGain> for f64 {
    fn from(g: LinearGain) -> f64 {
        g.0
    }
}

/// A value with asymmetric one-sigma (or worst-case) error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub err_lo: f64,
    pub err_hi: f64,
}

impl Estimate {
    pub fn new(value: f64, err_lo: f64, err_hi: f64) -> Self {
        Self {
            value,
            err_lo,
            err_hi,
        }
    }

    pub fn symmetric(value: f64, err: f64) -> Self {
        Self::new(value, err, err)
    }

    /// Mean of the two sides.
    pub fn sigma(&self) -> f64 {
        0.5 * (self.err_lo + self.err_hi)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        if factor >= 0.0 {
            Self::new(
                self.value * factor,
                self.err_lo * factor,
                self.err_hi * factor,
            )
        } else {
            Self::new(
                self.value * factor,
                -self.err_hi * factor,
                -self.err_lo * factor,
            )
        }
    }
}

/// Display helper: power ratio to decibels.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

/// Display helper: decibels to power ratio.
pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
