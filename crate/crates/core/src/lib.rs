//! Cryogenic amplifier noise toolkit.
//!
//! The crate covers the whole chain of a temperature-variable noise-source
//! experiment:
//!
//! * [`noisecalc`]: quantum-corrected input noise, idler accounting, forward
//!   system-noise models, photon numbers and the one-photon limit.
//! * [`yfit`]: errors-in-variables Y-factor fits, insertion-loss correction
//!   and the asymmetric error budget.
//! * [`twpa`]: junction-line dispersion, stiff-pump coupled-mode integration
//!   and Fabry-Perot dressing of a Josephson TWPA.
//! * [`thermal`]: weak-link conduction, heater power, time constants and
//!   decay curves of the noise source body.
//! * [`vlab`]: seeded synthetic measurement campaigns with known truth.
//! * [`io`]: CSV/JSON/Touchstone file formats and run configuration.

pub mod error;
pub mod io;
pub mod noisecalc;
pub mod ode;
pub mod thermal;
pub mod twpa;
pub mod units;
pub mod vlab;
pub mod yfit;

pub use error::{Error, Result};
pub use units::{Estimate, Frequency, LinearGain, NoiseTemperature, BOLTZMANN, PLANCK};
