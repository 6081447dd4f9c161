//! Thermal model of the heated noise-source body.
//!
//! Two weak-link channels (steel screws and alumina bead stacks) carry heat to
//! the flange. Each has a power-law conductivity `kappa(T) = a T^n` whose
//! prefactor is fixed by a conductivity integral over an anchor interval.
//! Radiation is neglected.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Integrator, Tolerances};

/// One weak-link channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    pub count: u32,
    /// Cross-section over length of one element, m.
    pub area_over_length_m: f64,
    /// Conductivity integral over the anchor interval, W/m.
    pub anchor_integral_w_per_m: f64,
    pub exponent: f64,
}

impl Conductor {
    /// Total shape factor of the channel, m.
    pub fn shape_factor(&self) -> f64 {
        f64::from(self.count) * self.area_over_length_m
    }

    /// Prefactor `a` of `kappa = a T^n`, W/(m K^(n+1)).
    pub fn prefactor(&self, anchor: &AnchorInterval) -> f64 {
        let m = self.exponent + 1.0;
        self.anchor_integral_w_per_m * m / (anchor.t_hot.powf(m) - anchor.t_cold.powf(m))
    }

    /// Heat flow between `t_hot` and `t_cold`, W.
    pub fn power(&self, anchor: &AnchorInterval, t_hot: f64, t_cold: f64) -> f64 {
        let m = self.exponent + 1.0;
        self.shape_factor() * self.prefactor(anchor) * (t_hot.powf(m) - t_cold.powf(m)) / m
    }

    /// `dP/dT_hot`, W/K.
    pub fn conductance(&self, anchor: &AnchorInterval, t: f64) -> f64 {
        self.shape_factor() * self.prefactor(anchor) * t.powf(self.exponent)
    }

    fn validate(&self, name: &'static str) -> Result<()> {
        let ok = self.count > 0
            && self.area_over_length_m > 0.0
            && self.anchor_integral_w_per_m > 0.0
            && self.exponent > -1.0
            && [
                self.area_over_length_m,
                self.anchor_integral_w_per_m,
                self.exponent,
            ]
            .iter()
            .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid {name} conductor parameters"
            )))
        }
    }
}

/// Temperatures at which the conductivity integrals are quoted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorInterval {
    pub t_hot: f64,
    pub t_cold: f64,
}

/// `C(T) = m (gamma T + beta T^3) + tail / T^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatCapacity {
    /// Electronic term, J/(kg K^2).
    pub gamma: f64,
    /// Lattice term, J/(kg K^4).
    pub beta: f64,
    /// Low-temperature addenda, J K.
    #[serde(default)]
    pub tail: f64,
}

/// Electronic specific heat of copper, J/(kg K^2).
pub const COPPER_GAMMA: f64 = 0.695e-3 / 0.063_546;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    pub mass_cu_kg: f64,
    pub screws: Conductor,
    pub beads: Conductor,
    pub anchor: AnchorInterval,
    pub heat_capacity: HeatCapacity,
}

const STEEL_ANCHOR_W_PER_M: f64 = 7.2e-4 * 100.0;
const ALOX_ANCHOR_W_PER_M: f64 = 7.8e-5 * 100.0;
const NOMINAL_LINK_POWER_W: f64 = 100e-6;

impl ThermalConfig {
    /// Noise-source body with effective shape factors chosen so that the
    /// anchor interval (1 K to 0.1 K) carries 100 uW, and a heat capacity
    /// calibrated to 600 s at 0.1 K and 10 s at 5 K.
    pub fn nominal() -> Self {
        let shape = NOMINAL_LINK_POWER_W / (STEEL_ANCHOR_W_PER_M + ALOX_ANCHOR_W_PER_M);
        let mut cfg = Self {
            mass_cu_kg: 0.45,
            screws: Conductor {
                count: 3,
                area_over_length_m: shape / 3.0,
                anchor_integral_w_per_m: STEEL_ANCHOR_W_PER_M,
                exponent: 1.2,
            },
            beads: Conductor {
                count: 3,
                area_over_length_m: shape / 3.0,
                anchor_integral_w_per_m: ALOX_ANCHOR_W_PER_M,
                exponent: 2.7,
            },
            anchor: AnchorInterval {
                t_hot: 1.0,
                t_cold: 0.1,
            },
            heat_capacity: HeatCapacity {
                gamma: COPPER_GAMMA,
                beta: 0.0,
                tail: 0.0,
            },
        };
        cfg.heat_capacity = calibrate_heat_capacity(&cfg, COPPER_GAMMA, (0.1, 600.0), (5.0, 10.0))
            .expect("nominal calibration is well posed");
        cfg
    }

    /// Same body with shape factors from the raw hardware: three M3 screws
    /// (5.03 mm^2 stress area, 50 mm long) and three 3.9 mm bead stacks.
    pub fn geometric() -> Self {
        let mut cfg = Self::nominal();
        cfg.screws.area_over_length_m = 5.03e-6 / 0.05;
        cfg.beads.area_over_length_m = 3.9e-3;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.screws.validate("screw")?;
        self.beads.validate("bead")?;
        let hc = &self.heat_capacity;
        let ok = self.mass_cu_kg > 0.0
            && self.anchor.t_hot > self.anchor.t_cold
            && self.anchor.t_cold >= 0.0
            && hc.gamma >= 0.0
            && hc.beta >= 0.0
            && hc.tail >= 0.0
            && hc.gamma + hc.beta + hc.tail > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("invalid thermal configuration".into()))
        }
    }
}

fn check_temperature(name: &'static str, t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidValue {
            quantity: name,
            value: t,
            reason: "must be > 0",
        })
    }
}

fn check_order(t_hot: f64, t_cold: f64) -> Result<()> {
    check_temperature("cold-side temperature", t_cold)?;
    check_temperature("hot-side temperature", t_hot)?;
    if t_hot < t_cold {
        return Err(Error::InvalidInput(format!(
            "hot side {t_hot} K is below cold side {t_cold} K"
        )));
    }
    Ok(())
}

fn link_power(cfg: &ThermalConfig, t_hot: f64, t_cold: f64) -> f64 {
    cfg.screws.power(&cfg.anchor, t_hot, t_cold) + cfg.beads.power(&cfg.anchor, t_hot, t_cold)
}

/// Heat flow through both weak-link channels, W.
pub fn weak_link_power(cfg: &ThermalConfig, t_hot: f64, t_cold: f64) -> Result<f64> {
    check_order(t_hot, t_cold)?;
    Ok(link_power(cfg, t_hot, t_cold))
}

/// Steady-state heater power holding the body at `t_set`.
pub fn heater_power_for_setpoint(cfg: &ThermalConfig, t_set: f64, t_flange: f64) -> Result<f64> {
    weak_link_power(cfg, t_set, t_flange)
}

/// Total weak-link conductance at body temperature `t`, W/K.
pub fn conductance(cfg: &ThermalConfig, t: f64) -> f64 {
    cfg.screws.conductance(&cfg.anchor, t) + cfg.beads.conductance(&cfg.anchor, t)
}

/// Fraction of the conductance carried by the alumina beads at `t`.
pub fn bead_share(cfg: &ThermalConfig, t: f64) -> f64 {
    cfg.beads.conductance(&cfg.anchor, t) / conductance(cfg, t)
}

/// Temperature where both channels conduct equally, K.
pub fn crossover_temperature(cfg: &ThermalConfig) -> f64 {
    let s = cfg.screws.shape_factor() * cfg.screws.prefactor(&cfg.anchor);
    let b = cfg.beads.shape_factor() * cfg.beads.prefactor(&cfg.anchor);
    (s / b).powf(1.0 / (cfg.beads.exponent - cfg.screws.exponent))
}

/// Heat capacity of the body, J/K.
pub fn heat_capacity(cfg: &ThermalConfig, t: f64) -> f64 {
    let hc = &cfg.heat_capacity;
    cfg.mass_cu_kg * (hc.gamma * t + hc.beta * t.powi(3)) + hc.tail / (t * t)
}

/// `C(T) / G(T)`, s.
pub fn time_constant(cfg: &ThermalConfig, t: f64) -> Result<f64> {
    check_temperature("temperature", t)?;
    Ok(heat_capacity(cfg, t) / conductance(cfg, t))
}

/// Solve for the lattice and tail coefficients so that `tau(cold.0) = cold.1`
/// and `tau(hot.0) = hot.1` with the electronic term held at `gamma`.
pub fn calibrate_heat_capacity(
    cfg: &ThermalConfig,
    gamma: f64,
    cold: (f64, f64),
    hot: (f64, f64),
) -> Result<HeatCapacity> {
    let m = cfg.mass_cu_kg;
    let row = |t: f64, tau: f64| {
        (
            m * t.powi(3),
            1.0 / (t * t),
            tau * conductance(cfg, t) - m * gamma * t,
        )
    };
    let (a11, a12, b1) = row(cold.0, cold.1);
    let (a21, a22, b2) = row(hot.0, hot.1);
    let det = a11 * a22 - a12 * a21;
    if det.abs() < f64::EPSILON * (a11 * a22).abs() {
        return Err(Error::SingularFit);
    }
    let beta = (b1 * a22 - a12 * b2) / det;
    let tail = (a11 * b2 - a21 * b1) / det;
    if beta < 0.0 || tail < 0.0 {
        return Err(Error::InvalidInput(format!(
            "time constants unreachable with gamma = {gamma}: beta = {beta}, tail = {tail}"
        )));
    }
    Ok(HeatCapacity { gamma, beta, tail })
}

/// Equilibrium body temperature for a constant `heater` power.
pub fn steady_state_temperature(cfg: &ThermalConfig, heater: f64, t_flange: f64) -> Result<f64> {
    check_temperature("flange temperature", t_flange)?;
    if !(heater >= 0.0 && heater.is_finite()) {
        return Err(Error::InvalidValue {
            quantity: "heater power",
            value: heater,
            reason: "must be >= 0",
        });
    }
    if heater == 0.0 {
        return Ok(t_flange);
    }
    let mut hi = 2.0 * t_flange;
    while link_power(cfg, hi, t_flange) < heater {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoConvergence(0));
        }
    }
    let mut lo = t_flange;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if link_power(cfg, mid, t_flange) < heater {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Temperature time series, s and K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub samples: Vec<(f64, f64)>,
}

impl DecayCurve {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidInput(
                "decay times must be strictly increasing".into(),
            ));
        }
        if samples
            .iter()
            .any(|&(t, temp)| !t.is_finite() || !(temp > 0.0))
        {
            return Err(Error::InvalidInput(
                "decay temperatures must be positive".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn last_temperature(&self) -> Option<f64> {
        self.samples.last().map(|s| s.1)
    }
}

/// Integrate `C(T) dT/dt = heater - P(T, t_flange)` and sample every `dt`.
pub fn simulate_decay(
    cfg: &ThermalConfig,
    t_start: f64,
    t_flange: f64,
    heater: f64,
    duration: f64,
    dt: f64,
) -> Result<DecayCurve> {
    cfg.validate()?;
    check_order(t_start.max(t_flange), t_flange)?;
    check_temperature("start temperature", t_start)?;
    if !(dt > 0.0 && duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidInput("need dt > 0 and duration >= 0".into()));
    }
    let rhs = |_: f64, t: &f64| {
        // the weak link conducts in both directions
        let t_body = t.max(1e-9);
        let flow = if t_body >= t_flange {
            link_power(cfg, t_body, t_flange)
        } else {
            -link_power(cfg, t_flange, t_body)
        };
        (heater - flow) / heat_capacity(cfg, t_body)
    };
    let tol = Tolerances {
        rtol: 1e-10,
        atol: 1e-12,
        h_min: 1e-9 * dt,
        max_steps: 10_000_000,
    };
    let mut it = Integrator::new(rhs, 0.0, t_start, dt, tol);
    let n = (duration / dt).round() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    samples.push((0.0, t_start));
    for i in 1..=n {
        let t = i as f64 * dt;
        let temp = it.advance_to(t)?;
        samples.push((t, temp));
    }
    DecayCurve::new(samples)
}

/// Fitted `T(t) = t_inf + delta_t exp(-t / tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub tau: f64,
    pub tau_err: f64,
    pub t_inf: f64,
    pub delta_t: f64,
    pub rms_residual: f64,
}

pub const MIN_DECAY_SAMPLES: usize = 5;

fn linear_part(samples: &[(f64, f64)], t0: f64, tau: f64) -> (f64, f64, f64) {
    // least squares on the basis (1, exp(-(t - t0)/tau))
    let (mut s1, mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y) in samples {
        let e = (-(t - t0) / tau).exp();
        s1 += 1.0;
        se += e;
        see += e * e;
        sy += y;
        sey += e * y;
    }
    let det = s1 * see - se * se;
    if det.abs() <= 1e-300 {
        return (sy / s1, 0.0, f64::INFINITY);
    }
    let c = (see * sy - se * sey) / det;
    let d = (s1 * sey - se * sy) / det;
    let rss = samples
        .iter()
        .map(|&(t, y)| (y - c - d * (-(t - t0) / tau).exp()).powi(2))
        .sum();
    (c, d, rss)
}

/// Least-squares exponential fit with covariance-based `tau` error.
pub fn fit_exponential_decay(curve: &DecayCurve) -> Result<DecayFit> {
    let s = &curve.samples;
    if s.len() < MIN_DECAY_SAMPLES {
        return Err(Error::TooFewPoints {
            needed: MIN_DECAY_SAMPLES,
            got: s.len(),
        });
    }
    let t0 = s[0].0;
    let span = s[s.len() - 1].0 - t0;
    let (lo_t, hi_t) = s
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            (a.min(p.1), b.max(p.1))
        });
    if !(hi_t > lo_t) {
        return Err(Error::DecayFit("flat temperature record".into()));
    }

    // coarse scan in log(tau), then golden section inside the best bracket
    let (ln_min, ln_max) = ((span / 1000.0).ln(), (span * 100.0).ln());
    const SCAN: usize = 120;
    let rss_at = |ln_tau: f64| linear_part(s, t0, ln_tau.exp()).2;
    let grid: Vec<f64> = (0..=SCAN)
        .map(|i| ln_min + (ln_max - ln_min) * i as f64 / SCAN as f64)
        .collect();
    let best = (0..=SCAN)
        .min_by(|&a, &b| rss_at(grid[a]).total_cmp(&rss_at(grid[b])))
        .expect("non-empty grid");
    if best == SCAN {
        return Err(Error::DecayFit(
            "no decay within 100x the record length".into(),
        ));
    }
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(SCAN)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (rss_at(x1), rss_at(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = rss_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = rss_at(x2);
        }
    }
    let mut tau = (0.5 * (a + b)).exp();
    let (mut c, mut d, _) = linear_part(s, t0, tau);

    // Gauss-Newton polish on (t_inf, delta_t, tau)
    let jac = |c_: f64, d_: f64, tau_: f64| {
        let _ = c_;
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        let mut rss = 0.0;
        for &(t, y) in s {
            let dtm = t - t0;
            let e = (-dtm / tau_).exp();
            let r = y - c_ - d_ * e;
            let j = Vector3::new(1.0, e, d_ * e * dtm / (tau_ * tau_));
            jtj += j * j.transpose();
            jtr += j * r;
            rss += r * r;
        }
        (jtj, jtr, rss)
    };
    for _ in 0..20 {
        let (jtj, jtr, rss) = jac(c, d, tau);
        let Some(inv) = jtj.try_inverse() else { break };
        let step = inv * jtr;
        let (nc, nd, nt) = (c + step[0], d + step[1], tau + step[2]);
        if !(nt > 0.0) || jac(nc, nd, nt).2 > rss {
            break;
        }
        let done = (step[2] / tau).abs() < 1e-14;
        c = nc;
        d = nd;
        tau = nt;
        if done {
            break;
        }
    }

    let (jtj, _, rss) = jac(c, d, tau);
    let dof = (s.len() - 3) as f64;
    let s2 = rss / dof;
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::DecayFit("singular fit covariance".into()))?
        * s2;
    let rms = (rss / s.len() as f64).sqrt();
    if d.abs() <= 3.0 * rms {
        return Err(Error::DecayFit(
            "amplitude indistinguishable from noise".into(),
        ));
    }
    if span < tau {
        return Err(Error::DecayFit(format!(
            "record spans {span} s, shorter than the fitted tau {tau} s"
        )));
    }
    Ok(DecayFit {
        tau,
        tau_err: cov[(2, 2)].max(0.0).sqrt(),
        t_inf: c,
        delta_t: d,
        rms_residual: rms,
    })
}
