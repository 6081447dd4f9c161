//! Y-factor inference.
//!
//! Input noise (vertical axis, kelvin) is regressed on measured output power
//! (horizontal axis, watts) as `T_in = alpha * P_out - offset`. Both axes carry
//! errors; the fit uses the effective-variance method, folding the power error
//! into the temperature axis through the current slope.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisecalc::{
    self, input_noise_raw, input_noise_slope_raw, ChainConfig, REFERENCE_BATH_K,
};
use crate::units::{from_db, Estimate, Frequency, LinearGain, NoiseTemperature};

const LN10_OVER_10: f64 = std::f64::consts::LN_10 / 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPath {
    Thru,
    Twpa,
    DirectHemt,
}

impl SignalPath {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalPath::Thru => "thru",
            SignalPath::Twpa => "twpa",
            SignalPath::DirectHemt => "direct_hemt",
        }
    }
}

impl std::str::FromStr for SignalPath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thru" => Ok(SignalPath::Thru),
            "twpa" => Ok(SignalPath::Twpa),
            "direct_hemt" => Ok(SignalPath::DirectHemt),
            other => Err(Error::InvalidInput(format!(
                "unknown path '{other}' (expected thru, twpa or direct_hemt)"
            ))),
        }
    }
}

impl std::fmt::Display for SignalPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One measurement point at a single bath temperature and signal frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSample {
    pub path: SignalPath,
    pub f_signal: Frequency,
    pub f_idler: Option<Frequency>,
    /// Thermometer reading, K.
    pub t_bath: f64,
    pub t_bath_err: f64,
    /// Output noise power integrated over the analysis window, W.
    pub p_out: f64,
    pub p_out_err_db: f64,
    pub g_twpa_db: Option<f64>,
    pub g_conv_db: Option<f64>,
}

impl NoiseSample {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidInput(what.to_string()))
            }
        };
        check(
            self.t_bath >= 0.0 && self.t_bath.is_finite(),
            "t_bath must be >= 0",
        )?;
        check(
            self.t_bath_err > 0.0 && self.t_bath_err.is_finite(),
            "t_bath_err must be > 0",
        )?;
        check(
            self.p_out > 0.0 && self.p_out.is_finite(),
            "p_out must be > 0",
        )?;
        check(
            self.p_out_err_db > 0.0 && self.p_out_err_db.is_finite(),
            "p_out_err_db must be > 0",
        )?;
        if self.path == SignalPath::Twpa {
            check(self.f_idler.is_some(), "twpa sample needs f_idler")?;
            check(self.g_twpa_db.is_some(), "twpa sample needs g_twpa_db")?;
            check(self.g_conv_db.is_some(), "twpa sample needs g_conv_db")?;
        }
        Ok(())
    }

    /// Pump frequency implied by signal and idler, `(f_s + f_i) / 2`.
    pub fn f_pump(&self) -> Option<Frequency> {
        self.f_idler
            .and_then(|fi| Frequency::new(0.5 * (self.f_signal.hz() + fi.hz())).ok())
    }
}

/// Averaged TWPA gains at one signal frequency (dB domain).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub f_signal: Frequency,
    pub g_twpa_mean_db: f64,
    pub g_twpa_err_db: f64,
    pub g_conv_mean_db: f64,
    pub g_conv_err_db: f64,
    pub n_samples: usize,
}

impl GainSummary {
    pub fn g_twpa(&self) -> LinearGain {
        LinearGain::from_db(self.g_twpa_mean_db).expect("finite mean")
    }

    pub fn g_conv(&self) -> LinearGain {
        LinearGain::from_db(self.g_conv_mean_db).expect("finite mean")
    }

    /// Relative one-sigma error of `g_conv / g_twpa`.
    pub fn ratio_rel_err(&self) -> f64 {
        LN10_OVER_10 * self.g_twpa_err_db.hypot(self.g_conv_err_db)
    }
}

fn same_frequency(a: Frequency, b: Frequency) -> bool {
    (a.hz() - b.hz()).abs() <= 1e-6 * a.hz().max(b.hz())
}

fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Mean and standard error of the TWPA gains across temperature setpoints.
pub fn average_gains(samples: &[NoiseSample]) -> Result<GainSummary> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("no samples to average".into()))?;
    let mut gt = Vec::with_capacity(samples.len());
    let mut gc = Vec::with_capacity(samples.len());
    for s in samples {
        if s.path != SignalPath::Twpa {
            return Err(Error::InvalidInput(format!(
                "gain averaging needs twpa samples, got {}",
                s.path
            )));
        }
        if !same_frequency(s.f_signal, first.f_signal) {
            return Err(Error::FrequencyMismatch(
                first.f_signal.hz(),
                s.f_signal.hz(),
            ));
        }
        gt.push(s.g_twpa_db.ok_or(Error::MissingTwpa("g_twpa_db"))?);
        gc.push(s.g_conv_db.ok_or(Error::MissingTwpa("g_conv_db"))?);
    }
    if samples.len() == 1 {
        log::warn!(
            "single gain sample at {} Hz: standard error undefined, reported as 0",
            first.f_signal.hz()
        );
    }
    let (g_twpa_mean_db, g_twpa_err_db) = mean_and_sem(&gt);
    let (g_conv_mean_db, g_conv_err_db) = mean_and_sem(&gc);
    Ok(GainSummary {
        f_signal: first.f_signal,
        g_twpa_mean_db,
        g_twpa_err_db,
        g_conv_mean_db,
        g_conv_err_db,
        n_samples: samples.len(),
    })
}

/// How a bath temperature maps to the input noise on the fit's vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputNoiseModel {
    /// Plain quantum-corrected load noise at the signal frequency.
    Direct { f_signal: Frequency },
    /// Signal plus converted idler noise, using averaged gains.
    Parametric {
        f_signal: Frequency,
        f_pump: Frequency,
        /// `g_conv / g_twpa`
        ratio: f64,
        ratio_rel_err: f64,
    },
}

impl InputNoiseModel {
    pub fn for_samples(samples: &[NoiseSample], gains: Option<&GainSummary>) -> Result<Self> {
        let s = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("no samples".into()))?;
        match s.path {
            SignalPath::Thru | SignalPath::DirectHemt => Ok(InputNoiseModel::Direct {
                f_signal: s.f_signal,
            }),
            SignalPath::Twpa => {
                let g = gains.ok_or(Error::MissingTwpa("a gain summary"))?;
                if !same_frequency(g.f_signal, s.f_signal) {
                    return Err(Error::FrequencyMismatch(g.f_signal.hz(), s.f_signal.hz()));
                }
                let f_pump = s.f_pump().ok_or(Error::MissingTwpa("f_idler"))?;
                noisecalc::idler_frequency(f_pump, s.f_signal)?;
                Ok(InputNoiseModel::Parametric {
                    f_signal: s.f_signal,
                    f_pump,
                    ratio: from_db(g.g_conv_mean_db - g.g_twpa_mean_db),
                    ratio_rel_err: g.ratio_rel_err(),
                })
            }
        }
    }

    pub fn f_signal(&self) -> Frequency {
        match *self {
            InputNoiseModel::Direct { f_signal } => f_signal,
            InputNoiseModel::Parametric { f_signal, .. } => f_signal,
        }
    }

    fn idler_hz(&self) -> Option<f64> {
        match *self {
            InputNoiseModel::Direct { .. } => None,
            InputNoiseModel::Parametric {
                f_signal, f_pump, ..
            } => Some(2.0 * f_pump.hz() - f_signal.hz()),
        }
    }

    /// Input noise at bath temperature `t_bath`, K.
    pub fn input_noise(&self, t_bath: f64) -> f64 {
        let fs = self.f_signal().hz();
        match (*self, self.idler_hz()) {
            (InputNoiseModel::Parametric { ratio, .. }, Some(fi)) => {
                input_noise_raw(fs, t_bath) + ratio * input_noise_raw(fi, t_bath)
            }
            _ => input_noise_raw(fs, t_bath),
        }
    }

    /// One-sigma error of [`Self::input_noise`] given the thermometer error,
    /// including the gain-ratio error for the parametric model.
    pub fn input_noise_err(&self, t_bath: f64, t_bath_err: f64) -> f64 {
        let fs = self.f_signal().hz();
        match (*self, self.idler_hz()) {
            (
                InputNoiseModel::Parametric {
                    ratio,
                    ratio_rel_err,
                    ..
                },
                Some(fi),
            ) => {
                let slope =
                    input_noise_slope_raw(fs, t_bath) + ratio * input_noise_slope_raw(fi, t_bath);
                let gain_term = ratio * ratio_rel_err * input_noise_raw(fi, t_bath);
                (slope * t_bath_err).hypot(gain_term)
            }
            _ => input_noise_slope_raw(fs, t_bath) * t_bath_err,
        }
    }
}

/// A fit point with one-sigma errors on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub x: f64,
    pub sigma_x: f64,
    pub y: f64,
    pub sigma_y: f64,
}

/// `p * (10^(db/10) - 1)`: the dB error mapped to a symmetric linear sigma.
pub fn power_sigma(p: f64, err_db: f64) -> f64 {
    p * (from_db(err_db) - 1.0)
}

/// Convert samples of one path and frequency into fit points.
pub fn build_fit_points(
    samples: &[NoiseSample],
    gains: Option<&GainSummary>,
) -> Result<Vec<FitPoint>> {
    let model = InputNoiseModel::for_samples(samples, gains)?;
    build_fit_points_with(samples, &model)
}

pub fn build_fit_points_with(
    samples: &[NoiseSample],
    model: &InputNoiseModel,
) -> Result<Vec<FitPoint>> {
    let f0 = model.f_signal();
    samples
        .iter()
        .map(|s| {
            s.validate()?;
            if !same_frequency(s.f_signal, f0) {
                return Err(Error::FrequencyMismatch(f0.hz(), s.f_signal.hz()));
            }
            Ok(FitPoint {
                x: s.p_out,
                sigma_x: power_sigma(s.p_out, s.p_out_err_db),
                y: model.input_noise(s.t_bath),
                sigma_y: model.input_noise_err(s.t_bath, s.t_bath_err),
            })
        })
        .collect()
}

/// Result of a Y-factor line fit `y = alpha x - offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// K/W
    pub alpha: f64,
    /// K; the added noise (Thru) or excess noise (TWPA path).
    pub offset: f64,
    pub alpha_err: f64,
    pub offset_err: f64,
    /// Errors multiplied by sqrt(reduced chi^2).
    pub alpha_err_scaled: f64,
    pub offset_err_scaled: f64,
    /// Covariance of (alpha, offset).
    pub covariance: [[f64; 2]; 2],
    pub n_points: usize,
    pub reduced_chi2: f64,
    pub iterations: usize,
}

pub const MIN_FIT_POINTS: usize = 3;
pub const MAX_FIT_ITERATIONS: usize = 100;
pub const FIT_TOLERANCE: f64 = 1e-10;

/// Slope of the plain weighted least-squares line.
fn weighted_slope(points: &[FitPoint], w: &[f64]) -> Result<f64> {
    let wsum: f64 = w.iter().sum();
    let xbar = points.iter().zip(w).map(|(p, w)| w * p.x).sum::<f64>() / wsum;
    let ybar = points.iter().zip(w).map(|(p, w)| w * p.y).sum::<f64>() / wsum;
    let sxx: f64 = points
        .iter()
        .zip(w)
        .map(|(p, w)| w * (p.x - xbar).powi(2))
        .sum();
    let sxy: f64 = points
        .iter()
        .zip(w)
        .map(|(p, w)| w * (p.x - xbar) * (p.y - ybar))
        .sum();
    let spread = points
        .iter()
        .map(|p| (p.x - xbar).abs())
        .fold(0.0, f64::max);
    if !(sxx > 0.0) || spread <= 1e-14 * xbar.abs() {
        return Err(Error::SingularFit);
    }
    Ok(sxy / sxx)
}

fn effective_weights(points: &[FitPoint], alpha: f64) -> Vec<f64> {
    points
        .iter()
        .map(|p| 1.0 / (p.sigma_y.powi(2) + alpha.powi(2) * p.sigma_x.powi(2)))
        .collect()
}

/// Weighted centroid and the per-point corrections of the abscissae toward
/// the fitted line at slope `alpha`.
struct Centroid {
    weights: Vec<f64>,
    wsum: f64,
    xbar: f64,
    ybar: f64,
    beta: Vec<f64>,
}

fn centroid(points: &[FitPoint], alpha: f64) -> Centroid {
    let weights = effective_weights(points, alpha);
    let wsum: f64 = weights.iter().sum();
    let xbar = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * p.x)
        .sum::<f64>()
        / wsum;
    let ybar = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * p.y)
        .sum::<f64>()
        / wsum;
    let beta = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| {
            w * ((p.x - xbar) * p.sigma_y.powi(2) + alpha * (p.y - ybar) * p.sigma_x.powi(2))
        })
        .collect();
    Centroid {
        weights,
        wsum,
        xbar,
        ybar,
        beta,
    }
}

/// One slope update of the effective-variance iteration.
fn slope_update(points: &[FitPoint], alpha: f64) -> Result<f64> {
    let c = centroid(points, alpha);
    let (mut num, mut den) = (0.0, 0.0);
    for ((p, w), b) in points.iter().zip(&c.weights).zip(&c.beta) {
        num += w * b * (p.y - c.ybar);
        den += w * b * (p.x - c.xbar);
    }
    if !(den.abs() > 0.0) {
        return Err(Error::SingularFit);
    }
    Ok(num / den)
}

/// Effective-variance straight-line fit with errors on both axes.
///
/// The slope is iterated until the weights `1 / (sy^2 + alpha^2 sx^2)` are
/// self-consistent. Each update minimises the effective-variance chi-square
/// including its dependence on the slope (York's solution), which keeps the
/// slope free of the attenuation that plain reweighted least squares suffers
/// when the abscissa errors are large.
pub fn fit_yfactor(points: &[FitPoint]) -> Result<FitReport> {
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    for p in points {
        let ok = [p.x, p.y, p.sigma_x, p.sigma_y]
            .iter()
            .all(|v| v.is_finite())
            && p.sigma_x >= 0.0
            && p.sigma_y >= 0.0
            && (p.sigma_x > 0.0 || p.sigma_y > 0.0);
        if !ok {
            return Err(Error::InvalidInput(format!(
                "fit point has invalid value or zero error: {p:?}"
            )));
        }
    }
    warn_if_not_monotone(points);

    // Start from the y-error-only solution (or unit weights if y errors vanish).
    let w0: Vec<f64> = if points.iter().all(|p| p.sigma_y > 0.0) {
        points.iter().map(|p| 1.0 / p.sigma_y.powi(2)).collect()
    } else {
        vec![1.0; points.len()]
    };
    let mut alpha = weighted_slope(points, &w0)?;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        let next = slope_update(points, alpha)?;
        let delta = ((next - alpha) / next).abs();
        alpha = next;
        if delta < FIT_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged || !alpha.is_finite() {
        return Err(Error::NoConvergence(MAX_FIT_ITERATIONS));
    }

    let c = centroid(points, alpha);
    let intercept = c.ybar - alpha * c.xbar;
    let n = points.len();
    let chi2: f64 = points
        .iter()
        .zip(&c.weights)
        .map(|(p, w)| w * (p.y - alpha * p.x - intercept).powi(2))
        .sum();
    let reduced_chi2 = chi2 / (n - 2) as f64;
    // parameter errors from the adjusted abscissae
    let x_adj: Vec<f64> = c.beta.iter().map(|b| c.xbar + b).collect();
    let x_adj_bar = x_adj
        .iter()
        .zip(&c.weights)
        .map(|(x, w)| w * x)
        .sum::<f64>()
        / c.wsum;
    let suu: f64 = x_adj
        .iter()
        .zip(&c.weights)
        .map(|(x, w)| w * (x - x_adj_bar).powi(2))
        .sum();
    if !(suu > 0.0) {
        return Err(Error::SingularFit);
    }
    let var_alpha = 1.0 / suu;
    let var_offset = 1.0 / c.wsum + x_adj_bar.powi(2) * var_alpha;
    // offset = -intercept, so cov(alpha, offset) = -cov(alpha, intercept)
    let cov = x_adj_bar * var_alpha;
    let scale = reduced_chi2.sqrt();
    Ok(FitReport {
        alpha,
        offset: -intercept,
        alpha_err: var_alpha.sqrt(),
        offset_err: var_offset.sqrt(),
        alpha_err_scaled: var_alpha.sqrt() * scale,
        offset_err_scaled: var_offset.sqrt() * scale,
        covariance: [[var_alpha, cov], [cov, var_offset]],
        n_points: n,
        reduced_chi2,
        iterations,
    })
}

fn warn_if_not_monotone(points: &[FitPoint]) {
    let mut order: Vec<&FitPoint> = points.iter().collect();
    order.sort_by(|a, b| a.y.total_cmp(&b.y));
    if order.windows(2).any(|w| w[1].x <= w[0].x) {
        log::warn!("output power is not strictly increasing with input noise");
    }
}

/// Effective-variance weights at the fitted slope (exposed for diagnostics).
pub fn fit_weights(points: &[FitPoint], report: &FitReport) -> Vec<f64> {
    effective_weights(points, report.alpha)
}

/// System noise referred to the chain input with the reference 10 mK bath:
/// `offset + T_in(10 mK)` (or `T_in,eff` for the TWPA path).
pub fn system_noise_at_base(report: &FitReport, model: &InputNoiseModel) -> f64 {
    report.offset + model.input_noise(REFERENCE_BATH_K)
}

/// System noise corrected for an attenuator of gain `g_att` at `t_att` between
/// source and first amplifier. `background` is `T_bkg / G_HEMT`.
pub fn insertion_loss_correction(
    report: &FitReport,
    g_att: LinearGain,
    t_att: NoiseTemperature,
    background: f64,
    t_in: NoiseTemperature,
) -> Result<f64> {
    if g_att.ratio() > 1.0 {
        return Err(Error::InvalidValue {
            quantity: "insertion-loss gain",
            value: g_att.ratio(),
            reason: "must be <= 1",
        });
    }
    let g = g_att.ratio();
    Ok(g * report.offset - background - g * t_att.kelvin() + t_in.kelvin())
}

/// Bounds on the insertion-loss and background corrections.
///
/// Loss corrections can only lower the noise temperature, so `dg_att_db` and
/// `dt_att_k` are non-positive. Background and HEMT-gain bounds are magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBounds {
    pub dg_att_db: f64,
    pub dt_att_k: f64,
    #[serde(default)]
    pub dt_bkg_k: f64,
    #[serde(default)]
    pub dg_hemt_db: f64,
}

impl LossBounds {
    pub const ZERO: LossBounds = LossBounds {
        dg_att_db: 0.0,
        dt_att_k: 0.0,
        dt_bkg_k: 0.0,
        dg_hemt_db: 0.0,
    };

    /// Thru path: up to 1 dB of loss from switches and isolators, 100 mK.
    pub fn thru() -> Self {
        Self {
            dg_att_db: -1.0,
            dt_att_k: -0.1,
            dt_bkg_k: 0.0,
            dg_hemt_db: 0.0,
        }
    }

    /// TWPA path: only the first switch, 0.5 dB.
    pub fn twpa() -> Self {
        Self {
            dg_att_db: -0.5,
            ..Self::thru()
        }
    }

    pub fn for_path(path: SignalPath) -> Self {
        match path {
            SignalPath::Twpa => Self::twpa(),
            _ => Self::thru(),
        }
    }

    fn validate(&self) -> Result<()> {
        let checks = [
            ("dg_att_db", self.dg_att_db, self.dg_att_db <= 0.0),
            ("dt_att_k", self.dt_att_k, self.dt_att_k <= 0.0),
            ("dt_bkg_k", self.dt_bkg_k, self.dt_bkg_k >= 0.0),
            ("dg_hemt_db", self.dg_hemt_db, self.dg_hemt_db >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(Error::BoundSign { name, value });
            }
        }
        Ok(())
    }
}

/// One summand of the error budget; one-sided terms have a zero `hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetTerm {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub terms: Vec<BudgetTerm>,
    pub total_lo: f64,
    pub total_hi: f64,
}

/// Worst-case (linear) error budget for the system noise.
pub fn error_budget(
    report: &FitReport,
    chain: &ChainConfig,
    bounds: &LossBounds,
) -> Result<ErrorBudget> {
    bounds.validate()?;
    let g_att = chain.g_att.ratio();
    let t_att = chain.t_att.kelvin();
    let g_hemt = chain.g_hemt.ratio();
    // loss bound expressed as a (positive) change of the linear gain
    let dg_att = 1.0 - from_db(bounds.dg_att_db);
    let dg_hemt = g_hemt * (from_db(bounds.dg_hemt_db) - 1.0);

    let fit = g_att * report.offset_err;
    let mut terms = vec![
        BudgetTerm {
            name: "fit_offset".into(),
            lo: fit,
            hi: fit,
        },
        BudgetTerm {
            name: "insertion_loss_gain".into(),
            lo: report.offset.abs() * dg_att,
            hi: 0.0,
        },
    ];
    let bkg = bounds.dt_bkg_k / g_hemt;
    terms.push(BudgetTerm {
        name: "background".into(),
        lo: bkg,
        hi: bkg,
    });
    let hemt = chain.t_bkg.kelvin() / g_hemt.powi(2) * dg_hemt;
    terms.push(BudgetTerm {
        name: "hemt_gain".into(),
        lo: hemt,
        hi: hemt,
    });
    terms.push(BudgetTerm {
        name: "insertion_loss_temp".into(),
        lo: g_att * bounds.dt_att_k.abs(),
        hi: 0.0,
    });
    terms.push(BudgetTerm {
        name: "attenuator_temp_gain".into(),
        lo: t_att * dg_att,
        hi: 0.0,
    });
    let total_lo = terms.iter().map(|t| t.lo).sum();
    let total_hi = terms.iter().map(|t| t.hi).sum();
    Ok(ErrorBudget {
        terms,
        total_lo,
        total_hi,
    })
}

/// Full analysis of one path at one signal frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAnalysis {
    pub path: SignalPath,
    pub f_signal: Frequency,
    pub model: InputNoiseModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<GainSummary>,
    pub fit: FitReport,
    pub budget: ErrorBudget,
    /// System noise at the 10 mK reference bath with budget error bars.
    pub t_sys: Estimate,
}

/// Fit and budget one path at one frequency.
pub fn analyze_path(
    samples: &[NoiseSample],
    chain: &ChainConfig,
    bounds: &LossBounds,
) -> Result<PathAnalysis> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("no samples".into()))?;
    let gains = if first.path == SignalPath::Twpa {
        Some(average_gains(samples)?)
    } else {
        None
    };
    let model = InputNoiseModel::for_samples(samples, gains.as_ref())?;
    let points = build_fit_points_with(samples, &model)?;
    let fit = fit_yfactor(&points)?;
    let budget = error_budget(&fit, chain, bounds)?;
    let t_sys = Estimate::new(
        system_noise_at_base(&fit, &model),
        budget.total_lo,
        budget.total_hi,
    );
    Ok(PathAnalysis {
        path: first.path,
        f_signal: first.f_signal,
        model,
        gains,
        fit,
        budget,
        t_sys,
    })
}

/// Group samples by (path, signal frequency), preserving first-seen order of
/// frequencies within a path.
pub fn group_samples(samples: &[NoiseSample]) -> BTreeMap<(SignalPath, u64), Vec<NoiseSample>> {
    let mut groups: BTreeMap<(SignalPath, u64), Vec<NoiseSample>> = BTreeMap::new();
    for s in samples {
        // 1 mHz buckets keep float noise out of the key
        let key = (s.path, (s.f_signal.hz() * 1e3).round() as u64);
        groups.entry(key).or_default().push(s.clone());
    }
    groups
}

/// Switch-repeatability contribution to the gain error: 0.5 dB from 6 GHz up,
/// negligible below.
pub fn switch_repeatability_db(f: Frequency) -> f64 {
    if f.hz() >= 6e9 {
        0.5
    } else {
        0.0
    }
}

/// TWPA intrinsic noise and photon number at one signal frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicReport {
    pub f_signal: Frequency,
    pub g_twpa_db: f64,
    pub g_twpa_err_db: f64,
    pub t_twpa: Estimate,
    pub photons: Estimate,
}

/// Intrinsic TWPA noise `T_sys,TWPA - T_sys,HEMT / G_TWPA` with linearly
/// combined error bars.
pub fn intrinsic_twpa_report(
    thru: &Estimate,
    twpa: &Estimate,
    f_signal: Frequency,
    g_twpa_db: f64,
    g_twpa_err_db: f64,
) -> Result<IntrinsicReport> {
    if !(g_twpa_err_db >= 0.0) {
        return Err(Error::InvalidValue {
            quantity: "gain error (dB)",
            value: g_twpa_err_db,
            reason: "must be >= 0",
        });
    }
    let g = LinearGain::from_db(g_twpa_db)?;
    let value = noisecalc::twpa_intrinsic_noise(twpa.value, thru.value, g);
    let referred = thru.value / g.ratio();
    // larger gain -> smaller subtracted term -> larger intrinsic noise
    let gain_up = referred * (1.0 - 1.0 / from_db(g_twpa_err_db));
    let gain_down = referred * (from_db(g_twpa_err_db) - 1.0);
    let (gain_hi, gain_lo) = if referred >= 0.0 {
        (gain_up, gain_down)
    } else {
        (-gain_down, -gain_up)
    };
    let t_twpa = Estimate::new(
        value,
        twpa.err_lo + thru.err_hi / g.ratio() + gain_lo,
        twpa.err_hi + thru.err_lo / g.ratio() + gain_hi,
    );
    let photons = t_twpa.scaled(noisecalc::photons_from_temperature(1.0, f_signal));
    Ok(IntrinsicReport {
        f_signal,
        g_twpa_db,
        g_twpa_err_db,
        t_twpa,
        photons,
    })
}

/// Intrinsic report from two analysed paths at the same frequency.
pub fn intrinsic_from_paths(thru: &PathAnalysis, twpa: &PathAnalysis) -> Result<IntrinsicReport> {
    if !same_frequency(thru.f_signal, twpa.f_signal) {
        return Err(Error::FrequencyMismatch(
            thru.f_signal.hz(),
            twpa.f_signal.hz(),
        ));
    }
    let gains = twpa.gains.ok_or(Error::MissingTwpa("averaged gains"))?;
    let err_db = gains.g_twpa_err_db + switch_repeatability_db(twpa.f_signal);
    intrinsic_twpa_report(
        &thru.t_sys,
        &twpa.t_sys,
        twpa.f_signal,
        gains.g_twpa_mean_db,
        err_db,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn f(ghz: f64) -> Frequency {
        Frequency::from_ghz(ghz).unwrap()
    }

    fn twpa_sample(g_db: f64, gc_db: f64) -> NoiseSample {
        NoiseSample {
            path: SignalPath::Twpa,
            f_signal: f(5.735),
            f_idler: Some(f(6.201)),
            t_bath: 0.2,
            t_bath_err: 0.005,
            p_out: 1e-12,
            p_out_err_db: 0.25,
            g_twpa_db: Some(g_db),
            g_conv_db: Some(gc_db),
        }
    }

    fn thru_sample(t_bath: f64, p_out: f64) -> NoiseSample {
        NoiseSample {
            path: SignalPath::Thru,
            f_signal: f(6.0),
            f_idler: None,
            t_bath,
            t_bath_err: 0.005,
            p_out,
            p_out_err_db: 0.25,
            g_twpa_db: None,
            g_conv_db: None,
        }
    }

    #[test]
    fn gain_average_examples() {
        let s = average_gains(&vec![twpa_sample(10.0, 9.0); 3]).unwrap();
        assert_eq!(s.g_twpa_mean_db, 10.0);
        assert_eq!(s.g_twpa_err_db, 0.0);

        let s = average_gains(&[
            twpa_sample(9.0, 8.0),
            twpa_sample(10.0, 9.0),
            twpa_sample(11.0, 10.0),
        ])
        .unwrap();
        assert_relative_eq!(s.g_twpa_mean_db, 10.0);
        assert_relative_eq!(s.g_twpa_err_db, 1.0 / 3f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(s.g_conv_err_db, 0.577_350_269, max_relative = 1e-8);

        let one = average_gains(&[twpa_sample(12.0, 11.0)]).unwrap();
        assert_eq!(one.g_twpa_mean_db, 12.0);
        assert_eq!(one.g_twpa_err_db, 0.0);

        assert!(average_gains(&[]).is_err());
        let mut other = twpa_sample(10.0, 9.0);
        other.f_signal = f(6.5);
        assert!(matches!(
            average_gains(&[twpa_sample(10.0, 9.0), other]),
            Err(Error::FrequencyMismatch(..))
        ));
    }

    #[test]
    fn fit_point_examples() {
        let pts = build_fit_points(&[thru_sample(1.0, 1e-18)], None).unwrap();
        // slope 0.993118733 from the coth derivative at 1 K, 6 GHz
        assert_relative_eq!(
            pts[0].sigma_y,
            0.005 * 0.993_118_733_157_922,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            pts[0].sigma_x,
            5.925_372_517_728_888e-20,
            max_relative = 1e-12
        );

        let pts = build_fit_points(&[thru_sample(0.05, 1e-18)], None).unwrap();
        assert_relative_eq!(
            pts[0].sigma_y,
            0.005 * 0.105_271_323_234_823,
            max_relative = 1e-10
        );

        assert!(matches!(
            build_fit_points(&[twpa_sample(10.0, 9.0)], None),
            Err(Error::MissingTwpa(_))
        ));
    }

    #[test]
    fn twpa_fit_points_include_gain_error() {
        let samples = [twpa_sample(9.0, 8.0), twpa_sample(11.0, 10.0)];
        let gains = average_gains(&samples).unwrap();
        let pts = build_fit_points(&samples, Some(&gains)).unwrap();
        let model = InputNoiseModel::for_samples(&samples, Some(&gains)).unwrap();
        let thermo_only = {
            let mut m = model;
            if let InputNoiseModel::Parametric { ratio_rel_err, .. } = &mut m {
                *ratio_rel_err = 0.0;
            }
            m.input_noise_err(0.2, 0.005)
        };
        assert!(pts[0].sigma_y > thermo_only);
        assert_relative_eq!(
            pts[0].y,
            input_noise_raw(5.735e9, 0.2) + from_db(-1.0) * input_noise_raw(6.201e9, 0.2),
            max_relative = 1e-12
        );
    }

    fn line(alpha: f64, offset: f64, xs: &[f64], sx: f64, sy: f64) -> Vec<FitPoint> {
        xs.iter()
            .map(|&x| FitPoint {
                x,
                sigma_x: sx * x,
                y: alpha * x - offset,
                sigma_y: sy,
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 * 1e-18).collect();
        let pts = line(2e18, 0.5, &xs, 0.05, 0.005);
        let r = fit_yfactor(&pts).unwrap();
        assert_relative_eq!(r.alpha, 2e18, max_relative = 1e-9);
        assert_relative_eq!(r.offset, 0.5, max_relative = 1e-9);
        assert!(r.reduced_chi2 < 1e-12);
    }

    #[test]
    fn too_few_and_singular() {
        let xs = [1e-18, 2e-18];
        assert!(matches!(
            fit_yfactor(&line(1e18, 0.1, &xs, 0.01, 0.01)),
            Err(Error::TooFewPoints { .. })
        ));
        let pts = vec![
            FitPoint {
                x: 1e-18,
                sigma_x: 1e-20,
                y: 0.1,
                sigma_y: 0.01
            };
            4
        ];
        assert!(matches!(fit_yfactor(&pts), Err(Error::SingularFit)));
    }

    #[test]
    fn fixed_point_weights() {
        // scattered data so the slope actually moves during iteration
        let xs: Vec<f64> = (1..=8).map(|i| i as f64).collect();
        let mut pts = line(3.0, 1.0, &xs, 0.06, 0.05);
        for (i, p) in pts.iter_mut().enumerate() {
            p.y += 0.07 * ((i as f64) * 1.7).sin();
        }
        let r = fit_yfactor(&pts).unwrap();
        let w = fit_weights(&pts, &r);
        for (p, w) in pts.iter().zip(&w) {
            let expected = 1.0 / (p.sigma_y.powi(2) + r.alpha.powi(2) * p.sigma_x.powi(2));
            assert!(((w - expected) / expected).abs() < 1e-10);
        }
        // the solution is stationary under one more iteration
        let again = slope_update(&pts, r.alpha).unwrap();
        assert!(((again - r.alpha) / r.alpha).abs() < 1e-10);
    }

    #[test]
    fn swapped_axes_consistent() {
        let xs: Vec<f64> = (1..=12).map(|i| 0.5 + i as f64 * 0.3).collect();
        let mut pts = line(2.0, 0.7, &xs, 0.001, 0.002);
        for (i, p) in pts.iter_mut().enumerate() {
            p.y += 0.002 * ((i as f64) * 2.3).cos();
        }
        let r = fit_yfactor(&pts).unwrap();
        let swapped: Vec<FitPoint> = pts
            .iter()
            .map(|p| FitPoint {
                x: p.y,
                sigma_x: p.sigma_y,
                y: p.x,
                sigma_y: p.sigma_x,
            })
            .collect();
        let rs = fit_yfactor(&swapped).unwrap();
        let inv = 1.0 / rs.alpha;
        let err = r.alpha_err + rs.alpha_err / rs.alpha.powi(2);
        assert!((inv - r.alpha).abs() < err, "{inv} vs {}", r.alpha);
    }

    fn report(offset: f64, offset_err: f64) -> FitReport {
        FitReport {
            alpha: 1e12,
            offset,
            alpha_err: 0.0,
            offset_err,
            alpha_err_scaled: 0.0,
            offset_err_scaled: offset_err,
            covariance: [[0.0; 2]; 2],
            n_points: 10,
            reduced_chi2: 1.0,
            iterations: 3,
        }
    }

    fn chain(t_att: f64) -> ChainConfig {
        ChainConfig {
            g_hemt: LinearGain::from_db(40.0).unwrap(),
            t_hemt: NoiseTemperature::new(3.0).unwrap(),
            t_bkg: NoiseTemperature::new(300.0).unwrap(),
            twpa: None,
            g_att: LinearGain::UNITY,
            t_att: NoiseTemperature::new(t_att).unwrap(),
            bandwidth_hz: 100.0,
            g_tot: LinearGain::UNITY,
        }
    }

    #[test]
    fn system_noise_examples() {
        let model = InputNoiseModel::Direct { f_signal: f(6.0) };
        assert_relative_eq!(
            system_noise_at_base(&report(3.16, 0.1), &model),
            3.303_977_292_201_076_5,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            system_noise_at_base(&report(0.0, 0.1), &model),
            input_noise_raw(6e9, 0.01),
            max_relative = 1e-15
        );
        let twpa = InputNoiseModel::Parametric {
            f_signal: f(5.735),
            f_pump: f(5.968),
            ratio: 0.8,
            ratio_rel_err: 0.0,
        };
        assert_relative_eq!(
            system_noise_at_base(&report(0.53, 0.1), &twpa),
            0.786_658_720_320_886_9,
            max_relative = 1e-12
        );
    }

    #[test]
    fn insertion_loss_examples() {
        let r = report(3.16, 0.1);
        let t_in = NoiseTemperature::new(0.144).unwrap();
        let zero = NoiseTemperature::ZERO;
        let base = insertion_loss_correction(&r, LinearGain::UNITY, zero, 0.0, t_in).unwrap();
        assert_relative_eq!(base, 3.16 + 0.144, max_relative = 1e-15);
        let lossy = LinearGain::from_db(-1.0).unwrap();
        let shifted = insertion_loss_correction(&r, lossy, zero, 0.0, t_in).unwrap();
        assert_relative_eq!(
            base - shifted,
            3.16 * (1.0 - from_db(-1.0)),
            max_relative = 1e-12
        );
        assert!((base - shifted - 0.649_922_778).abs() < 1e-9);
        let warm = NoiseTemperature::new(0.1).unwrap();
        let v = insertion_loss_correction(&r, LinearGain::UNITY, warm, 0.0, t_in).unwrap();
        assert_relative_eq!(base - v, 0.1, max_relative = 1e-12);
        assert!(
            insertion_loss_correction(&r, LinearGain::new(1.2).unwrap(), zero, 0.0, t_in).is_err()
        );
    }

    #[test]
    fn budget_examples() {
        let r = report(3.16, 0.1);
        let b = error_budget(&r, &chain(0.0), &LossBounds::ZERO).unwrap();
        assert_relative_eq!(b.total_lo, 0.1);
        assert_relative_eq!(b.total_hi, 0.1);

        let b = error_budget(&r, &chain(0.0), &LossBounds::thru()).unwrap();
        assert_relative_eq!(b.total_hi, 0.1, max_relative = 1e-12);
        let expected_lo = 0.1 + 3.16 * (1.0 - from_db(-1.0)) + 0.1;
        assert_relative_eq!(b.total_lo, expected_lo, max_relative = 1e-12);
        assert!((b.total_lo - 0.85).abs() < 0.01);

        let bounds = LossBounds {
            dt_bkg_k: 100.0,
            ..LossBounds::ZERO
        };
        let b = error_budget(&r, &chain(0.0), &bounds).unwrap();
        let bkg = b.terms.iter().find(|t| t.name == "background").unwrap();
        assert_relative_eq!(bkg.hi, 0.01, max_relative = 1e-12);

        let wrong = LossBounds {
            dg_att_db: 0.5,
            ..LossBounds::ZERO
        };
        assert!(matches!(
            error_budget(&r, &chain(0.0), &wrong),
            Err(Error::BoundSign { .. })
        ));
    }

    #[test]
    fn intrinsic_examples() {
        let thru = Estimate::new(3.3, 0.8, 0.1);
        let twpa = Estimate::new(0.68, 0.20, 0.02);
        let r = intrinsic_twpa_report(&thru, &twpa, f(5.735), 10.0, 1.0).unwrap();
        assert_relative_eq!(r.t_twpa.value, 0.35, max_relative = 1e-12);
        assert!(r.t_twpa.err_lo > twpa.err_lo && r.t_twpa.err_hi > twpa.err_hi);
        assert_relative_eq!(
            r.t_twpa.err_lo,
            0.20 + 0.01 + 0.33 * (from_db(1.0) - 1.0),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            r.t_twpa.err_hi,
            0.02 + 0.08 + 0.33 * (1.0 - from_db(-1.0)),
            max_relative = 1e-12
        );
        assert_relative_eq!(r.photons.value, 1.271_633_250_769_773, max_relative = 1e-12);

        let big = intrinsic_twpa_report(&thru, &twpa, f(5.735), 200.0, 0.0).unwrap();
        assert_relative_eq!(big.t_twpa.value, 0.68, max_relative = 1e-15);

        let same = intrinsic_twpa_report(&thru, &thru, f(5.735), 0.0, 0.0).unwrap();
        assert_eq!(same.t_twpa.value, 0.0);
        assert_relative_eq!(same.t_twpa.err_lo, 0.9);
    }

    proptest! {
        #[test]
        fn noiseless_fit_invariant_to_order_and_sigma_scale(
            alpha in 1e11f64..1e13,
            offset in 0.05f64..5.0,
            scale in 0.1f64..10.0,
            rot in 0usize..12,
        ) {
            let xs: Vec<f64> = (0..12).map(|i| (offset + 0.2 + 0.3 * i as f64) / alpha).collect();
            let mut pts = line(alpha, offset, &xs, 0.05, 0.006);
            let base = fit_yfactor(&pts).unwrap();
            pts.rotate_left(rot);
            for p in pts.iter_mut() {
                p.sigma_x *= scale;
                p.sigma_y *= scale;
            }
            let r = fit_yfactor(&pts).unwrap();
            prop_assert!(((r.alpha - alpha) / alpha).abs() < 1e-9);
            prop_assert!(((r.offset - offset) / offset).abs() < 1e-9);
            prop_assert!(((r.offset - base.offset) / offset).abs() < 1e-9);
        }

        #[test]
        fn budget_monotone_in_bounds(
            db in -2.0f64..0.0, dt in -0.3f64..0.0, bkg in 0.0f64..200.0, gh in 0.0f64..3.0,
            k in 1.0f64..2.0,
        ) {
            let r = report(3.16, 0.1);
            let c = chain(0.01);
            let b1 = LossBounds { dg_att_db: db, dt_att_k: dt, dt_bkg_k: bkg, dg_hemt_db: gh };
            let b2 = LossBounds { dg_att_db: db * k, dt_att_k: dt * k, dt_bkg_k: bkg * k, dg_hemt_db: gh * k };
            let e1 = error_budget(&r, &c, &b1).unwrap();
            let e2 = error_budget(&r, &c, &b2).unwrap();
            prop_assert!(e2.total_lo >= e1.total_lo);
            prop_assert!(e2.total_hi >= e1.total_hi);
        }

        #[test]
        fn intrinsic_never_narrower(
            lo in 0.0f64..0.5, hi in 0.0f64..0.5, tlo in 0.0f64..1.0, thi in 0.0f64..1.0,
            g in 0.0f64..25.0, ge in 0.0f64..2.0,
        ) {
            let thru = Estimate::new(3.3, tlo, thi);
            let twpa = Estimate::new(0.7, lo, hi);
            let r = intrinsic_twpa_report(&thru, &twpa, f(6.0), g, ge).unwrap();
            prop_assert!(r.t_twpa.err_lo >= lo && r.t_twpa.err_hi >= hi);
        }

        #[test]
        fn insertion_identity(offset in 0.0f64..10.0, tin in 0.0f64..1.0) {
            let r = report(offset, 0.1);
            let t = NoiseTemperature::new(tin).unwrap();
            let v = insertion_loss_correction(&r, LinearGain::UNITY, NoiseTemperature::ZERO, 0.0, t).unwrap();
            prop_assert_eq!(v, offset + tin);
        }
    }
}
