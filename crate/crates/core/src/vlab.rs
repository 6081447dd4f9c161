//! Seeded synthetic measurement campaigns with a separate truth record.
//!
//! Each signal frequency draws from its own ChaCha stream (`stream = index + 1`)
//! of the campaign seed; stream 0 supplies the per-path switch offset. Output
//! is therefore independent of evaluation order and bit-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisecalc::{input_noise_raw, ChainConfig, REFERENCE_BATH_K};
use crate::twpa::{self, PumpSetting, TwpaParams};
use crate::units::{from_db, to_db, Frequency, BOLTZMANN};
use crate::yfit::{NoiseSample, SignalPath};

/// Highest bath temperature at which the TWPA path is operated, K.
pub const TWPA_MAX_SETPOINT_K: f64 = 0.9;
/// Minimum accepted signal-to-floor ratio, dB.
pub const MIN_SNR_DB: f64 = 10.0;
/// Quoted uncertainty used when an error source is switched off.
const QUOTED_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignPlan {
    pub path: SignalPath,
    /// Bath setpoints, K.
    pub setpoints: Vec<f64>,
    pub f_signals: Vec<Frequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_pump: Option<Frequency>,
    #[serde(default = "default_span")]
    pub span_hz: f64,
    #[serde(default = "default_rbw")]
    pub rbw_hz: f64,
    /// Probe tone at the source input, W.
    #[serde(default = "default_probe")]
    pub probe_power_w: f64,
    /// Settling wait in units of the thermal time constant (metadata only).
    #[serde(default = "default_wait")]
    pub wait_tau_multiple: f64,
}

fn default_span() -> f64 {
    10e3
}
fn default_rbw() -> f64 {
    100.0
}
fn default_probe() -> f64 {
    1e-16
}
fn default_wait() -> f64 {
    2.5
}

impl CampaignPlan {
    /// `n` setpoints spread geometrically from `lo` to exactly `hi`.
    pub fn geometric_setpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let r = (hi / lo).powf(1.0 / (n - 1) as f64);
        let mut out: Vec<f64> = (0..n).map(|i| lo * r.powi(i as i32)).collect();
        out[n - 1] = hi;
        out
    }

    /// Thru-path plan: 0.135 K to 3.6 K.
    pub fn thru(f_signals: Vec<Frequency>) -> Self {
        Self {
            path: SignalPath::Thru,
            setpoints: Self::geometric_setpoints(0.135, 3.6, 12),
            f_signals,
            f_pump: None,
            span_hz: default_span(),
            rbw_hz: default_rbw(),
            probe_power_w: default_probe(),
            wait_tau_multiple: default_wait(),
        }
    }

    /// TWPA-path plan: 0.135 K to 0.9 K.
    pub fn twpa(f_signals: Vec<Frequency>, f_pump: Frequency) -> Self {
        Self {
            path: SignalPath::Twpa,
            setpoints: Self::geometric_setpoints(0.135, TWPA_MAX_SETPOINT_K, 12),
            f_pump: Some(f_pump),
            ..Self::thru(f_signals)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.setpoints.is_empty() || self.f_signals.is_empty() {
            return Err(Error::InvalidInput(
                "plan needs setpoints and frequencies".into(),
            ));
        }
        if let Some(bad) = self
            .setpoints
            .iter()
            .find(|t| !(**t > 0.0 && t.is_finite()))
        {
            return Err(Error::InvalidValue {
                quantity: "setpoint",
                value: *bad,
                reason: "must be > 0",
            });
        }
        if !(self.rbw_hz > 0.0 && self.span_hz / self.rbw_hz >= 1.0) {
            return Err(Error::InvalidInput("span/rbw must be >= 1".into()));
        }
        if !(self.wait_tau_multiple >= 2.5) {
            return Err(Error::InvalidValue {
                quantity: "wait rule",
                value: self.wait_tau_multiple,
                reason: "must be >= 2.5 time constants",
            });
        }
        if self.path == SignalPath::Twpa {
            if self.f_pump.is_none() {
                return Err(Error::MissingTwpa("plan.f_pump"));
            }
            if let Some(t) = self.setpoints.iter().find(|t| **t > TWPA_MAX_SETPOINT_K) {
                return Err(Error::InvalidValue {
                    quantity: "TWPA-path setpoint",
                    value: *t,
                    reason: "above the 0.9 K operating bound",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentErrors {
    pub thermometer_sigma_k: f64,
    pub analyzer_sigma_db: f64,
    /// Applied from 6 GHz up.
    pub switch_repeatability_db: f64,
    /// Analyzer displayed noise floor, W/Hz.
    pub analyzer_noise_floor_w_per_hz: f64,
    pub seed: u64,
}

impl InstrumentErrors {
    pub fn nominal(seed: u64) -> Self {
        Self {
            thermometer_sigma_k: 6e-3,
            analyzer_sigma_db: 0.25,
            switch_repeatability_db: 0.5,
            analyzer_noise_floor_w_per_hz: 1e-18,
            seed,
        }
    }

    pub fn noiseless(seed: u64) -> Self {
        Self {
            thermometer_sigma_k: 0.0,
            analyzer_sigma_db: 0.0,
            switch_repeatability_db: 0.0,
            ..Self::nominal(seed)
        }
    }

    pub fn switch_db_at(&self, f: Frequency) -> f64 {
        if f.hz() >= 6e9 {
            self.switch_repeatability_db
        } else {
            0.0
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.thermometer_sigma_k,
            self.analyzer_sigma_db,
            self.switch_repeatability_db,
            self.analyzer_noise_floor_w_per_hz,
        ];
        if all.iter().all(|v| *v >= 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "instrument errors must be non-negative".into(),
            ))
        }
    }
}

/// True quantities at one signal frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTruth {
    pub f_signal: Frequency,
    /// True Y-factor line: `T_in = alpha P - offset`.
    pub offset_k: f64,
    pub alpha_k_per_w: f64,
    /// System noise at the 10 mK reference bath.
    pub t_sys_base_k: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_twpa_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_conv_db: Option<f64>,
    /// `t_sys(twpa) - t_sys(thru) / g_twpa` at the reference bath, the quantity
    /// estimated by the intrinsic-noise report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsic_k: Option<f64>,
    pub switch_offset_db: f64,
}

/// Sidecar record; never written into the sample table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignTruth {
    pub path: SignalPath,
    pub chain: ChainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twpa: Option<TwpaParams>,
    pub seed: u64,
    pub frequencies: Vec<FrequencyTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub samples: Vec<NoiseSample>,
    /// Parallel to `samples`: true where the power is < 10 dB above the floor.
    pub low_snr: Vec<bool>,
    pub truth: CampaignTruth,
}

struct PathTruth {
    offset: f64,
    g_path: f64,
    g_twpa_db: Option<f64>,
    g_conv_db: Option<f64>,
    ratio: f64,
    f_idler: Option<Frequency>,
}

fn twpa_gains(
    chain: &ChainConfig,
    model: Option<&TwpaParams>,
    f_pump: Frequency,
    f: Frequency,
) -> Result<(f64, f64)> {
    let stage = chain
        .twpa
        .as_ref()
        .ok_or(Error::MissingTwpa("chain.twpa"))?;
    if !stage.gains.is_empty() {
        let (g, gc) = stage.gains_at(f)?;
        return Ok((g.ratio(), gc.ratio()));
    }
    let params = model.ok_or(Error::MissingTwpa("a gain table or TWPA parameters"))?;
    let pt = twpa::sweep_point(params, &PumpSetting::new(f_pump), f)?;
    let g = from_db(pt.gain_db);
    // photon-number normalisation: G_conv = G - 1
    Ok((g, (g - 1.0).max(0.0)))
}

fn path_truth(
    plan: &CampaignPlan,
    chain: &ChainConfig,
    model: Option<&TwpaParams>,
    f: Frequency,
) -> Result<PathTruth> {
    match plan.path {
        SignalPath::Thru | SignalPath::DirectHemt => Ok(PathTruth {
            offset: chain.thru_added_noise(),
            g_path: 1.0,
            g_twpa_db: None,
            g_conv_db: None,
            ratio: 0.0,
            f_idler: None,
        }),
        SignalPath::Twpa => {
            let f_pump = plan.f_pump.ok_or(Error::MissingTwpa("plan.f_pump"))?;
            let f_idler = crate::noisecalc::idler_frequency(f_pump, f)?;
            let (g, gc) = twpa_gains(chain, model, f_pump, f)?;
            let stage = chain
                .twpa
                .as_ref()
                .ok_or(Error::MissingTwpa("chain.twpa"))?;
            let offset = chain.t_bkg.kelvin() / (chain.g_hemt.ratio() * g)
                + chain.t_hemt.kelvin() / g
                + stage.t_twpa.kelvin();
            Ok(PathTruth {
                offset,
                g_path: g,
                g_twpa_db: Some(to_db(g)),
                g_conv_db: Some(to_db(gc)),
                ratio: gc / g,
                f_idler: Some(f_idler),
            })
        }
    }
}

impl PathTruth {
    fn input_noise(&self, f: Frequency, t_bath: f64) -> f64 {
        let base = input_noise_raw(f.hz(), t_bath);
        match self.f_idler {
            Some(fi) => base + self.ratio * input_noise_raw(fi.hz(), t_bath),
            None => base,
        }
    }
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generate one campaign for a single path.
pub fn simulate_campaign(
    plan: &CampaignPlan,
    chain: &ChainConfig,
    twpa_model: Option<&TwpaParams>,
    errors: &InstrumentErrors,
) -> Result<Campaign> {
    plan.validate()?;
    chain.validate()?;
    errors.validate()?;
    if (plan.rbw_hz - chain.bandwidth_hz).abs() > 1e-9 * plan.rbw_hz {
        log::warn!(
            "plan rbw {} Hz differs from chain bandwidth {} Hz; using the chain value",
            plan.rbw_hz,
            chain.bandwidth_hz
        );
    }
    let mut switch_rng = ChaCha20Rng::seed_from_u64(errors.seed);
    switch_rng.set_stream(0);
    let switch_z = normal(&mut switch_rng);

    let kb = BOLTZMANN * chain.bandwidth_hz;
    let floor = errors.analyzer_noise_floor_w_per_hz * chain.bandwidth_hz;
    let t_err = if errors.thermometer_sigma_k > 0.0 {
        errors.thermometer_sigma_k
    } else {
        QUOTED_ERROR_FLOOR
    };
    let p_err_db = if errors.analyzer_sigma_db > 0.0 {
        errors.analyzer_sigma_db
    } else {
        QUOTED_ERROR_FLOOR
    };

    let mut samples = Vec::with_capacity(plan.setpoints.len() * plan.f_signals.len());
    let mut low_snr = Vec::with_capacity(samples.capacity());
    let mut truths = Vec::with_capacity(plan.f_signals.len());
    for (idx, &f) in plan.f_signals.iter().enumerate() {
        let truth = path_truth(plan, chain, twpa_model, f)?;
        let mut rng = ChaCha20Rng::seed_from_u64(errors.seed);
        rng.set_stream(idx as u64 + 1);
        let switch_db = switch_z * errors.switch_db_at(f);
        let gain = chain.g_tot.ratio() * truth.g_path;
        for &t_set in &plan.setpoints {
            let t_noise = errors.thermometer_sigma_k * normal(&mut rng);
            let p_noise_db = errors.analyzer_sigma_db * normal(&mut rng);
            let g_noise_db = errors.analyzer_sigma_db * normal(&mut rng);
            let gc_noise_db = errors.analyzer_sigma_db * normal(&mut rng);

            let p_true = gain * kb * (truth.input_noise(f, t_set) + truth.offset);
            let p_out = p_true * from_db(p_noise_db + switch_db);
            low_snr.push(to_db(p_out / floor) < MIN_SNR_DB);
            samples.push(NoiseSample {
                path: plan.path,
                f_signal: f,
                f_idler: truth.f_idler,
                t_bath: (t_set + t_noise).max(0.0),
                t_bath_err: t_err,
                p_out,
                p_out_err_db: p_err_db,
                g_twpa_db: truth.g_twpa_db.map(|g| g + switch_db + g_noise_db),
                g_conv_db: truth.g_conv_db.map(|g| g + switch_db + gc_noise_db),
            });
        }
        let t_sys_base = truth.offset + truth.input_noise(f, REFERENCE_BATH_K);
        let intrinsic = truth.g_twpa_db.map(|_| {
            let hemt = chain.thru_added_noise() + input_noise_raw(f.hz(), REFERENCE_BATH_K);
            t_sys_base - hemt / truth.g_path
        });
        truths.push(FrequencyTruth {
            f_signal: f,
            offset_k: truth.offset,
            alpha_k_per_w: 1.0 / (gain * kb),
            t_sys_base_k: t_sys_base,
            g_twpa_db: truth.g_twpa_db,
            g_conv_db: truth.g_conv_db,
            intrinsic_k: intrinsic,
            switch_offset_db: switch_db,
        });
    }
    let n_low = low_snr.iter().filter(|b| **b).count();
    if n_low > 0 {
        log::warn!("{n_low} samples are less than {MIN_SNR_DB} dB above the analyzer floor");
    }
    Ok(Campaign {
        samples,
        low_snr,
        truth: CampaignTruth {
            path: plan.path,
            chain: chain.clone(),
            twpa: twpa_model.copied(),
            seed: errors.seed,
            frequencies: truths,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Backaction {
    /// Pump power reaching the noise source, W.
    pub leakage_w: f64,
    /// Leakage relative to the heater power.
    pub ratio: f64,
}

/// Pump power leaking back to the noise source through the coupler
/// (directivity) after reflection at the TWPA input.
pub fn pump_backaction_budget(
    directivity_db: f64,
    twpa_reflection_db: f64,
    pump_power_w: f64,
    heater_power_w: f64,
) -> Result<Backaction> {
    if !(pump_power_w >= 0.0 && pump_power_w.is_finite()) {
        return Err(Error::InvalidValue {
            quantity: "pump power",
            value: pump_power_w,
            reason: "must be >= 0",
        });
    }
    if !(heater_power_w > 0.0 && heater_power_w.is_finite()) {
        return Err(Error::InvalidValue {
            quantity: "heater power",
            value: heater_power_w,
            reason: "must be > 0",
        });
    }
    let leakage_w = pump_power_w * from_db(-(directivity_db + twpa_reflection_db));
    Ok(Backaction {
        leakage_w,
        ratio: leakage_w / heater_power_w,
    })
}
