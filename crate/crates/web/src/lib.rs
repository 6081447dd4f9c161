//! Browser bindings: a TWPA gain sweep, a Y-factor fit of a simulated
//! campaign and a noise-source thermal decay. Every operation returns a JSON
//! string so the page needs no generated type definitions.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cryonoise::noisecalc::ChainConfig;
use cryonoise::thermal::{self, DecayFit, ThermalConfig};
use cryonoise::twpa::{self, GainSweepPoint, PumpSetting, TwpaParams};
use cryonoise::vlab::{self, CampaignPlan, InstrumentErrors};
use cryonoise::yfit::{self, LossBounds};
use cryonoise::{Frequency, LinearGain, NoiseTemperature};

type Result<T> = std::result::Result<T, cryonoise::Error>;

const MAX_POINTS: usize = 4001;

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub points: Vec<GainSweepPoint>,
    pub bands: Vec<(f64, f64)>,
    pub peak_gain_db: f64,
    pub loss_participation: f64,
}

/// Pumped gain over `[f_start_ghz, f_stop_ghz]` for the nominal device with
/// its bare loss calibrated to `loss_db_at_8ghz`.
pub fn sweep(
    f_start_ghz: f64,
    f_stop_ghz: f64,
    points: usize,
    f_pump_ghz: f64,
    ip_ratio: f64,
    loss_db_at_8ghz: f64,
) -> Result<SweepView> {
    if points > MAX_POINTS {
        return Err(cryonoise::Error::InvalidInput(format!(
            "at most {MAX_POINTS} sweep points"
        )));
    }
    let mut params = TwpaParams::nominal();
    params.loss_participation =
        twpa::calibrate_loss_participation(&params, Frequency::from_ghz(8.0)?, loss_db_at_8ghz)?;
    let grid = twpa::linear_grid(
        Frequency::from_ghz(f_start_ghz)?,
        Frequency::from_ghz(f_stop_ghz)?,
        points,
    )?;
    let pump = PumpSetting::with_ratio(Frequency::from_ghz(f_pump_ghz)?, ip_ratio);
    let points = twpa::gain_sweep(&params, &pump, &grid)?;
    let peak_gain_db = points
        .iter()
        .map(|p| p.gain_db)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(SweepView {
        bands: twpa::gain_bands(&points, 10.0),
        points,
        peak_gain_db,
        loss_participation: params.loss_participation,
    })
}

#[derive(Debug, Serialize)]
pub struct FitPointView {
    pub p_out_w: f64,
    pub p_out_sigma_w: f64,
    pub t_in_k: f64,
    pub t_in_sigma_k: f64,
}

#[derive(Debug, Serialize)]
pub struct YFactorView {
    pub points: Vec<FitPointView>,
    pub slope_k_per_w: f64,
    pub offset_k: f64,
    pub offset_err_k: f64,
    pub reduced_chi2: f64,
    pub t_sys_k: f64,
    pub t_sys_lo_k: f64,
    pub t_sys_hi_k: f64,
    pub true_offset_k: f64,
}

fn demo_chain(t_hemt_k: f64) -> Result<ChainConfig> {
    Ok(ChainConfig {
        g_hemt: LinearGain::from_db(40.0)?,
        t_hemt: NoiseTemperature::new(t_hemt_k)?,
        t_bkg: NoiseTemperature::new(300.0)?,
        twpa: None,
        g_att: LinearGain::UNITY,
        t_att: NoiseTemperature::new(0.01)?,
        bandwidth_hz: 100.0,
        g_tot: LinearGain::from_db(90.0)?,
    })
}

/// Simulate a thru-path campaign at `f_ghz` and fit it back.
pub fn yfactor(seed: u64, f_ghz: f64, t_hemt_k: f64, noiseless: bool) -> Result<YFactorView> {
    let chain = demo_chain(t_hemt_k)?;
    let plan = CampaignPlan::thru(vec![Frequency::from_ghz(f_ghz)?]);
    let errors = if noiseless {
        InstrumentErrors::noiseless(seed)
    } else {
        InstrumentErrors::nominal(seed)
    };
    let campaign = vlab::simulate_campaign(&plan, &chain, None, &errors)?;
    let analysis = yfit::analyze_path(&campaign.samples, &chain, &LossBounds::thru())?;
    let points = yfit::build_fit_points_with(&campaign.samples, &analysis.model)?
        .into_iter()
        .map(|p| FitPointView {
            p_out_w: p.x,
            p_out_sigma_w: p.sigma_x,
            t_in_k: p.y,
            t_in_sigma_k: p.sigma_y,
        })
        .collect();
    Ok(YFactorView {
        points,
        slope_k_per_w: analysis.fit.alpha,
        offset_k: analysis.fit.offset,
        offset_err_k: analysis.fit.offset_err,
        reduced_chi2: analysis.fit.reduced_chi2,
        t_sys_k: analysis.t_sys.value,
        t_sys_lo_k: analysis.t_sys.err_lo,
        t_sys_hi_k: analysis.t_sys.err_hi,
        true_offset_k: campaign.truth.frequencies[0].offset_k,
    })
}

#[derive(Debug, Serialize)]
pub struct DecayView {
    pub samples: Vec<(f64, f64)>,
    pub fit: DecayFit,
    pub tau_model_s: f64,
    pub heater_w: f64,
}

/// Cool from `t_from_k` towards the set point `t_to_k` with the heater held
/// at the power that sustains the set point.
pub fn decay(t_from_k: f64, t_to_k: f64, t_flange_k: f64) -> Result<DecayView> {
    let cfg = ThermalConfig::nominal();
    let tau = thermal::time_constant(&cfg, t_to_k)?;
    let heater = thermal::heater_power_for_setpoint(&cfg, t_to_k, t_flange_k)?;
    let duration = 8.0 * tau;
    let curve = thermal::simulate_decay(
        &cfg,
        t_from_k,
        t_flange_k,
        heater,
        duration,
        duration / 400.0,
    )?;
    let fit = thermal::fit_exponential_decay(&curve)?;
    Ok(DecayView {
        samples: curve.samples,
        fit,
        tau_model_s: tau,
        heater_w: heater,
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn twpa_sweep(
    f_start_ghz: f64,
    f_stop_ghz: f64,
    points: usize,
    f_pump_ghz: f64,
    ip_ratio: f64,
    loss_db_at_8ghz: f64,
) -> std::result::Result<String, JsError> {
    to_js(sweep(
        f_start_ghz,
        f_stop_ghz,
        points,
        f_pump_ghz,
        ip_ratio,
        loss_db_at_8ghz,
    ))
}

#[wasm_bindgen]
pub fn yfactor_fit(
    seed: u32,
    f_ghz: f64,
    t_hemt_k: f64,
    noiseless: bool,
) -> std::result::Result<String, JsError> {
    to_js(yfactor(seed.into(), f_ghz, t_hemt_k, noiseless))
}

#[wasm_bindgen]
pub fn thermal_decay(
    t_from_k: f64,
    t_to_k: f64,
    t_flange_k: f64,
) -> std::result::Result<String, JsError> {
    to_js(decay(t_from_k, t_to_k, t_flange_k))
}
