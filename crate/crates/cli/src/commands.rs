use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cryonoise::io::document::{
    format_document, format_sweep_csv, read_decay_csv, write_decay_csv, write_sweep_csv,
};
use cryonoise::io::touchstone::{attenuation_report, AttenuationReport};
use cryonoise::io::{
    read_document, read_noise_csv, read_run_config, read_touchstone_subset, write_document,
    write_noise_csv, Document, Meta, RunConfig,
};
use cryonoise::noisecalc::{
    self, effective_input_noise, idler_frequency, planck_input_noise, planck_input_noise_slope,
    standard_quantum_limit, ChainConfig,
};
use cryonoise::thermal::{self, DecayFit, ThermalConfig};
use cryonoise::twpa::{self, PumpSetting, TwpaParams};
use cryonoise::vlab::{self, CampaignPlan, CampaignTruth, InstrumentErrors};
use cryonoise::yfit::{self, IntrinsicReport, LossBounds, PathAnalysis, SignalPath};
use cryonoise::{Estimate, Frequency, LinearGain, NoiseTemperature};

const DEFAULT_PUMP_HZ: f64 = 5.968e9;
const CHECK_TRUTH_MAX_Z: f64 = 3.0;

#[derive(Debug, Parser)]
#[command(
    name = "cryonoise",
    version,
    about = "Cryogenic amplifier noise toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// TWPA transmission model.
    #[command(subcommand)]
    Twpa(TwpaCmd),
    /// Input noise, Y-factor fits and photon numbers.
    #[command(subcommand)]
    Noise(NoiseCmd),
    /// Noise-source thermal model.
    #[command(subcommand)]
    Thermal(ThermalCmd),
    /// Synthetic measurement campaigns.
    #[command(subcommand)]
    Vlab(VlabCmd),
    /// Touchstone S-parameter files.
    #[command(subcommand)]
    Sparam(SparamCmd),
}

#[derive(Debug, Subcommand)]
pub enum TwpaCmd {
    /// Gain, loss and conversion-gain sweep as CSV.
    Gain(GainArgs),
}

#[derive(Debug, Args)]
pub struct GainArgs {
    /// Sweep start, Hz.
    #[arg(long, default_value_t = 4e9)]
    pub f_start: f64,
    /// Sweep stop, Hz.
    #[arg(long, default_value_t = 8e9)]
    pub f_stop: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 401)]
    pub points: usize,
    /// Pump frequency, Hz (config `pump`, else 5.968 GHz).
    #[arg(long)]
    pub f_pump: Option<f64>,
    /// Pump current as a fraction of the critical current.
    #[arg(long)]
    pub ip_ratio: Option<f64>,
    /// Rescale the loss participation to give this bare loss (dB) at 8 GHz.
    /// Without a config the nominal device is calibrated to 4.5 dB.
    #[arg(long)]
    pub target_loss_db: Option<f64>,
    /// Gain threshold for the reported band, dB.
    #[arg(long, default_value_t = 10.0)]
    pub band_threshold_db: f64,
}

#[derive(Debug, Subcommand)]
pub enum NoiseCmd {
    /// Fit Y-factor lines and build error budgets.
    Fit(FitArgs),
    /// Quantum-corrected input noise of a matched load.
    Input(InputArgs),
    /// Intrinsic TWPA noise in photons.
    Photons(PhotonArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Noise-sample CSV; repeat for several files.
    #[arg(long, required = true)]
    pub samples: Vec<PathBuf>,
    /// Truth sidecar written by `vlab generate`; repeatable.
    #[arg(long)]
    pub truth: Vec<PathBuf>,
    /// Compare fitted offsets against the truth sidecars.
    #[arg(long, requires = "truth")]
    pub check_truth: bool,
    /// Only analyse this path.
    #[arg(long)]
    pub path: Option<SignalPath>,
    /// Override the insertion-loss gain bound, dB (<= 0).
    #[arg(long, allow_hyphen_values = true)]
    pub dg_att_db: Option<f64>,
    /// Override the attenuator temperature bound, K (<= 0).
    #[arg(long, allow_hyphen_values = true)]
    pub dt_att_k: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Signal frequency, Hz.
    #[arg(long = "f", allow_hyphen_values = true)]
    pub f: f64,
    /// Bath temperature, K.
    #[arg(long, allow_hyphen_values = true)]
    pub t_bath: f64,
    /// Thermometer error, K; adds the propagated error.
    #[arg(long)]
    pub t_bath_err: Option<f64>,
    /// Pump frequency, Hz; adds the idler term.
    #[arg(long, requires_all = ["g_twpa_db", "g_conv_db"])]
    pub f_pump: Option<f64>,
    /// TWPA signal gain, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub g_twpa_db: Option<f64>,
    /// TWPA conversion gain, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub g_conv_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PhotonArgs {
    /// Fit report from `noise fit`.
    #[arg(long, conflicts_with_all = ["f", "t_sys_twpa", "t_sys_hemt", "g_twpa_db"])]
    pub report: Option<PathBuf>,
    /// Signal frequency, Hz.
    #[arg(long = "f", requires_all = ["t_sys_twpa", "t_sys_hemt", "g_twpa_db"])]
    pub f: Option<f64>,
    /// System noise through the TWPA path, K.
    #[arg(long)]
    pub t_sys_twpa: Option<f64>,
    /// Lower error of `--t-sys-twpa`, K.
    #[arg(long, default_value_t = 0.0)]
    pub t_sys_twpa_lo: f64,
    /// Upper error of `--t-sys-twpa`, K.
    #[arg(long, default_value_t = 0.0)]
    pub t_sys_twpa_hi: f64,
    /// System noise through the thru path, K.
    #[arg(long)]
    pub t_sys_hemt: Option<f64>,
    /// Lower error of `--t-sys-hemt`, K.
    #[arg(long, default_value_t = 0.0)]
    pub t_sys_hemt_lo: f64,
    /// Upper error of `--t-sys-hemt`, K.
    #[arg(long, default_value_t = 0.0)]
    pub t_sys_hemt_hi: f64,
    /// TWPA signal gain, dB.
    #[arg(long, allow_hyphen_values = true)]
    pub g_twpa_db: Option<f64>,
    /// Error of `--g-twpa-db`, dB.
    #[arg(long, default_value_t = 0.0)]
    pub g_twpa_err_db: f64,
}

#[derive(Debug, Subcommand)]
pub enum ThermalCmd {
    /// Time constant C/G at one or more temperatures.
    Tau(TauArgs),
    /// Simulate (or read) a decay curve and fit its time constant.
    Decay(DecayArgs),
    /// Weak-link heat flow between two temperatures.
    Power(PowerArgs),
}

#[derive(Debug, Args)]
pub struct TauArgs {
    /// Temperature, K; repeatable. Defaults to a 0.1-5 K log grid.
    #[arg(long = "t")]
    pub t: Vec<f64>,
    /// Grid size when no `--t` is given.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    /// Fit this decay CSV instead of simulating.
    #[arg(long, conflicts_with_all = ["curve_out"])]
    pub input: Option<PathBuf>,
    /// Starting body temperature, K.
    #[arg(long, default_value_t = 1.0)]
    pub from: f64,
    /// Setpoint the heater is switched to, K.
    #[arg(long, default_value_t = 0.5)]
    pub to: f64,
    /// Mixing-chamber flange temperature, K.
    #[arg(long, default_value_t = 0.1)]
    pub t_flange: f64,
    /// Record length, s (default 8 time constants at the setpoint).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sample interval, s (default duration / 400).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Write the simulated curve as CSV.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    /// Noise-source side, K.
    #[arg(long, default_value_t = 1.0)]
    pub t_hot: f64,
    /// Flange side, K.
    #[arg(long, default_value_t = 0.1)]
    pub t_cold: f64,
}

#[derive(Debug, Subcommand)]
pub enum VlabCmd {
    /// Generate a seeded sample table plus a truth sidecar.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Campaign plan JSON (else the config `plan` section).
    #[arg(long)]
    pub plan: Option<PathBuf>,
    /// Where to write the truth sidecar JSON.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Switch off every instrument error.
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Debug, Subcommand)]
pub enum SparamCmd {
    /// Attenuation flatness and match summary.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Touchstone .s2p file.
    #[arg(long)]
    pub input: PathBuf,
}

struct Ctx<'a> {
    global: &'a Global,
    argv: &'a [String],
    config: Option<RunConfig>,
}

impl Ctx<'_> {
    fn meta(&self) -> Meta {
        Meta::new(self.argv.to_vec()).with_seed(self.global.seed)
    }

    fn config(&self) -> Result<&RunConfig> {
        self.config
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs --config"))
    }

    fn emit<T: Serialize>(&self, kind: &str, meta: Meta, data: T) -> Result<()> {
        let doc = Document::new(kind, meta, data);
        match &self.global.out {
            Some(p) => write_document(&doc, p).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{}", format_document(&doc)?);
                Ok(())
            }
        }
    }
}

pub fn run(cli: Cli, argv: &[String]) -> Result<ExitCode> {
    let config = cli
        .global
        .config
        .as_deref()
        .map(|p| read_run_config(p).with_context(|| format!("reading config {}", p.display())))
        .transpose()?;
    let ctx = Ctx {
        global: &cli.global,
        argv,
        config,
    };
    match &cli.command {
        Command::Twpa(TwpaCmd::Gain(a)) => twpa_gain(&ctx, a),
        Command::Noise(NoiseCmd::Fit(a)) => noise_fit(&ctx, a),
        Command::Noise(NoiseCmd::Input(a)) => noise_input(&ctx, a),
        Command::Noise(NoiseCmd::Photons(a)) => noise_photons(&ctx, a),
        Command::Thermal(ThermalCmd::Tau(a)) => thermal_tau(&ctx, a),
        Command::Thermal(ThermalCmd::Decay(a)) => thermal_decay(&ctx, a),
        Command::Thermal(ThermalCmd::Power(a)) => thermal_power(&ctx, a),
        Command::Vlab(VlabCmd::Generate(a)) => vlab_generate(&ctx, a),
        Command::Sparam(SparamCmd::Report(a)) => sparam_report(&ctx, a),
    }
}

fn freq(hz: f64) -> Result<Frequency> {
    Ok(Frequency::new(hz)?)
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    params: TwpaParams,
    pump: PumpSetting,
    points: usize,
    max_gain_db: f64,
    max_gain_f_hz: f64,
    band_threshold_db: f64,
    /// Contiguous frequency runs at or above the threshold, Hz.
    bands: Vec<(f64, f64)>,
    loss_8ghz_db: f64,
    ripple_spacing_hz: f64,
}

fn twpa_gain(ctx: &Ctx, a: &GainArgs) -> Result<ExitCode> {
    let from_config = ctx.config.as_ref().and_then(|c| c.twpa);
    let mut params = from_config.unwrap_or_else(TwpaParams::nominal);
    let eight = freq(8e9)?;
    match a.target_loss_db {
        Some(db) => {
            params.loss_participation = twpa::calibrate_loss_participation(&params, eight, db)?
        }
        None if from_config.is_none() => {
            params.loss_participation = twpa::calibrate_loss_participation(&params, eight, 4.5)?
        }
        None => {}
    }
    if let Some(r) = a.ip_ratio {
        params.i_p_ratio = r;
    }
    params.validate()?;
    let mut pump = ctx
        .config
        .as_ref()
        .and_then(|c| c.pump)
        .unwrap_or(PumpSetting::new(freq(DEFAULT_PUMP_HZ)?));
    if let Some(fp) = a.f_pump {
        pump.f_p = freq(fp)?;
    }
    if a.ip_ratio.is_some() {
        pump.i_p_ratio = None;
    }
    let grid = twpa::linear_grid(freq(a.f_start)?, freq(a.f_stop)?, a.points)?;
    let sweep = twpa::gain_sweep(&params, &pump, &grid)?;
    let best = sweep
        .iter()
        .max_by(|x, y| x.gain_db.total_cmp(&y.gain_db))
        .copied()
        .ok_or_else(|| anyhow!("empty sweep"))?;
    let summary = SweepSummary {
        params,
        pump,
        points: sweep.len(),
        max_gain_db: best.gain_db,
        max_gain_f_hz: best.f_hz,
        band_threshold_db: a.band_threshold_db,
        bands: twpa::gain_bands(&sweep, a.band_threshold_db),
        loss_8ghz_db: twpa::bare_loss_db(&params, eight)?,
        ripple_spacing_hz: params.ripple_spacing_hz(),
    };
    match &ctx.global.out {
        Some(p) => {
            write_sweep_csv(&sweep, p)?;
            let meta = ctx.meta().with_config(&(params, pump))?;
            let doc = Document::new("sweep-summary", meta, summary);
            print!("{}", format_document(&doc)?);
        }
        None => print!("{}", format_sweep_csv(&sweep)),
    }
    Ok(ExitCode::SUCCESS)
}

/// Sidecar written next to a generated sample table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub truth: CampaignTruth,
    /// Zero-based sample rows within 10 dB of the analyzer floor.
    pub low_snr_rows: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct FitOutput {
    analyses: Vec<PathAnalysis>,
    intrinsic: Vec<IntrinsicReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_check: Option<TruthCheck>,
}

#[derive(Debug, Serialize)]
struct TruthEntry {
    path: SignalPath,
    f_signal_hz: f64,
    quantity: &'static str,
    fitted: f64,
    sigma: f64,
    truth: f64,
    z: f64,
    covered_1sigma: bool,
}

#[derive(Debug, Serialize)]
struct TruthCheck {
    rule: String,
    entries: Vec<TruthEntry>,
    covered_1sigma: usize,
    total: usize,
    pass: bool,
}

fn freq_key(f: Frequency) -> u64 {
    (f.hz() * 1e3).round() as u64
}

fn noise_fit(ctx: &Ctx, a: &FitArgs) -> Result<ExitCode> {
    let mut samples = Vec::new();
    for p in &a.samples {
        samples.extend(read_noise_csv(p)?);
    }
    let sidecars: Vec<Sidecar> = a
        .truth
        .iter()
        .map(|p| Ok(read_document::<Sidecar>(p, "truth")?.data))
        .collect::<Result<_>>()?;
    let chain: ChainConfig = match (&ctx.config, sidecars.first()) {
        (Some(c), _) => c.chain.clone(),
        (None, Some(s)) => s.truth.chain.clone(),
        (None, None) => bail!("noise fit needs --config (chain section) or a --truth sidecar"),
    };
    let base_bounds = ctx.config.as_ref().and_then(|c| c.bounds);

    let mut analyses = Vec::new();
    for ((path, _), group) in yfit::group_samples(&samples) {
        if a.path.is_some_and(|p| p != path) {
            continue;
        }
        let mut bounds = base_bounds.unwrap_or_else(|| LossBounds::for_path(path));
        if let Some(v) = a.dg_att_db {
            bounds.dg_att_db = v;
        }
        if let Some(v) = a.dt_att_k {
            bounds.dt_att_k = v;
        }
        let f = group[0].f_signal;
        let analysis = yfit::analyze_path(&group, &chain, &bounds)
            .with_context(|| format!("{path} path at {} Hz", f.hz()))?;
        analyses.push(analysis);
    }
    if analyses.is_empty() {
        bail!("no samples to analyse");
    }

    let thru: BTreeMap<u64, &PathAnalysis> = analyses
        .iter()
        .filter(|x| x.path == SignalPath::Thru)
        .map(|x| (freq_key(x.f_signal), x))
        .collect();
    let intrinsic = analyses
        .iter()
        .filter(|x| x.path == SignalPath::Twpa)
        .filter_map(|tw| thru.get(&freq_key(tw.f_signal)).map(|th| (*th, tw)))
        .map(|(th, tw)| yfit::intrinsic_from_paths(th, tw))
        .collect::<cryonoise::Result<Vec<_>>>()?;

    let truth_check = a
        .check_truth
        .then(|| check_truth(&analyses, &intrinsic, &sidecars));
    let failed = truth_check.as_ref().is_some_and(|c| !c.pass);
    let meta = ctx.meta().with_config(&chain)?;
    ctx.emit(
        "fit",
        meta,
        FitOutput {
            analyses,
            intrinsic,
            truth_check,
        },
    )?;
    Ok(if failed {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn check_truth(
    analyses: &[PathAnalysis],
    intrinsic: &[IntrinsicReport],
    sidecars: &[Sidecar],
) -> TruthCheck {
    let mut entries = Vec::new();
    let entry = |path, f: Frequency, quantity, fitted: f64, sigma: f64, truth: f64| {
        let z = (fitted - truth) / sigma;
        TruthEntry {
            path,
            f_signal_hz: f.hz(),
            quantity,
            fitted,
            sigma,
            truth,
            z,
            covered_1sigma: z.abs() <= 1.0,
        }
    };
    let lookup = |path: SignalPath, f: Frequency| {
        sidecars
            .iter()
            .filter(|s| s.truth.path == path)
            .flat_map(|s| s.truth.frequencies.iter())
            .find(|t| freq_key(t.f_signal) == freq_key(f))
    };
    for x in analyses {
        if let Some(t) = lookup(x.path, x.f_signal) {
            entries.push(entry(
                x.path,
                x.f_signal,
                "offset",
                x.fit.offset,
                x.fit.offset_err,
                t.offset_k,
            ));
        }
    }
    for r in intrinsic {
        if let Some(truth) = lookup(SignalPath::Twpa, r.f_signal).and_then(|t| t.intrinsic_k) {
            let sigma = if r.t_twpa.value > truth {
                r.t_twpa.err_lo
            } else {
                r.t_twpa.err_hi
            };
            entries.push(entry(
                SignalPath::Twpa,
                r.f_signal,
                "intrinsic",
                r.t_twpa.value,
                sigma,
                truth,
            ));
        }
    }
    let covered = entries.iter().filter(|e| e.covered_1sigma).count();
    let pass = !entries.is_empty() && entries.iter().all(|e| e.z.abs() <= CHECK_TRUTH_MAX_Z);
    TruthCheck {
        rule: format!("every |z| <= {CHECK_TRUTH_MAX_Z}"),
        total: entries.len(),
        covered_1sigma: covered,
        entries,
        pass,
    }
}

#[derive(Debug, Serialize)]
struct IdlerTerm {
    f_pump_hz: f64,
    f_idler_hz: f64,
    g_twpa_db: f64,
    g_conv_db: f64,
    t_in_eff_k: f64,
}

#[derive(Debug, Serialize)]
struct InputNoise {
    f_signal_hz: f64,
    t_bath_k: f64,
    t_in_k: f64,
    /// d T_in / d T_bath.
    slope: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_in_err_k: Option<f64>,
    half_photon_k: f64,
    sql_k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    idler: Option<IdlerTerm>,
}

fn noise_input(ctx: &Ctx, a: &InputArgs) -> Result<ExitCode> {
    let f = freq(a.f)?;
    let t = NoiseTemperature::new(a.t_bath)?;
    let t_in = planck_input_noise(f, t).kelvin();
    let slope = planck_input_noise_slope(f, t);
    let idler = match (a.f_pump, a.g_twpa_db, a.g_conv_db) {
        (Some(fp), Some(g), Some(gc)) => {
            let fp = freq(fp)?;
            let g_twpa = LinearGain::from_db(g)?;
            let ratio = LinearGain::from_db(gc)?.ratio() / g_twpa.ratio();
            Some(IdlerTerm {
                f_pump_hz: fp.hz(),
                f_idler_hz: idler_frequency(fp, f)?.hz(),
                g_twpa_db: g,
                g_conv_db: gc,
                t_in_eff_k: effective_input_noise(f, fp, t, g_twpa, ratio)?.kelvin(),
            })
        }
        _ => None,
    };
    let out = InputNoise {
        f_signal_hz: f.hz(),
        t_bath_k: t.kelvin(),
        t_in_k: t_in,
        slope,
        t_in_err_k: a.t_bath_err.map(|e| slope * e),
        half_photon_k: noisecalc::half_photon_temperature(f),
        sql_k: standard_quantum_limit(f).kelvin(),
        idler,
    };
    ctx.emit("input-noise", ctx.meta(), out)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Deserialize)]
struct FitReportIn {
    intrinsic: Vec<IntrinsicReport>,
}

#[derive(Debug, Serialize)]
struct PhotonSummary {
    points: Vec<IntrinsicReport>,
    average: Estimate,
}

fn noise_photons(ctx: &Ctx, a: &PhotonArgs) -> Result<ExitCode> {
    let points = match (&a.report, a.f) {
        (Some(p), _) => read_document::<FitReportIn>(p, "fit")?.data.intrinsic,
        (None, Some(f)) => {
            let need =
                |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow!("--{name} is required"));
            let twpa = Estimate::new(
                need(a.t_sys_twpa, "t-sys-twpa")?,
                a.t_sys_twpa_lo,
                a.t_sys_twpa_hi,
            );
            let thru = Estimate::new(
                need(a.t_sys_hemt, "t-sys-hemt")?,
                a.t_sys_hemt_lo,
                a.t_sys_hemt_hi,
            );
            vec![yfit::intrinsic_twpa_report(
                &thru,
                &twpa,
                freq(f)?,
                need(a.g_twpa_db, "g-twpa-db")?,
                a.g_twpa_err_db,
            )?]
        }
        (None, None) => bail!("give --report or --f with the system noise values"),
    };
    if points.is_empty() {
        bail!("report has no intrinsic-noise entries (needs thru and twpa paths at a common frequency)");
    }
    let photons: Vec<Estimate> = points.iter().map(|p| p.photons).collect();
    let average = noisecalc::weighted_average_photons(&photons)?;
    ctx.emit("photons", ctx.meta(), PhotonSummary { points, average })?;
    Ok(ExitCode::SUCCESS)
}

fn thermal_config(ctx: &Ctx) -> ThermalConfig {
    ctx.config
        .as_ref()
        .and_then(|c| c.thermal)
        .unwrap_or_else(ThermalConfig::nominal)
}

#[derive(Debug, Serialize)]
struct TauRow {
    t_k: f64,
    heat_capacity_j_per_k: f64,
    conductance_w_per_k: f64,
    tau_s: f64,
    bead_share: f64,
}

fn thermal_tau(ctx: &Ctx, a: &TauArgs) -> Result<ExitCode> {
    let cfg = thermal_config(ctx);
    cfg.validate()?;
    let temps = if a.t.is_empty() {
        if a.points < 2 {
            bail!("--points must be >= 2");
        }
        let (lo, hi) = (0.1f64.ln(), 5f64.ln());
        (0..a.points)
            .map(|i| (lo + (hi - lo) * i as f64 / (a.points - 1) as f64).exp())
            .collect()
    } else {
        a.t.clone()
    };
    let rows = temps
        .iter()
        .map(|&t| {
            Ok(TauRow {
                t_k: t,
                heat_capacity_j_per_k: thermal::heat_capacity(&cfg, t),
                conductance_w_per_k: thermal::conductance(&cfg, t),
                tau_s: thermal::time_constant(&cfg, t)?,
                bead_share: thermal::bead_share(&cfg, t),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.emit("thermal-tau", ctx.meta().with_config(&cfg)?, rows)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct DecayOutput {
    samples: usize,
    fit: DecayFit,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau_model_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
}

fn thermal_decay(ctx: &Ctx, a: &DecayArgs) -> Result<ExitCode> {
    let cfg = thermal_config(ctx);
    let (curve, tau_model) = match &a.input {
        Some(p) => (read_decay_csv(p)?, None),
        None => {
            let tau = thermal::time_constant(&cfg, a.to)?;
            let duration = a.duration.unwrap_or(8.0 * tau);
            let dt = a.dt.unwrap_or(duration / 400.0);
            let heater = thermal::heater_power_for_setpoint(&cfg, a.to, a.t_flange)?;
            let curve = thermal::simulate_decay(&cfg, a.from, a.t_flange, heater, duration, dt)?;
            if let Some(p) = &a.curve_out {
                write_decay_csv(&curve, p)?;
            }
            (curve, Some(tau))
        }
    };
    let fit = thermal::fit_exponential_decay(&curve)?;
    let out = DecayOutput {
        samples: curve.samples.len(),
        fit,
        tau_model_s: tau_model,
        relative_error: tau_model.map(|t| (fit.tau - t) / t),
    };
    ctx.emit("thermal-decay", ctx.meta().with_config(&cfg)?, out)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct PowerOutput {
    t_hot_k: f64,
    t_cold_k: f64,
    power_w: f64,
    screws_w: f64,
    beads_w: f64,
    crossover_k: f64,
}

fn thermal_power(ctx: &Ctx, a: &PowerArgs) -> Result<ExitCode> {
    let cfg = thermal_config(ctx);
    cfg.validate()?;
    let power = thermal::weak_link_power(&cfg, a.t_hot, a.t_cold)?;
    let out = PowerOutput {
        t_hot_k: a.t_hot,
        t_cold_k: a.t_cold,
        power_w: power,
        screws_w: cfg.screws.power(&cfg.anchor, a.t_hot, a.t_cold),
        beads_w: cfg.beads.power(&cfg.anchor, a.t_hot, a.t_cold),
        crossover_k: thermal::crossover_temperature(&cfg),
    };
    ctx.emit("thermal-power", ctx.meta().with_config(&cfg)?, out)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct GenerateSummary {
    samples: usize,
    low_snr_rows: usize,
    seed: u64,
}

fn vlab_generate(ctx: &Ctx, a: &GenerateArgs) -> Result<ExitCode> {
    let cfg = ctx.config()?;
    let plan: CampaignPlan = match &a.plan {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing plan {}", p.display()))?
        }
        None => cfg.plan()?.clone(),
    };
    let mut errors = cfg.errors.unwrap_or_else(|| InstrumentErrors::nominal(0));
    if a.noiseless {
        errors = InstrumentErrors::noiseless(errors.seed);
    }
    if let Some(s) = ctx.global.seed {
        errors.seed = s;
    }
    let campaign = vlab::simulate_campaign(&plan, &cfg.chain, cfg.twpa.as_ref(), &errors)?;
    let low: Vec<usize> = campaign
        .low_snr
        .iter()
        .enumerate()
        .filter_map(|(i, &l)| l.then_some(i))
        .collect();
    if !low.is_empty() {
        log::warn!(
            "{} samples are within 10 dB of the analyzer floor",
            low.len()
        );
    }
    let mut resolved = cfg.clone();
    resolved.plan = Some(plan);
    resolved.errors = Some(errors);
    let meta = Meta::new(ctx.argv.to_vec())
        .with_seed(Some(errors.seed))
        .with_config(&resolved)?;
    if let Some(p) = &a.sidecar {
        let sidecar = Sidecar {
            truth: campaign.truth.clone(),
            low_snr_rows: low.clone(),
        };
        write_document(&Document::new("truth", meta.clone(), sidecar), p)?;
    }
    match &ctx.global.out {
        Some(p) => {
            write_noise_csv(&campaign.samples, p)?;
            let summary = GenerateSummary {
                samples: campaign.samples.len(),
                low_snr_rows: low.len(),
                seed: errors.seed,
            };
            print!(
                "{}",
                format_document(&Document::new("generate", meta, summary))?
            );
        }
        None => print!(
            "{}",
            cryonoise::io::samples::format_noise_csv(&campaign.samples)
        ),
    }
    Ok(ExitCode::SUCCESS)
}

fn sparam_report(ctx: &Ctx, a: &ReportArgs) -> Result<ExitCode> {
    let table = read_touchstone_subset(&a.input)?;
    let report: AttenuationReport = attenuation_report(&table)?;
    ctx.emit("sparam-report", ctx.meta(), report)?;
    Ok(ExitCode::SUCCESS)
}
