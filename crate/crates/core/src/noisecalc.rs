//! Quantum-corrected noise temperatures and forward system-noise models.
//!
//! All functions are pure. Temperatures are in kelvin, frequencies in hertz,
//! powers in watts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Estimate, Frequency, LinearGain, NoiseTemperature, BOLTZMANN, PLANCK};

/// Reference bath of the mixing-chamber stage used when quoting system noise.
pub const REFERENCE_BATH_K: f64 = 0.010;

/// `h f / 2k` in kelvin: the vacuum (half-photon) noise temperature.
pub fn half_photon_temperature(f: Frequency) -> f64 {
    PLANCK * f.hz() / (2.0 * BOLTZMANN)
}

pub(crate) fn input_noise_raw(f_hz: f64, t_bath: f64) -> f64 {
    let x = PLANCK * f_hz / (2.0 * BOLTZMANN);
    if t_bath == 0.0 {
        return x;
    }
    x / (x / t_bath).tanh()
}

/// d T_in / d T_bath of the coth form, `(y / sinh y)^2` with `y = hf / 2kT`.
pub(crate) fn input_noise_slope_raw(f_hz: f64, t_bath: f64) -> f64 {
    if t_bath == 0.0 {
        return 0.0;
    }
    let y = PLANCK * f_hz / (2.0 * BOLTZMANN * t_bath);
    if y < 1e-4 {
        // series: 1 - y^2/3
        return 1.0 - y * y / 3.0;
    }
    let r = y / y.sinh();
    r * r
}

/// Input noise temperature emitted by a matched load at `t_bath`:
/// `(hf/2k) coth(hf / 2k t_bath)`, with the exact limit `hf/2k` at zero bath.
pub fn planck_input_noise(f: Frequency, t_bath: NoiseTemperature) -> NoiseTemperature {
    NoiseTemperature::new(input_noise_raw(f.hz(), t_bath.kelvin()))
        .expect("coth form is finite and non-negative")
}

/// Sensitivity of [`planck_input_noise`] to the bath temperature.
pub fn planck_input_noise_slope(f: Frequency, t_bath: NoiseTemperature) -> f64 {
    input_noise_slope_raw(f.hz(), t_bath.kelvin())
}

/// Four-wave-mixing idler, `2 f_p - f_s`.
pub fn idler_frequency(f_p: Frequency, f_s: Frequency) -> Result<Frequency> {
    let fi = 2.0 * f_p.hz() - f_s.hz();
    if fi <= 0.0 {
        return Err(Error::NonPositiveIdler(fi));
    }
    Frequency::new(fi)
}

/// Signal-band input noise plus the idler-band noise referred back to the
/// signal input through `g_conv / g_twpa`.
pub fn effective_input_noise(
    f_s: Frequency,
    f_p: Frequency,
    t_bath: NoiseTemperature,
    g_twpa: LinearGain,
    g_conv_ratio: f64,
) -> Result<NoiseTemperature> {
    let f_i = idler_frequency(f_p, f_s)?;
    if !(g_conv_ratio >= 0.0) || !g_conv_ratio.is_finite() {
        return Err(Error::InvalidValue {
            quantity: "conversion gain",
            value: g_conv_ratio,
            reason: "must be finite and >= 0",
        });
    }
    let signal = input_noise_raw(f_s.hz(), t_bath.kelvin());
    let idler = input_noise_raw(f_i.hz(), t_bath.kelvin());
    NoiseTemperature::new(signal + g_conv_ratio / g_twpa.ratio() * idler)
}

/// TWPA gain and conversion gain at one signal frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub f_hz: Frequency,
    pub g_twpa: LinearGain,
    pub g_conv: LinearGain,
}

/// The TWPA stage of the chain: intrinsic noise plus a per-frequency gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwpaStage {
    pub t_twpa: NoiseTemperature,
    pub f_pump: Frequency,
    pub gains: Vec<GainPoint>,
}

impl TwpaStage {
    /// Gains at `f`: exact grid hit, else linear interpolation in dB between
    /// the bracketing grid points.
    pub fn gains_at(&self, f: Frequency) -> Result<(LinearGain, LinearGain)> {
        let mut pts: Vec<&GainPoint> = self.gains.iter().collect();
        pts.sort_by(|a, b| a.f_hz.hz().total_cmp(&b.f_hz.hz()));
        let target = f.hz();
        if let Some(p) = pts.iter().find(|p| (p.f_hz.hz() - target).abs() <= 1e-3) {
            return Ok((p.g_twpa, p.g_conv));
        }
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.f_hz.hz() <= target && target <= b.f_hz.hz() {
                let t = (target - a.f_hz.hz()) / (b.f_hz.hz() - a.f_hz.hz());
                let lerp = |x: f64, y: f64| x + t * (y - x);
                return Ok((
                    LinearGain::from_db(lerp(a.g_twpa.db(), b.g_twpa.db()))?,
                    LinearGain::from_db(lerp(a.g_conv.db(), b.g_conv.db()))?,
                ));
            }
        }
        Err(Error::InvalidInput(format!(
            "no TWPA gain data covering {} Hz",
            target
        )))
    }
}

fn default_unity() -> LinearGain {
    LinearGain::UNITY
}

fn default_t_att() -> NoiseTemperature {
    NoiseTemperature::new(REFERENCE_BATH_K).unwrap()
}

fn default_g_tot() -> LinearGain {
    LinearGain::from_db(90.0).unwrap()
}

/// Lumped description of the amplification chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub g_hemt: LinearGain,
    pub t_hemt: NoiseTemperature,
    pub t_bkg: NoiseTemperature,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub twpa: Option<TwpaStage>,
    /// Insertion-loss correction factor (1 = uncorrected).
    #[serde(default = "default_unity")]
    pub g_att: LinearGain,
    /// Physical temperature of the lossy element.
    #[serde(default = "default_t_att")]
    pub t_att: NoiseTemperature,
    /// Detection bandwidth (analyzer resolution bandwidth), Hz.
    pub bandwidth_hz: f64,
    /// Total gain from the chain input to the analyzer.
    #[serde(default = "default_g_tot")]
    pub g_tot: LinearGain,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return Err(Error::InvalidValue {
                quantity: "bandwidth",
                value: self.bandwidth_hz,
                reason: "must be > 0",
            });
        }
        Ok(())
    }

    /// Noise added by everything after the HEMT, referred to its input.
    pub fn background_referred(&self) -> f64 {
        self.t_bkg.kelvin() / self.g_hemt.ratio()
    }

    /// Offset of the Thru-path Y-factor line, `T_HEMT + T_bkg / G_HEMT`.
    pub fn thru_added_noise(&self) -> f64 {
        self.t_hemt.kelvin() + self.background_referred()
    }

    fn twpa_stage(&self) -> Result<&TwpaStage> {
        self.twpa.as_ref().ok_or(Error::MissingTwpa(
            "chain.twpa (gain table and intrinsic noise)",
        ))
    }

    /// Offset of the TWPA-path Y-factor line at `f_s` (system noise minus input).
    pub fn twpa_excess_noise(&self, f_s: Frequency) -> Result<f64> {
        let stage = self.twpa_stage()?;
        let (g_twpa, _) = stage.gains_at(f_s)?;
        let g = g_twpa.ratio();
        Ok(self.t_bkg.kelvin() / (self.g_hemt.ratio() * g)
            + self.t_hemt.kelvin() / g
            + stage.t_twpa.kelvin())
    }
}

/// Thru-path output power, `g_tot k B (t_in + T_HEMT + T_bkg / G_HEMT)`.
pub fn expected_output_power_thru(
    chain: &ChainConfig,
    t_in: NoiseTemperature,
    g_tot: LinearGain,
) -> f64 {
    g_tot.ratio() * BOLTZMANN * chain.bandwidth_hz * (t_in.kelvin() + chain.thru_added_noise())
}

/// TWPA-path system noise referred to the TWPA input.
pub fn system_noise_twpa_forward(
    chain: &ChainConfig,
    f_s: Frequency,
    t_in_eff: NoiseTemperature,
) -> Result<NoiseTemperature> {
    NoiseTemperature::new(chain.twpa_excess_noise(f_s)? + t_in_eff.kelvin())
}

/// TWPA intrinsic noise from the two path system noises. The result is signed:
/// measurement scatter can push it below zero and it is not clamped.
pub fn twpa_intrinsic_noise(t_sys_twpa: f64, t_sys_hemt: f64, g_twpa: LinearGain) -> f64 {
    t_sys_twpa - t_sys_hemt / g_twpa.ratio()
}

/// `k T / h f`.
pub fn photons_from_temperature(t: f64, f: Frequency) -> f64 {
    BOLTZMANN * t / (PLANCK * f.hz())
}

/// One-photon system-noise limit `h f / k` (half-photon added plus half-photon
/// vacuum input).
pub fn standard_quantum_limit(f: Frequency) -> NoiseTemperature {
    NoiseTemperature::new(PLANCK * f.hz() / BOLTZMANN).expect("positive")
}

/// Inverse-variance weighted mean. Weights use the symmetrized sigma; the low
/// and high sides are propagated separately with the same weights. A single
/// point is returned unchanged, whatever its error bars.
pub fn weighted_average_photons(points: &[Estimate]) -> Result<Estimate> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to average".into()));
    }
    if let [only] = points {
        return Ok(*only);
    }
    for p in points {
        if !(p.err_lo > 0.0 && p.err_hi > 0.0) {
            return Err(Error::InvalidInput(format!(
                "non-positive error bar in ({}, -{}, +{})",
                p.value, p.err_lo, p.err_hi
            )));
        }
    }
    let weights: Vec<f64> = points.iter().map(|p| 1.0 / p.sigma().powi(2)).collect();
    let wsum: f64 = weights.iter().sum();
    let mean = points
        .iter()
        .zip(&weights)
        .map(|(p, w)| w * p.value)
        .sum::<f64>()
        / wsum;
    let side = |f: fn(&Estimate) -> f64| {
        points
            .iter()
            .zip(&weights)
            .map(|(p, w)| (w * f(p)).powi(2))
            .sum::<f64>()
            .sqrt()
            / wsum
    };
    Ok(Estimate::new(mean, side(|p| p.err_lo), side(|p| p.err_hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn f(ghz: f64) -> Frequency {
        Frequency::from_ghz(ghz).unwrap()
    }
    fn t(k: f64) -> NoiseTemperature {
        NoiseTemperature::new(k).unwrap()
    }
    fn g(db: f64) -> LinearGain {
        LinearGain::from_db(db).unwrap()
    }

    // Reference values evaluated with mpmath at 30 digits and exact SI constants.
    #[test]
    fn planck_examples() {
        assert_relative_eq!(
            planck_input_noise(f(6.0), t(0.0)).kelvin(),
            0.143_977_292_200_986_6,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            planck_input_noise(f(6.0), t(0.14398)).kelvin(),
            0.189_049_225_595_536_9,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            planck_input_noise(f(6.0), t(100.0)).kelvin(),
            100.000_069_098_192_68,
            max_relative = 1e-14
        );
    }

    #[test]
    fn slope_matches_finite_difference() {
        for &(tb, expected) in &[(1.0, 0.993_118_733_157_922), (0.05, 0.105_271_323_234_823)] {
            let s = planck_input_noise_slope(f(6.0), t(tb));
            assert_relative_eq!(s, expected, max_relative = 1e-10);
            let h = 1e-6 * tb;
            let fd = (input_noise_raw(6e9, tb + h) - input_noise_raw(6e9, tb - h)) / (2.0 * h);
            assert_relative_eq!(s, fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn idler_examples() {
        assert_eq!(idler_frequency(f(5.968), f(5.735)).unwrap().hz(), 6.201e9);
        assert_eq!(idler_frequency(f(6.0), f(6.0)).unwrap().hz(), 6e9);
        assert_eq!(idler_frequency(f(6.0), f(5.0)).unwrap().hz(), 7e9);
        assert!(matches!(
            idler_frequency(f(3.0), f(6.0)),
            Err(Error::NonPositiveIdler(_))
        ));
    }

    #[test]
    fn effective_input_examples() {
        let fs = f(5.735);
        let fp = f(5.968);
        let plain = planck_input_noise(fs, t(0.135)).kelvin();
        let eff = effective_input_noise(fs, fp, t(0.135), g(10.0), 0.0).unwrap();
        assert_eq!(eff.kelvin(), plain);

        let at_pump = effective_input_noise(fp, fp, t(0.3), g(10.0), g(9.0).ratio()).unwrap();
        let expected =
            (1.0 + g(9.0).ratio() / g(10.0).ratio()) * planck_input_noise(fp, t(0.3)).kelvin();
        assert_relative_eq!(at_pump.kelvin(), expected, max_relative = 1e-14);

        let eff = effective_input_noise(fs, fp, t(0.135), g(10.0), g(9.0).ratio()).unwrap();
        assert_relative_eq!(eff.kelvin(), 0.326_319_715_688_627, max_relative = 1e-12);

        assert!(effective_input_noise(f(12.0), f(5.0), t(0.1), g(10.0), 1.0).is_err());
    }

    fn chain() -> ChainConfig {
        ChainConfig {
            g_hemt: g(40.0),
            t_hemt: t(2.0),
            t_bkg: t(300.0),
            twpa: Some(TwpaStage {
                t_twpa: t(0.35),
                f_pump: f(5.968),
                gains: vec![GainPoint {
                    f_hz: f(5.735),
                    g_twpa: g(10.0),
                    g_conv: g(9.5),
                }],
            }),
            g_att: LinearGain::UNITY,
            t_att: t(0.01),
            bandwidth_hz: 100.0,
            g_tot: LinearGain::UNITY,
        }
    }

    #[test]
    fn output_power_examples() {
        let mut c = chain();
        assert_relative_eq!(
            expected_output_power_thru(&c, t(1.0), LinearGain::UNITY),
            4.183_366_47e-21,
            max_relative = 1e-9
        );
        let p1 = expected_output_power_thru(&c, t(1.0), g(10.0));
        let p2 = expected_output_power_thru(&c, t(1.0), LinearGain::new(20.0).unwrap());
        assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-15);
        c.t_hemt = t(0.0);
        c.t_bkg = t(0.0);
        assert_eq!(expected_output_power_thru(&c, t(0.0), g(30.0)), 0.0);
    }

    #[test]
    fn output_power_is_affine() {
        let c = chain();
        let gt = g(73.0);
        let slope = gt.ratio() * BOLTZMANN * c.bandwidth_hz;
        for &t0 in &[0.1, 1.0, 3.0] {
            let d = 1e-3;
            let fd = (expected_output_power_thru(&c, t(t0 + d), gt)
                - expected_output_power_thru(&c, t(t0), gt))
                / d;
            assert_relative_eq!(fd, slope, max_relative = 1e-9);
        }
    }

    #[test]
    fn twpa_forward_examples() {
        let mut c = chain();
        c.t_hemt = t(3.0);
        c.t_bkg = t(0.0);
        let v = system_noise_twpa_forward(&c, f(5.735), t(0.14)).unwrap();
        assert_relative_eq!(v.kelvin(), 0.79, max_relative = 1e-12);

        // huge TWPA gain: only t_twpa + t_in_eff survive
        c.twpa.as_mut().unwrap().gains[0].g_twpa = g(120.0);
        let v = system_noise_twpa_forward(&c, f(5.735), t(0.14)).unwrap();
        assert_relative_eq!(v.kelvin(), 0.49, max_relative = 1e-9);

        // unity gain, no intrinsic noise: the Thru form
        c.twpa.as_mut().unwrap().gains[0].g_twpa = LinearGain::UNITY;
        c.twpa.as_mut().unwrap().t_twpa = t(0.0);
        c.t_bkg = t(300.0);
        let v = system_noise_twpa_forward(&c, f(5.735), t(0.14)).unwrap();
        assert_relative_eq!(
            v.kelvin(),
            0.14 + c.thru_added_noise(),
            max_relative = 1e-14
        );

        c.twpa = None;
        assert!(matches!(
            system_noise_twpa_forward(&c, f(5.735), t(0.14)),
            Err(Error::MissingTwpa(_))
        ));
    }

    #[test]
    fn intrinsic_and_photons() {
        let n = twpa_intrinsic_noise(0.68, 3.3, g(10.0));
        assert_relative_eq!(n, 0.35, max_relative = 1e-12);
        assert_eq!(twpa_intrinsic_noise(2.0, 2.0, LinearGain::UNITY), 0.0);
        assert_relative_eq!(
            twpa_intrinsic_noise(0.5, 10.0, LinearGain::new(10.0).unwrap()),
            -0.5,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            photons_from_temperature(0.35, f(5.735)),
            1.271_633_250_769_773,
            max_relative = 1e-12
        );
        assert_eq!(photons_from_temperature(0.0, f(5.735)), 0.0);
    }

    #[test]
    fn quantum_limit() {
        assert_relative_eq!(
            standard_quantum_limit(f(5.735)).kelvin(),
            0.275_236_590_257_552_8,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            standard_quantum_limit(f(6.0)).kelvin(),
            0.287_954_584_401_973_3,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            standard_quantum_limit(f(12.0)).kelvin(),
            2.0 * standard_quantum_limit(f(6.0)).kelvin(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn photon_average_examples() {
        let one = weighted_average_photons(&[Estimate::new(1.3, 0.2, 0.3)]).unwrap();
        assert_relative_eq!(one.value, 1.3, max_relative = 1e-15);
        assert_relative_eq!(one.err_lo, 0.2, max_relative = 1e-15);
        assert_relative_eq!(one.err_hi, 0.3, max_relative = 1e-15);

        let p = Estimate::new(1.3, 0.2, 0.3);
        let two = weighted_average_photons(&[p, p]).unwrap();
        assert_relative_eq!(two.err_lo, 0.2 / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(two.err_hi, 0.3 / 2f64.sqrt(), max_relative = 1e-14);

        // hand evaluation: w = 100, 100/9
        let avg = weighted_average_photons(&[
            Estimate::symmetric(1.0, 0.1),
            Estimate::symmetric(2.0, 0.3),
        ])
        .unwrap();
        assert_relative_eq!(avg.value, 1.1, max_relative = 1e-14);
        assert_relative_eq!(
            avg.err_lo,
            (1.0f64 / (100.0 + 100.0 / 9.0)).sqrt(),
            max_relative = 1e-12
        );
        assert!((avg.err_lo - 0.095).abs() < 5e-4);

        assert!(weighted_average_photons(&[]).is_err());
        assert!(weighted_average_photons(&[
            Estimate::new(1.0, 0.0, 0.1),
            Estimate::new(1.0, 0.1, 0.1)
        ])
        .is_err());
        assert_eq!(
            weighted_average_photons(&[Estimate::new(1.0, 0.0, 0.0)]).unwrap(),
            Estimate::new(1.0, 0.0, 0.0)
        );
    }

    proptest! {
        #[test]
        fn planck_excess_positive_and_bounded(ghz in 0.1f64..20.0, tb in 1e-4f64..50.0) {
            let fr = f(ghz);
            let tin = planck_input_noise(fr, t(tb)).kelvin();
            prop_assert!(tin - tb > 0.0);
            prop_assert!(tin >= half_photon_temperature(fr) * (1.0 - 1e-15));
            // monotone in T and f, excess decreasing in T
            let tin2 = planck_input_noise(fr, t(tb * 1.01)).kelvin();
            prop_assert!(tin2 > tin);
            prop_assert!(tin2 - tb * 1.01 < tin - tb);
            let tin3 = planck_input_noise(f(ghz * 1.01), t(tb)).kelvin();
            prop_assert!(tin3 > tin);
        }

        #[test]
        fn planck_high_temperature_series(ghz in 0.1f64..20.0) {
            let fr = f(ghz);
            let tb = 100.0 * PLANCK * fr.hz() / BOLTZMANN;
            let x = half_photon_temperature(fr);
            let series = tb + (2.0 * x).powi(2) / (12.0 * tb);
            let exact = planck_input_noise(fr, t(tb)).kelvin();
            prop_assert!(((exact - series) / exact).abs() < 1e-6);
        }

        #[test]
        fn sql_is_one_photon(ghz in 0.01f64..20.0) {
            let fr = f(ghz);
            let n = photons_from_temperature(standard_quantum_limit(fr).kelvin(), fr);
            prop_assert!((n - 1.0).abs() < 1e-15);
        }

        #[test]
        fn intrinsic_antisymmetric(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let u = LinearGain::UNITY;
            prop_assert_eq!(twpa_intrinsic_noise(a, b, u), -twpa_intrinsic_noise(b, a, u));
        }

        #[test]
        fn zero_conversion_is_plain(ghz in 4.0f64..8.0, tb in 0.0f64..5.0) {
            let fs = f(ghz);
            let e = effective_input_noise(fs, f(6.0), t(tb), g(12.0), 0.0).unwrap();
            prop_assert_eq!(e.kelvin(), planck_input_noise(fs, t(tb)).kelvin());
        }
    }
}
