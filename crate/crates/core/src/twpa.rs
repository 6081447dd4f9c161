//! Junction-loaded transmission line with a stiff pump.
//!
//! The line is modelled as `n_cells * junctions_per_cell` identical LC sections;
//! all wavenumbers are per section and lengths are in sections. Signal and
//! idler envelopes obey linear coupled-mode equations in photon-flux
//! normalisation, so `|a_s|^2 - |a_i|^2` is conserved without loss.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noisecalc::idler_frequency;
use crate::ode::{self, Tolerances};
use crate::units::Frequency;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwpaParams {
    /// Junction critical current, A.
    pub i_c: f64,
    /// Josephson plasma frequency, rad/s.
    pub omega_j: f64,
    pub n_cells: u32,
    pub junctions_per_cell: u32,
    /// Unpumped section inductance, H.
    pub l_cell: f64,
    /// Section capacitance to ground, F.
    pub c_cell: f64,
    pub tan_delta: f64,
    /// Pump current over critical current.
    pub i_p_ratio: f64,
    /// Amplitude reflection of each port mirror.
    pub r_mirror: f64,
    /// Fraction of `tan_delta` seen by the travelling waves.
    #[serde(default = "default_participation")]
    pub loss_participation: f64,
}

fn default_participation() -> f64 {
    1.0
}

impl TwpaParams {
    /// Nominal device: 1016 four-junction cells, 312 pH / 115 fF sections,
    /// 46.5 GHz plasma frequency, tan d = 0.0025, r = 0.15, I_p = 0.53 I_c.
    pub fn nominal() -> Self {
        Self {
            i_c: 4.4e-6,
            omega_j: 2.0 * std::f64::consts::PI * 46.5e9,
            n_cells: 1016,
            junctions_per_cell: 4,
            l_cell: 312e-12,
            c_cell: 115e-15,
            tan_delta: 0.0025,
            i_p_ratio: 0.53,
            r_mirror: 0.15,
            loss_participation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |quantity, value, reason| {
            Err(Error::InvalidValue {
                quantity,
                value,
                reason,
            })
        };
        for (name, v) in [
            ("critical current", self.i_c),
            ("plasma frequency", self.omega_j),
            ("section inductance", self.l_cell),
            ("section capacitance", self.c_cell),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v, "must be > 0");
            }
        }
        if self.n_cells == 0 || self.junctions_per_cell == 0 {
            return bad("section count", 0.0, "must be > 0");
        }
        if !(self.tan_delta >= 0.0 && self.tan_delta.is_finite()) {
            return bad("loss tangent", self.tan_delta, "must be >= 0");
        }
        if !(self.i_p_ratio >= 0.0 && self.i_p_ratio < 1.0) {
            return bad("pump ratio", self.i_p_ratio, "must be in [0, 1)");
        }
        if !(self.r_mirror >= 0.0 && self.r_mirror < 1.0) {
            return bad("mirror reflection", self.r_mirror, "must be in [0, 1)");
        }
        if !(self.loss_participation > 0.0 && self.loss_participation <= 1.0) {
            return bad(
                "loss participation",
                self.loss_participation,
                "must be in (0, 1]",
            );
        }
        Ok(())
    }

    /// Propagation length in sections.
    pub fn sections(&self) -> f64 {
        f64::from(self.n_cells) * f64::from(self.junctions_per_cell)
    }

    pub fn t_mirror(&self) -> f64 {
        (1.0 - self.r_mirror * self.r_mirror).sqrt()
    }

    /// Lower of the plasma frequency and the discrete-line cut-off, Hz.
    pub fn cutoff_hz(&self) -> f64 {
        let plasma = self.omega_j;
        let lattice = 2.0 / (self.l_cell * self.c_cell).sqrt();
        plasma.min(lattice) / (2.0 * std::f64::consts::PI)
    }

    /// Round-trip ripple spacing of the mirror cavity at low frequency, Hz.
    pub fn ripple_spacing_hz(&self) -> f64 {
        1.0 / (2.0 * self.sections() * (self.l_cell * self.c_cell).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSetting {
    pub f_p: Frequency,
    /// Overrides the parameter-set pump ratio when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i_p_ratio: Option<f64>,
}

impl PumpSetting {
    pub fn new(f_p: Frequency) -> Self {
        Self {
            f_p,
            i_p_ratio: None,
        }
    }

    pub fn with_ratio(f_p: Frequency, ratio: f64) -> Self {
        Self {
            f_p,
            i_p_ratio: Some(ratio),
        }
    }

    fn ratio(&self, params: &TwpaParams) -> Result<f64> {
        let r = self.i_p_ratio.unwrap_or(params.i_p_ratio);
        if !(0.0..1.0).contains(&r) {
            return Err(Error::InvalidValue {
                quantity: "pump ratio",
                value: r,
                reason: "must be in [0, 1)",
            });
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPoint {
    pub f_s: Frequency,
    pub s_on: Complex64,
    pub s_off: Complex64,
    /// Idler output per unit signal input.
    pub g_conv: Complex64,
}

/// Complex wavenumber per section; the imaginary part is the amplitude loss.
pub fn dispersion_k(params: &TwpaParams, f: Frequency) -> Result<Complex64> {
    let re = lossless_k(params, f, "wavenumber")?;
    Ok(Complex64::new(
        re,
        re * params.tan_delta * params.loss_participation / 2.0,
    ))
}

fn lossless_k(params: &TwpaParams, f: Frequency, what: &'static str) -> Result<f64> {
    if f.hz() >= params.cutoff_hz() {
        return Err(Error::AboveCutoff(what, f.hz()));
    }
    let w = f.angular();
    let x = w / params.omega_j;
    Ok(w * (params.l_cell * params.c_cell).sqrt() / (1.0 - x * x).sqrt())
}

// Tight enough that the lossless photon-flux invariant survives a few hundred
// phase-mismatch oscillations along the line at the 1e-9 level.
const CME_TOLERANCES: Tolerances = Tolerances {
    rtol: 1e-12,
    atol: 1e-15,
    h_min: 1e-12,
    max_steps: 1_000_000,
};

/// Signal and conjugate-idler envelope equations with constant coefficients.
///
/// `a_s' = -g_s a_s + i kappa c e^{i dk x}`, `c' = -g_i c - i kappa a_s e^{-i dk x}`,
/// starting from `a_s = 1`, `c = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledModeProblem {
    pub kappa: f64,
    pub gamma_s: f64,
    pub gamma_i: f64,
    pub delta_k: f64,
    pub length: f64,
}

impl CoupledModeProblem {
    // Loss is factored out analytically: a_s = A e^{-g_s x}, c = C e^{-g_i x}.
    fn rhs(&self) -> impl Fn(f64, &[Complex64; 2]) -> [Complex64; 2] + '_ {
        let i = Complex64::i();
        let rate = Complex64::new(self.gamma_s - self.gamma_i, self.delta_k);
        move |x, y| {
            let ph = (rate * x).exp();
            [i * self.kappa * y[1] * ph, -i * self.kappa * y[0] / ph]
        }
    }

    fn finish(&self, y: [Complex64; 2]) -> (Complex64, Complex64) {
        (
            y[0] * (-self.gamma_s * self.length).exp(),
            y[1] * (-self.gamma_i * self.length).exp(),
        )
    }

    /// `(a_s(L), c(L))` by adaptive integration.
    pub fn solve(&self) -> Result<(Complex64, Complex64)> {
        let y0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        if self.kappa == 0.0 {
            return Ok(self.finish(y0));
        }
        let y = ode::integrate(self.rhs(), 0.0, y0, self.length, CME_TOLERANCES)?;
        Ok(self.finish(y))
    }

    /// Same, with `steps` fixed RK4 steps (for convergence studies).
    pub fn solve_fixed(&self, steps: usize) -> (Complex64, Complex64) {
        let y0 = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        self.finish(ode::rk4_fixed(self.rhs(), 0.0, y0, self.length, steps))
    }
}

/// Per-section coefficients of the pumped line at one signal frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingCoefficients {
    pub k_s: f64,
    pub k_i: f64,
    pub k_p: f64,
    /// Cross-phase shifts on signal and idler.
    pub xpm_s: f64,
    pub xpm_i: f64,
    /// Pump self-phase shift.
    pub spm_p: f64,
    pub kappa: f64,
    pub gamma_s: f64,
    pub gamma_i: f64,
    /// Total phase mismatch including the pump-induced terms.
    pub delta_k: f64,
}

pub fn coupling_coefficients(
    params: &TwpaParams,
    pump: &PumpSetting,
    f_s: Frequency,
) -> Result<CouplingCoefficients> {
    params.validate()?;
    let ratio = pump.ratio(params)?;
    let f_i = idler_frequency(pump.f_p, f_s)?;
    let ks = dispersion_k(params, f_s)?;
    let ki = dispersion_k(params, f_i)?;
    // the pump is lossless by assumption
    let k_p = lossless_k(params, pump.f_p, "pump wavenumber")?;
    let r2 = ratio * ratio;
    let xpm_s = ks.re * r2 / 4.0;
    let xpm_i = ki.re * r2 / 4.0;
    let spm_p = k_p * r2 / 8.0;
    let g_s = ks.re * r2 / 8.0;
    let g_i = ki.re * r2 / 8.0;
    Ok(CouplingCoefficients {
        k_s: ks.re,
        k_i: ki.re,
        k_p,
        xpm_s,
        xpm_i,
        spm_p,
        kappa: (g_s * g_i).sqrt(),
        gamma_s: ks.im,
        gamma_i: ki.im,
        delta_k: (2.0 * k_p - ks.re - ki.re) + (2.0 * spm_p - xpm_s - xpm_i),
    })
}

/// Bare (mirror-free) pumped and unpumped transmission at `f_s`.
pub fn cme_integrate(
    params: &TwpaParams,
    pump: &PumpSetting,
    f_s: Frequency,
) -> Result<TransmissionPoint> {
    let c = coupling_coefficients(params, pump, f_s)?;
    let n = params.sections();
    let problem = CoupledModeProblem {
        kappa: c.kappa,
        gamma_s: c.gamma_s,
        gamma_i: c.gamma_i,
        delta_k: c.delta_k,
        length: n,
    };
    let (a_s, c_n) = problem.solve()?;
    let s_off = propagate(c.k_s, c.gamma_s, n);
    let s_on = a_s * propagate(c.k_s + c.xpm_s, 0.0, n);
    Ok(TransmissionPoint {
        f_s,
        s_on,
        s_off,
        g_conv: c_n.conj(),
    })
}

fn propagate(k: f64, gamma: f64, n: f64) -> Complex64 {
    (Complex64::new(-gamma, k) * n).exp()
}

/// Dress bare transmissions with two port mirrors of amplitude reflection `r`.
pub fn fabry_perot_dress(
    s_on: Complex64,
    s_off: Complex64,
    r: f64,
) -> Result<(Complex64, Complex64)> {
    if !(r.abs() < 1.0) {
        return Err(Error::InvalidValue {
            quantity: "mirror reflection",
            value: r,
            reason: "must satisfy |r| < 1",
        });
    }
    if r == 0.0 {
        return Ok((s_on, s_off));
    }
    let r2 = r * r;
    let t2 = 1.0 - r2;
    let d_on = Complex64::new(1.0, 0.0) - r2 * s_off * s_on;
    let d_off = Complex64::new(1.0, 0.0) - r2 * s_off * s_off;
    for d in [d_on, d_off] {
        if d.norm() < 1e-12 {
            return Err(Error::CavitySingularity(d.norm()));
        }
    }
    Ok((t2 * s_on / d_on, t2 * s_off / d_off))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainSweepPoint {
    pub f_hz: f64,
    pub gain_db: f64,
    pub loss_db: f64,
    /// Undressed conversion gain; `-inf` with the pump off.
    pub conv_gain_db: f64,
}

pub fn sweep_point(
    params: &TwpaParams,
    pump: &PumpSetting,
    f_s: Frequency,
) -> Result<GainSweepPoint> {
    let t = cme_integrate(params, pump, f_s)?;
    let (on, off) = fabry_perot_dress(t.s_on, t.s_off, params.r_mirror)?;
    Ok(GainSweepPoint {
        f_hz: f_s.hz(),
        gain_db: 10.0 * on.norm_sqr().log10(),
        loss_db: -10.0 * off.norm_sqr().log10(),
        conv_gain_db: 10.0 * t.g_conv.norm_sqr().log10(),
    })
}

/// Gain, loss and conversion gain over a frequency grid (order preserved).
pub fn gain_sweep(
    params: &TwpaParams,
    pump: &PumpSetting,
    f_grid: &[Frequency],
) -> Result<Vec<GainSweepPoint>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        f_grid
            .par_iter()
            .map(|&f| sweep_point(params, pump, f))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        f_grid
            .iter()
            .map(|&f| sweep_point(params, pump, f))
            .collect()
    }
}

/// Contiguous runs of sweep points with `gain_db >= threshold_db`, as
/// `(first f_hz, last f_hz)`. Points are taken in grid order.
pub fn gain_bands(points: &[GainSweepPoint], threshold_db: f64) -> Vec<(f64, f64)> {
    let mut bands = Vec::new();
    let mut start: Option<f64> = None;
    let mut last = 0.0;
    for p in points {
        if p.gain_db >= threshold_db {
            start.get_or_insert(p.f_hz);
            last = p.f_hz;
        } else if let Some(s) = start.take() {
            bands.push((s, last));
        }
    }
    if let Some(s) = start {
        bands.push((s, last));
    }
    bands
}

/// Evenly spaced grid from `start` to `stop` inclusive.
pub fn linear_grid(start: Frequency, stop: Frequency, points: usize) -> Result<Vec<Frequency>> {
    if points < 2 || stop.hz() <= start.hz() {
        return Err(Error::InvalidInput(
            "grid needs stop > start and at least 2 points".into(),
        ));
    }
    let step = (stop.hz() - start.hz()) / (points - 1) as f64;
    (0..points)
        .map(|i| Frequency::new(start.hz() + step * i as f64))
        .collect()
}

/// Bare unpumped loss in dB at `f`.
pub fn bare_loss_db(params: &TwpaParams, f: Frequency) -> Result<f64> {
    let k = dispersion_k(params, f)?;
    Ok(20.0 * std::f64::consts::LOG10_E * k.im * params.sections())
}

/// Loss participation giving `target_db` of bare unpumped loss at `f`.
pub fn calibrate_loss_participation(
    params: &TwpaParams,
    f: Frequency,
    target_db: f64,
) -> Result<f64> {
    let full = bare_loss_db(
        &TwpaParams {
            loss_participation: 1.0,
            ..*params
        },
        f,
    )?;
    if !(target_db > 0.0) || target_db > full {
        return Err(Error::InvalidValue {
            quantity: "target loss (dB)",
            value: target_db,
            reason: "must be positive and reachable with participation <= 1",
        });
    }
    // bare loss is linear in the participation
    Ok(target_db / full)
}

/// Smallest pump ratio in `[lo, hi]` reaching `target_db` of dressed gain at
/// `f_s`, found by a coarse scan followed by bisection.
pub fn calibrate_pump_ratio(
    params: &TwpaParams,
    f_p: Frequency,
    f_s: Frequency,
    target_db: f64,
    (lo, hi): (f64, f64),
) -> Result<f64> {
    let gain = |r: f64| -> Result<f64> {
        Ok(sweep_point(params, &PumpSetting::with_ratio(f_p, r), f_s)?.gain_db)
    };
    const SCAN: usize = 40;
    let mut prev = lo;
    if gain(lo)? >= target_db {
        return Ok(lo);
    }
    for i in 1..=SCAN {
        let r = lo + (hi - lo) * i as f64 / SCAN as f64;
        if gain(r)? >= target_db {
            let (mut a, mut b) = (prev, r);
            for _ in 0..50 {
                let m = 0.5 * (a + b);
                if gain(m)? >= target_db {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Ok(b);
        }
        prev = r;
    }
    Err(Error::InvalidInput(format!(
        "pump ratio in [{lo}, {hi}] does not reach {target_db} dB"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ghz(v: f64) -> Frequency {
        Frequency::from_ghz(v).unwrap()
    }

    #[test]
    fn dispersion_examples() {
        let p = TwpaParams::nominal();
        assert_relative_eq!(
            dispersion_k(&p, ghz(8.0)).unwrap().re,
            0.305_647_191_493_346_2,
            max_relative = 1e-12
        );
        let f = ghz(0.01);
        let k = dispersion_k(&p, f).unwrap().re;
        assert_relative_eq!(
            k,
            f.angular() * (p.l_cell * p.c_cell).sqrt(),
            max_relative = 1e-7
        );
        assert!(matches!(
            dispersion_k(&p, ghz(46.5)),
            Err(Error::AboveCutoff(..))
        ));
    }

    #[test]
    fn bands_split_on_dips() {
        let pt = |f: f64, g: f64| GainSweepPoint {
            f_hz: f,
            gain_db: g,
            loss_db: 0.0,
            conv_gain_db: 0.0,
        };
        let pts = [pt(1.0, 11.0), pt(2.0, 12.0), pt(3.0, 9.0), pt(4.0, 10.0)];
        assert_eq!(gain_bands(&pts, 10.0), vec![(1.0, 2.0), (4.0, 4.0)]);
        assert!(gain_bands(&pts, 20.0).is_empty());
    }

    #[test]
    fn ripple_spacing_value() {
        assert_relative_eq!(
            TwpaParams::nominal().ripple_spacing_hz(),
            20_539_510.435_967_576,
            max_relative = 1e-12
        );
    }

    #[test]
    fn pump_off_is_bare_line() {
        let p = TwpaParams::nominal();
        let t = cme_integrate(&p, &PumpSetting::with_ratio(ghz(5.968), 0.0), ghz(5.5)).unwrap();
        assert_eq!(t.s_on, t.s_off);
        assert_eq!(t.g_conv.norm(), 0.0);
        assert!(t.s_off.norm() <= 1.0);
    }

    #[test]
    fn phase_matched_closed_form() {
        let prob = CoupledModeProblem {
            kappa: 3e-3,
            gamma_s: 0.0,
            gamma_i: 0.0,
            delta_k: 0.0,
            length: 1000.0,
        };
        let (a, c) = prob.solve().unwrap();
        let gl = 3.0f64;
        assert_relative_eq!(a.norm_sqr(), gl.cosh().powi(2), max_relative = 1e-9);
        assert_relative_eq!(c.norm_sqr(), gl.sinh().powi(2), max_relative = 1e-9);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let prob = CoupledModeProblem {
            kappa: 2e-3,
            gamma_s: 0.0,
            gamma_i: 0.0,
            delta_k: 0.0,
            length: 1000.0,
        };
        let exact = 2.0f64.cosh();
        let e1 = (prob.solve_fixed(40).0 - exact).norm();
        let e2 = (prob.solve_fixed(80).0 - exact).norm();
        assert!((e1 / e2).log2() >= 3.8, "order {}", (e1 / e2).log2());
    }

    #[test]
    fn mirrors() {
        let s = Complex64::from_polar(0.7, 0.3);
        assert_eq!(fabry_perot_dress(s * 3.0, s, 0.0).unwrap(), (s * 3.0, s));
        // ripple extremes at unit transmission
        let r = 0.15;
        let peak = fabry_perot_dress(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), r)
            .unwrap()
            .1;
        let trough = fabry_perot_dress(Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0), r)
            .unwrap()
            .1;
        let ripple = 10.0 * (peak.norm_sqr() / trough.norm_sqr()).log10();
        assert_relative_eq!(ripple, 0.390_931_012_229_499_1, max_relative = 1e-12);
        assert!(fabry_perot_dress(s, s, 1.0).is_err());
    }

    #[test]
    fn unpumped_loss_rises_with_frequency() {
        let p = TwpaParams::nominal();
        let grid = linear_grid(ghz(4.0), ghz(8.0), 9).unwrap();
        let off = PumpSetting::with_ratio(ghz(5.968), 0.0);
        let pts = gain_sweep(&p, &off, &grid).unwrap();
        let bare: Vec<f64> = grid.iter().map(|&f| bare_loss_db(&p, f).unwrap()).collect();
        assert!(bare.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(pts.len(), grid.len());
        for (pt, f) in pts.iter().zip(&grid) {
            assert_eq!(pt.f_hz, f.hz());
        }
    }

    #[test]
    fn loss_calibration() {
        let p = TwpaParams::nominal();
        let part = calibrate_loss_participation(&p, ghz(8.0), 4.5).unwrap();
        assert!(part > 0.3 && part < 0.36, "{part}");
        let cal = TwpaParams {
            loss_participation: part,
            ..p
        };
        assert_relative_eq!(
            bare_loss_db(&cal, ghz(8.0)).unwrap(),
            4.5,
            max_relative = 1e-12
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn manley_rowe_lossless(kappa in 1e-4f64..4e-3, dk in -2e-2f64..2e-2) {
            let prob = CoupledModeProblem { kappa, gamma_s: 0.0, gamma_i: 0.0, delta_k: dk, length: 1000.0 };
            let (a, c) = prob.solve().unwrap();
            prop_assert!((a.norm_sqr() - c.norm_sqr() - 1.0).abs() < 1e-9 * a.norm_sqr());
        }

        #[test]
        fn passive_when_unpumped(tand in 0.0f64..0.01, f in 1.0f64..20.0) {
            let p = TwpaParams { tan_delta: tand, ..TwpaParams::nominal() };
            let t = cme_integrate(&p, &PumpSetting::with_ratio(ghz(10.0), 0.0), ghz(f)).unwrap();
            prop_assert!(t.s_off.norm() <= 1.0);
        }

        #[test]
        fn dispersion_monotone_superlinear(a in 0.1f64..40.0, b in 0.1f64..40.0) {
            let p = TwpaParams::nominal();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-6);
            let kl = dispersion_k(&p, ghz(lo)).unwrap().re;
            let kh = dispersion_k(&p, ghz(hi)).unwrap().re;
            prop_assert!(kh > kl);
            prop_assert!(kh / hi >= kl / lo);
        }

        #[test]
        fn low_frequency_limit(f in 0.05f64..2.3) {
            let p = TwpaParams::nominal();
            let fr = ghz(f);
            let k = dispersion_k(&p, fr).unwrap().re;
            let lin = fr.angular() * (p.l_cell * p.c_cell).sqrt();
            prop_assert!((k / lin - 1.0).abs() < 5e-3);
        }
    }
}
