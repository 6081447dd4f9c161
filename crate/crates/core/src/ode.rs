//! Explicit Runge-Kutta integrators for small ODE systems.
//!
//! [`Integrator`] is an adaptive Dormand-Prince 5(4) stepper with
//! standard step-size control; [`rk4_fixed`] is the classic fixed-step scheme used
//! for convergence-order checks.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Vector-space operations needed by the steppers.
pub trait OdeState: Copy {
    /// `self + a * other`
    fn axpy(self, a: f64, other: Self) -> Self;
    /// Scaled RMS error norm used for step control.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;
}

impl OdeState for f64 {
    fn axpy(self, a: f64, other: Self) -> Self {
        self + a * other
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let sc = atol + rtol * y0.abs().max(y1.abs());
        (err / sc).abs()
    }
}

impl<const N: usize> OdeState for [Complex64; N] {
    fn axpy(self, a: f64, other: Self) -> Self {
        let mut out = self;
        for (o, v) in out.iter_mut().zip(other.iter()) {
            *o += v * a;
        }
        out
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = atol + rtol * y0[i].norm().max(y1[i].norm());
            acc += (err[i].norm() / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest step allowed before reporting underflow.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            h_min: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus embedded fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive Dormand-Prince integrator that can be advanced in segments.
pub struct Integrator<S, F> {
    rhs: F,
    pub x: f64,
    pub y: S,
    h: f64,
    tol: Tolerances,
    pub steps: usize,
}

impl<S: OdeState, F: FnMut(f64, &S) -> S> Integrator<S, F> {
    pub fn new(rhs: F, x0: f64, y0: S, h0: f64, tol: Tolerances) -> Self {
        Self {
            rhs,
            x: x0,
            y: y0,
            h: h0,
            tol,
            steps: 0,
        }
    }

    /// Integrate from the current position to `x_end` (must be >= current x).
    pub fn advance_to(&mut self, x_end: f64) -> Result<S> {
        let span = x_end - self.x;
        if span <= 0.0 {
            return Ok(self.y);
        }
        let mut k1 = (self.rhs)(self.x, &self.y);
        while self.x < x_end {
            if self.steps >= self.tol.max_steps {
                return Err(Error::StepUnderflow(self.x));
            }
            let mut h = self.h.min(x_end - self.x);
            let last = h >= x_end - self.x;
            if last {
                h = x_end - self.x;
            }
            let (y_new, k7, err) = self.trial(h, &k1);
            let en = S::error_norm(&err, &self.y, &y_new, self.tol.rtol, self.tol.atol);
            if en <= 1.0 {
                self.x = if last { x_end } else { self.x + h };
                self.y = y_new;
                k1 = k7;
                self.steps += 1;
                let factor = if en == 0.0 {
                    5.0
                } else {
                    (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
                };
                // keep the unclipped step when the segment end clipped it
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                let factor = if en.is_finite() {
                    (0.9 * en.powf(-0.2)).clamp(0.1, 0.9)
                } else {
                    0.1
                };
                self.h = h * factor;
                if self.h < self.tol.h_min {
                    return Err(Error::StepUnderflow(self.x));
                }
            }
        }
        Ok(self.y)
    }

    fn trial(&mut self, h: f64, k1: &S) -> (S, S, S) {
        let x = self.x;
        let y = self.y;
        let f = &mut self.rhs;
        let k2 = f(x + C2 * h, &y.axpy(h * A21, *k1));
        let k3 = f(x + C3 * h, &y.axpy(h * A31, *k1).axpy(h * A32, k2));
        let k4 = f(
            x + C4 * h,
            &y.axpy(h * A41, *k1).axpy(h * A42, k2).axpy(h * A43, k3),
        );
        let k5 = f(
            x + C5 * h,
            &y.axpy(h * A51, *k1)
                .axpy(h * A52, k2)
                .axpy(h * A53, k3)
                .axpy(h * A54, k4),
        );
        let k6 = f(
            x + h,
            &y.axpy(h * A61, *k1)
                .axpy(h * A62, k2)
                .axpy(h * A63, k3)
                .axpy(h * A64, k4)
                .axpy(h * A65, k5),
        );
        let y_new = y
            .axpy(h * B1, *k1)
            .axpy(h * B3, k3)
            .axpy(h * B4, k4)
            .axpy(h * B5, k5)
            .axpy(h * B6, k6);
        let k7 = f(x + h, &y_new);
        let zero = y.axpy(-1.0, y);
        let err = zero
            .axpy(h * E1, *k1)
            .axpy(h * E3, k3)
            .axpy(h * E4, k4)
            .axpy(h * E5, k5)
            .axpy(h * E6, k6)
            .axpy(h * E7, k7);
        (y_new, k7, err)
    }
}

/// Integrate `y' = f(x, y)` from `x0` to `x1` with default-shaped tolerances.
pub fn integrate<S: OdeState>(
    rhs: impl FnMut(f64, &S) -> S,
    x0: f64,
    y0: S,
    x1: f64,
    tol: Tolerances,
) -> Result<S> {
    let h0 = ((x1 - x0) / 100.0).max(tol.h_min * 10.0);
    let mut it = Integrator::new(rhs, x0, y0, h0, tol);
    it.advance_to(x1)
}

/// Classic fourth-order Runge-Kutta with `steps` equal steps.
pub fn rk4_fixed<S: OdeState>(
    mut rhs: impl FnMut(f64, &S) -> S,
    x0: f64,
    y0: S,
    x1: f64,
    steps: usize,
) -> S {
    let h = (x1 - x0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let x = x0 + i as f64 * h;
        let k1 = rhs(x, &y);
        let k2 = rhs(x + 0.5 * h, &y.axpy(0.5 * h, k1));
        let k3 = rhs(x + 0.5 * h, &y.axpy(0.5 * h, k2));
        let k4 = rhs(x + h, &y.axpy(h, k3));
        y = y
            .axpy(h / 6.0, k1)
            .axpy(h / 3.0, k2)
            .axpy(h / 3.0, k3)
            .axpy(h / 6.0, k4);
    }
    y
}
