//! Adaptive Dormand-Prince 5(4) integrator for autonomous systems.
//!
//! The stepper only advances; output scheduling, invariant checks and stopping
//! rules belong to the caller. Steps are shortened to land exactly on a
//! requested stop time so that snapshots need no interpolation.

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
// fifth-order weights, also the last stage row (FSAL)
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth minus fourth order
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
// PI step-size control exponents
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    /// Absolute tolerance applied to every component.
    pub abs_tol: f64,
    pub min_step: f64,
}

/// Step size fell below [`StepControl::min_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepUnderflow {
    pub t: f64,
    pub step: f64,
}

pub struct DormandPrince {
    control: StepControl,
    t: f64,
    h: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 7],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
    err_prev: f64,
    accepted: usize,
    rejected: usize,
}

impl DormandPrince {
    pub fn new<F>(y0: Vec<f64>, t0: f64, control: StepControl, mut f: F) -> Self
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let n = y0.len();
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        f(&y0, &mut k[0]);
        let mut s = Self {
            control,
            t: t0,
            h: 0.0,
            y: y0,
            k,
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
            err_prev: 1e-4,
            accepted: 0,
            rejected: 0,
        };
        s.h = s.initial_step(&mut f);
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Derivative at the current state (first-same-as-last stage).
    pub fn dydt(&self) -> &[f64] {
        &self.k[0]
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn accepted_steps(&self) -> usize {
        self.accepted
    }

    pub fn rejected_steps(&self) -> usize {
        self.rejected
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.control.abs_tol + self.control.rel_tol * a.abs().max(b.abs())
    }

    /// Hairer's starting step heuristic.
    fn initial_step<F: FnMut(&[f64], &mut [f64])>(&mut self, f: &mut F) -> f64 {
        let n = self.y.len().max(1) as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k[0][i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..self.y.len() {
            self.y_stage[i] = self.y[i] + h0 * self.k[0][i];
        }
        f(&self.y_stage, &mut self.k[1]);
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((self.k[1][i] - self.k[0][i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).max(self.control.min_step)
    }

    /// Advance by one accepted step, never past `t_stop`. Landing steps end
    /// exactly on `t_stop`.
    pub fn step<F>(&mut self, t_stop: f64, mut f: F) -> Result<(), StepUnderflow>
    where
        F: FnMut(&[f64], &mut [f64]),
    {
        let n = self.y.len();
        loop {
            let remaining = t_stop - self.t;
            let landing = self.h >= remaining;
            let h = if landing { remaining } else { self.h };

            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let y = &self.y;
            let ys = &mut self.y_stage;

            for i in 0..n {
                ys[i] = y[i] + h * A21 * k1[i];
            }
            f(ys, k2);
            for i in 0..n {
                ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(ys, k3);
            for i in 0..n {
                ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(ys, k4);
            for i in 0..n {
                ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(ys, k5);
            for i in 0..n {
                ys[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            f(ys, k6);
            for i in 0..n {
                self.y_new[i] = y[i]
                    + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
            }
            f(&self.y_new, k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.control.abs_tol
                    + self.control.rel_tol * y[i].abs().max(self.y_new[i].abs());
                err += (e / sc).powi(2);
            }
            let err = if n > 0 { (err / n as f64).sqrt() } else { 0.0 };

            if err <= 1.0 {
                let fac = if err == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * err.powf(-ALPHA) * self.err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
                };
                self.err_prev = err.max(1e-4);
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.k.swap(0, 6);
                if landing {
                    self.t = t_stop;
                    self.h = self.h.max(h * fac);
                } else {
                    self.t += h;
                    self.h = h * fac;
                }
                self.accepted += 1;
                return Ok(());
            }

            self.rejected += 1;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            self.h = h * fac;
            if self.h < self.control.min_step {
                return Err(StepUnderflow { t: self.t, step: self.h });
            }
        }
    }
}
