//! The engineered bath: a driven, lossy cavity seen through its Lorentzian
//! noise spectrum.

use crate::error::{Error, Result};

/// Below this `|omega|` (in units of `J`) the Stokes ratio is replaced by its
/// continuous limit `beta0`.
pub const STOKES_ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirParams {
    /// Density-density coupling `chi`.
    pub chi: f64,
    /// Drive amplitude `Omega_0`.
    pub drive: f64,
    /// Detuning `Delta = omega_d - omega_c`.
    pub detuning: f64,
    /// Cavity energy decay rate `kappa`.
    pub kappa: f64,
}

impl ReservoirParams {
    pub fn new(chi: f64, drive: f64, detuning: f64, kappa: f64) -> Self {
        Self { chi, drive, detuning, kappa }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.chi, self.drive, self.detuning, self.kappa]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("reservoir parameters must be finite".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.drive < 0.0 {
            return Err(Error::InvalidParameter(format!("Omega_0 must be >= 0, got {}", self.drive)));
        }
        if self.chi < 0.0 {
            return Err(Error::InvalidParameter(format!("chi must be >= 0, got {}", self.chi)));
        }
        Ok(())
    }

    fn half_kappa_sq(&self) -> f64 {
        0.25 * self.kappa * self.kappa
    }

    /// `Delta^2 + (kappa/2)^2`.
    fn lorentz_denominator(&self) -> f64 {
        self.detuning * self.detuning + self.half_kappa_sq()
    }

    /// `3 + beta0 * Delta`, written as `(3 (kappa/2)^2 - Delta^2) / (Delta^2 + (kappa/2)^2)`
    /// so that it vanishes cleanly on the special line `Delta = -sqrt(3) kappa / 2`.
    pub fn curvature_factor(&self) -> f64 {
        (3.0 * self.half_kappa_sq() - self.detuning * self.detuning) / self.lorentz_denominator()
    }
}

/// `|a_0|^2 = Omega_0^2 / (Delta^2 + (kappa/2)^2)`.
pub fn steady_amplitude_sq(params: &ReservoirParams) -> f64 {
    params.drive * params.drive / params.lorentz_denominator()
}

/// Lorentzian noise spectrum `S(omega) = |a_0|^2 kappa / ((omega + Delta)^2 + (kappa/2)^2)`.
pub fn noise_spectrum(omega: f64, params: &ReservoirParams) -> f64 {
    let x = omega + params.detuning;
    steady_amplitude_sq(params) * params.kappa / (x * x + params.half_kappa_sq())
}

/// `beta0 = -4 Delta / (Delta^2 + (kappa/2)^2)`.
pub fn base_inverse_temperature(params: &ReservoirParams) -> f64 {
    -4.0 * params.detuning / params.lorentz_denominator()
}

/// Per-frequency inverse temperature from the Stokes ratio,
/// `ln[S(omega)/S(-omega)] / omega`.
///
/// Independent of `|a_0|^2`, so it is evaluated from the bare Lorentzian
/// denominators and stays defined for an undriven cavity.
pub fn effective_beta_exact(omega: f64, params: &ReservoirParams) -> f64 {
    if omega.abs() < STOKES_ZERO_THRESHOLD {
        return base_inverse_temperature(params);
    }
    let h = params.half_kappa_sq();
    let up = (omega - params.detuning).powi(2) + h;
    let down = (omega + params.detuning).powi(2) + h;
    (up / down).ln() / omega
}

/// Quadratic truncation `beta0 [1 + (beta0 / 12 Delta)(3 + beta0 Delta) omega^2]`.
pub fn effective_beta_expansion(omega: f64, params: &ReservoirParams) -> Result<f64> {
    if params.detuning == 0.0 {
        return Err(Error::Degenerate(
            "quadratic beta_eff expansion is singular at Delta = 0; use the exact Stokes form".into(),
        ));
    }
    let b0 = base_inverse_temperature(params);
    Ok(b0 * (1.0 + b0 / (12.0 * params.detuning) * params.curvature_factor() * omega * omega))
}
