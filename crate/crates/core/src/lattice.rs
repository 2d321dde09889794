//! Single-particle structure of the 1D array: dispersion, mode functions,
//! reservoir overlap factors and the continuum density of states.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Open,
    Periodic,
}

/// How the per-pair reservoir overlap `gamma_{kk'}` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Incoherent sum over the independent site reservoirs,
    /// `sum_j |phi_k(j)|^2 |phi_k'(j)|^2`.
    #[default]
    SiteResolved,
    /// Constant `1/L` for every pair.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    /// Number of sites `L`.
    pub sites: usize,
    /// Hopping `J`, the unit of energy.
    pub hopping: f64,
    /// On-site frequency `omega_0`.
    pub onsite: f64,
    pub boundary: Boundary,
}

impl LatticeParams {
    /// `L` sites with `J = 1` and `omega_0 = 0`.
    pub fn new(sites: usize, boundary: Boundary) -> Self {
        Self { sites, hopping: 1.0, onsite: 0.0, boundary }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::InvalidParameter("L must be at least 1".into()));
        }
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "J must be positive and finite, got {}",
                self.hopping
            )));
        }
        if !self.onsite.is_finite() {
            return Err(Error::InvalidParameter("omega_0 must be finite".into()));
        }
        Ok(())
    }
}

/// Eigenmodes of the array, sorted by ascending energy.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub k: Vec<f64>,
    pub omega: Vec<f64>,
    /// Row-major `L x L`; entry `(m, j)` is `phi_m(j + 1)`.
    phi: Vec<Complex64>,
    pub hopping: f64,
    pub onsite: f64,
    pub boundary: Boundary,
}

impl ModeSpectrum {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Amplitude of mode `mode` on site `site` (0-based site index).
    pub fn phi(&self, mode: usize, site: usize) -> Complex64 {
        self.phi[mode * self.len() + site]
    }

    pub fn mode_function(&self, mode: usize) -> &[Complex64] {
        let l = self.len();
        &self.phi[mode * l..(mode + 1) * l]
    }

    pub fn omega_min(&self) -> f64 {
        self.omega[0]
    }

    pub fn omega_max(&self) -> f64 {
        self.omega[self.len() - 1]
    }

    /// `|phi_m(j)|^2` as a row-major `L x L` matrix.
    fn site_weights(&self) -> Vec<f64> {
        self.phi.iter().map(|z| z.norm_sqr()).collect()
    }
}

pub fn build_modes(params: &LatticeParams) -> Result<ModeSpectrum> {
    params.validate()?;
    let l = params.sites;
    let lf = l as f64;

    let mut modes: Vec<(f64, f64, Vec<Complex64>)> = (0..l)
        .map(|m| {
            let (k, phi): (f64, Vec<Complex64>) = match params.boundary {
                Boundary::Open => {
                    let k = PI * (m + 1) as f64 / (lf + 1.0);
                    let norm = (2.0 / (lf + 1.0)).sqrt();
                    let phi = (1..=l)
                        .map(|j| Complex64::new(norm * (k * j as f64).sin(), 0.0))
                        .collect();
                    (k, phi)
                }
                Boundary::Periodic => {
                    let mut k = 2.0 * PI * m as f64 / lf;
                    if k > PI {
                        k -= 2.0 * PI;
                    }
                    let norm = 1.0 / lf.sqrt();
                    let phi = (1..=l)
                        .map(|j| Complex64::from_polar(norm, k * j as f64))
                        .collect();
                    (k, phi)
                }
            };
            let omega = params.onsite + 2.0 * params.hopping * k.cos();
            (k, omega, phi)
        })
        .collect();

    modes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));

    let mut k = Vec::with_capacity(l);
    let mut omega = Vec::with_capacity(l);
    let mut phi = Vec::with_capacity(l * l);
    for (km, wm, pm) in modes {
        k.push(km);
        omega.push(wm);
        phi.extend(pm);
    }
    Ok(ModeSpectrum {
        k,
        omega,
        phi,
        hopping: params.hopping,
        onsite: params.onsite,
        boundary: params.boundary,
    })
}

/// Tight-binding density of states `[2 pi J sqrt(1 - (omega/2J)^2)]^-1`,
/// normalized to one over the band.
pub fn density_of_states(omega: f64, hopping: f64) -> Result<f64> {
    let edge = 2.0 * hopping;
    if !(omega.abs() < edge) {
        return Err(Error::OutOfBand { omega, band_edge: edge });
    }
    let x = omega / edge;
    Ok(1.0 / (2.0 * PI * hopping * (1.0 - x * x).sqrt()))
}

pub fn overlap_factor(spectrum: &ModeSpectrum, k: usize, kp: usize, mode: GammaMode) -> f64 {
    let l = spectrum.len();
    assert!(k < l && kp < l, "mode index out of range");
    match mode {
        GammaMode::Uniform => 1.0 / l as f64,
        GammaMode::SiteResolved => spectrum
            .mode_function(k)
            .iter()
            .zip(spectrum.mode_function(kp))
            .map(|(a, b)| a.norm_sqr() * b.norm_sqr())
            .sum(),
    }
}

/// Full symmetric `gamma_{kk'}` matrix, row-major.
pub fn gamma_matrix(spectrum: &ModeSpectrum, mode: GammaMode) -> Vec<f64> {
    let l = spectrum.len();
    match mode {
        GammaMode::Uniform => vec![1.0 / l as f64; l * l],
        GammaMode::SiteResolved => {
            let w = spectrum.site_weights();
            let mut gamma = vec![0.0; l * l];
            for a in 0..l {
                for b in a..l {
                    let g: f64 = (0..l).map(|j| w[a * l + j] * w[b * l + j]).sum();
                    gamma[a * l + b] = g;
                    gamma[b * l + a] = g;
                }
            }
            gamma
        }
    }
}
