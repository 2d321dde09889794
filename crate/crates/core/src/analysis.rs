//! Scores for comparing a kinetic steady state with analytic approximations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::perturbation::PerturbativeSolution;

/// Relative entropy together with the modes that had to be dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct KlDivergence {
    pub value: f64,
    /// Modes with positive reference occupation but non-positive approximant.
    pub excluded_modes: Vec<usize>,
}

impl KlDivergence {
    pub fn is_reliable(&self) -> bool {
        self.excluded_modes.is_empty()
    }
}

/// `sum_k p_k ln(p_k / q_k)` with `p` and `q` the two distributions, each
/// normalized to unit mass over the modes that enter the sum.
///
/// Modes with `n_ref = 0` contribute nothing. Modes where the approximant is
/// not positive are skipped and listed in [`KlDivergence::excluded_modes`];
/// both distributions are then renormalized on the remaining support, so the
/// value stays non-negative but is only indicative.
pub fn kl_divergence(n_ref: &[f64], n_approx: &[f64]) -> Result<KlDivergence> {
    if n_ref.len() != n_approx.len() {
        return Err(Error::InvalidParameter(format!(
            "distributions differ in length ({} vs {})",
            n_ref.len(),
            n_approx.len()
        )));
    }
    if n_ref.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter("reference occupations must be finite and >= 0".into()));
    }
    if !(n_ref.iter().sum::<f64>() > 0.0) {
        return Err(Error::InvalidParameter("reference distribution is empty".into()));
    }
    let mut excluded_modes = Vec::new();
    let mut support = Vec::with_capacity(n_ref.len());
    for (k, (&r, &a)) in n_ref.iter().zip(n_approx).enumerate() {
        if r == 0.0 {
            continue;
        }
        if a > 0.0 && a.is_finite() {
            support.push((r, a));
        } else {
            excluded_modes.push(k);
        }
    }
    if support.is_empty() {
        return Err(Error::UndefinedDivergence);
    }
    let ref_mass: f64 = support.iter().map(|s| s.0).sum();
    let approx_mass: f64 = support.iter().map(|s| s.1).sum();
    let value = support
        .iter()
        .map(|&(r, a)| {
            let p = r / ref_mass;
            p * (p / (a / approx_mass)).ln()
        })
        .sum();
    Ok(KlDivergence { value, excluded_modes })
}

/// `R = KL(ref || BE) / KL(ref || perturbative)`; infinite when the
/// perturbative divergence vanishes and the BE one does not.
pub fn kl_ratio(n_ref: &[f64], n_pert: &[f64], n_be: &[f64]) -> Result<f64> {
    let pert = kl_divergence(n_ref, n_pert)?.value;
    let be = kl_divergence(n_ref, n_be)?.value;
    Ok(ratio(be, pert))
}

fn ratio(be: f64, pert: f64) -> f64 {
    if pert > 0.0 {
        be / pert
    } else if be > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// `n_GS - n_high`: occupation of the lowest-energy mode minus that of the
/// highest, for occupations ordered by ascending energy.
pub fn ground_vs_top(n: &[f64]) -> Result<f64> {
    match n {
        [first, .., last] => Ok(first - last),
        _ => Err(Error::InvalidParameter("ground_vs_top needs at least two modes".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureFit {
    pub beta: f64,
    /// Undefined when the fitted slope is zero.
    pub mu: Option<f64>,
    /// Root-mean-square deviation of `ln(1 + 1/n)` from the fitted line.
    pub residual: f64,
}

/// Least-squares line through `(omega_k, ln(1 + 1/n_k))`; the slope is the
/// inverse temperature and the intercept is `-beta mu`.
pub fn fit_inverse_temperature(n: &[f64], omega: &[f64]) -> Result<TemperatureFit> {
    if n.len() != omega.len() || n.len() < 2 {
        return Err(Error::InvalidParameter("fit needs matching arrays of at least two modes".into()));
    }
    if let Some(k) = n.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "temperature fit needs positive occupations; mode {k} has {}",
            n[k]
        )));
    }
    let m = n.len() as f64;
    let y: Vec<f64> = n.iter().map(|&x| (1.0 / x).ln_1p()).collect();
    let xbar = omega.iter().sum::<f64>() / m;
    let ybar = y.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &yy) in omega.iter().zip(&y) {
        sxx += (x - xbar) * (x - xbar);
        sxy += (x - xbar) * (yy - ybar);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all mode energies coincide".into()));
    }
    let beta = sxy / sxx;
    let intercept = ybar - beta * xbar;
    let ss: f64 = omega
        .iter()
        .zip(&y)
        .map(|(&x, &yy)| (yy - intercept - beta * x).powi(2))
        .sum();
    let mu = (beta != 0.0).then(|| -intercept / beta);
    Ok(TemperatureFit { beta, mu, residual: (ss / m).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub kl_vs_perturbative: f64,
    pub kl_vs_be: f64,
    #[serde(rename = "R")]
    pub ratio_r: f64,
    /// `n_GS - n_high`.
    pub delta_n: f64,
    pub fitted_beta: Option<f64>,
    pub fitted_mu: Option<f64>,
    pub excluded_modes: Vec<usize>,
}

impl ComparisonReport {
    pub fn new(n_steady: &[f64], omega: &[f64], approx: &PerturbativeSolution) -> Result<Self> {
        let pert = kl_divergence(n_steady, &approx.n)?;
        let be = kl_divergence(n_steady, &approx.n_be)?;
        let fit = fit_inverse_temperature(n_steady, omega).ok();
        Ok(Self {
            kl_vs_perturbative: pert.value,
            kl_vs_be: be.value,
            ratio_r: ratio(be.value, pert.value),
            delta_n: ground_vs_top(n_steady)?,
            fitted_beta: fit.map(|f| f.beta),
            fitted_mu: fit.and_then(|f| f.mu),
            excluded_modes: pert.excluded_modes,
        })
    }
}
