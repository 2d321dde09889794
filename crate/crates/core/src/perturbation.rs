//! Perturbative steady state: a Bose-Einstein distribution at `beta0`
//! deformed by the energy dependence of the reservoir temperature.
//!
//! The deformed occupations are
//!
//! ```text
//! n(w) = n_BE(w) { 1 - e^{beta0 (w - mu)} n_BE(w) [ a (w^2 + 18 J^2) w - C ] },
//! a    = beta0^2 (3 + beta0 Delta) / (36 Delta),
//! ```
//!
//! with `mu` fixed by `sum_k n_BE = N` and the single constant `C` fixed by
//! `sum_k n = N`. Writing `C = e^{-beta0 mu} c = e^{beta0 mu} c2` recovers the
//! two published conventions for the integration constant.

use crate::error::{Error, Result};
use crate::lattice::ModeSpectrum;
use crate::quadrature::GaussLegendre;
use crate::reservoir::{base_inverse_temperature, noise_spectrum, ReservoirParams};

/// Upper end of the bisection bracket, as `beta0 * (distance to the band edge)`.
const MAX_EXPONENT: f64 = 700.0;
/// Lower end of the bracket, in units of `J`.
const EDGE_GAP: f64 = 1e-12;
const MU_REL_TOL: f64 = 1e-10;
/// Half-width of the central-difference stencil, in units of `J`.
const FD_STEP: f64 = 1e-5;
/// Smallest lattice for which a continuum comparison is meaningful.
const MIN_CONTINUUM_MODES: usize = 8;

/// `1 / (exp[beta0 (omega - mu)] - 1)`.
pub fn bose_einstein(omega: f64, beta0: f64, mu: f64) -> Result<f64> {
    let x = beta0 * (omega - mu);
    if !(x > 0.0) {
        return Err(Error::Domain { exponent: x });
    }
    Ok(1.0 / x.exp_m1())
}

/// Chemical potential with `sum_k n_BE(omega_k; beta0, mu) = N`.
///
/// The search variable is the distance `s` between `mu` and the band edge the
/// distribution piles up against (bottom for `beta0 > 0`, top for `beta0 < 0`),
/// bisected in `ln s` so condensed states keep full resolution.
pub fn solve_chemical_potential(spectrum: &ModeSpectrum, total: f64, beta0: f64) -> Result<f64> {
    if beta0 == 0.0 {
        return Err(Error::Degenerate(
            "beta0 = 0 is the infinite-temperature limit; occupations are uniform N/L".into(),
        ));
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidParameter(format!("N must be positive, got {total}")));
    }
    if !beta0.is_finite() {
        return Err(Error::InvalidParameter("beta0 must be finite".into()));
    }
    let b = beta0.abs();
    let (edge, gaps): (f64, Vec<f64>) = if beta0 > 0.0 {
        let e = spectrum.omega_min();
        (e, spectrum.omega.iter().map(|w| w - e).collect())
    } else {
        let e = spectrum.omega_max();
        (e, spectrum.omega.iter().map(|w| e - w).collect())
    };
    let count = |s: f64| -> f64 { gaps.iter().map(|g| 1.0 / (b * (g + s)).exp_m1()).sum() };
    let mu_of = |s: f64| if beta0 > 0.0 { edge - s } else { edge + s };

    let mut lo = (EDGE_GAP * spectrum.hopping).ln();
    let mut hi = (MAX_EXPONENT / b).ln();
    if count(lo.exp()) < total {
        return Err(Error::InvalidParameter(format!(
            "N = {total} exceeds what the bracket can hold at beta0 = {beta0}"
        )));
    }
    if count(hi.exp()) > total {
        return Err(Error::InvalidParameter(format!("N = {total} is below the bracket floor")));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let c = count(mid.exp());
        if (c - total).abs() < MU_REL_TOL * total * 1e-2 || mid <= lo || mid >= hi {
            break;
        }
        // the count falls as s grows
        if c > total {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = mu_of(mid.exp());
    Ok(mu)
}

/// Which orders of the expansion are included in [`PerturbativeSolution::n`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// `n_BE` only.
    Leading,
    /// `n_BE` plus the deformation term.
    WithDeformation,
    /// `beta0 = 0`: uniform occupations.
    InfiniteTemperature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbativeSolution {
    pub beta0: f64,
    pub mu: f64,
    /// Constant multiplying the bracket directly.
    pub c: f64,
    pub n_be: Vec<f64>,
    pub n: Vec<f64>,
    pub order: Order,
    /// Set when any predicted occupation is not positive.
    pub outside_perturbative_regime: bool,
}

impl PerturbativeSolution {
    pub fn infinite_temperature(spectrum: &ModeSpectrum, total: f64) -> Self {
        let l = spectrum.len();
        let n = vec![total / l as f64; l];
        Self {
            beta0: 0.0,
            mu: f64::NAN,
            c: 0.0,
            n_be: n.clone(),
            n,
            order: Order::InfiniteTemperature,
            outside_perturbative_regime: false,
        }
    }

    /// The constant in the `e^{-beta0 mu} c` convention.
    pub fn c_main_text(&self) -> f64 {
        self.c * (self.beta0 * self.mu).exp()
    }

    /// The constant in the `e^{beta0 mu} c2` convention.
    pub fn c_supplement(&self) -> f64 {
        self.c * (-self.beta0 * self.mu).exp()
    }

    /// Indices of modes with non-positive predicted occupation.
    pub fn non_positive_modes(&self) -> Vec<usize> {
        self.n.iter().enumerate().filter(|(_, &v)| !(v > 0.0)).map(|(i, _)| i).collect()
    }
}

/// `a (w^2 + 18 J^2) w` with `a = beta0^2 (3 + beta0 Delta) / (36 Delta)`.
fn deformation_shape(omega: f64, beta0: f64, reservoir: &ReservoirParams, hopping: f64) -> f64 {
    let a = beta0 * beta0 * reservoir.curvature_factor() / (36.0 * reservoir.detuning);
    a * (omega * omega + 18.0 * hopping * hopping) * omega
}

fn require_detuning(reservoir: &ReservoirParams) -> Result<()> {
    if reservoir.detuning == 0.0 {
        return Err(Error::Degenerate("expansion undefined at Delta = 0 (beta0 = 0)".into()));
    }
    Ok(())
}

pub fn deformed_distribution(
    spectrum: &ModeSpectrum,
    total: f64,
    reservoir: &ReservoirParams,
) -> Result<PerturbativeSolution> {
    require_detuning(reservoir)?;
    let beta0 = base_inverse_temperature(reservoir);
    if beta0 == 0.0 {
        return Err(Error::Degenerate("beta0 = 0".into()));
    }
    let mu = solve_chemical_potential(spectrum, total, beta0)?;
    let n_be = spectrum
        .omega
        .iter()
        .map(|&w| bose_einstein(w, beta0, mu))
        .collect::<Result<Vec<_>>>()?;
    // e^{x} n_BE^2 = n_BE (n_BE + 1)
    let weight: Vec<f64> = n_be.iter().map(|n| n * (n + 1.0)).collect();
    let shape: Vec<f64> = spectrum
        .omega
        .iter()
        .map(|&w| deformation_shape(w, beta0, reservoir, spectrum.hopping))
        .collect();
    let wsum: f64 = weight.iter().sum();
    let c = if wsum > 0.0 {
        weight.iter().zip(&shape).map(|(w, a)| w * a).sum::<f64>() / wsum
    } else {
        0.0
    };
    let n: Vec<f64> = n_be
        .iter()
        .zip(&weight)
        .zip(&shape)
        .map(|((nb, w), a)| nb - w * (a - c))
        .collect();
    let outside = n.iter().any(|&v| !(v > 0.0));
    Ok(PerturbativeSolution {
        beta0,
        mu,
        c,
        n_be,
        n,
        order: Order::WithDeformation,
        outside_perturbative_regime: outside,
    })
}

/// Leading-order energy-dependent inverse temperature
/// `beta0 [1 + (beta0 / 36 Delta)(3 + beta0 Delta)(w^2 + 18 J^2)]`.
pub fn energy_dependent_beta(omega: f64, reservoir: &ReservoirParams, hopping: f64) -> Result<f64> {
    require_detuning(reservoir)?;
    let b0 = base_inverse_temperature(reservoir);
    Ok(b0
        * (1.0
            + b0 / (36.0 * reservoir.detuning)
                * reservoir.curvature_factor()
                * (omega * omega + 18.0 * hopping * hopping)))
}

/// Max-norm residuals of the three order-by-order ODEs, each relative to the
/// largest term appearing in its equation (zero when every term vanishes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeResiduals {
    /// `n0' + beta0 n0 (n0 + 1) = 0`.
    pub zeroth: f64,
    /// `n1' + beta0 n1 (n0 + 1) = 0`.
    pub first: f64,
    /// `n2' + beta0 n2 (2 n0 + 1) + b(w) n0 (n0 + 1) = 0`.
    pub second: f64,
}

impl OdeResiduals {
    pub fn max(&self) -> f64 {
        self.zeroth.max(self.first).max(self.second)
    }
}

/// Central difference refined once by Richardson extrapolation.
fn derivative<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let h2 = 0.5 * h;
    let d2 = (f(x + h2) - f(x - h2)) / (2.0 * h2);
    (4.0 * d2 - d1) / 3.0
}

fn relative(worst: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        worst / scale
    } else {
        worst
    }
}

/// Check the closed-form orders against their ODEs on `points` frequencies
/// spanning `(-0.95 * 2J, 0.95 * 2J)`.
pub fn residual_supplemental_odes_on(
    solution: &PerturbativeSolution,
    reservoir: &ReservoirParams,
    hopping: f64,
    points: usize,
) -> Result<OdeResiduals> {
    require_detuning(reservoir)?;
    let b0 = solution.beta0;
    let mu = solution.mu;
    let delta = reservoir.detuning;
    // c1 = 0 follows from normalizing n0 alone
    let c1 = 0.0;
    let c2 = solution.c_supplement();

    let n0 = |w: f64| 1.0 / (b0 * (w - mu)).exp_m1();
    let g = |w: f64| {
        let e = (b0 * (w - mu)).exp();
        e / ((e - 1.0) * (e - 1.0))
    };
    let n1 = |w: f64| {
        let e = (b0 * (w - mu)).exp();
        c1 * (b0 * (w - 2.0 * mu)).exp() / ((e - 1.0) * (e - 1.0))
    };
    let n2 = |w: f64| -g(w) * (deformation_shape(w, b0, reservoir, hopping) - (b0 * mu).exp() * c2);
    let source = |w: f64| {
        b0 * b0 * reservoir.curvature_factor() * (6.0 * hopping * hopping + w * w) / (12.0 * delta)
    };

    let h = FD_STEP * hopping;
    let lo = -1.9 * hopping;
    let hi = 1.9 * hopping;
    let points = points.max(2);
    let (mut r0, mut s0) = (0.0f64, 0.0f64);
    let (mut r1, mut s1) = (0.0f64, 0.0f64);
    let (mut r2, mut s2) = (0.0f64, 0.0f64);
    for i in 0..points {
        let w = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let a = n0(w);
        let occ = a * (a + 1.0);

        let t = [derivative(&n0, w, h), b0 * occ];
        r0 = r0.max((t[0] + t[1]).abs());
        s0 = s0.max(t[0].abs()).max(t[1].abs());

        let v1 = n1(w);
        let t = [derivative(&n1, w, h), b0 * v1 * (a + 1.0)];
        r1 = r1.max((t[0] + t[1]).abs());
        s1 = s1.max(t[0].abs()).max(t[1].abs());

        let v2 = n2(w);
        let t = [derivative(&n2, w, h), b0 * v2 * (2.0 * a + 1.0), source(w) * occ];
        r2 = r2.max((t[0] + t[1] + t[2]).abs());
        s2 = s2.max(t[0].abs()).max(t[1].abs()).max(t[2].abs());
    }
    Ok(OdeResiduals {
        zeroth: relative(r0, s0),
        first: relative(r1, s1),
        second: relative(r2, s2),
    })
}

pub fn residual_supplemental_odes(
    solution: &PerturbativeSolution,
    reservoir: &ReservoirParams,
    hopping: f64,
) -> Result<OdeResiduals> {
    residual_supplemental_odes_on(solution, reservoir, hopping, 381)
}

/// Linear interpolation of per-mode values in energy, flat outside the
/// outermost modes. Degenerate energies are averaged.
struct EnergyProfile {
    omega: Vec<f64>,
    value: Vec<f64>,
}

impl EnergyProfile {
    fn new(omega: &[f64], value: &[f64]) -> Self {
        let mut xs: Vec<f64> = Vec::with_capacity(omega.len());
        let mut ys: Vec<f64> = Vec::with_capacity(omega.len());
        let mut count = 0.0;
        for (&w, &v) in omega.iter().zip(value) {
            if xs.last() == Some(&w) {
                let y = ys.last_mut().unwrap();
                *y = (*y * count + v) / (count + 1.0);
                count += 1.0;
            } else {
                xs.push(w);
                ys.push(v);
                count = 1.0;
            }
        }
        Self { omega: xs, value: ys }
    }

    fn at(&self, w: f64) -> f64 {
        let xs = &self.omega;
        let last = xs.len() - 1;
        if w <= xs[0] {
            return self.value[0];
        }
        if w >= xs[last] {
            return self.value[last];
        }
        let i = xs.partition_point(|&x| x <= w);
        let (x0, x1) = (xs[i - 1], xs[i]);
        let t = (w - x0) / (x1 - x0);
        self.value[i - 1] * (1.0 - t) + self.value[i] * t
    }
}

/// Continuum steady-state condition evaluated at every mode energy,
///
/// ```text
/// R(w_k) = int dw' D(w') { S(w' - w_k) n(w') [n(w_k) + 1] - S(w_k - w') n(w_k) [n(w') + 1] },
/// ```
///
/// with `n(w')` interpolated from the per-mode values. Returns
/// `J * max_k |R(w_k)|`.
pub fn continuum_steady_residual(
    n: &[f64],
    spectrum: &ModeSpectrum,
    reservoir: &ReservoirParams,
    quad: &GaussLegendre,
) -> Result<f64> {
    let l = spectrum.len();
    if l < MIN_CONTINUUM_MODES {
        return Err(Error::SmallLattice(l));
    }
    if n.len() != l {
        return Err(Error::InvalidParameter("distribution length differs from L".into()));
    }
    let profile = EnergyProfile::new(&spectrum.omega, n);
    let j = spectrum.hopping;
    let worst = spectrum
        .omega
        .iter()
        .zip(n)
        .map(|(&wk, &nk)| {
            quad.band_average(j, |wp| {
                let np = profile.at(wp);
                noise_spectrum(wp - wk, reservoir) * np * (nk + 1.0)
                    - noise_spectrum(wk - wp, reservoir) * nk * (np + 1.0)
            })
            .abs()
        })
        .fold(0.0f64, f64::max);
    Ok(worst * j)
}
