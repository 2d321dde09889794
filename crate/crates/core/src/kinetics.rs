//! Golden-rule kinetic equations for the mode occupations.
//!
//! Time is measured in `tau = chi^2 t / J`. The rate for scattering a particle
//! from mode `k` to `k'` is `gamma_{kk'} chi^2 S(omega_k - omega_k') n_k (n_k' + 1)`;
//! dividing by `chi^2 / J` leaves `J gamma_{kk'} S(omega_k - omega_k')` as the
//! occupation-independent coefficient stored in [`RateContext`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::{DormandPrince, StepControl};
use crate::lattice::{gamma_matrix, GammaMode, ModeSpectrum};
use crate::quadrature::GaussLegendre;
use crate::reservoir::{noise_spectrum, ReservoirParams};

pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-10;
pub const DEFAULT_TAU_MAX: f64 = 1e7;
/// Allowed relative drift of the particle number over a run.
pub const CONSERVATION_TOL: f64 = 1e-9;
/// Occupations below this are treated as an integrator failure.
pub const POSITIVITY_FLOOR: f64 = -1e-12;

const HISTORY_EVERY: usize = 200;
const HISTORY_CAP: usize = 2000;

/// Mean occupation of every mode at time `tau`, ordered as the spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupations {
    pub n: Vec<f64>,
    pub tau: f64,
    /// Total particle number the state was prepared with.
    pub total: f64,
}

impl Occupations {
    pub fn new(n: Vec<f64>, tau: f64) -> Result<Self> {
        let total = n.iter().sum();
        let occ = Self { n, tau, total };
        occ.validate()?;
        Ok(occ)
    }

    /// `N / L` particles in each of `modes` modes.
    pub fn uniform(modes: usize, total: f64) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter("need at least one mode".into()));
        }
        Self::new(vec![total / modes as f64; modes], 0.0)
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.n.iter().sum()
    }

    /// `sum_k n_k - N`.
    pub fn drift(&self) -> f64 {
        self.sum() - self.total
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total >= 0.0) || !self.total.is_finite() {
            return Err(Error::InvalidParameter(format!("N must be finite and >= 0, got {}", self.total)));
        }
        if let Some((mode, &value)) =
            self.n.iter().enumerate().find(|(_, &v)| !(v >= POSITIVITY_FLOOR) || !v.is_finite())
        {
            return Err(Error::Positivity { tau: self.tau, mode, value });
        }
        if self.drift().abs() > CONSERVATION_TOL * self.total {
            return Err(Error::Conservation { tau: self.tau, drift: self.drift() });
        }
        Ok(())
    }
}

/// Occupation-independent part of the golden-rule rates on the mode grid.
#[derive(Debug, Clone)]
pub struct RateContext {
    modes: usize,
    /// Symmetric `gamma_{kk'}`, row-major.
    pub gamma: Vec<f64>,
    /// `S(omega_k - omega_k')`, row-major.
    pub s_matrix: Vec<f64>,
    pub chi_sq: f64,
    pub hopping: f64,
    /// `J gamma_{kk'} S_{kk'}` for the `k -> k'` channel; zero when `chi = 0`.
    coeff: Vec<f64>,
}

impl RateContext {
    pub fn len(&self) -> usize {
        self.modes
    }

    pub fn is_empty(&self) -> bool {
        self.modes == 0
    }

    /// Coefficient of `n_k (n_k' + 1)` in `d n_k' / d tau`.
    pub fn coefficient(&self, from: usize, to: usize) -> f64 {
        self.coeff[from * self.modes + to]
    }

    /// True if no pair of distinct modes exchanges particles.
    pub fn is_inert(&self) -> bool {
        let l = self.modes;
        (0..l).all(|a| (0..l).all(|b| a == b || self.coeff[a * l + b] == 0.0))
    }
}

pub fn build_rate_context(
    spectrum: &ModeSpectrum,
    reservoir: &ReservoirParams,
    gamma_mode: GammaMode,
) -> RateContext {
    let l = spectrum.len();
    let gamma = gamma_matrix(spectrum, gamma_mode);
    let mut s_matrix = vec![0.0; l * l];
    for a in 0..l {
        for b in 0..l {
            s_matrix[a * l + b] = noise_spectrum(spectrum.omega[a] - spectrum.omega[b], reservoir);
        }
    }
    let chi_sq = reservoir.chi * reservoir.chi;
    let scale = if chi_sq > 0.0 { spectrum.hopping } else { 0.0 };
    let coeff = gamma
        .iter()
        .zip(&s_matrix)
        .map(|(g, s)| scale * g * s)
        .collect();
    RateContext { modes: l, gamma, s_matrix, chi_sq, hopping: spectrum.hopping, coeff }
}

/// `d n_k / d tau` written into `out`.
///
/// Each unordered pair contributes one flux, added to one mode and removed
/// from the other, so the total is conserved up to round-off.
pub fn rhs_into(n: &[f64], ctx: &RateContext, out: &mut [f64]) {
    let l = ctx.modes;
    debug_assert_eq!(n.len(), l);
    out.iter_mut().for_each(|x| *x = 0.0);
    let c = &ctx.coeff;
    for a in 0..l {
        let na = n[a];
        let row = &c[a * l..(a + 1) * l];
        let mut acc = 0.0;
        for b in (a + 1)..l {
            let nb = n[b];
            let flux = c[b * l + a] * nb * (na + 1.0) - row[b] * na * (nb + 1.0);
            acc += flux;
            out[b] -= flux;
        }
        out[a] += acc;
    }
}

pub fn rhs(n: &[f64], ctx: &RateContext) -> Vec<f64> {
    let mut out = vec![0.0; n.len()];
    rhs_into(n, ctx, &mut out);
    out
}

/// Dimensionless steady-state residual `max_k |dn_k/dtau| / N`.
pub fn residual(n: &[f64], ctx: &RateContext, total: f64) -> f64 {
    normalized_max(&rhs(n, ctx), total)
}

fn normalized_max(d: &[f64], total: f64) -> f64 {
    let m = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if total > 0.0 {
        m / total
    } else {
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel_tol: f64,
    /// Absolute tolerance per component, in units of `N`.
    pub abs_tol: f64,
    pub min_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-12, min_step: 1e-14 }
    }
}

impl Tolerances {
    fn control(&self, total: f64) -> StepControl {
        let scale = if total > 0.0 { total } else { 1.0 };
        StepControl { rel_tol: self.rel_tol, abs_tol: self.abs_tol * scale, min_step: self.min_step }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Occupations>,
    pub converged: bool,
    pub final_residual: f64,
}

struct Stepper<'a> {
    ctx: &'a RateContext,
    total: f64,
    solver: DormandPrince,
}

impl<'a> Stepper<'a> {
    fn new(n0: &Occupations, ctx: &'a RateContext, tol: &Tolerances) -> Self {
        let solver = DormandPrince::new(n0.n.clone(), n0.tau, tol.control(n0.total), |y, d| {
            rhs_into(y, ctx, d)
        });
        Self { ctx, total: n0.total, solver }
    }

    fn advance(&mut self, t_stop: f64) -> Result<()> {
        let ctx = self.ctx;
        self.solver.step(t_stop, |y, d| rhs_into(y, ctx, d)).map_err(|e| Error::Stiffness {
            tau: e.t,
            step: e.step,
            state: self.solver.y().to_vec(),
        })?;
        self.check()
    }

    fn check(&self) -> Result<()> {
        let tau = self.solver.t();
        let y = self.solver.y();
        let drift = y.iter().sum::<f64>() - self.total;
        if drift.abs() > CONSERVATION_TOL * self.total {
            return Err(Error::Conservation { tau, drift });
        }
        if let Some((mode, &value)) = y.iter().enumerate().find(|(_, &v)| !(v >= POSITIVITY_FLOOR)) {
            return Err(Error::Positivity { tau, mode, value });
        }
        Ok(())
    }

    fn state(&self) -> Occupations {
        Occupations { n: self.solver.y().to_vec(), tau: self.solver.t(), total: self.total }
    }

    fn residual(&self) -> f64 {
        normalized_max(self.solver.dydt(), self.total)
    }
}

/// Integrate from `n0` to `tau_end`, recording a snapshot at every requested
/// `tau` (each must lie in `[n0.tau, tau_end]`, strictly increasing).
pub fn evolve(
    n0: &Occupations,
    ctx: &RateContext,
    tau_end: f64,
    output_taus: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    n0.validate()?;
    if n0.len() != ctx.len() {
        return Err(Error::InvalidParameter(format!(
            "state has {} modes, rate context {}",
            n0.len(),
            ctx.len()
        )));
    }
    if !(tau_end > n0.tau) || !tau_end.is_finite() {
        return Err(Error::InvalidParameter(format!("tau_end must exceed the start time, got {tau_end}")));
    }
    if output_taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("snapshot taus must be strictly increasing".into()));
    }
    if let Some(&t) = output_taus.iter().find(|&&t| !(t >= n0.tau && t <= tau_end)) {
        return Err(Error::InvalidParameter(format!(
            "snapshot tau {t} outside [{}, {tau_end}]",
            n0.tau
        )));
    }

    let mut stepper = Stepper::new(n0, ctx, tol);
    let mut snapshots = Vec::with_capacity(output_taus.len());
    for &t_out in output_taus {
        while stepper.solver.t() < t_out {
            stepper.advance(t_out)?;
        }
        snapshots.push(stepper.state());
    }
    while stepper.solver.t() < tau_end {
        stepper.advance(tau_end)?;
    }
    let final_residual = stepper.residual();
    Ok(Trajectory { snapshots, converged: final_residual < DEFAULT_RESIDUAL_TOL, final_residual })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    pub residual_tol: f64,
    pub tau_max: f64,
    pub tolerances: Tolerances,
    /// Refine the time-marched state with Newton iterations on the
    /// number-constrained fixed-point equations.
    pub polish: bool,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self {
            residual_tol: DEFAULT_RESIDUAL_TOL,
            tau_max: DEFAULT_TAU_MAX,
            tolerances: Tolerances::default(),
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub occupations: Occupations,
    pub converged: bool,
    /// Residual `max_k |dn_k/dtau| / N` of the returned state.
    pub residual: f64,
    /// Residual when time marching stopped, before any polishing.
    pub marched_residual: f64,
    pub steps: usize,
    pub history: Vec<(f64, f64)>,
}

/// Time-march until `max_k |dn_k/dtau| / N < residual_tol`.
///
/// With `polish` set, the marched state is refined by Newton iterations, and a
/// march that reaches `tau_max` still succeeds if the refined state meets the
/// tolerance.
pub fn find_steady_state(
    n0: &Occupations,
    ctx: &RateContext,
    opts: &SteadyStateOptions,
) -> Result<SteadyState> {
    n0.validate()?;
    if n0.len() != ctx.len() {
        return Err(Error::InvalidParameter("state and rate context disagree on L".into()));
    }
    let start = residual(&n0.n, ctx, n0.total);
    if ctx.is_inert() && ctx.len() > 1 {
        return Err(Error::Convergence {
            tau_max: opts.tau_max,
            reason: "the reservoir does not scatter particles (chi = 0 or Omega_0 = 0)".into(),
            history: vec![(n0.tau, start)],
        });
    }
    if start < opts.residual_tol {
        return Ok(SteadyState {
            occupations: n0.clone(),
            converged: true,
            residual: start,
            marched_residual: start,
            steps: 0,
            history: vec![(n0.tau, start)],
        });
    }

    let mut stepper = Stepper::new(n0, ctx, &opts.tolerances);
    let mut history = vec![(n0.tau, start)];
    let mut res = start;
    while res >= opts.residual_tol {
        if stepper.solver.t() >= opts.tau_max {
            let marched = stepper.state();
            if let Some(refined) = opts.polish.then(|| newton_polish(&marched, ctx)).flatten() {
                let r = residual(&refined.n, ctx, refined.total);
                if r < opts.residual_tol {
                    history.push((marched.tau, res));
                    return Ok(SteadyState {
                        occupations: refined,
                        converged: true,
                        residual: r,
                        marched_residual: res,
                        steps: stepper.solver.accepted_steps(),
                        history,
                    });
                }
            }
            return Err(Error::Convergence {
                tau_max: opts.tau_max,
                reason: format!("residual {res:e} above tolerance {:e}", opts.residual_tol),
                history,
            });
        }
        stepper.advance(opts.tau_max)?;
        res = stepper.residual();
        let steps = stepper.solver.accepted_steps();
        if steps.is_multiple_of(HISTORY_EVERY) && history.len() < HISTORY_CAP {
            history.push((stepper.solver.t(), res));
        }
    }
    history.push((stepper.solver.t(), res));

    let marched = stepper.state();
    let mut occupations = marched.clone();
    let mut final_res = res;
    if opts.polish {
        if let Some(refined) = newton_polish(&marched, ctx) {
            let r = residual(&refined.n, ctx, refined.total);
            if r <= final_res {
                occupations = refined;
                final_res = r;
            }
        }
    }
    Ok(SteadyState {
        occupations,
        converged: true,
        residual: final_res,
        marched_residual: res,
        steps: stepper.solver.accepted_steps(),
        history,
    })
}

/// Newton iterations on `F(n) = 0` with one (redundant) equation replaced by
/// `sum_k n_k = N`. Returns `None` if the iteration leaves the physical domain.
fn newton_polish(state: &Occupations, ctx: &RateContext) -> Option<Occupations> {
    let l = ctx.len();
    if l < 2 {
        return None;
    }
    let c = &ctx.coeff;
    let mut n = state.n.clone();
    let mut f = vec![0.0; l];
    let mut best = residual(&n, ctx, state.total);
    for _ in 0..12 {
        rhs_into(&n, ctx, &mut f);
        let mut jac = DMatrix::<f64>::zeros(l, l);
        for k in 0..l {
            let mut diag = 0.0;
            for m in 0..l {
                if m == k {
                    continue;
                }
                diag += c[m * l + k] * n[m] - c[k * l + m] * (n[m] + 1.0);
                jac[(k, m)] = c[m * l + k] * (n[k] + 1.0) - c[k * l + m] * n[k];
            }
            jac[(k, k)] = diag;
        }
        // the rows of F sum to zero; trade the most occupied one for the constraint
        let pivot = (0..l).max_by(|&a, &b| n[a].total_cmp(&n[b])).unwrap_or(0);
        let mut rhs = DVector::from_iterator(l, f.iter().map(|x| -x));
        for m in 0..l {
            jac[(pivot, m)] = 1.0;
        }
        rhs[pivot] = state.total - n.iter().sum::<f64>();
        let delta = jac.lu().solve(&rhs)?;
        let trial: Vec<f64> = n.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
        if trial.iter().any(|&v| !(v >= 0.0)) {
            return None;
        }
        let r = residual(&trial, ctx, state.total);
        let step = delta.amax();
        n = trial;
        if r >= best && step < 1e-14 * state.total.max(1.0) {
            break;
        }
        best = best.min(r);
        if step < 1e-15 * state.total.max(1.0) {
            break;
        }
    }
    Some(Occupations { n, tau: state.tau, total: state.total })
}

/// Early-time `dn/dtau` of a mode at `omega_k` when every mode holds `n0`
/// particles, using the continuum density of states:
/// `gamma J n0 (n0 + 1) int D(omega + omega_k) [S(omega) - S(-omega)] d omega`.
pub fn early_time_rate(
    omega_k: f64,
    n0: f64,
    hopping: f64,
    gamma: f64,
    reservoir: &ReservoirParams,
    quad: &GaussLegendre,
) -> Result<f64> {
    let edge = 2.0 * hopping;
    if !(omega_k.abs() < edge) {
        return Err(Error::OutOfBand { omega: omega_k, band_edge: edge });
    }
    if !(n0 >= 0.0) {
        return Err(Error::InvalidParameter(format!("n0 must be >= 0, got {n0}")));
    }
    let integral = quad.band_average(hopping, |w_to| {
        let w = w_to - omega_k;
        noise_spectrum(w, reservoir) - noise_spectrum(-w, reservoir)
    });
    Ok(gamma * hopping * n0 * (n0 + 1.0) * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_modes, Boundary, LatticeParams};

    fn ctx(l: usize, delta: f64, kappa: f64, mode: GammaMode) -> (ModeSpectrum, RateContext) {
        let s = build_modes(&LatticeParams::new(l, Boundary::Open)).unwrap();
        let r = ReservoirParams::new(1e-3, 0.1, delta, kappa);
        let c = build_rate_context(&s, &r, mode);
        (s, c)
    }

    #[test]
    fn uniform_gamma_two_modes() {
        let (_, c) = ctx(2, -3.0, 1.0, GammaMode::Uniform);
        assert_eq!(c.gamma, vec![0.5; 4]);
    }

    #[test]
    fn s_matrix_orientation() {
        let (s, c) = ctx(6, -3.0, 1.0, GammaMode::SiteResolved);
        let r = ReservoirParams::new(1e-3, 0.1, -3.0, 1.0);
        for a in 0..6 {
            for b in 0..6 {
                let w = s.omega[a] - s.omega[b];
                assert_eq!(c.s_matrix[a * 6 + b], noise_spectrum(w, &r));
                assert_eq!(c.s_matrix[b * 6 + a], noise_spectrum(-w, &r));
            }
        }
        let (_, z) = ctx(6, 0.0, 1.0, GammaMode::SiteResolved);
        for a in 0..6 {
            for b in 0..6 {
                assert_eq!(z.s_matrix[a * 6 + b], z.s_matrix[b * 6 + a]);
            }
        }
    }

    #[test]
    fn resonant_entry_equals_peak() {
        // J = 3/2 puts the two open-chain modes at -3/2 and +3/2, a 3J gap
        let mut p = LatticeParams::new(2, Boundary::Open);
        p.hopping = 1.5;
        let s = build_modes(&p).unwrap();
        let r = ReservoirParams::new(1e-3, 0.1, -3.0, 1.0);
        let c = build_rate_context(&s, &r, GammaMode::Uniform);
        assert!((s.omega[1] - s.omega[0] - 3.0).abs() < 1e-14);
        assert!((c.s_matrix[2] - 4.3243e-3).abs() < 1e-7);
        assert!((c.s_matrix[2] - 0.04 / 9.25).abs() < 1e-16);
        assert!(c.s_matrix.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn vacuum_and_uniform_are_stationary() {
        let (_, c) = ctx(20, -3.0, 1.0, GammaMode::SiteResolved);
        assert!(rhs(&[0.0; 20], &c).iter().all(|&x| x == 0.0));
        let (_, z) = ctx(20, 0.0, 1.0, GammaMode::SiteResolved);
        let d = rhs(&[0.7; 20], &z);
        assert!(d.iter().all(|x| x.abs() < 1e-18), "{d:?}");
    }

    #[test]
    fn rhs_matches_direct_double_sum() {
        let (_, c) = ctx(7, -2.0, 0.7, GammaMode::SiteResolved);
        let n = [0.3, 1.2, 0.0, 2.5, 0.9, 0.1, 4.0];
        let d = rhs(&n, &c);
        for k in 0..7 {
            let mut direct = 0.0;
            for kp in 0..7 {
                if kp != k {
                    direct += c.coefficient(kp, k) * n[kp] * (n[k] + 1.0)
                        - c.coefficient(k, kp) * n[k] * (n[kp] + 1.0);
                }
            }
            assert!((d[k] - direct).abs() < 1e-15);
        }
        let total: f64 = d.iter().sum();
        let scale = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(total.abs() < 1e-14 * scale * 7.0);
    }

    #[test]
    fn zero_coupling_is_inert() {
        let s = build_modes(&LatticeParams::new(10, Boundary::Open)).unwrap();
        let r = ReservoirParams::new(0.0, 0.1, -3.0, 1.0);
        let c = build_rate_context(&s, &r, GammaMode::SiteResolved);
        assert!(c.is_inert());
        let n0 = Occupations::uniform(10, 5.0).unwrap();
        let t = evolve(&n0, &c, 100.0, &[1.0, 50.0], &Tolerances::default()).unwrap();
        for snap in &t.snapshots {
            assert_eq!(snap.n, n0.n);
        }
        assert!(matches!(
            find_steady_state(&n0, &c, &SteadyStateOptions::default()),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn snapshot_validation() {
        let (_, c) = ctx(4, -3.0, 1.0, GammaMode::Uniform);
        let n0 = Occupations::uniform(4, 2.0).unwrap();
        let tol = Tolerances::default();
        assert!(evolve(&n0, &c, 10.0, &[2.0, 1.0], &tol).is_err());
        assert!(evolve(&n0, &c, 10.0, &[11.0], &tol).is_err());
        assert!(evolve(&n0, &c, 0.0, &[], &tol).is_err());
        let t = evolve(&n0, &c, 10.0, &[0.0, 10.0], &tol).unwrap();
        assert_eq!(t.snapshots[0].n, n0.n);
        assert_eq!(t.snapshots[0].tau, 0.0);
        assert_eq!(t.snapshots[1].tau, 10.0);
    }

    #[test]
    fn delta_zero_uniform_returns_immediately() {
        let (_, c) = ctx(30, 0.0, 1.0, GammaMode::SiteResolved);
        let n0 = Occupations::uniform(30, 15.0).unwrap();
        let ss = find_steady_state(&n0, &c, &SteadyStateOptions::default()).unwrap();
        assert_eq!(ss.steps, 0);
        assert_eq!(ss.occupations, n0);
    }

    #[test]
    fn occupations_validation() {
        assert!(Occupations::new(vec![1.0, -0.1], 0.0).is_err());
        let mut o = Occupations::uniform(3, 3.0).unwrap();
        o.n[0] += 1e-6;
        assert!(matches!(o.validate(), Err(Error::Conservation { .. })));
    }

    #[test]
    fn early_rate_edge_cases() {
        let q = GaussLegendre::new(512);
        let r = ReservoirParams::new(1e-3, 0.1, 0.0, 1.0);
        assert!(early_time_rate(0.7, 0.5, 1.0, 0.01, &r, &q).unwrap().abs() < 1e-18);
        let r = ReservoirParams::new(1e-3, 0.1, -3.0, 1.0);
        assert_eq!(early_time_rate(0.7, 0.0, 1.0, 0.01, &r, &q).unwrap(), 0.0);
        assert!(matches!(early_time_rate(2.0, 0.5, 1.0, 0.01, &r, &q), Err(Error::OutOfBand { .. })));
        // cooling: the top of the band empties, the bottom fills
        assert!(early_time_rate(1.5, 0.5, 1.0, 0.01, &r, &q).unwrap() < 0.0);
        assert!(early_time_rate(-1.5, 0.5, 1.0, 0.01, &r, &q).unwrap() > 0.0);
    }
}
