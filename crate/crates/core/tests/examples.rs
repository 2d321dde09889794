//! Worked examples for the individual modules, checked against oracles
//! written out here rather than taken from the library.

use boson_kinetics::analysis::fit_inverse_temperature;
use boson_kinetics::config::RunConfig;
use boson_kinetics::kinetics::{
    build_rate_context, early_time_rate, evolve, find_steady_state, Occupations, SteadyStateOptions, Tolerances,
};
use boson_kinetics::lattice::{build_modes, Boundary, GammaMode, LatticeParams, ModeSpectrum};
use boson_kinetics::perturbation::{
    continuum_steady_residual, deformed_distribution, energy_dependent_beta, solve_chemical_potential,
};
use boson_kinetics::quadrature::{GaussLegendre, DEFAULT_BAND_NODES};
use boson_kinetics::reservoir::{noise_spectrum, steady_amplitude_sq, ReservoirParams};
use boson_kinetics::run::evaluate;

fn lorentzian(w: f64, a0_sq: f64, delta: f64, kappa: f64) -> f64 {
    a0_sq * kappa / ((w + delta).powi(2) + kappa * kappa / 4.0)
}

fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn chain(l: usize) -> ModeSpectrum {
    build_modes(&LatticeParams::new(l, Boundary::Open)).unwrap()
}

fn config(delta: f64, kappa: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.reservoir.delta_over_j = delta;
    cfg.reservoir.kappa_over_j = kappa;
    cfg
}

#[test]
fn noise_spectrum_matches_lorentzian_and_integrates_to_weight() {
    for &(delta, kappa) in &[(-3.0, 1.0), (2.0, 0.3), (0.0, 5.0)] {
        let r = ReservoirParams::new(1e-3, 0.1, delta, kappa);
        let a0 = steady_amplitude_sq(&r);
        assert!((a0 - 0.01 / (delta * delta + kappa * kappa / 4.0)).abs() < 1e-18);
        for i in -40..=40 {
            let w = 0.25 * i as f64;
            let s = noise_spectrum(w, &r);
            assert!(s > 0.0);
            assert!((s - lorentzian(w, a0, delta, kappa)).abs() <= 1e-14 * s);
        }
        // w + Delta = (kappa / 2) tan(theta) maps the real line onto (-pi/2, pi/2)
        let h = kappa / 2.0;
        let total = simpson(-std::f64::consts::FRAC_PI_2 + 1e-12, std::f64::consts::FRAC_PI_2 - 1e-12, 4000, |t| {
            let w = h * t.tan() - delta;
            noise_spectrum(w, &r) * h / t.cos().powi(2)
        });
        let exact = 2.0 * std::f64::consts::PI * a0;
        assert!(((total - exact) / exact).abs() < 1e-6);
    }
}

/// Root in `[0, N]` of the two-mode balance for the lower mode, given the
/// spectrum at the energy released (`s_down`) and absorbed (`s_up`).
fn two_mode_oracle(s_down: f64, s_up: f64, total: f64) -> f64 {
    // s_down n2 (n1 + 1) = s_up n1 (n2 + 1), n2 = N - n1
    let f = |x: f64| s_down * (total - x) * (x + 1.0) - s_up * x * (total - x + 1.0);
    let (mut lo, mut hi) = (0.0, total);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn two_modes_relax_to_detailed_balance() {
    let spectrum = chain(2);
    let r = ReservoirParams::new(1.0, 0.1, -3.0, 1.0);
    let ctx = build_rate_context(&spectrum, &r, GammaMode::Uniform);
    let gap = spectrum.omega[1] - spectrum.omega[0];
    let a0 = steady_amplitude_sq(&r);
    let expected = two_mode_oracle(lorentzian(gap, a0, -3.0, 1.0), lorentzian(-gap, a0, -3.0, 1.0), 1.0);

    let n0 = Occupations::uniform(2, 1.0).unwrap();
    let traj = evolve(&n0, &ctx, 5e4, &[5e4], &Tolerances::default()).unwrap();
    let n = &traj.snapshots[0].n;
    assert!((n[0] - expected).abs() < 1e-8, "{} vs {expected}", n[0]);
    assert!((n[0] + n[1] - 1.0).abs() < 1e-12);

    let ss = find_steady_state(&n0, &ctx, &SteadyStateOptions::default()).unwrap();
    assert!((ss.occupations.n[0] - expected).abs() < 1e-8);
}

#[test]
fn no_coupling_leaves_state_unchanged() {
    let spectrum = chain(12);
    let r = ReservoirParams::new(0.0, 0.1, -3.0, 1.0);
    let ctx = build_rate_context(&spectrum, &r, GammaMode::SiteResolved);
    let n: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 + 0.2).collect();
    let n0 = Occupations::new(n.clone(), 0.0).unwrap();
    let traj = evolve(&n0, &ctx, 100.0, &[1.0, 100.0], &Tolerances::default()).unwrap();
    for s in &traj.snapshots {
        assert_eq!(s.n, n);
    }
}

#[test]
fn detuning_mirror_reverses_the_steady_state() {
    let cold = evaluate(&config(-3.0, 1.0)).unwrap();
    let hot = evaluate(&config(3.0, 1.0)).unwrap();
    let a = &cold.steady.occupations.n;
    let b = &hot.steady.occupations.n;
    for k in 0..a.len() {
        assert!((a[k] - b[a.len() - 1 - k]).abs() < 1e-7 * a[k].max(1e-3));
    }
    assert!(cold.comparison.delta_n > 0.0);
    assert!(hot.comparison.delta_n < 0.0);
    assert!(hot.comparison.fitted_beta.unwrap() < 0.0);
}

#[test]
fn early_time_rate_limits() {
    let quad = GaussLegendre::new(DEFAULT_BAND_NODES);
    let flat = ReservoirParams::new(1e-3, 0.1, 0.0, 1.0);
    let driven = ReservoirParams::new(1e-3, 0.1, -3.0, 1.0);
    let scale = early_time_rate(1.0, 0.5, 1.0, 0.01, &driven, &quad).unwrap().abs();
    for i in -9..=9 {
        let w = 0.2 * i as f64;
        assert!(early_time_rate(w, 0.5, 1.0, 0.01, &flat, &quad).unwrap().abs() < 1e-15);
        assert_eq!(early_time_rate(w, 0.0, 1.0, 0.01, &driven, &quad).unwrap(), 0.0);
        let up = early_time_rate(w, 0.5, 1.0, 0.01, &driven, &quad).unwrap();
        let down = early_time_rate(-w, 0.5, 1.0, 0.01, &driven, &quad).unwrap();
        assert!((up + down).abs() <= 1e-8 * up.abs().max(scale));
    }
    assert!(early_time_rate(2.0, 0.5, 1.0, 0.01, &driven, &quad).is_err());

    // band integral of D(w) rate(w) with w = 2 sin(theta), D dw = d theta / pi
    let half = std::f64::consts::FRAC_PI_2;
    let integral = GaussLegendre::new(256).integrate(-half, half, |t| {
        early_time_rate(2.0 * t.sin(), 0.5, 1.0, 0.01, &driven, &quad).unwrap() / std::f64::consts::PI
    });
    assert!(integral.abs() < 1e-8 * scale.max(1.0));
}

#[test]
fn chemical_potential_for_default_chain() {
    let spectrum = chain(100);
    let r = ReservoirParams::new(1e-3, 0.1, -3.0, 1.0);
    let beta0 = 12.0 / 9.25;
    let mu = solve_chemical_potential(&spectrum, 50.0, beta0).unwrap();
    assert!(mu < spectrum.omega_min());
    let sum: f64 = spectrum.omega.iter().map(|w| 1.0 / (beta0 * (w - mu)).exp_m1()).sum();
    assert!((sum - 50.0).abs() < 5e-9);
    let sol = deformed_distribution(&spectrum, 50.0, &r).unwrap();
    assert!((sol.beta0 - beta0).abs() < 1e-15);
    assert!((sol.n.iter().sum::<f64>() - 50.0).abs() < 1e-9 * 50.0);
}

fn max_relative_deformation(delta: f64, ratio: f64) -> f64 {
    let r = ReservoirParams::new(1e-3, 0.1, delta, ratio * delta.abs());
    let sol = deformed_distribution(&chain(100), 50.0, &r).unwrap();
    sol.n.iter().zip(&sol.n_be).map(|(n, b)| ((n - b) / b).abs()).fold(0.0, f64::max)
}

#[test]
fn deformation_shrinks_with_detuning() {
    let ladder: Vec<f64> = (1..=6).map(|i| max_relative_deformation(-(2f64.powi(i)), 1.0)).collect();
    assert!(ladder.windows(2).all(|w| w[1] < w[0]), "{ladder:?}");
    assert!(ladder[5] < 0.01 * ladder[0]);
}

#[test]
fn local_inverse_temperature_of_weak_deformation() {
    let (delta, kappa) = (-20.0, 20.0);
    assert!(max_relative_deformation(delta, kappa / delta.abs()) < 0.1);
    let spectrum = chain(100);
    let r = ReservoirParams::new(1e-3, 0.1, delta, kappa);
    let sol = deformed_distribution(&spectrum, 50.0, &r).unwrap();
    for (k, &w) in spectrum.omega.iter().enumerate() {
        let local = (1.0 / sol.n[k]).ln_1p() / (w - sol.mu);
        let expected = energy_dependent_beta(w, &r, 1.0).unwrap();
        assert!(((local - expected) / expected).abs() < 0.05, "mode {k}: {local} vs {expected}");
    }
}

#[test]
fn steady_state_solves_continuum_balance() {
    let ev = evaluate(&RunConfig::default()).unwrap();
    let quad = GaussLegendre::new(DEFAULT_BAND_NODES);
    let n = &ev.steady.occupations.n;
    let steady = continuum_steady_residual(n, &ev.model.spectrum, &ev.model.reservoir, &quad).unwrap();
    let uniform = continuum_steady_residual(&[0.5; 100], &ev.model.spectrum, &ev.model.reservoir, &quad).unwrap();
    assert!(steady * 100.0 <= uniform, "{steady} vs {uniform}");

    let flat = ReservoirParams::new(1e-3, 0.1, 0.0, 1.0);
    assert!(continuum_steady_residual(&[0.5; 100], &ev.model.spectrum, &flat, &quad).unwrap() < 1e-15);
    assert!(continuum_steady_residual(&[0.5; 4], &chain(4), &flat, &quad).is_err());
}

#[test]
fn fitted_temperature_sign_follows_detuning() {
    let mut cfg = RunConfig::default();
    cfg.lattice.sites = 40;
    cfg.particles = 20.0;
    for &delta in &[-4.0, -2.0, 2.0, 4.0] {
        for &kappa in &[0.5, 1.0, 2.0] {
            cfg.reservoir.delta_over_j = delta;
            cfg.reservoir.kappa_over_j = kappa;
            let ev = evaluate(&cfg).unwrap();
            let fit = fit_inverse_temperature(&ev.steady.occupations.n, &ev.model.spectrum.omega).unwrap();
            assert_eq!(fit.beta.signum(), -delta.signum(), "delta {delta}, kappa {kappa}");
        }
    }
}
