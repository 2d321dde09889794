//! Orchestration and file output for single runs, snapshot series, parameter
//! sweeps and spectrum dumps.
//!
//! CSV floats are written with 17 significant digits, so every value read
//! back is bit-identical to the one computed.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::ComparisonReport;
use crate::config::{Metric, Parameter, RunConfig, SweepSpec};
use crate::error::{Error, Result};
use crate::kinetics::{build_rate_context, evolve, find_steady_state, Occupations, RateContext, SteadyState};
use crate::lattice::{build_modes, ModeSpectrum};
use crate::perturbation::{deformed_distribution, energy_dependent_beta, Order, PerturbativeSolution};
use crate::reservoir::{
    effective_beta_exact, effective_beta_expansion, noise_spectrum, ReservoirParams,
};

pub const STEADY_STATE_CSV: &str = "steady_state.csv";
pub const PERTURBATIVE_CSV: &str = "perturbative.csv";
pub const REPORT_JSON: &str = "report.json";
pub const SNAPSHOTS_CSV: &str = "snapshots.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SPECTRUM_CSV: &str = "spectrum.csv";

/// Label for the sign convention of `delta_n` in reports.
pub const DELTA_N_CONVENTION: &str = "n_GS - n_high";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Lattice, reservoir and rates for one configuration.
pub struct Model {
    pub spectrum: ModeSpectrum,
    pub reservoir: ReservoirParams,
    pub rates: RateContext,
}

impl Model {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let spectrum = build_modes(&cfg.lattice_params())?;
        let reservoir = cfg.reservoir.params();
        reservoir.validate()?;
        let rates = build_rate_context(&spectrum, &reservoir, cfg.gamma_mode);
        Ok(Self { spectrum, reservoir, rates })
    }

    pub fn initial_state(&self, total: f64) -> Result<Occupations> {
        Occupations::uniform(self.spectrum.len(), total)
    }
}

/// Perturbative prediction, falling back to uniform occupations at `Delta = 0`.
pub fn perturbative_prediction(
    spectrum: &ModeSpectrum,
    total: f64,
    reservoir: &ReservoirParams,
) -> Result<PerturbativeSolution> {
    if reservoir.detuning == 0.0 {
        return Ok(PerturbativeSolution::infinite_temperature(spectrum, total));
    }
    deformed_distribution(spectrum, total, reservoir)
}

fn beta_profile(spectrum: &ModeSpectrum, reservoir: &ReservoirParams) -> Result<Vec<f64>> {
    if reservoir.detuning == 0.0 {
        return Ok(vec![0.0; spectrum.len()]);
    }
    spectrum
        .omega
        .iter()
        .map(|&w| energy_dependent_beta(w, reservoir, spectrum.hopping))
        .collect()
}

/// Everything computed for one parameter point.
pub struct Evaluation {
    pub model: Model,
    pub total: f64,
    pub steady: SteadyState,
    pub prediction: PerturbativeSolution,
    pub beta_of_omega: Vec<f64>,
    pub comparison: ComparisonReport,
}

pub fn evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let model = Model::new(cfg)?;
    let total = cfg.particles;
    let steady = find_steady_state(&model.initial_state(total)?, &model.rates, &cfg.steady_state_options())?;
    let prediction = perturbative_prediction(&model.spectrum, total, &model.reservoir)?;
    let beta_of_omega = beta_profile(&model.spectrum, &model.reservoir)?;
    let comparison = ComparisonReport::new(&steady.occupations.n, &model.spectrum.omega, &prediction)?;
    Ok(Evaluation { model, total, steady, prediction, beta_of_omega, comparison })
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyStateSummary {
    pub converged: bool,
    pub residual: f64,
    pub marched_residual: f64,
    pub accepted_steps: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbativeSummary {
    pub beta0: f64,
    pub mu: Option<f64>,
    /// Constant multiplying the bracket directly.
    #[serde(rename = "C")]
    pub c: f64,
    /// `C e^{beta0 mu}`, the `e^{-beta0 mu} c` convention.
    pub c_main_text: Option<f64>,
    /// `C e^{-beta0 mu}`, the `e^{beta0 mu} c2` convention.
    pub c_supplement: Option<f64>,
    pub order: &'static str,
    pub outside_perturbative_regime: bool,
    pub non_positive_modes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: RunConfig,
    #[serde(rename = "L")]
    pub sites: usize,
    #[serde(rename = "N")]
    pub particles: f64,
    #[serde(rename = "N_total")]
    pub n_total: f64,
    #[serde(rename = "N_drift")]
    pub n_drift: f64,
    pub steady_state: SteadyStateSummary,
    pub perturbative: PerturbativeSummary,
    pub comparison: ComparisonReport,
    pub delta_n_convention: &'static str,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl Report {
    pub fn new(cfg: &RunConfig, ev: &Evaluation) -> Self {
        let occ = &ev.steady.occupations;
        let p = &ev.prediction;
        let defined = p.order != Order::InfiniteTemperature;
        Self {
            config: cfg.clone(),
            sites: ev.model.spectrum.len(),
            particles: ev.total,
            n_total: occ.sum(),
            n_drift: occ.sum() - ev.total,
            steady_state: SteadyStateSummary {
                converged: ev.steady.converged,
                residual: ev.steady.residual,
                marched_residual: ev.steady.marched_residual,
                accepted_steps: ev.steady.steps,
                tau: occ.tau,
            },
            perturbative: PerturbativeSummary {
                beta0: p.beta0,
                mu: finite(p.mu),
                c: p.c,
                c_main_text: defined.then(|| p.c_main_text()).and_then(finite),
                c_supplement: defined.then(|| p.c_supplement()).and_then(finite),
                order: match p.order {
                    Order::Leading => "leading",
                    Order::WithDeformation => "deformed",
                    Order::InfiniteTemperature => "infinite_temperature",
                },
                outside_perturbative_regime: p.outside_perturbative_regime,
                non_positive_modes: p.non_positive_modes(),
            },
            comparison: ev.comparison.clone(),
            delta_n_convention: DELTA_N_CONVENTION,
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T, pretty: bool) -> Result<()> {
    let mut text = if pretty { serde_json::to_string_pretty(value)? } else { serde_json::to_string(value)? };
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_steady_state_csv(path: &Path, spectrum: &ModeSpectrum, n: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mode_index", "k", "omega_over_J", "n"])?;
    for (i, ((k, w_k), n_k)) in spectrum.k.iter().zip(&spectrum.omega).zip(n).enumerate() {
        w.write_record([i.to_string(), fmt_f64(*k), fmt_f64(*w_k), fmt_f64(*n_k)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_perturbative_csv(
    path: &Path,
    spectrum: &ModeSpectrum,
    prediction: &PerturbativeSolution,
    beta_of_omega: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mode_index", "omega_over_J", "n_be", "n_deformed", "beta_of_omega"])?;
    for (i, &beta) in beta_of_omega.iter().enumerate().take(spectrum.len()) {
        w.write_record([
            i.to_string(),
            fmt_f64(spectrum.omega[i]),
            fmt_f64(prediction.n_be[i]),
            fmt_f64(prediction.n[i]),
            fmt_f64(beta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Steady state, perturbative prediction and comparison report for `cfg`.
pub fn run_single(cfg: &RunConfig, out: &Path) -> Result<Report> {
    let ev = evaluate(cfg)?;
    ensure_dir(out)?;
    write_steady_state_csv(&out.join(STEADY_STATE_CSV), &ev.model.spectrum, &ev.steady.occupations.n)?;
    write_perturbative_csv(&out.join(PERTURBATIVE_CSV), &ev.model.spectrum, &ev.prediction, &ev.beta_of_omega)?;
    let report = Report::new(cfg, &ev);
    write_json(&out.join(REPORT_JSON), &report, cfg.outputs.pretty_json)?;
    Ok(report)
}

pub fn snapshot_file_name(tau: f64) -> String {
    format!("snapshot_tau{tau}.csv")
}

const SNAPSHOT_HEADER: [&str; 4] = ["tau", "mode_index", "omega_over_J", "n"];

fn write_snapshot_rows<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    spectrum: &ModeSpectrum,
    snap: &Occupations,
) -> Result<()> {
    for (i, (w_k, n_k)) in spectrum.omega.iter().zip(&snap.n).enumerate() {
        w.write_record([fmt_f64(snap.tau), i.to_string(), fmt_f64(*w_k), fmt_f64(*n_k)])?;
    }
    Ok(())
}

/// Occupations at each of `taus`, starting from uniform `N/L` at `tau = 0`.
pub fn compute_snapshots(cfg: &RunConfig, taus: &[f64]) -> Result<(Model, Vec<Occupations>)> {
    if taus.is_empty() {
        return Err(Error::Config("evolution.snapshot_taus must not be empty".into()));
    }
    let mut sorted = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("evolution.snapshot_taus contains duplicates".into()));
    }
    let model = Model::new(cfg)?;
    let n0 = model.initial_state(cfg.particles)?;
    let tau_end = *sorted.last().unwrap();
    let snapshots = if tau_end == 0.0 {
        vec![n0]
    } else {
        evolve(&n0, &model.rates, tau_end, &sorted, &cfg.tolerances())?.snapshots
    };
    Ok((model, snapshots))
}

/// Writes one CSV per requested `tau` and, if configured, a combined file.
/// Returns the paths written.
pub fn run_snapshots(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (model, snapshots) = compute_snapshots(cfg, &cfg.evolution.snapshot_taus)?;
    ensure_dir(out)?;
    let mut written = Vec::new();
    for snap in &snapshots {
        let path = out.join(snapshot_file_name(snap.tau));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(SNAPSHOT_HEADER)?;
        write_snapshot_rows(&mut w, &model.spectrum, snap)?;
        w.flush()?;
        written.push(path);
    }
    if cfg.outputs.combined_snapshots {
        let path = out.join(SNAPSHOTS_CSV);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(SNAPSHOT_HEADER)?;
        for snap in &snapshots {
            write_snapshot_rows(&mut w, &model.spectrum, snap)?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Metric values for one sweep cell, or the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axes: Vec<(Parameter, f64)>,
    pub delta_over_j: f64,
    pub kappa_over_j: f64,
    pub outcome: std::result::Result<ComparisonReport, String>,
}

impl SweepRow {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        let r = self.outcome.as_ref().ok()?;
        match m {
            Metric::Kl => Some(r.kl_vs_perturbative),
            Metric::KlBe => Some(r.kl_vs_be),
            Metric::R => Some(r.ratio_r),
            Metric::DeltaN => Some(r.delta_n),
            Metric::FittedBeta => r.fitted_beta,
        }
    }
}

pub fn evaluate_cell(base: &RunConfig, axes: &[(Parameter, f64)]) -> SweepRow {
    let mut cfg = base.clone();
    let applied = axes.iter().try_for_each(|&(p, v)| p.set(&mut cfg, v));
    let outcome = applied
        .and_then(|_| evaluate(&cfg))
        .map(|ev| ev.comparison)
        .map_err(|e| e.to_string());
    SweepRow {
        axes: axes.to_vec(),
        delta_over_j: cfg.reservoir.delta_over_j,
        kappa_over_j: cfg.reservoir.kappa_over_j,
        outcome,
    }
}

/// Evaluates every cell of the grid; the rows come back in grid order
/// whatever the thread count.
pub fn compute_sweep(base: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    base.validate()?;
    Ok(spec.cells().par_iter().map(|axes| evaluate_cell(base, axes)).collect())
}

/// Columns for axes other than `Delta` and `kappa`, which always come first.
fn extra_axes(spec: &SweepSpec) -> Vec<Parameter> {
    std::iter::once(spec.axis1.name)
        .chain(spec.axis2.as_ref().map(|a| a.name))
        .filter(|p| !matches!(p, Parameter::Delta | Parameter::Kappa))
        .collect()
}

pub fn write_sweep_csv(path: &Path, spec: &SweepSpec, rows: &[SweepRow]) -> Result<()> {
    let extra = extra_axes(spec);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = vec!["delta_over_J", "kappa_over_J"];
    header.extend(extra.iter().map(|p| p.column()));
    header.extend(spec.metrics.iter().map(|m| m.column()));
    header.push("error");
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![fmt_f64(row.delta_over_j), fmt_f64(row.kappa_over_j)];
        for p in &extra {
            let v = row.axes.iter().find(|(q, _)| q == p).map(|&(_, v)| v).unwrap_or(f64::NAN);
            rec.push(fmt_f64(v));
        }
        for &m in &spec.metrics {
            rec.push(row.metric(m).map(fmt_f64).unwrap_or_default());
        }
        rec.push(row.outcome.as_ref().err().cloned().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_sweep(base: &RunConfig, spec: &SweepSpec, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = compute_sweep(base, spec)?;
    ensure_dir(out)?;
    write_sweep_csv(&out.join(SWEEP_CSV), spec, &rows)?;
    Ok(rows)
}

/// `S(omega)` and the effective inverse temperature on `points` frequencies
/// spanning `[-omega_max, omega_max]`.
pub fn write_spectrum_csv(path: &Path, reservoir: &ReservoirParams, omega_max: f64, points: usize) -> Result<()> {
    if points < 2 || !(omega_max > 0.0) {
        return Err(Error::InvalidParameter("spectrum grid needs >= 2 points and a positive range".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega_over_J", "S", "beta_eff", "beta_eff_quadratic"])?;
    for i in 0..points {
        let x = -omega_max + 2.0 * omega_max * i as f64 / (points - 1) as f64;
        let quad = effective_beta_expansion(x, reservoir).map(fmt_f64).unwrap_or_default();
        w.write_record([
            fmt_f64(x),
            fmt_f64(noise_spectrum(x, reservoir)),
            fmt_f64(effective_beta_exact(x, reservoir)),
            quad,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.9999999999999998, 1e-300, 12345.678901234567, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn snapshot_names() {
        assert_eq!(snapshot_file_name(10.0), "snapshot_tau10.csv");
        assert_eq!(snapshot_file_name(0.5), "snapshot_tau0.5.csv");
        assert_eq!(snapshot_file_name(0.0), "snapshot_tau0.csv");
    }

    #[test]
    fn infinite_temperature_fallback() {
        let spectrum = build_modes(&crate::lattice::LatticeParams::new(10, crate::lattice::Boundary::Open)).unwrap();
        let r = ReservoirParams::new(1e-3, 0.1, 0.0, 1.0);
        let p = perturbative_prediction(&spectrum, 5.0, &r).unwrap();
        assert_eq!(p.order, Order::InfiniteTemperature);
        assert_eq!(beta_profile(&spectrum, &r).unwrap(), vec![0.0; 10]);
    }
}
