//! JSON run configuration and sweep specification.
//!
//! Every field is optional; omitted values fall back to the reference set
//! `L = 100`, `N = 50`, `chi = J/1000`, `Omega_0 = J/10`, `Delta = -3J`,
//! `kappa = J`, open boundaries. All energies are in units of `J`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{SteadyStateOptions, Tolerances};
use crate::lattice::{Boundary, GammaMode, LatticeParams};
use crate::reservoir::ReservoirParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(rename = "L")]
    pub sites: usize,
    pub boundary: Boundary,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { sites: 100, boundary: Boundary::Open }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    #[serde(rename = "chi_over_J")]
    pub chi_over_j: f64,
    #[serde(rename = "omega0_drive_over_J")]
    pub drive_over_j: f64,
    #[serde(rename = "delta_over_J")]
    pub delta_over_j: f64,
    #[serde(rename = "kappa_over_J")]
    pub kappa_over_j: f64,
}

impl ReservoirConfig {
    pub fn params(&self) -> ReservoirParams {
        ReservoirParams::new(self.chi_over_j, self.drive_over_j, self.delta_over_j, self.kappa_over_j)
    }
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self { chi_over_j: 1e-3, drive_over_j: 0.1, delta_over_j: -3.0, kappa_over_j: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub tau_max: f64,
    pub rel_tol: f64,
    /// Per-mode absolute tolerance in units of `N`.
    pub abs_tol: f64,
    pub residual_tol: f64,
    pub snapshot_taus: Vec<f64>,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        let opts = SteadyStateOptions::default();
        Self {
            tau_max: opts.tau_max,
            rel_tol: opts.tolerances.rel_tol,
            abs_tol: opts.tolerances.abs_tol,
            residual_tol: opts.residual_tol,
            snapshot_taus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Also write all snapshots to one long-format file.
    pub combined_snapshots: bool,
    pub pretty_json: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("output"), combined_snapshots: true, pretty_json: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    #[serde(rename = "N")]
    pub particles: f64,
    pub reservoir: ReservoirConfig,
    pub gamma_mode: GammaMode,
    pub evolution: EvolutionConfig,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lattice: LatticeConfig::default(),
            particles: 50.0,
            reservoir: ReservoirConfig::default(),
            gamma_mode: GammaMode::default(),
            evolution: EvolutionConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn lattice_params(&self) -> LatticeParams {
        LatticeParams::new(self.lattice.sites, self.lattice.boundary)
    }

    pub fn steady_state_options(&self) -> SteadyStateOptions {
        SteadyStateOptions {
            residual_tol: self.evolution.residual_tol,
            tau_max: self.evolution.tau_max,
            tolerances: self.tolerances(),
            polish: true,
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel_tol: self.evolution.rel_tol,
            abs_tol: self.evolution.abs_tol,
            ..Tolerances::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.lattice.sites < 1 {
            return bad(format!("lattice.L must be >= 1, got {}", self.lattice.sites));
        }
        if !(self.particles > 0.0) || !self.particles.is_finite() {
            return bad(format!("N must be finite and > 0, got {}", self.particles));
        }
        let r = &self.reservoir;
        for (name, v) in [
            ("reservoir.chi_over_J", r.chi_over_j),
            ("reservoir.omega0_drive_over_J", r.drive_over_j),
            ("reservoir.delta_over_J", r.delta_over_j),
            ("reservoir.kappa_over_J", r.kappa_over_j),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(r.kappa_over_j > 0.0) {
            return bad(format!("reservoir.kappa_over_J must be > 0, got {}", r.kappa_over_j));
        }
        if r.chi_over_j < 0.0 || r.drive_over_j < 0.0 {
            return bad("reservoir.chi_over_J and omega0_drive_over_J must be >= 0".into());
        }
        let e = &self.evolution;
        for (name, v) in [
            ("evolution.tau_max", e.tau_max),
            ("evolution.rel_tol", e.rel_tol),
            ("evolution.abs_tol", e.abs_tol),
            ("evolution.residual_tol", e.residual_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if let Some(t) = e.snapshot_taus.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return bad(format!("evolution.snapshot_taus entries must be finite and >= 0, got {t}"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            Error::Config(inner.to_string())
        } else {
            Error::Config(format!("{path}: {inner}"))
        }
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = parse_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Scalar `RunConfig` fields a sweep axis may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    #[serde(rename = "delta_over_J")]
    Delta,
    #[serde(rename = "kappa_over_J")]
    Kappa,
    #[serde(rename = "chi_over_J")]
    Chi,
    #[serde(rename = "omega0_drive_over_J")]
    Drive,
    N,
    L,
}

impl Parameter {
    pub fn column(self) -> &'static str {
        match self {
            Parameter::Delta => "delta_over_J",
            Parameter::Kappa => "kappa_over_J",
            Parameter::Chi => "chi_over_J",
            Parameter::Drive => "omega0_drive_over_J",
            Parameter::N => "N",
            Parameter::L => "L",
        }
    }

    pub fn get(self, cfg: &RunConfig) -> f64 {
        match self {
            Parameter::Delta => cfg.reservoir.delta_over_j,
            Parameter::Kappa => cfg.reservoir.kappa_over_j,
            Parameter::Chi => cfg.reservoir.chi_over_j,
            Parameter::Drive => cfg.reservoir.drive_over_j,
            Parameter::N => cfg.particles,
            Parameter::L => cfg.lattice.sites as f64,
        }
    }

    pub fn set(self, cfg: &mut RunConfig, value: f64) -> Result<()> {
        match self {
            Parameter::Delta => cfg.reservoir.delta_over_j = value,
            Parameter::Kappa => cfg.reservoir.kappa_over_j = value,
            Parameter::Chi => cfg.reservoir.chi_over_j = value,
            Parameter::Drive => cfg.reservoir.drive_over_j = value,
            Parameter::N => cfg.particles = value,
            Parameter::L => {
                if !(value >= 1.0) || value.fract() != 0.0 || value > u32::MAX as f64 {
                    return Err(Error::Config(format!("L must be a positive integer, got {value}")));
                }
                cfg.lattice.sites = value as usize;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "kl")]
    Kl,
    #[serde(rename = "kl_be")]
    KlBe,
    R,
    #[serde(rename = "delta_n")]
    DeltaN,
    #[serde(rename = "fitted_beta")]
    FittedBeta,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Kl, Metric::KlBe, Metric::R, Metric::DeltaN, Metric::FittedBeta];

    pub fn column(self) -> &'static str {
        match self {
            Metric::Kl => "kl",
            Metric::KlBe => "kl_be",
            Metric::R => "R",
            Metric::DeltaN => "delta_n",
            Metric::FittedBeta => "fitted_beta",
        }
    }
}

/// Values along one axis: an explicit list or `num` evenly spaced points
/// from `start` to `stop` inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisValues {
    List { values: Vec<f64> },
    Range { start: f64, stop: f64, num: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: Parameter,
    #[serde(flatten)]
    pub values: AxisValues,
}

impl Axis {
    pub fn list(name: Parameter, values: Vec<f64>) -> Self {
        Self { name, values: AxisValues::List { values } }
    }

    pub fn range(name: Parameter, start: f64, stop: f64, num: usize) -> Self {
        Self { name, values: AxisValues::Range { start, stop, num } }
    }

    pub fn points(&self) -> Vec<f64> {
        match &self.values {
            AxisValues::List { values } => values.clone(),
            AxisValues::Range { start, stop, num } => match num {
                0 => Vec::new(),
                1 => vec![*start],
                _ => (0..*num)
                    .map(|i| start + (stop - start) * i as f64 / (*num - 1) as f64)
                    .collect(),
            },
        }
    }
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis1: Axis,
    #[serde(default)]
    pub axis2: Option<Axis>,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let axes: Vec<&Axis> = std::iter::once(&self.axis1).chain(self.axis2.as_ref()).collect();
        for a in &axes {
            let pts = a.points();
            if pts.is_empty() {
                return Err(Error::Config(format!("sweep axis {} has no values", a.name.column())));
            }
            if pts.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("sweep axis {} has non-finite values", a.name.column())));
            }
        }
        if let [a, b] = axes[..] {
            if a.name == b.name {
                return Err(Error::Config("sweep axes must vary different parameters".into()));
            }
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("sweep needs at least one metric".into()));
        }
        Ok(())
    }

    /// Grid cells in row-major order (axis1 outer).
    pub fn cells(&self) -> Vec<Vec<(Parameter, f64)>> {
        let first = self.axis1.points();
        match &self.axis2 {
            None => first.into_iter().map(|v| vec![(self.axis1.name, v)]).collect(),
            Some(ax2) => {
                let second = ax2.points();
                first
                    .iter()
                    .flat_map(|&a| second.iter().map(move |&b| vec![(self.axis1.name, a), (ax2.name, b)]))
                    .collect()
            }
        }
    }
}

pub fn parse_sweep(text: &str) -> Result<SweepSpec> {
    let spec: SweepSpec = parse_json(text)?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_document_gives_reference_set() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c.lattice.sites, 100);
        assert_eq!(c.lattice.boundary, Boundary::Open);
        assert_eq!(c.particles, 50.0);
        assert_eq!(c.reservoir, ReservoirConfig { chi_over_j: 1e-3, drive_over_j: 0.1, delta_over_j: -3.0, kappa_over_j: 1.0 });
        assert_eq!(c.gamma_mode, GammaMode::SiteResolved);
        assert_eq!(c.evolution.rel_tol, 1e-8);
        assert_eq!(c.evolution.residual_tol, 1e-10);
    }

    #[test]
    fn field_names() {
        let c = parse_config(
            r#"{"lattice":{"L":12,"boundary":"periodic"},"N":3.5,
                "reservoir":{"chi_over_J":0.01,"omega0_drive_over_J":0.2,"delta_over_J":2,"kappa_over_J":0.5},
                "gamma_mode":"uniform","evolution":{"snapshot_taus":[0,10]}}"#,
        )
        .unwrap();
        assert_eq!(c.lattice.sites, 12);
        assert_eq!(c.lattice.boundary, Boundary::Periodic);
        assert_eq!(c.particles, 3.5);
        assert_eq!(c.reservoir.delta_over_j, 2.0);
        assert_eq!(c.gamma_mode, GammaMode::Uniform);
        assert_eq!(c.evolution.snapshot_taus, vec![0.0, 10.0]);
    }

    #[test]
    fn errors_name_the_problem() {
        let e = parse_config(r#"{"lattice":{"L":0}}"#).unwrap_err().to_string();
        assert!(e.contains("lattice.L"), "{e}");
        let e = parse_config(r#"{"lattice":{"sites":3}}"#).unwrap_err().to_string();
        assert!(e.contains("sites"), "{e}");
        let e = parse_config(r#"{"reservoir":{"kappa_over_J":"wide"}}"#).unwrap_err().to_string();
        assert!(e.contains("reservoir.kappa_over_J"), "{e}");
        let e = parse_config(r#"{"reservoir":{"kappa_over_J":0}}"#).unwrap_err().to_string();
        assert!(e.contains("kappa_over_J must be > 0"), "{e}");
        assert!(parse_config(r#"{"N":-1}"#).is_err());
        assert!(parse_config(r#"{"evolution":{"snapshot_taus":[-1]}}"#).is_err());
        assert!(parse_config("[").is_err());
    }

    #[test]
    fn sweep_parsing() {
        let s = parse_sweep(
            r#"{"axis1":{"name":"delta_over_J","start":-6,"stop":-1,"num":12},
                "axis2":{"name":"kappa_over_J","values":[0.5,1]},"metrics":["kl","R"]}"#,
        )
        .unwrap();
        let d = s.axis1.points();
        assert_eq!(d.len(), 12);
        assert_eq!(d[0], -6.0);
        assert_eq!(d[11], -1.0);
        assert_eq!(s.cells().len(), 24);
        assert_eq!(s.cells()[1], vec![(Parameter::Delta, -6.0), (Parameter::Kappa, 1.0)]);
        assert_eq!(s.metrics, vec![Metric::Kl, Metric::R]);

        let s = parse_sweep(r#"{"axis1":{"name":"N","values":[5,50]}}"#).unwrap();
        assert_eq!(s.metrics, Metric::ALL.to_vec());
        assert!(parse_sweep(r#"{"axis1":{"name":"N","values":[]}}"#).is_err());
        assert!(parse_sweep(r#"{"axis1":{"name":"hopping","values":[1]}}"#).is_err());
        assert!(parse_sweep(r#"{"axis1":{"name":"N","values":[1]},"axis2":{"name":"N","values":[2]}}"#).is_err());
    }

    #[test]
    fn parameter_setters() {
        let mut c = RunConfig::default();
        Parameter::L.set(&mut c, 20.0).unwrap();
        assert_eq!(c.lattice.sites, 20);
        assert!(Parameter::L.set(&mut c, 2.5).is_err());
        Parameter::Kappa.set(&mut c, 3.0).unwrap();
        assert_eq!(Parameter::Kappa.get(&c), 3.0);
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            1usize..500,
            prop_oneof![Just(Boundary::Open), Just(Boundary::Periodic)],
            0.01f64..1e4,
            (0.0f64..1.0, 0.0f64..1.0, -10.0f64..10.0, 0.01f64..10.0),
            prop_oneof![Just(GammaMode::SiteResolved), Just(GammaMode::Uniform)],
            prop::collection::vec(0.0f64..1e6, 0..5),
        )
            .prop_map(|(l, b, n, (chi, drive, d, k), g, taus)| RunConfig {
                lattice: LatticeConfig { sites: l, boundary: b },
                particles: n,
                reservoir: ReservoirConfig { chi_over_j: chi, drive_over_j: drive, delta_over_j: d, kappa_over_j: k },
                gamma_mode: g,
                evolution: EvolutionConfig { snapshot_taus: taus, ..EvolutionConfig::default() },
                outputs: OutputConfig::default(),
            })
    }

    proptest! {
        #[test]
        fn round_trip(cfg in arb_config()) {
            let back = parse_config(&cfg.to_json()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
