//! Built-in scenarios and concurrent batch execution.
//!
//! With the `parallel` feature, independent runs go through rayon; without
//! it they run in order on the calling thread. Results always come back in
//! input order.

use crate::composite::{build_composite, Kappa};
use crate::control::{ControllerVariant, Gains, SymbioticParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::plant::{examples, DomainGrid, ReferenceSignal};
use crate::sim::{metrics, simulate, Metrics, SimConfig, Trajectory};

pub const PARAMETRIC_PRESET: &str = "parametric-fig2";
pub const NONPARAMETRIC_PRESET: &str = "nonparametric-fig3";
pub const NOMINAL_LABEL: &str = "nominal";

/// One compared controller of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub variant: ControllerVariant,
}

impl Comparison {
    pub fn new(label: impl Into<String>, variant: ControllerVariant) -> Self {
        Comparison { label: label.into(), variant }
    }
}

/// A shared setup plus the controllers compared on it. Every run shares
/// plant, gains, reference, `dt` and `t_final`; only the variant changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: SimConfig,
    pub comparisons: Vec<Comparison>,
}

/// The composite function of the examples: `a = 1`, `b = 2`, `ρ = 0.1`.
pub fn example_kappa() -> Kappa {
    Kappa::Composite(build_composite(1.0, 2.0, 0.1).expect("example composite is valid"))
}

fn example_config(plant: crate::plant::PlantSpec, basis: crate::plant::RegressorBasis) -> SimConfig {
    SimConfig {
        dt: 1e-3,
        t_final: 100.0,
        record_stride: 10,
        variant: ControllerVariant::NominalOnly,
        plant,
        gains: Gains::new(examples::k1(), examples::k2()),
        r_weight: Matrix::identity(2),
        basis,
        reference: ReferenceSignal::default(),
        domain: DomainGrid::default(),
    }
}

impl Scenario {
    /// Double integrator with `Λ = 0.9` and a polynomial uncertainty the
    /// basis represents exactly.
    pub fn parametric() -> Self {
        let kappa = example_kappa();
        Scenario {
            name: PARAMETRIC_PRESET.into(),
            config: example_config(examples::parametric_plant(), examples::parametric_basis()),
            comparisons: vec![
                Comparison::new("standard-adaptive", ControllerVariant::StandardAdaptive { beta: 1.0 }),
                Comparison::new(
                    "symbiotic-identity-a1",
                    ControllerVariant::SymbioticParametric(SymbioticParams::parametric(
                        1.0,
                        1.0,
                        1.0,
                        1.0,
                        Kappa::Identity,
                    )),
                ),
                Comparison::new(
                    "symbiotic-a1",
                    ControllerVariant::SymbioticParametric(SymbioticParams::parametric(
                        1.0,
                        1.0,
                        1.0,
                        1.0,
                        kappa.clone(),
                    )),
                ),
                Comparison::new(
                    "symbiotic-a3",
                    ControllerVariant::SymbioticParametric(SymbioticParams::parametric(3.0, 1.0, 1.0, 1.0, kappa)),
                ),
            ],
        }
    }

    /// Double integrator with `Λ = 0.8` and an uncertainty outside the span
    /// of the radial basis.
    pub fn nonparametric() -> Self {
        Scenario {
            name: NONPARAMETRIC_PRESET.into(),
            config: example_config(examples::nonparametric_plant(), examples::rbf_basis()),
            comparisons: vec![
                Comparison::new("leakage-b2-1", ControllerVariant::StandardAdaptiveLeakage { beta1: 1.0, beta2: 1.0 }),
                Comparison::new("leakage-b2-2", ControllerVariant::StandardAdaptiveLeakage { beta1: 1.0, beta2: 2.0 }),
                Comparison::new(
                    "symbiotic-a3",
                    ControllerVariant::SymbioticNonparametric(SymbioticParams::nonparametric(
                        3.0,
                        1.0,
                        1.0,
                        2.0,
                        1.0,
                        2.0,
                        example_kappa(),
                    )),
                ),
                Comparison::new("fixed-gain-a9", ControllerVariant::FixedGainOnly { alpha: 9.0 }),
            ],
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            PARAMETRIC_PRESET => Some(Self::parametric()),
            NONPARAMETRIC_PRESET => Some(Self::nonparametric()),
            _ => None,
        }
    }

    pub fn preset_names() -> [&'static str; 2] {
        [PARAMETRIC_PRESET, NONPARAMETRIC_PRESET]
    }

    /// Configuration of the reference run: `u = u_n` on the plant with
    /// `Λ = I` and `δ = 0`, so its state is the reference model state.
    pub fn nominal_config(&self) -> SimConfig {
        SimConfig {
            variant: ControllerVariant::NominalOnly,
            plant: self.config.plant.without_uncertainty(),
            ..self.config.clone()
        }
    }

    /// Labelled configurations, nominal first, then comparisons in order.
    pub fn runs(&self) -> Vec<(String, SimConfig)> {
        std::iter::once((NOMINAL_LABEL.to_string(), self.nominal_config()))
            .chain(self.comparisons.iter().map(|c| (c.label.clone(), self.config.with_variant(c.variant.clone()))))
            .collect()
    }

    pub fn comparison(&self, label: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.label == label)
    }

    /// Shared setup with `variant`.
    pub fn config_for(&self, variant: ControllerVariant) -> SimConfig {
        self.config.with_variant(variant)
    }

    pub fn validate(&self) -> Result<()> {
        for (label, cfg) in self.runs() {
            cfg.validate().map_err(|e| Error::invalid(format!("run `{label}`: {e}")))?;
        }
        Ok(())
    }
}

/// Applies `f` to every item, concurrently when the `parallel` feature is on.
pub fn map_runs<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Same as [`map_runs`] but always on the calling thread.
pub fn map_runs_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

pub fn simulate_all(configs: &[SimConfig]) -> Vec<Result<Trajectory>> {
    map_runs(configs, simulate)
}

pub fn simulate_all_sequential(configs: &[SimConfig]) -> Vec<Result<Trajectory>> {
    map_runs_sequential(configs, simulate)
}

/// One row of an `α` sweep; a diverged run keeps its error.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub outcome: Result<Metrics>,
}

/// Runs `base` at each `α` and measures it against `nominal`. Rows come
/// back sorted by `α`.
pub fn sweep_alpha(base: &SimConfig, nominal: &SimConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.len() < 2 {
        return Err(Error::invalid("an alpha sweep needs at least two values"));
    }
    let mut sorted = alphas.to_vec();
    if sorted.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::invalid("alphas must be positive"));
    }
    sorted.sort_by(f64::total_cmp);
    let configs = sorted
        .iter()
        .map(|&alpha| {
            base.variant
                .with_alpha(alpha)
                .map(|v| base.with_variant(v))
                .ok_or_else(|| Error::invalid(format!("variant {} has no fixed-gain parameter", base.variant.name())))
        })
        .collect::<Result<Vec<_>>>()?;
    for cfg in &configs {
        cfg.validate()?;
    }
    let reference = simulate(nominal)?;
    let outcomes = map_runs(&configs, |cfg| simulate(cfg).and_then(|tr| metrics(&tr, &reference)));
    Ok(sorted.into_iter().zip(outcomes).map(|(alpha, outcome)| SweepRow { alpha, outcome }).collect())
}
