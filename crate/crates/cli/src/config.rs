//! Scenario configuration files.
//!
//! TOML with dotted keys. Every key below is optional unless the chosen
//! variant needs it:
//!
//! ```text
//! name                 scenario name (default: file stem)
//! variant, label       primary run: nominal | fixed-gain | standard-adaptive |
//!                      standard-adaptive-leakage | symbiotic-parametric |
//!                      symbiotic-nonparametric
//! sim.dt  sim.t_final  sim.record_stride
//! plant.a  plant.b     nested arrays, row-major       (required)
//! plant.lambda         diagonal of Λ                  (required)
//! plant.x0             default zeros
//! plant.delta          one polynomial string per input, e.g. "0.2 x1 + 0.8 x1*x2"
//! basis.kind           "polynomial" (basis.monomials = ["x1", "x1*x2", ...])
//!                      | "rbf" (basis.centers = [...], basis.width)
//! gains.k1  gains.k2   nested arrays                  (required)
//! lyapunov.r           default identity
//! params.alpha  params.beta  params.beta1  params.beta2  params.beta3
//! params.gamma1  params.gamma2
//! kappa.kind           "identity" | "composite" (kappa.a, kappa.b, kappa.rho)
//! reference.shape      "square" | "step"; reference.amplitude, .period, .tau
//! domain.lower  domain.upper  domain.points
//! compare.<label>.variant   extra runs; compare.<label>.params.* and
//!                           compare.<label>.kappa.* override the shared blocks
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use symctl::batch::{Comparison, Scenario};
use symctl::composite::{build_composite, Kappa};
use symctl::control::{ControllerVariant, Gains, SymbioticParams};
use symctl::linalg::{Matrix, Vector};
use symctl::plant::{
    DomainGrid, PlantSpec, Polynomial, ReferenceShape, ReferenceSignal, RegressorBasis, TrueUncertainty,
};
use symctl::sim::SimConfig;
use toml::Value;

use crate::error::CliError;

type Flat = BTreeMap<String, Value>;

const SHARED_KEYS: &[&str] = &[
    "name",
    "variant",
    "label",
    "sim.dt",
    "sim.t_final",
    "sim.record_stride",
    "plant.a",
    "plant.b",
    "plant.lambda",
    "plant.x0",
    "plant.delta",
    "basis.kind",
    "basis.monomials",
    "basis.centers",
    "basis.width",
    "gains.k1",
    "gains.k2",
    "lyapunov.r",
    "reference.shape",
    "reference.amplitude",
    "reference.period",
    "reference.tau",
    "domain.lower",
    "domain.upper",
    "domain.points",
];

const RUN_KEYS: &[&str] = &[
    "params.alpha",
    "params.beta",
    "params.beta1",
    "params.beta2",
    "params.beta3",
    "params.gamma1",
    "params.gamma2",
    "kappa.kind",
    "kappa.a",
    "kappa.b",
    "kappa.rho",
];

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

fn parse_flat(text: &str) -> Result<Flat, CliError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
        CliError::Parse { line, message: e.message().to_string() }
    })?;
    let mut flat = Flat::new();
    flatten("", &table, &mut flat);
    Ok(flat)
}

fn as_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(invalid(format!("{key} must be a number"))),
    }
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str, CliError> {
    v.as_str().ok_or_else(|| invalid(format!("{key} must be a string")))
}

fn as_array<'a>(key: &str, v: &'a Value) -> Result<&'a [Value], CliError> {
    v.as_array().map(|a| a.as_slice()).ok_or_else(|| invalid(format!("{key} must be an array")))
}

fn numbers(key: &str, v: &Value) -> Result<Vec<f64>, CliError> {
    as_array(key, v)?.iter().map(|x| as_f64(key, x)).collect()
}

fn matrix(key: &str, v: &Value) -> Result<Matrix, CliError> {
    let rows = as_array(key, v)?.iter().map(|r| numbers(key, r)).collect::<Result<Vec<_>, _>>()?;
    Matrix::from_rows(&rows).map_err(|e| invalid(format!("{key}: {e}")))
}

/// Lookup over the shared blocks with per-run overrides on top.
struct Keys<'a> {
    flat: &'a Flat,
    run: Option<&'a Flat>,
}

impl<'a> Keys<'a> {
    fn get(&self, key: &str) -> Option<&'a Value> {
        self.run.and_then(|r| r.get(key)).or_else(|| self.flat.get(key))
    }

    fn require(&self, key: &str, why: &str) -> Result<&'a Value, CliError> {
        self.get(key).ok_or_else(|| invalid(format!("{why} requires `{key}`")))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        self.get(key).map_or(Ok(default), |v| as_f64(key, v))
    }

    fn f64_req(&self, key: &str, why: &str) -> Result<f64, CliError> {
        as_f64(key, self.require(key, why)?)
    }
}

fn parse_kappa(keys: &Keys<'_>, why: &str) -> Result<Kappa, CliError> {
    match as_str("kappa.kind", keys.require("kappa.kind", why)?)? {
        "identity" => Ok(Kappa::Identity),
        "composite" => {
            let a = keys.f64_req("kappa.a", "a composite kappa")?;
            let b = keys.f64_req("kappa.b", "a composite kappa")?;
            let rho = keys.f64_req("kappa.rho", "a composite kappa")?;
            build_composite(a, b, rho).map(Kappa::Composite).map_err(|e| invalid(e.to_string()))
        }
        other => Err(invalid(format!("unknown kappa.kind `{other}` (expected identity or composite)"))),
    }
}

fn parse_variant(name: &str, keys: &Keys<'_>) -> Result<ControllerVariant, CliError> {
    let why = format!("variant {name}");
    let p = |k: &str| keys.f64_req(&format!("params.{k}"), &why);
    let variant = match name {
        "nominal" => ControllerVariant::NominalOnly,
        "fixed-gain" => ControllerVariant::FixedGainOnly { alpha: p("alpha")? },
        "standard-adaptive" => ControllerVariant::StandardAdaptive { beta: p("beta")? },
        "standard-adaptive-leakage" => {
            ControllerVariant::StandardAdaptiveLeakage { beta1: p("beta1")?, beta2: p("beta2")? }
        }
        "symbiotic-parametric" => ControllerVariant::SymbioticParametric(SymbioticParams::parametric(
            p("alpha")?,
            p("beta1")?,
            p("beta2")?,
            p("gamma1")?,
            parse_kappa(keys, &why)?,
        )),
        "symbiotic-nonparametric" => ControllerVariant::SymbioticNonparametric(SymbioticParams::nonparametric(
            p("alpha")?,
            p("beta1")?,
            p("beta2")?,
            p("beta3")?,
            p("gamma1")?,
            p("gamma2")?,
            parse_kappa(keys, &why)?,
        )),
        other => return Err(invalid(format!("unknown variant `{other}`"))),
    };
    variant.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(variant)
}

fn parse_basis(keys: &Keys<'_>, n: usize) -> Result<RegressorBasis, CliError> {
    match as_str("basis.kind", keys.require("basis.kind", "a scenario")?)? {
        "polynomial" => {
            let raw = as_array("basis.monomials", keys.require("basis.monomials", "a polynomial basis")?)?;
            let monomials = raw
                .iter()
                .map(|m| {
                    let text = as_str("basis.monomials", m)?;
                    let poly = Polynomial::parse(text).map_err(|e| invalid(e.to_string()))?;
                    match poly.terms.as_slice() {
                        [term] if term.coef == 1.0 && term.exponents.len() <= n => {
                            let mut e = term.exponents.clone();
                            e.resize(n, 0);
                            Ok(e)
                        }
                        _ => Err(invalid(format!(
                            "basis monomial `{text}` must be a single unit-coefficient product of x1..x{n}"
                        ))),
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(RegressorBasis::PolynomialFeatures { monomials })
        }
        "rbf" => {
            let centers = numbers("basis.centers", keys.require("basis.centers", "an rbf basis")?)?;
            let width = keys.f64_req("basis.width", "an rbf basis")?;
            Ok(RegressorBasis::rbf_grid(n, &centers, width))
        }
        other => Err(invalid(format!("unknown basis.kind `{other}` (expected polynomial or rbf)"))),
    }
}

fn parse_plant(keys: &Keys<'_>) -> Result<PlantSpec, CliError> {
    let a = matrix("plant.a", keys.require("plant.a", "a scenario")?)?;
    let b = matrix("plant.b", keys.require("plant.b", "a scenario")?)?;
    let lambda = numbers("plant.lambda", keys.require("plant.lambda", "a scenario")?)?;
    let x0 = match keys.get("plant.x0") {
        Some(v) => Vector::new(numbers("plant.x0", v)?).map_err(|e| invalid(format!("plant.x0: {e}")))?,
        None => Vector::zeros(a.rows()),
    };
    let delta = match keys.get("plant.delta") {
        Some(v) => TrueUncertainty {
            channels: as_array("plant.delta", v)?
                .iter()
                .map(|p| Polynomial::parse(as_str("plant.delta", p)?).map_err(|e| invalid(e.to_string())))
                .collect::<Result<_, _>>()?,
        },
        None => TrueUncertainty::zero(b.cols()),
    };
    PlantSpec::new(a, b, lambda, delta, x0).map_err(|e| invalid(e.to_string()))
}

fn parse_reference(keys: &Keys<'_>) -> Result<ReferenceSignal, CliError> {
    let d = ReferenceSignal::default();
    let shape = match keys.get("reference.shape").map(|v| as_str("reference.shape", v)).transpose()? {
        None | Some("square") => ReferenceShape::Square,
        Some("step") => ReferenceShape::Step,
        Some(other) => return Err(invalid(format!("unknown reference.shape `{other}`"))),
    };
    Ok(ReferenceSignal {
        shape,
        amplitude: keys.f64_or("reference.amplitude", d.amplitude)?,
        period: keys.f64_or("reference.period", d.period)?,
        filter_time_constant: keys.f64_or("reference.tau", d.filter_time_constant)?,
    })
}

fn parse_base(keys: &Keys<'_>) -> Result<SimConfig, CliError> {
    let plant = parse_plant(keys)?;
    let n = plant.n();
    let gains = Gains::new(
        matrix("gains.k1", keys.require("gains.k1", "a scenario")?)?,
        matrix("gains.k2", keys.require("gains.k2", "a scenario")?)?,
    );
    let r_weight = match keys.get("lyapunov.r") {
        Some(v) => matrix("lyapunov.r", v)?,
        None => Matrix::identity(n),
    };
    let stride = keys.f64_or("sim.record_stride", 10.0)?;
    if stride < 1.0 || stride.fract() != 0.0 {
        return Err(invalid("sim.record_stride must be a positive integer"));
    }
    let dd = DomainGrid::default();
    let points = keys.f64_or("domain.points", dd.points_per_axis as f64)?;
    if points < 2.0 || points.fract() != 0.0 {
        return Err(invalid("domain.points must be an integer of at least 2"));
    }
    Ok(SimConfig {
        dt: keys.f64_or("sim.dt", 1e-3)?,
        t_final: keys.f64_or("sim.t_final", 100.0)?,
        record_stride: stride as usize,
        variant: ControllerVariant::NominalOnly,
        basis: parse_basis(keys, n)?,
        plant,
        gains,
        r_weight,
        reference: parse_reference(keys)?,
        domain: DomainGrid {
            lower: keys.f64_or("domain.lower", dd.lower)?,
            upper: keys.f64_or("domain.upper", dd.upper)?,
            points_per_axis: points as usize,
        },
    })
}

/// Parses a scenario from configuration text and validates every run.
pub fn parse_scenario(text: &str, default_name: &str) -> Result<Scenario, CliError> {
    let flat = parse_flat(text)?;
    let mut runs: BTreeMap<String, Flat> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (key, value) in &flat {
        if let Some(rest) = key.strip_prefix("compare.") {
            let (label, sub) =
                rest.split_once('.').ok_or_else(|| invalid(format!("`{key}`: expected compare.<label>.<key>")))?;
            if sub != "variant" && !RUN_KEYS.contains(&sub) {
                return Err(invalid(format!("unknown key `{key}`")));
            }
            if !runs.contains_key(label) {
                order.push(label.to_string());
            }
            runs.entry(label.to_string()).or_default().insert(sub.to_string(), value.clone());
        } else if !SHARED_KEYS.contains(&key.as_str()) && !RUN_KEYS.contains(&key.as_str()) {
            return Err(invalid(format!("unknown key `{key}`")));
        }
    }
    // toml tables are sorted; keep the order in which labels first appear in the text
    order.sort_by_key(|label| {
        text.find(&format!("compare.{label}.")).or_else(|| text.find(&format!("[compare.{label}]")))
    });

    let shared = Keys { flat: &flat, run: None };
    let config = parse_base(&shared)?;
    let name = match flat.get("name") {
        Some(v) => as_str("name", v)?.to_string(),
        None => default_name.to_string(),
    };

    let mut comparisons = Vec::new();
    if let Some(v) = flat.get("variant") {
        let variant_name = as_str("variant", v)?;
        let label = match flat.get("label") {
            Some(l) => as_str("label", l)?.to_string(),
            None => variant_name.to_string(),
        };
        comparisons.push(Comparison::new(label, parse_variant(variant_name, &shared)?));
    }
    for label in order {
        let run = &runs[&label];
        let keys = Keys { flat: &flat, run: Some(run) };
        let variant_name = as_str(
            "variant",
            run.get("variant").ok_or_else(|| invalid(format!("compare.{label} requires `variant`")))?,
        )?;
        comparisons.push(Comparison::new(label, parse_variant(variant_name, &keys)?));
    }
    let mut seen = std::collections::BTreeSet::new();
    for c in &comparisons {
        if c.label == symctl::batch::NOMINAL_LABEL || !seen.insert(c.label.clone()) {
            return Err(invalid(format!("duplicate or reserved run label `{}`", c.label)));
        }
    }

    let scenario = Scenario { name, config, comparisons };
    scenario.validate().map_err(|e| invalid(e.to_string()))?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(&text, stem)
}

/// A preset name or a path to a configuration file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, CliError> {
    match Scenario::preset(name_or_path) {
        Some(sc) => Ok(sc),
        None => load_scenario(Path::new(name_or_path)),
    }
}

/// Configuration of the file's primary run (`variant` key).
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let flat = parse_flat(&text)?;
    if !flat.contains_key("variant") {
        return Err(invalid("configuration has no `variant`"));
    }
    let scenario = parse_scenario(&text, "config")?;
    Ok(scenario.config_for(scenario.comparisons[0].variant.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
plant.a = [[0, 1], [0, 0]]
plant.b = [[0], [1]]
plant.lambda = [0.9]
plant.delta = ["0.2 x1 + 0.2 x2"]
basis.kind = "polynomial"
basis.monomials = ["x1", "x2"]
gains.k1 = [[0.16, 0.57]]
gains.k2 = [[0.16]]
"#;

    #[test]
    fn minimal_scenario_defaults() {
        let sc = parse_scenario(MINIMAL, "mini").unwrap();
        assert_eq!(sc.name, "mini");
        assert!(sc.comparisons.is_empty());
        assert_eq!(sc.config.dt, 1e-3);
        assert_eq!(sc.config.t_final, 100.0);
        assert_eq!(sc.config.record_stride, 10);
        assert_eq!(sc.config.reference, ReferenceSignal::default());
    }

    #[test]
    fn parse_error_has_line() {
        let text = format!("{MINIMAL}\nsim.dt = = 3\n");
        match parse_scenario(&text, "x") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 11),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}\nparams.alhpa = 3\n");
        assert!(parse_scenario(&text, "x").unwrap_err().to_string().contains("alhpa"));
    }

    #[test]
    fn missing_parameter_names_key() {
        let text = format!(
            "{MINIMAL}\nvariant = \"symbiotic-parametric\"\nparams.alpha = 1\nparams.beta2 = 1\nparams.gamma1 = 1\nkappa.kind = \"identity\"\n"
        );
        let err = parse_scenario(&text, "x").unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
        assert!(err.to_string().contains("params.beta1"), "{err}");
    }

    #[test]
    fn compare_overrides_shared_params() {
        let text = format!(
            "{MINIMAL}\nparams.alpha = 1\n[compare.slow]\nvariant = \"fixed-gain\"\n[compare.fast]\nvariant = \"fixed-gain\"\nparams.alpha = 9\n"
        );
        let sc = parse_scenario(&text, "x").unwrap();
        let labels: Vec<_> = sc.comparisons.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["slow", "fast"]);
        assert_eq!(sc.comparisons[0].variant, ControllerVariant::FixedGainOnly { alpha: 1.0 });
        assert_eq!(sc.comparisons[1].variant, ControllerVariant::FixedGainOnly { alpha: 9.0 });
    }

    #[test]
    fn bad_monomial_rejected() {
        let text = MINIMAL.replace("[\"x1\", \"x2\"]", "[\"2 x1\"]");
        assert!(parse_scenario(&text, "x").is_err());
    }
}
