//! Run configuration: one TOML file, with `--set key.path=value` overrides
//! applied before deserialisation.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use ssr_core::optimizer::{
    synthetic_calibration, CalibrationSet, Overhead, RepetitionUnit, Scenario, ScenarioKind, SweepGrid,
    SyntheticShape,
};
use ssr_core::{EmissionRates, State, StatePriors, SwitchingRates, Window};

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub system: Option<SystemConfig>,
    pub priors: Option<PriorsConfig>,
    pub mc: Option<McSettings>,
    pub error_curve: Option<ErrorCurveConfig>,
    pub optimize: Option<OptimizeConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub gamma_0: f64,
    pub gamma_1: f64,
    pub lambda_0: f64,
    pub lambda_1: f64,
    pub duration: f64,
    pub grid_nodes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsConfig {
    pub p0: Option<f64>,
    #[serde(default)]
    pub steady_state: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

/// A list of values, or an evenly spaced range with inclusive ends.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Values {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Values {
    pub fn resolve(&self, field: &str) -> Result<Vec<f64>, CliError> {
        let v = match self {
            Values::List(v) => v.clone(),
            Values::Range { start, stop, step } => {
                if !(*step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite() && stop >= start) {
                    return Err(CliError::config(field, "range needs finite start <= stop and step > 0"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                // Snap to 12 significant digits so 0.5e-3 + 9 * 0.1e-3 prints as 1.4e-3.
                (0..=n)
                    .map(|i| format!("{:.11e}", start + i as f64 * step).parse().expect("formatted float parses"))
                    .collect()
            }
        };
        if v.is_empty() {
            return Err(CliError::config(field, "grid is empty"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorCurveConfig {
    /// Symmetric switching rates to sweep; defaults to `system` rates.
    pub gammas: Option<Vec<f64>>,
    pub durations: Values,
    /// Window for the error-versus-efficiency curves; defaults to each
    /// curve's error minimum.
    pub efficiency_duration: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub scenario: ScenarioConfig,
    /// Calibration CSV, relative to the config file.
    pub calibration: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    pub grid: GridConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub target_fidelity: f64,
    pub target_state: u8,
    pub p0: f64,
    #[serde(default)]
    pub overhead: Overhead,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub gamma_0_slope: f64,
    pub gamma_1_slope: f64,
    pub lambda_0_sat: f64,
    pub lambda_1_sat: f64,
    pub p_sat: f64,
    #[serde(default)]
    pub background: f64,
    pub knots: Values,
}

impl SyntheticConfig {
    fn shape(&self) -> Result<SyntheticShape, CliError> {
        let f = |name: &str, v: f64| nonneg(&format!("optimize.synthetic.{name}"), v);
        Ok(SyntheticShape {
            gamma_0_slope: f("gamma_0_slope", self.gamma_0_slope)?,
            gamma_1_slope: f("gamma_1_slope", self.gamma_1_slope)?,
            lambda_0_sat: f("lambda_0_sat", self.lambda_0_sat)?,
            lambda_1_sat: f("lambda_1_sat", self.lambda_1_sat)?,
            p_sat: positive("optimize.synthetic.p_sat", self.p_sat)?,
            background: f("background", self.background)?,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub powers: Option<Values>,
    pub durations: Option<Values>,
    pub reps: Option<Vec<usize>>,
    pub unit: Option<RepetitionUnit>,
    pub decay_per_rep: Option<f64>,
}

/// Parameters of a single system, validated.
#[derive(Debug, Clone, Copy)]
pub struct System {
    pub rates: SwitchingRates,
    pub emission: EmissionRates,
    pub window: Window,
}

pub struct Optimize {
    pub scenario: Scenario,
    pub calibration: Option<CalibrationSet>,
    pub grid: SweepGrid,
}

fn check(field: &str, v: f64, ok: bool, what: &str) -> Result<f64, CliError> {
    if v.is_finite() && ok {
        Ok(v)
    } else {
        Err(CliError::config(field, format!("{what}, got {v}")))
    }
}

fn nonneg(field: &str, v: f64) -> Result<f64, CliError> {
    check(field, v, v >= 0.0, "must be finite and >= 0")
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    check(field, v, v > 0.0, "must be finite and > 0")
}

impl RunConfig {
    /// Reads `path` and applies `overrides` (`dotted.key=value`).
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let text = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn system(&self) -> Result<System, CliError> {
        let s = self.system.as_ref().ok_or_else(|| CliError::config("system", "section is required"))?;
        let rates = SwitchingRates::new(nonneg("system.gamma_0", s.gamma_0)?, nonneg("system.gamma_1", s.gamma_1)?)
            .map_err(|e| CliError::config("system", e))?;
        let emission =
            EmissionRates::new(nonneg("system.lambda_0", s.lambda_0)?, nonneg("system.lambda_1", s.lambda_1)?)
                .map_err(|e| CliError::config("system", e))?;
        let duration = positive("system.duration", s.duration)?;
        let window = match s.grid_nodes {
            Some(n) => Window::with_grid_nodes(duration, n),
            None => Window::new(duration),
        }
        .map_err(|e| CliError::config("system.grid_nodes", e))?;
        Ok(System { rates, emission, window })
    }

    /// Priors at the start of the window; uniform when the section is absent.
    pub fn priors(&self, rates: &SwitchingRates) -> Result<StatePriors, CliError> {
        match &self.priors {
            None => Ok(StatePriors::uniform()),
            Some(p) => match (p.p0, p.steady_state) {
                (Some(_), true) => Err(CliError::config("priors", "give either p0 or steady_state, not both")),
                (Some(p0), false) => {
                    StatePriors::new(check("priors.p0", p0, (0.0..=1.0).contains(&p0), "must lie in [0, 1]")?)
                        .map_err(|e| CliError::config("priors.p0", e))
                }
                (None, true) => ssr_core::steady_state_priors(rates).map_err(|e| CliError::config("priors.steady_state", e)),
                (None, false) => Err(CliError::config("priors", "needs p0 or steady_state = true")),
            },
        }
    }

    pub fn mc(&self) -> Result<McSettings, CliError> {
        let m = self.mc.clone().ok_or_else(|| CliError::config("mc", "section is required"))?;
        if m.runs < ssr_core::montecarlo::MIN_RUNS {
            return Err(CliError::config("mc.runs", format!("must be >= {}, got {}", ssr_core::montecarlo::MIN_RUNS, m.runs)));
        }
        Ok(m)
    }

    pub fn optimize(&self, config_dir: &Path) -> Result<Optimize, CliError> {
        let o = self.optimize.as_ref().ok_or_else(|| CliError::config("optimize", "section is required"))?;
        let s = &o.scenario;
        let target_state =
            State::try_from(s.target_state).map_err(|e| CliError::config("optimize.scenario.target_state", e))?;
        let priors = StatePriors::new(check(
            "optimize.scenario.p0",
            s.p0,
            (0.0..=1.0).contains(&s.p0),
            "must lie in [0, 1]",
        )?)
        .map_err(|e| CliError::config("optimize.scenario.p0", e))?;
        let scenario = Scenario {
            kind: s.kind,
            target_fidelity: s.target_fidelity,
            target_state,
            priors_at_start: priors,
            overhead: s.overhead,
        };
        scenario.validate().map_err(|e| CliError::config("optimize.scenario", e))?;

        let g = &o.grid;
        let grid = if s.kind == ScenarioKind::NuclearSsr {
            let reps = g.reps.clone().ok_or_else(|| CliError::config("optimize.grid.reps", "required for nuclear_ssr"))?;
            if reps.is_empty() {
                return Err(CliError::config("optimize.grid.reps", "grid is empty"));
            }
            SweepGrid::Repetitions {
                reps,
                unit: g.unit.ok_or_else(|| CliError::config("optimize.grid.unit", "required for nuclear_ssr"))?,
                decay_per_rep: g
                    .decay_per_rep
                    .ok_or_else(|| CliError::config("optimize.grid.decay_per_rep", "required for nuclear_ssr"))?,
            }
        } else {
            let powers = g.powers.as_ref().ok_or_else(|| CliError::config("optimize.grid.powers", "required"))?;
            let durations = g.durations.as_ref().ok_or_else(|| CliError::config("optimize.grid.durations", "required"))?;
            SweepGrid::Power {
                powers: powers.resolve("optimize.grid.powers")?,
                durations: durations.resolve("optimize.grid.durations")?,
            }
        };

        let calibration = match (&o.calibration, &o.synthetic) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("optimize", "give either calibration or synthetic, not both"))
            }
            (Some(path), None) => {
                let path = config_dir.join(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::config("optimize.calibration", format!("cannot read {}: {e}", path.display())))?;
                Some(ssr_core::io::read_calibration(&text).map_err(|e| CliError::config("optimize.calibration", e))?)
            }
            (None, Some(syn)) => {
                let knots = syn.knots.resolve("optimize.synthetic.knots")?;
                Some(synthetic_calibration(&syn.shape()?, &knots).map_err(|e| CliError::config("optimize.synthetic", e))?)
            }
            (None, None) if s.kind == ScenarioKind::NuclearSsr => None,
            (None, None) => return Err(CliError::config("optimize", "needs calibration or synthetic")),
        };
        Ok(Optimize { scenario, calibration, grid })
    }
}

fn apply_override(table: &mut toml::Table, arg: &str) -> Result<(), CliError> {
    let (key, raw) = arg
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{arg}` is not key=value")))?;
    let key = key.trim();
    // Values parse as TOML where possible, otherwise as a bare string.
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[system]
gamma_0 = 500.0
gamma_1 = 300.0
lambda_0 = 5e3
lambda_1 = 4e4
duration = 1e-3
"#;

    #[test]
    fn overrides_replace_and_insert() {
        let c = RunConfig::parse(BASE, &["system.gamma_0=10".into(), "mc.runs=200".into(), "output_dir=x/y".into()]).unwrap();
        assert_eq!(c.system.as_ref().unwrap().gamma_0, 10.0);
        assert_eq!(c.mc.unwrap().runs, 200);
        assert_eq!(c.output_dir.unwrap(), PathBuf::from("x/y"));
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = RunConfig::parse(&format!("{BASE}gamma_2 = 1.0\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("gamma_2"), "{err}");
    }

    #[test]
    fn negative_rate_names_field() {
        let c = RunConfig::parse(BASE, &["system.lambda_1=-4".into()]).unwrap();
        let err = c.system().unwrap_err();
        assert!(err.to_string().contains("system.lambda_1"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn ranges_include_both_ends() {
        let v = Values::Range { start: 0.5e-3, stop: 4.5e-3, step: 0.1e-3 }.resolve("d").unwrap();
        assert_eq!(v.len(), 41);
        assert!((v[40] - 4.5e-3).abs() < 1e-15);
        assert!(Values::List(vec![]).resolve("d").is_err());
    }

    #[test]
    fn priors_sources() {
        let c = RunConfig::parse(&format!("{BASE}[priors]\nsteady_state = true\n"), &[]).unwrap();
        let s = c.system().unwrap();
        assert_eq!(c.priors(&s.rates).unwrap().p0(), 0.375);
        let c = RunConfig::parse(&format!("{BASE}[priors]\np0 = 0.2\nsteady_state = true\n"), &[]).unwrap();
        assert!(c.priors(&s.rates).is_err());
    }
}
