//! JSON run configuration with dotted-path overrides (`--spec.length 10`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::correlators::{Averaging, TimeGrid};
use crate::error::{Error, Result};
use crate::gapstats::{GapKind, ZeroGaps};
use crate::spinchain::{Axis, PauliString, SpinChainSpec, DEFAULT_MAX_LENGTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    BoundCheck,
    AbFactorization,
    Fluctuations,
    GapstatsSweep,
    Lemma2Suite,
    Histogram,
    McForwardError,
    IntegrableContrast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub t_max: f64,
    pub averaging: Averaging,
    /// Write every `csv_stride`-th grid point (the last one always).
    pub csv_stride: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dt: 0.001,
            t_max: 100.0,
            averaging: Averaging::Running,
            csv_stride: 1,
        }
    }
}

/// `points` log-spaced values over `[lo, hi]·σ_G`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        Self {
            lo: 1e-4,
            hi: 10.0,
            points: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma2Config {
    pub distributions: usize,
    pub max_gaps: usize,
    pub t_values: Vec<f64>,
}

impl Default for Lemma2Config {
    fn default() -> Self {
        Self {
            distributions: 1000,
            max_gaps: 50,
            t_values: vec![0.1, 1.0, 10.0, 100.0],
        }
    }
}

/// Absolute `ε = epsilon_min · 2^k`, `k = 0..doublings`, for both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastConfig {
    pub epsilon_min: f64,
    pub doublings: usize,
    pub integrable: SpinChainSpec,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            epsilon_min: 1e-3,
            doublings: 14,
            integrable: SpinChainSpec::integrable(10),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub spec: SpinChainSpec,
    /// Chain lengths for scaling runs; the spec's length is used otherwise.
    pub lengths: Vec<usize>,
    pub max_length: usize,
    pub beta: f64,
    /// Defaults to `X` on the middle site.
    pub observable: Option<PauliString>,
    /// Second observable for cross runs; defaults to `X` right of the middle
    /// site for `ab_factorization` and to `observable` otherwise.
    pub observable_b: Option<PauliString>,
    pub kinds: Vec<GapKind>,
    pub zero_gaps: ZeroGaps,
    pub grid: GridConfig,
    pub epsilon: EpsilonConfig,
    pub mc: McConfig,
    pub bins: usize,
    pub smoothing: usize,
    pub delta_grid: Vec<f64>,
    /// Split threshold for the factorization error.
    pub split_threshold: f64,
    pub lemma2: Lemma2Config,
    pub contrast: ContrastConfig,
    /// Window targets reported by `gapstats_sweep`.
    pub target_delta: f64,
    pub target_a: f64,
    /// Largest L at which the dense commutator σ_G check runs.
    pub sigma_check_max_length: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::BoundCheck,
            spec: SpinChainSpec::eth(8),
            lengths: Vec::new(),
            max_length: DEFAULT_MAX_LENGTH,
            beta: 1.0,
            observable: None,
            observable_b: None,
            kinds: vec![GapKind::PlainV],
            zero_gaps: ZeroGaps::DropDiagonal,
            grid: GridConfig::default(),
            epsilon: EpsilonConfig::default(),
            mc: McConfig::default(),
            bins: 80,
            smoothing: 5,
            delta_grid: vec![0.05, 0.1, 0.2, 0.3, 0.4],
            split_threshold: 0.2,
            lemma2: Lemma2Config::default(),
            contrast: ContrastConfig::default(),
            target_delta: 0.1,
            target_a: 1.0,
            sigma_check_max_length: 10,
            output_dir: PathBuf::from("corrflow-out"),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads `path` and applies `--field.path value` overrides.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base: Value = serde_json::from_str(&text).map_err(|e| config_err(e.to_string()))?;
        let cfg = apply_overrides(base, &parse_overrides(overrides)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(config_err(m));
        if !(self.grid.dt > 0.0 && self.grid.dt.is_finite()) {
            return bad(format!("grid.dt must be positive, got {}", self.grid.dt));
        }
        if !(self.grid.t_max >= self.grid.dt) {
            return bad(format!("grid.t_max must be at least grid.dt, got {}", self.grid.t_max));
        }
        if self.mc.samples == 0 {
            return bad("mc.samples must be at least 1".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and nonnegative, got {}", self.beta));
        }
        if !(self.epsilon.lo > 0.0 && self.epsilon.hi >= self.epsilon.lo) || self.epsilon.points == 0 {
            return bad("epsilon grid needs 0 < lo ≤ hi and at least one point".into());
        }
        if self.bins == 0 {
            return bad("bins must be at least 1".into());
        }
        if self.kinds.is_empty() {
            return bad("kinds must name at least one distribution".into());
        }
        for l in self.lengths().into_iter().chain([self.contrast.integrable.length]) {
            if l > self.max_length {
                return bad(format!("length {l} exceeds max_length {}", self.max_length));
            }
            self.spec_for(l).validate().map_err(|e| config_err(e.to_string()))?;
        }
        for ps in [&self.observable, &self.observable_b].into_iter().flatten() {
            if let Some(site) = ps.max_site() {
                if let Some(l) = self.lengths().into_iter().find(|&l| site >= l) {
                    return bad(format!("observable {ps} does not fit a chain of length {l}"));
                }
            }
        }
        TimeGrid::new(self.grid.dt, self.grid.t_max).map_err(|e| config_err(e.to_string()))?;
        Ok(())
    }

    /// Lengths this run touches.
    pub fn lengths(&self) -> Vec<usize> {
        if self.lengths.is_empty() {
            vec![self.spec.length]
        } else {
            self.lengths.clone()
        }
    }

    pub fn spec_for(&self, length: usize) -> SpinChainSpec {
        SpinChainSpec {
            length,
            ..self.spec.clone()
        }
    }

    pub fn observable_for(&self, spec: &SpinChainSpec) -> PauliString {
        self.observable
            .clone()
            .unwrap_or_else(|| PauliString::single(spec.mid_site(), Axis::X))
    }

    pub fn observable_b_for(&self, spec: &SpinChainSpec) -> PauliString {
        match (&self.observable_b, self.experiment) {
            (Some(b), _) => b.clone(),
            (None, Experiment::AbFactorization) => PauliString::single(spec.mid_site() + 1, Axis::X),
            (None, _) => self.observable_for(spec),
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.dt, self.grid.t_max)
    }
}

/// `["--a.b", "1", "--c=x"]` → `[("a.b", "1"), ("c", "x")]`
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| config_err(format!("expected --field.path, got {arg:?}")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let v = it.next().ok_or_else(|| config_err(format!("missing value for --{key}")))?;
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}

/// Sets each dotted path in the serialized config; values are read as JSON
/// when they parse, else as strings. Unknown paths are config errors.
pub fn apply_overrides(base: Value, overrides: &[(String, String)]) -> Result<RunConfig> {
    // Round-trip through the typed config so defaults exist for every path.
    let typed: RunConfig = serde_json::from_value(base).map_err(|e| config_err(e.to_string()))?;
    let mut v = serde_json::to_value(&typed)?;
    for (path, raw) in overrides {
        let val = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        let mut slot = &mut v;
        for part in path.split('.') {
            slot = match slot {
                Value::Object(m) if m.contains_key(part) => m.get_mut(part).unwrap(),
                _ => return Err(config_err(format!("unknown config field {path:?}"))),
            };
        }
        *slot = val;
    }
    serde_json::from_value(v).map_err(|e| config_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_json(r#"{"experiment": "histogram"}"#).unwrap();
        assert_eq!(c.experiment, Experiment::Histogram);
        assert_eq!(c.beta, 1.0);
        assert_eq!(c.grid.dt, 0.001);
        assert_eq!(c.mc.samples, 10_000);
        assert_eq!(c.bins, 80);
        assert_eq!(c.spec, SpinChainSpec::eth(8));
        c.validate().unwrap();
    }

    #[test]
    fn overrides_follow_field_paths() {
        let base = serde_json::json!({"experiment": "bound_check"});
        let ov = parse_overrides(&args(&["--spec.length", "6", "--beta=0.5", "--grid.dt", "0.01", "--observable", "Z2"])).unwrap();
        let c = apply_overrides(base, &ov).unwrap();
        assert_eq!(c.spec.length, 6);
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.grid.dt, 0.01);
        assert_eq!(c.observable.as_ref().unwrap().to_string(), "Z2");
        c.validate().unwrap();
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let base = serde_json::json!({});
        let e = apply_overrides(base.clone(), &[("spec.nope".into(), "1".into())]).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let c = apply_overrides(base.clone(), &[("grid.dt".into(), "-1".into())]).unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 3);
        let c = apply_overrides(base.clone(), &[("mc.samples".into(), "0".into())]).unwrap();
        assert!(c.validate().is_err());
        let c = apply_overrides(base, &[("spec.length".into(), "15".into())]).unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::from_json(r#"{"experiment": "plot"}"#).is_err());
        assert!(parse_overrides(&args(&["beta", "1"])).is_err());
        assert!(parse_overrides(&args(&["--beta"])).is_err());
    }

    #[test]
    fn default_second_observable() {
        let mut c = RunConfig {
            experiment: Experiment::AbFactorization,
            ..RunConfig::default()
        };
        let s = SpinChainSpec::eth(6);
        assert_eq!(c.observable_for(&s).to_string(), "X3");
        assert_eq!(c.observable_b_for(&s).to_string(), "X4");
        c.experiment = Experiment::Fluctuations;
        assert_eq!(c.observable_b_for(&s).to_string(), "X3");
    }
}
