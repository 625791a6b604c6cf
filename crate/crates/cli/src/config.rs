//! Experiment configuration: a single JSON document, validated before any
//! computation. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use secdetect::secrecy_model::Scenario;

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Known,
    SubspaceFree,
    SubspaceFixed,
    Sparse,
}

/// Where a vector comes from. `random` draws a Gaussian direction from the
/// top-level seed and scales it to `norm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorSource {
    Inline(Vec<f64>),
    File(PathBuf),
    Random {
        #[serde(default = "one")]
        norm: f64,
    },
}

/// Where an orthonormal basis comes from. `random` is a seeded Haar-like
/// draw; files use the matrix format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BasisSource {
    Inline(Vec<Vec<f64>>),
    File(PathBuf),
    Random {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_thresholds", with = "real_list")]
    pub thresholds: Vec<f64>,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Tau,
    Alpha,
    Gamma,
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::Alpha => "alpha",
            SweepParam::Gamma => "gamma",
            SweepParam::M => "m",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tau" => Ok(SweepParam::Tau),
            "alpha" => Ok(SweepParam::Alpha),
            "gamma" => Ok(SweepParam::Gamma),
            "m" => Ok(SweepParam::M),
            other => Err(format!(
                "unknown sweep parameter '{other}' (tau, alpha, gamma, m)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    #[serde(with = "real_list")]
    pub values: Vec<f64>,
    /// Also run the simulator at every point.
    #[serde(default)]
    pub simulate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    /// Subspace dimension or sparsity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Known-signal mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<VectorSource>,
    /// Fixed-basis subspace mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisSource>,
    pub scenario: Scenario,
    #[serde(default)]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Signal attenuation `cos θ` used by `evaluate` and `simulate` on a
    /// supplied matrix. `design` records the value it chose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn one() -> f64 {
    1.0
}

fn default_trials() -> usize {
    10_000
}

fn default_thresholds() -> Vec<f64> {
    (0..=80).map(|i| -20.0 + 0.5 * i as f64).collect()
}

fn default_nodes() -> usize {
    10
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// Reals that may be `±∞`, written as `"inf"` and `"-inf"`.
mod real_list {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let reprs: Vec<Repr> = values
            .iter()
            .map(|&v| match v {
                f64::INFINITY => Repr::Text("inf".into()),
                f64::NEG_INFINITY => Repr::Text("-inf".into()),
                v => Repr::Number(v),
            })
            .collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Number(v) => Ok(v),
                Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
                Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
                Repr::Text(t) => Err(serde::de::Error::custom(format!(
                    "expected a number, \"inf\" or \"-inf\", got \"{t}\""
                ))),
            })
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.version != CONFIG_VERSION {
            return fail(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            ));
        }
        if self.m == 0 || self.m > self.n {
            return fail(format!(
                "need 1 <= m <= n, got m = {}, n = {}",
                self.m, self.n
            ));
        }
        if self.nodes == 0 {
            return fail("nodes must be at least 1".into());
        }
        if self.simulation.trials == 0 {
            return fail("simulation.trials must be at least 1".into());
        }
        if self.simulation.thresholds.iter().any(|t| t.is_nan()) {
            return fail("simulation.thresholds must not contain NaN".into());
        }
        match self.mode {
            Mode::Known => {
                if self.k.is_some() {
                    return fail("k is not used in known mode".into());
                }
                match &self.signal {
                    None => return fail("known mode needs a signal".into()),
                    Some(VectorSource::Inline(v)) if v.len() != self.n => {
                        return fail(format!(
                            "inline signal has length {}, n = {}",
                            v.len(),
                            self.n
                        ));
                    }
                    Some(VectorSource::Random { norm }) if !(norm.is_finite() && *norm > 0.0) => {
                        return fail(format!("random signal norm must be positive, got {norm}"));
                    }
                    _ => {}
                }
            }
            Mode::SubspaceFree | Mode::SubspaceFixed | Mode::Sparse => {
                let k = match self.k {
                    Some(k) if k >= 1 && k <= self.n => k,
                    Some(k) => return fail(format!("need 1 <= k <= n, got k = {k}")),
                    None => return fail("k is required in this mode".into()),
                };
                if self.signal.is_some() {
                    return fail("signal is only used in known mode".into());
                }
                if self.mode == Mode::Sparse && self.m == self.n {
                    return fail("sparse mode needs m < n".into());
                }
                if let Some(BasisSource::Inline(rows)) = &self.basis {
                    if rows.len() != self.n || rows.iter().any(|r| r.len() != k) {
                        return fail(format!("inline basis must be {} x {k}", self.n));
                    }
                }
            }
        }
        match (self.mode, &self.basis) {
            (Mode::SubspaceFixed, None) => return fail("subspace-fixed mode needs a basis".into()),
            (Mode::SubspaceFixed, _) | (_, None) => {}
            (_, Some(_)) => return fail("basis is only used in subspace-fixed mode".into()),
        }
        if let Some(a) = self.attenuation {
            if !(0.0..=1.0).contains(&a) {
                return fail(format!("attenuation must lie in [0, 1], got {a}"));
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return fail("sweep.values is empty".into());
            }
            if sweep.values.iter().any(|v| v.is_nan()) {
                return fail("sweep.values must not contain NaN".into());
            }
        }
        Ok(())
    }

    /// The config with one parameter replaced, as a sweep point.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self, CliError> {
        let mut next = self.clone();
        let bad = |e: secdetect::secrecy_model::SecrecyError| CliError::Config(e.to_string());
        match param {
            SweepParam::Tau => next.scenario = self.scenario.with_tau(value).map_err(bad)?,
            SweepParam::Alpha => {
                let profile = self.scenario.profile().with_alpha(value).map_err(bad)?;
                next.scenario = self.scenario.with_profile(profile);
            }
            SweepParam::Gamma => {
                let profile = self.scenario.profile().with_gamma(value).map_err(bad)?;
                next.scenario = self.scenario.with_profile(profile);
            }
            SweepParam::M => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= self.n as f64) {
                    return Err(CliError::Config(format!(
                        "m must be an integer in [1, n], got {value}"
                    )));
                }
                next.m = value as usize;
            }
        }
        next.sweep = None;
        next.attenuation = None;
        next.validate()?;
        Ok(next)
    }
}
