use std::path::Path;

use fluxcouple::experiment::OutputConfig;
use fluxcouple::flux::NoiseModel;
use fluxcouple::tune::{Dim, ParamSpace, SweepGrid, TuneSettings};
use fluxcouple::{AccelConfig, ExperimentConfig, ProblemConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

/// The whole config file: one experiment plus the sweep grid and the
/// tuning space used by the `sweep` and `tune` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub accel: AccelConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    pub outputs: OutputConfig,
    pub sweep: SweepSpec,
    pub tune: TuneSpec,
}

/// A list of values or an inclusive `from..=to` range with `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    List(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

impl AxisSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Self::List(v) if v.is_empty() => Err(CliError::Config("empty axis".into())),
            Self::List(v) => Ok(v.clone()),
            Self::Range { from, to, step } => {
                if !(*step > 0.0 && from <= to) {
                    return Err(CliError::Config(format!(
                        "bad range {from}..={to} step {step}"
                    )));
                }
                Ok(SweepGrid::range(*from, *to, *step))
            }
        }
    }
}

/// Axes of the `sweep` command. A missing delay axis sweeps only the
/// configured `accel.delay`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub beta: AxisSpec,
    pub m_max: AxisSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<AxisSpec>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            beta: AxisSpec::Range {
                from: 0.05,
                to: 1.0,
                step: 0.05,
            },
            m_max: AxisSpec::Range {
                from: 0.0,
                to: 10.0,
                step: 1.0,
            },
            delay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSpec {
    pub dims: Vec<Dim>,
    pub n_initial: usize,
    pub n_total: usize,
    pub seed: u64,
    /// Evaluate the configured `accel` values as the first trial.
    pub include_base: bool,
}

impl Default for TuneSpec {
    fn default() -> Self {
        let s = TuneSettings::default();
        Self {
            dims: ParamSpace::beta_depth_delay().dims,
            n_initial: s.n_initial,
            n_total: s.n_total,
            seed: s.seed,
            include_base: s.include_base,
        }
    }
}

impl RunConfig {
    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            problem: self.problem,
            accel: self.accel,
            noise: self.noise,
            outputs: self.outputs.clone(),
        }
    }

    pub fn sweep_grid(&self) -> Result<SweepGrid, CliError> {
        let delay = match &self.sweep.delay {
            Some(axis) => axis.values()?,
            None => vec![self.accel.delay as f64],
        };
        Ok(SweepGrid::new()
            .axis("beta", self.sweep.beta.values()?)
            .axis("m_max", self.sweep.m_max.values()?)
            .axis("delay", delay))
    }

    pub fn param_space(&self) -> Result<ParamSpace, CliError> {
        ParamSpace::new(self.tune.dims.clone()).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.experiment()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sweep_grid()?;
        self.param_space()?;
        if self.tune.n_initial == 0 || self.tune.n_initial > self.tune.n_total {
            return Err(CliError::Config(
                "tune needs 1 <= n_initial <= n_total".into(),
            ));
        }
        Ok(())
    }

    /// Compact JSON with sorted keys.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of the canonical JSON without the `outputs` section, hex
    /// encoded. Where results are written does not change the hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut value {
            map.remove("outputs");
        }
        let text = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads `path` (or the defaults) and applies `key=value` overrides, where
/// `key` is a dotted path such as `accel.beta` and `value` is JSON (bare
/// words are taken as strings).
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::to_value(RunConfig::default()).expect("defaults serialize"),
    };
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override `{item}` is not key=value")))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key, parsed)?;
    }
    let config: RunConfig =
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

fn set_path(root: &mut Value, key: &str, new: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("bad override key `{key}`")));
        }
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("`{key}`: `{part}` is not inside an object"))
        })?;
        if i + 1 == parts.len() {
            map.insert(part.to_string(), new);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = load(
            None,
            &[
                "accel.beta=0.45".into(),
                "accel.depth=adaptive".into(),
                "noise.amplitude=0.002".into(),
                "sweep.beta=[0.1,0.2]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.accel.beta, 0.45);
        assert_eq!(c.accel.depth, fluxcouple::DepthMode::Adaptive);
        assert_eq!(c.noise.unwrap().amplitude, 0.002);
        assert_eq!(c.sweep.beta, AxisSpec::List(vec![0.1, 0.2]));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for bad in [
            "accel.beta",
            "accel.nope=1",
            "accel.beta=2.0",
            "accel..beta=1",
        ] {
            assert!(
                matches!(load(None, &[bad.into()]), Err(CliError::Config(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.outputs.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.accel.beta = 0.31;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
