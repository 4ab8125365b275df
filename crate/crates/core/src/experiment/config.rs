use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::DesignConfig;
use crate::error::{Error, Result};
use crate::evaluation::CutDenominator;
use crate::seed;
use crate::similarity::SimilarityMetric;
use crate::simulation::OutcomeConfig;

/// Stochastic block model section. Without an explicit seed the graph seed is
/// derived from the experiment seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub attr_noise: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Where the graph comes from: a generated SBM or an edge list with an
/// optional attribute CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmSpec>,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.edges, &self.sbm) {
            (Some(_), Some(_)) => Err(Error::Config(
                "graph: give either an edge list or an sbm section, not both".into(),
            )),
            (None, None) => Err(Error::Config(
                "graph: an edge list or an sbm section is required".into(),
            )),
            (None, Some(_)) if self.attributes.is_some() => Err(Error::Config(
                "graph: attributes only apply to an edge list".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub denominator: CutDenominator,
    /// Also simulate each assignment without spillover to report the RMSE
    /// due to sampling noise alone.
    pub noise_floor: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            denominator: CutDenominator::All,
            noise_floor: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// One sweep axis: a dotted config key and the values it takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub similarity: SimilarityMetric,
    pub graph: GraphSpec,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub simulation: OutcomeConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub grid: Vec<GridAxis>,
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides and validates.
    /// Relative graph paths in `text` are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<Self> {
        let overrides = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>>>()?;
        Self::build(Some(text), base_dir, &overrides)
    }

    /// Reads an optional config file, then applies typed overrides. Paths in
    /// the file are relative to the file; override paths are taken as given.
    pub fn load(file: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
                Self::build(Some(&text), Some(dir.unwrap_or(Path::new("."))), overrides)
            }
            None => Self::build(None, None, overrides),
        }
    }

    fn build(text: Option<&str>, base_dir: Option<&Path>, overrides: &[(String, toml::Value)]) -> Result<Self> {
        let mut table = match text {
            Some(t) => t.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        if let (Some(dir), Some(graph)) = (base_dir, table.get_mut("graph").and_then(|g| g.as_table_mut())) {
            for key in ["edges", "attributes"] {
                if let Some(toml::Value::String(p)) = graph.get_mut(key) {
                    if Path::new(p.as_str()).is_relative() {
                        *p = dir.join(&*p).to_string_lossy().into_owned();
                    }
                }
            }
        }
        let mut value = toml::Value::Table(table);
        for (key, v) in overrides {
            set_dotted(&mut value, key, v.clone())?;
        }
        let config = Self::from_value(value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        value.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    pub fn to_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every section; scheme compatibility is checked here, before any
    /// graph is loaded.
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        self.design.validate()?;
        self.simulation.validate()
    }

    /// Fixes the SBM seed so that it no longer depends on `self.seed`.
    pub fn pin_graph_seed(&mut self) {
        if let Some(sbm) = &mut self.graph.sbm {
            sbm.seed.get_or_insert(seed::derive_config_seed(self.seed, "graph", 0));
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputConfig::default();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Splits `key=value`. The value is read as a TOML value, falling back to a
/// bare string, so `design.method=cbr` and `simulation.ep=0.5` both work.
pub fn parse_override(text: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{text}' is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override '{text}' has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Replaces the value at a dotted path, creating intermediate tables.
pub fn set_dotted(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{}' is not a table", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            table.insert((*part).to_string(), value);
            return Ok(());
        }
        node = table
            .entry((*part).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Method;
    use crate::simulation::SpilloverProbability;

    const MINIMAL: &str = r#"
        seed = 3
        [graph.sbm]
        blocks = 2
        block_size = 5
        p_in = 0.5
        p_out = 0.1
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL, &[], None).unwrap();
        assert_eq!(c.design.method, Method::Cmatch);
        assert_eq!(c.simulation.runs, 10);
        assert!(c.evaluation.noise_floor);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let overrides = ["design.method=cbr".to_string(), "simulation.ep=0.5".to_string()];
        let c = ExperimentConfig::from_toml_str(MINIMAL, &overrides, None).unwrap();
        assert_eq!(c.design.method, Method::Cbr);
        assert_eq!(c.simulation.ep, SpilloverProbability::Fixed(0.5));
    }

    #[test]
    fn incompatible_schemes_rejected_at_load() {
        let overrides = ["design.node_match=bnm".to_string(), "design.cluster_weight=mc".to_string()];
        let err = ExperimentConfig::from_toml_str(MINIMAL, &overrides, None).unwrap_err();
        assert_eq!(err.kind(), "incompatible_schemes");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_str(MINIMAL, &["design.colour=1".into()], None);
        assert!(err.is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::from_toml_str(MINIMAL, &[], None).unwrap();
        let mut b = a.clone();
        b.output.dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let a = ExperimentConfig::from_toml_str(MINIMAL, &["design.cluster_graph=gcm".into()], None)
            .unwrap();
        let text = a.to_toml_string().unwrap();
        let b = ExperimentConfig::from_toml_str(&text, &[], None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn graph_source_must_be_unique() {
        let text = format!("{MINIMAL}\n[graph.extra]\n");
        assert!(ExperimentConfig::from_toml_str(&text, &[], None).is_err());
        let both = format!("{MINIMAL}\n").replace("[graph.sbm]", "[graph]\nedges = \"g.edges\"\n[graph.sbm]");
        assert!(ExperimentConfig::from_toml_str(&both, &[], None).is_err());
    }
}
