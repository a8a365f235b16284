//! JSON model configuration: schema, validation with field paths, and the
//! normalized form written by `--dump-normalized`.

use std::fmt;
use std::path::Path;

use ovkron_core::pipeline::{build_model, BlockSpec, ChannelModel, CovarianceSpec, ModelSpec};
use ovkron_core::scalar::{discretize_uniform01, ScalarMeasure};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfigFile {
    pub version: u32,
    pub n_r: usize,
    pub n_t: usize,
    #[serde(default = "one")]
    pub gamma: f64,
    pub r_measures: Vec<MeasureConfig>,
    pub t_measures: Vec<MeasureConfig>,
    pub covariance: CovarianceConfig,
}

fn one() -> f64 {
    1.0
}

/// `{"atoms": [[location, weight], ...]}` or `{"uniform01": atom_count}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum MeasureConfig {
    #[serde(rename = "atoms")]
    Atoms(Vec<(f64, f64)>),
    #[serde(rename = "uniform01")]
    Uniform01(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub variance: f64,
    pub diagonal: Vec<f64>,
    pub permutation: Vec<usize>,
}

/// Exactly one of the two styles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum CovarianceConfig {
    #[serde(rename = "blocks")]
    Blocks(Vec<BlockConfig>),
    #[serde(rename = "entry_variances")]
    EntryVariances(Vec<Vec<f64>>),
}

/// A configuration problem, located by a JSON path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() || self.field == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "field `{}`: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(field: impl Into<String>, message: impl fmt::Display) -> ConfigError {
    ConfigError { field: field.into(), message: message.to_string() }
}

impl MeasureConfig {
    pub fn to_measure(&self) -> Result<ScalarMeasure, String> {
        match self {
            MeasureConfig::Atoms(a) => ScalarMeasure::from_atoms(a.clone()).map_err(|e| e.to_string()),
            MeasureConfig::Uniform01(n) => discretize_uniform01(*n).map_err(|e| e.to_string()),
        }
    }
}

pub fn parse_str(text: &str) -> Result<ModelConfigFile, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ModelConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        err(path, e.into_inner())
    })?;
    if cfg.version != SCHEMA_VERSION {
        return Err(err("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.version)));
    }
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ModelConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| err("", format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| ConfigError { message: format!("{}: {}", path.display(), e.message), ..e })
}

impl ModelConfigFile {
    pub fn to_spec(&self) -> Result<ModelSpec, ConfigError> {
        if self.n_r == 0 {
            return Err(err("n_r", "must be positive"));
        }
        if self.n_t == 0 {
            return Err(err("n_t", "must be positive"));
        }
        let measures = |name: &str,
                        list: &[MeasureConfig],
                        expected: usize|
         -> Result<Vec<ScalarMeasure>, ConfigError> {
            if list.len() != expected {
                return Err(err(name, format!("expected {expected} entries, got {}", list.len())));
            }
            list.iter().enumerate().map(|(k, m)| m.to_measure().map_err(|e| err(format!("{name}[{k}]"), e))).collect()
        };
        let r_measures = measures("r_measures", &self.r_measures, self.n_r)?;
        let t_measures = measures("t_measures", &self.t_measures, self.n_t)?;
        let covariance = match &self.covariance {
            CovarianceConfig::EntryVariances(s) => {
                if s.len() != self.n_r {
                    return Err(err(
                        "covariance.entry_variances",
                        format!("expected {} rows, got {}", self.n_r, s.len()),
                    ));
                }
                if let Some(k) = s.iter().position(|row| row.len() != self.n_t) {
                    return Err(err(
                        format!("covariance.entry_variances[{k}]"),
                        format!("expected {} columns, got {}", self.n_t, s[k].len()),
                    ));
                }
                CovarianceSpec::EntryVariances(s.clone())
            }
            CovarianceConfig::Blocks(b) => {
                let n = self.n_r.max(self.n_t);
                for (k, block) in b.iter().enumerate() {
                    if block.diagonal.len() != n || block.permutation.len() != n {
                        return Err(err(
                            format!("covariance.blocks[{k}]"),
                            format!("diagonal and permutation must have length max(n_r, n_t) = {n}"),
                        ));
                    }
                }
                CovarianceSpec::Blocks(
                    b.iter()
                        .map(|b| BlockSpec {
                            variance: b.variance,
                            diagonal: b.diagonal.clone(),
                            permutation: b.permutation.clone(),
                        })
                        .collect(),
                )
            }
        };
        Ok(ModelSpec { n_r: self.n_r, n_t: self.n_t, gamma: self.gamma, r_measures, t_measures, covariance })
    }

    pub fn to_model(&self) -> Result<ChannelModel, ConfigError> {
        let spec = self.to_spec()?;
        build_model(&spec).map_err(|e| {
            let field = match e.root() {
                ovkron_core::Error::InvalidMeasure(_) => "measures",
                _ if self.gamma <= 0.0 || !self.gamma.is_finite() => "gamma",
                _ => "covariance",
            };
            err(field, e)
        })
    }
}

/// The model written back with every measure as explicit atoms and the
/// covariance as blocks on the padded index set.
pub fn normalized(model: &ChannelModel) -> ModelConfigFile {
    let atoms = |m: &ScalarMeasure| MeasureConfig::Atoms(m.atoms().to_vec());
    ModelConfigFile {
        version: SCHEMA_VERSION,
        n_r: model.n_r(),
        n_t: model.n_t(),
        gamma: model.gamma(),
        r_measures: model.r_measures()[..model.n_r()].iter().map(atoms).collect(),
        t_measures: model.t_measures()[..model.n_t()].iter().map(atoms).collect(),
        covariance: CovarianceConfig::Blocks(
            model
                .blocks()
                .iter()
                .map(|b| BlockConfig {
                    variance: b.variance,
                    diagonal: b.diagonal.clone(),
                    permutation: b.permutation.clone(),
                })
                .collect(),
        ),
    }
}

pub fn normalized_json(model: &ChannelModel, pretty: bool) -> String {
    let cfg = normalized(model);
    let out = if pretty { serde_json::to_string_pretty(&cfg) } else { serde_json::to_string(&cfg) };
    out.expect("config serializes")
}
