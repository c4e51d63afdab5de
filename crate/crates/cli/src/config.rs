use std::path::Path;

use anyhow::{Context, Result};
use mdeid::pipeline::IcMode;
use mdeid::{Algorithm, PipelineConfig, Scheme};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Reads a JSON config; schema errors name the offending field path.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        anyhow::anyhow!("{}: invalid config at `{}`: {}", path.display(), field, e.inner())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub pipeline: PipelineConfig,
    #[serde(default = "all_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "both_ic_modes")]
    pub ic_modes: Vec<IcMode>,
    #[serde(default = "both_puffer_modes")]
    pub puffer: Vec<bool>,
}

fn all_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

fn both_ic_modes() -> Vec<IcMode> {
    vec![IcMode::SplineOptimized, IcMode::Gauss]
}

fn both_puffer_modes() -> Vec<bool> {
    vec![false, true]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub pipeline: PipelineConfig,
    pub nx: Vec<usize>,
    /// Defaults to the pipeline's `nt`.
    #[serde(default)]
    pub nt: Vec<usize>,
    /// Resolutions used for the empirical orders; defaults to `nx`.
    #[serde(default)]
    pub order_nx: Vec<usize>,
    /// Take empirical orders from the optimal choice instead of the BIC model.
    #[serde(default)]
    pub orders_from_optimal: bool,
}

impl StudyConfig {
    pub fn nt_list(&self) -> Vec<usize> {
        if self.nt.is_empty() {
            vec![self.pipeline.grid.nt]
        } else {
            self.nt.clone()
        }
    }

    pub fn order_nx_list(&self) -> Vec<usize> {
        if self.order_nx.is_empty() {
            self.nx.clone()
        } else {
            self.order_nx.clone()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmsConfig {
    #[serde(default)]
    pub name: String,
    #[serde(flatten)]
    pub scheme: Scheme,
    pub resolutions: Vec<usize>,
    pub cfl: f64,
    #[serde(default)]
    pub t_test: Option<f64>,
}

/// Name used for the default output directory.
pub fn stem(name: &str, path: &Path) -> String {
    if !name.is_empty() {
        return name.to_string();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".to_string())
}
