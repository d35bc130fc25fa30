use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityStep {
    pub k: u32,
    pub max_dev_i: f64,
    pub max_dev_j: f64,
    /// Largest |limit| over nodes, for relative deviations.
    pub scale_i: f64,
    pub scale_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub observable: String,
    pub steps: Vec<DensityStep>,
    pub slope_i: Option<f64>,
    pub slope_j: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramStep {
    pub twist: String,
    pub k: u32,
    pub dim: usize,
    pub mu: Vec<f64>,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToeplitzStep {
    pub symbol: String,
    pub k: u32,
    pub dim: usize,
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub scenario: String,
    pub densities: Vec<DensitySummary>,
    pub gram: Vec<GramStep>,
    pub toeplitz: Vec<ToeplitzStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub experiment: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub files: Vec<OutputFile>,
    pub stages: Vec<StageTime>,
}
