//! Versioned JSON outputs.

use cooplearn_core::coop::CoopFit;
use cooplearn_core::selection::{AdaptiveState, CvResult, Selection};
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

/// Any output body tagged with `"schema": 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self { schema: SCHEMA, body }
    }
}

/// Contents of `fit.json`: the final fit plus how it was chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub fit: CoopFit,
    pub selection: Selection,
    pub seed: u64,
    pub k_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty_factors: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paired_discrepancy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSummary {
    pub states: Vec<AdaptiveState>,
    pub ratios: Vec<f64>,
    pub clamped: Vec<f64>,
}

/// Contents of `cv.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub seed: u64,
    pub cv: CvResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSidecar {
    pub params: cooplearn_core::sim::FactorSimParams,
    pub target_snr: f64,
    pub realized_snr: f64,
    pub n_train: usize,
    pub n_test: usize,
}
