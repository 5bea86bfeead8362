//! Run configuration: a JSON file merged with command-line flags (flags win).

use std::path::PathBuf;

use cooplearn_core::data::Family;
use cooplearn_core::selection::{SelectionRule, DEFAULT_RHO_GRID};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub view_paths: Vec<PathBuf>,
    pub response_path: Option<PathBuf>,
    pub family: Family,
    pub rho_grid: Vec<f64>,
    pub n_lambda: usize,
    pub min_ratio: Option<f64>,
    pub alpha_mix: f64,
    pub k_folds: usize,
    pub seed: u64,
    pub rule: SelectionRule,
    pub adaptive: bool,
    pub pairs_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub header: bool,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            view_paths: Vec::new(),
            response_path: None,
            family: Family::Gaussian,
            rho_grid: DEFAULT_RHO_GRID.to_vec(),
            n_lambda: 50,
            min_ratio: None,
            alpha_mix: 1.0,
            k_folds: 10,
            seed: 1,
            rule: SelectionRule::Min,
            adaptive: false,
            pairs_path: None,
            output_dir: PathBuf::from("out"),
            header: true,
            workers: None,
        }
    }
}

/// Flag values; `None` leaves the file (or default) value in place.
#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub view_paths: Option<Vec<PathBuf>>,
    pub response_path: Option<PathBuf>,
    pub family: Option<Family>,
    pub rho_grid: Option<Vec<f64>>,
    pub n_lambda: Option<usize>,
    pub min_ratio: Option<f64>,
    pub alpha_mix: Option<f64>,
    pub k_folds: Option<usize>,
    pub seed: Option<u64>,
    pub rule: Option<SelectionRule>,
    pub adaptive: bool,
    pub pairs_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub no_header: bool,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn merge(mut self, o: RunOverrides) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        take!(view_paths, family, rho_grid, n_lambda, alpha_mix, k_folds, seed, rule, output_dir);
        if o.response_path.is_some() {
            self.response_path = o.response_path;
        }
        if o.min_ratio.is_some() {
            self.min_ratio = o.min_ratio;
        }
        if o.pairs_path.is_some() {
            self.pairs_path = o.pairs_path;
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
        if o.adaptive {
            self.adaptive = true;
        }
        if o.no_header {
            self.header = false;
        }
        self
    }

    /// Checks fields that can be checked without reading the data.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.view_paths.is_empty() {
            return Err(CliError::config("view_paths: at least one view file is required"));
        }
        for p in &self.view_paths {
            if !p.is_file() {
                return Err(CliError::config(format!("view_paths: file not found: {}", p.display())));
            }
        }
        match &self.response_path {
            None => return Err(CliError::config("response_path: required")),
            Some(p) if !p.is_file() => {
                return Err(CliError::config(format!("response_path: file not found: {}", p.display())))
            }
            _ => {}
        }
        if let Some(p) = &self.pairs_path {
            if !p.is_file() {
                return Err(CliError::config(format!("pairs_path: file not found: {}", p.display())));
            }
        }
        if self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(CliError::config("rho_grid: values must be finite and >= 0"));
        }
        if self.n_lambda == 0 {
            return Err(CliError::config("n_lambda: must be positive"));
        }
        if let Some(r) = self.min_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(CliError::config("min_ratio: must lie in (0, 1)"));
            }
        }
        if !(self.alpha_mix > 0.0 && self.alpha_mix <= 1.0) {
            return Err(CliError::config("alpha_mix: must lie in (0, 1]"));
        }
        if self.k_folds < 2 {
            return Err(CliError::config("k_folds: at least 2 folds are required"));
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers: must be positive"));
        }
        if self.adaptive && (self.view_paths.len() != 2 || self.family != Family::Gaussian) {
            return Err(CliError::config("adaptive: needs exactly two views and a gaussian response"));
        }
        Ok(())
    }
}
