//! JSON-facing inversion settings and their expansion into a [`FilterConfig`].

use serde::{Deserialize, Serialize};

use crate::cmc::CmcParams;
use crate::error::{Error, Result};
use crate::field::build_basis;
use crate::filter::FilterConfig;
use crate::harness::io::Manifest;
use crate::vl::{GaussianBelief, NoiseHyper, VlSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    /// Modes per axis.
    pub n_modes: usize,
    /// Overrides the diffusion coefficient recorded in the dataset.
    pub alpha: Option<f64>,
    /// Per-mode volatility variance added at each step.
    pub volatility: f64,
    pub g7_walk_var: f64,
    /// Initial prior variance of every field coefficient.
    pub init_field_var: f64,
    pub init_g7_var: f64,
    pub hyper: NoiseHyper,
    pub vl: VlSettings,
    /// Microcircuit parameters; falls back to the dataset's simulation
    /// config, then to the defaults.
    pub cmc: Option<CmcParams>,
    pub paper_literal_prediction: bool,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            n_modes: 4,
            alpha: None,
            volatility: 0.05,
            g7_walk_var: 0.05,
            init_field_var: 1.0,
            init_g7_var: 0.1,
            hyper: NoiseHyper::default(),
            vl: VlSettings::default(),
            cmc: None,
            paper_literal_prediction: false,
        }
    }
}

impl FilterSettings {
    /// Filter configuration and initial belief for a dataset.
    pub fn build(&self, manifest: &Manifest) -> Result<(FilterConfig, GaussianBelief)> {
        if self.n_modes == 0 {
            return Err(Error::Config("n_modes must be >= 1".into()));
        }
        for (name, v) in [
            ("volatility", self.volatility),
            ("g7_walk_var", self.g7_walk_var),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        for (name, v) in [
            ("init_field_var", self.init_field_var),
            ("init_g7_var", self.init_g7_var),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0")));
            }
        }
        let mut domain = manifest.domain;
        if let Some(alpha) = self.alpha {
            domain.alpha = alpha;
        }
        let basis = build_basis(domain, self.n_modes).map_err(|e| Error::Config(e.to_string()))?;
        let dt_window = match manifest.timestamps.as_slice() {
            [a, b, ..] => b - a,
            _ => 1.0,
        };
        let cmc = self
            .cmc
            .or_else(|| manifest.config.as_ref().map(|c| c.cmc))
            .unwrap_or_default();
        let n = basis.len();
        let cfg = FilterConfig {
            dt_window,
            positions: manifest.layout.positions(),
            freqs_hz: manifest.freqs_hz.clone(),
            cmc,
            volatility: vec![self.volatility; n],
            g7_walk_var: self.g7_walk_var,
            hyper: self.hyper,
            vl: self.vl,
            paper_literal_prediction: self.paper_literal_prediction,
            basis,
        };
        cfg.validate()?;
        let mut variances = vec![self.init_field_var; n];
        variances.push(self.init_g7_var);
        let init = GaussianBelief::diagonal(vec![0.0; n + 1], &variances);
        Ok((cfg, init))
    }
}
