//! Sequential belief updating across windows.
//!
//! The posterior of one window becomes the prior of the next after pushing
//! it through the field dynamics: field coefficients decay as `e^{−λΔ}`,
//! the g7 log-offset follows a random walk, and the covariance is inflated
//! by the volatility `R`.

use nalgebra::{DMatrix, DVector};

use crate::cmc::CmcParams;
use crate::data::SpectralWindow;
use crate::error::{Error, Result};
use crate::field::{evaluate_field, EigenBasis, FieldCoeffs, Point};
use crate::vl::{invert_window, GaussianBelief, InversionReport, NoiseHyper, SpectralModel, VlSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Spacing Δ between window midpoints, in seconds.
    pub dt_window: f64,
    pub basis: EigenBasis,
    /// Electrode positions, in channel order.
    pub positions: Vec<Point>,
    pub freqs_hz: Vec<f64>,
    pub cmc: CmcParams,
    /// Per-mode variance added to the field coefficients at each step.
    pub volatility: Vec<f64>,
    /// Per-step random-walk variance of the g7 log-offset.
    pub g7_walk_var: f64,
    /// Hyperprior on the log noise precision.
    pub hyper: NoiseHyper,
    pub vl: VlSettings,
    /// Use `Q + R` for the predicted covariance instead of `D Q Dᵀ + R`.
    pub paper_literal_prediction: bool,
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_window.is_finite() && self.dt_window > 0.0) {
            return Err(Error::Config(format!("dt_window must be > 0, got {}", self.dt_window)));
        }
        if self.volatility.len() != self.basis.len() {
            return Err(Error::Config(format!(
                "volatility has {} entries for {} modes",
                self.volatility.len(),
                self.basis.len()
            )));
        }
        if self
            .volatility
            .iter()
            .chain(std::iter::once(&self.g7_walk_var))
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("volatility entries must be >= 0".into()));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.basis.len() + 1
    }

    pub fn model(&self) -> Result<SpectralModel> {
        SpectralModel::new(self.cmc, &self.basis, &self.positions, self.freqs_hz.clone())
    }

    /// The volatility covariance `R` over `[modes..., g7]`.
    pub fn volatility_matrix(&self) -> DMatrix<f64> {
        let mut diag = self.volatility.clone();
        diag.push(self.g7_walk_var);
        DMatrix::from_diagonal(&DVector::from_vec(diag))
    }

    /// Diagonal of the decay map `D` for a step `dt` (1 on the g7 coordinate).
    pub fn decay_map(&self, dt: f64) -> DVector<f64> {
        let mut d: Vec<f64> = self
            .basis
            .modes
            .iter()
            .map(|m| (-m.decay_rate * dt).exp())
            .collect();
        d.push(1.0);
        DVector::from_vec(d)
    }
}

/// Prior for the next window, one `dt_window` ahead.
pub fn predict_prior(post: &GaussianBelief, cfg: &FilterConfig) -> Result<GaussianBelief> {
    predict_prior_over(post, cfg, cfg.dt_window)
}

/// Prior for a window `dt` ahead of `post`.
pub fn predict_prior_over(post: &GaussianBelief, cfg: &FilterConfig, dt: f64) -> Result<GaussianBelief> {
    cfg.validate()?;
    post.cholesky().map_err(Error::InvalidBelief)?;
    if post.dim() != cfg.n_params() {
        return Err(Error::InvalidBelief(format!(
            "belief has {} coordinates, configuration expects {}",
            post.dim(),
            cfg.n_params()
        )));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    let d = cfg.decay_map(dt);
    let mean = post.mean.component_mul(&d);
    let pushed = if cfg.paper_literal_prediction {
        post.cov.clone()
    } else {
        DMatrix::from_fn(post.dim(), post.dim(), |i, j| d[i] * post.cov[(i, j)] * d[j])
    };
    Ok(GaussianBelief::new(mean, pushed + cfg.volatility_matrix()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEntry {
    pub t: f64,
    pub prior: GaussianBelief,
    pub report: InversionReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeliefTrajectory {
    pub entries: Vec<TrajectoryEntry>,
}

impl BeliefTrajectory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `1 − ΣSS_res / ΣSS_tot` pooled over windows (each window's SS_tot
    /// taken around its own mean).
    pub fn total_explained_variance(&self) -> f64 {
        let (mut res, mut tot) = (0.0, 0.0);
        for e in &self.entries {
            let obs = &e.report.observed;
            let mean = obs.iter().sum::<f64>() / obs.len() as f64;
            tot += obs.iter().map(|o| (o - mean).powi(2)).sum::<f64>();
            res += obs
                .iter()
                .zip(&e.report.predicted)
                .map(|(o, p)| (o - p).powi(2))
                .sum::<f64>();
        }
        1.0 - res / tot
    }
}

/// Runs prediction and inversion over every window in order.
pub fn run_filter(
    windows: &[SpectralWindow],
    init: &GaussianBelief,
    cfg: &FilterConfig,
) -> Result<BeliefTrajectory> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("no windows to filter".into()));
    }
    if windows.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::InvalidArgument("window timestamps must be strictly increasing".into()));
    }
    cfg.validate()?;

    let mut hyper = cfg.hyper;
    let mut entries: Vec<TrajectoryEntry> = Vec::with_capacity(windows.len());
    for window in windows {
        let prior = match entries.last() {
            None => init.clone(),
            Some(prev) => predict_prior_over(&prev.report.posterior, cfg, window.t - prev.t)
                .map_err(|e| e.in_window(window.t))?,
        };
        let report = invert_window(window, &prior, &hyper, cfg)?;
        if !report.converged {
            log::warn!("window t = {} did not converge; continuing", window.t);
        }
        hyper.log_precision = report.log_precision;
        entries.push(TrajectoryEntry {
            t: window.t,
            prior,
            report,
        });
    }
    Ok(BeliefTrajectory { entries })
}

/// Posterior-mean field of every window evaluated on `grid`.
pub fn field_movie(traj: &BeliefTrajectory, basis: &EigenBasis, grid: &[Point]) -> Result<Vec<Vec<f64>>> {
    traj.entries
        .iter()
        .map(|e| {
            let coeffs = FieldCoeffs {
                c: e.report.posterior.field_mean().to_vec(),
            };
            evaluate_field(&coeffs, basis, grid)
        })
        .collect()
}
