//! Variational-Laplace inversion of a single spectral window.
//!
//! The unknowns are the field coefficients followed by the g7 log-offset.
//! Observations are compared in log10 power with a single scalar noise
//! precision `e^h`. The mode is found by Levenberg–Marquardt damped
//! Gauss–Newton ascent and the posterior covariance is the inverse
//! Gauss–Newton curvature at the mode.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cmc::{self, CmcParams};
use crate::data::SpectralWindow;
use crate::error::{Error, Result};
use crate::field::{EigenBasis, Point};
use crate::filter::FilterConfig;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian belief over `[field coefficients..., g7 log-offset]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        GaussianBelief { mean, cov }
    }

    /// Independent prior with the given per-coordinate variances.
    pub fn diagonal(mean: Vec<f64>, variances: &[f64]) -> Self {
        GaussianBelief {
            mean: DVector::from_vec(mean),
            cov: DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Number of field coefficients (every coordinate but the last).
    pub fn n_field(&self) -> usize {
        self.dim().saturating_sub(1)
    }

    pub fn g7_log_offset(&self) -> f64 {
        self.mean[self.dim() - 1]
    }

    pub fn field_mean(&self) -> &[f64] {
        &self.mean.as_slice()[..self.n_field()]
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        self.cov[(i, i)].sqrt()
    }

    /// Cholesky factor of the covariance, after checking symmetry.
    pub fn cholesky(&self) -> std::result::Result<Cholesky<f64, Dyn>, String> {
        let n = self.dim();
        if n == 0 {
            return Err("empty belief".into());
        }
        if self.cov.nrows() != n || self.cov.ncols() != n {
            return Err(format!(
                "covariance is {}x{} for a mean of length {n}",
                self.cov.nrows(),
                self.cov.ncols()
            ));
        }
        if self.mean.iter().chain(self.cov.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite entries".into());
        }
        let scale = self.cov.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (self.cov[(i, j)] - self.cov[(j, i)]).abs() > 1e-10 * scale {
                    return Err(format!("covariance not symmetric at ({i}, {j})"));
                }
            }
        }
        Cholesky::new(self.cov.clone()).ok_or_else(|| "covariance is not positive definite".into())
    }

    /// Differential entropy `½ ln |2πe Σ|`.
    pub fn entropy(&self) -> f64 {
        let log_det = match Cholesky::new(self.cov.clone()) {
            Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => f64::NAN,
        };
        0.5 * (self.dim() as f64 * (LN_2PI + 1.0) + log_det)
    }
}

/// Scalar log-precision of log10-power residuals and its Gaussian hyperprior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseHyper {
    pub log_precision: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
}

impl Default for NoiseHyper {
    fn default() -> Self {
        NoiseHyper {
            log_precision: 4.0,
            prior_mean: 4.0,
            prior_var: 16.0,
        }
    }
}

impl NoiseHyper {
    fn validate(&self) -> Result<()> {
        if !(self.log_precision.is_finite() && self.prior_mean.is_finite())
            || !(self.prior_var.is_finite() && self.prior_var > 0.0)
        {
            return Err(Error::InvalidPrior(format!("bad noise hyperparameters {self:?}")));
        }
        Ok(())
    }
}

/// Optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlSettings {
    pub lm_initial: f64,
    /// Multiplier applied to the damping on rejection, divisor on acceptance.
    pub lm_factor: f64,
    /// Damping beyond which the search is declared stationary.
    pub lm_max: f64,
    pub fd_step: f64,
    pub tol_free_energy: f64,
    pub patience: usize,
    pub max_iterations: usize,
    pub regularization: f64,
}

impl Default for VlSettings {
    fn default() -> Self {
        VlSettings {
            lm_initial: 1e-2,
            lm_factor: 10.0,
            lm_max: 1e8,
            fd_step: 1e-3,
            tol_free_energy: 1e-3,
            patience: 3,
            max_iterations: 64,
            regularization: 1e-6,
        }
    }
}

/// Predicts log10 spectra, flattened channel-major, from a parameter vector.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    pub cmc: CmcParams,
    pub freqs_hz: Vec<f64>,
    /// `channels × modes` mode values at the electrodes.
    pub design: DMatrix<f64>,
}

impl SpectralModel {
    pub fn new(cmc: CmcParams, basis: &EigenBasis, positions: &[Point], freqs_hz: Vec<f64>) -> Result<Self> {
        cmc.validate()?;
        cmc::validate_freqs(&freqs_hz)?;
        Ok(SpectralModel {
            cmc,
            freqs_hz,
            design: basis.design_matrix(positions)?,
        })
    }

    pub fn n_params(&self) -> usize {
        self.design.ncols() + 1
    }

    pub fn n_data(&self) -> usize {
        self.design.nrows() * self.freqs_hz.len()
    }

    pub fn field_at_channels(&self, params: &DVector<f64>) -> DVector<f64> {
        let nf = self.design.ncols();
        &self.design * params.rows(0, nf)
    }

    pub fn predict(&self, params: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(params)?;
        let g7 = params[params.len() - 1];
        let theta = self.field_at_channels(params);
        let mut out = Vec::with_capacity(self.n_data());
        for (ch, &t) in theta.iter().enumerate() {
            out.extend(cmc::log10_spectrum(&self.cmc, t, g7, &self.freqs_hz).map_err(|e| e.in_channel(ch))?);
        }
        Ok(DVector::from_vec(out))
    }

    /// Exact Jacobian of [`SpectralModel::predict`].
    pub fn jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(params)?;
        let nf = self.design.ncols();
        let nfreq = self.freqs_hz.len();
        let g7 = params[params.len() - 1];
        let theta = self.field_at_channels(params);
        let mut jac = DMatrix::zeros(self.n_data(), self.n_params());
        for (ch, &t) in theta.iter().enumerate() {
            let s = cmc::log10_spectrum_sensitivity(&self.cmc, t, g7, &self.freqs_hz)
                .map_err(|e| e.in_channel(ch))?;
            for k in 0..nfreq {
                let row = ch * nfreq + k;
                for i in 0..nf {
                    jac[(row, i)] = self.design[(ch, i)] * s.d_theta[k];
                }
                jac[(row, nf)] = s.d_g7[k];
            }
        }
        Ok(jac)
    }

    /// Central finite-difference Jacobian with a fixed step per parameter.
    pub fn jacobian_fd(&self, params: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
        self.check_dim(params)?;
        let mut jac = DMatrix::zeros(self.n_data(), self.n_params());
        for i in 0..self.n_params() {
            let mut plus = params.clone();
            plus[i] += step;
            let mut minus = params.clone();
            minus[i] -= step;
            let col = (self.predict(&plus)? - self.predict(&minus)?) / (2.0 * step);
            jac.set_column(i, &col);
        }
        Ok(jac)
    }

    fn check_dim(&self, params: &DVector<f64>) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, model expects {}",
                params.len(),
                self.n_params()
            )));
        }
        Ok(())
    }
}

/// Prior-side quantities that stay fixed during one inversion.
struct PriorTerms {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    log_det_cov: f64,
}

impl PriorTerms {
    fn new(prior: &GaussianBelief) -> Result<Self> {
        let chol = prior.cholesky().map_err(Error::InvalidPrior)?;
        let log_det_cov = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(PriorTerms {
            mean: prior.mean.clone(),
            precision: chol.inverse(),
            log_det_cov,
        })
    }
}

/// Additive pieces of the log joint density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyTerms {
    /// `−½ e^h ‖ε‖² + ½ n h − ½ n ln 2π`
    pub accuracy: f64,
    /// `−½ (p − μ₀)ᵀ Σ₀⁻¹ (p − μ₀)`
    pub prior_penalty: f64,
    /// `−½ ln |2π Σ₀|`
    pub prior_normalizer: f64,
    /// Log density of `h` under its hyperprior.
    pub hyper: f64,
}

impl FreeEnergyTerms {
    pub fn total(&self) -> f64 {
        self.accuracy + self.prior_penalty + self.prior_normalizer + self.hyper
    }
}

fn terms(residual: &DVector<f64>, params: &DVector<f64>, prior: &PriorTerms, hyper: &NoiseHyper, h: f64) -> FreeEnergyTerms {
    let n = residual.len() as f64;
    let delta = params - &prior.mean;
    let d = prior.mean.len() as f64;
    FreeEnergyTerms {
        accuracy: -0.5 * h.exp() * residual.norm_squared() + 0.5 * n * h - 0.5 * n * LN_2PI,
        prior_penalty: -0.5 * delta.dot(&(&prior.precision * &delta)),
        prior_normalizer: -0.5 * (d * LN_2PI + prior.log_det_cov),
        hyper: -0.5 * (h - hyper.prior_mean).powi(2) / hyper.prior_var
            - 0.5 * (LN_2PI + hyper.prior_var.ln()),
    }
}

fn check_window(y: &SpectralWindow, cfg: &FilterConfig) -> Result<DVector<f64>> {
    y.validate()?;
    if y.positions.len() != cfg.positions.len()
        || y.positions
            .iter()
            .zip(&cfg.positions)
            .any(|(a, b)| (a[0] - b[0]).abs() > 1e-9 || (a[1] - b[1]).abs() > 1e-9)
    {
        return Err(Error::InvalidArgument(
            "window channel positions do not match the configured layout".into(),
        ));
    }
    if y.freqs_hz != cfg.freqs_hz {
        return Err(Error::InvalidArgument(
            "window frequencies do not match the configured grid".into(),
        ));
    }
    Ok(DVector::from_vec(y.log10_flat()))
}

/// Log joint density terms at `params` (field coefficients then g7 offset).
pub fn free_energy_terms(
    y: &SpectralWindow,
    params: &DVector<f64>,
    prior: &GaussianBelief,
    hyper: &NoiseHyper,
    cfg: &FilterConfig,
) -> Result<FreeEnergyTerms> {
    hyper.validate()?;
    let prior_terms = PriorTerms::new(prior)?;
    let data = check_window(y, cfg)?;
    let model = cfg.model()?;
    let residual = data - model.predict(params)?;
    Ok(terms(&residual, params, &prior_terms, hyper, hyper.log_precision))
}

/// Log joint density `ln p(y, params | h)` plus the hyperprior on `h`; the
/// objective maximized by [`invert_window`]. Higher is better.
pub fn free_energy(
    y: &SpectralWindow,
    params: &DVector<f64>,
    prior: &GaussianBelief,
    hyper: &NoiseHyper,
    cfg: &FilterConfig,
) -> Result<f64> {
    free_energy_terms(y, params, prior, hyper, cfg).map(|t| t.total())
}

/// Analytic gradient of [`free_energy`] with respect to the parameters.
pub fn free_energy_gradient(
    y: &SpectralWindow,
    params: &DVector<f64>,
    prior: &GaussianBelief,
    hyper: &NoiseHyper,
    cfg: &FilterConfig,
) -> Result<DVector<f64>> {
    hyper.validate()?;
    let prior_terms = PriorTerms::new(prior)?;
    let data = check_window(y, cfg)?;
    let model = cfg.model()?;
    let residual = data - model.predict(params)?;
    let jac = model.jacobian(params)?;
    Ok(jac.transpose() * residual * hyper.log_precision.exp()
        - &prior_terms.precision * (params - &prior_terms.mean))
}

/// `1 − SS_res / SS_tot` around the mean of the observations.
pub fn explained_variance(observed: &[f64], predicted: &[f64]) -> f64 {
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|o| (o - mean).powi(2)).sum();
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionReport {
    pub posterior: GaussianBelief,
    /// Laplace approximation to the log evidence.
    pub free_energy: f64,
    /// Objective value after every accepted iteration, starting at the prior mean.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The curvature was not positive definite and the covariance was regularized.
    pub regularized: bool,
    pub log_precision: f64,
    /// Model log10 spectra at the posterior mean, channel-major.
    pub predicted: Vec<f64>,
    pub observed: Vec<f64>,
    pub explained_variance: f64,
}

/// Maximizes the free energy of one window and returns the Laplace posterior.
pub fn invert_window(
    y: &SpectralWindow,
    prior: &GaussianBelief,
    hyper: &NoiseHyper,
    cfg: &FilterConfig,
) -> Result<InversionReport> {
    invert_inner(y, prior, hyper, cfg).map_err(|e| match e {
        e @ Error::Window { .. } => e,
        e => e.in_window(y.t),
    })
}

fn invert_inner(
    y: &SpectralWindow,
    prior: &GaussianBelief,
    hyper: &NoiseHyper,
    cfg: &FilterConfig,
) -> Result<InversionReport> {
    hyper.validate()?;
    let settings = cfg.vl;
    let prior_terms = PriorTerms::new(prior)?;
    let data = check_window(y, cfg)?;
    let model = cfg.model()?;
    if prior.dim() != model.n_params() {
        return Err(Error::InvalidPrior(format!(
            "prior has {} coordinates, model has {}",
            prior.dim(),
            model.n_params()
        )));
    }
    let n = data.len() as f64;
    let objective = |residual: &DVector<f64>, p: &DVector<f64>, h: f64| {
        terms(residual, p, &prior_terms, hyper, h).total()
    };

    let mut params = prior.mean.clone();
    let mut h = hyper.log_precision;
    let mut residual = &data - model.predict(&params)?;
    let mut current = objective(&residual, &params, h);
    let mut trace = vec![current];
    let mut lm = settings.lm_initial;
    let mut quiet_steps = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < settings.max_iterations {
        iterations += 1;
        let start = current;
        let jac = model.jacobian_fd(&params, settings.fd_step)?;
        let precision = h.exp();
        let grad = jac.transpose() * &residual * precision
            - &prior_terms.precision * (&params - &prior_terms.mean);
        let curvature = jac.transpose() * &jac * precision + &prior_terms.precision;

        let mut accepted = false;
        while lm <= settings.lm_max {
            let mut damped = curvature.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lm * curvature[(i, i)];
            }
            let trial = Cholesky::new(damped).map(|ch| &params + ch.solve(&grad));
            let outcome = trial.and_then(|p| {
                let r = model.predict(&p).ok().map(|g| &data - g)?;
                let f = objective(&r, &p, h);
                f.is_finite().then_some((p, r, f))
            });
            match outcome {
                Some((p, r, f)) if f > current => {
                    params = p;
                    residual = r;
                    current = f;
                    lm /= settings.lm_factor;
                    accepted = true;
                    break;
                }
                _ => lm *= settings.lm_factor,
            }
        }
        if !accepted {
            // No ascent direction survives heavy damping: stationary point.
            converged = true;
            break;
        }

        // Newton step on the concave log-precision objective, halved until it ascends.
        let sq = residual.norm_squared();
        let dh = 0.5 * n - 0.5 * h.exp() * sq - (h - hyper.prior_mean) / hyper.prior_var;
        let d2h = -0.5 * h.exp() * sq - 1.0 / hyper.prior_var;
        let mut step = -dh / d2h;
        for _ in 0..30 {
            let f = objective(&residual, &params, h + step);
            if f > current {
                h += step;
                current = f;
                break;
            }
            step *= 0.5;
        }

        trace.push(current);
        if current - start < settings.tol_free_energy {
            quiet_steps += 1;
            if quiet_steps >= settings.patience {
                converged = true;
                break;
            }
        } else {
            quiet_steps = 0;
        }
    }

    let jac = model.jacobian_fd(&params, settings.fd_step)?;
    let curvature = jac.transpose() * &jac * h.exp() + &prior_terms.precision;
    let curvature = (&curvature + curvature.transpose()) * 0.5;
    let (cov, regularized) = match Cholesky::new(curvature.clone()) {
        Some(ch) => (ch.inverse(), false),
        None => {
            log::warn!("window t = {}: curvature not positive definite, regularizing", y.t);
            let eig = SymmetricEigen::new(curvature);
            let floor = 1e-12 * eig.eigenvalues.amax().max(1e-300);
            let inv = eig.eigenvalues.map(|v| 1.0 / v.max(floor));
            let cov = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
            let dim = cov.nrows();
            (cov + DMatrix::identity(dim, dim) * settings.regularization, true)
        }
    };
    let cov = (&cov + cov.transpose()) * 0.5;
    let log_det_post = match Cholesky::new(cov.clone()) {
        Some(ch) => 2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => return Err(Error::NonFinite("posterior covariance".into())),
    };
    let hyper_curv = 0.5 * h.exp() * residual.norm_squared() + 1.0 / hyper.prior_var;
    let d = params.len() as f64;
    let free_energy =
        current + 0.5 * (d * LN_2PI + log_det_post) + 0.5 * (LN_2PI - hyper_curv.ln());

    let predicted = &data - &residual;
    let observed: Vec<f64> = data.iter().copied().collect();
    let predicted: Vec<f64> = predicted.iter().copied().collect();
    let explained_variance = explained_variance(&observed, &predicted);
    if !converged {
        log::warn!("window t = {}: no convergence after {iterations} iterations", y.t);
    }

    Ok(InversionReport {
        posterior: GaussianBelief::new(params, cov),
        free_energy,
        objective_trace: trace,
        iterations,
        converged: converged && !regularized,
        regularized,
        log_precision: h,
        predicted,
        observed,
        explained_variance,
    })
}
