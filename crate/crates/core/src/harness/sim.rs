//! Synthetic windowed spectra from a known excitability trajectory.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cmc::{forward_model, CmcParams};
use crate::data::ElectrodeLayout;
use crate::error::{Error, Result};
use crate::field::{
    build_basis, evaluate_field, heat_series, project_initial, BoundaryDrive, DomainShape,
    FieldCoeffs,
};
use crate::harness::io::{Dataset, Manifest, Truth, FORMAT_VERSION};

/// Uniform frequency grid `start, start + step, ..., stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            start: 1.0,
            stop: 60.0,
            step: 1.0,
        }
    }
}

impl FrequencyGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0 && self.step > 0.0 && self.stop >= self.start)
            || !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite())
        {
            return Err(Error::Config(format!("bad frequency grid {self:?}")));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

/// `offset + amplitude · sin(2π·freq·t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub freq_hz: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Waveform {
    pub fn constant(value: f64) -> Self {
        Waveform {
            offset: value,
            amplitude: 0.0,
            freq_hz: 0.0,
            phase: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.amplitude * (2.0 * std::f64::consts::PI * self.freq_hz * t + self.phase).sin()
    }
}

/// Ground-truth excitability scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// A Gaussian hotspot that drifts along a line while its amplitude rises
    /// to a peak and then collapses. Its projection onto the basis is the
    /// deterministic part of the coefficient trajectory.
    GaussianBump {
        start: [f64; 2],
        end: [f64; 2],
        width: f64,
        amplitude_start: f64,
        amplitude_peak: f64,
        amplitude_end: f64,
        /// Fraction of the recording at which the amplitude peaks.
        peak_fraction: f64,
    },
    /// Coefficients released from `initial` and left to decay.
    FreeDecay { initial: Vec<f64> },
    /// 1D field driven through its end points; needs a single-row layout.
    BoundaryDriven {
        phi0: Waveform,
        phi1: Waveform,
        initial_value: f64,
        solver_modes: usize,
    },
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::GaussianBump {
            start: [1.5, 1.3],
            end: [3.9, 2.9],
            width: 1.0,
            amplitude_start: 0.3,
            amplitude_peak: 1.2,
            amplitude_end: 0.3,
            peak_fraction: 0.8,
        }
    }
}

/// Simulation settings. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_layout")]
    pub layout: ElectrodeLayout,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
    #[serde(default = "default_windows")]
    pub n_windows: usize,
    #[serde(default = "default_dt")]
    pub dt_window: f64,
    #[serde(default)]
    pub freqs: FrequencyGrid,
    /// Number of spectra averaged per window; divides the observation
    /// noise variance.
    #[serde(default = "default_averaging")]
    pub averaging_count: usize,
    /// Standard deviation of a single spectrum's log10 power.
    #[serde(default = "default_obs_sd")]
    pub obs_noise_sd: f64,
    /// Per-mode variance of the coefficient innovations q_i.
    #[serde(default = "default_process_var")]
    pub process_noise_var: f64,
    /// Standard deviation of the white g7 log-offset sequence.
    #[serde(default = "default_g7_sd")]
    pub g7_noise_sd: f64,
    #[serde(default)]
    pub cmc: CmcParams,
    #[serde(default)]
    pub scenario: Scenario,
    pub seed: u64,
}

fn default_layout() -> ElectrodeLayout {
    ElectrodeLayout {
        rows: 4,
        cols: 5,
        spacing: 1.0,
    }
}
fn default_alpha() -> f64 {
    0.1
}
fn default_modes() -> usize {
    4
}
fn default_windows() -> usize {
    20
}
fn default_dt() -> f64 {
    1.0
}
fn default_averaging() -> usize {
    16
}
fn default_obs_sd() -> f64 {
    0.1
}
fn default_process_var() -> f64 {
    1e-3
}
fn default_g7_sd() -> f64 {
    0.1
}

pub const DEFAULT_SEED: u64 = 20_170_611;

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            layout: default_layout(),
            alpha: default_alpha(),
            n_modes: default_modes(),
            n_windows: default_windows(),
            dt_window: default_dt(),
            freqs: FrequencyGrid::default(),
            averaging_count: default_averaging(),
            obs_noise_sd: default_obs_sd(),
            process_noise_var: default_process_var(),
            g7_noise_sd: default_g7_sd(),
            cmc: CmcParams::default(),
            scenario: Scenario::default(),
            seed: DEFAULT_SEED,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.cmc.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.freqs.values()?;
        let mut problems = Vec::new();
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            problems.push("alpha must be >= 0");
        }
        if self.n_modes == 0 {
            problems.push("n_modes must be >= 1");
        }
        if self.n_windows == 0 {
            problems.push("n_windows must be >= 1");
        }
        if !(self.dt_window.is_finite() && self.dt_window > 0.0) {
            problems.push("dt_window must be > 0");
        }
        if self.averaging_count == 0 {
            problems.push("averaging_count must be >= 1");
        }
        for v in [self.obs_noise_sd, self.process_noise_var, self.g7_noise_sd] {
            if !(v.is_finite() && v >= 0.0) {
                problems.push("noise levels must be finite and >= 0");
                break;
            }
        }
        match &self.scenario {
            Scenario::GaussianBump {
                width, peak_fraction, ..
            } => {
                if width.is_nan() || *width <= 0.0 {
                    problems.push("bump width must be > 0");
                }
                if !(0.0..=1.0).contains(peak_fraction) {
                    problems.push("peak_fraction must lie in [0, 1]");
                }
            }
            Scenario::FreeDecay { initial } => {
                let expected = match self.layout.rows {
                    1 => self.n_modes,
                    _ => self.n_modes * self.n_modes,
                };
                if initial.len() != expected {
                    problems.push("free_decay initial coefficients must match the basis size");
                }
            }
            Scenario::BoundaryDriven { solver_modes, .. } => {
                if self.layout.rows != 1 {
                    problems.push("boundary_driven scenarios need a single-row layout");
                }
                if *solver_modes == 0 {
                    problems.push("solver_modes must be >= 1");
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

fn bump_amplitude(s: f64, start: f64, peak: f64, end: f64, peak_fraction: f64) -> f64 {
    if s <= peak_fraction && peak_fraction > 0.0 {
        start + (peak - start) * s / peak_fraction
    } else if peak_fraction < 1.0 {
        peak + (end - peak) * (s - peak_fraction) / (1.0 - peak_fraction)
    } else {
        peak
    }
}

/// Draws the ground-truth trajectory and the noisy spectra it produces.
pub fn simulate(cfg: &SimConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let domain = cfg.layout.domain(cfg.alpha);
    let positions = cfg.layout.positions();
    let freqs = cfg.freqs.values()?;
    let timestamps: Vec<f64> = (0..cfg.n_windows).map(|k| k as f64 * cfg.dt_window).collect();
    let basis = build_basis(domain, cfg.n_modes)?;

    // Ground truth: per-window excitability at the electrodes.
    let mut truth_field: Vec<Vec<f64>> = Vec::with_capacity(cfg.n_windows);
    let mut truth_coeffs: Option<Vec<Vec<f64>>> = None;
    match &cfg.scenario {
        Scenario::GaussianBump {
            start,
            end,
            width,
            amplitude_start,
            amplitude_peak,
            amplitude_end,
            peak_fraction,
        } => {
            let q_sd = cfg.process_noise_var.sqrt();
            let mut innovation = vec![0.0; basis.len()];
            let mut coeffs = Vec::with_capacity(cfg.n_windows);
            for k in 0..cfg.n_windows {
                let s = if cfg.n_windows > 1 { k as f64 / (cfg.n_windows - 1) as f64 } else { 0.0 };
                let amp = bump_amplitude(s, *amplitude_start, *amplitude_peak, *amplitude_end, *peak_fraction);
                let centre = [start[0] + s * (end[0] - start[0]), start[1] + s * (end[1] - start[1])];
                let two_w2 = 2.0 * width * width;
                let bump = |p: [f64; 2]| {
                    let dy = if matches!(domain.shape, DomainShape::Interval { .. }) { 0.0 } else { p[1] - centre[1] };
                    amp * (-((p[0] - centre[0]).powi(2) + dy * dy) / two_w2).exp()
                };
                let drive = project_initial(bump, &basis)?;
                // per-mode innovations decay between windows on top of the drive
                for (n, m) in innovation.iter_mut().zip(&basis.modes) {
                    *n = *n * (-m.decay_rate * cfg.dt_window).exp() + q_sd * std_normal.sample(&mut rng);
                }
                let c: Vec<f64> = drive.c.iter().zip(&innovation).map(|(d, n)| d + n).collect();
                truth_field.push(evaluate_field(&FieldCoeffs { c: c.clone() }, &basis, &positions)?);
                coeffs.push(c);
            }
            truth_coeffs = Some(coeffs);
        }
        Scenario::FreeDecay { initial } => {
            let q_sd = cfg.process_noise_var.sqrt();
            let mut c = initial.clone();
            let mut coeffs = Vec::with_capacity(cfg.n_windows);
            for k in 0..cfg.n_windows {
                if k > 0 {
                    for (ci, m) in c.iter_mut().zip(&basis.modes) {
                        *ci = *ci * (-m.decay_rate * cfg.dt_window).exp() + q_sd * std_normal.sample(&mut rng);
                    }
                }
                truth_field.push(evaluate_field(&FieldCoeffs { c: c.clone() }, &basis, &positions)?);
                coeffs.push(c.clone());
            }
            truth_coeffs = Some(coeffs);
        }
        Scenario::BoundaryDriven {
            phi0,
            phi1,
            initial_value,
            solver_modes,
        } => {
            let solver_basis = build_basis(domain, *solver_modes)?;
            let (p0, p1, f0) = (*phi0, *phi1, *initial_value);
            let drive = BoundaryDrive {
                phi0: Box::new(move |t| p0.eval(t)),
                phi1: Box::new(move |t| p1.eval(t)),
                f0: Box::new(move |_| f0),
            };
            for &t in &timestamps {
                let series = heat_series(&domain, &drive, &solver_basis, t)?;
                truth_field.push(positions.iter().map(|p| series.eval(p[0])).collect());
            }
        }
    }

    let g7: Vec<f64> = (0..cfg.n_windows)
        .map(|_| cfg.g7_noise_sd * std_normal.sample(&mut rng))
        .collect();

    let obs_sd = cfg.obs_noise_sd / (cfg.averaging_count as f64).sqrt();
    let mut windows = Vec::with_capacity(cfg.n_windows);
    for (k, field) in truth_field.iter().enumerate() {
        let spectra = forward_model(&cfg.cmc, field, g7[k], &freqs).map_err(|e| e.in_window(timestamps[k]))?;
        let power: Vec<Vec<f64>> = spectra
            .into_iter()
            .map(|s| {
                s.power
                    .into_iter()
                    .map(|p| 10f64.powf(p.log10() + obs_sd * std_normal.sample(&mut rng)))
                    .collect()
            })
            .collect();
        windows.push(power);
    }

    Ok(Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            layout: cfg.layout,
            domain,
            channel_ids: cfg.layout.channel_ids(),
            freqs_hz: freqs,
            timestamps,
            config: Some(cfg.clone()),
            has_truth: true,
        },
        windows,
        truth: Some(Truth {
            field: truth_field,
            g7_log_offset: g7,
            coeffs: truth_coeffs,
        }),
    })
}
