//! Independent numerical references: a Crank–Nicolson heat solver for the
//! boundary-driven series solution, and a time-domain stochastic simulation
//! with Welch averaging for the transfer spectrum.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::cmc::{CmcParams, LinearizedSystem, StateVector};
use crate::error::{Error, Result};
use crate::field::{BoundaryDrive, DomainShape, DomainSpec, HeatSolution};

/// Crank–Nicolson solution of `u_t = α² u_xx` with time-dependent Dirichlet
/// values on an interval, on a grid of spacing close to `dx`.
pub fn fd_heat_oracle(
    domain: &DomainSpec,
    drive: &BoundaryDrive<'_>,
    dx: f64,
    dt: f64,
    t: f64,
) -> Result<HeatSolution> {
    let length = match domain.shape {
        DomainShape::Interval { length } => length,
        DomainShape::Rectangle { .. } => {
            return Err(Error::UnsupportedDomain("heat oracle is 1D only".into()))
        }
    };
    if !(dx > 0.0 && dt > 0.0 && t >= 0.0) {
        return Err(Error::InvalidArgument("dx, dt must be > 0 and t >= 0".into()));
    }
    let cells = (length / dx).round().max(2.0) as usize;
    let h = length / cells as f64;
    let steps = (t / dt).ceil() as usize;
    let x: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
    let mut u: Vec<f64> = x.iter().map(|&x| (drive.f0)(x)).collect();
    u[0] = (drive.phi0)(0.0);
    u[cells] = (drive.phi1)(0.0);
    if steps == 0 {
        return Ok(HeatSolution { x, u });
    }
    let tau = t / steps as f64;
    let r = domain.alpha * domain.alpha * tau / (h * h);
    let interior = cells - 1;

    // (1 + r) u_i − r/2 (u_{i−1} + u_{i+1}) = explicit half-step
    let diag = 1.0 + r;
    let off = -0.5 * r;
    let mut rhs = vec![0.0; interior];
    let mut c_prime = vec![0.0; interior];
    let mut d_prime = vec![0.0; interior];
    for n in 0..steps {
        let t_next = (n + 1) as f64 * tau;
        let (l_new, r_new) = ((drive.phi0)(t_next), (drive.phi1)(t_next));
        for i in 1..cells {
            rhs[i - 1] = u[i] + 0.5 * r * (u[i - 1] - 2.0 * u[i] + u[i + 1]);
        }
        rhs[0] += 0.5 * r * l_new;
        rhs[interior - 1] += 0.5 * r * r_new;
        // Thomas algorithm
        c_prime[0] = off / diag;
        d_prime[0] = rhs[0] / diag;
        for i in 1..interior {
            let m = diag - off * c_prime[i - 1];
            c_prime[i] = off / m;
            d_prime[i] = (rhs[i] - off * d_prime[i - 1]) / m;
        }
        u[interior] = d_prime[interior - 1];
        for i in (0..interior - 1).rev() {
            u[i + 1] = d_prime[i] - c_prime[i] * u[i + 2];
        }
        u[0] = l_new;
        u[cells] = r_new;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::OracleFailure(format!("non-finite value at step {}", n + 1)));
        }
    }
    Ok(HeatSolution { x, u })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOracleSettings {
    /// Euler–Maruyama step in seconds.
    pub dt: f64,
    /// Simulated duration after burn-in, in seconds.
    pub duration: f64,
    pub burn_in: f64,
    /// Welch segment length in seconds (Hann window, 50% overlap).
    pub segment: f64,
    pub seed: u64,
}

impl Default for SpectrumOracleSettings {
    fn default() -> Self {
        SpectrumOracleSettings {
            dt: 1e-4,
            duration: 2000.0,
            burn_in: 1.0,
            segment: 2.0,
            seed: 1,
        }
    }
}

/// Welch estimate of the two-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct WelchEstimate {
    pub freqs_hz: Vec<f64>,
    pub psd: Vec<f64>,
    pub segments: usize,
}

impl WelchEstimate {
    /// Linear interpolation between bins.
    pub fn at(&self, f: f64) -> f64 {
        let df = self.freqs_hz[1] - self.freqs_hz[0];
        let pos = f / df;
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        if i + 1 >= self.psd.len() {
            return self.psd[self.psd.len() - 1];
        }
        (1.0 - w) * self.psd[i] + w * self.psd[i + 1]
    }
}

struct Welch {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    norm: f64,
    acc: Vec<f64>,
    scratch: Vec<Complex<f64>>,
    segments: usize,
}

impl Welch {
    fn new(len: usize, dt: f64) -> Self {
        let window: Vec<f64> = (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
            .collect();
        let energy: f64 = window.iter().map(|w| w * w).sum();
        Welch {
            fft: FftPlanner::new().plan_fft_forward(len),
            norm: dt / energy,
            window,
            acc: vec![0.0; len / 2 + 1],
            scratch: vec![Complex::new(0.0, 0.0); len],
            segments: 0,
        }
    }

    fn push(&mut self, segment: &[f64]) {
        for ((s, x), w) in self.scratch.iter_mut().zip(segment).zip(&self.window) {
            *s = Complex::new(x * w, 0.0);
        }
        self.fft.process(&mut self.scratch);
        for (a, s) in self.acc.iter_mut().zip(&self.scratch) {
            *a += s.norm_sqr();
        }
        self.segments += 1;
    }
}

/// Simulates `dx = Jx dt + b σ_u dW` by Euler–Maruyama and returns the Welch
/// PSD of the readout `cᵀx`.
pub fn simulate_spectrum(
    sys: &LinearizedSystem,
    params: &CmcParams,
    settings: &SpectrumOracleSettings,
) -> Result<WelchEstimate> {
    let SpectrumOracleSettings {
        dt,
        duration,
        burn_in,
        segment,
        seed,
    } = *settings;
    if !(dt > 0.0 && duration > 0.0 && segment > 0.0 && burn_in >= 0.0) {
        return Err(Error::InvalidArgument("oracle durations must be positive".into()));
    }
    let seg_len = (segment / dt).round() as usize;
    let hop = seg_len / 2;
    let total = (duration / dt).round() as usize;
    if seg_len < 4 || total < seg_len {
        return Err(Error::InvalidArgument("duration shorter than one segment".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step_matrix = sys.jacobian * dt;
    let kick = sys.input_vector * (params.sigma_u * dt.sqrt());
    let mut x = StateVector::zeros();
    let advance = |x: &mut StateVector, rng: &mut ChaCha8Rng| {
        let xi: f64 = StandardNormal.sample(rng);
        *x += step_matrix * *x + kick * xi;
    };
    for _ in 0..(burn_in / dt).round() as usize {
        advance(&mut x, &mut rng);
    }

    let mut welch = Welch::new(seg_len, dt);
    let mut buffer = Vec::with_capacity(seg_len);
    for _ in 0..total {
        advance(&mut x, &mut rng);
        buffer.push(sys.output_vector.dot(&x));
        if buffer.len() == seg_len {
            welch.push(&buffer);
            buffer.drain(..hop);
        }
        if !x[0].is_finite() {
            return Err(Error::OracleFailure("time-domain simulation diverged".into()));
        }
    }

    let df = 1.0 / (seg_len as f64 * dt);
    let scale = welch.norm / welch.segments as f64;
    Ok(WelchEstimate {
        freqs_hz: (0..welch.acc.len()).map(|k| k as f64 * df).collect(),
        psd: welch.acc.iter().map(|a| a * scale).collect(),
        segments: welch.segments,
    })
}

/// Comparison of the analytic spectrum with the simulation at its peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakComparison {
    pub peak_freq_hz: f64,
    pub analytic: f64,
    pub simulated: f64,
    pub relative_error: f64,
}

pub fn compare_at_peak(freqs: &[f64], analytic: &[f64], estimate: &WelchEstimate) -> PeakComparison {
    let (i, &peak) = analytic
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let simulated = estimate.at(freqs[i]);
    PeakComparison {
        peak_freq_hz: freqs[i],
        analytic: peak,
        simulated,
        relative_error: (simulated - peak).abs() / peak,
    }
}

/// `‖a − b‖₂ / ‖b‖₂`
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
