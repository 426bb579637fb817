//! Canonical microcircuit (CMC) neural mass.
//!
//! Four populations (granular excitatory, inhibitory, superficial pyramidal,
//! deep pyramidal), each a damped second-order synaptic response
//!
//! ```text
//! ẍ + 2ẋ/T + x/T² = (1/T²) · Σ ± g · s(x_source)
//! ```
//!
//! The spatial excitability field `theta_sp` scales the gains g5, g6 and g8
//! by `exp(theta_sp)`. With the centered sigmoid the all-zero state is an
//! exact fixed point, so the model is linearized there and its steady-state
//! power spectrum is read off the resolvent.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_STATES: usize = 8;

pub type StateMatrix = SMatrix<f64, N_STATES, N_STATES>;
pub type StateVector = SVector<f64, N_STATES>;
type ComplexMatrix = SMatrix<Complex64, N_STATES, N_STATES>;
type ComplexVector = SVector<Complex64, N_STATES>;

/// The four subpopulations. The state vector stores `[x, ẋ]` per population
/// in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    Excitatory = 0,
    Inhibitory = 1,
    Superficial = 2,
    Deep = 3,
}

impl Population {
    pub const ALL: [Population; 4] = [
        Population::Excitatory,
        Population::Inhibitory,
        Population::Superficial,
        Population::Deep,
    ];

    pub fn position_index(self) -> usize {
        2 * self as usize
    }

    pub fn velocity_index(self) -> usize {
        2 * self as usize + 1
    }
}

/// Microcircuit parameters. `gains[k]` holds g_{k+1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmcParams {
    pub gains: [f64; 10],
    /// Time constants in seconds.
    pub te: f64,
    pub ti: f64,
    pub tsp: f64,
    pub tdp: f64,
    /// Sigmoid slope.
    pub rho: f64,
    /// Standard deviation of the white afferent drive.
    pub sigma_u: f64,
}

impl Default for CmcParams {
    fn default() -> Self {
        CmcParams {
            gains: [1.0; 10],
            te: 0.004,
            ti: 0.016,
            tsp: 0.002,
            tdp: 0.028,
            rho: 2.0 / 3.0,
            sigma_u: 1.0,
        }
    }
}

impl CmcParams {
    pub fn validate(&self) -> Result<()> {
        for (k, g) in self.gains.iter().enumerate() {
            if !(g.is_finite() && *g > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "g{} must be finite and > 0, got {g}",
                    k + 1
                )));
            }
        }
        let named = [
            ("Te", self.te),
            ("Ti", self.ti),
            ("Tsp", self.tsp),
            ("Tdp", self.tdp),
            ("rho", self.rho),
            ("sigma_u", self.sigma_u),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn time_constant(&self, pop: Population) -> f64 {
        match pop {
            Population::Excitatory => self.te,
            Population::Inhibitory => self.ti,
            Population::Superficial => self.tsp,
            Population::Deep => self.tdp,
        }
    }

    /// g_k, 1-based as in the usual CMC notation.
    pub fn g(&self, k: usize) -> f64 {
        self.gains[k - 1]
    }
}

/// Centered logistic `1/(1 + e^{-ρx}) - 1/2`.
pub fn firing_rate(x: f64, rho: f64) -> f64 {
    // tanh form avoids overflow for large |ρx|.
    0.5 * (0.5 * rho * x).tanh()
}

/// Nonlinear right-hand side of the first-order CMC system.
///
/// `input` is the afferent drive onto the granular population.
pub fn rhs(
    params: &CmcParams,
    theta_sp: f64,
    g7_log_offset: f64,
    state: &StateVector,
    input: f64,
) -> StateVector {
    let s = |x: f64| firing_rate(x, params.rho);
    let (xe, xi, xsp, xdp) = (state[0], state[2], state[4], state[6]);
    let scale = theta_sp.exp();
    let g = |k| params.g(k);
    let g7 = g7_log_offset.exp() * g(7);

    let drive_e = -g(1) * s(xe) - g(3) * s(xi) - g(2) * s(xsp) + input;
    let drive_i = scale * g(5) * s(xe) + scale * g(6) * s(xdp) - g(4) * s(xi);
    let drive_sp = scale * g(8) * s(xe) - g7 * s(xsp);
    let drive_dp = -g(10) * s(xdp) - g(9) * s(xi);

    let mut out = StateVector::zeros();
    for (pop, drive) in Population::ALL
        .into_iter()
        .zip([drive_e, drive_i, drive_sp, drive_dp])
    {
        let t = params.time_constant(pop);
        let (p, v) = (pop.position_index(), pop.velocity_index());
        out[p] = state[v];
        out[v] = (drive - state[p]) / (t * t) - 2.0 * state[v] / t;
    }
    out
}

/// One synaptic connection: `target` receives `sign · gain · s(source)`.
struct Coupling {
    target: Population,
    source: Population,
    gain: usize,
    sign: f64,
    field_scaled: bool,
}

const COUPLINGS: [Coupling; 10] = {
    use Population::*;
    const fn c(target: Population, source: Population, gain: usize, sign: f64, field_scaled: bool) -> Coupling {
        Coupling {
            target,
            source,
            gain,
            sign,
            field_scaled,
        }
    }
    [
        c(Excitatory, Excitatory, 1, -1.0, false),
        c(Excitatory, Superficial, 2, -1.0, false),
        c(Excitatory, Inhibitory, 3, -1.0, false),
        c(Inhibitory, Inhibitory, 4, -1.0, false),
        c(Inhibitory, Excitatory, 5, 1.0, true),
        c(Inhibitory, Deep, 6, 1.0, true),
        c(Superficial, Superficial, 7, -1.0, false),
        c(Superficial, Excitatory, 8, 1.0, true),
        c(Deep, Inhibitory, 9, -1.0, false),
        c(Deep, Deep, 10, -1.0, false),
    ]
};

/// Linearization of the CMC about its zero fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSystem {
    pub jacobian: StateMatrix,
    /// Drive enters on the granular velocity coordinate.
    pub input_vector: StateVector,
    /// Readout is the superficial pyramidal position.
    pub output_vector: StateVector,
}

impl LinearizedSystem {
    /// Largest real part over the Jacobian spectrum.
    pub fn max_real_eigenvalue(&self) -> f64 {
        self.jacobian
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_stable(&self) -> bool {
        self.max_real_eigenvalue() < 0.0
    }
}

fn effective_gain(params: &CmcParams, c: &Coupling, theta_sp: f64, g7_log_offset: f64) -> f64 {
    let mut gain = params.g(c.gain);
    if c.field_scaled {
        gain *= theta_sp.exp();
    }
    if c.gain == 7 {
        gain *= g7_log_offset.exp();
    }
    gain
}

/// Builds the Jacobian at the zero fixed point.
pub fn linearize(params: &CmcParams, theta_sp: f64) -> Result<LinearizedSystem> {
    linearize_with_g7(params, theta_sp, 0.0)
}

/// As [`linearize`], with g7 replaced by `exp(g7_log_offset) · g7`.
pub fn linearize_with_g7(
    params: &CmcParams,
    theta_sp: f64,
    g7_log_offset: f64,
) -> Result<LinearizedSystem> {
    params.validate()?;
    if !theta_sp.is_finite() {
        return Err(Error::InvalidParameter(format!("theta_sp = {theta_sp}")));
    }
    if !g7_log_offset.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "g7_log_offset = {g7_log_offset}"
        )));
    }
    let slope = params.rho / 4.0;
    let mut jacobian = StateMatrix::zeros();
    for pop in Population::ALL {
        let t = params.time_constant(pop);
        let (p, v) = (pop.position_index(), pop.velocity_index());
        jacobian[(p, v)] = 1.0;
        jacobian[(v, p)] = -1.0 / (t * t);
        jacobian[(v, v)] = -2.0 / t;
    }
    for c in &COUPLINGS {
        let t = params.time_constant(c.target);
        let row = c.target.velocity_index();
        let col = c.source.position_index();
        jacobian[(row, col)] +=
            c.sign * effective_gain(params, c, theta_sp, g7_log_offset) * slope / (t * t);
    }
    if jacobian.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "non-finite Jacobian at theta_sp = {theta_sp}"
        )));
    }

    let mut input_vector = StateVector::zeros();
    input_vector[Population::Excitatory.velocity_index()] = 1.0 / (params.te * params.te);
    let mut output_vector = StateVector::zeros();
    output_vector[Population::Superficial.position_index()] = 1.0;

    Ok(LinearizedSystem {
        jacobian,
        input_vector,
        output_vector,
    })
}

/// Derivatives of the Jacobian with respect to `theta_sp` and the g7 log-offset.
fn jacobian_derivatives(
    params: &CmcParams,
    theta_sp: f64,
    g7_log_offset: f64,
) -> (StateMatrix, StateMatrix) {
    let slope = params.rho / 4.0;
    let mut d_theta = StateMatrix::zeros();
    let mut d_g7 = StateMatrix::zeros();
    for c in &COUPLINGS {
        let t = params.time_constant(c.target);
        let entry =
            c.sign * effective_gain(params, c, theta_sp, g7_log_offset) * slope / (t * t);
        let idx = (c.target.velocity_index(), c.source.position_index());
        if c.field_scaled {
            d_theta[idx] += entry;
        }
        if c.gain == 7 {
            d_g7[idx] += entry;
        }
    }
    (d_theta, d_g7)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumWarning {
    /// The linearization has an eigenvalue with nonnegative real part; the
    /// spectrum of an unstable system is not a steady-state quantity.
    Unstable { max_real_part: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    pub freqs_hz: Vec<f64>,
    pub power: Vec<f64>,
    pub warning: Option<SpectrumWarning>,
}

pub(crate) fn validate_freqs(freqs: &[f64]) -> Result<()> {
    if freqs.is_empty() {
        return Err(Error::InvalidArgument("frequency grid is empty".into()));
    }
    if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::InvalidArgument(
            "frequencies must be finite and positive".into(),
        ));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "frequencies must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn resolvent(jacobian: &StateMatrix, freq_hz: f64) -> ComplexMatrix {
    let omega = 2.0 * std::f64::consts::PI * freq_hz;
    ComplexMatrix::from_fn(|r, c| {
        let diag = if r == c { Complex64::new(0.0, omega) } else { Complex64::new(0.0, 0.0) };
        diag - Complex64::new(jacobian[(r, c)], 0.0)
    })
}

fn complexify(v: &StateVector) -> ComplexVector {
    v.map(|x| Complex64::new(x, 0.0))
}

/// Complex frequency response `cᵀ (iωI − J)⁻¹ b` at each frequency.
fn frequency_response(sys: &LinearizedSystem, freqs: &[f64]) -> Result<Vec<Complex64>> {
    let b = complexify(&sys.input_vector);
    let c = complexify(&sys.output_vector);
    freqs
        .iter()
        .map(|&f| {
            let x = resolvent(&sys.jacobian, f)
                .lu()
                .solve(&b)
                .ok_or(Error::Singular { freq_hz: f })?;
            let g = c.dot(&x);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::Singular { freq_hz: f })
            }
        })
        .collect()
}

fn spectrum_values(sys: &LinearizedSystem, params: &CmcParams, freqs: &[f64]) -> Result<Vec<f64>> {
    let var = params.sigma_u * params.sigma_u;
    Ok(frequency_response(sys, freqs)?
        .into_iter()
        .map(|g| var * g.norm_sqr())
        .collect())
}

/// Two-sided steady-state power spectral density `σ_u² |cᵀ (i2πf·I − J)⁻¹ b|²`.
pub fn transfer_spectrum(
    sys: &LinearizedSystem,
    params: &CmcParams,
    freqs: &[f64],
) -> Result<PowerSpectrum> {
    validate_freqs(freqs)?;
    let power = spectrum_values(sys, params, freqs)?;
    let max_real_part = sys.max_real_eigenvalue();
    let warning = if max_real_part >= 0.0 {
        log::warn!("linearized CMC is unstable (max Re λ = {max_real_part:.4e})");
        Some(SpectrumWarning::Unstable { max_real_part })
    } else {
        None
    };
    Ok(PowerSpectrum {
        freqs_hz: freqs.to_vec(),
        power,
        warning,
    })
}

/// Per-channel model spectra. Each channel is an independent column driven
/// by its local excitability; the g7 log-offset is shared.
pub fn forward_model(
    params: &CmcParams,
    field_values: &[f64],
    g7_log_offset: f64,
    freqs: &[f64],
) -> Result<Vec<PowerSpectrum>> {
    validate_freqs(freqs)?;
    field_values
        .iter()
        .enumerate()
        .map(|(ch, &theta)| {
            linearize_with_g7(params, theta, g7_log_offset)
                .and_then(|sys| transfer_spectrum(&sys, params, freqs))
                .map_err(|e| e.in_channel(ch))
        })
        .collect()
}

/// log10 spectrum of one column without the stability check; used in the
/// inner loop of the inversion.
pub(crate) fn log10_spectrum(
    params: &CmcParams,
    theta_sp: f64,
    g7_log_offset: f64,
    freqs: &[f64],
) -> Result<Vec<f64>> {
    let sys = linearize_with_g7(params, theta_sp, g7_log_offset)?;
    let power = spectrum_values(&sys, params, freqs)?;
    power
        .into_iter()
        .zip(freqs)
        .map(|(p, &f)| {
            if p > 0.0 && p.is_finite() {
                Ok(p.log10())
            } else {
                Err(Error::Singular { freq_hz: f })
            }
        })
        .collect()
}

/// log10 spectrum of one column and its exact derivatives with respect to
/// `theta_sp` and the g7 log-offset.
#[derive(Debug, Clone)]
pub struct LogSpectrumSensitivity {
    pub log10_power: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_g7: Vec<f64>,
}

pub fn log10_spectrum_sensitivity(
    params: &CmcParams,
    theta_sp: f64,
    g7_log_offset: f64,
    freqs: &[f64],
) -> Result<LogSpectrumSensitivity> {
    validate_freqs(freqs)?;
    let sys = linearize_with_g7(params, theta_sp, g7_log_offset)?;
    let (dj_theta, dj_g7) = jacobian_derivatives(params, theta_sp, g7_log_offset);
    let dj_theta = dj_theta.map(|x| Complex64::new(x, 0.0));
    let dj_g7 = dj_g7.map(|x| Complex64::new(x, 0.0));
    let b = complexify(&sys.input_vector);
    let c = complexify(&sys.output_vector);
    let var = params.sigma_u * params.sigma_u;
    let ln10 = std::f64::consts::LN_10;

    let mut out = LogSpectrumSensitivity {
        log10_power: Vec::with_capacity(freqs.len()),
        d_theta: Vec::with_capacity(freqs.len()),
        d_g7: Vec::with_capacity(freqs.len()),
    };
    for &f in freqs {
        let lu = resolvent(&sys.jacobian, f).lu();
        let x = lu.solve(&b).ok_or(Error::Singular { freq_hz: f })?;
        // Row vector cᵀA⁻¹, obtained from Aᵀ w = c.
        let w = resolvent(&sys.jacobian, f)
            .transpose()
            .lu()
            .solve(&c)
            .ok_or(Error::Singular { freq_hz: f })?;
        let g = c.dot(&x);
        let power = var * g.norm_sqr();
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::Singular { freq_hz: f });
        }
        // dA⁻¹ = A⁻¹ dJ A⁻¹, so dG = wᵀ dJ x.
        let dg_theta = w.dot(&(dj_theta * x));
        let dg_g7 = w.dot(&(dj_g7 * x));
        let dlog = |dg: Complex64| 2.0 * (g.conj() * dg).re / (g.norm_sqr() * ln10);
        out.log10_power.push(power.log10());
        out.d_theta.push(dlog(dg_theta));
        out.d_g7.push(dlog(dg_g7));
    }
    Ok(out)
}
