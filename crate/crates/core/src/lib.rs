//! Estimation of a slowly diffusing excitability field from windowed power
//! spectra.
//!
//! Each electrode sees a canonical-microcircuit column whose excitatory gains
//! are scaled by a spatial field. The field is a truncated sine expansion of
//! the diffusion operator, and its coefficients are tracked across windows by
//! variational-Laplace inversion with belief propagation between windows.

pub mod cmc;
pub mod data;
pub mod error;
pub mod field;
pub mod filter;
pub mod harness;
pub mod vl;

mod quad;

pub use cmc::{
    firing_rate, forward_model, linearize, transfer_spectrum, CmcParams, LinearizedSystem,
    PowerSpectrum, SpectrumWarning,
};
pub use data::{ElectrodeLayout, SpectralWindow};
pub use error::{Error, ErrorClass, Result};
pub use field::{
    build_basis, evaluate_field, project_initial, propagate_coeffs, solve_heat_timedep,
    BoundaryDrive, DomainShape, DomainSpec, EigenBasis, FieldCoeffs, Point,
};
pub use filter::{field_movie, predict_prior, run_filter, BeliefTrajectory, FilterConfig};
pub use harness::io::{Dataset, ResultsBundle};
pub use harness::settings::FilterSettings;
pub use harness::sim::{simulate, SimConfig};
pub use vl::{
    free_energy, invert_window, GaussianBelief, InversionReport, NoiseHyper, VlSettings,
};
