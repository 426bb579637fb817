#![allow(dead_code)]

use cortifield::filter::FilterConfig;
use cortifield::{
    build_basis, forward_model, CmcParams, ElectrodeLayout, GaussianBelief, NoiseHyper, SpectralWindow,
    VlSettings,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn freqs() -> Vec<f64> {
    (1..=60).map(f64::from).collect()
}

/// 2×3 grid, 2 modes per axis: 4 field coefficients plus g7.
pub fn small_config() -> FilterConfig {
    let layout = ElectrodeLayout { rows: 2, cols: 3, spacing: 1.0 };
    let basis = build_basis(layout.domain(0.1), 2).unwrap();
    let n = basis.len();
    FilterConfig {
        dt_window: 1.0,
        basis,
        positions: layout.positions(),
        freqs_hz: freqs(),
        cmc: CmcParams::default(),
        volatility: vec![0.05; n],
        g7_walk_var: 0.05,
        hyper: NoiseHyper::default(),
        vl: VlSettings::default(),
        paper_literal_prediction: false,
    }
}

pub fn unit_prior(cfg: &FilterConfig) -> GaussianBelief {
    let mut v = vec![1.0; cfg.n_params()];
    *v.last_mut().unwrap() = 0.1;
    GaussianBelief::diagonal(vec![0.0; cfg.n_params()], &v)
}

/// Window generated at `params`, with log10 noise of standard deviation `sd`.
pub fn window_at(cfg: &FilterConfig, params: &[f64], t: f64, sd: f64, seed: u64) -> SpectralWindow {
    let model = cfg.model().unwrap();
    let field = model.field_at_channels(&DVector::from_column_slice(params));
    let spectra = forward_model(&cfg.cmc, field.as_slice(), params[params.len() - 1], &cfg.freqs_hz).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    SpectralWindow {
        t,
        positions: cfg.positions.clone(),
        freqs_hz: cfg.freqs_hz.clone(),
        power: spectra
            .into_iter()
            .map(|s| {
                s.power
                    .into_iter()
                    .map(|p| if sd > 0.0 { p * 10f64.powf(sd * noise.sample(&mut rng)) } else { p })
                    .collect()
            })
            .collect(),
    }
}
