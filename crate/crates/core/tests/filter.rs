mod common;

use common::{small_config, unit_prior, window_at};
use cortifield::filter::predict_prior_over;
use cortifield::harness::io::{read_results, write_results};
use cortifield::{
    build_basis, field_movie, predict_prior, run_filter, DomainSpec, FilterSettings, GaussianBelief,
    ResultsBundle,
};
use nalgebra::{DMatrix, DVector};

fn two_mode_config() -> cortifield::FilterConfig {
    let mut cfg = small_config();
    // decay rates 1 and 4
    cfg.basis = build_basis(DomainSpec::interval(std::f64::consts::PI, 1.0), 2).unwrap();
    cfg.volatility = vec![0.01, 0.02];
    cfg.g7_walk_var = 0.03;
    cfg
}

fn spd(n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| ((i * 3 + j * 5) % 7) as f64 / 7.0 - 0.4);
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

#[test]
fn mean_decays_by_closed_form_exponentials() {
    let mut cfg = two_mode_config();
    cfg.dt_window = std::f64::consts::LN_2;
    let post = GaussianBelief::new(DVector::from_vec(vec![1.0, 1.0, 0.3]), spd(3));
    let prior = predict_prior(&post, &cfg).unwrap();
    for (a, b) in prior.mean.iter().zip([0.5, 0.0625, 0.3]) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn covariance_is_decayed_plus_volatility() {
    let cfg = two_mode_config();
    let q = spd(3);
    let post = GaussianBelief::new(DVector::from_vec(vec![0.2, -0.1, 0.0]), q.clone());
    let prior = predict_prior(&post, &cfg).unwrap();
    let d = cfg.decay_map(cfg.dt_window);
    let dqd = DMatrix::from_fn(3, 3, |i, j| d[i] * q[(i, j)] * d[j]);
    let r = cfg.volatility_matrix();
    assert_eq!(prior.cov, &dqd + &r);
    let residual = &prior.cov - &dqd - &r;
    assert!(residual.amax() <= 4.0 * f64::EPSILON * prior.cov.amax());

    let mut literal = cfg.clone();
    literal.paper_literal_prediction = true;
    assert_eq!(predict_prior(&post, &literal).unwrap().cov, &q + &r);
}

#[test]
fn vanishing_step_adds_only_volatility() {
    let mut cfg = two_mode_config();
    cfg.dt_window = 1e-12;
    let post = GaussianBelief::new(DVector::from_vec(vec![0.7, -0.4, 0.1]), spd(3));
    let prior = predict_prior(&post, &cfg).unwrap();
    assert!((&prior.mean - &post.mean).amax() < 1e-10);
    assert!((&prior.cov - (&post.cov + cfg.volatility_matrix())).amax() < 1e-10);

    let mut still = cfg.clone();
    still.volatility = vec![0.0; 2];
    still.g7_walk_var = 0.0;
    assert_eq!(predict_prior_over(&post, &still, 0.0).unwrap(), post);
}

#[test]
fn prediction_rejects_bad_beliefs() {
    let cfg = two_mode_config();
    let asym = GaussianBelief::new(DVector::zeros(3), DMatrix::from_row_slice(3, 3, &[1., 0.5, 0., 0., 1., 0., 0., 0., 1.]));
    assert!(matches!(predict_prior(&asym, &cfg), Err(cortifield::Error::InvalidBelief(_))));
    let wrong_dim = GaussianBelief::diagonal(vec![0.0; 2], &[1.0, 1.0]);
    assert!(predict_prior(&wrong_dim, &cfg).is_err());
}

#[test]
fn single_window_uses_the_initial_prior() {
    let cfg = small_config();
    let init = unit_prior(&cfg);
    let y = window_at(&cfg, &[0.1, 0.0, 0.0, 0.0, 0.0], 0.0, 0.01, 5);
    let traj = run_filter(&[y], &init, &cfg).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.entries[0].prior, init);
    assert!(run_filter(&[], &init, &cfg).is_err());
}

#[test]
fn repeated_windows_stay_near_the_generator() {
    let cfg = small_config();
    let init = unit_prior(&cfg);
    let windows: Vec<_> = (0..10)
        .map(|k| window_at(&cfg, init.mean.as_slice(), k as f64, 1e-4, 100 + k))
        .collect();
    let traj = run_filter(&windows, &init, &cfg).unwrap();
    for e in &traj.entries {
        let post = &e.report.posterior;
        for i in 0..post.dim() {
            assert!((post.mean[i] - init.mean[i]).abs() < 3.0 * post.std_dev(i));
        }
    }
}

#[test]
fn entropy_never_grows_without_volatility() {
    let mut cfg = small_config();
    cfg.volatility = vec![0.0; cfg.basis.len()];
    cfg.g7_walk_var = 0.0;
    let init = unit_prior(&cfg);
    let y = window_at(&cfg, &[0.3, -0.2, 0.1, 0.0, 0.05], 0.0, 0.05, 9);
    let windows: Vec<_> = (0..6).map(|k| cortifield::SpectralWindow { t: k as f64, ..y.clone() }).collect();
    let traj = run_filter(&windows, &init, &cfg).unwrap();
    let h: Vec<f64> = traj.entries.iter().map(|e| e.report.posterior.entropy()).collect();
    assert!(h.windows(2).all(|w| w[1] <= w[0]), "{h:?}");
}

#[test]
fn trajectory_survives_the_results_format() {
    let cfg = small_config();
    let init = unit_prior(&cfg);
    let windows: Vec<_> = (0..3)
        .map(|k| window_at(&cfg, &[0.2 * k as f64, 0.1, 0.0, -0.1, 0.0], k as f64, 0.02, k))
        .collect();
    let traj = run_filter(&windows, &init, &cfg).unwrap();
    let bundle = ResultsBundle::new(&traj, "fp".into(), FilterSettings::default());
    let dir = tempfile::tempdir().unwrap();
    write_results(&bundle, dir.path()).unwrap();
    let back = read_results(dir.path()).unwrap().trajectory().unwrap();
    assert_eq!(back.len(), traj.len());
    for (a, b) in back.entries.iter().zip(&traj.entries) {
        let close = |x: &DMatrix<f64>, y: &DMatrix<f64>| (x - y).amax() <= 1e-12;
        assert!(close(&a.prior.cov, &b.prior.cov) && close(&a.report.posterior.cov, &b.report.posterior.cov));
        assert!((&a.report.posterior.mean - &b.report.posterior.mean).amax() <= 1e-12);
        assert_eq!(a.report.predicted, b.report.predicted);
    }
}

#[test]
fn movie_at_electrodes_matches_posterior_field() {
    let cfg = small_config();
    let init = unit_prior(&cfg);
    let y = window_at(&cfg, &[0.3, 0.0, 0.1, 0.0, 0.0], 0.0, 0.01, 1);
    let traj = run_filter(&[y], &init, &cfg).unwrap();
    let maps = field_movie(&traj, &cfg.basis, &cfg.positions).unwrap();
    let model = cfg.model().unwrap();
    let direct = model.field_at_channels(&traj.entries[0].report.posterior.mean);
    assert_eq!(maps[0], direct.as_slice());

    let zero = cortifield::BeliefTrajectory {
        entries: vec![cortifield::filter::TrajectoryEntry {
            report: cortifield::InversionReport {
                posterior: init.clone(),
                ..traj.entries[0].report.clone()
            },
            ..traj.entries[0].clone()
        }],
    };
    assert!(field_movie(&zero, &cfg.basis, &cfg.positions).unwrap()[0].iter().all(|v| *v == 0.0));
}
