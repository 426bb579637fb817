use cortifield::cmc::{rhs, StateMatrix, StateVector, N_STATES};
use cortifield::{forward_model, linearize, transfer_spectrum, CmcParams};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> Vec<f64> {
    (1..=60).map(f64::from).collect()
}

fn random_params(rng: &mut ChaCha8Rng) -> (CmcParams, f64) {
    let mut p = CmcParams::default();
    for g in p.gains.iter_mut() {
        *g = rng.random_range(0.3..3.0);
    }
    p.te = rng.random_range(0.002..0.01);
    p.ti = rng.random_range(0.008..0.03);
    p.tsp = rng.random_range(0.001..0.005);
    p.tdp = rng.random_range(0.01..0.05);
    p.rho = rng.random_range(0.3..1.5);
    (p, rng.random_range(-0.5..0.5))
}

/// Central differences of the nonlinear right-hand side at the origin.
fn fd_jacobian(p: &CmcParams, theta: f64) -> StateMatrix {
    let h = 1e-5;
    let mut j = StateMatrix::zeros();
    for c in 0..N_STATES {
        let mut plus = StateVector::zeros();
        let mut minus = StateVector::zeros();
        plus[c] = h;
        minus[c] = -h;
        let col = (rhs(p, theta, 0.0, &plus, 0.0) - rhs(p, theta, 0.0, &minus, 0.0)) / (2.0 * h);
        j.set_column(c, &col);
    }
    j
}

#[test]
fn jacobian_matches_finite_differences_for_random_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (p, theta) = random_params(&mut rng);
        let sys = linearize(&p, theta).unwrap();
        let fd = fd_jacobian(&p, theta);
        for (a, b) in sys.jacobian.iter().zip(fd.iter()) {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
            }
        }
    }
}

/// Characteristic polynomial coefficients (leading 1) by Faddeev–LeVerrier.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut c = 1.0;
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c;
        let am = a * &m;
        c = -am.trace() / k as f64;
        coeffs.push(c);
    }
    coeffs
}

/// Routh criterion: all roots in the open left half-plane.
fn routh_stable(coeffs: &[f64]) -> bool {
    let n = coeffs.len();
    let mut rows: Vec<Vec<f64>> = vec![
        coeffs.iter().step_by(2).copied().collect(),
        coeffs.iter().skip(1).step_by(2).copied().collect(),
    ];
    let width = rows[0].len();
    rows[1].resize(width, 0.0);
    while rows.len() < n {
        let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
        if b[0] <= 0.0 {
            return false;
        }
        let next: Vec<f64> = (0..width)
            .map(|i| {
                let a1 = a.get(i + 1).copied().unwrap_or(0.0);
                let b1 = b.get(i + 1).copied().unwrap_or(0.0);
                (b[0] * a1 - a[0] * b1) / b[0]
            })
            .collect();
        rows.push(next);
    }
    rows.iter().all(|r| r[0] > 0.0)
}

#[test]
fn default_stability_confirmed_by_routh_criterion() {
    let sys = linearize(&CmcParams::default(), 0.0).unwrap();
    // eigenvalue signs are unchanged by positive rescaling
    let scale = sys.jacobian.amax();
    let a = DMatrix::from_fn(N_STATES, N_STATES, |i, j| sys.jacobian[(i, j)] / scale);
    assert!(routh_stable(&char_poly(&a)));
    assert!(sys.is_stable());

    let mut flipped = a.clone();
    flipped[(1, 1)] = -flipped[(1, 1)];
    assert!(!routh_stable(&char_poly(&flipped)));
}

#[test]
fn spectrum_responds_to_excitability() {
    let p = CmcParams::default();
    let base = transfer_spectrum(&linearize(&p, 0.0).unwrap(), &p, &grid()).unwrap();
    let up = transfer_spectrum(&linearize(&p, 0.2).unwrap(), &p, &grid()).unwrap();
    let change: f64 = base.power.iter().zip(&up.power).map(|(a, b)| (a - b).powi(2)).sum();
    assert!(change.sqrt() > 0.0);
    let peak = |s: &[f64]| s.iter().copied().fold(0.0, f64::max);
    assert!(peak(&base.power) != peak(&up.power));
}

#[test]
fn identity_parameterization_replicates_single_column() {
    let p = CmcParams::default();
    let single = transfer_spectrum(&linearize(&p, 0.0).unwrap(), &p, &grid()).unwrap();
    for s in forward_model(&p, &[0.0; 5], 0.0, &grid()).unwrap() {
        assert_eq!(s.power, single.power);
    }
}

proptest! {
    #[test]
    fn equal_field_values_give_identical_channels(theta in -1.0f64..1.0, g7 in -0.5f64..0.5) {
        let s = forward_model(&CmcParams::default(), &[theta; 4], g7, &grid()).unwrap();
        for c in &s[1..] {
            prop_assert_eq!(&c.power, &s[0].power);
        }
    }

    #[test]
    fn spectrum_is_nonnegative_and_finite(theta in -1.0f64..1.0) {
        let p = CmcParams::default();
        let s = transfer_spectrum(&linearize(&p, theta).unwrap(), &p, &grid()).unwrap();
        prop_assert!(s.power.iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
