use std::f64::consts::PI;

use cortifield::field::heat_series;
use cortifield::harness::oracle::{fd_heat_oracle, relative_l2};
use cortifield::{
    build_basis, evaluate_field, project_initial, propagate_coeffs, solve_heat_timedep, BoundaryDrive,
    DomainSpec, FieldCoeffs,
};
use proptest::prelude::*;

fn drive<'a>(
    phi0: impl Fn(f64) -> f64 + Send + Sync + 'a,
    phi1: impl Fn(f64) -> f64 + Send + Sync + 'a,
    f0: impl Fn(f64) -> f64 + Send + Sync + 'a,
) -> BoundaryDrive<'a> {
    BoundaryDrive {
        phi0: Box::new(phi0),
        phi1: Box::new(phi1),
        f0: Box::new(f0),
    }
}

#[test]
fn projecting_a_mode_recovers_its_unit_vector() {
    for domain in [DomainSpec::interval(1.7, 1.0), DomainSpec::rectangle(2.0, 1.3, 1.0)] {
        let basis = build_basis(domain, 4).unwrap();
        for (k, mode) in basis.modes.iter().enumerate() {
            let c = project_initial(|p| mode.eval(p), &basis).unwrap();
            for (i, v) in c.c.iter().enumerate() {
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-8, "mode {k}, coeff {i}: {v}");
            }
        }
    }
}

#[test]
fn truncation_converges() {
    let domain = DomainSpec::interval(1.0, 1.0);
    let zero = || drive(|_| 0.0, |_| 0.0, |x| x * (1.0 - x) * (1.0 + x).exp());
    let coarse = solve_heat_timedep(&domain, &zero(), &build_basis(domain, 8).unwrap(), 0.05).unwrap();
    let fine = solve_heat_timedep(&domain, &zero(), &build_basis(domain, 32).unwrap(), 0.05).unwrap();
    let diff = coarse.u.iter().zip(&fine.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-3, "{diff}");
}

#[test]
fn homogeneous_energy_never_grows() {
    let domain = DomainSpec::interval(1.0, 0.7);
    let basis = build_basis(domain, 16).unwrap();
    let d = drive(|_| 0.0, |_| 0.0, |x| (3.0 * x).sin() * x * (1.0 - x) + x * (1.0 - x));
    let energy = |t: f64| {
        let s = solve_heat_timedep(&domain, &d, &basis, t).unwrap();
        let h = s.x[1] - s.x[0];
        s.u.iter().map(|u| u * u).sum::<f64>() * h
    };
    let samples: Vec<f64> = (0..20).map(|k| energy(0.05 * k as f64)).collect();
    assert!(samples.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{samples:?}");
    assert!(samples[19] < samples[0]);
}

#[test]
fn heat_single_mode_analytic() {
    let domain = DomainSpec::interval(1.0, 1.0);
    let basis = build_basis(domain, 8).unwrap();
    let d = drive(|_| 0.0, |_| 0.0, |x| (PI * x).sin());
    let t = 0.1;
    let s = solve_heat_timedep(&domain, &d, &basis, t).unwrap();
    assert!(s.x.len() >= 128);
    let err = s
        .x
        .iter()
        .zip(&s.u)
        .map(|(x, u)| (u - (-PI * PI * t).exp() * (PI * x).sin()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
}

#[test]
fn heat_constant_state_persists() {
    let domain = DomainSpec::interval(2.0, 1.0);
    let basis = build_basis(domain, 16).unwrap();
    let d = drive(|_| 1.0, |_| 1.0, |_| 1.0);
    for t in [0.0, 0.3, 2.0] {
        let s = solve_heat_timedep(&domain, &d, &basis, t).unwrap();
        assert!(s.u.iter().all(|u| (u - 1.0).abs() < 1e-12), "t = {t}");
    }
}

#[test]
fn boundary_driven_series_matches_crank_nicolson() {
    let domain = DomainSpec::interval(1.0, 1.0);
    let basis = build_basis(domain, 64).unwrap();
    let d = drive(f64::sin, |_| 0.0, |_| 0.0);
    for t in [0.5, 1.0, 2.0] {
        let oracle = fd_heat_oracle(&domain, &d, 1.0 / 512.0, 1e-4, t).unwrap();
        let series = heat_series(&domain, &d, &basis, t).unwrap();
        let u: Vec<f64> = oracle.x.iter().map(|&x| series.eval(x)).collect();
        let err = relative_l2(&u, &oracle.u);
        assert!(err < 1e-3, "t = {t}: {err}");
    }
}

fn coeff_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #[test]
    fn propagation_is_a_semigroup(c in coeff_vec(9), dt1 in 0.0f64..3.0, dt2 in 0.0f64..3.0) {
        let basis = build_basis(DomainSpec::rectangle(2.0, 1.5, 0.4), 3).unwrap();
        let c = FieldCoeffs { c };
        let two = propagate_coeffs(&propagate_coeffs(&c, &basis, dt1).unwrap(), &basis, dt2).unwrap();
        let one = propagate_coeffs(&c, &basis, dt1 + dt2).unwrap();
        for (a, b) in two.c.iter().zip(&one.c) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn evaluation_is_superposition(c in coeff_vec(6)) {
        let basis = build_basis(DomainSpec::interval(3.0, 1.0), 6).unwrap();
        let points: Vec<[f64; 2]> = (0..100).map(|i| [3.0 * i as f64 / 99.0, 0.0]).collect();
        let total = evaluate_field(&FieldCoeffs { c: c.clone() }, &basis, &points).unwrap();
        let mut sum = vec![0.0; points.len()];
        for k in 0..basis.len() {
            let mut e = vec![0.0; basis.len()];
            e[k] = c[k];
            for (s, v) in sum.iter_mut().zip(evaluate_field(&FieldCoeffs { c: e }, &basis, &points).unwrap()) {
                *s += v;
            }
        }
        for (a, b) in total.iter().zip(&sum) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn mode_order_does_not_change_the_field(c in coeff_vec(9), shift in 1usize..9) {
        let basis = build_basis(DomainSpec::rectangle(2.0, 1.5, 1.0), 3).unwrap();
        let mut rotated = basis.clone();
        rotated.modes.rotate_left(shift);
        let mut rc = c.clone();
        rc.rotate_left(shift);
        let points = [[0.3, 0.2], [1.0, 0.75], [1.9, 1.4]];
        let a = evaluate_field(&FieldCoeffs { c: c.clone() }, &basis, &points).unwrap();
        let b = evaluate_field(&FieldCoeffs { c: rc.clone() }, &rotated, &points).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let pa = propagate_coeffs(&FieldCoeffs { c: c.clone() }, &basis, 0.7).unwrap();
        let mut pb = propagate_coeffs(&FieldCoeffs { c: rc }, &rotated, 0.7).unwrap().c;
        pb.rotate_right(shift);
        prop_assert_eq!(pa.c, pb);
    }
}
