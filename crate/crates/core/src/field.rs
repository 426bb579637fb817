//! Slow excitability field as a truncated Dirichlet sine expansion of the
//! diffusion operator `θ_t = α² ∇²θ`.
//!
//! Modes are `sin(nπx/L)` on an interval, or `sin(nπx/Lx)·sin(mπy/Ly)` on a
//! rectangle. A mode with wavenumbers `k` decays at rate `α²·|k|²`, and the
//! same stored rate drives both coefficient propagation and the
//! time-dependent boundary solver.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::simpson_nodes;

/// A spatial point. Interval domains only read `x` (the first coordinate).
pub type Point = [f64; 2];

/// Number of Simpson panels per axis used for projections.
pub const PROJECTION_PANELS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainShape {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub shape: DomainShape,
    /// Diffusion coefficient; the operator is `α² ∇²`.
    pub alpha: f64,
}

impl DomainSpec {
    pub fn interval(length: f64, alpha: f64) -> Self {
        DomainSpec {
            shape: DomainShape::Interval { length },
            alpha,
        }
    }

    pub fn rectangle(lx: f64, ly: f64, alpha: f64) -> Self {
        DomainSpec {
            shape: DomainShape::Rectangle { lx, ly },
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let lengths_ok = match self.shape {
            DomainShape::Interval { length } => ok(length),
            DomainShape::Rectangle { lx, ly } => ok(lx) && ok(ly),
        };
        if !lengths_ok {
            return Err(Error::InvalidArgument(
                "domain lengths must be finite and > 0".into(),
            ));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diffusion coefficient must be >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: Point) -> bool {
        let inside = |v: f64, len: f64| {
            let tol = 1e-12 * len;
            v.is_finite() && v >= -tol && v <= len + tol
        };
        match self.shape {
            DomainShape::Interval { length } => inside(p[0], length),
            DomainShape::Rectangle { lx, ly } => inside(p[0], lx) && inside(p[1], ly),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeIndex {
    Interval(usize),
    Rectangle(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub index: ModeIndex,
    /// `nπ/L` per axis (the y entry is 0 on an interval).
    pub wavenumbers: [f64; 2],
    pub decay_rate: f64,
}

impl Mode {
    pub fn eval(&self, p: Point) -> f64 {
        match self.index {
            ModeIndex::Interval(_) => (self.wavenumbers[0] * p[0]).sin(),
            ModeIndex::Rectangle(..) => {
                (self.wavenumbers[0] * p[0]).sin() * (self.wavenumbers[1] * p[1]).sin()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub domain: DomainSpec,
    pub modes: Vec<Mode>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn decay_rates(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.decay_rate).collect()
    }

    fn check_point(&self, p: Point) -> Result<()> {
        if self.domain.contains(p) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x: p[0], y: p[1] })
        }
    }

    /// Row-major `points × modes` matrix of mode values.
    pub fn design_matrix(&self, points: &[Point]) -> Result<nalgebra::DMatrix<f64>> {
        for &p in points {
            self.check_point(p)?;
        }
        Ok(nalgebra::DMatrix::from_fn(points.len(), self.len(), |r, c| {
            self.modes[c].eval(points[r])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCoeffs {
    pub c: Vec<f64>,
}

impl FieldCoeffs {
    pub fn zeros(n: usize) -> Self {
        FieldCoeffs { c: vec![0.0; n] }
    }

    fn check(&self, basis: &EigenBasis) -> Result<()> {
        if self.c.len() != basis.len() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a basis of {} modes",
                self.c.len(),
                basis.len()
            )));
        }
        if self.c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field coefficient".into()));
        }
        Ok(())
    }
}

/// Modes sorted by decay rate, ties broken by index.
pub fn build_basis(domain: DomainSpec, n_modes: usize) -> Result<EigenBasis> {
    domain.validate()?;
    if n_modes == 0 {
        return Err(Error::InvalidArgument("n_modes must be >= 1".into()));
    }
    let a2 = domain.alpha * domain.alpha;
    let mut modes: Vec<Mode> = match domain.shape {
        DomainShape::Interval { length } => (1..=n_modes)
            .map(|n| {
                let k = n as f64 * PI / length;
                Mode {
                    index: ModeIndex::Interval(n),
                    wavenumbers: [k, 0.0],
                    decay_rate: a2 * k * k,
                }
            })
            .collect(),
        DomainShape::Rectangle { lx, ly } => (1..=n_modes)
            .flat_map(|n| (1..=n_modes).map(move |m| (n, m)))
            .map(|(n, m)| {
                let kx = n as f64 * PI / lx;
                let ky = m as f64 * PI / ly;
                Mode {
                    index: ModeIndex::Rectangle(n, m),
                    wavenumbers: [kx, ky],
                    decay_rate: a2 * (kx * kx + ky * ky),
                }
            })
            .collect(),
    };
    modes.sort_by(|a, b| {
        a.decay_rate
            .total_cmp(&b.decay_rate)
            .then(a.index.cmp(&b.index))
    });
    Ok(EigenBasis { domain, modes })
}

/// `Σ c_i φ_i(p)` at every point.
pub fn evaluate_field(coeffs: &FieldCoeffs, basis: &EigenBasis, points: &[Point]) -> Result<Vec<f64>> {
    coeffs.check(basis)?;
    points
        .iter()
        .map(|&p| {
            basis.check_point(p)?;
            Ok(basis
                .modes
                .iter()
                .zip(&coeffs.c)
                .map(|(m, c)| c * m.eval(p))
                .sum())
        })
        .collect()
}

/// Deterministic decay `c_i ← c_i · e^{−λ_i dt}`.
pub fn propagate_coeffs(coeffs: &FieldCoeffs, basis: &EigenBasis, dt: f64) -> Result<FieldCoeffs> {
    coeffs.check(basis)?;
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be >= 0, got {dt}")));
    }
    Ok(FieldCoeffs {
        c: coeffs
            .c
            .iter()
            .zip(&basis.modes)
            .map(|(c, m)| c * (-m.decay_rate * dt).exp())
            .collect(),
    })
}

/// Sine-series coefficients of `f0` by composite Simpson quadrature.
pub fn project_initial<F>(f0: F, basis: &EigenBasis) -> Result<FieldCoeffs>
where
    F: Fn(Point) -> f64,
{
    match basis.domain.shape {
        DomainShape::Interval { length } => {
            let nodes = simpson_nodes(0.0, length, PROJECTION_PANELS);
            let values = sample(&nodes, |x| f0([x, 0.0]))?;
            let c = basis
                .modes
                .iter()
                .map(|m| {
                    2.0 / length
                        * nodes
                            .iter()
                            .zip(&values)
                            .map(|(&(x, w), v)| w * v * (m.wavenumbers[0] * x).sin())
                            .sum::<f64>()
                })
                .collect();
            Ok(FieldCoeffs { c })
        }
        DomainShape::Rectangle { lx, ly } => {
            let xs = simpson_nodes(0.0, lx, PROJECTION_PANELS);
            let ys = simpson_nodes(0.0, ly, PROJECTION_PANELS);
            let mut values = Vec::with_capacity(xs.len() * ys.len());
            for &(x, _) in &xs {
                for &(y, _) in &ys {
                    let v = f0([x, y]);
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("initial condition at ({x}, {y})")));
                    }
                    values.push(v);
                }
            }
            let c = basis
                .modes
                .iter()
                .map(|m| {
                    let sx: Vec<f64> = xs.iter().map(|&(x, w)| w * (m.wavenumbers[0] * x).sin()).collect();
                    let sy: Vec<f64> = ys.iter().map(|&(y, w)| w * (m.wavenumbers[1] * y).sin()).collect();
                    let mut acc = 0.0;
                    for (i, wx) in sx.iter().enumerate() {
                        let row = &values[i * ys.len()..(i + 1) * ys.len()];
                        acc += wx * row.iter().zip(&sy).map(|(v, wy)| v * wy).sum::<f64>();
                    }
                    4.0 / (lx * ly) * acc
                })
                .collect();
            Ok(FieldCoeffs { c })
        }
    }
}

fn sample(nodes: &[(f64, f64)], f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    nodes
        .iter()
        .map(|&(x, _)| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite(format!("integrand at x = {x}")))
            }
        })
        .collect()
}

/// Boundary values and initial condition for the 1D heat problem with
/// time-dependent Dirichlet data.
pub struct BoundaryDrive<'a> {
    pub phi0: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
    pub phi1: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
    pub f0: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
}

impl std::fmt::Debug for BoundaryDrive<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundaryDrive").finish_non_exhaustive()
    }
}

/// Minimum number of time steps for the source convolution.
pub const HEAT_TIME_STEPS: usize = 1000;
/// Default output grid size for [`solve_heat_timedep`].
pub const HEAT_GRID_POINTS: usize = 129;

/// Series solution `u = ω + Σ v_n(t) sin(λ_n x)` at a fixed time, where ω is
/// the linear interpolant of the boundary values.
#[derive(Debug, Clone)]
pub struct HeatSeries {
    pub t: f64,
    pub length: f64,
    pub boundary: (f64, f64),
    pub wavenumbers: Vec<f64>,
    pub coeffs: Vec<f64>,
}

impl HeatSeries {
    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.boundary;
        let omega = a + x / self.length * (b - a);
        omega
            + self
                .wavenumbers
                .iter()
                .zip(&self.coeffs)
                .map(|(k, v)| v * (k * x).sin())
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatSolution {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// Weights of the piecewise-linear product rule for
/// `∫₀¹ g(s) e^{−a(1−s)} ds ≈ w0·g(0) + w1·g(1)`.
fn exp_trapezoid_weights(a: f64) -> (f64, f64) {
    if a < 1e-3 {
        (
            0.5 - a / 3.0 + a * a / 8.0,
            0.5 - a / 6.0 + a * a / 24.0,
        )
    } else {
        let e = (-a).exp();
        ((1.0 - e * (1.0 + a)) / (a * a), (a - 1.0 + e) / (a * a))
    }
}

fn derivative(f: &(dyn Fn(f64) -> f64 + Send + Sync + '_), t: f64, h: f64) -> f64 {
    if t - h >= 0.0 {
        (f(t + h) - f(t - h)) / (2.0 * h)
    } else {
        (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2.0 * h)) / (2.0 * h)
    }
}

/// Builds the series solution of `u_t = α² u_xx` with `u(0,t) = φ0(t)`,
/// `u(L,t) = φ1(t)`, `u(x,0) = f0(x)` at time `t`.
pub fn heat_series(
    domain: &DomainSpec,
    drive: &BoundaryDrive<'_>,
    basis: &EigenBasis,
    t: f64,
) -> Result<HeatSeries> {
    domain.validate()?;
    let length = match domain.shape {
        DomainShape::Interval { length } => length,
        DomainShape::Rectangle { .. } => {
            return Err(Error::UnsupportedDomain(
                "time-dependent boundary solver is defined on intervals only".into(),
            ))
        }
    };
    if basis.domain != *domain {
        return Err(Error::InvalidArgument("basis was built for a different domain".into()));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t must be >= 0, got {t}")));
    }

    let nodes = simpson_nodes(0.0, length, PROJECTION_PANELS);
    let (p0, p1) = ((drive.phi0)(0.0), (drive.phi1)(0.0));
    let v0 = sample(&nodes, |x| (drive.f0)(x) - (p0 + x / length * (p1 - p0)))?;

    // ω̇ is linear in x: ω̇ = φ0'(1 − x/L) + φ1' x/L. Project both shapes once.
    let wavenumbers: Vec<f64> = basis.modes.iter().map(|m| m.wavenumbers[0]).collect();
    let project = |g: &dyn Fn(f64) -> f64| -> Vec<f64> {
        wavenumbers
            .iter()
            .map(|k| {
                2.0 / length
                    * nodes
                        .iter()
                        .map(|&(x, w)| w * g(x) * (k * x).sin())
                        .sum::<f64>()
            })
            .collect()
    };
    let left_shape = project(&|x| 1.0 - x / length);
    let right_shape = project(&|x| x / length);
    let initial: Vec<f64> = wavenumbers
        .iter()
        .map(|k| {
            2.0 / length
                * nodes
                    .iter()
                    .zip(&v0)
                    .map(|(&(x, w), v)| w * v * (k * x).sin())
                    .sum::<f64>()
        })
        .collect();

    let decay: Vec<f64> = basis.modes.iter().map(|m| m.decay_rate).collect();
    let mut coeffs: Vec<f64> = initial
        .iter()
        .zip(&decay)
        .map(|(c, k)| c * (-k * t).exp())
        .collect();

    if t > 0.0 {
        let steps = HEAT_TIME_STEPS;
        let h = t / steps as f64;
        let fd_step = 1e-4 * t;
        let rates: Vec<(f64, f64)> = (0..=steps)
            .map(|j| {
                let tau = j as f64 * h;
                (
                    derivative(&*drive.phi0, tau, fd_step),
                    derivative(&*drive.phi1, tau, fd_step),
                )
            })
            .collect();
        for (n, coeff) in coeffs.iter_mut().enumerate() {
            // S_n(τ) = −(φ0' ⟨1−x/L⟩_n + φ1' ⟨x/L⟩_n)
            let source = |j: usize| -(rates[j].0 * left_shape[n] + rates[j].1 * right_shape[n]);
            let a = decay[n] * h;
            let (w0, w1) = exp_trapezoid_weights(a);
            let e = (-a).exp();
            let mut acc = 0.0;
            for j in 0..steps {
                acc = e * acc + h * (w0 * source(j) + w1 * source(j + 1));
            }
            *coeff += acc;
        }
    }
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("heat series coefficient".into()));
    }

    Ok(HeatSeries {
        t,
        length,
        boundary: ((drive.phi0)(t), (drive.phi1)(t)),
        wavenumbers,
        coeffs,
    })
}

/// Series solution sampled on a uniform grid of [`HEAT_GRID_POINTS`] points
/// including both endpoints.
pub fn solve_heat_timedep(
    domain: &DomainSpec,
    drive: &BoundaryDrive<'_>,
    basis: &EigenBasis,
    t: f64,
) -> Result<HeatSolution> {
    let series = heat_series(domain, drive, basis, t)?;
    let n = HEAT_GRID_POINTS;
    let x: Vec<f64> = (0..n)
        .map(|i| series.length * i as f64 / (n - 1) as f64)
        .collect();
    let u = x.iter().map(|&x| series.eval(x)).collect();
    Ok(HeatSolution { x, u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn interval_basis_wavenumbers_and_rates() {
        let b = build_basis(DomainSpec::interval(PI, 1.0), 3).unwrap();
        let k: Vec<f64> = b.modes.iter().map(|m| m.wavenumbers[0]).collect();
        for (got, want) in k.iter().zip([1.0, 2.0, 3.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-15);
        }
        for (got, want) in b.decay_rates().iter().zip([1.0, 4.0, 9.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-14);
        }
    }

    #[test]
    fn zero_alpha_freezes_field() {
        let b = build_basis(DomainSpec::interval(2.5, 0.0), 2).unwrap();
        assert_eq!(b.decay_rates(), vec![0.0, 0.0]);
    }

    #[test]
    fn rectangle_basis_order() {
        let b = build_basis(DomainSpec::rectangle(PI, PI, 1.0), 2).unwrap();
        let idx: Vec<ModeIndex> = b.modes.iter().map(|m| m.index).collect();
        assert_eq!(
            idx,
            vec![
                ModeIndex::Rectangle(1, 1),
                ModeIndex::Rectangle(1, 2),
                ModeIndex::Rectangle(2, 1),
                ModeIndex::Rectangle(2, 2)
            ]
        );
        for (got, want) in b.decay_rates().iter().zip([2.0, 5.0, 5.0, 8.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-14);
        }
    }

    #[test]
    fn basis_rejects_bad_input() {
        assert!(matches!(
            build_basis(DomainSpec::interval(1.0, 1.0), 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(build_basis(DomainSpec::interval(-1.0, 1.0), 2).is_err());
        assert!(build_basis(DomainSpec::rectangle(1.0, 1.0, -0.5), 2).is_err());
    }

    #[test]
    fn modes_vanish_on_boundary() {
        let b = build_basis(DomainSpec::rectangle(1.3, 0.7, 1.0), 4).unwrap();
        for m in &b.modes {
            for s in [0.0, 0.25, 0.5, 1.0] {
                for p in [[0.0, 0.7 * s], [1.3, 0.7 * s], [1.3 * s, 0.0], [1.3 * s, 0.7]] {
                    assert!(m.eval(p).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn evaluate_single_mode() {
        let b = build_basis(DomainSpec::interval(PI, 1.0), 3).unwrap();
        let c = FieldCoeffs { c: vec![1.0, 0.0, 0.0] };
        let v = evaluate_field(&c, &b, &[[PI / 2.0, 0.0]]).unwrap();
        assert_relative_eq!(v[0], 1.0);
        let z = evaluate_field(&FieldCoeffs::zeros(3), &b, &[[0.3, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn evaluate_rejects_outside_points() {
        let b = build_basis(DomainSpec::rectangle(1.0, 2.0, 1.0), 2).unwrap();
        let err = evaluate_field(&FieldCoeffs::zeros(4), &b, &[[0.5, 2.5]]).unwrap_err();
        assert!(matches!(err, Error::OutOfDomain { x, y } if x == 0.5 && y == 2.5));
    }

    #[test]
    fn propagation_closed_forms() {
        let b = build_basis(DomainSpec::interval(PI, 1.0), 1).unwrap();
        let c = FieldCoeffs { c: vec![3.0] };
        assert_eq!(propagate_coeffs(&c, &b, 0.0).unwrap(), c);
        let half = propagate_coeffs(&c, &b, 2f64.ln()).unwrap();
        assert_relative_eq!(half.c[0], 1.5, max_relative = 1e-15);
        assert!(propagate_coeffs(&c, &b, -1.0).is_err());
    }

    #[test]
    fn projection_of_quadratic() {
        let b = build_basis(DomainSpec::interval(1.0, 1.0), 6).unwrap();
        let c = project_initial(|p| p[0] * (1.0 - p[0]), &b).unwrap();
        for (i, v) in c.c.iter().enumerate() {
            let n = (i + 1) as f64;
            // 8/(nπ)³ for odd n, 0 for even (mpmath quadrature agrees to 30 digits)
            let want = if (i + 1) % 2 == 1 { 8.0 / (n * PI).powi(3) } else { 0.0 };
            assert!((v - want).abs() < 1e-6, "mode {}: {v} vs {want}", i + 1);
        }
    }

    #[test]
    fn projection_of_zero_and_second_mode() {
        let b = build_basis(DomainSpec::interval(2.0, 1.0), 4).unwrap();
        assert_eq!(project_initial(|_| 0.0, &b).unwrap().c, vec![0.0; 4]);
        let c = project_initial(|p| (2.0 * PI * p[0] / 2.0).sin(), &b).unwrap();
        for (i, v) in c.c.iter().enumerate() {
            let want = if i == 1 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_rejects_nonfinite() {
        let b = build_basis(DomainSpec::interval(1.0, 1.0), 2).unwrap();
        assert!(matches!(
            project_initial(|p| 1.0 / p[0], &b),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn heat_solver_rejects_rectangle() {
        let d = DomainSpec::rectangle(1.0, 1.0, 1.0);
        let b = build_basis(d, 2).unwrap();
        let drive = BoundaryDrive {
            phi0: Box::new(|_| 0.0),
            phi1: Box::new(|_| 0.0),
            f0: Box::new(|_| 0.0),
        };
        assert!(matches!(
            solve_heat_timedep(&d, &drive, &b, 0.1),
            Err(Error::UnsupportedDomain(_))
        ));
    }

    #[test]
    fn product_weights_limit_to_trapezoid() {
        let (a0, a1) = exp_trapezoid_weights(0.0);
        assert_eq!((a0, a1), (0.5, 0.5));
        // series branch agrees with the closed form just below the switch
        let a: f64 = 0.999e-3;
        let (s0, s1) = exp_trapezoid_weights(a);
        let e = (-a).exp();
        let (c0, c1) = ((1.0 - e * (1.0 + a)) / (a * a), (a - 1.0 + e) / (a * a));
        assert!((s0 - c0).abs() < 1e-9 && (s1 - c1).abs() < 1e-9);
    }
}
