//! Decomposition `v = V_{a,b} + phi` with `phi` orthogonal to the two slow
//! Hermite modes, the Newton solve that picks `(a, b)`, and the estimating
//! functions built on top of it.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{deriv_y, integrate_profile, theta_mean, Field, Grid};
use crate::rescaled::{beta, profile, profile_value, ProfileParams};

/// Normalized eigenfunction `phi_{k,a}(y)` for `k` in `0..=2`.
pub fn hermite_value(k: usize, a: f64, y: f64) -> f64 {
    let gauss = (-a * y * y / 4.0).exp();
    match k {
        0 => (a / (2.0 * PI)).powf(0.25) * gauss,
        1 => (a / (2.0 * PI)).powf(0.25) * a.sqrt() * y * gauss,
        2 => (a / (8.0 * PI)).powf(0.25) * (1.0 - a * y * y) * gauss,
        _ => panic!("hermite mode index must be 0, 1 or 2 (got {k})"),
    }
}

/// `phi_{k,a}` as a theta-constant field.
pub fn hermite_mode(k: usize, a: f64, grid: Grid) -> Field {
    Field::from_profile(grid, |y| hermite_value(k, a, y))
}

/// `e^{-a y^2 / 4}`.
#[inline]
pub fn gauge(a: f64, y: f64) -> f64 {
    (-a * y * y / 4.0).exp()
}

/// Even quartic `(y^4 - c2 y^2 + c0) e^{-a y^2/4}` whose gauge-fixed version is
/// orthogonal to `phi_{0,a}` and `phi_{2,a}`. Returns `(c2, c0)`.
pub fn orthogonal_quartic_coeffs(a: f64) -> (f64, f64) {
    // moments of e^{-g y^2}, g = 3a/4 (perturbation gauge * xi gauge * mode gauge)
    let g = 0.75 * a;
    let m0 = (PI / g).sqrt();
    let m2 = m0 / (2.0 * g);
    let m4 = 3.0 * m0 / (4.0 * g * g);
    let m6 = 15.0 * m0 / (8.0 * g * g * g);
    // m4 - c2 m2 + c0 m0 = 0, m6 - c2 m4 + c0 m2 = 0
    let det = -m2 * m2 + m4 * m0;
    let c2 = (m4 * m2 - m6 * m0) / -det;
    let c0 = (-m2 * m6 + m4 * m4) / -det;
    (c2, c0)
}

/// The orthogonal quartic perturbation shape evaluated at `y`.
pub fn orthogonal_quartic(a: f64, y: f64) -> f64 {
    let (c2, c0) = orthogonal_quartic_coeffs(a);
    let y2 = y * y;
    (y2 * y2 - c2 * y2 + c0) * gauge(a, y)
}

/// Outcome of a successful modulation solve.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub a: f64,
    pub b: f64,
    /// `v - V_{a,b}`
    pub phi: Field,
    /// `e^{-a y^2/4} phi`
    pub xi: Field,
    pub residual0: f64,
    pub residual2: f64,
    pub iterations: usize,
}

impl Decomposition {
    pub fn params(&self) -> ProfileParams {
        ProfileParams { a: self.a, b: self.b }
    }
}

/// Residuals from a precomputed theta-mean profile.
fn residuals_of_mean(grid: &Grid, mean: &[f64], a: f64, b: f64) -> (f64, f64) {
    let params = ProfileParams { a, b };
    let mut f0 = Vec::with_capacity(grid.ny);
    let mut f2 = Vec::with_capacity(grid.ny);
    for (j, m) in mean.iter().enumerate() {
        let y = grid.y(j);
        let xi = (m - profile_value(params, y)) * gauge(a, y);
        f0.push(xi * hermite_value(0, a, y));
        f2.push(xi * hermite_value(2, a, y));
    }
    (integrate_profile(grid, &f0), integrate_profile(grid, &f2))
}

/// Projections `(1/2pi) int int xi phi_{k,a} dtheta dy` for `k = 0, 2`, where
/// `xi = (v - V_{a,b}) e^{-a y^2/4}`. The theta integral reduces to the theta-mean
/// because the modes are theta-independent.
pub fn ortho_residual(v: &Field, a: f64, b: f64) -> (f64, f64) {
    residuals_of_mean(v.grid(), &theta_mean(v), a, b)
}

pub const MAX_NEWTON_ITERATIONS: usize = 50;
const FD_RELATIVE_STEP: f64 = 1e-7;

/// Default orthogonality tolerance `1e-10 * max|v|`.
pub fn default_ortho_tol(v: &Field) -> f64 {
    1e-10 * v.max_abs()
}

/// Newton iteration on `(a, b) -> (r0, r2)` with a forward-difference Jacobian.
/// Iterates with `b < 0` or `a <= -1/2` are pulled back by halving the step.
pub fn solve_modulation(v: &Field, a_init: f64, b_init: f64, ortho_tol: f64) -> Result<Decomposition> {
    v.ensure_radius()?;
    let grid = *v.grid();
    let mean = theta_mean(v);
    let res = |a: f64, b: f64| residuals_of_mean(&grid, &mean, a, b);

    let (mut a, mut b) = (a_init, b_init.max(0.0));
    let (mut r0, mut r2) = res(a, b);
    let mut it = 0;
    while r0.abs().max(r2.abs()) > ortho_tol {
        if it == MAX_NEWTON_ITERATIONS {
            return Err(Error::NoConvergence { iterations: it, residual: r0.abs().max(r2.abs()) });
        }
        it += 1;
        let ha = FD_RELATIVE_STEP * a.abs().max(1e-2);
        let hb = FD_RELATIVE_STEP * b.abs().max(1e-2);
        let (ra0, ra2) = res(a + ha, b);
        let (rb0, rb2) = res(a, b + hb);
        let j = [[(ra0 - r0) / ha, (rb0 - r0) / hb], [(ra2 - r2) / ha, (rb2 - r2) / hb]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if !det.is_finite() || det == 0.0 {
            return Err(Error::SingularJacobian);
        }
        let mut da = -(j[1][1] * r0 - j[0][1] * r2) / det;
        let mut db = -(-j[1][0] * r0 + j[0][0] * r2) / det;
        let mut halvings = 0;
        while (b + db < 0.0 || a + da <= -0.5) && halvings < 60 {
            da *= 0.5;
            db *= 0.5;
            halvings += 1;
        }
        a += da;
        b = (b + db).max(0.0);
        (r0, r2) = res(a, b);
        if !(r0.is_finite() && r2.is_finite()) {
            return Err(Error::NoConvergence { iterations: it, residual: f64::NAN });
        }
    }
    let params = ProfileParams { a, b };
    let phi = v.sub(&profile(params, grid));
    let xi = phi.map_with_coords(|y, _, p| p * gauge(a, y));
    Ok(Decomposition { a, b, phi, xi, residual0: r0, residual2: r2, iterations: it })
}

/// `(Gamma1, Gamma2)` from the parameters and their tau-derivatives.
pub fn gamma_sources(a: f64, b: f64, a_tau: f64, b_tau: f64) -> (f64, f64) {
    let g1 = a_tau / (a + 0.5) + a - 0.5 + b;
    let g2 = -b_tau - b * (a - 0.5 + b) - b * b;
    (g1, g2)
}

/// Source term `F(a, b)` driving the gauge-fixed fluctuation (theta-constant).
pub fn source_field(a: f64, b: f64, a_tau: f64, b_tau: f64, grid: Grid) -> Field {
    let (g1, g2) = gamma_sources(a, b, a_tau, b_tau);
    Field::from_profile(grid, |y| source_value(a, b, g1, g2, y))
}

pub fn source_value(a: f64, b: f64, gamma1: f64, gamma2: f64, y: f64) -> f64 {
    let y2 = y * y;
    let s = 2.0 + b * y2;
    0.5 * gauge(a, y) * (s / (a + 0.5)).sqrt() * (gamma1 + gamma2 * y2 / s - b * b * b * y2 * y2 / (s * s))
}

/// `||<y>^{-m} d_y^n phi||_inf` for `n` in `{0, 1}`.
pub fn weighted_norm(phi: &Field, m: f64, n: usize) -> Result<f64> {
    let d = match n {
        0 => phi.clone(),
        1 => deriv_y(phi, 1)?,
        _ => return Err(Error::DerivativeOrder(n)),
    };
    let g = phi.grid();
    let mut best: f64 = 0.0;
    for j in 0..g.ny {
        let y = g.y(j);
        let w = (1.0 + y * y).powf(-0.5 * m);
        for x in d.row(j) {
            best = best.max(w * x.abs());
        }
    }
    Ok(best)
}

/// Index set of the weighted norms tracked by the estimators.
pub const ESTIMATOR_NORMS: [(f64, usize); 4] = [(3.0, 0), (1.1, 0), (2.0, 1), (1.0, 1)];

/// Running maxima of the beta-weighted fluctuation norms and parameter deviations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorState {
    pub m30: f64,
    pub m1110: f64,
    pub m21: f64,
    pub m11: f64,
    pub a_est: f64,
    pub b_est: f64,
    pub b0: f64,
}

impl EstimatorState {
    pub fn new(b0: f64) -> EstimatorState {
        EstimatorState { b0, ..Default::default() }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.m30, self.m1110, self.m21, self.m11, self.a_est, self.b_est]
    }
}

/// Folds one decomposition at time `tau` into the running maxima.
pub fn update_estimators(state: EstimatorState, dec: &Decomposition, tau: f64) -> Result<EstimatorState> {
    let bt = beta(tau, state.b0);
    if !(bt > 0.0) {
        return Ok(state);
    }
    let mut out = state;
    let mut vals = [0.0; 4];
    for (slot, &(m, n)) in vals.iter_mut().zip(ESTIMATOR_NORMS.iter()) {
        let exponent = (m + n as f64) / 2.0 + 0.1;
        *slot = bt.powf(-exponent) * weighted_norm(&dec.phi, m, n)?;
    }
    out.m30 = out.m30.max(vals[0]);
    out.m1110 = out.m1110.max(vals[1]);
    out.m21 = out.m21.max(vals[2]);
    out.m11 = out.m11.max(vals[3]);
    out.a_est = out.a_est.max(bt.powi(-2) * (dec.a - 0.5 + dec.b).abs());
    out.b_est = out.b_est.max(bt.powf(-1.5) * (dec.b - bt).abs());
    Ok(out)
}
