//! The rescaled flow `dv/dtau = A_v v + a v - 1/v` in blowup variables.

use crate::error::Result;
use crate::grid::{deriv_theta, deriv_y, partial, Field, Grid};

/// Parameters `(a, b)` of the adiabatic profile `V_{a,b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileParams {
    pub a: f64,
    pub b: f64,
}

/// Coefficients `(F1, F2, F3, F4)` of the quasilinear operator at `p = v_y`, `q = v_theta / v`.
#[inline]
pub fn coeffs(p: f64, q: f64) -> [f64; 4] {
    let d = 1.0 + p * p + q * q;
    [(1.0 + q * q) / d, (1.0 + p * p) / d, -2.0 * p * q / d, q / d]
}

/// Gradient pair `p = dv/dy`, `q = v^{-1} dv/dtheta`.
#[derive(Debug, Clone)]
pub struct GradientPair {
    pub p: Field,
    pub q: Field,
}

impl GradientPair {
    pub fn of(v: &Field) -> Result<GradientPair> {
        let p = deriv_y(v, 1)?;
        let q = deriv_theta(v, 1)?.zip_map(v, |vt, x| vt / x);
        Ok(GradientPair { p, q })
    }
}

/// `A_v` with its coefficients frozen at a given radius field, so it can be applied
/// to other functions (the commutator and B-identity checks need that).
///
/// The first-order theta term enters with a minus sign: `-v^{-2} F4 d_theta`. That is
/// the sign for which the operator reproduces graphical mean curvature flow
/// (see `geometry::mcf_rhs_physical` and the cross-frame test below).
#[derive(Debug, Clone)]
pub struct FrozenOperator {
    grid: Grid,
    a: f64,
    /// per node: F1, v^-2 F2, v^-1 F3, -v^-2 F4
    c_yy: Vec<f64>,
    c_tt: Vec<f64>,
    c_yt: Vec<f64>,
    c_t: Vec<f64>,
}

impl FrozenOperator {
    pub fn new(v: &Field, a: f64) -> Result<FrozenOperator> {
        let gp = GradientPair::of(v)?;
        let n = v.grid().len();
        let (mut c_yy, mut c_tt, mut c_yt, mut c_t) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let x = v.values()[k];
            let [f1, f2, f3, f4] = coeffs(gp.p.values()[k], gp.q.values()[k]);
            let inv = 1.0 / x;
            c_yy.push(f1);
            c_tt.push(f2 * inv * inv);
            c_yt.push(f3 * inv);
            c_t.push(-f4 * inv * inv);
        }
        Ok(FrozenOperator { grid: *v.grid(), a, c_yy, c_tt, c_yt, c_t })
    }

    fn apply_inner(&self, w: &Field, transport: bool) -> Result<Field> {
        let w_yy = deriv_y(w, 2)?;
        let w_t = deriv_theta(w, 1)?;
        let w_tt = deriv_theta(w, 2)?;
        let w_yt = deriv_y(&w_t, 1)?;
        let w_y = if transport { Some(deriv_y(w, 1)?) } else { None };
        let g = self.grid;
        let mut out = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            let y = g.y(j);
            for i in 0..g.ntheta {
                let k = g.index(j, i);
                let mut s = self.c_yy[k] * w_yy.values()[k]
                    + self.c_tt[k] * w_tt.values()[k]
                    + self.c_yt[k] * w_yt.values()[k]
                    + self.c_t[k] * w_t.values()[k];
                if let Some(wy) = &w_y {
                    s -= self.a * y * wy.values()[k];
                }
                out.push(s);
            }
        }
        Field::from_values(g, out)
    }

    /// `A_v w`.
    pub fn apply(&self, w: &Field) -> Result<Field> {
        self.apply_inner(w, true)
    }

    /// `A_v w + a y dw/dy`, the operator without its transport term.
    pub fn apply_without_transport(&self, w: &Field) -> Result<Field> {
        self.apply_inner(w, false)
    }

    /// The four coefficient fields `(F1, v^-2 F2, v^-1 F3, -v^-2 F4)`.
    pub fn coefficient_fields(&self) -> [Field; 4] {
        let mk = |v: &Vec<f64>| Field::from_values(self.grid, v.clone()).expect("same grid");
        [mk(&self.c_yy), mk(&self.c_tt), mk(&self.c_yt), mk(&self.c_t)]
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

/// `A_v v`.
pub fn apply_av(v: &Field, a: f64) -> Result<Field> {
    FrozenOperator::new(v, a)?.apply(v)
}

/// Right-hand side of the rescaled flow, `A_v v + a v - 1/v`.
pub fn rescaled_rhs(v: &Field, a: f64) -> Result<Field> {
    let v_y = deriv_y(v, 1)?;
    let v_yy = deriv_y(v, 2)?;
    let v_t = deriv_theta(v, 1)?;
    let v_tt = deriv_theta(v, 2)?;
    let v_yt = partial(v, 1, 1)?;
    let g = *v.grid();
    let mut out = Vec::with_capacity(g.len());
    for j in 0..g.ny {
        let y = g.y(j);
        for i in 0..g.ntheta {
            let k = g.index(j, i);
            let x = v.values()[k];
            let inv = 1.0 / x;
            let p = v_y.values()[k];
            let q = v_t.values()[k] * inv;
            let [f1, f2, f3, f4] = coeffs(p, q);
            let av = f1 * v_yy.values()[k] + inv * inv * f2 * v_tt.values()[k] + inv * f3 * v_yt.values()[k]
                - inv * inv * f4 * v_t.values()[k]
                - a * y * p;
            out.push(av + a * x - inv);
        }
    }
    Field::from_values(g, out)
}

/// `V_{a,b}(y) = sqrt((2 + b y^2) / (a + 1/2))`.
#[inline]
pub fn profile_value(params: ProfileParams, y: f64) -> f64 {
    ((2.0 + params.b * y * y) / (params.a + 0.5)).sqrt()
}

/// The adiabatic profile as a theta-independent field.
pub fn profile(params: ProfileParams, grid: Grid) -> Field {
    Field::from_profile(grid, |y| profile_value(params, y))
}

/// Step function separating the inner (`s y^2 < 20`) and outer regions.
pub fn step_g(y: f64, s: f64) -> f64 {
    if s * y * y < 20.0 {
        0.9 * std::f64::consts::SQRT_2
    } else {
        4.0
    }
}

/// Weight `(Sigma + y^2)^{-3/5}` of the Lyapunov measure.
pub fn sigma_weight(y: f64, sigma: f64) -> f64 {
    (sigma + y * y).powf(-0.6)
}

/// Weight field `sigma(y)` on the grid.
pub fn sigma_field(grid: Grid, sigma: f64) -> Field {
    Field::from_profile(grid, |y| sigma_weight(y, sigma))
}

/// Reference decay `beta(tau) = 1 / (1/b0 + tau)`.
pub fn beta(tau: f64, b0: f64) -> f64 {
    if b0 <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 / b0 + tau)
}

/// The alternative monitor `(kappa + tau)^{-1}` used by the first set of conditions.
pub fn beta_kappa(tau: f64, kappa: f64) -> f64 {
    1.0 / (kappa + tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mcf_rhs_physical;
    use crate::grid::symmetrize;
    use crate::lcg::Lcg64;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn grid() -> Grid {
        Grid::new(20.0, 401, 32).unwrap()
    }

    #[test]
    fn coeffs_examples() {
        assert_eq!(coeffs(0.0, 0.0), [1.0, 1.0, 0.0, 0.0]);
        let c = coeffs(1.0, 1.0);
        let e = [2.0 / 3.0, 2.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0];
        for k in 0..4 {
            assert_abs_diff_eq!(c[k], e[k], epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn principal_symbol_is_elliptic(p in -50.0f64..50.0, q in -50.0f64..50.0) {
            let [f1, f2, f3, _] = coeffs(p, q);
            let d = 1.0 + p * p + q * q;
            // det = 1/D exactly; require the weaker stated bound with round-off slack
            let det = f1 * f2 - 0.25 * f3 * f3;
            prop_assert!(det >= 1.0 / (d * d) - 1e-14);
            prop_assert!((det - 1.0 / d).abs() <= 1e-12 * (1.0 / d).max(1e-300) + 1e-15);
            prop_assert!(f1 > 0.0 && f2 > 0.0);
            for f in [f1, f2, f3] { prop_assert!(f.abs() <= 1.0); }
        }
    }

    #[test]
    fn constant_fields() {
        let g = grid();
        let c = Field::constant(g, 3.0);
        assert!(apply_av(&c, 0.4).unwrap().max_abs() < 1e-13);
        let r = rescaled_rhs(&c, 0.4).unwrap();
        assert!(r.map(|x| x - (0.4 * 3.0 - 1.0 / 3.0)).max_abs() < 1e-12);
        let s = Field::constant(g, SQRT_2);
        let r = rescaled_rhs(&s, 0.5).unwrap();
        assert!(r.max_abs() < 1e-15, "{}", r.max_abs());
    }

    #[test]
    fn operator_at_neck_center() {
        let g = grid();
        let b = 0.1;
        let v = Field::from_profile(g, |y| (2.0 + b * y * y).sqrt());
        let av = apply_av(&v, 0.5).unwrap();
        assert_abs_diff_eq!(av.at(g.center(), 3), 0.1 / SQRT_2, epsilon = 1e-6);
    }

    #[test]
    fn profile_is_stationary_up_to_diffusion() {
        let g = grid();
        let b = 0.1;
        let v = profile(ProfileParams { a: 0.5, b }, g);
        let rhs = rescaled_rhs(&v, 0.5).unwrap();
        // symbolic oracle: rhs = F1 * V'' with V = sqrt(2 + b y^2)
        let exact = Field::from_profile(g, |y| {
            let vv = (2.0 + b * y * y).sqrt();
            let p = b * y / vv;
            let vyy = 2.0 * b / (vv * vv * vv);
            vyy / (1.0 + p * p)
        });
        assert!(rhs.sub(&exact).max_abs() < 1e-6, "{}", rhs.sub(&exact).max_abs());
    }

    #[test]
    fn profile_values() {
        let g = grid();
        let p = profile(ProfileParams { a: 0.5, b: 0.3 }, g);
        assert_abs_diff_eq!(p.at(g.center(), 0), SQRT_2, epsilon = 1e-15);
        let y = (20.0f64 / 0.1).sqrt();
        assert_abs_diff_eq!(profile_value(ProfileParams { a: 0.5, b: 0.1 }, y), 22f64.sqrt(), epsilon = 1e-12);
        let flat = profile(ProfileParams { a: 0.4, b: 0.0 }, g);
        assert!(flat.map(|x| x - (2.0f64 / 0.9).sqrt()).max_abs() < 1e-15);
    }

    #[test]
    fn step_function_branches() {
        assert_abs_diff_eq!(step_g(0.0, 0.7), 1.2727922061357855, epsilon = 1e-12);
        assert_eq!(step_g(5.0, 1.0), 4.0);
        assert_eq!(step_g(20f64.sqrt(), 1.0 + 1e-15), 4.0);
        assert_eq!(step_g(2.0, 5.0), 4.0);
    }

    #[test]
    fn sigma_and_beta() {
        assert_abs_diff_eq!(sigma_weight(0.0, 100.0), 100f64.powf(-0.6), epsilon = 1e-15);
        assert_abs_diff_eq!(sigma_weight(0.0, 100.0), 0.0630957, epsilon = 1e-6);
        assert_eq!(sigma_weight(3.0, 100.0), sigma_weight(-3.0, 100.0));
        let y = 1e6;
        assert_abs_diff_eq!(sigma_weight(y, 100.0) * y.powf(1.2), 1.0, epsilon = 1e-8);
        assert_eq!(beta(0.0, 0.1), 0.1);
        assert_abs_diff_eq!(beta(10.0, 0.1), 0.05, epsilon = 1e-15);
        let h = 1e-3;
        for tau in [1.0, 3.0, 40.0] {
            let d = (beta(tau + h, 0.1) - beta(tau - h, 0.1)) / (2.0 * h);
            let b = beta(tau, 0.1);
            assert!((d + b * b).abs() < 1e-7, "{}", d + b * b);
        }
    }

    #[test]
    fn rhs_matches_physical_flow_in_blowup_frame() {
        // with lambda = 1: dv/dtau = u_t + a v - a y v_y
        let g = Grid::new(10.0, 101, 16).unwrap();
        let v = Field::from_fn(g, |y, t| {
            1.3 + 0.2 * (-0.2 * y * y).exp() * (2.0 * t).cos() + 0.05 * y.sin() + 0.1 * t.sin()
        });
        let a = 0.37;
        let lhs = rescaled_rhs(&v, a).unwrap();
        let vy = deriv_y(&v, 1).unwrap();
        let phys = mcf_rhs_physical(&v).unwrap();
        let rhs = phys.add(&v.scale(a)).sub(&vy.map_with_coords(|y, _, x| a * y * x));
        assert!(lhs.sub(&rhs).max_abs() < 1e-12, "{}", lhs.sub(&rhs).max_abs());
    }

    #[test]
    fn symmetric_fields_give_symmetric_rhs() {
        let g = Grid::new(10.0, 81, 16).unwrap();
        let mut rng = Lcg64::new(7);
        let noise: Vec<f64> = (0..g.len()).map(|_| rng.next_f64()).collect();
        let base = Field::from_fn(g, |y, t| 1.5 + 0.05 * y.cos() + 0.02 * (2.0 * t).sin());
        let raw = base.zip_map(&Field::from_values(g, noise).unwrap(), |b, r| b + 0.01 * r);
        let v = symmetrize(&raw);
        let rhs = rescaled_rhs(&v, 0.5).unwrap();
        let asym = symmetrize(&rhs).sub(&rhs).max_abs();
        assert!(asym < 1e-11, "{asym}");
    }
}
