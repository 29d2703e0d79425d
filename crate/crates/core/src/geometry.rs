//! Physical-frame geometry of a normal graph `u(x, theta)` over the cylinder.
//!
//! The grid's `y` coordinate plays the role of `x` here. Angular dependence is
//! along a single great circle of the sphere factor, so for `n >= 2` the formulas
//! are exact only for angle-independent radii.

use crate::error::{Error, Result};
use crate::grid::{deriv_theta, deriv_y, partial, Field};

struct Jet {
    u: Field,
    ux: Field,
    uxx: Field,
    ut: Field,
    utt: Field,
    uxt: Field,
}

impl Jet {
    fn of(u: &Field) -> Result<Jet> {
        u.ensure_radius()?;
        Ok(Jet {
            u: u.clone(),
            ux: deriv_y(u, 1)?,
            uxx: deriv_y(u, 2)?,
            ut: deriv_theta(u, 1)?,
            utt: deriv_theta(u, 2)?,
            uxt: partial(u, 1, 1)?,
        })
    }

    fn pointwise(&self, f: impl Fn([f64; 6]) -> f64) -> Field {
        let vals = (0..self.u.values().len())
            .map(|k| {
                f([
                    self.u.values()[k],
                    self.ux.values()[k],
                    self.uxx.values()[k],
                    self.ut.values()[k],
                    self.utt.values()[k],
                    self.uxt.values()[k],
                ])
            })
            .collect();
        Field::from_values(*self.u.grid(), vals).expect("same grid")
    }
}

#[inline]
fn norm_sq(u: f64, ux: f64, ut: f64) -> f64 {
    (1.0 + ux * ux) * u * u + ut * ut
}

/// `|N|^2 = [1 + u_x^2] u^2 + |grad u|^2`.
pub fn normal_norm_sq(u: &Field) -> Result<Field> {
    let jet = Jet::of(u)?;
    Ok(jet.pointwise(|[u, ux, _, ut, _, _]| norm_sq(u, ux, ut)))
}

/// Bracketed second-order expression shared by the mean curvature and the flow:
/// `Q_ij grad_i grad_j u + (u^2 + |grad u|^2) u_xx - 2 u_x <grad u, grad u_x> - |grad u|^2 / u`.
#[inline]
fn bracket(u: f64, ux: f64, uxx: f64, ut: f64, utt: f64, uxt: f64) -> f64 {
    let grad_sq = ut * ut;
    let q = 1.0 + grad_sq / (u * u) + ux * ux - ut * ut / (u * u);
    q * utt + (u * u + grad_sq) * uxx - 2.0 * ux * ut * uxt - grad_sq / u
}

/// Mean curvature `H` with respect to the outward normal (`H = n/r` on the round cylinder).
pub fn mean_curvature(u: &Field, n: usize) -> Result<Field> {
    let jet = Jet::of(u)?;
    let nf = n as f64;
    let h = jet.pointwise(|[u, ux, uxx, ut, utt, uxt]| {
        let nn = norm_sq(u, ux, ut);
        if !(nn > 0.0) {
            return f64::NAN;
        }
        (nf * nn - u * bracket(u, ux, uxx, ut, utt, uxt)) / (nn * nn.sqrt())
    });
    if !h.is_finite() {
        return Err(Error::NonPositive(normal_norm_sq(u)?.min()));
    }
    Ok(h)
}

/// Right-hand side of graphical MCF for general `n`.
pub fn mcf_rhs_general(u: &Field, n: usize) -> Result<Field> {
    let jet = Jet::of(u)?;
    let nf = n as f64;
    Ok(jet.pointwise(|[u, ux, uxx, ut, utt, uxt]| bracket(u, ux, uxx, ut, utt, uxt) / norm_sq(u, ux, ut) - nf / u))
}

/// `du/dt` for a surface in R^3 (`n = 1`).
pub fn mcf_rhs_physical(u: &Field) -> Result<Field> {
    mcf_rhs_general(u, 1)
}

/// The same flow written directly in `(x, theta)` coordinates, divided through by `u^2`:
///
/// `u_t = ([1 + (u_th/u)^2] u_xx + (1 + u_x^2) u_thth / u^2 - 2 u_x u_th u_xth / u^2
///         - u_th^2 / u^3) / (1 + u_x^2 + (u_th/u)^2) - 1/u`
pub fn mcf_rhs_direct(u: &Field) -> Result<Field> {
    let jet = Jet::of(u)?;
    Ok(jet.pointwise(|[u, ux, uxx, ut, utt, uxt]| {
        let q = ut / u;
        let num = (1.0 + q * q) * uxx + (1.0 + ux * ux) / (u * u) * utt
            - 2.0 * ux * ut / (u * u) * uxt
            - ut * ut / (u * u * u);
        num / (1.0 + ux * ux + q * q) - 1.0 / u
    }))
}

/// Normal-velocity form `u_t = -|N| H / u`.
pub fn mcf_rhs_from_curvature(u: &Field, n: usize) -> Result<Field> {
    let h = mean_curvature(u, n)?;
    let nn = normal_norm_sq(u)?;
    Field::from_values(
        *u.grid(),
        (0..h.values().len()).map(|k| -nn.values()[k].sqrt() * h.values()[k] / u.values()[k]).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::new(10.0, 201, 32).unwrap()
    }

    #[test]
    fn cylinder_values() {
        let g = grid();
        let u = Field::constant(g, 1.7);
        assert!(normal_norm_sq(&u).unwrap().map(|x| x - 1.7 * 1.7).max_abs() < 1e-12);
        let h1 = mean_curvature(&Field::constant(g, 1.0), 1).unwrap();
        assert!(h1.map(|x| x - 1.0).max_abs() < 1e-12);
        let h2 = mean_curvature(&u, 2).unwrap();
        assert!(h2.map(|x| x * 1.7 - 2.0).max_abs() < 1e-12);
        let r = mcf_rhs_physical(&u).unwrap();
        assert!(r.map(|x| x + 1.0 / 1.7).max_abs() < 1e-12);
    }

    #[test]
    fn normal_norm_of_axial_wave() {
        let g = grid();
        let u = Field::from_fn(g, |x, _| 1.0 + 0.1 * x.sin());
        let nn = normal_norm_sq(&u).unwrap();
        let exact = Field::from_fn(g, |x, _| (1.0 + 0.01 * x.cos().powi(2)) * (1.0 + 0.1 * x.sin()).powi(2));
        assert!(nn.sub(&exact).max_abs() < 1e-6);
    }

    #[test]
    fn direct_and_general_forms_agree() {
        let g = grid();
        let u = Field::from_fn(g, |x, t| {
            1.2 + 0.3 * (-0.1 * x * x).exp() * (2.0 * t).cos() + 0.1 * (0.5 * x).sin() * t.sin()
        });
        let a = mcf_rhs_physical(&u).unwrap();
        let b = mcf_rhs_direct(&u).unwrap();
        let c = mcf_rhs_from_curvature(&u, 1).unwrap();
        let scale = a.max_abs();
        assert!(a.sub(&b).max_abs() <= 1e-12 * scale);
        assert!(a.sub(&c).max_abs() <= 1e-12 * scale);
    }

    #[test]
    fn theta_independent_reduction() {
        let g = grid();
        let u = Field::from_fn(g, |x, _| 1.0 + 0.2 * (-0.05 * x * x).exp());
        let rhs = mcf_rhs_physical(&u).unwrap();
        let ux = deriv_y(&u, 1).unwrap();
        let uxx = deriv_y(&u, 2).unwrap();
        for k in 0..u.values().len() {
            let (v, p, pp) = (u.values()[k], ux.values()[k], uxx.values()[k]);
            assert_abs_diff_eq!(rhs.values()[k], pp / (1.0 + p * p) - 1.0 / v, epsilon = 1e-13);
        }
    }

    #[test]
    fn linearization_limit() {
        let g = grid();
        let r = 2f64.sqrt();
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|&eps| {
                let u = Field::from_fn(g, |x, _| r + eps * (-x * x / 4.0).exp());
                mcf_rhs_physical(&u).unwrap().map(|x| x + 1.0 / r).max_abs()
            })
            .collect();
        assert!(errs[1] < 0.2 * errs[0] && errs[2] < 0.2 * errs[1], "{errs:?}");
    }

    #[test]
    fn rejects_nonpositive_radius() {
        let g = grid();
        assert!(mean_curvature(&Field::constant(g, 0.0), 1).is_err());
        assert!(mcf_rhs_physical(&Field::constant(g, -1.0)).is_err());
    }
}
