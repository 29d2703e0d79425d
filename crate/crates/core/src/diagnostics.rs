//! Runtime monitors: the derived quantities `v_{m,n,k}`, the Lyapunov functionals
//! `Omega_{m,n}`, and every bootstrap condition and main assumption as a
//! `(holds, margin)` pair.
//!
//! Conditions written with `<=` use the literal constants and report
//! `margin = rhs - lhs`. Conditions written with an implicit constant report the
//! realized worst ratio `r = lhs / rhs` and `margin = K - r`, where `K` is
//! [`ConditionConstants::lesssim`].

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{integrate, partial, symmetrize, theta_split, Field};
use crate::modulation::{weighted_norm, ESTIMATOR_NORMS};
use crate::rescaled::{beta, beta_kappa, profile, sigma_field, step_g, ProfileParams};

/// `v^{-k} d_y^m d_theta^n v` for `m + n <= 3`.
pub fn vmnk(v: &Field, m: usize, n: usize, k: f64) -> Result<Field> {
    if m + n > 3 {
        return Err(Error::DerivativeOrder(m + n));
    }
    v.ensure_radius()?;
    let d = partial(v, m, n)?;
    Ok(d.zip_map(v, |x, r| x * r.powf(-k)))
}

/// `Omega_{m,n} = int int v^{-2n} |d_y^m d_theta^n v|^2 dtheta sigma dy`.
///
/// Orders `m + n` of 4 and 5 are obtained by composing the difference operators,
/// so they lose accuracy near the y-boundary; they are only used for reporting.
pub fn omega(v: &Field, m: usize, n: usize, sigma: f64) -> Result<f64> {
    if m + n > 5 {
        return Err(Error::DerivativeOrder(m + n));
    }
    v.ensure_radius()?;
    let d = partial(v, m, n)?;
    let integrand = d.zip_map(v, |x, r| x * x * r.powi(-2 * n as i32));
    integrate(&integrand, &sigma_field(*v.grid(), sigma))
}

/// One `Omega_{m,n}` value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaEntry {
    pub m: usize,
    pub n: usize,
    pub value: f64,
    /// true when the derivative order exceeds 3 and was composed
    pub composed: bool,
}

/// `Omega_{m,n}` for every `2 <= m + n <= 5`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaTable {
    pub entries: Vec<OmegaEntry>,
}

impl OmegaTable {
    pub fn compute(v: &Field, sigma: f64) -> Result<OmegaTable> {
        let mut entries = Vec::new();
        for order in 2..=5 {
            for m in (0..=order).rev() {
                let n = order - m;
                entries.push(OmegaEntry { m, n, value: omega(v, m, n, sigma)?, composed: order > 3 });
            }
        }
        Ok(OmegaTable { entries })
    }

    pub fn get(&self, m: usize, n: usize) -> Option<f64> {
        self.entries.iter().find(|e| e.m == m && e.n == n).map(|e| e.value)
    }
}

/// Knobs of the monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionConstants {
    pub kappa: f64,
    pub delta: f64,
    pub eps0: f64,
    #[serde(rename = "Sigma")]
    pub sigma: f64,
    #[serde(rename = "C0big")]
    pub c0_big: f64,
    /// constant standing in for every implicit `<~`
    pub lesssim: f64,
    pub b0: f64,
    pub c0: f64,
}

impl Default for ConditionConstants {
    fn default() -> Self {
        ConditionConstants {
            kappa: 100.0,
            delta: 0.1,
            eps0: 0.05,
            sigma: 100.0,
            c0_big: 10.0,
            lesssim: 10.0,
            b0: 0.1,
            c0: 0.01,
        }
    }
}

/// Outcome of one monitored inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub holds: bool,
    pub margin: f64,
}

impl Flag {
    /// Literal inequality `lhs <= rhs` summarized by its margin.
    fn literal(margin: f64) -> Flag {
        Flag { holds: margin >= 0.0, margin }
    }

    /// Strict literal inequality.
    fn strict(margin: f64) -> Flag {
        Flag { holds: margin > 0.0, margin }
    }

    fn ratio(ratio: f64, k: f64) -> Flag {
        let margin = k - ratio;
        Flag { holds: margin >= 0.0, margin }
    }
}

pub const CONDITION_NAMES: [&str; 16] =
    ["C0", "C1", "C2", "C3", "Ca", "Cs", "Cr", "Cg", "C0i", "C1i", "A1", "A2", "A3", "A4", "A5", "A6"];

/// All monitors at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub tau: f64,
    pub beta: f64,
    /// the alternative `(kappa + tau)^{-1}`, reported for comparison only
    pub beta_kappa: f64,
    pub flags: BTreeMap<String, Flag>,
    pub constants: ConditionConstants,
}

impl ConditionReport {
    pub fn flag(&self, name: &str) -> Option<Flag> {
        self.flags.get(name).copied()
    }

    /// Names of the assumptions `A1..A6` that do not hold.
    pub fn failed_assumptions(&self) -> Vec<String> {
        self.flags.iter().filter(|(k, f)| k.starts_with('A') && !f.holds).map(|(k, _)| k.clone()).collect()
    }
}

/// Worst ratio `|num| / den` over all nodes. A zero denominator counts as
/// infinite unless the numerator vanishes too.
fn worst_ratio(num: &[f64], den: impl Fn(usize) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (idx, x) in num.iter().enumerate() {
        let d = den(idx);
        let r = if x.abs() == 0.0 {
            0.0
        } else if d > 0.0 {
            x.abs() / d
        } else {
            f64::INFINITY
        };
        worst = worst.max(r);
    }
    worst
}

/// `sqrt(int int f^2 dtheta sigma dy)`.
fn sigma_norm(f: &Field, sigma: &Field) -> Result<f64> {
    Ok(integrate(&f.mul(f), sigma)?.sqrt())
}

/// Derivatives `d_y^m d_theta^n v` with `m + n <= 5`, computed lazily.
struct Derivs<'a> {
    v: &'a Field,
    cache: BTreeMap<(usize, usize), Field>,
}

impl<'a> Derivs<'a> {
    fn new(v: &'a Field) -> Self {
        Derivs { v, cache: BTreeMap::new() }
    }

    fn get(&mut self, m: usize, n: usize) -> Result<&Field> {
        if !self.cache.contains_key(&(m, n)) {
            let d = partial(self.v, m, n)?;
            self.cache.insert((m, n), d);
        }
        Ok(&self.cache[&(m, n)])
    }

    /// `v^{-n} d_y^m d_theta^n v`
    fn scaled(&mut self, m: usize, n: usize) -> Result<Field> {
        let v = self.v.clone();
        Ok(self.get(m, n)?.zip_map(&v, |x, r| x * r.powi(-(n as i32))))
    }
}

/// Evaluates every monitor on `v` at time `tau` with modulation parameter `a`.
///
/// Region-restricted conditions use `beta(tau) = (1/b0 + tau)^{-1}`; `kappa` enters
/// only the thresholds of C0, Ca and C1i.
pub fn check_conditions(v: &Field, a: f64, tau: f64, consts: &ConditionConstants) -> Result<ConditionReport> {
    v.ensure_radius()?;
    let g = *v.grid();
    let k = consts.lesssim;
    let bt = beta(tau, consts.b0);
    let vv = v.values();
    let ys: Vec<f64> = (0..g.len()).map(|idx| g.y(idx / g.ntheta)).collect();
    let inner = |idx: usize| bt * ys[idx] * ys[idx] <= 20.0;
    let mut d = Derivs::new(v);
    let mut flags = BTreeMap::new();
    let mut put = |name: &str, f: Flag| {
        flags.insert(name.to_string(), f);
    };

    put("C0", Flag::literal(v.min() - 1.0 / consts.kappa));

    let vy = d.get(1, 0)?.clone();
    let vt = d.get(0, 1)?.clone();
    let c1 = worst_ratio(vy.values(), |i| bt.powf(0.4) * vv[i].sqrt())
        .max(worst_ratio(vt.values(), |i| bt.powf(1.5) * vv[i] * vv[i]))
        .max(worst_ratio(vt.values(), |i| vv[i]));
    put("C1", Flag::ratio(c1, k));

    let vyy = d.get(2, 0)?.clone();
    let vyt = d.get(1, 1)?.clone();
    let vtt = d.get(0, 2)?.clone();
    let c2 = worst_ratio(vyy.values(), |_| bt.powf(0.6))
        .max(worst_ratio(vyt.values(), |i| bt.powf(1.5) * vv[i]))
        .max(worst_ratio(vyt.values(), |_| 1.0))
        .max(worst_ratio(vtt.values(), |i| bt.powf(1.5) * vv[i] * vv[i]));
    put("C2", Flag::ratio(c2, k));

    let vyyy = d.get(3, 0)?.clone();
    let mut c3 = worst_ratio(vyyy.values(), |_| bt);
    for n in 1..=3 {
        let s = d.scaled(3 - n, n)?;
        c3 = c3.max(worst_ratio(s.values(), |_| bt.powf(1.5)));
    }
    let vyyt = d.get(2, 1)?.clone();
    let vytt = d.get(1, 2)?.clone();
    let vttt_scaled = d.scaled(0, 3)?;
    let small_rhs = (consts.b0 + consts.eps0).powf(1.0 / 40.0);
    let small: Vec<f64> = (0..g.len())
        .map(|i| {
            bt.powf(-11.0 / 20.0) * (vyyy.values()[i].abs() + vyyt.values()[i].abs())
                + vytt.values()[i].abs()
                + vttt_scaled.values()[i].abs()
        })
        .collect();
    c3 = c3.max(worst_ratio(&small, |_| small_rhs));
    put("C3", Flag::ratio(c3, k));

    put("Ca", Flag::literal(1.0 / consts.kappa - (a - 0.5).abs()));

    let sig = sigma_field(g, consts.sigma);
    let mut cs_finite = true;
    for order in 4..=5 {
        for m in 0..=order {
            cs_finite &= sigma_norm(&d.scaled(m, order - m)?, &sig)?.is_finite();
        }
    }
    put("Cs", Flag { holds: cs_finite, margin: if cs_finite { 1.0 } else { -1.0 } });

    let (v1, v2) = theta_split(v);
    let cr = (0..g.len()).map(|i| consts.delta * v1.values()[i] - v2.values()[i].abs()).fold(f64::INFINITY, f64::min);
    put("Cr", Flag::literal(cr));

    let cg_rhs = consts.sigma.powf(0.25) * bt;
    let cg = (0..g.len())
        .map(|i| cg_rhs - vy.values()[i].abs() / (1.0 + ys[i] * ys[i]).sqrt())
        .fold(f64::INFINITY, f64::min);
    put("Cg", Flag::literal(cg));

    let mut c0i = f64::INFINITY;
    let mut c1i: f64 = 0.0;
    for i in (0..g.len()).filter(|&i| inner(i)) {
        c0i = c0i.min(vv[i] - 0.9 * SQRT_2).min(consts.c0_big - vv[i]);
        let r1 = vy.values()[i].abs() / (bt.sqrt() * vv[i].sqrt());
        let r2 = vt.values()[i].abs() / (consts.kappa.powf(-0.5) * vv[i]);
        c1i = c1i.max(if vy.values()[i] == 0.0 { 0.0 } else { r1 });
        c1i = c1i.max(r2);
    }
    put("C0i", Flag::literal(c0i));
    put("C1i", Flag::ratio(c1i, k));

    // main assumptions, read with b0 and c0 and the supplied a as a0
    let b0 = consts.b0;
    let sym = symmetrize(v).sub(v).max_abs();
    let a1 = if sym <= 1e-12 * v.max_abs() { v.min() } else { -sym };
    put("A1", Flag::strict(a1));

    let a2 = (0..g.len()).map(|i| vv[i] - step_g(ys[i], b0)).fold(f64::INFINITY, f64::min);
    put("A2", Flag::strict(a2));

    let phi = v.sub(&profile(ProfileParams { a, b: b0 }, g));
    let mut a3 = f64::INFINITY;
    for &(m, n) in ESTIMATOR_NORMS.iter() {
        let rhs = b0.powf((m + n as f64) / 2.0 + 0.1);
        a3 = a3.min(rhs - weighted_norm(&phi, m, n)?);
    }
    put("A3", Flag::strict(a3));

    put("A4", Flag::strict(consts.c0 - (a - 0.5).abs()));

    let mut s1 = vec![0.0; g.len()];
    for (m, n) in [(1, 1), (0, 2), (2, 1), (1, 2), (0, 3)] {
        let s = d.scaled(m, n)?;
        for (acc, x) in s1.iter_mut().zip(s.values()) {
            *acc += x.abs();
        }
    }
    let s2: Vec<f64> = (0..g.len())
        .map(|i| b0 * vy.values()[i].abs() / vv[i].sqrt() + b0.sqrt() * vyy.values()[i].abs() + vyyy.values()[i].abs())
        .collect();
    let s3: Vec<f64> = (0..g.len()).map(|i| vytt.values()[i].abs() + vttt_scaled.values()[i].abs()).collect();
    let mx = |x: &[f64]| x.iter().fold(0.0f64, |m, y| m.max(*y));
    let a5 = (b0 * b0 - mx(&s1)).min(b0.powf(1.5) - mx(&s2)).min(consts.c0 - mx(&s3));
    put("A5", Flag::strict(a5));

    let mut a6 = b0.powf(0.8) * sigma_norm(d.get(4, 0)?, &sig)? + sigma_norm(d.get(5, 0)?, &sig)?;
    for order in 4..=5 {
        for n in 1..=order {
            a6 += sigma_norm(&d.scaled(order - n, n)?, &sig)?;
        }
    }
    put("A6", Flag::strict(b0.powi(4) - a6));

    Ok(ConditionReport { tau, beta: bt, beta_kappa: beta_kappa(tau, consts.kappa), flags, constants: *consts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{deriv_theta, Grid};
    use crate::lcg::Lcg64;
    use crate::rescaled::profile_value;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(20.0, 401, 16).unwrap()
    }

    #[test]
    fn vmnk_examples() {
        let g = grid();
        let c = Field::constant(g, 2.5);
        assert!(vmnk(&c, 1, 0, 0.0).unwrap().max_abs() < 1e-12);

        let e = Field::from_profile(Grid::new(10.0, 801, 8).unwrap(), |y| (0.2 * y).exp());
        let r = vmnk(&e, 2, 0, 1.0).unwrap();
        // v^{-1} v_yy = 0.04 for v = e^{0.2 y}
        assert!(r.map(|x| x - 0.04).max_abs() < 1e-8);

        let b = 0.1;
        let v = Field::from_profile(g, |y| (2.0 + b * y * y).sqrt());
        let got = vmnk(&v, 1, 0, 0.5).unwrap();
        let exact = Field::from_profile(g, |y| b * y / (2.0 + b * y * y).powf(0.75));
        assert!(got.sub(&exact).max_abs() < 1e-6);
        assert!(matches!(vmnk(&v, 2, 2, 0.0), Err(Error::DerivativeOrder(4))));
    }

    #[test]
    fn omega_vanishes_without_theta_dependence() {
        let v = profile(ProfileParams { a: 0.5, b: 0.1 }, grid());
        for n in 1..=3 {
            assert_eq!(omega(&v, 0, n, 100.0).unwrap(), 0.0);
            assert_eq!(omega(&v, 1, n, 100.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn omega_of_parabola_matches_quadrature_oracle() {
        // v = y^2 + 50 has v_yy = 2, so Omega_{2,0} = 4 * 2pi * int sigma dy
        let g = Grid::new(20.0, 801, 8).unwrap();
        let v = Field::from_profile(g, |y| y * y + 50.0);
        let got = omega(&v, 2, 0, 100.0).unwrap();
        // composite Simpson on a much finer mesh
        let n = 200_000;
        let h = 40.0 / n as f64;
        let f = |y: f64| (100.0 + y * y).powf(-0.6);
        let mut s = f(-20.0) + f(20.0);
        for i in 1..n {
            let y = -20.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(y);
        }
        let oracle = 4.0 * 2.0 * PI * s * h / 3.0;
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-8 * oracle);
    }

    #[test]
    fn omega_is_quadratic_in_theta_perturbation() {
        let g = grid();
        let p = ProfileParams { a: 0.5, b: 0.1 };
        let field = |eps: f64| Field::from_fn(g, |y, t| profile_value(p, y) + eps * (2.0 * t).cos() * (-y * y).exp());
        let w1 = omega(&field(1e-3), 0, 1, 100.0).unwrap();
        let w2 = omega(&field(2e-3), 0, 1, 100.0).unwrap();
        assert_abs_diff_eq!(w2 / w1, 4.0, epsilon = 1e-2);
    }

    #[test]
    fn omega_table_covers_orders_two_to_five() {
        let v = profile(ProfileParams { a: 0.5, b: 0.1 }, grid());
        let t = OmegaTable::compute(&v, 100.0).unwrap();
        assert_eq!(t.entries.len(), 3 + 4 + 5 + 6);
        assert!(t.entries.iter().all(|e| e.value >= 0.0));
        assert!(t.get(2, 0).unwrap() > 0.0);
        assert!(t.entries.iter().filter(|e| e.composed).all(|e| e.m + e.n >= 4));
    }

    #[test]
    fn profile_passes_core_conditions_at_start() {
        let v = profile(ProfileParams { a: 0.5, b: 0.1 }, grid());
        let r = check_conditions(&v, 0.5, 0.0, &ConditionConstants::default()).unwrap();
        for name in ["C0", "Ca", "C0i", "Cr", "A1", "A2", "A3", "A4"] {
            let f = r.flag(name).unwrap();
            assert!(f.holds && f.margin > 0.0, "{name}: {f:?}");
        }
        for f in r.flags.values() {
            assert!(f.margin == 0.0 || f.holds == (f.margin > 0.0));
        }
        assert_eq!(r.flags.len(), CONDITION_NAMES.len());
    }

    #[test]
    fn c0_fails_with_expected_margin() {
        let c = ConditionConstants::default();
        let v = Field::constant(grid(), 0.5 / c.kappa);
        let r = check_conditions(&v, 0.5, 0.0, &c).unwrap();
        let f = r.flag("C0").unwrap();
        assert!(!f.holds);
        assert_abs_diff_eq!(f.margin, -0.5 / c.kappa, epsilon = 1e-15);
    }

    #[test]
    fn cr_fails_for_large_asymmetry() {
        let c = ConditionConstants::default();
        let v = Field::from_fn(grid(), |_, t| 2.0 * (1.0 + 2.0 * c.delta * (2.0 * t).cos()));
        let r = check_conditions(&v, 0.5, 0.0, &c).unwrap();
        assert!(!r.flag("Cr").unwrap().holds);
    }

    #[test]
    fn report_serializes_as_named_flags() {
        let v = profile(ProfileParams { a: 0.5, b: 0.1 }, grid());
        let r = check_conditions(&v, 0.5, 0.0, &ConditionConstants::default()).unwrap();
        let js = serde_json::to_value(&r).unwrap();
        assert!(js["flags"]["C0"]["holds"].as_bool().unwrap());
        assert!(js["flags"]["Cg"]["margin"].is_number());
    }

    proptest! {
        #[test]
        fn theta_poincare(seed in any::<u64>()) {
            // zero-mean pi-periodic trigonometric rows: int f_theta^2 >= 4 int f^2
            let g = Grid::new(10.0, 9, 32).unwrap();
            let mut rng = Lcg64::new(seed);
            let coef: Vec<(f64, f64)> = (1..=4).map(|_| (rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))).collect();
            let f = Field::from_fn(g, |_, t| {
                coef.iter().enumerate().map(|(j, (c, s))| {
                    let k = 2.0 * (j + 1) as f64;
                    c * (k * t).cos() + s * (k * t).sin()
                }).sum()
            });
            let ft = deriv_theta(&f, 1).unwrap();
            let row = g.center();
            let lhs: f64 = ft.row(row).iter().map(|x| x * x).sum();
            let rhs: f64 = 4.0 * f.row(row).iter().map(|x| x * x).sum::<f64>();
            prop_assert!(lhs >= rhs * (1.0 - 1e-2));
        }
    }
}
