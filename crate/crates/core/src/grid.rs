//! Uniform tensor grids over `[-L, L] x [0, 2pi)`, sampled fields, and the
//! fourth-order difference operators every other module is built on.
//!
//! Storage is y-major: node `(j, i)` (y index `j`, theta index `i`) lives at
//! `j * ntheta + i`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform discretization of the neck region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub half_width: f64,
    pub ny: usize,
    pub ntheta: usize,
    pub dy: f64,
    pub dtheta: f64,
}

impl Grid {
    pub fn new(half_width: f64, ny: usize, ntheta: usize) -> Result<Grid> {
        if ny.is_multiple_of(2) {
            return Err(Error::Grid(format!("Ny must be odd (got {ny})")));
        }
        if ny < 9 {
            return Err(Error::Grid(format!("Ny must be at least 9 (got {ny})")));
        }
        if !ntheta.is_multiple_of(4) || ntheta < 8 {
            return Err(Error::Grid(format!("Ntheta must be a multiple of 4 and at least 8 (got {ntheta})")));
        }
        if !(half_width >= 10.0) || !half_width.is_finite() {
            return Err(Error::Grid(format!("L too small (got {half_width}, need >= 10)")));
        }
        Ok(Grid { half_width, ny, ntheta, dy: 2.0 * half_width / (ny - 1) as f64, dtheta: 2.0 * PI / ntheta as f64 })
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        // measured from the center node so that y(ny-1-j) == -y(j) exactly
        (j as f64 - (self.ny / 2) as f64) * self.dy
    }

    #[inline]
    pub fn theta(&self, i: usize) -> f64 {
        i as f64 * self.dtheta
    }

    /// Number of nodes; never zero.
    #[inline]
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.ny * self.ntheta
    }

    #[inline]
    pub fn index(&self, j: usize, i: usize) -> usize {
        j * self.ntheta + i
    }

    /// Index of the neck center `y = 0`.
    pub fn center(&self) -> usize {
        self.ny / 2
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }
}

/// Real samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid, c: f64) -> Field {
        Field { grid, values: vec![c; grid.len()] }
    }

    pub fn zeros(grid: Grid) -> Field {
        Field::constant(grid, 0.0)
    }

    /// Samples `f(y, theta)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.ntheta {
                values.push(f(y, grid.theta(i)));
            }
        }
        Field { grid, values }
    }

    /// Samples a theta-independent profile `f(y)`.
    pub fn from_profile(grid: Grid, f: impl Fn(f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let fy = f(grid.y(j));
            values.extend(std::iter::repeat_n(fy, grid.ntheta));
        }
        Field { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, j: usize, i: usize) -> f64 {
        self.values[self.grid.index(j, i)]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let nt = self.grid.ntheta;
        &self.values[j * nt..(j + 1) * nt]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// Pointwise map with access to the node coordinates.
    pub fn map_with_coords(&self, f: impl Fn(f64, f64, f64) -> f64) -> Field {
        let g = self.grid;
        let mut values = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            let y = g.y(j);
            for i in 0..g.ntheta {
                values.push(f(y, g.theta(i), self.values[g.index(j, i)]));
            }
        }
        Field { grid: g, values }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|x| s * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Checks the radius-field invariant (finite and strictly positive).
    pub fn ensure_radius(&self) -> Result<()> {
        let m = self.min();
        if !(m > 0.0) || !self.is_finite() {
            return Err(Error::NonPositive(m));
        }
        Ok(())
    }
}

/// Finite-difference weights for the derivatives of order `0..=max_order` at
/// `z` from samples at `x` (Fornberg's recursion).
pub fn fd_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn check_order(order: usize) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(Error::DerivativeOrder(order))
    }
}

fn central_half_width(order: usize) -> usize {
    if order == 3 {
        3
    } else {
        2
    }
}

/// Interior stencil, written in pairwise-difference form so constants map to exact zeros.
#[inline]
fn central(order: usize, f: impl Fn(isize) -> f64) -> f64 {
    match order {
        1 => (8.0 * (f(1) - f(-1)) - (f(2) - f(-2))) / 12.0,
        2 => (16.0 * (f(1) + f(-1)) - (f(2) + f(-2)) - 30.0 * f(0)) / 12.0,
        _ => (8.0 * (f(2) - f(-2)) - 13.0 * (f(1) - f(-1)) - (f(3) - f(-3))) / 8.0,
    }
}

/// One-sided window `(start, weights)` for boundary node `j`: `order + 4` points,
/// fourth-order accurate, shifted to stay inside `[0, ny)`.
fn boundary_stencil(order: usize, j: usize, ny: usize) -> (usize, Vec<f64>) {
    let width = order + 4;
    let start = if j < ny / 2 { 0 } else { ny - width };
    let offsets: Vec<f64> = (0..width).map(|k| (start + k) as f64).collect();
    let w = fd_weights(j as f64, &offsets, order);
    (start, w[order].clone())
}

/// `d^order f / dy^order`: fourth-order central differences in the interior,
/// fourth-order one-sided stencils near `y = +-L`.
pub fn deriv_y(f: &Field, order: usize) -> Result<Field> {
    check_order(order)?;
    let g = *f.grid();
    let (ny, nt) = (g.ny, g.ntheta);
    let src = f.values();
    let mut out = vec![0.0; g.len()];
    let scale = g.dy.powi(order as i32).recip();
    let hw = central_half_width(order);

    for j in hw..ny - hw {
        let row = &mut out[j * nt..(j + 1) * nt];
        for (i, o) in row.iter_mut().enumerate() {
            let at = |k: isize| src[(j as isize + k) as usize * nt + i];
            *o = central(order, at) * scale;
        }
    }
    for j in (0..hw).chain(ny - hw..ny) {
        let (start, w) = boundary_stencil(order, j, ny);
        for i in 0..nt {
            // weights sum to zero, so differencing against the node keeps constants exact
            let fj = src[j * nt + i];
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                if start + k != j {
                    acc += wk * (src[(start + k) * nt + i] - fj);
                }
            }
            out[j * nt + i] = acc * scale;
        }
    }
    Ok(Field { grid: g, values: out })
}

/// `d^order f / dtheta^order` with periodic wraparound.
pub fn deriv_theta(f: &Field, order: usize) -> Result<Field> {
    check_order(order)?;
    let g = *f.grid();
    let nt = g.ntheta as isize;
    let src = f.values();
    let mut out = vec![0.0; g.len()];
    let scale = g.dtheta.powi(order as i32).recip();
    for j in 0..g.ny {
        let row = &src[j * g.ntheta..(j + 1) * g.ntheta];
        let dst = &mut out[j * g.ntheta..(j + 1) * g.ntheta];
        for (i, o) in dst.iter_mut().enumerate() {
            let at = |k: isize| row[(i as isize + k).rem_euclid(nt) as usize];
            *o = central(order, at) * scale;
        }
    }
    Ok(Field { grid: g, values: out })
}

fn repeated(f: &Field, total: usize, op: fn(&Field, usize) -> Result<Field>) -> Result<Field> {
    let mut cur = f.clone();
    let mut left = total;
    while left > 0 {
        let step = left.min(3);
        cur = op(&cur, step)?;
        left -= step;
    }
    Ok(cur)
}

/// Mixed partial `dy^m dtheta^n f`, taking the theta derivatives first.
/// Orders above 3 in one variable are formed by composing the order <= 3 operators.
pub fn partial(f: &Field, m: usize, n: usize) -> Result<Field> {
    let ft = repeated(f, n, deriv_theta)?;
    repeated(&ft, m, deriv_y)
}

/// Quadrature weights in y: the trapezoid rule with fourth-order Gregory end
/// corrections `(3/8, 7/6, 23/24)`. Interior weights stay `dy`, so rapidly
/// decaying integrands keep the trapezoid rule's spectral accuracy.
pub fn trapezoid_weights(g: &Grid) -> Vec<f64> {
    const END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    (0..g.ny)
        .map(|j| {
            let from_edge = j.min(g.ny - 1 - j);
            END.get(from_edge).copied().unwrap_or(1.0) * g.dy
        })
        .collect()
}

/// `int int f * weight dtheta dy`: corrected trapezoid in y, rectangle (periodic) rule in theta.
pub fn integrate(f: &Field, weight: &Field) -> Result<f64> {
    if f.grid() != weight.grid() {
        return Err(Error::Shape("integrand and weight live on different grids".into()));
    }
    let g = *f.grid();
    let wy = trapezoid_weights(&g);
    let mut total = 0.0;
    for (j, wj) in wy.iter().enumerate() {
        let mut row = 0.0;
        for i in 0..g.ntheta {
            let k = g.index(j, i);
            row += f.values[k] * weight.values[k];
        }
        total += wj * row * g.dtheta;
    }
    Ok(total)
}

/// Corrected trapezoid rule for a 1-D profile sampled at the grid's y nodes.
pub fn integrate_profile(g: &Grid, f: &[f64]) -> f64 {
    trapezoid_weights(g).iter().zip(f).fold(0.0, |acc, (w, x)| acc + w * x)
}

/// Average over the group generated by `y -> -y` and `theta -> theta + pi`.
/// Sums are paired so the four images of a node receive bit-identical values.
pub fn symmetrize(f: &Field) -> Field {
    let g = *f.grid();
    let (ny, nt) = (g.ny, g.ntheta);
    let half = nt / 2;
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    for j in 0..ny {
        let jr = ny - 1 - j;
        for i in 0..nt {
            let ip = (i + half) % nt;
            let a = v[j * nt + i] + v[jr * nt + i];
            let b = v[j * nt + ip] + v[jr * nt + ip];
            out[j * nt + i] = 0.25 * (a + b);
        }
    }
    Field { grid: g, values: out }
}

/// Theta-mean of each y row.
pub fn theta_mean(f: &Field) -> Vec<f64> {
    let g = f.grid();
    (0..g.ny).map(|j| f.row(j).iter().sum::<f64>() / g.ntheta as f64).collect()
}

/// Splits `v` into its theta-average `v1` (replicated across theta) and the remainder `v2`.
pub fn theta_split(v: &Field) -> (Field, Field) {
    let g = *v.grid();
    let mean = theta_mean(v);
    let mut v1 = Vec::with_capacity(g.len());
    for m in &mean {
        v1.extend(std::iter::repeat_n(*m, g.ntheta));
    }
    let v1 = Field { grid: g, values: v1 };
    let v2 = v.sub(&v1);
    (v1, v2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid() -> Grid {
        Grid::new(20.0, 401, 32).unwrap()
    }

    #[test]
    fn make_grid_spacings() {
        let g = grid();
        assert_abs_diff_eq!(g.dy, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g.dtheta, PI / 16.0, epsilon = 1e-15);
        assert_eq!(g.y(g.center()), 0.0);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        let e = Grid::new(20.0, 400, 32).unwrap_err().to_string();
        assert!(e.contains("Ny must be odd"), "{e}");
        let e = Grid::new(5.0, 401, 32).unwrap_err().to_string();
        assert!(e.contains("L too small"), "{e}");
        assert!(Grid::new(20.0, 401, 30).is_err());
        assert!(Grid::new(20.0, 401, 4).is_err());
        assert!(Grid::new(20.0, 7, 8).is_err());
    }

    #[test]
    fn fornberg_matches_central_weights() {
        let x = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let w = fd_weights(0.0, &x, 2);
        let d1 = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
        for k in 0..5 {
            assert_abs_diff_eq!(w[1][k], d1[k], epsilon = 1e-14);
            assert_abs_diff_eq!(w[2][k], d2[k], epsilon = 1e-14);
        }
    }

    #[test]
    fn second_derivative_of_square_is_two() {
        let g = grid();
        let f = Field::from_fn(g, |y, _| y * y);
        let d = deriv_y(&f, 2).unwrap();
        for &x in d.values() {
            assert_abs_diff_eq!(x, 2.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn exact_on_quartics_all_orders() {
        let g = Grid::new(10.0, 41, 8).unwrap();
        let f = Field::from_fn(g, |y, _| 0.3 * y.powi(4) - y.powi(3) + 2.0 * y - 1.0);
        let exact =
            [|y: f64| 1.2 * y.powi(3) - 3.0 * y * y + 2.0, |y: f64| 3.6 * y * y - 6.0 * y, |y: f64| 7.2 * y - 6.0];
        for order in 1..=3 {
            let d = deriv_y(&f, order).unwrap();
            for j in 0..g.ny {
                let e = exact[order - 1](g.y(j));
                assert!((d.at(j, 0) - e).abs() < 1e-8 * (1.0 + e.abs()), "order {order} j {j}");
            }
        }
    }

    #[test]
    fn derivatives_of_constants_vanish() {
        let g = grid();
        let f = Field::constant(g, std::f64::consts::SQRT_2);
        for order in 1..=3 {
            assert!(deriv_y(&f, order).unwrap().max_abs() < 1e-10);
            assert_eq!(deriv_theta(&f, order).unwrap().max_abs(), 0.0);
        }
        // interior central stencils are exact zeros
        let d = deriv_y(&f, 2).unwrap();
        assert_eq!(d.at(g.center(), 0), 0.0);
    }

    #[test]
    fn odd_theta_derivative_of_even_function_vanishes_at_zero() {
        let g = grid();
        let f = Field::from_fn(g, |_, t| (2.0 * t).cos());
        let d = deriv_theta(&f, 1).unwrap();
        for j in 0..g.ny {
            assert_abs_diff_eq!(d.at(j, 0), 0.0, epsilon = 1e-13);
        }
    }

    fn max_err_y(ny: usize) -> f64 {
        let g = Grid::new(10.0, ny, 8).unwrap();
        let l = g.half_width;
        let f = Field::from_fn(g, |y, _| (PI * y / l).sin());
        let d = deriv_y(&f, 1).unwrap();
        (0..g.ny).map(|j| (d.at(j, 0) - PI / l * (PI * g.y(j) / l).cos()).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn deriv_y_is_fourth_order() {
        let e: Vec<f64> = [41, 81, 161].iter().map(|&n| max_err_y(n)).collect();
        for w in e.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope > 3.7, "slope {slope}, errors {e:?}");
        }
    }

    #[test]
    fn deriv_theta_is_fourth_order() {
        let err = |nt: usize| {
            let g = Grid::new(10.0, 9, nt).unwrap();
            let f = Field::from_fn(g, |_, t| t.cos());
            let d = deriv_theta(&f, 2).unwrap();
            d.add(&f).max_abs()
        };
        let e: Vec<f64> = [16, 32, 64].iter().map(|&n| err(n)).collect();
        for w in e.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope > 3.8, "slope {slope}, errors {e:?}");
        }
    }

    #[test]
    fn integrate_constants_and_gaussians() {
        let g = grid();
        let one = Field::constant(g, 1.0);
        assert_abs_diff_eq!(integrate(&one, &one).unwrap(), 40.0 * 2.0 * PI, epsilon = 1e-10);
        let gauss = Field::from_fn(g, |y, _| (-0.5 * y * y).exp());
        let expect = 2.0 * PI * (2.0 * PI).sqrt();
        assert_abs_diff_eq!(integrate(&gauss, &one).unwrap(), expect, epsilon = 1e-10);
        let c = Field::from_fn(g, |_, t| t.cos());
        assert_abs_diff_eq!(integrate(&c, &one).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_is_exact_for_piecewise_linear() {
        let g = Grid::new(10.0, 21, 8).unwrap();
        let f = Field::from_fn(g, |y, _| 3.0 * y + 1.0);
        let one = Field::constant(g, 1.0);
        assert_abs_diff_eq!(integrate(&f, &one).unwrap(), 20.0 * 2.0 * PI, epsilon = 1e-11);
    }

    #[test]
    fn symmetrize_kills_odd_parts() {
        let g = grid();
        assert_eq!(symmetrize(&Field::from_fn(g, |y, _| y)).max_abs(), 0.0);
        assert!(symmetrize(&Field::from_fn(g, |_, t| t.cos())).max_abs() < 1e-15);
        let s = Field::from_fn(g, |y, t| 1.0 + y * y + (2.0 * t).cos());
        let ss = symmetrize(&s);
        assert!(ss.sub(&s).max_abs() < 1e-13);
    }

    #[test]
    fn theta_split_separates_modes() {
        let g = grid();
        let v = Field::from_fn(g, |_, t| 2.0 + 0.1 * (2.0 * t).cos());
        let (v1, v2) = theta_split(&v);
        assert!(v1.map(|x| x - 2.0).max_abs() < 1e-14);
        assert!(v2.sub(&Field::from_fn(g, |_, t| 0.1 * (2.0 * t).cos())).max_abs() < 1e-14);
        let c = Field::constant(g, std::f64::consts::SQRT_2);
        let (c1, c2) = theta_split(&c);
        assert!(c1.sub(&c).max_abs() < 1e-15 && c2.max_abs() < 1e-15);
    }
}
