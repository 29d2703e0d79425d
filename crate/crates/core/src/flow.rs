//! Time integration of the rescaled flow with per-step modulation and the
//! `lambda`/`t` bookkeeping of the blowup frame.

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::diagnostics::{check_conditions, ConditionConstants, ConditionReport, OmegaTable};
use crate::error::{Error, Result};
use crate::grid::{symmetrize, theta_split, Field};
use crate::io::Snapshot;
use crate::modulation::{
    default_ortho_tol, gamma_sources, solve_modulation, update_estimators, Decomposition, EstimatorState,
};
use crate::rescaled::{beta, rescaled_rhs};

pub const DEFAULT_SAFETY: f64 = 0.4;
pub const DEFAULT_V_FLOOR: f64 = 0.05;

/// Explicit step size `safety * min(dy^2, min(v)^2 dtheta^2) / 4`, capped by the
/// transport limit `dy / (a L)` when `a > 0`.
pub fn cfl_dt(v: &Field, a: f64, safety: f64) -> f64 {
    let g = v.grid();
    let vmin = v.min().max(0.0);
    let diffusive = safety * (g.dy * g.dy).min(vmin * vmin * g.dtheta * g.dtheta) / 4.0;
    if a > 0.0 {
        diffusive.min(g.dy / (a * g.half_width))
    } else {
        diffusive
    }
}

/// Overwrites the two outermost y-rows on each side by quadratic extrapolation of
/// `v^2` from the next three rows inward.
pub fn fill_boundary(v: &mut Field) -> Result<()> {
    let g = *v.grid();
    let (ny, nt) = (g.ny, g.ntheta);
    let vals = v.values_mut();
    let sq = |x: f64| x * x;
    for i in 0..nt {
        for (outer, inner, step) in [(0usize, 1usize, 1isize), (ny - 1, ny - 2, -1)] {
            let at = |j: isize| (outer as isize + j * step) as usize * nt + i;
            let (f2, f3, f4) = (sq(vals[at(2)]), sq(vals[at(3)]), sq(vals[at(4)]));
            let f1 = 3.0 * f2 - 3.0 * f3 + f4;
            let f0 = 3.0 * f1 - 3.0 * f2 + f3;
            if !(f1 > 0.0 && f0 > 0.0) {
                return Err(Error::NonPositive(f1.min(f0)));
            }
            vals[inner * nt + i] = f1.sqrt();
            vals[outer * nt + i] = f0.sqrt();
        }
    }
    Ok(())
}

fn axpy(v: &Field, h: f64, k: &Field) -> Result<Field> {
    let mut out = v.zip_map(k, |x, d| x + h * d);
    fill_boundary(&mut out)?;
    Ok(out)
}

/// One classical RK4 step of the rescaled flow with `a` frozen. The result is
/// symmetrized and its boundary rows re-extrapolated.
pub fn rk4_step(v: &Field, a: f64, dtau: f64) -> Result<Field> {
    let k1 = rescaled_rhs(v, a)?;
    let k2 = rescaled_rhs(&axpy(v, 0.5 * dtau, &k1)?, a)?;
    let k3 = rescaled_rhs(&axpy(v, 0.5 * dtau, &k2)?, a)?;
    let k4 = rescaled_rhs(&axpy(v, dtau, &k3)?, a)?;
    let mut out = Vec::with_capacity(v.values().len());
    for idx in 0..v.values().len() {
        let inc = k1.values()[idx] + 2.0 * (k2.values()[idx] + k3.values()[idx]) + k4.values()[idx];
        out.push(v.values()[idx] + dtau / 6.0 * inc);
    }
    let mut next = symmetrize(&Field::from_values(*v.grid(), out)?);
    fill_boundary(&mut next)?;
    if !next.is_finite() || !(next.min() > 0.0) {
        return Err(Error::NonPositive(next.min()));
    }
    Ok(next)
}

/// The blowup-frame scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationState {
    pub tau: f64,
    pub t: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

/// `max|v2| / max|v1|` for the theta-mean / theta-dependent split.
pub fn asym_ratio(v: &Field) -> f64 {
    let (v1, v2) = theta_split(v);
    v2.max_abs() / v1.max_abs()
}

/// One row of the modulation series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub tau: f64,
    pub t: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub min_v: f64,
    pub asym_ratio: f64,
    pub estimators: [f64; 6],
}

pub const SERIES_HEADER: &str = "tau,t,lambda,a,b,beta,gamma1,gamma2,min_v,asym_ratio,M30,M1110,M21,M11,Aest,Best";

impl SeriesRow {
    pub fn to_array(&self) -> [f64; 16] {
        let e = self.estimators;
        [
            self.tau,
            self.t,
            self.lambda,
            self.a,
            self.b,
            self.beta,
            self.gamma1,
            self.gamma2,
            self.min_v,
            self.asym_ratio,
            e[0],
            e[1],
            e[2],
            e[3],
            e[4],
            e[5],
        ]
    }

    pub fn from_array(x: [f64; 16]) -> SeriesRow {
        SeriesRow {
            tau: x[0],
            t: x[1],
            lambda: x[2],
            a: x[3],
            b: x[4],
            beta: x[5],
            gamma1: x[6],
            gamma2: x[7],
            min_v: x[8],
            asym_ratio: x[9],
            estimators: [x[10], x[11], x[12], x[13], x[14], x[15]],
        }
    }
}

/// Rows of the modulation series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModulationSeries {
    pub rows: Vec<SeriesRow>,
}

/// Derivative at the last of three (possibly unevenly spaced) samples.
fn backward_derivative(x: [f64; 3], f: [f64; 3]) -> f64 {
    let (h1, h2) = (x[1] - x[0], x[2] - x[1]);
    if !(h1 > 0.0 && h2 > 0.0) {
        return 0.0;
    }
    // derivative of the quadratic interpolant at x[2]
    f[0] * h2 / (h1 * (h1 + h2)) - f[1] * (h1 + h2) / (h1 * h2) + f[2] * (h1 + 2.0 * h2) / (h2 * (h1 + h2))
}

/// The driver: radius field, frame scalars, latest decomposition and estimators.
#[derive(Debug, Clone)]
pub struct Simulation {
    v: Field,
    state: ModulationState,
    dec: Decomposition,
    estimators: EstimatorState,
    history: Vec<(f64, f64, f64)>,
    b0: f64,
    safety: f64,
    steps: usize,
}

impl Simulation {
    /// Starts from `v` with the initial guesses `(a0, b0)` refined by a modulation solve.
    pub fn new(v: Field, lambda0: f64, a0: f64, b0: f64, safety: f64) -> Result<Simulation> {
        v.ensure_radius()?;
        let dec = solve_modulation(&v, a0, b0, default_ortho_tol(&v))?;
        let state = ModulationState { tau: 0.0, t: 0.0, lambda: lambda0, a: dec.a, b: dec.b };
        let estimators = update_estimators(EstimatorState::new(b0), &dec, 0.0)?;
        Ok(Simulation { v, state, history: vec![(0.0, dec.a, dec.b)], dec, estimators, b0, safety, steps: 0 })
    }

    pub fn field(&self) -> &Field {
        &self.v
    }

    pub fn state(&self) -> ModulationState {
        self.state
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.dec
    }

    pub fn estimators(&self) -> EstimatorState {
        self.estimators
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// Step size the next call to [`advance`](Self::advance) would use without a cap.
    pub fn next_dt(&self) -> f64 {
        cfl_dt(&self.v, self.state.a, self.safety)
    }

    /// One RK4 step with frozen `a`, then a warm-started modulation solve. `lambda`
    /// follows `d lambda / d tau = -a lambda` exactly for the frozen `a`, and `t`
    /// integrates `lambda^2` exactly over the step.
    pub fn advance(&mut self, max_dtau: f64) -> Result<f64> {
        let a = self.state.a;
        let dtau = self.next_dt().min(max_dtau);
        let v_new = rk4_step(&self.v, a, dtau).map_err(|e| match e {
            Error::NonPositive(m) => Error::Unstable { tau: self.state.tau + dtau, min_v: m },
            other => other,
        })?;
        let dec = solve_modulation(&v_new, a, self.state.b, default_ortho_tol(&v_new))?;
        let s = &mut self.state;
        let growth = if a.abs() * dtau > 1e-12 { (1.0 - (-2.0 * a * dtau).exp()) / (2.0 * a) } else { dtau };
        s.t += s.lambda * s.lambda * growth;
        s.lambda *= (-a * dtau).exp();
        s.tau += dtau;
        s.a = dec.a;
        s.b = dec.b;
        self.history.push((s.tau, dec.a, dec.b));
        if self.history.len() > 3 {
            self.history.remove(0);
        }
        self.estimators = update_estimators(self.estimators, &dec, s.tau)?;
        self.v = v_new;
        self.dec = dec;
        self.steps += 1;
        Ok(dtau)
    }

    /// `(a_tau, b_tau)` from the last three accepted steps.
    pub fn parameter_rates(&self) -> (f64, f64) {
        if self.history.len() < 3 {
            return (0.0, 0.0);
        }
        let h = &self.history;
        let x = [h[0].0, h[1].0, h[2].0];
        (backward_derivative(x, [h[0].1, h[1].1, h[2].1]), backward_derivative(x, [h[0].2, h[1].2, h[2].2]))
    }

    /// The current series row.
    pub fn row(&self) -> SeriesRow {
        let s = self.state;
        let (a_tau, b_tau) = self.parameter_rates();
        let (gamma1, gamma2) = gamma_sources(s.a, s.b, a_tau, b_tau);
        SeriesRow {
            tau: s.tau,
            t: s.t,
            lambda: s.lambda,
            a: s.a,
            b: s.b,
            beta: beta(s.tau, self.b0),
            gamma1,
            gamma2,
            min_v: self.v.min(),
            asym_ratio: asym_ratio(&self.v),
            estimators: self.estimators.as_array(),
        }
    }
}

/// One condition-monitor record of a run: the flags plus the Lyapunov functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub step: usize,
    #[serde(flatten)]
    pub report: ConditionReport,
    pub omega: OmegaTable,
}

impl MonitorRecord {
    pub fn evaluate(sim: &Simulation, consts: &ConditionConstants) -> Result<MonitorRecord> {
        let s = sim.state();
        Ok(MonitorRecord {
            step: sim.steps(),
            report: check_conditions(sim.field(), s.a, s.tau, consts)?,
            omega: OmegaTable::compute(sim.field(), consts.sigma)?,
        })
    }
}

/// Why a run stopped without error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    TauMax {
        tau: f64,
    },
    /// `min v` dropped below the floor: the singularity guard fired
    VFloor {
        tau: f64,
        min_v: f64,
    },
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub series: ModulationSeries,
    pub snapshots: Vec<Snapshot>,
    pub reports: Vec<MonitorRecord>,
    /// assumptions that fail on the initial field (runs go ahead regardless)
    pub warnings: Vec<String>,
    pub stop: Option<StopReason>,
}

/// An aborted run: the error, the last condition report, and whatever was produced.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub last_report: Option<ConditionReport>,
    pub output: RunOutput,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for RunFailure {}

fn snapshot_of(sim: &Simulation) -> Snapshot {
    let s = sim.state();
    Snapshot { field: sim.field().clone(), tau: s.tau, t: s.t, lambda: s.lambda, a: s.a, b: s.b }
}

/// Advances from `v0` until `tau_max` or the `v_floor` guard, recording a series
/// row every `out_every` steps, snapshots at the configured times, and condition
/// reports every `report_every` steps.
#[allow(clippy::result_large_err)] // the failure carries the partial output by design
pub fn run(cfg: &SimConfig, v0: Field) -> std::result::Result<RunOutput, RunFailure> {
    let consts = cfg.condition_constants();
    let st = &cfg.stepping;
    let mut out = RunOutput {
        series: ModulationSeries::default(),
        snapshots: Vec::new(),
        reports: Vec::new(),
        warnings: Vec::new(),
        stop: None,
    };
    let fail = |error: Error, last_report: Option<ConditionReport>, output: RunOutput| RunFailure {
        error,
        last_report,
        output,
    };
    if let Err(e) = v0.ensure_radius() {
        return Err(fail(e, None, out));
    }
    let i = &cfg.initial;
    let mut sim = match Simulation::new(v0.clone(), i.lambda0, i.a0, i.b0, st.safety) {
        Ok(sim) => sim,
        Err(e) => {
            let report = check_conditions(&v0, i.a0, 0.0, &consts).ok();
            return Err(fail(e, report, out));
        }
    };
    match MonitorRecord::evaluate(&sim, &consts) {
        Ok(rec) => {
            out.warnings = rec
                .report
                .failed_assumptions()
                .into_iter()
                .map(|name| format!("initial field violates {name}"))
                .collect();
            out.reports.push(rec);
        }
        Err(e) => return Err(fail(e, None, out)),
    }
    let mut pending: Vec<f64> = st.snapshot_taus.iter().copied().filter(|t| *t <= st.tau_max).collect();
    pending.sort_by(|a, b| b.total_cmp(a));
    let take_snapshots = |sim: &Simulation, pending: &mut Vec<f64>, out: &mut RunOutput| {
        while pending.last().is_some_and(|t| *t <= sim.state().tau + 1e-12) {
            pending.pop();
            out.snapshots.push(snapshot_of(sim));
        }
    };
    take_snapshots(&sim, &mut pending, &mut out);
    out.series.rows.push(sim.row());

    while sim.state().tau < st.tau_max - 1e-12 {
        let tau = sim.state().tau;
        let mut cap = st.tau_max - tau;
        if let Some(next) = pending.last() {
            cap = cap.min(next - tau);
        }
        if let Err(e) = sim.advance(cap) {
            let report = check_conditions(sim.field(), sim.state().a, tau, &consts).ok();
            out.series.rows.push(sim.row());
            return Err(fail(e, report, out));
        }
        let steps = sim.steps();
        if steps % st.out_every == 0 {
            out.series.rows.push(sim.row());
        }
        take_snapshots(&sim, &mut pending, &mut out);
        if steps % st.report_every == 0 {
            match MonitorRecord::evaluate(&sim, &consts) {
                Ok(rec) => out.reports.push(rec),
                Err(e) => return Err(fail(e, None, out)),
            }
        }
        let min_v = sim.field().min();
        if min_v < st.v_floor {
            out.stop = Some(StopReason::VFloor { tau: sim.state().tau, min_v });
            break;
        }
    }
    if out.series.rows.last().map(|r| r.tau) != Some(sim.state().tau) {
        out.series.rows.push(sim.row());
    }
    if out.reports.last().map(|r| r.step) != Some(sim.steps()) {
        match MonitorRecord::evaluate(&sim, &consts) {
            Ok(rec) => out.reports.push(rec),
            Err(e) => return Err(fail(e, None, out)),
        }
    }
    if out.stop.is_none() {
        out.stop = Some(StopReason::TauMax { tau: sim.state().tau });
    }
    Ok(out)
}

/// Fitted singular time and asymptotic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct FitResult {
    #[serde(rename = "T")]
    pub t_singular: f64,
    pub lambda0: f64,
    /// least-squares constant in `b = c_b / (-log(T - t))`
    pub c_b: f64,
    /// least-squares constant in `c - 1 = c_c / (-log(T - t))` with `c = 1/2 + a`
    pub c_c: f64,
    pub a_mean: f64,
    pub rms_lambda: f64,
    pub rms_b: f64,
    pub rms_c: f64,
    pub rows_used: usize,
}

/// Minimum series length accepted by [`fit_singularity`].
pub const MIN_FIT_ROWS: usize = 100;

/// Fits `lambda^2 = lambda0^2 * 2 a (T - t)` by linear least squares, then the
/// constants of the `b` and `c` laws.
///
/// Once `lambda^2` falls below about `1e-9 t`, the recorded `t` no longer resolves
/// `T - t` in double precision; those rows are dropped before taking the last half.
pub fn fit_singularity(series: &ModulationSeries) -> Result<FitResult> {
    let rows = &series.rows;
    if rows.len() < MIN_FIT_ROWS {
        return Err(Error::InsufficientDecay(format!("{} rows, need at least {MIN_FIT_ROWS}", rows.len())));
    }
    let (first, last) = (rows[0].lambda, rows[rows.len() - 1].lambda);
    if !(first > 0.0 && last > 0.0 && last <= first * (-2.0f64).exp()) {
        return Err(Error::InsufficientDecay(format!(
            "lambda went from {first} to {last}, need a drop by at least e^2"
        )));
    }
    let resolvable: Vec<&SeriesRow> =
        rows.iter().filter(|r| r.lambda * r.lambda > 1e-9 * r.t.abs().max(f64::MIN_POSITIVE)).collect();
    let window = &resolvable[resolvable.len() / 2..];
    if window.len() < 3 {
        return Err(Error::InsufficientDecay("too few rows resolve T - t".into()));
    }
    let n = window.len() as f64;
    let (mt, ml) =
        (window.iter().map(|r| r.t).sum::<f64>() / n, window.iter().map(|r| r.lambda * r.lambda).sum::<f64>() / n);
    let stt: f64 = window.iter().map(|r| (r.t - mt).powi(2)).sum();
    let stl: f64 = window.iter().map(|r| (r.t - mt) * (r.lambda * r.lambda - ml)).sum();
    let slope = stl / stt;
    let k = -slope;
    if !(k > 0.0) {
        return Err(Error::InsufficientDecay("lambda^2 does not decrease in t".into()));
    }
    let t_singular = mt + ml / k;
    let last_t = rows[rows.len() - 1].t;
    if !(t_singular > last_t) {
        return Err(Error::InsufficientDecay(format!("fitted T = {t_singular} does not exceed last t = {last_t}")));
    }
    let a_mean = window.iter().map(|r| r.a).sum::<f64>() / n;
    let lambda0 = (k / (2.0 * a_mean)).sqrt();
    let rms_lambda =
        (window.iter().map(|r| (r.lambda * r.lambda - k * (t_singular - r.t)).powi(2)).sum::<f64>() / n).sqrt();

    let xs: Vec<f64> = window.iter().map(|r| 1.0 / -(t_singular - r.t).ln()).collect();
    let fit_const = |ys: &[f64]| {
        let c = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
        let rms = (xs.iter().zip(ys).map(|(x, y)| (y - c * x).powi(2)).sum::<f64>() / n).sqrt();
        (c, rms)
    };
    let bs: Vec<f64> = window.iter().map(|r| r.b).collect();
    let cs: Vec<f64> = window.iter().map(|r| r.a - 0.5).collect();
    let (c_b, rms_b) = fit_const(&bs);
    let (c_c, rms_c) = fit_const(&cs);
    Ok(FitResult { t_singular, lambda0, c_b, c_c, a_mean, rms_lambda, rms_b, rms_c, rows_used: window.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn cfl_example() {
        let g = Grid::new(20.0, 401, 32).unwrap();
        let v = Field::constant(g, SQRT_2);
        let dt = cfl_dt(&v, 0.0, 0.4);
        let expected = 0.4 * (0.01f64).min(2.0 * (PI / 16.0).powi(2)) / 4.0;
        assert_abs_diff_eq!(dt, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(dt, 0.001, epsilon = 1e-12);
        let fine = Grid::new(20.0, 801, 32).unwrap();
        assert_abs_diff_eq!(cfl_dt(&Field::constant(fine, SQRT_2), 0.0, 0.4), dt / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn boundary_fill_is_exact_on_quadratic_squares() {
        let g = Grid::new(10.0, 41, 8).unwrap();
        let exact = Field::from_profile(g, |y| (2.0 + 0.1 * y * y).sqrt());
        let mut v = exact.clone();
        for j in [0, 1, g.ny - 2, g.ny - 1] {
            for i in 0..g.ntheta {
                v.values_mut()[g.index(j, i)] = 7.0;
            }
        }
        fill_boundary(&mut v).unwrap();
        assert!(v.sub(&exact).max_abs() < 1e-12);
    }

    #[test]
    fn constant_field_matches_ode() {
        // v^2 = (v0^2 - 1/a) e^{2 a tau} + 1/a
        let g = Grid::new(10.0, 21, 8).unwrap();
        let (a, v0) = (0.4, 1.3);
        let exact = |tau: f64| ((v0 * v0 - 1.0 / a) * (2.0 * a * tau).exp() + 1.0 / a).sqrt();
        let errs: Vec<f64> = [0.1, 0.05]
            .iter()
            .map(|&h| {
                let v = rk4_step(&Field::constant(g, v0), a, h).unwrap();
                (v.at(10, 0) - exact(h)).abs()
            })
            .collect();
        assert!(errs[0] < 1e-7);
        let slope = (errs[0] / errs[1]).log2();
        assert!(slope > 4.5, "local order {slope}");
    }

    #[test]
    fn backward_derivative_is_exact_for_quadratics() {
        let f = |x: f64| 3.0 * x * x - x + 2.0;
        let x = [0.1, 0.25, 0.32];
        let d = backward_derivative(x, [f(x[0]), f(x[1]), f(x[2])]);
        assert_abs_diff_eq!(d, 6.0 * 0.32 - 1.0, epsilon = 1e-12);
    }

    fn synthetic(t_sing: f64, rows: usize) -> ModulationSeries {
        // lambda = sqrt(T - t), a = 1/2, b = 1 / (-log(T - t)), sampled in tau
        let rows = (0..rows)
            .map(|i| {
                let tau = 0.05 * i as f64;
                let gap = t_sing * (-tau).exp();
                let t = t_sing - gap;
                let row =
                    [tau, t, gap.sqrt(), 0.5, 1.0 / -gap.ln(), 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
                SeriesRow::from_array(row)
            })
            .collect();
        ModulationSeries { rows }
    }

    #[test]
    fn fit_recovers_synthetic_law() {
        let series = synthetic(0.8, 400);
        let fit = fit_singularity(&series).unwrap();
        assert_abs_diff_eq!(fit.t_singular, 0.8, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.lambda0, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.c_b, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(fit.c_c, 0.0, epsilon = 1e-12);
        assert!(fit.t_singular > series.rows.last().unwrap().t);
    }

    #[test]
    fn fit_rejects_flat_or_short_series() {
        let mut flat = synthetic(1.0, 200);
        for r in &mut flat.rows {
            r.lambda = 1.0;
        }
        assert!(matches!(fit_singularity(&flat), Err(Error::InsufficientDecay(_))));
        let short = ModulationSeries { rows: synthetic(1.0, 10).rows };
        assert!(matches!(fit_singularity(&short), Err(Error::InsufficientDecay(_))));
    }

    #[test]
    fn lambda_and_t_bookkeeping_on_the_cylinder() {
        let g = Grid::new(10.0, 41, 8).unwrap();
        let mut sim = Simulation::new(Field::constant(g, SQRT_2), 1.0, 0.5, 0.0, 0.4).unwrap();
        while sim.state().tau < 3.0 - 1e-12 {
            sim.advance(3.0 - sim.state().tau).unwrap();
        }
        let s = sim.state();
        assert_abs_diff_eq!(s.lambda, (-0.5 * s.tau).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(s.t, 1.0 - (-s.tau).exp(), epsilon = 1e-13);
        assert!(sim.field().map(|x| x - SQRT_2).max_abs() < 1e-13);
    }

    #[test]
    fn symmetric_input_stays_symmetric() {
        let g = Grid::new(10.0, 41, 8).unwrap();
        let v = Field::from_fn(g, |y, t| 1.5 + 0.1 * (-y * y / 4.0).exp() * (1.0 + 0.3 * (2.0 * t).cos()));
        let next = rk4_step(&v, 0.5, 0.01).unwrap();
        assert_eq!(symmetrize(&next), next);
    }
}
