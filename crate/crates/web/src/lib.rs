//! WebAssembly bindings for the demo page in `www/`.
//!
//! Everything crosses the boundary as flat `f64` arrays so the page needs no glue
//! beyond what `wasm-bindgen` generates.

use neckpinch::config::{normalized_shape, PerturbationShape};
use neckpinch::flow::{asym_ratio, Simulation, DEFAULT_SAFETY};
use neckpinch::oracles::spectrum_eigenvalues;
use neckpinch::rescaled::{profile_value, ProfileParams};
use neckpinch::{Field, Grid};
use wasm_bindgen::prelude::*;

fn js_err(e: neckpinch::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Samples of the profile `V_{a,b}` on `n` points of `[-L, L]`, as `[y0, v0, y1, v1, ...]`.
#[wasm_bindgen]
pub fn profile_curve(a: f64, b: f64, half_width: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let params = ProfileParams { a, b };
    (0..n)
        .flat_map(|j| {
            let y = -half_width + 2.0 * half_width * j as f64 / (n - 1) as f64;
            [y, profile_value(params, y)]
        })
        .collect()
}

/// Lowest `count` eigenvalues of the discretized `L_alpha - alpha` on `[-L, L]`.
#[wasm_bindgen]
pub fn spectrum(alpha: f64, ny: usize, half_width: f64, count: usize) -> Result<Vec<f64>, JsError> {
    spectrum_eigenvalues(alpha, ny, half_width, count).map_err(js_err)
}

/// Evolves `V_{1/2,b0} + amp2 cos(2 theta) e^{-y^2/4} + amp4 q(y)` to `tau_max`
/// (q the normalized quartic mode) and returns rows `[tau, a, b, asym_ratio, min_v]`
/// roughly every `sample_dtau`.
#[wasm_bindgen]
pub fn short_run(b0: f64, amp2: f64, amp4: f64, tau_max: f64, sample_dtau: f64) -> Result<Vec<f64>, JsError> {
    let grid = Grid::new(20.0, 101, 8).map_err(js_err)?;
    let params = ProfileParams { a: 0.5, b: b0 };
    let v0 = Field::from_fn(grid, |y, t| {
        profile_value(params, y)
            + amp2 * (-y * y / 4.0).exp() * (2.0 * t).cos()
            + amp4 * normalized_shape(PerturbationShape::Hermite4, 0.5, y)
    });
    let mut sim = Simulation::new(v0, 1.0, 0.5, b0, DEFAULT_SAFETY).map_err(js_err)?;
    let sample = |sim: &Simulation| {
        let s = sim.state();
        [s.tau, s.a, s.b, asym_ratio(sim.field()), sim.field().min()]
    };
    let mut out: Vec<f64> = sample(&sim).to_vec();
    let mut next = sample_dtau;
    while sim.state().tau < tau_max - 1e-12 {
        let cap = (tau_max - sim.state().tau).min(next - sim.state().tau);
        sim.advance(cap).map_err(js_err)?;
        if sim.state().tau >= next - 1e-12 {
            out.extend(sample(&sim));
            next += sample_dtau;
        }
    }
    Ok(out)
}
