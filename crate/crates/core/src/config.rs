//! Run configuration: a two-level JSON document with defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::diagnostics::ConditionConstants;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::modulation::orthogonal_quartic;
use crate::rescaled::{profile_value, ProfileParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "Ny")]
    pub ny: usize,
    #[serde(rename = "Ntheta")]
    pub ntheta: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.half_width, self.ny, self.ntheta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitialKind {
    #[serde(rename = "profile")]
    Profile,
    #[serde(rename = "profile+perturbation")]
    ProfilePlusPerturbation,
    #[serde(rename = "file")]
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationShape {
    /// `e^{-y^2/4}`
    Gauss,
    /// the even quartic orthogonal to both slow modes after gauging
    Hermite4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub amplitude: f64,
    pub profile: PerturbationShape,
    #[serde(default)]
    pub mode: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub a0: f64,
    pub b0: f64,
    #[serde(default)]
    pub perturbation: Vec<Perturbation>,
    /// NPL1 snapshot for `kind = "file"`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "one")]
    pub lambda0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstantsConfig {
    #[serde(rename = "Sigma")]
    pub sigma: f64,
    pub kappa: f64,
    pub delta: f64,
    pub eps0: f64,
    #[serde(rename = "C0big")]
    pub c0_big: f64,
    pub lesssim: f64,
    pub c0: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        let d = ConditionConstants::default();
        ConstantsConfig {
            sigma: d.sigma,
            kappa: d.kappa,
            delta: d.delta,
            eps0: d.eps0,
            c0_big: d.c0_big,
            lesssim: d.lesssim,
            c0: d.c0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteppingConfig {
    pub safety: f64,
    pub tau_max: f64,
    pub v_floor: f64,
    pub out_every: usize,
    /// condition reports are written every this many steps (plus first and last)
    pub report_every: usize,
    pub snapshot_taus: Vec<f64>,
}

impl Default for SteppingConfig {
    fn default() -> Self {
        SteppingConfig {
            safety: 0.4,
            tau_max: 10.0,
            v_floor: 0.05,
            out_every: 1,
            report_every: 1000,
            snapshot_taus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub stepping: SteppingConfig,
    #[serde(default)]
    pub seed: u64,
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        let i = &self.initial;
        if !(i.a0 > 0.25 && i.a0 < 1.0) {
            return Err(Error::Config(format!("a0 must lie in (1/4, 1) (got {})", i.a0)));
        }
        if !(i.b0 > 0.0 && i.b0 < 0.5) {
            return Err(Error::Config(format!("b0 must lie in (0, 0.5) (got {})", i.b0)));
        }
        if !(i.lambda0 > 0.0 && i.lambda0.is_finite()) {
            return Err(Error::Config(format!("lambda0 must be positive (got {})", i.lambda0)));
        }
        for p in &i.perturbation {
            if p.mode % 2 != 0 {
                return Err(Error::Config(format!("θ-mode must be even (got {})", p.mode)));
            }
            if p.mode > 4 {
                return Err(Error::Config(format!("θ-mode must be 0, 2 or 4 (got {})", p.mode)));
            }
            if !p.amplitude.is_finite() {
                return Err(Error::Config("perturbation amplitude must be finite".into()));
            }
        }
        match i.kind {
            InitialKind::File if i.file.is_none() => {
                return Err(Error::Config("kind \"file\" needs a \"file\" path".into()))
            }
            InitialKind::Profile if !i.perturbation.is_empty() => {
                return Err(Error::Config("kind \"profile\" takes no perturbation".into()))
            }
            _ => {}
        }
        let c = &self.constants;
        for (name, x) in [
            ("Sigma", c.sigma),
            ("kappa", c.kappa),
            ("delta", c.delta),
            ("eps0", c.eps0),
            ("C0big", c.c0_big),
            ("lesssim", c.lesssim),
            ("c0", c.c0),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive (got {x})")));
            }
        }
        let s = &self.stepping;
        if !(s.safety > 0.0 && s.safety <= 1.0) {
            return Err(Error::Config(format!("safety must lie in (0, 1] (got {})", s.safety)));
        }
        if !(s.tau_max >= 0.0 && s.tau_max.is_finite()) {
            return Err(Error::Config(format!("tau_max must be finite and non-negative (got {})", s.tau_max)));
        }
        if !(s.v_floor >= 0.0) {
            return Err(Error::Config(format!("v_floor must be non-negative (got {})", s.v_floor)));
        }
        if s.out_every == 0 || s.report_every == 0 {
            return Err(Error::Config("out_every and report_every must be at least 1".into()));
        }
        if s.snapshot_taus.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("snapshot_taus must be non-negative".into()));
        }
        Ok(())
    }

    pub fn condition_constants(&self) -> ConditionConstants {
        let c = &self.constants;
        ConditionConstants {
            kappa: c.kappa,
            delta: c.delta,
            eps0: c.eps0,
            sigma: c.sigma,
            c0_big: c.c0_big,
            lesssim: c.lesssim,
            b0: self.initial.b0,
            c0: c.c0,
        }
    }

    /// Initial radius for the `profile` and `profile+perturbation` kinds. The
    /// `file` kind is loaded by the caller (see `io::read_snapshot`).
    pub fn initial_field(&self) -> Result<Field> {
        let g = self.grid.build()?;
        let i = &self.initial;
        if i.kind == InitialKind::File {
            return Err(Error::Config("initial field of kind \"file\" must be read from its snapshot".into()));
        }
        let params = ProfileParams { a: i.a0, b: i.b0 };
        let shapes: Vec<(f64, PerturbationShape, f64, f64)> = i
            .perturbation
            .iter()
            .map(|p| (p.amplitude, p.profile, p.mode as f64, shape_sup(p.profile, i.a0)))
            .collect();
        let v = Field::from_fn(g, |y, t| {
            let mut x = profile_value(params, y);
            for &(amp, shape, mode, sup) in &shapes {
                x += amp * shape_value(shape, i.a0, y) / sup * (mode * t).cos();
            }
            x
        });
        Ok(v)
    }
}

fn shape_value(shape: PerturbationShape, a: f64, y: f64) -> f64 {
    match shape {
        PerturbationShape::Gauss => (-y * y / 4.0).exp(),
        PerturbationShape::Hermite4 => orthogonal_quartic(a, y),
    }
}

/// Sup-norm of a perturbation shape on the half line, by dense sampling.
fn shape_sup(shape: PerturbationShape, a: f64) -> f64 {
    let n = 20_000;
    let reach = 40.0 * (0.5 / a).sqrt().max(1.0);
    (0..=n).map(|j| shape_value(shape, a, reach * j as f64 / n as f64).abs()).fold(0.0, f64::max)
}

/// The perturbation shape normalized to unit sup-norm.
pub fn normalized_shape(shape: PerturbationShape, a: f64, y: f64) -> f64 {
    shape_value(shape, a, y) / shape_sup(shape, a)
}
