//! `simulate` configuration: JSON on disk, validated before any work starts.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use ymflow::lie::LieAlgebra;
use ymflow::oneform::NormKind;
use ymflow::she::{MollifierSpec, MollifierStencil};
use ymflow::spde::{Scheme, Solver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MollifierVariant {
    #[default]
    Symmetric,
    NonAnticipative,
}

impl MollifierVariant {
    pub fn spec(self) -> MollifierSpec {
        match self {
            MollifierVariant::Symmetric => MollifierSpec::default(),
            MollifierVariant::NonAnticipative => MollifierSpec::non_anticipative(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MollifierVariant::Symmetric => "symmetric",
            MollifierVariant::NonAnticipative => "non-anticipative",
        }
    }
}

/// Mass constant C in ∂ₜA = ΔA + N(A) + C A + ξ^ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CMode {
    Zero,
    /// λ·C_SYM^ε read from a constants file.
    Csym,
    Custom(f64),
}

impl CMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(CMode::Zero),
            "csym" => Ok(CMode::Csym),
            _ => match s.strip_prefix("custom:") {
                Some(v) => v
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite())
                    .map(CMode::Custom)
                    .ok_or_else(|| CliError::Config(format!("C_mode custom value {v:?} is not a finite number"))),
                None => Err(CliError::Config(format!(
                    "C_mode must be zero, csym or custom:<value>, got {s:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observable {
    /// Wilson loop around an axis-parallel rectangle.
    Wilson {
        corner: [f64; 2],
        width: f64,
        height: f64,
    },
    /// Sampled Hölder-type norm of the lattice field.
    Norm {
        norm: String,
        alpha: f64,
    },
}

impl Observable {
    pub fn column(&self) -> String {
        match self {
            Observable::Wilson {
                corner,
                width,
                height,
            } => format!("wilson[{},{};{}x{}]", corner[0], corner[1], width, height),
            Observable::Norm { norm, alpha } => format!("norm_{norm}[{alpha}]"),
        }
    }
}

pub fn norm_kind(name: &str) -> Result<NormKind> {
    match name {
        "alpha" => Ok(NormKind::Alpha),
        "gr" => Ok(NormKind::Gr),
        "vee" => Ok(NormKind::Vee),
        "tri" => Ok(NormKind::Tri),
        _ => Err(CliError::Config(format!("unknown norm {name:?}; expected alpha, gr, vee or tri"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub observables: Option<PathBuf>,
    pub provenance: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

fn every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algebra: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub eps: f64,
    #[serde(default)]
    pub mollifier: MollifierVariant,
    #[serde(rename = "C_mode")]
    pub c_mode: String,
    /// Required when C_mode is csym.
    #[serde(default)]
    pub constants: Option<PathBuf>,
    pub seed: u64,
    /// Multiplies the mollified noise; 0 gives a deterministic run.
    #[serde(default = "one")]
    pub noise_amplitude: f64,
    /// Amplitude of a random smooth initial condition (modes |k| ≤ 2); 0 starts from A = 0.
    #[serde(default)]
    pub initial_amplitude: f64,
    /// Trajectory and observables are written every this many steps, and at the last step.
    #[serde(default = "every")]
    pub record_every: usize,
    /// Sup-norm above which a step reports a blow-up; the solver default otherwise.
    #[serde(default)]
    pub blowup_threshold: Option<f64>,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    pub fn algebra(&self) -> Result<LieAlgebra> {
        LieAlgebra::by_name(&self.algebra).map_err(|e| CliError::Config(format!("algebra: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let alg = self.algebra()?;
        if self.n < 4 {
            return bad(format!("N must be at least 4, got {}", self.n));
        }
        for (name, v) in [("dt", self.dt), ("T", self.horizon), ("eps", self.eps)] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("noise_amplitude", self.noise_amplitude), ("initial_amplitude", self.initial_amplitude)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        let steps = self.steps();
        if steps == 0 || (steps as f64 * self.dt - self.horizon).abs() > 1e-9 * self.horizon {
            return bad(format!("T = {} is not a whole number of steps dt = {}", self.horizon, self.dt));
        }
        if let Some(b) = self.blowup_threshold {
            if !(b.is_finite() && b > 0.0) {
                return bad(format!("blowup_threshold must be positive, got {b}"));
            }
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        let limit = Solver::new(&alg, self.n, Scheme::SemiImplicit).stability_limit();
        if self.dt > limit {
            return bad(format!("dt = {} exceeds the stability limit {limit} at N = {}", self.dt, self.n));
        }
        if self.eps > 1.0 {
            return bad(format!("eps must lie in (0, 1], got {}", self.eps));
        }
        MollifierStencil::new(self.mollifier.spec(), self.eps, self.n, self.dt)
            .map_err(|e| CliError::Config(format!("eps = {} on N = {}: {e}", self.eps, self.n)))?;
        if CMode::parse(&self.c_mode)? == CMode::Csym && self.constants.is_none() {
            return bad("C_mode csym needs a \"constants\" file path".into());
        }
        for o in &self.observables {
            match o {
                Observable::Wilson { width, height, .. } => {
                    if !(*width > 0.0 && *height > 0.0 && *width < 1.0 && *height < 1.0) {
                        return bad(format!("Wilson loop sides must lie in (0, 1), got {width} x {height}"));
                    }
                }
                Observable::Norm { norm, alpha } => {
                    norm_kind(norm)?;
                    if !(*alpha > 0.0 && *alpha <= 1.0) {
                        return bad(format!("norm exponent must lie in (0, 1], got {alpha}"));
                    }
                }
            }
        }
        Ok(())
    }
}
