use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, FilterSpec, StabilityParams};
use crate::fusion_frame::{example_frame_r3, random_frame, FusionFrame};
use crate::numerics::Vector;

/// A numeric parameter or the string `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Auto<T> {
    Auto,
    Value(T),
}

impl<T: Serialize> Serialize for Auto<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Auto::Auto => s.serialize_str("auto"),
            Auto::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Auto<T> {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Value(T),
            Text(String),
        }
        match Raw::<T>::deserialize(de)? {
            Raw::Value(v) => Ok(Auto::Value(v)),
            Raw::Text(s) if s == "auto" => Ok(Auto::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrameSource {
    /// The tight family of `N` planes in `R³`.
    R3Family,
    /// The first `N` subspaces of a frame stored as JSON.
    File { path: PathBuf },
    /// `N` random subspaces with dimensions cycling through `dims`.
    Random { seed: u64, dims: Vec<usize> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub plot_script: Option<PathBuf>,
    /// JSON object mapping each `N` to its emitted index stream.
    pub indices: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub order: usize,
    pub sigma: Auto<u64>,
    pub delta: f64,
    pub alpha: Auto<f64>,
    pub signal: Vec<f64>,
    pub frame: FrameSource,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_true")]
    pub memoryless: bool,
    /// Run even if `‖x‖ > δ` (the state bound then carries no guarantee).
    #[serde(default)]
    pub allow_large_signal: bool,
    /// Seed for the stability trials.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    /// Second-order reproduction on the R³ family.
    pub fn example1() -> Self {
        Self {
            order: 2,
            sigma: Auto::Value(50),
            delta: 0.1,
            alpha: Auto::Value(1.101),
            signal: example_signal().iter().copied().collect(),
            frame: FrameSource::R3Family,
            n_grid: vec![210, 300, 420, 600, 840, 1200, 1700, 2001],
            memoryless: true,
            allow_large_signal: false,
            seed: 0,
            outputs: Outputs::default(),
        }
    }

    /// Third-order reproduction on the R³ family.
    pub fn example2() -> Self {
        Self {
            order: 3,
            n_grid: vec![300, 450, 700, 1000, 1500, 2200, 3000],
            ..Self::example1()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn signal_vector(&self) -> Vector {
        Vector::from_vec(self.signal.clone())
    }

    /// Builds the frame with `n` subspaces.
    pub fn frame_for(&self, n: usize) -> Result<FusionFrame> {
        match &self.frame {
            FrameSource::R3Family => example_frame_r3(n),
            FrameSource::File { path } => FusionFrame::load(path)?.prefix(n),
            FrameSource::Random { seed, dims } => {
                if dims.is_empty() {
                    return Err(Error::BadParameter("random frame needs dims".into()));
                }
                let cycled: Vec<usize> = dims.iter().cycle().take(n).copied().collect();
                random_frame(self.signal.len(), &cycled, *seed)
            }
        }
    }

    /// `d*` over the largest frame in the grid.
    fn d_star(&self) -> Result<usize> {
        match &self.frame {
            FrameSource::R3Family => Ok(2),
            FrameSource::Random { dims, .. } => dims
                .iter()
                .copied()
                .max()
                .ok_or_else(|| Error::BadParameter("random frame needs dims".into())),
            FrameSource::File { .. } => {
                let n = self.n_grid.iter().copied().max().unwrap_or(1);
                Ok(self.frame_for(n)?.max_dim())
            }
        }
    }

    /// Validates the configuration and resolves `"auto"` parameters.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.order == 0 {
            return Err(Error::BadParameter("order must be ≥ 1".into()));
        }
        let d = self.signal.len();
        if d == 0 {
            return Err(Error::BadParameter("signal must be nonempty".into()));
        }
        if matches!(self.frame, FrameSource::R3Family) && d != 3 {
            return Err(Error::BadParameter(format!(
                "R³ family needs a 3-dimensional signal, got {d}"
            )));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < d) {
            return Err(Error::BadParameter(format!("grid value N = {n} below d = {d}")));
        }
        if self.n_grid.is_empty() {
            return Err(Error::BadParameter("n_grid is empty".into()));
        }
        let norm = self.signal_vector().norm();
        if norm > self.delta {
            if self.allow_large_signal {
                warn!("‖x‖ = {norm} exceeds δ = {}; state bound not guaranteed", self.delta);
            } else {
                return Err(Error::BadParameter(format!(
                    "‖x‖ = {norm} exceeds δ = {} (set allow_large_signal to override)",
                    self.delta
                )));
            }
        }
        let d_star = self.d_star()?;
        let alpha = match self.alpha {
            Auto::Auto => filter::default_alpha(d_star, self.delta)?,
            Auto::Value(a) => a,
        };
        let stability = filter::stability_params(d_star, self.delta, alpha)?;
        let sigma = match self.sigma {
            Auto::Auto => filter::min_sigma_for_alpha(alpha)?,
            Auto::Value(s) => s,
        };
        let filter = FilterSpec::new(self.order, sigma)?;
        if !filter.feasibility(alpha).passed {
            warn!(
                "‖h‖₁ = {} ≥ α = {alpha}; the state bound does not apply",
                filter.h_l1()
            );
        }
        Ok(Resolved { filter, stability })
    }
}

/// Parameters derived from a validated configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub filter: FilterSpec,
    pub stability: StabilityParams,
}

/// `(1/25, π/57, 1/(2√57))`.
pub fn example_signal() -> Vector {
    Vector::from_vec(vec![
        1.0 / 25.0,
        std::f64::consts::PI / 57.0,
        1.0 / (2.0 * 57.0_f64.sqrt()),
    ])
}
