//! Pipeline parameters.
//!
//! Every numeric default lives here. A JSON config file may set any subset
//! of the fields; missing fields keep their defaults and command-line flags
//! override both.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::Kernel;
use crate::sparse_coding::SparseCodingParams;

/// Velocity noise assumed by the pipeline's flow fields, m/s.
///
/// Observed velocities are forward differences of noisy positions, so their
/// noise is roughly `√2·σ/dt`; 0.45 covers 0.15 m position noise at 0.5 s.
pub const PIPELINE_NOISE_SD: f64 = 0.45;

/// Whether trajectories are mapped into the curbside frame before learning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Tasnsc,
    /// Same pipeline with the curbside transform replaced by the identity.
    #[serde(alias = "asnsc-baseline", alias = "asnsc")]
    Baseline,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Tasnsc => "TASNSC",
            Mode::Baseline => "ASNSC",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tasnsc" => Ok(Mode::Tasnsc),
            "baseline" | "asnsc-baseline" | "asnsc" => Ok(Mode::Baseline),
            other => Err(Error::InvalidParameter(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mode: Mode,
    /// Sampling interval, seconds.
    pub dt: f64,
    /// Observation horizon, seconds.
    pub t_obs: f64,
    /// Prediction horizon, seconds.
    pub t_pred: f64,
    /// Grid cell edge, meters.
    pub grid_cell: f64,
    /// Empty cells padded around the training data's bounding box.
    pub grid_margin_cells: usize,
    /// Number of dictionary atoms.
    pub k: usize,
    pub lambda: f64,
    pub iters: usize,
    pub min_segment_len: usize,
    pub kernel: Kernel,
    /// Cap on GP training points per motion pattern (evenly strided subsample).
    pub max_pattern_points: usize,
    /// Candidate patterns kept per prediction.
    pub top_m: usize,
    /// Correctness threshold for classification accuracy, degrees.
    pub threshold_deg: f64,
    /// Rollouts leaving the training extent scaled by this factor stop and hold position.
    pub divergence_scale: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Tasnsc,
            dt: 0.5,
            t_obs: 2.5,
            t_pred: 5.0,
            grid_cell: 1.0,
            grid_margin_cells: 1,
            k: 12,
            lambda: 0.1,
            iters: 200,
            min_segment_len: 3,
            kernel: Kernel {
                noise_sd: PIPELINE_NOISE_SD,
                ..Kernel::default()
            },
            max_pattern_points: 300,
            top_m: 3,
            threshold_deg: 40.0,
            divergence_scale: 3.0,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_reader(std::fs::File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn sparse_coding(&self) -> SparseCodingParams {
        SparseCodingParams {
            k: self.k,
            lambda: self.lambda,
            iters: self.iters,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_obs >= 0.0 && self.t_pred > 0.0) {
            return bad("horizons must satisfy t_obs >= 0 and t_pred > 0");
        }
        if !(self.grid_cell > 0.0 && self.grid_cell.is_finite()) {
            return bad("grid_cell must be positive");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.top_m == 0 {
            return bad("top_m must be at least 1");
        }
        if self.max_pattern_points == 0 {
            return bad("max_pattern_points must be at least 1");
        }
        if !(self.threshold_deg > 0.0 && self.threshold_deg <= 180.0) {
            return bad("threshold must lie in (0, 180] degrees");
        }
        if self.divergence_scale.is_nan() || self.divergence_scale < 1.0 {
            return bad("divergence_scale must be >= 1");
        }
        self.kernel.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"k": 4, "mode": "baseline"}"#).unwrap();
        assert_eq!(cfg.k, 4);
        assert_eq!(cfg.mode, Mode::Baseline);
        assert_eq!(cfg.t_pred, 5.0);
        assert_eq!(cfg.kernel, PipelineConfig::default().kernel);
        assert_eq!(cfg.kernel.length_x, Kernel::default().length_x);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"kk": 4}"#).is_err());
        let cfg = PipelineConfig {
            threshold_deg: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mode_names() {
        assert_eq!("asnsc-baseline".parse::<Mode>().unwrap(), Mode::Baseline);
        assert_eq!("tasnsc".parse::<Mode>().unwrap(), Mode::Tasnsc);
        assert!("other".parse::<Mode>().is_err());
    }
}
