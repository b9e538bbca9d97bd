//! Solver configuration.
//!
//! `SolverConfig` collects every scalar the solver needs. The defaults
//! are the reference parameterization used throughout the test suite;
//! config files are flat JSON documents whose keys mirror the field
//! names here, and unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Low-pass kernel of the observation operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// Truncated discrete Gaussian, sigma = 1.12, radius 4, normalized.
    Gaussian,
    /// 5-tap binomial-style pyramid kernel, central weight 0.4.
    Burt5,
}

/// Orthogonal wavelet family for the sparsity dictionary and the
/// change-penalty basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveletFamily {
    Haar,
    /// 4-tap Daubechies filter.
    Db4,
}

/// Boundary handling. Periodic is the only supported mode; it keeps the
/// spline transform symmetric, which the warp adjoint relies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
}

/// Weighting of the motion regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsMode {
    Uniform,
    /// `w(i) = exp(-kappa * |grad of upsampled observation at i|)`.
    EdgeAdaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Weight of the residual penalty.
    pub alpha1: f64,
    /// Weight of the motion regularizer.
    pub alpha2: f64,
    /// Weight of the coefficient penalty.
    pub alpha3: f64,
    /// Splitting penalty for the residual block.
    pub rho1: f64,
    /// Splitting penalty for the motion-gradient block.
    pub rho2: f64,
    /// Splitting penalty for the coefficient block.
    pub rho3: f64,
    /// Splitting penalty for the change-penalty blocks.
    pub rho: f64,
    /// Weight of the change penalty tying consecutive outer iterates.
    pub gamma: f64,
    /// Backtracking base; trial curvatures are `2^i * xi`, i >= 1.
    pub xi: f64,
    /// Initial surrogate curvature (equals the first backtracking trial).
    pub alpha0: f64,
    /// Penalty exponent, 1 or 2.
    pub p: u8,
    pub admm_iters: usize,
    pub outer_iters: usize,
    pub lbfgs_iters: usize,
    pub boundary: Boundary,
    pub kernel: Kernel,
    pub dict: WaveletFamily,
    pub weights_mode: WeightsMode,
    /// Edge-adaptive weight decay rate; unused in uniform mode.
    pub kappa: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha1: 5e-1,
            alpha2: 8e3,
            alpha3: 1e1,
            rho1: 1e2,
            rho2: 1e1,
            rho3: 1e-2,
            rho: 1e0,
            gamma: 1e0,
            xi: 1e2,
            alpha0: 2e2,
            p: 1,
            admm_iters: 20,
            outer_iters: 20,
            lbfgs_iters: 50,
            boundary: Boundary::Periodic,
            kernel: Kernel::Gaussian,
            dict: WaveletFamily::Haar,
            weights_mode: WeightsMode::Uniform,
            kappa: 0.1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("rho3", self.rho3),
            ("rho", self.rho),
            ("xi", self.xi),
            ("alpha0", self.alpha0),
        ];
        for (name, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.p != 1 && self.p != 2 {
            return Err(Error::Config(format!("p must be 1 or 2, got {}", self.p)));
        }
        if self.kappa < 0.0 {
            return Err(Error::Config(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Parse a flat JSON config document. Unknown keys are errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SolverConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
