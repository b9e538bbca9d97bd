//! Problem bundle: the observations, all fixed operators, the
//! regularizer weights, and the solver configuration for one
//! single-channel reconstruction.

use crate::config::{SolverConfig, WaveletFamily, WeightsMode};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::lanczos;
use crate::operators::{MotionGradOp, ObservationOp, WaveletOp};

#[derive(Clone, Debug)]
pub struct SrProblem {
    grid: Grid,
    obs: ObservationOp,
    dict: WaveletOp,
    ctm: WaveletOp,
    motion_grad: MotionGradOp,
    y: Vec<Vec<f64>>,
    weights: Vec<Vec<f64>>,
    cfg: SolverConfig,
}

impl SrProblem {
    /// Bundle `T + 1` low-resolution frames observed from the given
    /// high-resolution grid.
    pub fn new(hr_grid: Grid, y: Vec<Vec<f64>>, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if y.is_empty() {
            return Err(Error::DimensionMismatch(
                "need at least one observed frame".into(),
            ));
        }
        let obs = ObservationOp::new(hr_grid, cfg.kernel)?;
        let m = obs.lr_grid().n();
        for (t, frame) in y.iter().enumerate() {
            if frame.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "observed frame {t}: {} values, expected {m}",
                    frame.len()
                )));
            }
        }
        let dict = WaveletOp::with_default_levels(hr_grid, cfg.dict);
        let ctm = WaveletOp::with_default_levels(hr_grid, WaveletFamily::Haar);
        let motion_grad = MotionGradOp::new(hr_grid);
        let t_max = y.len() - 1;
        let weights = match cfg.weights_mode {
            WeightsMode::Uniform => vec![vec![1.0; hr_grid.n()]; t_max],
            WeightsMode::EdgeAdaptive => (1..=t_max)
                .map(|t| edge_weights(hr_grid, obs.lr_grid(), &y[t], cfg.kappa))
                .collect(),
        };
        Ok(SrProblem {
            grid: hr_grid,
            obs,
            dict,
            ctm,
            motion_grad,
            y,
            weights,
            cfg,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn lr_grid(&self) -> Grid {
        self.obs.lr_grid()
    }

    /// Last frame index `T`.
    pub fn t_max(&self) -> usize {
        self.y.len() - 1
    }

    pub fn observation(&self) -> &ObservationOp {
        &self.obs
    }

    pub fn dict(&self) -> &WaveletOp {
        &self.dict
    }

    /// Basis used by the change penalty between outer iterates.
    pub fn change_basis(&self) -> &WaveletOp {
        &self.ctm
    }

    pub fn motion_grad(&self) -> &MotionGradOp {
        &self.motion_grad
    }

    pub fn observed(&self, t: usize) -> &[f64] {
        &self.y[t]
    }

    pub fn observed_frames(&self) -> &[Vec<f64>] {
        &self.y
    }

    /// Regularizer weights for stage `t` in `1..=T`.
    pub fn weights(&self, t: usize) -> &[f64] {
        &self.weights[t - 1]
    }

    pub fn cfg(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn cfg_mut(&mut self) -> &mut SolverConfig {
        &mut self.cfg
    }
}

/// Edge-adaptive weights: `exp(-kappa * |grad|)` of the upsampled
/// observation, centered differences with periodic wrap.
fn edge_weights(hr: Grid, lr: Grid, y_t: &[f64], kappa: f64) -> Vec<f64> {
    let up = lanczos::upscale2(lr, y_t);
    let (w, h) = (hr.width(), hr.height());
    let mut out = vec![0.0; hr.n()];
    for i in 0..hr.n() {
        let (r, c) = hr.pos(i);
        let gx = (up[hr.index(r, (c + 1) % w)] - up[hr.index(r, (c + w - 1) % w)]) / 2.0;
        let gy = (up[hr.index((r + 1) % h, c)] - up[hr.index((r + h - 1) % h, c)]) / 2.0;
        out[i] = (-kappa * (gx * gx + gy * gy).sqrt()).exp();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;

    #[test]
    fn validates_observed_frame_sizes() {
        let g = Grid::new(8, 8).unwrap();
        let cfg = SolverConfig::default();
        assert!(SrProblem::new(g, vec![vec![0.0; 16]; 3], cfg.clone()).is_ok());
        assert!(SrProblem::new(g, vec![vec![0.0; 15]; 3], cfg.clone()).is_err());
        assert!(SrProblem::new(g, vec![], cfg).is_err());
    }

    #[test]
    fn uniform_weights_by_default() {
        let g = Grid::new(8, 8).unwrap();
        let p = SrProblem::new(g, vec![vec![1.0; 16]; 3], SolverConfig::default()).unwrap();
        assert_eq!(p.t_max(), 2);
        assert!(p.weights(1).iter().all(|w| *w == 1.0));
        assert!(p.weights(2).iter().all(|w| *w == 1.0));
    }

    #[test]
    fn edge_adaptive_weights_are_in_unit_range_and_flat_on_constants() {
        let g = Grid::new(8, 8).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.weights_mode = WeightsMode::EdgeAdaptive;
        let mut y = vec![vec![3.0; 16]; 3];
        y[2][5] = 9.0;
        let p = SrProblem::new(g, y, cfg).unwrap();
        // Stage 1 sees the constant frame: no edges, weight 1 everywhere.
        assert!(p.weights(1).iter().all(|w| (*w - 1.0).abs() < 1e-12));
        // Stage 2 sees the spike: weights drop below 1 near it but stay
        // positive.
        assert!(p.weights(2).iter().any(|w| *w < 1.0));
        for w in p.weights(2) {
            assert!(*w > 0.0 && *w <= 1.0);
        }
    }
}
