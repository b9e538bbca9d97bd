//! Dense fixed-interval smoother for the linear-Gaussian form of the
//! model at p = 2 and fixed motion. Desk-scale oracle only: it builds
//! every operator as an explicit matrix and runs O(n^3 T) recursions,
//! which is exactly what the matrix-free gradient route avoids.
//!
//! The model runs backward in time (the "initial" Gaussian sits on the
//! final frame), so the smoother operates on the reversed index
//! `t' = T - t` and the result is flipped back at the end.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::SrProblem;
use crate::seq::{ImageSeq, MotionSeq};
use crate::{adjoint, bspline};

/// Largest pixel count the dense oracle accepts.
pub const MAX_DENSE_PIXELS: usize = 256;

/// Dense matrices of the linear-Gaussian state model.
#[derive(Clone, Debug)]
pub struct GaussianStateModel {
    /// Transition matrices in reversed time: entry `t'` maps the state
    /// at `t'` to the mean of the state at `t' + 1`.
    pub transitions: Vec<DMatrix<f64>>,
    pub observation: DMatrix<f64>,
    /// Covariance of the initial (final-frame) state.
    pub prior_cov: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    pub obs_cov: DMatrix<f64>,
}

fn dense_from_columns(
    rows: usize,
    cols: usize,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    let mut e = vec![0.0; cols];
    for j in 0..cols {
        e[j] = 1.0;
        let col = apply(&e);
        e[j] = 0.0;
        for i in 0..rows {
            m[(i, j)] = col[i];
        }
    }
    m
}

/// Build the dense model for a fixed motion sequence. Guarded to tiny
/// grids; every matrix is probed column by column from the same
/// matrix-free operators the solver uses.
pub fn build_dense_model(p: &SrProblem, d: &MotionSeq) -> Result<GaussianStateModel> {
    let n = p.grid().n();
    if n > MAX_DENSE_PIXELS {
        return Err(Error::Unsupported(format!(
            "dense oracle capped at {MAX_DENSE_PIXELS} pixels, grid has {n}"
        )));
    }
    if d.t_max() != p.t_max() {
        return Err(Error::DimensionMismatch(
            "motion length differs from the problem".into(),
        ));
    }
    let cfg = p.cfg();
    let t_max = p.t_max();
    let grid = p.grid();

    // Reversed time: step t' uses the motion field d_{T - t'}.
    let mut transitions = Vec::with_capacity(t_max);
    for tp in 0..t_max {
        let field = d.field(t_max - tp);
        transitions.push(dense_from_columns(n, n, |e| {
            bspline::warp(&bspline::prefilter(grid, e).unwrap(), field)
        }));
    }
    let observation = dense_from_columns(p.lr_grid().n(), n, |e| p.observation().observe(e));
    let dict = dense_from_columns(n, n, |e| p.dict().synthesis(e));
    let prior_cov = (&dict * dict.transpose()) / cfg.alpha3;
    let process_cov = DMatrix::identity(n, n) / cfg.alpha1;
    let obs_cov = DMatrix::identity(p.lr_grid().n(), p.lr_grid().n());
    Ok(GaussianStateModel {
        transitions,
        observation,
        prior_cov,
        process_cov,
        obs_cov,
    })
}

/// Exact posterior-mean sequence via a forward filter and a backward
/// smoothing pass, returned in original time order.
pub fn smooth_map(p: &SrProblem, model: &GaussianStateModel) -> Result<ImageSeq> {
    let t_max = p.t_max();
    if model.transitions.len() != t_max {
        return Err(Error::DimensionMismatch(
            "model has a different number of transitions".into(),
        ));
    }
    let n = p.grid().n();
    let h = &model.observation;

    // Forward filter over reversed time; observation at t' is y_{T-t'}.
    let mut means_pred = Vec::with_capacity(t_max + 1);
    let mut covs_pred = Vec::with_capacity(t_max + 1);
    let mut means_filt = Vec::with_capacity(t_max + 1);
    let mut covs_filt = Vec::with_capacity(t_max + 1);

    let mut mean = DVector::zeros(n);
    let mut cov = model.prior_cov.clone();
    for tp in 0..=t_max {
        means_pred.push(mean.clone());
        covs_pred.push(cov.clone());
        let y = DVector::from_column_slice(p.observed(t_max - tp));
        let innovation_cov = h * &cov * h.transpose() + &model.obs_cov;
        let chol = innovation_cov
            .cholesky()
            .ok_or_else(|| Error::SolverAbort("singular innovation covariance".into()))?;
        // Gain K = P H' S^{-1} via the Cholesky solve of S K' = H P.
        let gain = chol.solve(&(h * &cov)).transpose();
        let residual = y - h * &mean;
        mean += &gain * residual;
        cov = &cov - &gain * h * &cov;
        // Symmetrize against round-off drift.
        cov = (&cov + cov.transpose()) * 0.5;
        means_filt.push(mean.clone());
        covs_filt.push(cov.clone());
        if tp < t_max {
            let a = &model.transitions[tp];
            mean = a * &mean;
            cov = a * &cov * a.transpose() + &model.process_cov;
            cov = (&cov + cov.transpose()) * 0.5;
        }
    }

    // Backward smoothing pass.
    let mut smoothed = vec![DVector::zeros(n); t_max + 1];
    smoothed[t_max] = means_filt[t_max].clone();
    let mut cov_smooth = covs_filt[t_max].clone();
    for tp in (0..t_max).rev() {
        let a = &model.transitions[tp];
        let pred_cov = &covs_pred[tp + 1];
        let chol = pred_cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SolverAbort("singular predicted covariance".into()))?;
        // Smoother gain J = P_filt A' P_pred^{-1}.
        let j = chol
            .solve(&(a * &covs_filt[tp]))
            .transpose();
        smoothed[tp] = &means_filt[tp] + &j * (&smoothed[tp + 1] - &means_pred[tp + 1]);
        cov_smooth = &covs_filt[tp] + &j * (&cov_smooth - pred_cov) * j.transpose();
        cov_smooth = (&cov_smooth + cov_smooth.transpose()) * 0.5;
    }

    // Flip back to original time order: state t' carries frame T - t'.
    let frames: Vec<Vec<f64>> = (0..=t_max)
        .map(|t| smoothed[t_max - t].iter().copied().collect())
        .collect();
    ImageSeq::new(p.grid(), frames)
}

/// Solve the same quadratic problem through the matrix-free gradient
/// route: L-BFGS over `(eps, c)` with adjoint-sweep gradients. This is
/// the path the smoother exists to validate.
pub fn gradient_route_map(
    p: &SrProblem,
    d: &MotionSeq,
    max_iters: usize,
    grad_tol: f64,
) -> Result<ImageSeq> {
    if p.cfg().p != 2 {
        return Err(Error::Config("the quadratic route needs p = 2".into()));
    }
    let n = p.grid().n();
    let t_max = p.t_max();
    let nt = n * t_max;
    let q = p.dict().id().len();
    let params = crate::admm::LbfgsParams {
        max_iters,
        grad_tol,
        ..Default::default()
    };
    let outcome = crate::admm::lbfgs_minimize(
        |z, g| {
            let mut eps = crate::seq::NoiseSeq::zeros(p.grid(), t_max);
            for t in 1..=t_max {
                eps.residual_mut(t).copy_from_slice(&z[(t - 1) * n..t * n]);
            }
            let c = crate::seq::CoefVec::new(p.dict().id(), z[nt..].to_vec()).unwrap();
            let (value, ge, _, gc) = adjoint::value_and_grads(
                p,
                &eps,
                d,
                &c,
                adjoint::StagePenalty::Quadratic,
                false,
            )
            .expect("shapes fixed by construction");
            for t in 1..=t_max {
                g[(t - 1) * n..t * n].copy_from_slice(ge.residual(t));
            }
            g[nt..].copy_from_slice(gc.coeffs());
            value
        },
        &vec![0.0; nt + q],
        &params,
    )?;
    let mut eps = crate::seq::NoiseSeq::zeros(p.grid(), t_max);
    for t in 1..=t_max {
        eps.residual_mut(t)
            .copy_from_slice(&outcome.x[(t - 1) * n..t * n]);
    }
    let c = crate::seq::CoefVec::new(p.dict().id(), outcome.x[nt..].to_vec())?;
    adjoint::synthesize_states(p, &eps, d, &c)
}

/// Recover `(eps, c)` from a state sequence: the coefficients of the
/// final frame and the residuals the constraints imply.
pub fn decompose_states(
    p: &SrProblem,
    x: &ImageSeq,
    d: &MotionSeq,
) -> Result<(crate::seq::NoiseSeq, crate::seq::CoefVec)> {
    let t_max = p.t_max();
    let mut eps = crate::seq::NoiseSeq::zeros(p.grid(), t_max);
    for t in 1..=t_max {
        let coeffs = bspline::prefilter(p.grid(), x.frame(t))?;
        let warped = bspline::warp(&coeffs, d.field(t));
        let e = eps.residual_mut(t);
        for i in 0..e.len() {
            e[i] = x.frame(t - 1)[i] - warped[i];
        }
    }
    let c = crate::seq::CoefVec::new(p.dict().id(), p.dict().analysis(x.frame(t_max)))?;
    Ok((eps, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;
    use crate::grid::Grid;
    use crate::seq::{CoefVec, NoiseSeq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn small_problem(seed: u64, t_max: usize) -> (SrProblem, MotionSeq) {
        let grid = Grid::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        let y: Vec<Vec<f64>> = (0..=t_max)
            .map(|_| (0..4).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        let p = SrProblem::new(grid, y, cfg).unwrap();
        let mut d = MotionSeq::zeros(grid, t_max);
        for t in 1..=t_max {
            for v in d.field_mut(t).iter_mut() {
                *v = rng.gen_range(-0.4..0.4);
            }
        }
        (p, d)
    }

    #[test]
    fn zero_motion_transition_is_identity() {
        let (p, _) = small_problem(1, 2);
        let d = MotionSeq::zeros(p.grid(), 2);
        let model = build_dense_model(&p, &d).unwrap();
        for a in &model.transitions {
            for i in 0..16 {
                for j in 0..16 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((a[(i, j)] - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn transition_columns_match_the_matrix_free_warp() {
        let (p, d) = small_problem(2, 2);
        let model = build_dense_model(&p, &d).unwrap();
        // t' = 0 uses d_T = d_2.
        let mut e = vec![0.0; 16];
        e[5] = 1.0;
        let col = bspline::warp(&bspline::prefilter(p.grid(), &e).unwrap(), d.field(2));
        for i in 0..16 {
            assert!((model.transitions[0][(i, 5)] - col[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_dictionary_gives_identity_prior_shape() {
        let (p, d) = small_problem(3, 1);
        let model = build_dense_model(&p, &d).unwrap();
        let alpha3 = p.cfg().alpha3;
        for i in 0..16 {
            for j in 0..16 {
                let want = if i == j { 1.0 / alpha3 } else { 0.0 };
                assert!((model.prior_cov[(i, j)] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn grid_guard_rejects_large_problems() {
        let grid = Grid::new(32, 32).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        let p = SrProblem::new(grid, vec![vec![0.0; 256]; 2], cfg).unwrap();
        let d = MotionSeq::zeros(grid, 1);
        assert!(matches!(
            build_dense_model(&p, &d),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn single_frame_map_matches_dense_normal_equations() {
        // T = 0: the posterior mean solves
        // (H' R^-1 H + P0^-1) x = H' R^-1 y.
        let grid = Grid::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        let y: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..10.0)).collect();
        let p = SrProblem::new(grid, vec![y.clone()], cfg).unwrap();
        let d = MotionSeq::zeros(grid, 0);
        let model = build_dense_model(&p, &d).unwrap();
        let x = smooth_map(&p, &model).unwrap();

        let h = &model.observation;
        let normal = h.transpose() * h + DMatrix::identity(16, 16) * p.cfg().alpha3;
        let rhs = h.transpose() * DVector::from_column_slice(&y);
        let want = normal.lu().solve(&rhs).unwrap();
        for i in 0..16 {
            assert!(
                (x.frame(0)[i] - want[i]).abs() <= 1e-8 * want[i].abs().max(1.0),
                "pixel {i}: {} vs {}",
                x.frame(0)[i],
                want[i]
            );
        }
    }

    #[test]
    fn noise_free_feasible_sequences_are_recovered_as_weights_vanish() {
        // Observations generated exactly from a feasible noise-free
        // sequence. With T = 3 the stacked observations determine the
        // final frame (4 x 4 observations for 16 unknowns), so in the
        // vanishing-regularization limit the smoother reproduces the
        // whole sequence.
        let grid = Grid::new(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        cfg.alpha1 = 1e6; // strong trust in the noise-free evolution
        cfg.alpha3 = 1e-11; // nearly flat prior on the final frame
        let t_max = 3;
        let mut d = MotionSeq::zeros(grid, t_max);
        for t in 1..=t_max {
            for v in d.field_mut(t).iter_mut() {
                *v = rng.gen_range(-0.8..0.8);
            }
        }
        // Feasible truth: zero residuals, band-limited final frame (the
        // blur nulls the highest frequencies, so an unfiltered truth
        // would not be identifiable from the observations).
        let probe = SrProblem::new(grid, vec![vec![0.0; 4]; t_max + 1], cfg.clone()).unwrap();
        let mut last = vec![0.0; 16];
        for v in last.iter_mut() {
            *v = rng.gen_range(0.0..10.0);
        }
        last = crate::operators::separable_filter(grid, &last, probe.observation().taps());
        for v in last.iter_mut() {
            *v += 5.0;
        }
        let c = CoefVec::new(probe.dict().id(), probe.dict().analysis(&last)).unwrap();
        let eps = NoiseSeq::zeros(grid, t_max);
        let truth = adjoint::synthesize_states(&probe, &eps, &d, &c).unwrap();
        let y: Vec<Vec<f64>> = (0..=t_max)
            .map(|t| probe.observation().observe(truth.frame(t)))
            .collect();
        let p = SrProblem::new(grid, y, cfg).unwrap();
        let model = build_dense_model(&p, &d).unwrap();
        let x = smooth_map(&p, &model).unwrap();
        for t in 0..=t_max {
            let err: f64 = x
                .frame(t)
                .iter()
                .zip(truth.frame(t))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let scale: f64 = truth.frame(t).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err <= 1e-6 * scale, "t={t}: err {err} vs scale {scale}");
        }
    }
}
