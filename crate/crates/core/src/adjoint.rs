//! State synthesis and adjoint-sweep gradient evaluation.
//!
//! The model constrains the image sequence to `x_T = D c` and
//! `x_t = warp(x_{t+1}, d_{t+1}) + eps_{t+1}` going backward in time, so
//! the whole sequence is a function of `(eps, d, c)`. Gradients of any
//! cost built from per-frame data misfits plus smooth penalties on
//! `(eps, d, c)` are assembled in three passes:
//!
//! 1. synthesize the states backward in time,
//! 2. run the adjoint variables forward in time
//!    (`zeta_t = warpᵀ(zeta_{t-1}) + data-misfit gradient at frame t`),
//! 3. read off the blocks: `zeta_{t-1}` for `eps_t`, the motion Jacobian
//!    applied to `zeta_{t-1}` for `d_t`, and the dictionary analysis of
//!    `zeta_T` for `c`, each plus its penalty gradient.
//!
//! The cost of one full gradient is a constant number of operator
//! applications per frame, hence linear in `n * T`.

use crate::bspline::{self, SplineCoeffs};
use crate::error::{Error, Result};
use crate::prox::eval_r;
use crate::problem::SrProblem;
use crate::seq::{CoefVec, ImageSeq, MotionSeq, NoiseSeq};
use crate::vec_ops::{axpy, dot, sub};

/// Adjoint variables `zeta_0 .. zeta_T`, produced by [`adjoint_sweep`].
#[derive(Clone, Debug)]
pub struct AdjointState {
    zetas: Vec<Vec<f64>>,
}

impl AdjointState {
    /// `zeta_t`.
    pub fn zeta(&self, t: usize) -> &[f64] {
        &self.zetas[t]
    }

    pub fn t_max(&self) -> usize {
        self.zetas.len() - 1
    }
}

/// Smooth penalty terms added to the data misfit. The variants cover
/// every configuration the solvers need: the plain quadratic problem,
/// and the splitting-augmented subproblems with and without the extra
/// change-penalty blocks.
#[derive(Clone, Copy, Debug)]
pub enum StagePenalty<'a> {
    /// Data term only.
    None,
    /// `alpha1 |eps|^2 + alpha2 R_2(G* d) + alpha3 |c|^2` with the
    /// problem's weights (quadratic exponent).
    Quadratic,
    /// Quadratic proximity terms from an operator-splitting outer loop.
    Augmented(&'a AugmentedTerms<'a>),
}

/// Anchors of the augmented quadratics. Each anchor is the splitting
/// variable minus its scaled dual, so a term reads
/// `(rho / 2) |map(z) - anchor|^2`.
#[derive(Clone, Debug)]
pub struct AugmentedTerms<'a> {
    pub rho1: f64,
    /// One anchor per stage `t = 1..=T`.
    pub eps_anchor: &'a [Vec<f64>],
    pub rho3: f64,
    pub c_anchor: &'a [f64],
    pub change: Option<ChangeTerms<'a>>,
}

/// Extra blocks tying the iterate to the previous outer iterate through
/// the change-penalty basis.
#[derive(Clone, Debug)]
pub struct ChangeTerms<'a> {
    pub rho: f64,
    pub eps_prev: &'a [Vec<f64>],
    /// Anchors in analysis space, one per stage.
    pub delta_eps_anchor: &'a [Vec<f64>],
    pub c_prev: &'a [f64],
    pub delta_c_anchor: &'a [f64],
}

fn check_shapes(p: &SrProblem, eps: &NoiseSeq, d: &MotionSeq, c: &CoefVec) -> Result<()> {
    let t_max = p.t_max();
    if eps.t_max() != t_max || d.t_max() != t_max {
        return Err(Error::DimensionMismatch(format!(
            "sequence lengths: eps has T={}, d has T={}, problem has T={t_max}",
            eps.t_max(),
            d.t_max()
        )));
    }
    if eps.grid() != p.grid() || d.grid() != p.grid() {
        return Err(Error::DimensionMismatch(
            "eps/d grids differ from the problem grid".into(),
        ));
    }
    if *c.dict() != p.dict().id() {
        return Err(Error::DimensionMismatch(
            "coefficient vector belongs to a different dictionary".into(),
        ));
    }
    Ok(())
}

/// Synthesized states plus the spline coefficients of the frames that
/// get warped (`x_1 .. x_T`), kept for the sweep and motion Jacobians.
pub(crate) struct StateCache {
    pub images: ImageSeq,
    coeffs: Vec<SplineCoeffs>,
}

impl StateCache {
    /// Spline coefficients of `x_t`, `t` in `1..=T`.
    pub fn coeffs(&self, t: usize) -> &SplineCoeffs {
        &self.coeffs[t - 1]
    }
}

pub(crate) fn synthesize_cached(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
) -> Result<StateCache> {
    check_shapes(p, eps, d, c)?;
    let t_max = p.t_max();
    let mut frames = vec![Vec::new(); t_max + 1];
    let mut coeffs: Vec<Option<SplineCoeffs>> = (0..t_max).map(|_| None).collect();
    frames[t_max] = p.dict().synthesis(c.coeffs());
    for t in (0..t_max).rev() {
        // x_t = warp(x_{t+1}, d_{t+1}) + eps_{t+1}
        let ct = bspline::prefilter(p.grid(), &frames[t + 1])?;
        let mut xt = bspline::warp(&ct, d.field(t + 1));
        coeffs[t] = Some(ct);
        axpy(1.0, eps.residual(t + 1), &mut xt);
        frames[t] = xt;
    }
    Ok(StateCache {
        images: ImageSeq::new(p.grid(), frames)?,
        coeffs: coeffs.into_iter().map(|c| c.unwrap()).collect(),
    })
}

/// Synthesize the unique state sequence satisfying the model
/// constraints for `(eps, d, c)`.
pub fn synthesize_states(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
) -> Result<ImageSeq> {
    Ok(synthesize_cached(p, eps, d, c)?.images)
}

/// Gradient of the frame-`t` data misfit with respect to the frame.
fn data_stage_grad(p: &SrProblem, x_t: &[f64], t: usize) -> Vec<f64> {
    let r = sub(&p.observation().observe(x_t), p.observed(t));
    let mut g = p.observation().adjoint(&r);
    for v in g.iter_mut() {
        *v *= 2.0;
    }
    g
}

/// Run the forward recursion in the adjoint variables. The stage costs
/// depend on the states only through the data misfit, so every penalty
/// configuration shares this sweep.
pub fn adjoint_sweep(p: &SrProblem, x: &ImageSeq, d: &MotionSeq) -> AdjointState {
    let t_max = p.t_max();
    assert_eq!(x.t_max(), t_max, "adjoint_sweep: frame count");
    assert_eq!(d.t_max(), t_max, "adjoint_sweep: motion count");
    let mut zetas = Vec::with_capacity(t_max + 1);
    zetas.push(data_stage_grad(p, x.frame(0), 0));
    for t in 1..=t_max {
        let mut z = bspline::warp_adjoint_image(p.grid(), &zetas[t - 1], d.field(t));
        axpy(1.0, &data_stage_grad(p, x.frame(t), t), &mut z);
        zetas.push(z);
    }
    AdjointState { zetas }
}

/// Value of the smooth cost: per-frame data misfits plus the selected
/// penalty terms. Matches [`grad_full`] configuration for configuration.
pub fn eval_smooth(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
    penalty: StagePenalty,
) -> Result<f64> {
    let cache = synthesize_cached(p, eps, d, c)?;
    let mut value = 0.0;
    for t in 0..=p.t_max() {
        let r = sub(&p.observation().observe(cache.images.frame(t)), p.observed(t));
        value += dot(&r, &r);
    }
    value += penalty_value(p, eps, d, c, penalty);
    Ok(value)
}

fn penalty_value(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
    penalty: StagePenalty,
) -> f64 {
    let cfg = p.cfg();
    match penalty {
        StagePenalty::None => 0.0,
        StagePenalty::Quadratic => {
            let mut v = 0.0;
            for t in 1..=p.t_max() {
                let e = eps.residual(t);
                v += cfg.alpha1 * dot(e, e);
                let gd = p.motion_grad().analysis(d.field(t));
                v += cfg.alpha2 * eval_r(&gd, p.weights(t), 2);
            }
            v + cfg.alpha3 * dot(c.coeffs(), c.coeffs())
        }
        StagePenalty::Augmented(terms) => {
            let mut v = 0.0;
            for t in 1..=p.t_max() {
                let r = sub(eps.residual(t), &terms.eps_anchor[t - 1]);
                v += 0.5 * terms.rho1 * dot(&r, &r);
            }
            let rc = sub(c.coeffs(), terms.c_anchor);
            v += 0.5 * terms.rho3 * dot(&rc, &rc);
            if let Some(change) = &terms.change {
                for t in 1..=p.t_max() {
                    let diff = sub(eps.residual(t), &change.eps_prev[t - 1]);
                    let r = sub(
                        &p.change_basis().analysis(&diff),
                        &change.delta_eps_anchor[t - 1],
                    );
                    v += 0.5 * change.rho * dot(&r, &r);
                }
                let mut rc = sub(c.coeffs(), change.c_prev);
                for (a, b) in rc.iter_mut().zip(change.delta_c_anchor) {
                    *a -= b;
                }
                v += 0.5 * change.rho * dot(&rc, &rc);
            }
            v
        }
    }
}

fn add_penalty_grads(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
    penalty: StagePenalty,
    grad_eps: &mut NoiseSeq,
    mut grad_d: Option<&mut MotionSeq>,
    grad_c: &mut [f64],
) {
    let cfg = p.cfg();
    let t_max = p.t_max();
    match penalty {
        StagePenalty::None => {}
        StagePenalty::Quadratic => {
            for t in 1..=t_max {
                axpy(2.0 * cfg.alpha1, eps.residual(t), grad_eps.residual_mut(t));
                if let Some(gd) = grad_d.as_deref_mut() {
                    // d/dd of alpha2 * sum_i w(i) |group_i(G* d)|^2: push
                    // the weighted analysis back through the transpose.
                    let mut gd_analysis = p.motion_grad().analysis(d.field(t));
                    for (g, chunk) in gd_analysis.chunks_exact_mut(4).enumerate() {
                        let w = p.weights(t)[g];
                        for v in chunk {
                            *v *= 2.0 * cfg.alpha2 * w;
                        }
                    }
                    axpy(1.0, &p.motion_grad().adjoint(&gd_analysis), gd.field_mut(t));
                }
            }
            axpy(2.0 * cfg.alpha3, c.coeffs(), grad_c);
        }
        StagePenalty::Augmented(terms) => {
            for t in 1..=t_max {
                let ge = grad_eps.residual_mut(t);
                for (i, v) in ge.iter_mut().enumerate() {
                    *v += terms.rho1 * (eps.residual(t)[i] - terms.eps_anchor[t - 1][i]);
                }
            }
            for (i, v) in grad_c.iter_mut().enumerate() {
                *v += terms.rho3 * (c.coeffs()[i] - terms.c_anchor[i]);
            }
            if let Some(change) = &terms.change {
                for t in 1..=t_max {
                    let diff = sub(eps.residual(t), &change.eps_prev[t - 1]);
                    let mut r = p.change_basis().analysis(&diff);
                    for (a, b) in r.iter_mut().zip(&change.delta_eps_anchor[t - 1]) {
                        *a -= b;
                    }
                    axpy(
                        change.rho,
                        &p.change_basis().synthesis(&r),
                        grad_eps.residual_mut(t),
                    );
                }
                for (i, v) in grad_c.iter_mut().enumerate() {
                    *v += change.rho
                        * (c.coeffs()[i] - change.c_prev[i] - change.delta_c_anchor[i]);
                }
            }
        }
    }
}

/// Value and gradients in one pass over the synthesized states; the
/// motion block is optional because the residual/coefficient solvers
/// never need it.
pub(crate) fn value_and_grads(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
    penalty: StagePenalty,
    with_motion: bool,
) -> Result<(f64, NoiseSeq, Option<MotionSeq>, CoefVec)> {
    let cache = synthesize_cached(p, eps, d, c)?;
    let t_max = p.t_max();
    let mut value = 0.0;
    let stage = |t: usize, value: &mut f64| -> Vec<f64> {
        let r = sub(&p.observation().observe(cache.images.frame(t)), p.observed(t));
        *value += dot(&r, &r);
        let mut g = p.observation().adjoint(&r);
        for v in g.iter_mut() {
            *v *= 2.0;
        }
        g
    };
    let mut zeta = stage(0, &mut value);
    let mut grad_eps = NoiseSeq::zeros(p.grid(), t_max);
    let mut grad_d = with_motion.then(|| MotionSeq::zeros(p.grid(), t_max));
    for t in 1..=t_max {
        grad_eps.residual_mut(t).copy_from_slice(&zeta);
        if let Some(gd) = grad_d.as_mut() {
            gd.field_mut(t).copy_from_slice(&bspline::warp_jacobian_motion_apply(
                cache.coeffs(t),
                d.field(t),
                &zeta,
            ));
        }
        let mut z = bspline::warp_adjoint_image(p.grid(), &zeta, d.field(t));
        axpy(1.0, &stage(t, &mut value), &mut z);
        zeta = z;
    }
    let mut grad_c = p.dict().analysis(&zeta);
    value += penalty_value(p, eps, d, c, penalty);
    add_penalty_grads(
        p,
        eps,
        d,
        c,
        penalty,
        &mut grad_eps,
        grad_d.as_mut(),
        &mut grad_c,
    );
    Ok((
        value,
        grad_eps,
        grad_d,
        CoefVec::new(p.dict().id(), grad_c)?,
    ))
}

/// Full gradient of the smooth cost with respect to `(eps, d, c)`.
pub fn grad_full(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
    penalty: StagePenalty,
) -> Result<(NoiseSeq, MotionSeq, CoefVec)> {
    let (_, grad_eps, grad_d, grad_c) = value_and_grads(p, eps, d, c, penalty, true)?;
    Ok((grad_eps, grad_d.expect("motion block requested"), grad_c))
}

/// Gradient of the data misfit alone with respect to the motion; the
/// constant gradient of the quadratic motion surrogate.
pub fn grad_motion_dataterm(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
) -> Result<MotionSeq> {
    let (_, grad_d, _) = grad_full(p, eps, d, c, StagePenalty::None)?;
    Ok(grad_d)
}

/// Data misfit `sum_t |observe(x_t) - y_t|^2` at the synthesized states.
pub fn eval_data_term(p: &SrProblem, eps: &NoiseSeq, d: &MotionSeq, c: &CoefVec) -> Result<f64> {
    eval_smooth(p, eps, d, c, StagePenalty::None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;
    use crate::grid::Grid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_problem(
        seed: u64,
        w: usize,
        h: usize,
        t_max: usize,
    ) -> (SrProblem, NoiseSeq, MotionSeq, CoefVec) {
        let grid = Grid::new(w, h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        let m = grid.n() / 4;
        let y: Vec<Vec<f64>> = (0..=t_max)
            .map(|_| (0..m).map(|_| rng.gen_range(0.0..50.0)).collect())
            .collect();
        let p = SrProblem::new(grid, y, cfg).unwrap();
        let mut eps = NoiseSeq::zeros(grid, t_max);
        let mut d = MotionSeq::zeros(grid, t_max);
        for t in 1..=t_max {
            for v in eps.residual_mut(t).iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
            for v in d.field_mut(t).iter_mut() {
                *v = rng.gen_range(-0.8..0.8);
            }
        }
        let mut c = CoefVec::zeros(p.dict().id());
        for v in c.coeffs_mut().iter_mut() {
            *v = rng.gen_range(-20.0..20.0);
        }
        (p, eps, d, c)
    }

    #[test]
    fn zero_noise_zero_motion_copies_the_last_frame() {
        let (p, _, _, c) = random_problem(1, 8, 8, 3);
        let eps = NoiseSeq::zeros(p.grid(), 3);
        let d = MotionSeq::zeros(p.grid(), 3);
        let x = synthesize_states(&p, &eps, &d, &c).unwrap();
        let last = x.frame(3).to_vec();
        for t in 0..3 {
            for (a, b) in x.frame(t).iter().zip(&last) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
        // States satisfy the model constraints to round-off.
        for t in 0..3 {
            let ct = crate::bspline::prefilter(p.grid(), x.frame(t + 1)).unwrap();
            let warped = crate::bspline::warp(&ct, d.field(t + 1));
            for (i, v) in x.frame(t).iter().enumerate() {
                assert!((v - warped[i] - eps.residual(t + 1)[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn integer_shift_rolls_each_frame() {
        let (p, _, _, c) = random_problem(2, 8, 8, 3);
        let eps = NoiseSeq::zeros(p.grid(), 3);
        let mut d = MotionSeq::zeros(p.grid(), 3);
        for t in 1..=3 {
            for v in d.field_mut(t).iter_mut().take(p.grid().n()) {
                *v = 1.0;
            }
        }
        let x = synthesize_states(&p, &eps, &d, &c).unwrap();
        let g = p.grid();
        let last = x.frame(3).to_vec();
        for t in 0..3 {
            let shift = 3 - t;
            for s in 0..g.n() {
                let (r, col) = g.pos(s);
                let want = last[g.index(r, (col + shift) % g.width())];
                assert!(
                    (x.frame(t)[s] - want).abs() <= 1e-8 * want.abs().max(1.0),
                    "t={t} pixel {s}"
                );
            }
        }
    }

    #[test]
    fn zero_dictionary_matches_dense_recursion_oracle() {
        let (p, eps, d, _) = random_problem(3, 8, 8, 3);
        let c = CoefVec::zeros(p.dict().id());
        let x = synthesize_states(&p, &eps, &d, &c).unwrap();
        // Dense oracle: build each warp matrix by columns and unroll the
        // recursion with explicit matrix-vector products.
        let g = p.grid();
        let n = g.n();
        let mut frames = vec![vec![0.0; n]; 4];
        for t in (0..3).rev() {
            let mut next = frames[t + 1].clone();
            // dense warp of `next` via column probes
            let mut warped = vec![0.0; n];
            for j in 0..n {
                if next[j] == 0.0 {
                    continue;
                }
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                let col = crate::bspline::warp(
                    &crate::bspline::prefilter(g, &e).unwrap(),
                    d.field(t + 1),
                );
                for i in 0..n {
                    warped[i] += col[i] * next[j];
                }
            }
            for i in 0..n {
                next[i] = warped[i] + eps.residual(t + 1)[i];
            }
            frames[t] = next;
        }
        for t in 0..4 {
            for i in 0..n {
                assert!(
                    (x.frame(t)[i] - frames[t][i]).abs() <= 1e-8 * frames[t][i].abs().max(1.0),
                    "t={t} i={i}"
                );
            }
        }
    }

    #[test]
    fn consistent_data_zeroes_the_sweep_and_gradients() {
        // Build observations exactly from a feasible point; with no
        // penalties every gradient must vanish.
        let (p0, eps, d, c) = random_problem(4, 8, 8, 2);
        let x = synthesize_states(&p0, &eps, &d, &c).unwrap();
        let y: Vec<Vec<f64>> = (0..=2)
            .map(|t| p0.observation().observe(x.frame(t)))
            .collect();
        let p = SrProblem::new(p0.grid(), y, p0.cfg().clone()).unwrap();
        let zetas = adjoint_sweep(&p, &x, &d);
        for t in 0..=2 {
            assert!(zetas.zeta(t).iter().all(|v| v.abs() < 1e-9));
        }
        let (ge, gd, gc) = grad_full(&p, &eps, &d, &c, StagePenalty::None).unwrap();
        for t in 1..=2 {
            assert!(ge.residual(t).iter().all(|v| v.abs() < 1e-9));
            assert!(gd.field(t).iter().all(|v| v.abs() < 1e-9));
        }
        assert!(gc.coeffs().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn single_frame_sweep_matches_dense_observation_oracle() {
        let grid = Grid::new(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..10.0)).collect();
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        let p = SrProblem::new(grid, vec![y.clone()], cfg).unwrap();
        let mut c = CoefVec::zeros(p.dict().id());
        for v in c.coeffs_mut().iter_mut() {
            *v = rng.gen_range(-5.0..5.0);
        }
        let eps = NoiseSeq::zeros(grid, 0);
        let d = MotionSeq::zeros(grid, 0);
        let x = synthesize_states(&p, &eps, &d, &c).unwrap();
        let zetas = adjoint_sweep(&p, &x, &d);
        assert_eq!(zetas.t_max(), 0);
        // Dense H by column probes.
        let n = grid.n();
        let mut h = vec![vec![0.0; n]; 16];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = p.observation().observe(&e);
            for i in 0..16 {
                h[i][j] = col[i];
            }
        }
        let hx = p.observation().observe(x.frame(0));
        for j in 0..n {
            let mut want = 0.0;
            for i in 0..16 {
                want += 2.0 * h[i][j] * (hx[i] - y[i]);
            }
            assert!((zetas.zeta(0)[j] - want).abs() <= 1e-10 * want.abs().max(1.0));
        }
    }

    #[test]
    fn identity_motion_sweep_adds_stage_gradients() {
        let (p, eps, _, c) = random_problem(6, 8, 8, 1);
        let d = MotionSeq::zeros(p.grid(), 1);
        let x = synthesize_states(&p, &eps, &d, &c).unwrap();
        let zetas = adjoint_sweep(&p, &x, &d);
        let mut want = zetas.zeta(0).to_vec();
        axpy(1.0, &data_stage_grad(&p, x.frame(1), 1), &mut want);
        for (a, b) in zetas.zeta(1).iter().zip(&want) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    /// Central finite differences of `eval_smooth` against `grad_full`,
    /// for one penalty configuration.
    fn finite_difference_check(
        p: &SrProblem,
        eps: &NoiseSeq,
        d: &MotionSeq,
        c: &CoefVec,
        penalty: StagePenalty,
        samples: usize,
        seed: u64,
        tol: f64,
    ) {
        let (ge, gd, gc) = grad_full(p, eps, d, c, penalty).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = p.grid().n();
        let t_max = p.t_max();
        let scale = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let block_scales = [
            (1..=t_max).map(|t| scale(ge.residual(t))).fold(0.0, f64::max),
            (1..=t_max).map(|t| scale(gd.field(t))).fold(0.0, f64::max),
            scale(gc.coeffs()),
        ];
        for _ in 0..samples {
            let block = rng.gen_range(0..3);
            let t = rng.gen_range(1..=t_max);
            let (analytic, fd) = match block {
                0 => {
                    let i = rng.gen_range(0..n);
                    let base = eps.residual(t)[i];
                    let h = 1e-4 * base.abs().max(1.0);
                    let mut em = eps.clone();
                    em.residual_mut(t)[i] = base + h;
                    let fp = eval_smooth(p, &em, d, c, penalty).unwrap();
                    em.residual_mut(t)[i] = base - h;
                    let fm = eval_smooth(p, &em, d, c, penalty).unwrap();
                    (ge.residual(t)[i], (fp - fm) / (2.0 * h))
                }
                1 => {
                    let i = rng.gen_range(0..2 * n);
                    let base = d.field(t)[i];
                    let h = 1e-4 * base.abs().max(1.0);
                    let mut dm = d.clone();
                    dm.field_mut(t)[i] = base + h;
                    let fp = eval_smooth(p, eps, &dm, c, penalty).unwrap();
                    dm.field_mut(t)[i] = base - h;
                    let fm = eval_smooth(p, eps, &dm, c, penalty).unwrap();
                    (gd.field(t)[i], (fp - fm) / (2.0 * h))
                }
                _ => {
                    let i = rng.gen_range(0..c.len());
                    let base = c.coeffs()[i];
                    let h = 1e-4 * base.abs().max(1.0);
                    let mut cm = c.clone();
                    cm.coeffs_mut()[i] = base + h;
                    let fp = eval_smooth(p, eps, d, &cm, penalty).unwrap();
                    cm.coeffs_mut()[i] = base - h;
                    let fm = eval_smooth(p, eps, d, &cm, penalty).unwrap();
                    (gc.coeffs()[i], (fp - fm) / (2.0 * h))
                }
            };
            let denom = analytic.abs().max(fd.abs()).max(1e-6 * block_scales[block]).max(1e-12);
            assert!(
                (analytic - fd).abs() / denom <= tol,
                "block {block}: analytic {analytic} vs fd {fd}"
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_quadratic() {
        let (p, eps, d, c) = random_problem(7, 8, 8, 3);
        finite_difference_check(&p, &eps, &d, &c, StagePenalty::Quadratic, 30, 70, 1e-5);
    }

    #[test]
    fn gradients_match_finite_differences_augmented() {
        let (p, eps, d, c) = random_problem(8, 8, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let n = p.grid().n();
        let eps_anchor: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let c_anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cfg = p.cfg().clone();
        let terms = AugmentedTerms {
            rho1: cfg.rho1,
            eps_anchor: &eps_anchor,
            rho3: cfg.rho3,
            c_anchor: &c_anchor,
            change: None,
        };
        finite_difference_check(&p, &eps, &d, &c, StagePenalty::Augmented(&terms), 30, 81, 1e-5);

        // And with the change-penalty blocks active.
        let eps_prev: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let delta_eps_anchor: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let c_prev: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let delta_c_anchor: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let terms = AugmentedTerms {
            rho1: cfg.rho1,
            eps_anchor: &eps_anchor,
            rho3: cfg.rho3,
            c_anchor: &c_anchor,
            change: Some(ChangeTerms {
                rho: cfg.rho,
                eps_prev: &eps_prev,
                delta_eps_anchor: &delta_eps_anchor,
                c_prev: &c_prev,
                delta_c_anchor: &delta_c_anchor,
            }),
        };
        finite_difference_check(&p, &eps, &d, &c, StagePenalty::Augmented(&terms), 30, 82, 1e-5);
    }

    #[test]
    fn motion_dataterm_gradient_matches_finite_differences() {
        let (p, eps, d, c) = random_problem(9, 8, 8, 2);
        let gd = grad_motion_dataterm(&p, &eps, &d, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        for _ in 0..20 {
            let t = rng.gen_range(1..=2);
            let i = rng.gen_range(0..2 * p.grid().n());
            let base = d.field(t)[i];
            let h = 1e-4 * base.abs().max(1.0);
            let mut dm = d.clone();
            dm.field_mut(t)[i] = base + h;
            let fp = eval_data_term(&p, &eps, &dm, &c).unwrap();
            dm.field_mut(t)[i] = base - h;
            let fm = eval_data_term(&p, &eps, &dm, &c).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let analytic = gd.field(t)[i];
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic - fd).abs() / denom <= 1e-5,
                "t={t} i={i}: {analytic} vs {fd}"
            );
        }
    }

    #[test]
    fn flat_images_carry_no_motion_signal() {
        let grid = Grid::new(8, 8).unwrap();
        let mut cfg = SolverConfig::default();
        cfg.p = 2;
        // Constant observations and a constant synthesized sequence.
        let p = SrProblem::new(grid, vec![vec![4.0; 16]; 3], cfg).unwrap();
        let eps = NoiseSeq::zeros(grid, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = MotionSeq::zeros(grid, 2);
        for t in 1..=2 {
            for v in d.field_mut(t).iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        // Constant image: wavelet analysis of a constant.
        let c = CoefVec::new(p.dict().id(), p.dict().analysis(&vec![4.0; 64])).unwrap();
        let gd = grad_motion_dataterm(&p, &eps, &d, &c).unwrap();
        for t in 1..=2 {
            assert!(gd.field(t).iter().all(|v| v.abs() < 1e-7));
        }
    }
}
