//! The three splitting-solver instantiations: the convex known-motion
//! problem, the residual/coefficient step with the change penalty, and
//! the proximal motion step for the quadratic surrogate.

use super::{lbfgs_minimize, run, AdmmTrace, LbfgsParams, ProxBlock};
use crate::adjoint::{self, AugmentedTerms, ChangeTerms, StagePenalty};
use crate::error::{Error, Result};
use crate::outer;
use crate::problem::SrProblem;
use crate::prox::{group_shrink_inplace, prox_l1_inplace};
use crate::seq::{CoefVec, ImageSeq, MotionSeq, NoiseSeq};
use crate::vec_ops::dot;

fn lbfgs_params(p: &SrProblem) -> LbfgsParams {
    LbfgsParams {
        max_iters: p.cfg().lbfgs_iters,
        ..Default::default()
    }
}

/// Flatten `(eps, c)` into one vector, residuals first.
fn pack(eps: &NoiseSeq, c: &CoefVec) -> Vec<f64> {
    let mut z = Vec::with_capacity(eps.t_max() * eps.grid().n() + c.len());
    for t in 1..=eps.t_max() {
        z.extend_from_slice(eps.residual(t));
    }
    z.extend_from_slice(c.coeffs());
    z
}

fn unpack(p: &SrProblem, z: &[f64]) -> (NoiseSeq, CoefVec) {
    let n = p.grid().n();
    let t_max = p.t_max();
    let mut eps = NoiseSeq::zeros(p.grid(), t_max);
    for t in 1..=t_max {
        eps.residual_mut(t)
            .copy_from_slice(&z[(t - 1) * n..t * n]);
    }
    let mut c = CoefVec::zeros(p.dict().id());
    c.coeffs_mut().copy_from_slice(&z[t_max * n..]);
    (eps, c)
}

fn chunk_frames(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n).map(|c| c.to_vec()).collect()
}

/// Solve the convex problem at fixed motion: data misfit plus l1
/// penalties on the residuals and coefficients. Splitting blocks carry
/// the two l1 terms; the smooth block is solved inexactly by L-BFGS
/// with adjoint-sweep gradients.
pub fn solve_convex(
    p: &SrProblem,
    d: &MotionSeq,
    eps0: &NoiseSeq,
    c0: &CoefVec,
) -> Result<(ImageSeq, NoiseSeq, CoefVec, AdmmTrace)> {
    let (eps, c, trace) = solve_eps_c(p, d, eps0, c0, None)?;
    let x = adjoint::synthesize_states(p, &eps, d, &c)?;
    Ok((x, eps, c, trace))
}

/// Residual/coefficient step of the outer recursion: the convex problem
/// plus the change penalty tying the iterate to `(eps_prev, c_prev)` in
/// the change basis. With `gamma == 0` the extra blocks are inert and
/// this reduces exactly to [`solve_convex`].
pub fn solve_step1(
    p: &SrProblem,
    d: &MotionSeq,
    eps_prev: &NoiseSeq,
    c_prev: &CoefVec,
) -> Result<(NoiseSeq, CoefVec, AdmmTrace)> {
    let change = if p.cfg().gamma > 0.0 {
        Some((eps_prev, c_prev))
    } else {
        None
    };
    let (eps, c, trace) = solve_eps_c(p, d, eps_prev, c_prev, change)?;

    // Monotone safeguard: the step must not worsen its own subproblem
    // objective relative to the no-move point.
    let obj_new = step1_objective(p, d, &eps, c.coeffs(), eps_prev, c_prev)?;
    let obj_old = step1_objective(p, d, eps_prev, c_prev.coeffs(), eps_prev, c_prev)?;
    if obj_new > obj_old {
        return Ok((eps_prev.clone(), c_prev.clone(), trace));
    }
    Ok((eps, c, trace))
}

/// Objective of the residual/coefficient step: the l1 cost at fixed
/// motion plus the change penalty.
fn step1_objective(
    p: &SrProblem,
    d: &MotionSeq,
    eps: &NoiseSeq,
    c: &[f64],
    eps_prev: &NoiseSeq,
    c_prev: &CoefVec,
) -> Result<f64> {
    let c = CoefVec::new(p.dict().id(), c.to_vec())?;
    let j = outer::eval_j(p, eps, d, &c)?;
    Ok(j + p.cfg().gamma * outer::eval_cost_to_move(p, eps, eps_prev, &c, c_prev))
}

fn solve_eps_c(
    p: &SrProblem,
    d: &MotionSeq,
    eps0: &NoiseSeq,
    c0: &CoefVec,
    change: Option<(&NoiseSeq, &CoefVec)>,
) -> Result<(NoiseSeq, CoefVec, AdmmTrace)> {
    if p.cfg().p != 1 {
        return Err(Error::Config(
            "the splitting solvers address the p = 1 problem".into(),
        ));
    }
    let cfg = p.cfg().clone();
    let n = p.grid().n();
    let t_max = p.t_max();
    let nt = n * t_max;
    let warm = pack(eps0, c0);

    let mut blocks = vec![
        ProxBlock::new(
            "eps",
            Box::new(move |z: &[f64]| z[..nt].to_vec()),
            Box::new(move |v: &mut [f64]| prox_l1_inplace(v, cfg.alpha1 / cfg.rho1)),
            &warm,
        ),
        ProxBlock::new(
            "coef",
            Box::new(move |z: &[f64]| z[nt..].to_vec()),
            Box::new(move |v: &mut [f64]| prox_l1_inplace(v, cfg.alpha3 / cfg.rho3)),
            &warm,
        ),
    ];
    if let Some((eps_prev, c_prev)) = change {
        let basis = p.change_basis().clone();
        let prev_flat: Vec<f64> = (1..=t_max)
            .flat_map(|t| eps_prev.residual(t).to_vec())
            .collect();
        blocks.push(ProxBlock::new(
            "change-eps",
            Box::new(move |z: &[f64]| {
                let mut out = Vec::with_capacity(nt);
                for t in 0..t_max {
                    let diff: Vec<f64> = z[t * n..(t + 1) * n]
                        .iter()
                        .zip(&prev_flat[t * n..(t + 1) * n])
                        .map(|(a, b)| a - b)
                        .collect();
                    out.extend(basis.analysis(&diff));
                }
                out
            }),
            Box::new(move |v: &mut [f64]| prox_l1_inplace(v, cfg.gamma / cfg.rho)),
            &warm,
        ));
        let c_prev_vec = c_prev.coeffs().to_vec();
        blocks.push(ProxBlock::new(
            "change-coef",
            Box::new(move |z: &[f64]| {
                z[nt..]
                    .iter()
                    .zip(&c_prev_vec)
                    .map(|(a, b)| a - b)
                    .collect()
            }),
            Box::new(move |v: &mut [f64]| prox_l1_inplace(v, cfg.gamma / cfg.rho)),
            &warm,
        ));
    }

    let params = lbfgs_params(p);
    let with_change = change.is_some();
    let smooth = |warm: &[f64], blocks: &[ProxBlock]| -> Result<Vec<f64>> {
        let eps_anchor = chunk_frames(&blocks[0].anchor(), n);
        let c_anchor = blocks[1].anchor();
        let change_terms = if with_change {
            let (eps_prev, c_prev) = change.unwrap();
            Some((
                chunk_frames(&blocks[2].anchor(), n),
                blocks[3].anchor(),
                eps_prev,
                c_prev,
            ))
        } else {
            None
        };
        let outcome = lbfgs_minimize(
            |zv, g| {
                let (eps, c) = unpack(p, zv);
                let change_built = change_terms.as_ref().map(|(dea, dca, ep, cp)| ChangeTerms {
                    rho: cfg.rho,
                    eps_prev: ep.residuals(),
                    delta_eps_anchor: dea,
                    c_prev: cp.coeffs(),
                    delta_c_anchor: dca,
                });
                let terms = AugmentedTerms {
                    rho1: cfg.rho1,
                    eps_anchor: &eps_anchor,
                    rho3: cfg.rho3,
                    c_anchor: &c_anchor,
                    change: change_built,
                };
                let (value, ge, _, gc) = adjoint::value_and_grads(
                    p,
                    &eps,
                    d,
                    &c,
                    StagePenalty::Augmented(&terms),
                    false,
                )
                .expect("shapes fixed by construction");
                for t in 1..=t_max {
                    g[(t - 1) * n..t * n].copy_from_slice(ge.residual(t));
                }
                g[nt..].copy_from_slice(gc.coeffs());
                value
            },
            warm,
            &params,
        )?;
        Ok(outcome.x)
    };

    let objective = |z: &[f64]| {
        let (eps, c) = unpack(p, z);
        outer::eval_j(p, &eps, d, &c).unwrap_or(f64::NAN)
    };

    let (z, trace) = run(cfg.admm_iters, warm, &mut blocks, smooth, objective, false)?;
    let (eps, c) = unpack(p, &z);
    Ok((eps, c, trace))
}

/// Proximal motion step: minimize the quadratic surrogate anchored at
/// `d_prev` (constant gradient `grad_b`, curvature `alpha_k`) plus the
/// weighted group penalty on the motion gradients.
pub fn solve_motion(
    p: &SrProblem,
    d_prev: &MotionSeq,
    grad_b: &MotionSeq,
    alpha_k: f64,
) -> Result<(MotionSeq, AdmmTrace)> {
    if !(alpha_k > 0.0) {
        return Err(Error::Config(format!(
            "surrogate curvature must be positive, got {alpha_k}"
        )));
    }
    let cfg = p.cfg().clone();
    let n = p.grid().n();
    let t_max = p.t_max();
    let two_n = 2 * n;
    let warm: Vec<f64> = (1..=t_max)
        .flat_map(|t| d_prev.field(t).to_vec())
        .collect();
    let prev = warm.clone();
    let gb: Vec<f64> = (1..=t_max)
        .flat_map(|t| grad_b.field(t).to_vec())
        .collect();
    let mg = *p.motion_grad();
    let weights: Vec<Vec<f64>> = (1..=t_max).map(|t| p.weights(t).to_vec()).collect();
    let weights_for_prox = weights.clone();
    let theta = cfg.alpha2 / cfg.rho2;

    let mut blocks = vec![ProxBlock::new(
        "motion-grad",
        Box::new(move |z: &[f64]| {
            let mut out = Vec::with_capacity(4 * n * t_max);
            for t in 0..t_max {
                out.extend(mg.analysis(&z[t * two_n..(t + 1) * two_n]));
            }
            out
        }),
        Box::new(move |v: &mut [f64]| {
            for (t, chunk) in v.chunks_mut(4 * n).enumerate() {
                group_shrink_inplace(chunk, &weights_for_prox[t], theta);
            }
        }),
        &warm,
    )];

    let params = lbfgs_params(p);
    let smooth = |warm: &[f64], blocks: &[ProxBlock]| -> Result<Vec<f64>> {
        let anchor = blocks[0].anchor();
        let outcome = lbfgs_minimize(
            |z, g| {
                let mut value = 0.0;
                for i in 0..z.len() {
                    let step = z[i] - prev[i];
                    value += gb[i] * step + 0.5 * alpha_k * step * step;
                    g[i] = gb[i] + alpha_k * step;
                }
                for t in 0..t_max {
                    let zt = &z[t * two_n..(t + 1) * two_n];
                    let mut r = mg.analysis(zt);
                    for (ri, ai) in r.iter_mut().zip(&anchor[t * 4 * n..(t + 1) * 4 * n]) {
                        *ri -= ai;
                    }
                    value += 0.5 * cfg.rho2 * dot(&r, &r);
                    let back = mg.adjoint(&r);
                    for (gi, bi) in g[t * two_n..(t + 1) * two_n].iter_mut().zip(&back) {
                        *gi += cfg.rho2 * bi;
                    }
                }
                value
            },
            warm,
            &params,
        )?;
        Ok(outcome.x)
    };

    let surrogate = |z: &[f64]| -> f64 {
        let mut value = 0.0;
        for i in 0..z.len() {
            let step = z[i] - prev[i];
            value += gb[i] * step + 0.5 * alpha_k * step * step;
        }
        for t in 0..t_max {
            let ga = mg.analysis(&z[t * two_n..(t + 1) * two_n]);
            value += cfg.alpha2 * crate::prox::eval_r(&ga, &weights[t], 1);
        }
        value
    };

    let (z, trace) = run(
        cfg.admm_iters,
        warm.clone(),
        &mut blocks,
        smooth,
        surrogate,
        false,
    )?;

    // Monotone safeguard: never return a candidate that is worse on the
    // surrogate than staying put.
    let z = if surrogate(&z) > surrogate(&prev) { prev } else { z };

    let mut d_next = MotionSeq::zeros(p.grid(), t_max);
    for t in 1..=t_max {
        d_next
            .field_mut(t)
            .copy_from_slice(&z[(t - 1) * two_n..t * two_n]);
    }
    Ok((d_next, trace))
}
