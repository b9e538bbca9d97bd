//! Limited-memory BFGS with a strong-Wolfe line search. Shared smooth
//! inner solver for all the splitting subproblems.

use crate::error::{Error, Result};
use crate::vec_ops::{dot, norm, NormKind};

#[derive(Clone, Copy, Debug)]
pub struct LbfgsParams {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Stop when the gradient norm falls below this fraction of the
    /// starting gradient norm (floored at the same absolute value).
    pub grad_tol: f64,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        LbfgsParams {
            memory: 10,
            max_iters: 50,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting value included.
    pub values: Vec<f64>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Two-loop recursion; returns the search direction for gradient `g`.
fn two_loop(g: &[f64], pairs: &[Pair]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (i, p) in pairs.iter().enumerate().rev() {
        let a = p.rho * dot(&p.s, &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(&p.y) {
            *qj -= a * yj;
        }
    }
    if let Some(last) = pairs.last() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
    }
    for (i, p) in pairs.iter().enumerate() {
        let b = p.rho * dot(&p.y, &q);
        for (qj, sj) in q.iter_mut().zip(&p.s) {
            *qj += (alphas[i] - b) * sj;
        }
    }
    for qj in q.iter_mut() {
        *qj = -*qj;
    }
    q
}

fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64) -> f64 {
    let (lo, hi) = if x1 < x2 { (x1, x2) } else { (x2, x1) };
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_finite() {
            return min_pos.clamp(lo, hi);
        }
    }
    0.5 * (lo + hi)
}

/// Minimize `f` from `x0`. The callback returns the objective value and
/// writes the gradient into its second argument. Aborts with a
/// diagnostic if the callback ever produces a non-finite value.
pub fn lbfgs_minimize<F>(mut f: F, x0: &[f64], params: &LbfgsParams) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    check_finite(fx, &g)?;
    let mut values = vec![fx];

    if n == 0 {
        return Ok(LbfgsOutcome {
            x,
            value: fx,
            iterations: 0,
            converged: true,
            values,
        });
    }

    let g0_inf = norm(&g, NormKind::LInf);
    let tol = params.grad_tol * g0_inf.max(1.0);
    let mut pairs: Vec<Pair> = Vec::new();
    let mut converged = norm(&g, NormKind::LInf) <= tol;
    let mut iterations = 0;

    // Scratch for line-search trials.
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];

    'outer: while !converged && iterations < params.max_iters {
        let mut dir = two_loop(&g, &pairs);
        let mut dphi0 = dot(&dir, &g);
        if !(dphi0 < 0.0) {
            // Not a descent direction: drop the memory and restart along
            // the negative gradient.
            pairs.clear();
            dir = g.iter().map(|v| -v).collect();
            dphi0 = dot(&dir, &g);
            if !(dphi0 < 0.0) {
                break;
            }
        }

        let alpha0 = if pairs.is_empty() && iterations == 0 {
            (1.0 / norm(&g, NormKind::L1)).min(1.0)
        } else {
            1.0
        };

        // Strong-Wolfe line search: bracket then zoom.
        let eval = |a: f64, xt: &mut [f64], gt: &mut [f64], f: &mut F| -> Result<(f64, f64)> {
            for i in 0..n {
                xt[i] = x[i] + a * dir[i];
            }
            let v = f(xt, gt);
            check_finite(v, gt)?;
            Ok((v, dot(gt, &dir)))
        };

        let max_ls = 25;
        // On acceptance, xt/gt hold the trial state and `accepted` its
        // value, so no re-evaluation is needed.
        let mut accepted: Option<f64> = None;
        let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;
        let mut a_prev = 0.0;
        let mut f_prev = fx;
        let mut g_prev = dphi0;
        let mut a = alpha0;
        for ls in 0..max_ls {
            let (fa, ga) = eval(a, &mut xt, &mut gt, &mut f)?;
            if fa > fx + params.c1 * a * dphi0 || (ls > 0 && fa >= f_prev) {
                bracket = Some((a_prev, f_prev, g_prev, a, fa, ga));
                break;
            }
            if ga.abs() <= -params.c2 * dphi0 {
                accepted = Some(fa);
                break;
            }
            if ga >= 0.0 {
                bracket = Some((a, fa, ga, a_prev, f_prev, g_prev));
                break;
            }
            a_prev = a;
            f_prev = fa;
            g_prev = ga;
            a *= 2.0;
        }

        if accepted.is_none() {
            if let Some((mut a_lo, mut f_lo, mut g_lo, mut a_hi, mut f_hi, mut g_hi)) = bracket {
                for _ in 0..max_ls {
                    if (a_hi - a_lo).abs() * norm(&dir, NormKind::LInf) < 1e-14 {
                        break;
                    }
                    let mut aj = cubic_interpolate(a_lo, f_lo, g_lo, a_hi, f_hi, g_hi);
                    let gap = (a_hi - a_lo).abs();
                    let lo = a_lo.min(a_hi) + 0.05 * gap;
                    let hi = a_lo.max(a_hi) - 0.05 * gap;
                    aj = aj.clamp(lo, hi);
                    let (fj, gj) = eval(aj, &mut xt, &mut gt, &mut f)?;
                    if fj > fx + params.c1 * aj * dphi0 || fj >= f_lo {
                        a_hi = aj;
                        f_hi = fj;
                        g_hi = gj;
                    } else {
                        if gj.abs() <= -params.c2 * dphi0 {
                            accepted = Some(fj);
                            break;
                        }
                        if gj * (a_hi - a_lo) >= 0.0 {
                            a_hi = a_lo;
                            f_hi = f_lo;
                            g_hi = g_lo;
                        }
                        a_lo = aj;
                        f_lo = fj;
                        g_lo = gj;
                    }
                }
                if accepted.is_none() && f_lo < fx && a_lo > 0.0 {
                    // Fall back to the sufficient-decrease end of the
                    // bracket when the curvature condition is out of
                    // reach in the eval budget.
                    let (fj, _) = eval(a_lo, &mut xt, &mut gt, &mut f)?;
                    accepted = Some(fj);
                }
            }
        }

        let Some(f_new) = accepted else {
            // No progress possible along this direction.
            break 'outer;
        };

        let s: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
        let yv: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&s, &yv);
        // Skip pairs that violate positive curvature.
        if sy > 1e-10 * norm(&s, NormKind::L2) * norm(&yv, NormKind::L2) {
            if pairs.len() == params.memory {
                pairs.remove(0);
            }
            pairs.push(Pair {
                rho: 1.0 / sy,
                s,
                y: yv,
            });
        }

        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        fx = f_new;
        values.push(fx);
        iterations += 1;
        converged = norm(&g, NormKind::LInf) <= tol;
    }

    Ok(LbfgsOutcome {
        x,
        value: fx,
        iterations,
        converged,
        values,
    })
}

fn check_finite(v: f64, g: &[f64]) -> Result<()> {
    if !v.is_finite() || !crate::vec_ops::all_finite(g) {
        return Err(Error::SolverAbort(
            "objective callback returned a non-finite value or gradient".into(),
        ));
    }
    Ok(())
}
