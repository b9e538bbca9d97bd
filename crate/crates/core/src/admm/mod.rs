//! Operator-splitting solvers.
//!
//! One generic driver ([`run`]) implements the splitting skeleton —
//! smooth block, proximal blocks, dual ascent — and three instantiations
//! in [`steps`] cover the convex known-motion problem, the
//! residual/coefficient step with the change penalty, and the motion
//! surrogate step.

mod lbfgs;
pub mod steps;

pub use lbfgs::{lbfgs_minimize, LbfgsOutcome, LbfgsParams};
pub use steps::{solve_convex, solve_motion, solve_step1};

use crate::error::Result;
use crate::vec_ops::{norm, NormKind};

/// One splitting constraint `map(z) = z_tilde` with its proximal update
/// and scaled dual.
pub struct ProxBlock<'a> {
    pub name: &'static str,
    /// Applies the constraint map to the smooth variables.
    pub map: Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>,
    /// In-place proximal operator on `map(z) + u`.
    pub prox: Box<dyn Fn(&mut [f64]) + 'a>,
    /// Splitting variable `z_tilde`.
    pub z: Vec<f64>,
    /// Scaled dual variable.
    pub u: Vec<f64>,
}

impl<'a> ProxBlock<'a> {
    /// Anchor the splitting variable at the warm-start point and zero
    /// the dual.
    pub fn new(
        name: &'static str,
        map: Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>,
        prox: Box<dyn Fn(&mut [f64]) + 'a>,
        warm: &[f64],
    ) -> Self {
        let z = (map)(warm);
        let u = vec![0.0; z.len()];
        ProxBlock { name, map, prox, z, u }
    }

    /// `z_tilde - u`, the anchor of the smooth subproblem's quadratic.
    pub fn anchor(&self) -> Vec<f64> {
        self.z.iter().zip(&self.u).map(|(z, u)| z - u).collect()
    }
}

/// Per-iteration diagnostics of one splitting solve.
#[derive(Clone, Debug, Default)]
pub struct AdmmTrace {
    /// True subproblem objective at the smooth-block iterate.
    pub objective: Vec<f64>,
    /// One 2-norm per constraint block per iteration.
    pub primal_residuals: Vec<Vec<f64>>,
    /// Smooth-block iterates, kept only on request.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

/// Run `iters` rounds of (smooth solve, proximal updates, dual ascent).
///
/// The dual update is the bookkeeping identity
/// `u += map(z) - z_tilde`, evaluated after the proximal step.
pub fn run<'a>(
    iters: usize,
    mut z: Vec<f64>,
    blocks: &mut [ProxBlock<'a>],
    mut smooth_solve: impl FnMut(&[f64], &[ProxBlock<'a>]) -> Result<Vec<f64>>,
    mut objective: impl FnMut(&[f64]) -> f64,
    keep_snapshots: bool,
) -> Result<(Vec<f64>, AdmmTrace)> {
    let mut trace = AdmmTrace {
        snapshots: keep_snapshots.then(Vec::new),
        ..Default::default()
    };
    for _ in 0..iters {
        z = smooth_solve(&z, blocks)?;
        let mut residuals = Vec::with_capacity(blocks.len());
        for block in blocks.iter_mut() {
            let az = (block.map)(&z);
            let mut v: Vec<f64> = az.iter().zip(&block.u).map(|(a, u)| a + u).collect();
            (block.prox)(&mut v);
            let mut residual = 0.0;
            for i in 0..v.len() {
                let violation = az[i] - v[i];
                residual += violation * violation;
                block.u[i] += violation;
            }
            block.z = v;
            residuals.push(residual.sqrt());
        }
        trace.objective.push(objective(&z));
        trace.primal_residuals.push(residuals);
        if let Some(snaps) = trace.snapshots.as_mut() {
            snaps.push(z.clone());
        }
    }
    Ok((z, trace))
}

/// Final primal residual of block `b`, if any iterations ran.
pub fn last_residual(trace: &AdmmTrace, b: usize) -> Option<f64> {
    trace.primal_residuals.last().map(|r| r[b])
}

/// Convenience: 2-norm distance between a block's map output and its
/// splitting variable at the returned iterate.
pub fn block_violation(block: &ProxBlock, z: &[f64]) -> f64 {
    let az = (block.map)(z);
    let diff: Vec<f64> = az.iter().zip(&block.z).map(|(a, b)| a - b).collect();
    norm(&diff, NormKind::L2)
}
