//! Closed-form proximal operators and the motion regularizer.

use crate::vec_ops::dot;

/// Scalar soft-thresholding. Panics on a negative threshold.
#[inline]
pub fn soft(a: f64, lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0, "soft: negative threshold");
    if a >= lambda {
        a - lambda
    } else if a <= -lambda {
        a + lambda
    } else {
        0.0
    }
}

/// Elementwise soft-thresholding: the proximal operator of
/// `lambda * |.|_1`.
pub fn prox_l1(v: &[f64], lambda: f64) -> Vec<f64> {
    assert!(lambda >= 0.0, "prox_l1: negative threshold");
    v.iter().map(|&a| soft(a, lambda)).collect()
}

/// In-place variant of [`prox_l1`].
pub fn prox_l1_inplace(v: &mut [f64], lambda: f64) {
    assert!(lambda >= 0.0, "prox_l1: negative threshold");
    for a in v.iter_mut() {
        *a = soft(*a, lambda);
    }
}

/// Groupwise shrinkage: the proximal operator of `theta * w * |.|_2` on
/// one 4-element group. Output is zero when the group norm is at most
/// `theta * w`, otherwise the input scaled down by that amount.
pub fn group_shrink(v4: &[f64; 4], w: f64, theta: f64) -> [f64; 4] {
    assert!(theta >= 0.0 && w >= 0.0, "group_shrink: negative parameter");
    let tau = (v4[0] * v4[0] + v4[1] * v4[1] + v4[2] * v4[2] + v4[3] * v4[3]).sqrt();
    let cut = theta * w;
    if tau <= cut {
        [0.0; 4]
    } else {
        let scale = (tau - cut) / tau;
        [
            scale * v4[0],
            scale * v4[1],
            scale * v4[2],
            scale * v4[3],
        ]
    }
}

/// Shrink every 4-element group of an analysis vector in place;
/// `weights` holds one weight per pixel group.
pub fn group_shrink_inplace(v: &mut [f64], weights: &[f64], theta: f64) {
    assert_eq!(v.len(), 4 * weights.len(), "group_shrink: length mismatch");
    for (g, chunk) in v.chunks_exact_mut(4).enumerate() {
        let v4 = [chunk[0], chunk[1], chunk[2], chunk[3]];
        chunk.copy_from_slice(&group_shrink(&v4, weights[g], theta));
    }
}

/// Motion regularizer on an analysis vector: sum over pixels of
/// `w(i) * (group 2-norm)^p`, `p` in {1, 2}.
pub fn eval_r(gd: &[f64], w: &[f64], p: u8) -> f64 {
    assert!(p == 1 || p == 2, "eval_r: p must be 1 or 2");
    assert_eq!(gd.len(), 4 * w.len(), "eval_r: length mismatch");
    let mut acc = 0.0;
    for (g, chunk) in gd.chunks_exact(4).enumerate() {
        let sq = dot(chunk, chunk);
        acc += w[g] * if p == 2 { sq } else { sq.sqrt() };
    }
    acc
}
