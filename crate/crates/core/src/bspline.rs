//! Cubic B-spline image representation and the motion-compensated
//! warping operator.
//!
//! An image is converted once into B-spline coefficients by a separable
//! recursive prefilter ([`prefilter`]); evaluating the spline at the
//! pixel grid then reproduces the image exactly. [`warp`] samples the
//! spline at motion-displaced positions, which makes it linear in the
//! image and polynomial in the displacement. All boundaries are
//! periodic, which keeps the prefilter matrix symmetric; the warp
//! adjoint exploits that symmetry.
//!
//! Coordinate conventions: pixel `s` sits at `(row, col)` per
//! [`Grid::pos`]; a displacement field stores the column (horizontal)
//! displacement in entries `0..n` and the row (vertical) displacement in
//! entries `n..2n`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::vec_ops::all_finite;

/// Pole of the cubic B-spline interpolation prefilter: sqrt(3) - 2.
const POLE: f64 = -0.267_949_192_431_122_7;

/// Step for the centered-difference spatial derivatives of the warped
/// image (2^-17). Small enough that the truncation error sits far below
/// the gradient tolerances used in the tests, large enough to stay clear
/// of round-off.
const MOTION_FD_STEP: f64 = 7.62939453125e-6;

/// Centered cubic B-spline, support (-2, 2).
pub fn bspline3(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        2.0 / 3.0 - a * a + 0.5 * a * a * a
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// The four tap weights at fractional offset `f` in `[0, 1)`: the values
/// of [`bspline3`] at `f + 1`, `f`, `f - 1`, `f - 2`, in closed form.
/// They sum to 1 for every `f`.
#[inline]
fn spline_weights(f: f64) -> [f64; 4] {
    let g = 1.0 - f;
    [
        g * g * g / 6.0,
        2.0 / 3.0 - f * f + 0.5 * f * f * f,
        2.0 / 3.0 - g * g + 0.5 * g * g * g,
        f * f * f / 6.0,
    ]
}

/// B-spline coefficients of one frame.
#[derive(Clone, Debug)]
pub struct SplineCoeffs {
    grid: Grid,
    coeffs: Vec<f64>,
}

impl SplineCoeffs {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// How many terms of the geometric tail are needed before `|POLE|^k`
/// drops below f64 machine precision.
fn init_horizon() -> usize {
    (f64::EPSILON.ln() / POLE.abs().ln()).ceil() as usize + 1
}

/// In-place interpolation prefilter of one periodic scanline.
fn prefilter_line(line: &mut [f64], horizon: usize) {
    let n = line.len();
    // Causal pass, gain 6 folded in. Periodic start value from the
    // geometric tail, truncated at machine precision.
    let mut causal = vec![0.0; n];
    let mut acc = 0.0;
    let mut zk = 1.0;
    for j in 0..horizon {
        acc += zk * 6.0 * line[(n - j % n) % n];
        zk *= POLE;
    }
    causal[0] = acc;
    for k in 1..n {
        causal[k] = 6.0 * line[k] + POLE * causal[k - 1];
    }
    // Anticausal pass; start value again from the truncated tail.
    let mut acc = 0.0;
    let mut zk = POLE;
    for j in 0..horizon {
        acc -= zk * causal[(n - 1 + j) % n];
        zk *= POLE;
    }
    line[n - 1] = acc;
    for k in (0..n - 1).rev() {
        line[k] = POLE * (line[k + 1] - causal[k]);
    }
}

/// Compute B-spline coefficients such that resampling the spline at the
/// pixel grid returns `image`. Separable recursive filtering, periodic
/// boundaries.
pub fn prefilter(grid: Grid, image: &[f64]) -> Result<SplineCoeffs> {
    if image.len() != grid.n() {
        return Err(Error::DimensionMismatch(format!(
            "prefilter: {} values on grid {grid}",
            image.len()
        )));
    }
    if !all_finite(image) {
        return Err(Error::NonFinite("prefilter input".into()));
    }
    let (w, h) = (grid.width(), grid.height());
    let horizon = init_horizon();
    let mut coeffs = image.to_vec();
    for row in coeffs.chunks_mut(w) {
        prefilter_line(row, horizon);
    }
    let mut column = vec![0.0; h];
    for c in 0..w {
        for r in 0..h {
            column[r] = coeffs[r * w + c];
        }
        prefilter_line(&mut column, horizon);
        for r in 0..h {
            coeffs[r * w + c] = column[r];
        }
    }
    Ok(SplineCoeffs { grid, coeffs })
}

/// The 4x4 tap footprint of a sample position along one axis: wrapped
/// base indices and weights.
#[inline]
fn footprint(u: f64, extent: usize) -> ([usize; 4], [f64; 4]) {
    let base = u.floor();
    let f = u - base;
    let weights = spline_weights(f);
    let n = extent as i64;
    let b = (base as i64 - 1).rem_euclid(n);
    let mut idx = [0usize; 4];
    let mut cur = b;
    for slot in idx.iter_mut() {
        *slot = cur as usize;
        cur += 1;
        if cur == n {
            cur = 0;
        }
    }
    (idx, weights)
}

/// Evaluate the spline at continuous position `(row, col)`.
#[inline]
fn sample(coeffs: &SplineCoeffs, row: f64, col: f64) -> f64 {
    let g = coeffs.grid;
    let (ri, rw) = footprint(row, g.height());
    let (ci, cw) = footprint(col, g.width());
    let w = g.width();
    let mut acc = 0.0;
    for i in 0..4 {
        let row_off = ri[i] * w;
        let mut line = 0.0;
        for j in 0..4 {
            line += coeffs.coeffs[row_off + ci[j]] * cw[j];
        }
        acc += line * rw[i];
    }
    acc
}

/// Warp the image represented by `coeffs` along displacement `d`
/// (length `2n`): output pixel `s` is the spline evaluated at
/// `pos(s) + d(s)`, periodic wrap.
pub fn warp(coeffs: &SplineCoeffs, d: &[f64]) -> Vec<f64> {
    let g = coeffs.grid;
    let n = g.n();
    assert_eq!(d.len(), 2 * n, "warp: displacement must have 2n entries");
    debug_assert!(all_finite(d), "warp: non-finite displacement");
    let mut out = vec![0.0; n];
    for s in 0..n {
        let (r, c) = g.pos(s);
        out[s] = sample(coeffs, r as f64 + d[n + s], c as f64 + d[s]);
    }
    out
}

/// Transpose of the linear map `x -> warp(prefilter(x), d)` applied to
/// `zeta`: scatter each `zeta(i)` onto the spline taps it would have
/// read, then apply the (symmetric) prefilter.
pub fn warp_adjoint_image(grid: Grid, zeta: &[f64], d: &[f64]) -> Vec<f64> {
    let n = grid.n();
    assert_eq!(zeta.len(), n, "warp_adjoint_image: zeta length");
    assert_eq!(d.len(), 2 * n, "warp_adjoint_image: displacement length");
    let w = grid.width();
    let mut scattered = vec![0.0; n];
    for i in 0..n {
        let z = zeta[i];
        if z == 0.0 {
            continue;
        }
        let (r, c) = grid.pos(i);
        let (ri, rw) = footprint(r as f64 + d[n + i], grid.height());
        let (ci, cw) = footprint(c as f64 + d[i], grid.width());
        for a in 0..4 {
            let row_off = ri[a] * w;
            let zrw = z * rw[a];
            for b in 0..4 {
                scattered[row_off + ci[b]] += zrw * cw[b];
            }
        }
    }
    // C is symmetric under periodic boundaries, so applying the forward
    // prefilter realizes the transpose.
    prefilter(grid, &scattered)
        .expect("scatter of finite inputs is finite")
        .coeffs
}

/// Apply the transposed motion Jacobian of the warp to `zeta`: output
/// entry `s` is `zeta(s)` times the column derivative of the warped
/// image at pixel `s`, entry `n + s` the row derivative. The spatial
/// derivatives are second-order centered differences of the spline,
/// taken with a sub-pixel step.
pub fn warp_jacobian_motion_apply(coeffs: &SplineCoeffs, d: &[f64], zeta: &[f64]) -> Vec<f64> {
    let g = coeffs.grid;
    let n = g.n();
    assert_eq!(d.len(), 2 * n, "warp_jacobian_motion_apply: d length");
    assert_eq!(zeta.len(), n, "warp_jacobian_motion_apply: zeta length");
    let h = MOTION_FD_STEP;
    let mut out = vec![0.0; 2 * n];
    for s in 0..n {
        let z = zeta[s];
        if z == 0.0 {
            continue;
        }
        let (r, c) = g.pos(s);
        let row = r as f64 + d[n + s];
        let col = c as f64 + d[s];
        let dcol = (sample(coeffs, row, col + h) - sample(coeffs, row, col - h)) / (2.0 * h);
        let drow = (sample(coeffs, row + h, col) - sample(coeffs, row - h, col)) / (2.0 * h);
        out[s] = z * dcol;
        out[n + s] = z * drow;
    }
    out
}
