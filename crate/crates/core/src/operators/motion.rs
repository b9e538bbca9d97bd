//! Motion-gradient analysis operator.
//!
//! The analysis map takes a displacement field (`2n` values) to `4n`
//! values: forward differences, with periodic wrap, of each of the two
//! motion components along each of the two axes. The four outputs
//! belonging to pixel `i` are stored contiguously at `4i..4i+4` in the
//! order (comp-1 along columns, comp-1 along rows, comp-2 along columns,
//! comp-2 along rows), so groupwise shrinkage is a strided pass.

use crate::grid::Grid;

#[derive(Clone, Copy, Debug)]
pub struct MotionGradOp {
    grid: Grid,
}

impl MotionGradOp {
    pub fn new(grid: Grid) -> Self {
        MotionGradOp { grid }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Length of an analysis vector.
    pub fn analysis_len(&self) -> usize {
        4 * self.grid.n()
    }

    /// Forward-difference analysis of a displacement field.
    pub fn analysis(&self, d: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        assert_eq!(d.len(), 2 * n, "motion analysis: field length");
        let (w, h) = (self.grid.width(), self.grid.height());
        let mut out = vec![0.0; 4 * n];
        for i in 0..n {
            let (r, c) = self.grid.pos(i);
            let right = self.grid.index(r, (c + 1) % w);
            let down = self.grid.index((r + 1) % h, c);
            out[4 * i] = d[right] - d[i];
            out[4 * i + 1] = d[down] - d[i];
            out[4 * i + 2] = d[n + right] - d[n + i];
            out[4 * i + 3] = d[n + down] - d[n + i];
        }
        out
    }

    /// Transpose of [`Self::analysis`]. Composing the two yields the
    /// negated 5-point periodic Laplacian on each motion component.
    pub fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        assert_eq!(v.len(), 4 * n, "motion adjoint: analysis length");
        let (w, h) = (self.grid.width(), self.grid.height());
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            let (r, c) = self.grid.pos(i);
            let right = self.grid.index(r, (c + 1) % w);
            let down = self.grid.index((r + 1) % h, c);
            out[i] -= v[4 * i] + v[4 * i + 1];
            out[right] += v[4 * i];
            out[down] += v[4 * i + 1];
            out[n + i] -= v[4 * i + 2] + v[4 * i + 3];
            out[n + right] += v[4 * i + 2];
            out[n + down] += v[4 * i + 3];
        }
        out
    }
}
