//! Observation operator: separable periodic low-pass filter followed by
//! a factor-2 subsampling, plus its adjoint (zero-insertion upsampling
//! followed by the same filter).

use crate::config::Kernel;
use crate::error::Result;
use crate::grid::Grid;

/// Standard deviation of the default blur kernel.
const GAUSSIAN_SIGMA: f64 = 1.12;
const GAUSSIAN_RADIUS: i64 = 4;

fn kernel_taps(kernel: Kernel) -> Vec<f64> {
    match kernel {
        Kernel::Gaussian => {
            let mut taps: Vec<f64> = (-GAUSSIAN_RADIUS..=GAUSSIAN_RADIUS)
                .map(|k| (-((k * k) as f64) / (2.0 * GAUSSIAN_SIGMA * GAUSSIAN_SIGMA)).exp())
                .collect();
            let sum: f64 = taps.iter().sum();
            for t in taps.iter_mut() {
                *t /= sum;
            }
            taps
        }
        Kernel::Burt5 => {
            let a = 0.4;
            vec![0.25 - a / 2.0, 0.25, a, 0.25, 0.25 - a / 2.0]
        }
    }
}

/// Periodic correlation of every row and then every column with a
/// symmetric tap vector (odd length, centered).
pub fn separable_filter(grid: Grid, image: &[f64], taps: &[f64]) -> Vec<f64> {
    assert_eq!(image.len(), grid.n(), "separable_filter: image length");
    assert_eq!(taps.len() % 2, 1, "separable_filter: taps must be centered");
    let (w, h) = (grid.width(), grid.height());
    let radius = (taps.len() / 2) as i64;
    let mut rows = vec![0.0; grid.n()];
    for r in 0..h {
        let base = r * w;
        for c in 0..w {
            let mut acc = 0.0;
            for (j, t) in taps.iter().enumerate() {
                let cc = (c as i64 + j as i64 - radius).rem_euclid(w as i64) as usize;
                acc += t * image[base + cc];
            }
            rows[base + c] = acc;
        }
    }
    let mut out = vec![0.0; grid.n()];
    for c in 0..w {
        for r in 0..h {
            let mut acc = 0.0;
            for (j, t) in taps.iter().enumerate() {
                let rr = (r as i64 + j as i64 - radius).rem_euclid(h as i64) as usize;
                acc += t * rows[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

/// Blur-and-subsample observation map from an HR grid to the LR grid of
/// half the side lengths.
#[derive(Clone, Debug)]
pub struct ObservationOp {
    hr: Grid,
    lr: Grid,
    taps: Vec<f64>,
}

impl ObservationOp {
    pub fn new(hr: Grid, kernel: Kernel) -> Result<Self> {
        let lr = hr.coarsen()?;
        Ok(ObservationOp {
            hr,
            lr,
            taps: kernel_taps(kernel),
        })
    }

    pub fn hr_grid(&self) -> Grid {
        self.hr
    }

    pub fn lr_grid(&self) -> Grid {
        self.lr
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Low-pass filter then keep every second row and column, starting
    /// at index 0.
    pub fn observe(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.hr.n(), "observe: frame length");
        let filtered = separable_filter(self.hr, x, &self.taps);
        let (w, lw, lh) = (self.hr.width(), self.lr.width(), self.lr.height());
        let mut out = vec![0.0; self.lr.n()];
        for r in 0..lh {
            for c in 0..lw {
                out[r * lw + c] = filtered[(2 * r) * w + 2 * c];
            }
        }
        out
    }

    /// Adjoint: upsample by inserting zeros, then the same filter.
    pub fn adjoint(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.lr.n(), "observe adjoint: frame length");
        let (w, lw, lh) = (self.hr.width(), self.lr.width(), self.lr.height());
        let mut up = vec![0.0; self.hr.n()];
        for rr in 0..lh {
            for cc in 0..lw {
                up[(2 * rr) * w + 2 * cc] = r[rr * lw + cc];
            }
        }
        separable_filter(self.hr, &up, &self.taps)
    }

    /// Test hook: nudge one tap so oracle comparisons fail. Used by the
    /// self-check battery's negative control only.
    #[doc(hidden)]
    pub fn perturb_tap(&mut self, amount: f64) {
        self.taps[0] += amount;
    }
}
