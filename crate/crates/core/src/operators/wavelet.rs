//! Orthogonal multilevel 2-D wavelet transforms with periodic wrap.
//!
//! One operator serves three roles: synthesis is the sparsity dictionary
//! for the final frame, analysis its transpose, and a Haar instance
//! provides the basis for the change penalty between outer iterates.
//! The transform is orthonormal, so analysis and synthesis are exact
//! inverses and exact adjoints of each other.

use serde::{Deserialize, Serialize};

use crate::config::WaveletFamily;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Identifies the dictionary a coefficient vector belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictId {
    pub family: WaveletFamily,
    pub levels: u32,
    pub width: usize,
    pub height: usize,
}

impl DictId {
    /// Number of coefficients; the basis is non-redundant, so this is
    /// the pixel count.
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn filters(family: WaveletFamily) -> (Vec<f64>, Vec<f64>) {
    match family {
        WaveletFamily::Haar => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            (vec![s, s], vec![s, -s])
        }
        WaveletFamily::Db4 => {
            let r3 = 3.0f64.sqrt();
            let norm = 4.0 * std::f64::consts::SQRT_2;
            let lo = vec![
                (1.0 + r3) / norm,
                (3.0 + r3) / norm,
                (3.0 - r3) / norm,
                (1.0 - r3) / norm,
            ];
            let hi: Vec<f64> = lo
                .iter()
                .rev()
                .enumerate()
                .map(|(k, v)| if k % 2 == 0 { *v } else { -*v })
                .collect();
            (lo, hi)
        }
    }
}

#[derive(Clone, Debug)]
pub struct WaveletOp {
    grid: Grid,
    family: WaveletFamily,
    levels: u32,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl WaveletOp {
    pub fn new(grid: Grid, family: WaveletFamily, levels: u32) -> Result<Self> {
        let div = 1usize << levels;
        if grid.width() % div != 0 || grid.height() % div != 0 {
            return Err(Error::DimensionMismatch(format!(
                "grid {grid} not divisible by 2^{levels}"
            )));
        }
        let (lo, hi) = filters(family);
        Ok(WaveletOp {
            grid,
            family,
            levels,
            lo,
            hi,
        })
    }

    /// Default decomposition depth: at most 3 and keeps the coarse band
    /// at least 4 samples wide, further capped by dyadic divisibility of
    /// the grid.
    pub fn default_levels(grid: Grid) -> u32 {
        let min_dim = grid.width().min(grid.height());
        let mut l = (min_dim.ilog2().saturating_sub(2)).min(3);
        while l > 0 && (grid.width() % (1 << l) != 0 || grid.height() % (1 << l) != 0) {
            l -= 1;
        }
        l
    }

    pub fn with_default_levels(grid: Grid, family: WaveletFamily) -> Self {
        Self::new(grid, family, Self::default_levels(grid)).expect("default depth always divides")
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn id(&self) -> DictId {
        DictId {
            family: self.family,
            levels: self.levels,
            width: self.grid.width(),
            height: self.grid.height(),
        }
    }

    fn split_1d(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let half = n / 2;
        for k in 0..half {
            let mut a = 0.0;
            let mut d = 0.0;
            for (j, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = x[(2 * k + j) % n];
                a += l * v;
                d += h * v;
            }
            out[k] = a;
            out[half + k] = d;
        }
    }

    fn merge_1d(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let half = n / 2;
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for k in 0..half {
            let (a, d) = (x[k], x[half + k]);
            for (j, (l, h)) in self.lo.iter().zip(&self.hi).enumerate() {
                out[(2 * k + j) % n] += l * a + h * d;
            }
        }
    }

    /// Multilevel analysis; coefficient layout keeps the approximation
    /// band in the top-left corner at every level.
    pub fn analysis(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.grid.n(), "wavelet analysis: frame length");
        let w = self.grid.width();
        let mut c = x.to_vec();
        let mut line = Vec::new();
        let mut out_line = Vec::new();
        for level in 0..self.levels {
            let cw = w >> level;
            let ch = self.grid.height() >> level;
            out_line.resize(cw.max(ch), 0.0);
            for r in 0..ch {
                line.clear();
                line.extend_from_slice(&c[r * w..r * w + cw]);
                self.split_1d(&line, &mut out_line[..cw]);
                c[r * w..r * w + cw].copy_from_slice(&out_line[..cw]);
            }
            for col in 0..cw {
                line.clear();
                line.extend((0..ch).map(|r| c[r * w + col]));
                self.split_1d(&line, &mut out_line[..ch]);
                for r in 0..ch {
                    c[r * w + col] = out_line[r];
                }
            }
        }
        c
    }

    /// Inverse (and transpose) of [`Self::analysis`].
    pub fn synthesis(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(
            coeffs.len(),
            self.grid.n(),
            "wavelet synthesis: coefficient length"
        );
        let w = self.grid.width();
        let mut x = coeffs.to_vec();
        let mut line = Vec::new();
        let mut out_line = Vec::new();
        for level in (0..self.levels).rev() {
            let cw = w >> level;
            let ch = self.grid.height() >> level;
            out_line.resize(cw.max(ch), 0.0);
            for col in 0..cw {
                line.clear();
                line.extend((0..ch).map(|r| x[r * w + col]));
                self.merge_1d(&line, &mut out_line[..ch]);
                for r in 0..ch {
                    x[r * w + col] = out_line[r];
                }
            }
            for r in 0..ch {
                line.clear();
                line.extend_from_slice(&x[r * w..r * w + cw]);
                self.merge_1d(&line, &mut out_line[..cw]);
                x[r * w..r * w + cw].copy_from_slice(&out_line[..cw]);
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec_ops::{dot, norm, NormKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_of_constant_is_a_single_coefficient() {
        let g = Grid::new(8, 8).unwrap();
        let op = WaveletOp::new(g, WaveletFamily::Haar, 3).unwrap();
        let c = op.analysis(&vec![5.0; 64]);
        assert!((c[0] - 5.0 * 8.0).abs() < 1e-10);
        for (i, v) in c.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-12, "coefficient {i} should vanish, got {v}");
        }
    }

    #[test]
    fn perfect_reconstruction_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for (w, h, family, levels) in [
            (8, 8, WaveletFamily::Haar, 3),
            (8, 8, WaveletFamily::Db4, 2),
            (12, 12, WaveletFamily::Db4, 1),
            (16, 8, WaveletFamily::Haar, 2),
            (8, 8, WaveletFamily::Haar, 0),
        ] {
            let g = Grid::new(w, h).unwrap();
            let op = WaveletOp::new(g, family, levels).unwrap();
            let x: Vec<f64> = (0..g.n()).map(|_| rng.gen_range(-100.0..100.0)).collect();
            let c = op.analysis(&x);
            assert!(
                (norm(&c, NormKind::L2) - norm(&x, NormKind::L2)).abs()
                    <= 1e-10 * norm(&x, NormKind::L2),
                "isometry broke for {family:?} on {w}x{h}"
            );
            let back = op.synthesis(&c);
            for i in 0..x.len() {
                assert!(
                    (back[i] - x[i]).abs() <= 1e-10 * x[i].abs().max(1.0),
                    "reconstruction at {i} for {family:?}"
                );
            }
        }
    }

    #[test]
    fn synthesis_is_the_transpose_of_analysis() {
        let g = Grid::new(8, 8).unwrap();
        let op = WaveletOp::new(g, WaveletFamily::Db4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..4 {
            let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..64).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let lhs = dot(&op.analysis(&x), &y);
            let rhs = dot(&x, &op.synthesis(&y));
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn default_levels_keep_the_coarse_band_wide() {
        assert_eq!(WaveletOp::default_levels(Grid::new(4, 4).unwrap()), 0);
        assert_eq!(WaveletOp::default_levels(Grid::new(8, 8).unwrap()), 1);
        assert_eq!(WaveletOp::default_levels(Grid::new(16, 16).unwrap()), 2);
        assert_eq!(WaveletOp::default_levels(Grid::new(64, 64).unwrap()), 3);
        assert_eq!(WaveletOp::default_levels(Grid::new(12, 12).unwrap()), 1);
    }

    #[test]
    fn rejects_indivisible_dims() {
        assert!(WaveletOp::new(Grid::new(12, 12).unwrap(), WaveletFamily::Haar, 3).is_err());
    }
}
