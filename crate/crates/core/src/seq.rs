//! Sequence containers: images, motion fields, model residuals, and
//! dictionary coefficients.
//!
//! A problem over `T + 1` frames `x_0 .. x_T` carries `T` motion fields
//! `d_1 .. d_T` and `T` residuals `eps_1 .. eps_T`; field `t` relates
//! frame `t` to frame `t - 1`. Accessors below take the 1-based stage
//! index `t` so call sites read like the recursions they implement.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::operators::DictId;
use crate::vec_ops::all_finite;

/// High-resolution image sequence `x_0 .. x_T` on a shared grid.
#[derive(Clone, Debug)]
pub struct ImageSeq {
    grid: Grid,
    frames: Vec<Vec<f64>>,
}

impl ImageSeq {
    pub fn new(grid: Grid, frames: Vec<Vec<f64>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::DimensionMismatch(
                "image sequence needs at least one frame".into(),
            ));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != grid.n() {
                return Err(Error::DimensionMismatch(format!(
                    "frame {t}: {} values on grid {grid}",
                    f.len()
                )));
            }
            if !all_finite(f) {
                return Err(Error::NonFinite(format!("frame {t}")));
            }
        }
        Ok(ImageSeq { grid, frames })
    }

    pub fn zeros(grid: Grid, t_max: usize) -> Self {
        ImageSeq {
            grid,
            frames: vec![vec![0.0; grid.n()]; t_max + 1],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// `T`: the last frame index.
    pub fn t_max(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Vec<f64>> {
        self.frames
    }
}

/// Displacement fields `d_1 .. d_T`. Each field holds `2n` values:
/// entries `0 .. n` displace along columns (horizontal), entries
/// `n .. 2n` along rows (vertical), both in pixels.
#[derive(Clone, Debug)]
pub struct MotionSeq {
    grid: Grid,
    fields: Vec<Vec<f64>>,
}

impl MotionSeq {
    pub fn new(grid: Grid, fields: Vec<Vec<f64>>) -> Result<Self> {
        for (i, d) in fields.iter().enumerate() {
            if d.len() != 2 * grid.n() {
                return Err(Error::DimensionMismatch(format!(
                    "motion field t={}: {} values, expected {}",
                    i + 1,
                    d.len(),
                    2 * grid.n()
                )));
            }
            if !all_finite(d) {
                return Err(Error::NonFinite(format!("motion field t={}", i + 1)));
            }
        }
        Ok(MotionSeq { grid, fields })
    }

    pub fn zeros(grid: Grid, t_max: usize) -> Self {
        MotionSeq {
            grid,
            fields: vec![vec![0.0; 2 * grid.n()]; t_max],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// Number of fields `T`.
    pub fn t_max(&self) -> usize {
        self.fields.len()
    }

    /// Field `d_t`, `t` in `1..=T`.
    pub fn field(&self, t: usize) -> &[f64] {
        &self.fields[t - 1]
    }

    pub fn field_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.fields[t - 1]
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn fields_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.fields
    }
}

/// Sequential-model residuals `eps_1 .. eps_T`, one `n`-vector each.
#[derive(Clone, Debug)]
pub struct NoiseSeq {
    grid: Grid,
    residuals: Vec<Vec<f64>>,
}

impl NoiseSeq {
    pub fn new(grid: Grid, residuals: Vec<Vec<f64>>) -> Result<Self> {
        for (i, e) in residuals.iter().enumerate() {
            if e.len() != grid.n() {
                return Err(Error::DimensionMismatch(format!(
                    "residual t={}: {} values on grid {grid}",
                    i + 1,
                    e.len()
                )));
            }
        }
        Ok(NoiseSeq { grid, residuals })
    }

    pub fn zeros(grid: Grid, t_max: usize) -> Self {
        NoiseSeq {
            grid,
            residuals: vec![vec![0.0; grid.n()]; t_max],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn t_max(&self) -> usize {
        self.residuals.len()
    }

    /// Residual `eps_t`, `t` in `1..=T`.
    pub fn residual(&self, t: usize) -> &[f64] {
        &self.residuals[t - 1]
    }

    pub fn residual_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.residuals[t - 1]
    }

    pub fn residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    pub fn residuals_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.residuals
    }
}

/// Coefficients of the final frame in the synthesis dictionary, tagged
/// with the dictionary they belong to.
#[derive(Clone, Debug)]
pub struct CoefVec {
    dict: DictId,
    coeffs: Vec<f64>,
}

impl CoefVec {
    pub fn new(dict: DictId, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != dict.len() {
            return Err(Error::DimensionMismatch(format!(
                "coefficient vector: {} values for dictionary of size {}",
                coeffs.len(),
                dict.len()
            )));
        }
        Ok(CoefVec { dict, coeffs })
    }

    pub fn zeros(dict: DictId) -> Self {
        let q = dict.len();
        CoefVec {
            dict,
            coeffs: vec![0.0; q],
        }
    }

    pub fn dict(&self) -> &DictId {
        &self.dict
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_seq_validates_shapes() {
        let g = Grid::new(4, 4).unwrap();
        assert!(ImageSeq::new(g, vec![vec![0.0; 16], vec![0.0; 15]]).is_err());
        assert!(ImageSeq::new(g, vec![vec![f64::NAN; 16]]).is_err());
        let s = ImageSeq::new(g, vec![vec![1.0; 16]; 3]).unwrap();
        assert_eq!(s.t_max(), 2);
    }

    #[test]
    fn motion_seq_one_based_accessors() {
        let g = Grid::new(4, 4).unwrap();
        let mut m = MotionSeq::zeros(g, 2);
        m.field_mut(1)[0] = 7.0;
        assert_eq!(m.field(1)[0], 7.0);
        assert_eq!(m.field(2)[0], 0.0);
        assert_eq!(m.t_max(), 2);
        assert!(MotionSeq::new(g, vec![vec![f64::INFINITY; 32]]).is_err());
    }
}
