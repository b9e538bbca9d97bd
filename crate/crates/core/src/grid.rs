//! Pixel raster geometry shared by all images and motion fields.
//!
//! Pixels are stored row-major: pixel `s` sits at row `s / width`,
//! column `s % width`. Every operator in the crate relies on this one
//! layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `width x height` pixel raster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    width: usize,
    height: usize,
}

impl Grid {
    /// Smallest supported side length; cubic-spline interpolation needs a
    /// 4-sample support in each direction.
    pub const MIN_DIM: usize = 4;

    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < Self::MIN_DIM || height < Self::MIN_DIM {
            return Err(Error::InvalidGrid(format!(
                "{width}x{height}: both sides must be >= {}",
                Self::MIN_DIM
            )));
        }
        Ok(Grid { width, height })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn n(&self) -> usize {
        self.width * self.height
    }

    /// Spatial position `(row, col)` of pixel index `s`.
    #[inline]
    pub fn pos(&self, s: usize) -> (usize, usize) {
        debug_assert!(s < self.n());
        (s / self.width, s % self.width)
    }

    /// Pixel index of `(row, col)`.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.height && col < self.width);
        row * self.width + col
    }

    /// Grid of half the side lengths. Errors on odd dimensions.
    ///
    /// Coarse grids hold plain samples, never splines, so the minimum
    /// side length of [`Grid::new`] does not apply to the result.
    pub fn coarsen(&self) -> Result<Grid> {
        if self.width % 2 != 0 || self.height % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "{}x{}: downsampling by 2 needs even dimensions",
                self.width, self.height
            )));
        }
        Ok(Grid {
            width: self.width / 2,
            height: self.height / 2,
        })
    }

    /// Grid of twice the side lengths.
    pub fn refine(&self) -> Grid {
        Grid {
            width: self.width * 2,
            height: self.height * 2,
        }
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}
