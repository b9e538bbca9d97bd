//! Middlebury `.flo` optical-flow files: the magic float 202021.25,
//! little-endian int32 width and height, then row-major interleaved
//! `(u, v)` float32 pairs per pixel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

pub const FLO_MAGIC: f32 = 202021.25;

/// Write one displacement field (length `2n`, horizontal component
/// first) as a `.flo` file.
pub fn write_flo(path: &Path, grid: Grid, field: &[f64]) -> Result<()> {
    let n = grid.n();
    if field.len() != 2 * n {
        return Err(Error::DimensionMismatch(format!(
            "flow field has {} values for grid {grid}",
            field.len()
        )));
    }
    let mut out = Vec::with_capacity(12 + 8 * n);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(grid.width() as i32).to_le_bytes());
    out.extend_from_slice(&(grid.height() as i32).to_le_bytes());
    for s in 0..n {
        out.extend_from_slice(&(field[s] as f32).to_le_bytes());
        out.extend_from_slice(&(field[n + s] as f32).to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Read a `.flo` file; returns `(width, height, field)` with the field
/// in the crate's component-major layout.
pub fn read_flo(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let data = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if data.len() < 12 {
        return Err(Error::Format("flo file shorter than its header".into()));
    }
    let magic = f32::from_le_bytes([data[0], data[1], data[2], data[3]]);
    if magic != FLO_MAGIC {
        return Err(Error::Format(format!(
            "bad flo magic {magic}, expected {FLO_MAGIC}"
        )));
    }
    let width = i32::from_le_bytes([data[4], data[5], data[6], data[7]]);
    let height = i32::from_le_bytes([data[8], data[9], data[10], data[11]]);
    if width <= 0 || height <= 0 {
        return Err(Error::Format(format!("bad flo dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    if data.len() < 12 + 8 * n {
        return Err(Error::Format(format!(
            "flo raster too short: {} bytes for {width}x{height}",
            data.len() - 12
        )));
    }
    let mut field = vec![0.0; 2 * n];
    for s in 0..n {
        let at = 12 + 8 * s;
        field[s] = f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]) as f64;
        field[n + s] =
            f32::from_le_bytes([data[at + 4], data[at + 5], data[at + 6], data[at + 7]]) as f64;
    }
    Ok((width, height, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(5, 4).unwrap();
        let field: Vec<f64> = (0..40).map(|i| (i as f64 - 20.0) * 0.25).collect();
        let path = dir.path().join("t.flo");
        write_flo(&path, grid, &field).unwrap();
        let (w, h, back) = read_flo(&path).unwrap();
        assert_eq!((w, h), (5, 4));
        for (a, b) in back.iter().zip(&field) {
            assert_eq!(*a, *b, "quarter-pixel values are exact in f32");
        }
    }

    #[test]
    fn layout_is_interleaved_uv_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid::new(4, 4).unwrap();
        let mut field = vec![0.0; 32];
        field[1] = 3.5; // u at pixel 1
        field[16 + 2] = -2.0; // v at pixel 2
        let path = dir.path().join("l.flo");
        write_flo(&path, grid, &field).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let f32_at = |i: usize| {
            f32::from_le_bytes([bytes[12 + 4 * i], bytes[13 + 4 * i], bytes[14 + 4 * i], bytes[15 + 4 * i]])
        };
        assert_eq!(f32_at(0), 0.0); // u0
        assert_eq!(f32_at(2), 3.5); // u1
        assert_eq!(f32_at(5), -2.0); // v2
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.flo");
        std::fs::write(&path, 123.0f32.to_le_bytes()).unwrap();
        assert!(matches!(read_flo(&path), Err(Error::Format(_))));
    }
}
