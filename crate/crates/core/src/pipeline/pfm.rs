//! Grayscale PFM (portable float map) output for residual images.
//! Little-endian float32, rows stored bottom-to-top per the format.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f64]) -> Result<()> {
    if data.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "pfm data has {} values for {width}x{height}",
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(32 + 4 * data.len());
    // Scale -1.0 marks little-endian.
    write!(out, "Pf\n{width} {height}\n-1.0\n").expect("writing to a Vec cannot fail");
    for row in (0..height).rev() {
        for col in 0..width {
            out.extend_from_slice(&(data[row * width + col] as f32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let data = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let header_end = data
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| Error::Format("truncated pfm header".into()))?;
    let header = std::str::from_utf8(&data[..header_end])
        .map_err(|_| Error::Format("non-ascii pfm header".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("Pf") {
        return Err(Error::Format("grayscale Pf files only".into()));
    }
    let dims: Vec<usize> = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    if dims.len() != 2 {
        return Err(Error::Format("bad pfm dimensions".into()));
    }
    let scale: f64 = lines
        .next()
        .unwrap_or("")
        .trim()
        .parse()
        .map_err(|_| Error::Format("bad pfm scale".into()))?;
    if scale >= 0.0 {
        return Err(Error::Format("big-endian pfm not supported".into()));
    }
    let (width, height) = (dims[0], dims[1]);
    let raster = &data[header_end + 1..];
    if raster.len() < 4 * width * height {
        return Err(Error::Format("pfm raster too short".into()));
    }
    let mut out = vec![0.0; width * height];
    let mut at = 0;
    for row in (0..height).rev() {
        for col in 0..width {
            out[row * width + col] = f32::from_le_bytes([
                raster[at],
                raster[at + 1],
                raster[at + 2],
                raster[at + 3],
            ]) as f64;
            at += 4;
        }
    }
    Ok((width, height, out))
}
