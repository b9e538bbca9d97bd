//! Binary PGM/PPM reading and writing, 8- and 16-bit. Intensities stay
//! floating point in memory; quantization happens only here.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A decoded netpbm image: one channel for PGM, three for PPM. Values
/// keep the file's scale (`0..=maxval`).
#[derive(Clone, Debug)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub channels: Vec<Vec<f64>>,
}

impl PnmImage {
    /// Luminance view: the single channel of a PGM, or the Rec.601 luma
    /// of a PPM.
    pub fn luminance(&self) -> Vec<f64> {
        match self.channels.len() {
            1 => self.channels[0].clone(),
            3 => {
                let (r, g, b) = (&self.channels[0], &self.channels[1], &self.channels[2]);
                (0..r.len())
                    .map(|i| 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i])
                    .collect()
            }
            _ => unreachable!("netpbm has 1 or 3 channels"),
        }
    }
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated netpbm header".into()));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .map_err(|_| Error::Format("non-ascii netpbm header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        self.token()?
            .parse()
            .map_err(|_| Error::Format("bad number in netpbm header".into()))
    }
}

/// Read a binary PGM (P5) or PPM (P6) file.
pub fn read_pnm(path: &Path) -> Result<PnmImage> {
    let data = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut header = HeaderReader { data: &data, pos: 0 };
    let magic = header.token()?;
    let n_channels = match magic {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::Format(format!(
                "unsupported netpbm magic {other:?} (binary P5/P6 only)"
            )))
        }
    };
    let width = header.number()?;
    let height = header.number()?;
    let maxval = header.number()?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Format(format!("maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let raster = &data[header.pos + 1..];
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * n_channels * bytes_per;
    if raster.len() < expected {
        return Err(Error::Format(format!(
            "raster too short: {} bytes, expected {expected}",
            raster.len()
        )));
    }
    let mut channels = vec![Vec::with_capacity(width * height); n_channels];
    let mut at = 0;
    for _ in 0..width * height {
        for channel in channels.iter_mut() {
            let v = if bytes_per == 2 {
                // 16-bit samples are big-endian per the format.
                u16::from_be_bytes([raster[at], raster[at + 1]]) as f64
            } else {
                raster[at] as f64
            };
            channel.push(v);
            at += bytes_per;
        }
    }
    Ok(PnmImage {
        width,
        height,
        maxval: maxval as u32,
        channels,
    })
}

fn quantize(v: f64, maxval: u32) -> u32 {
    (v.round().max(0.0) as u32).min(maxval)
}

fn write_raster(
    path: &Path,
    magic: &str,
    width: usize,
    height: usize,
    channels: &[&[f64]],
    bits: u8,
) -> Result<()> {
    let maxval: u32 = match bits {
        8 => 255,
        16 => 65535,
        _ => return Err(Error::Format(format!("unsupported bit depth {bits}"))),
    };
    for ch in channels {
        if ch.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "channel has {} values for {width}x{height}",
                ch.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(32 + width * height * channels.len() * 2);
    write!(out, "{magic}\n{width} {height}\n{maxval}\n")
        .expect("writing to a Vec cannot fail");
    for i in 0..width * height {
        for ch in channels {
            let q = quantize(ch[i], maxval);
            if bits == 16 {
                out.extend_from_slice(&(q as u16).to_be_bytes());
            } else {
                out.push(q as u8);
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Write a single-channel binary PGM.
pub fn write_pgm(path: &Path, width: usize, height: usize, data: &[f64], bits: u8) -> Result<()> {
    write_raster(path, "P5", width, height, &[data], bits)
}

/// Write a three-channel binary PPM.
pub fn write_ppm(
    path: &Path,
    width: usize,
    height: usize,
    rgb: [&[f64]; 3],
    bits: u8,
) -> Result<()> {
    write_raster(path, "P6", width, height, &rgb, bits)
}
