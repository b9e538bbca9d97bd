//! Lanczos upscaling (a = 3), used to initialize the high-resolution
//! frames from the observations.

use crate::grid::Grid;

fn lanczos3(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    if x.abs() >= 3.0 {
        return 0.0;
    }
    let px = std::f64::consts::PI * x;
    3.0 * px.sin() * (px / 3.0).sin() / (px * px)
}

/// The six taps for the half-sample phase, renormalized to sum to 1.
fn half_phase_taps() -> [f64; 6] {
    let mut taps = [0.0; 6];
    let mut sum = 0.0;
    for (j, t) in taps.iter_mut().enumerate() {
        // Source offsets -2.5, -1.5, ..., +2.5 around the half sample.
        *t = lanczos3(j as f64 - 2.5);
        sum += *t;
    }
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

fn upscale_line(src: &[f64], dst: &mut [f64], taps: &[f64; 6]) {
    let n = src.len();
    for (k, v) in src.iter().enumerate() {
        dst[2 * k] = *v;
    }
    for k in 0..n {
        // Output 2k+1 sits at source coordinate k + 0.5; taps cover
        // source samples k-2 .. k+3, periodic wrap.
        let mut acc = 0.0;
        for (j, t) in taps.iter().enumerate() {
            let idx = (k as i64 + j as i64 - 2).rem_euclid(n as i64) as usize;
            acc += t * src[idx];
        }
        dst[2 * k + 1] = acc;
    }
}

/// Upscale a frame by 2 in each dimension, separable periodic Lanczos.
/// Even output samples coincide with the input samples.
pub fn upscale2(lr: Grid, frame: &[f64]) -> Vec<f64> {
    assert_eq!(frame.len(), lr.n(), "upscale2: frame length");
    let taps = half_phase_taps();
    let (lw, lh) = (lr.width(), lr.height());
    let (hw, hh) = (2 * lw, 2 * lh);
    let mut rows = vec![0.0; hw * lh];
    let mut line = vec![0.0; hw];
    for r in 0..lh {
        upscale_line(&frame[r * lw..(r + 1) * lw], &mut line, &taps);
        rows[r * hw..(r + 1) * hw].copy_from_slice(&line);
    }
    let mut out = vec![0.0; hw * hh];
    let mut col_src = vec![0.0; lh];
    let mut col_dst = vec![0.0; hh];
    for c in 0..hw {
        for r in 0..lh {
            col_src[r] = rows[r * hw + c];
        }
        upscale_line(&col_src, &mut col_dst, &taps);
        for r in 0..hh {
            out[r * hw + c] = col_dst[r];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_basics() {
        assert_eq!(lanczos3(0.0), 1.0);
        assert!(lanczos3(1.0).abs() < 1e-12);
        assert!(lanczos3(2.0).abs() < 1e-12);
        assert_eq!(lanczos3(3.0), 0.0);
        let taps = half_phase_taps();
        assert!((taps.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_frames_stay_constant() {
        let lr = Grid::new(4, 4).unwrap();
        let up = upscale2(lr, &vec![7.0; 16]);
        assert_eq!(up.len(), 64);
        for v in up {
            assert!((v - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn even_samples_copy_the_input() {
        let lr = Grid::new(4, 4).unwrap();
        let src: Vec<f64> = (0..16).map(|i| (i * i) as f64).collect();
        let up = upscale2(lr, &src);
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(up[(2 * r) * 8 + 2 * c], src[r * 4 + c]);
            }
        }
    }
}
