//! Figures of merit for reconstructed sequences and motion fields.

use crate::error::{Error, Result};
use crate::seq::MotionSeq;
use crate::vec_ops::{norm, sub, NormKind};

/// Peak signal-to-noise ratio in dB:
/// `20 log10(n * max|x_true| / |x_true - x_hat|_2)`.
///
/// The numerator carries a factor `n` (the pixel count); set
/// `standard = true` for the conventional `sqrt(n)` scaling instead.
/// Identical inputs return positive infinity.
pub fn psnr(x_true: &[f64], x_hat: &[f64], standard: bool) -> f64 {
    assert_eq!(x_true.len(), x_hat.len(), "psnr: length mismatch");
    let err = norm(&sub(x_true, x_hat), NormKind::L2);
    if err == 0.0 {
        return f64::INFINITY;
    }
    let n = x_true.len() as f64;
    let scale = if standard { n.sqrt() } else { n };
    20.0 * (scale * norm(x_true, NormKind::LInf) / err).log10()
}

/// Centered correlation coefficient in `[-1, 1]`. Constant inputs have
/// no direction and return NaN.
pub fn cc(x_true: &[f64], x_hat: &[f64]) -> f64 {
    assert_eq!(x_true.len(), x_hat.len(), "cc: length mismatch");
    let n = x_true.len() as f64;
    let mu_t: f64 = x_true.iter().sum::<f64>() / n;
    let mu_h: f64 = x_hat.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den_t = 0.0;
    let mut den_h = 0.0;
    for (a, b) in x_true.iter().zip(x_hat) {
        let (da, db) = (a - mu_t, b - mu_h);
        num += da * db;
        den_t += da * da;
        den_h += db * db;
    }
    if den_t == 0.0 || den_h == 0.0 {
        return f64::NAN;
    }
    num / (den_t.sqrt() * den_h.sqrt())
}

/// Time-averaged mean endpoint error in pixels:
/// `sum_t |d_true_t - d_hat_t|_1 / (n T)`.
pub fn mepe(d_true: &MotionSeq, d_hat: &MotionSeq) -> Result<f64> {
    if d_true.grid() != d_hat.grid() || d_true.t_max() != d_hat.t_max() {
        return Err(Error::DimensionMismatch(
            "motion sequences differ in shape".into(),
        ));
    }
    let t_max = d_true.t_max();
    if t_max == 0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for t in 1..=t_max {
        acc += norm(&sub(d_true.field(t), d_hat.field(t)), NormKind::L1);
    }
    Ok(acc / (d_true.grid().n() * t_max) as f64)
}

/// Time-averaged mean angular error in degrees, treating each flow
/// vector as the spatial part of a unit-time space-time direction. The
/// cosine is clamped before the arccos to guard round-off.
pub fn mbae(d_true: &MotionSeq, d_hat: &MotionSeq) -> Result<f64> {
    if d_true.grid() != d_hat.grid() || d_true.t_max() != d_hat.t_max() {
        return Err(Error::DimensionMismatch(
            "motion sequences differ in shape".into(),
        ));
    }
    let t_max = d_true.t_max();
    let n = d_true.grid().n();
    if t_max == 0 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for t in 1..=t_max {
        let dt = d_true.field(t);
        let dh = d_hat.field(t);
        for s in 0..n {
            let (u_t, v_t) = (dt[s], dt[s + n]);
            let (u_h, v_h) = (dh[s], dh[s + n]);
            let cos = (1.0 + u_t * u_h + v_t * v_h)
                / ((1.0 + u_h * u_h + v_h * v_h) * (1.0 + u_t * u_t + v_t * v_t)).sqrt();
            acc += cos.clamp(-1.0, 1.0).acos();
        }
    }
    Ok(acc / (n * t_max) as f64 * 180.0 / std::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_worked_example() {
        // n = 4, peak 10, error norm 2: 20 log10(4 * 10 / 2).
        let truth = [10.0, 10.0, 10.0, 10.0];
        let est = [10.0, 10.0, 10.0, 8.0];
        let got = psnr(&truth, &est, false);
        let want = 20.0 * (4.0 * 10.0 / 2.0f64).log10();
        assert!((got - want).abs() < 1e-12);
        assert!((want - 26.020599913279625).abs() < 1e-9);
        // Standard variant swaps n for sqrt(n).
        let std = psnr(&truth, &est, true);
        assert!((std - 20.0 * (2.0 * 10.0 / 2.0f64).log10()).abs() < 1e-12);
    }

    #[test]
    fn psnr_sentinel_and_log_law() {
        let x = [1.0, 2.0, 3.0];
        assert!(psnr(&x, &x, false).is_infinite());
        let e1: Vec<f64> = x.iter().map(|v| v + 0.01).collect();
        let e10: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        let diff = psnr(&x, &e1, false) - psnr(&x, &e10, false);
        assert!((diff - 20.0).abs() < 1e-9, "10x error = -20 dB, got {diff}");
    }

    #[test]
    fn cc_affine_invariance_and_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..50).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let aff: Vec<f64> = x.iter().map(|v| 3.0 * v + 7.0).collect();
        assert!((cc(&x, &aff) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((cc(&x, &neg) + 1.0).abs() < 1e-12);
        assert!(cc(&x, &vec![2.0; 50]).is_nan());
    }

    #[test]
    fn cc_matches_naive_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-9.0..9.0)).collect();
        let y: Vec<f64> = (0..64).map(|_| rng.gen_range(-9.0..9.0)).collect();
        let mx = x.iter().sum::<f64>() / 64.0;
        let my = y.iter().sum::<f64>() / 64.0;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for i in 0..64 {
            num += (x[i] - mx) * (y[i] - my);
            dx += (x[i] - mx) * (x[i] - mx);
            dy += (y[i] - my) * (y[i] - my);
        }
        let want = num / (dx.sqrt() * dy.sqrt());
        assert!((cc(&x, &y) - want).abs() <= 1e-12);
        assert!(want.abs() <= 1.0);
    }

    #[test]
    fn mepe_worked_examples_and_oracle() {
        let g = Grid::new(4, 4).unwrap();
        let d0 = MotionSeq::zeros(g, 2);
        assert_eq!(mepe(&d0, &d0).unwrap(), 0.0);

        // +1 on one component everywhere: l1 sum is nT, average is 1.
        let mut d1 = MotionSeq::zeros(g, 2);
        for t in 1..=2 {
            for v in d1.field_mut(t).iter_mut().take(16) {
                *v = 1.0;
            }
        }
        assert!((mepe(&d0, &d1).unwrap() - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut da = MotionSeq::zeros(g, 2);
        let mut db = MotionSeq::zeros(g, 2);
        let mut want = 0.0;
        for t in 1..=2 {
            for i in 0..32 {
                da.field_mut(t)[i] = rng.gen_range(-2.0..2.0);
                db.field_mut(t)[i] = rng.gen_range(-2.0..2.0);
                want += (da.field(t)[i] - db.field(t)[i]).abs();
            }
        }
        want /= 32.0;
        assert!((mepe(&da, &db).unwrap() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn mbae_worked_examples_and_range() {
        let g = Grid::new(4, 4).unwrap();
        let d0 = MotionSeq::zeros(g, 1);
        assert_eq!(mbae(&d0, &d0).unwrap(), 0.0);

        // One pixel with (1, 0) against zero truth: the angle is
        // arccos(1/sqrt(2)) = 45 degrees at that pixel.
        let mut d1 = MotionSeq::zeros(g, 1);
        d1.field_mut(1)[0] = 1.0;
        let want = 45.0 / 16.0;
        assert!((mbae(&d0, &d1).unwrap() - want).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut da = MotionSeq::zeros(g, 1);
        let mut db = MotionSeq::zeros(g, 1);
        for i in 0..32 {
            da.field_mut(1)[i] = rng.gen_range(-3.0..3.0);
            db.field_mut(1)[i] = rng.gen_range(-3.0..3.0);
        }
        let got = mbae(&da, &db).unwrap();
        assert!((0.0..=180.0).contains(&got));
        // Naive per-pixel loop oracle.
        let mut acc = 0.0;
        for s in 0..16 {
            let (ut, vt) = (da.field(1)[s], da.field(1)[s + 16]);
            let (uh, vh) = (db.field(1)[s], db.field(1)[s + 16]);
            let cos = (1.0 + ut * uh + vt * vh)
                / ((1.0 + uh * uh + vh * vh) * (1.0 + ut * ut + vt * vt)).sqrt();
            acc += cos.clamp(-1.0, 1.0).acos().to_degrees();
        }
        assert!((got - acc / 16.0).abs() <= 1e-10);
    }
}
