//! Self-check battery: randomized adjoint identities against dense
//! column-built matrices, finite-difference gradient verification, and
//! proximal-operator optimality probes. Backs the `gradcheck` CLI
//! subcommand and the acceptance tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::adjoint::{self, AugmentedTerms, ChangeTerms, StagePenalty};
use crate::config::SolverConfig;
use crate::error::Result;
use crate::grid::Grid;
use crate::problem::SrProblem;
use crate::prox;
use crate::seq::{CoefVec, MotionSeq, NoiseSeq};
use crate::vec_ops::{dot, norm, NormKind};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, max_rel_err: f64, tol: f64) -> Self {
        CheckResult {
            name: name.into(),
            max_rel_err,
            tol,
            pass: max_rel_err.is_finite() && max_rel_err <= tol,
        }
    }

    /// One machine-parseable line: name, max relative error, verdict.
    pub fn report_line(&self) -> String {
        format!(
            "{}\t{:.3e}\t{}",
            self.name,
            self.max_rel_err,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

/// Max relative error of an operator/adjoint pair against the dense
/// matrix built column-by-column from the forward map: both the inner
/// product identity and the transposed matrix application are checked
/// on random vectors.
pub fn adjoint_against_dense(
    rows: usize,
    cols: usize,
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut apply_adjoint: impl FnMut(&[f64]) -> Vec<f64>,
    seed: u64,
    trials: usize,
) -> f64 {
    let mut dense = vec![vec![0.0; cols]; rows];
    let mut e = vec![0.0; cols];
    for j in 0..cols {
        e[j] = 1.0;
        let col = apply(&e);
        e[j] = 0.0;
        for i in 0..rows {
            dense[i][j] = col[i];
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let av = apply(&v);
        let atw = apply_adjoint(&w);
        let lhs = dot(&av, &w);
        let rhs = dot(&v, &atw);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));

        // Transpose application against the dense matrix.
        let mut dense_atw = vec![0.0; cols];
        for i in 0..rows {
            for j in 0..cols {
                dense_atw[j] += dense[i][j] * w[i];
            }
        }
        let scale = norm(&dense_atw, NormKind::LInf).max(1e-12);
        for j in 0..cols {
            worst = worst.max((atw[j] - dense_atw[j]).abs() / scale);
        }
    }
    worst
}

/// Random problem instance on `w x h` with `T = t_max`, used by the
/// gradient and solver checks.
pub fn random_instance(
    seed: u64,
    w: usize,
    h: usize,
    t_max: usize,
    cfg: SolverConfig,
) -> (SrProblem, NoiseSeq, MotionSeq, CoefVec) {
    let grid = Grid::new(w, h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = grid.n() / 4;
    let y: Vec<Vec<f64>> = (0..=t_max)
        .map(|_| (0..m).map(|_| rng.gen_range(0.0..80.0)).collect())
        .collect();
    let p = SrProblem::new(grid, y, cfg).unwrap();
    let mut eps = NoiseSeq::zeros(grid, t_max);
    let mut d = MotionSeq::zeros(grid, t_max);
    for t in 1..=t_max {
        for v in eps.residual_mut(t).iter_mut() {
            *v = rng.gen_range(-3.0..3.0);
        }
        for v in d.field_mut(t).iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mut c = CoefVec::zeros(p.dict().id());
    for v in c.coeffs_mut().iter_mut() {
        *v = rng.gen_range(-30.0..30.0);
    }
    (p, eps, d, c)
}

/// Which penalty configuration a gradient check exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradConfig {
    Quadratic,
    Augmented,
    AugmentedChange,
}

/// Compare the assembled gradient against central finite differences of
/// the matching smooth objective, sampling `samples` random coordinates
/// in each of the three blocks. Returns the worst relative error.
pub fn gradient_against_finite_differences(
    p: &SrProblem,
    eps: &NoiseSeq,
    d: &MotionSeq,
    c: &CoefVec,
    config: GradConfig,
    seed: u64,
    samples: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.grid().n();
    let t_max = p.t_max();
    let cfg = p.cfg().clone();

    // Random anchors for the augmented configurations.
    let eps_anchor: Vec<Vec<f64>> = (0..t_max)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let c_anchor: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let eps_prev: Vec<Vec<f64>> = (0..t_max)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let delta_eps_anchor: Vec<Vec<f64>> = (0..t_max)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let c_prev: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let delta_c_anchor: Vec<f64> = (0..c.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let terms = AugmentedTerms {
        rho1: cfg.rho1,
        eps_anchor: &eps_anchor,
        rho3: cfg.rho3,
        c_anchor: &c_anchor,
        change: match config {
            GradConfig::AugmentedChange => Some(ChangeTerms {
                rho: cfg.rho,
                eps_prev: &eps_prev,
                delta_eps_anchor: &delta_eps_anchor,
                c_prev: &c_prev,
                delta_c_anchor: &delta_c_anchor,
            }),
            _ => None,
        },
    };
    let penalty = match config {
        GradConfig::Quadratic => StagePenalty::Quadratic,
        _ => StagePenalty::Augmented(&terms),
    };

    let (ge, gd, gc) = adjoint::grad_full(p, eps, d, c, penalty)?;
    let block_scale = |g: &[f64]| norm(g, NormKind::LInf);
    let scales = [
        (1..=t_max)
            .map(|t| block_scale(ge.residual(t)))
            .fold(0.0, f64::max),
        (1..=t_max)
            .map(|t| block_scale(gd.field(t)))
            .fold(0.0, f64::max),
        block_scale(gc.coeffs()),
    ];

    let mut worst = 0.0f64;
    for block in 0..3 {
        for _ in 0..samples {
            let t = rng.gen_range(1..=t_max.max(1));
            let (analytic, fd) = match block {
                0 => {
                    let i = rng.gen_range(0..n);
                    let base = eps.residual(t)[i];
                    let h = 1e-4 * base.abs().max(1.0);
                    let mut em = eps.clone();
                    em.residual_mut(t)[i] = base + h;
                    let fp = adjoint::eval_smooth(p, &em, d, c, penalty)?;
                    em.residual_mut(t)[i] = base - h;
                    let fm = adjoint::eval_smooth(p, &em, d, c, penalty)?;
                    (ge.residual(t)[i], (fp - fm) / (2.0 * h))
                }
                1 => {
                    let i = rng.gen_range(0..2 * n);
                    let base = d.field(t)[i];
                    let h = 1e-4 * base.abs().max(1.0);
                    let mut dm = d.clone();
                    dm.field_mut(t)[i] = base + h;
                    let fp = adjoint::eval_smooth(p, eps, &dm, c, penalty)?;
                    dm.field_mut(t)[i] = base - h;
                    let fm = adjoint::eval_smooth(p, eps, &dm, c, penalty)?;
                    (gd.field(t)[i], (fp - fm) / (2.0 * h))
                }
                _ => {
                    let i = rng.gen_range(0..c.len());
                    let base = c.coeffs()[i];
                    let h = 1e-4 * base.abs().max(1.0);
                    let mut cm = c.clone();
                    cm.coeffs_mut()[i] = base + h;
                    let fp = adjoint::eval_smooth(p, eps, d, &cm, penalty)?;
                    cm.coeffs_mut()[i] = base - h;
                    let fm = adjoint::eval_smooth(p, eps, d, &cm, penalty)?;
                    (gc.coeffs()[i], (fp - fm) / (2.0 * h))
                }
            };
            let denom = analytic
                .abs()
                .max(fd.abs())
                .max(1e-6 * scales[block])
                .max(1e-12);
            worst = worst.max((analytic - fd).abs() / denom);
        }
    }
    Ok(worst)
}

/// Proximal optimality by coordinate perturbation: the prox output must
/// beat every +-delta single-coordinate move on its own objective.
/// Returns the worst (negative improvement) margin normalized by the
/// objective scale, so any positive value means a violation.
pub fn prox_perturbation_margin(seed: u64, instances: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;

    for _ in 0..instances {
        // Scalar / elementwise soft-thresholding.
        let lambda = rng.gen_range(0.01..3.0);
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let u = prox::prox_l1(&v, lambda);
        let obj = |z: &[f64]| {
            norm(z, NormKind::L1)
                + z.iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / (2.0 * lambda)
        };
        let base = obj(&u);
        for i in 0..u.len() {
            for delta in [1e-3, -1e-3] {
                let mut u2 = u.clone();
                u2[i] += delta;
                worst = worst.max((base - obj(&u2)) / base.abs().max(1.0));
            }
        }

        // Groupwise shrinkage.
        let w = rng.gen_range(0.0..2.0);
        let theta = rng.gen_range(0.01..3.0);
        let v4 = [
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
            rng.gen_range(-4.0..4.0),
        ];
        let g = prox::group_shrink(&v4, w, theta);
        let gobj = |z: &[f64; 4]| {
            w * norm(z, NormKind::L2)
                + z.iter()
                    .zip(&v4)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / (2.0 * theta)
        };
        let base = gobj(&g);
        for i in 0..4 {
            for delta in [1e-3, -1e-3] {
                let mut g2 = g;
                g2[i] += delta;
                worst = worst.max((base - gobj(&g2)) / base.abs().max(1.0));
            }
        }
    }
    worst
}

/// Worst expansion factor of the shrinkage operators over random pairs;
/// values above 1 violate non-expansiveness.
pub fn prox_expansion_factor(seed: u64, pairs: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let lambda = rng.gen_range(0.0..2.0);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let din = norm(&crate::vec_ops::sub(&a, &b), NormKind::L2);
        if din > 1e-9 {
            let dout = norm(
                &crate::vec_ops::sub(&prox::prox_l1(&a, lambda), &prox::prox_l1(&b, lambda)),
                NormKind::L2,
            );
            worst = worst.max(dout / din);
        }

        let w = rng.gen_range(0.0..2.0);
        let ga = prox::group_shrink(&[a[0], a[1], a[2], a[3]], w, lambda);
        let gb = prox::group_shrink(&[b[0], b[1], b[2], b[3]], w, lambda);
        let din: f64 = (0..4).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<f64>().sqrt();
        if din > 1e-9 {
            let dout: f64 = (0..4).map(|i| (ga[i] - gb[i]) * (ga[i] - gb[i])).sum::<f64>().sqrt();
            worst = worst.max(dout / din);
        }
    }
    worst
}

/// The full battery at desk scale (8x8 grid, T = 3). `inject_error`
/// deliberately perturbs the observation operator used by the dense
/// oracle so the first check fails; it exists to prove the harness
/// surfaces failures.
pub fn run_all(seed: u64, inject_error: bool) -> Result<Vec<CheckResult>> {
    let mut results = Vec::new();
    let cfg = SolverConfig {
        p: 2,
        ..Default::default()
    };
    let (p, eps, d, c) = random_instance(seed, 8, 8, 3, cfg);
    let grid = p.grid();
    let n = grid.n();

    // Observation operator, possibly perturbed as a negative control.
    let mut obs_for_oracle = p.observation().clone();
    if inject_error {
        obs_for_oracle.perturb_tap(1e-3);
    }
    results.push(CheckResult::new(
        "adjoint-observation",
        adjoint_against_dense(
            p.lr_grid().n(),
            n,
            |v| obs_for_oracle.observe(v),
            |w| p.observation().adjoint(w),
            seed ^ 1,
            5,
        ),
        1e-10,
    ));
    results.push(CheckResult::new(
        "adjoint-motion-grad",
        adjoint_against_dense(
            4 * n,
            2 * n,
            |v| p.motion_grad().analysis(v),
            |w| p.motion_grad().adjoint(w),
            seed ^ 2,
            5,
        ),
        1e-10,
    ));
    results.push(CheckResult::new(
        "adjoint-dictionary",
        adjoint_against_dense(
            n,
            n,
            |v| p.dict().analysis(v),
            |w| p.dict().synthesis(w),
            seed ^ 3,
            5,
        ),
        1e-10,
    ));
    results.push(CheckResult::new(
        "adjoint-change-basis",
        adjoint_against_dense(
            n,
            n,
            |v| p.change_basis().analysis(v),
            |w| p.change_basis().synthesis(w),
            seed ^ 4,
            5,
        ),
        1e-10,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    let mut worst_warp = 0.0f64;
    for _ in 0..5 {
        let field: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let f2 = field.clone();
        worst_warp = worst_warp.max(adjoint_against_dense(
            n,
            n,
            |v| {
                crate::bspline::warp(&crate::bspline::prefilter(grid, v).unwrap(), &field)
            },
            |w| crate::bspline::warp_adjoint_image(grid, w, &f2),
            seed ^ 6,
            3,
        ));
    }
    results.push(CheckResult::new("adjoint-warp", worst_warp, 1e-10));

    for (name, config) in [
        ("grad-quadratic", GradConfig::Quadratic),
        ("grad-augmented", GradConfig::Augmented),
        ("grad-augmented-change", GradConfig::AugmentedChange),
    ] {
        results.push(CheckResult::new(
            name,
            gradient_against_finite_differences(&p, &eps, &d, &c, config, seed ^ 7, 20)?,
            1e-5,
        ));
    }

    results.push(CheckResult::new(
        "prox-optimality",
        prox_perturbation_margin(seed ^ 8, 200).max(0.0),
        1e-12,
    ));
    results.push(CheckResult::new(
        "prox-nonexpansive",
        (prox_expansion_factor(seed ^ 9, 200) - 1.0).max(0.0),
        1e-12,
    ));

    // Spline interpolation identity.
    let img: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..255.0)).collect();
    let coeffs = crate::bspline::prefilter(grid, &img)?;
    let back = crate::bspline::warp(&coeffs, &vec![0.0; 2 * n]);
    let mut worst = 0.0f64;
    for i in 0..n {
        worst = worst.max((back[i] - img[i]).abs() / img[i].abs().max(1.0));
    }
    results.push(CheckResult::new("spline-roundtrip", worst, 1e-9));

    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn battery_passes_on_defaults() {
        let results = run_all(7, false).unwrap();
        assert!(results.len() >= 10);
        for r in &results {
            assert!(r.pass, "{} failed: {:.3e} > {:.1e}", r.name, r.max_rel_err, r.tol);
        }
    }

    #[test]
    fn injected_error_is_detected() {
        let results = run_all(7, true).unwrap();
        let obs = results
            .iter()
            .find(|r| r.name == "adjoint-observation")
            .unwrap();
        assert!(!obs.pass, "the negative control must fail");
    }

    #[test]
    fn report_lines_are_tab_separated() {
        let r = CheckResult::new("x", 1e-12, 1e-10);
        let line = r.report_line();
        let parts: Vec<&str> = line.split('\t').collect();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[2], "pass");
    }
}
