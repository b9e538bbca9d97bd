use seqsr::config::SolverConfig;
use seqsr::grid::Grid;
use seqsr::pipeline::synth;
use seqsr::seq::{CoefVec, MotionSeq, NoiseSeq};
use seqsr::vec_ops::{norm, NormKind};
use seqsr::{adjoint, admm, bspline, lanczos, outer, problem::SrProblem};

fn main() {
    let grid = Grid::new(16, 16).unwrap();
    let t_max = 2;
    let (truth, d_true) = synth::make_synthetic(
        grid, t_max, synth::MotionSpec::Translate { vx: 0.5, vy: 0.0 }, 3).unwrap();
    let mut cfg = SolverConfig::default();
    cfg.admm_iters = 4;
    cfg.lbfgs_iters = 15;
    let obs = seqsr::operators::ObservationOp::new(grid, cfg.kernel).unwrap();
    let y: Vec<Vec<f64>> = (0..=t_max).map(|t| obs.observe(truth.frame(t))).collect();
    let p = SrProblem::new(grid, y, cfg).unwrap();

    // Initialization identical to super_resolve.
    let d = MotionSeq::zeros(grid, t_max);
    let frames: Vec<Vec<f64>> = (0..=t_max).map(|t| lanczos::upscale2(p.lr_grid(), p.observed(t))).collect();
    let c = CoefVec::new(p.dict().id(), p.dict().analysis(&frames[t_max])).unwrap();
    let mut eps = NoiseSeq::zeros(grid, t_max);
    for t in 1..=t_max {
        let coeffs = bspline::prefilter(grid, &frames[t]).unwrap();
        let warped = bspline::warp(&coeffs, d.field(t));
        let e = eps.residual_mut(t);
        for i in 0..e.len() { e[i] = frames[t - 1][i] - warped[i]; }
    }
    println!("J init = {:.6e}", outer::eval_j(&p, &eps, &d, &c).unwrap());

    let (eps1, c1, tr) = admm::solve_step1(&p, &d, &eps, &c).unwrap();
    println!("step1 objective trace: {:?}", tr.objective);
    let de: f64 = (1..=t_max).map(|t| norm(&seqsr::vec_ops::sub(eps1.residual(t), eps.residual(t)), NormKind::L2)).sum();
    println!("step1 moved: |deps| = {de:.3e}, |dc| = {:.3e}",
        norm(&seqsr::vec_ops::sub(c1.coeffs(), c.coeffs()), NormKind::L2));
    println!("J after step1 = {:.6e}", outer::eval_j(&p, &eps1, &d, &c1).unwrap());

    let gb = adjoint::grad_motion_dataterm(&p, &eps1, &d, &c1).unwrap();
    for t in 1..=t_max {
        println!("grad_b t={t}: inf = {:.3e}, l2 = {:.3e}",
            norm(gb.field(t), NormKind::LInf), norm(gb.field(t), NormKind::L2));
    }
    for alpha in [200.0, 400.0, 1600.0] {
        let (d_cand, _) = admm::solve_motion(&p, &d, &gb, alpha).unwrap();
        let moved: f64 = (1..=t_max).map(|t| norm(&seqsr::vec_ops::sub(d_cand.field(t), d.field(t)), NormKind::LInf)).fold(0.0, f64::max);
        let mean1: f64 = d_cand.field(1).iter().take(grid.n()).sum::<f64>() / grid.n() as f64;
        println!("solve_motion alpha={alpha}: moved inf = {moved:.4}, mean comp1 = {mean1:.4}, J = {:.6e}",
            outer::eval_j(&p, &eps1, &d_cand, &c1).unwrap());
    }
}
