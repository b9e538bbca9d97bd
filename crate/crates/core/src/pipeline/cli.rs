//! Command-line interface: synthetic data, degradation, reconstruction,
//! scoring, and the self-check battery.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::{flo, manifest::RunManifest, pfm, pgm, synth};
use crate::config::SolverConfig;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::problem::SrProblem;
use crate::seq::MotionSeq;
use crate::{checks, kalman, metrics, outer};

#[derive(Parser, Debug)]
#[command(name = "seqsr", version, about = "Video super-resolution from low-resolution sequences")]
pub struct Cli {
    /// JSON config file; keys mirror the solver configuration fields.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for synthetic textures and observation noise.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Worker threads for per-frame work; 1 forces sequential.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Central crop (e.g. 240x240) applied before scoring.
    #[arg(long, global = true, value_name = "WxH")]
    pub crop: Option<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic ground-truth sequence with exact motion.
    Synth {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Number of frames (T + 1).
        #[arg(long, default_value_t = 9)]
        frames: usize,
        /// translate:VX,VY or rotate:OMEGA, per frame.
        #[arg(long, default_value = "translate:0.5,0")]
        motion: String,
        #[arg(long, default_value_t = 8)]
        bits: u8,
    },
    /// Blur, downsample by 2, and optionally add observation noise.
    Degrade {
        /// Input frames in temporal order (PGM or PPM).
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Standard deviation of additive Gaussian noise, in gray levels.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 8)]
        bits: u8,
    },
    /// Reconstruct the high-resolution sequence and its motion.
    Superres {
        /// Low-resolution frames in temporal order.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Initial motion fields (T .flo files on the output grid);
        /// defaults to zero motion.
        #[arg(long, num_args = 1.., value_name = "FLO")]
        init_motion: Vec<PathBuf>,
        /// Ground-truth motion; enables the motion-error column of the
        /// trace.
        #[arg(long, num_args = 1.., value_name = "FLO")]
        truth_motion: Vec<PathBuf>,
        /// Process PPM inputs as three stacked channels sharing one
        /// motion sequence instead of collapsing to luminance.
        #[arg(long)]
        rgb: bool,
        #[arg(long, default_value_t = 8)]
        bits: u8,
    },
    /// Score a reconstruction against ground truth.
    Metrics {
        #[arg(long, num_args = 1.., value_name = "FRAME")]
        truth: Vec<PathBuf>,
        #[arg(long, num_args = 1.., value_name = "FRAME")]
        estimate: Vec<PathBuf>,
        #[arg(long, num_args = 1.., value_name = "FLO")]
        truth_flow: Vec<PathBuf>,
        #[arg(long, num_args = 1.., value_name = "FLO")]
        est_flow: Vec<PathBuf>,
        /// Use the conventional sqrt(n) peak scaling instead of n.
        #[arg(long)]
        psnr_standard: bool,
        /// Also write a machine-readable TSV report.
        #[arg(long, value_name = "PATH")]
        tsv: Option<PathBuf>,
    },
    /// Run the adjoint/gradient/prox self-check battery.
    Gradcheck {
        /// Deliberately perturb one operator (negative control).
        #[arg(long, hide = true)]
        inject_error: bool,
    },
    /// Cross-validate the gradient route against the dense smoother on
    /// a tiny quadratic instance.
    KalmanCheck,
}

pub fn run(cli: Cli) -> Result<i32> {
    if let Some(threads) = cli.threads {
        // Per-frame work is embarrassingly parallel and each frame is
        // computed independently, so the thread count never changes
        // results. Ignore the error if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let crop = cli.crop.as_deref().map(parse_crop).transpose()?;

    match cli.command {
        Command::Synth {
            out_dir,
            width,
            height,
            frames,
            motion,
            bits,
        } => cmd_synth(&out_dir, width, height, frames, &motion, bits, seed, cfg),
        Command::Degrade {
            inputs,
            out_dir,
            noise_sigma,
            bits,
        } => cmd_degrade(&inputs, &out_dir, noise_sigma, bits, seed, cfg),
        Command::Superres {
            inputs,
            out_dir,
            init_motion,
            truth_motion,
            rgb,
            bits,
        } => cmd_superres(
            &inputs,
            &out_dir,
            &init_motion,
            &truth_motion,
            rgb,
            bits,
            seed,
            cfg,
        ),
        Command::Metrics {
            truth,
            estimate,
            truth_flow,
            est_flow,
            psnr_standard,
            tsv,
        } => cmd_metrics(
            &truth,
            &estimate,
            &truth_flow,
            &est_flow,
            psnr_standard,
            crop,
            tsv.as_deref(),
        ),
        Command::Gradcheck { inject_error } => cmd_gradcheck(seed, inject_error),
        Command::KalmanCheck => cmd_kalman_check(seed),
    }
}

fn load_config(path: Option<&Path>) -> Result<SolverConfig> {
    match path {
        None => Ok(SolverConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::io(format!("reading config {}", p.display()), e))?;
            SolverConfig::from_json(&text)
        }
    }
}

fn parse_crop(text: &str) -> Result<(usize, usize)> {
    let (w, h) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("crop must look like 240x240, got {text:?}")))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad crop size {t:?}")))
    };
    Ok((parse(w)?, parse(h)?))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn frame_name(prefix: &str, t: usize, ext: &str) -> String {
    format!("{prefix}_{t:03}.{ext}")
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    out_dir: &Path,
    width: usize,
    height: usize,
    frames: usize,
    motion: &str,
    bits: u8,
    seed: u64,
    cfg: SolverConfig,
) -> Result<i32> {
    if frames == 0 {
        return Err(Error::Config("need at least one frame".into()));
    }
    let grid = Grid::new(width, height)?;
    let spec = synth::MotionSpec::parse(motion)?;
    let mut manifest = RunManifest::new(format!("synth {motion}"), cfg, Some(seed));
    ensure_dir(out_dir)?;
    let (seq, truth) =
        manifest.phase("generate", || synth::make_synthetic(grid, frames - 1, spec, seed))?;
    let started = std::time::Instant::now();
    for t in 0..frames {
        let path = out_dir.join(frame_name("hr", t, "pgm"));
        pgm::write_pgm(&path, width, height, seq.frame(t), bits)?;
        manifest.output(&path);
    }
    for t in 1..frames {
        let path = out_dir.join(frame_name("flow", t, "flo"));
        flo::write_flo(&path, grid, truth.field(t))?;
        manifest.output(&path);
    }
    manifest.record_phase("write", started);
    manifest.write_atomic(out_dir)?;
    println!(
        "synth: {frames} frames of {width}x{height} written to {}",
        out_dir.display()
    );
    Ok(0)
}

fn read_frames(inputs: &[PathBuf]) -> Result<(usize, usize, Vec<pgm::PnmImage>)> {
    let mut frames = Vec::with_capacity(inputs.len());
    for path in inputs {
        frames.push(pgm::read_pnm(path)?);
    }
    let (w, h) = (frames[0].width, frames[0].height);
    for (i, f) in frames.iter().enumerate() {
        if f.width != w || f.height != h || f.channels.len() != frames[0].channels.len() {
            return Err(Error::DimensionMismatch(format!(
                "frame {i} ({}) differs in shape from frame 0",
                inputs[i].display()
            )));
        }
    }
    Ok((w, h, frames))
}

fn cmd_degrade(
    inputs: &[PathBuf],
    out_dir: &Path,
    noise_sigma: f64,
    bits: u8,
    seed: u64,
    cfg: SolverConfig,
) -> Result<i32> {
    let (w, h, frames) = read_frames(inputs)?;
    let grid = Grid::new(w, h)?;
    let obs = crate::operators::ObservationOp::new(grid, cfg.kernel)?;
    let mut manifest = RunManifest::new(
        format!("degrade sigma={noise_sigma}"),
        cfg,
        Some(seed),
    );
    for p in inputs {
        manifest.input(p);
    }
    ensure_dir(out_dir)?;

    // Observation is pure per channel; noise is drawn afterwards in a
    // fixed frame/channel order so the thread count cannot change it.
    let mut observed: Vec<Vec<Vec<f64>>> = manifest.phase("observe", || {
        Ok(frames
            .par_iter()
            .map(|f| f.channels.iter().map(|ch| obs.observe(ch)).collect())
            .collect())
    })?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = rand::distributions::Uniform::new(0.0f64, 1.0);
        for frame in observed.iter_mut() {
            for ch in frame.iter_mut() {
                let mut i = 0;
                while i < ch.len() {
                    // Box-Muller from two uniforms.
                    let u1: f64 = rng.sample(normal).max(1e-300);
                    let u2: f64 = rng.sample(normal);
                    let r = (-2.0 * u1.ln()).sqrt();
                    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
                    ch[i] += noise_sigma * r * c;
                    i += 1;
                    if i < ch.len() {
                        ch[i] += noise_sigma * r * s;
                        i += 1;
                    }
                }
            }
        }
    }
    let started = std::time::Instant::now();
    let lr = obs.lr_grid();
    for (t, frame) in observed.iter().enumerate() {
        let path = out_dir.join(frame_name(
            "lr",
            t,
            if frame.len() == 3 { "ppm" } else { "pgm" },
        ));
        if frame.len() == 3 {
            pgm::write_ppm(
                &path,
                lr.width(),
                lr.height(),
                [&frame[0], &frame[1], &frame[2]],
                bits,
            )?;
        } else {
            pgm::write_pgm(&path, lr.width(), lr.height(), &frame[0], bits)?;
        }
        manifest.output(&path);
    }
    manifest.record_phase("write", started);
    manifest.write_atomic(out_dir)?;
    println!(
        "degrade: {} frames -> {}",
        frames.len(),
        out_dir.display()
    );
    Ok(0)
}

fn read_motion_files(paths: &[PathBuf], grid: Grid, t_max: usize) -> Result<MotionSeq> {
    if paths.len() != t_max {
        return Err(Error::DimensionMismatch(format!(
            "{} motion files for T = {t_max}",
            paths.len()
        )));
    }
    let mut fields = Vec::with_capacity(t_max);
    for path in paths {
        let (w, h, field) = flo::read_flo(path)?;
        if w != grid.width() || h != grid.height() {
            return Err(Error::DimensionMismatch(format!(
                "{}: {w}x{h} flow on grid {grid}",
                path.display()
            )));
        }
        fields.push(field);
    }
    MotionSeq::new(grid, fields)
}

#[allow(clippy::too_many_arguments)]
fn cmd_superres(
    inputs: &[PathBuf],
    out_dir: &Path,
    init_motion: &[PathBuf],
    truth_motion: &[PathBuf],
    rgb: bool,
    bits: u8,
    seed: u64,
    cfg: SolverConfig,
) -> Result<i32> {
    let (lw, lh, frames) = read_frames(inputs)?;
    let hr = Grid::new(2 * lw, 2 * lh)?;
    let t_max = frames.len() - 1;

    // Channel layout: luminance by default, stacked RGB on request.
    let channel_frames: Vec<Vec<Vec<f64>>> = if rgb && frames[0].channels.len() == 3 {
        (0..3)
            .map(|ch| frames.iter().map(|f| f.channels[ch].clone()).collect())
            .collect()
    } else {
        vec![frames.iter().map(|f| f.luminance()).collect()]
    };
    let problems: Vec<SrProblem> = channel_frames
        .into_iter()
        .map(|y| SrProblem::new(hr, y, cfg.clone()))
        .collect::<Result<_>>()?;

    let init = if init_motion.is_empty() {
        None
    } else {
        Some(read_motion_files(init_motion, hr, t_max)?)
    };
    let truth = if truth_motion.is_empty() {
        None
    } else {
        Some(read_motion_files(truth_motion, hr, t_max)?)
    };

    let mut manifest = RunManifest::new("superres", cfg, Some(seed));
    for p in inputs.iter().chain(init_motion).chain(truth_motion) {
        manifest.input(p);
    }
    ensure_dir(out_dir)?;

    let out = manifest.phase("solve", || {
        outer::super_resolve(&problems, init.as_ref(), truth.as_ref())
    })?;

    let started = std::time::Instant::now();
    for t in 0..=t_max {
        let path = out_dir.join(frame_name(
            "sr",
            t,
            if out.x.len() == 3 { "ppm" } else { "pgm" },
        ));
        if out.x.len() == 3 {
            pgm::write_ppm(
                &path,
                hr.width(),
                hr.height(),
                [out.x[0].frame(t), out.x[1].frame(t), out.x[2].frame(t)],
                bits,
            )?;
        } else {
            pgm::write_pgm(&path, hr.width(), hr.height(), out.x[0].frame(t), bits)?;
        }
        manifest.output(&path);
    }
    for t in 1..=t_max {
        let path = out_dir.join(frame_name("flow", t, "flo"));
        flo::write_flo(&path, hr, out.d.field(t))?;
        manifest.output(&path);
        for (ch, eps) in out.eps.iter().enumerate() {
            let name = if out.eps.len() == 1 {
                frame_name("eps", t, "pfm")
            } else {
                format!("eps_c{ch}_{t:03}.pfm")
            };
            let path = out_dir.join(name);
            pfm::write_pfm(&path, hr.width(), hr.height(), eps.residual(t))?;
            manifest.output(&path);
        }
    }
    let trace_path = out_dir.join("trace.tsv");
    write_trace(&trace_path, &out.trace)?;
    manifest.output(&trace_path);
    manifest.record_phase("write", started);
    manifest.write_atomic(out_dir)?;

    let j = &out.trace.j;
    println!(
        "superres: {} frames -> {} (objective {:.6e} -> {:.6e})",
        t_max + 1,
        out_dir.display(),
        j.first().unwrap(),
        j.last().unwrap()
    );
    Ok(0)
}

fn write_trace(path: &Path, trace: &outer::OuterTrace) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::from("iter\tj\tdata_term\talpha\ttrials\tverified\tmepe\n");
    let fmt_opt = |v: Option<&f64>| v.map_or(String::new(), |x| format!("{x:.12e}"));
    for (i, j) in trace.j.iter().enumerate() {
        let _ = write!(text, "{i}\t{j:.12e}");
        if i == 0 {
            let _ = write!(text, "\t\t\t\t");
        } else {
            let _ = write!(
                text,
                "\t{}\t{}\t{}\t{}",
                fmt_opt(trace.data_term.get(i - 1)),
                fmt_opt(trace.alpha.get(i - 1)),
                trace
                    .trials
                    .get(i - 1)
                    .map_or(String::new(), |t| t.to_string()),
                trace
                    .backtrack_verified
                    .get(i - 1)
                    .map_or(String::new(), |b| b.to_string()),
            );
        }
        let _ = writeln!(text, "\t{}", fmt_opt(trace.mepe.get(i)));
    }
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn central_crop(
    data: &[f64],
    width: usize,
    height: usize,
    crop: (usize, usize),
) -> Result<Vec<f64>> {
    let (cw, ch) = crop;
    if cw > width || ch > height {
        return Err(Error::Config(format!(
            "crop {cw}x{ch} exceeds frame {width}x{height}"
        )));
    }
    let x0 = (width - cw) / 2;
    let y0 = (height - ch) / 2;
    let mut out = Vec::with_capacity(cw * ch);
    for r in 0..ch {
        let base = (y0 + r) * width + x0;
        out.extend_from_slice(&data[base..base + cw]);
    }
    Ok(out)
}

fn cmd_metrics(
    truth: &[PathBuf],
    estimate: &[PathBuf],
    truth_flow: &[PathBuf],
    est_flow: &[PathBuf],
    psnr_standard: bool,
    crop: Option<(usize, usize)>,
    tsv: Option<&Path>,
) -> Result<i32> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch(
            "need equally many truth and estimate frames".into(),
        ));
    }
    let mut lines = vec!["frame\tpsnr_db\tcc".to_string()];
    let mut psnr_sum = 0.0;
    let mut cc_sum = 0.0;
    for (t, (tp, ep)) in truth.iter().zip(estimate).collect::<Vec<_>>().into_iter().enumerate() {
        let a = pgm::read_pnm(tp)?;
        let b = pgm::read_pnm(ep)?;
        if a.width != b.width || a.height != b.height {
            return Err(Error::DimensionMismatch(format!(
                "frame {t}: {}x{} vs {}x{}",
                a.width, a.height, b.width, b.height
            )));
        }
        let (mut xa, mut xb) = (a.luminance(), b.luminance());
        if let Some(cr) = crop {
            xa = central_crop(&xa, a.width, a.height, cr)?;
            xb = central_crop(&xb, b.width, b.height, cr)?;
        }
        let p = metrics::psnr(&xa, &xb, psnr_standard);
        let c = metrics::cc(&xa, &xb);
        psnr_sum += p;
        cc_sum += c;
        lines.push(format!("{t}\t{p:.4}\t{c:.6}"));
    }
    let nf = truth.len() as f64;
    lines.push(format!(
        "mean\t{:.4}\t{:.6}",
        psnr_sum / nf,
        cc_sum / nf
    ));

    if !truth_flow.is_empty() || !est_flow.is_empty() {
        if truth_flow.len() != est_flow.len() || truth_flow.is_empty() {
            return Err(Error::DimensionMismatch(
                "need equally many truth and estimated flows".into(),
            ));
        }
        let (w, h, _) = flo::read_flo(&truth_flow[0])?;
        let grid = Grid::new(w, h)?;
        let dt = read_motion_files(truth_flow, grid, truth_flow.len())?;
        let de = read_motion_files(est_flow, grid, est_flow.len())?;
        lines.push(format!("mepe_px\t{:.6}", metrics::mepe(&dt, &de)?));
        lines.push(format!("mbae_deg\t{:.6}", metrics::mbae(&dt, &de)?));
    }

    let report = lines.join("\n");
    println!("{report}");
    if let Some(path) = tsv {
        std::fs::write(path, format!("{report}\n"))
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    Ok(0)
}

fn cmd_gradcheck(seed: u64, inject_error: bool) -> Result<i32> {
    let results = checks::run_all(seed, inject_error)?;
    let mut failed = 0;
    for r in &results {
        println!("{}", r.report_line());
        if !r.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("gradcheck: {failed} of {} checks failed", results.len());
        return Ok(1);
    }
    println!("gradcheck: all {} checks passed", results.len());
    Ok(0)
}

fn cmd_kalman_check(seed: u64) -> Result<i32> {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    let grid = Grid::new(4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SolverConfig {
        p: 2,
        ..Default::default()
    };
    let t_max = 3;
    let y: Vec<Vec<f64>> = (0..=t_max)
        .map(|_| (0..4).map(|_| rng.gen_range(0.0..60.0)).collect())
        .collect();
    let p = SrProblem::new(grid, y, cfg)?;
    let mut d = MotionSeq::zeros(grid, t_max);
    for t in 1..=t_max {
        for v in d.field_mut(t).iter_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }

    let model = kalman::build_dense_model(&p, &d)?;
    let smoothed = kalman::smooth_map(&p, &model)?;
    let direct = kalman::gradient_route_map(&p, &d, 2000, 1e-12)?;

    let mut worst = 0.0f64;
    for t in 0..=t_max {
        for (a, b) in smoothed.frame(t).iter().zip(direct.frame(t)) {
            worst = worst.max((a - b).abs() / a.abs().max(1.0));
        }
    }

    // The smoother output must also zero the quadratic gradient.
    let (eps, c) = kalman::decompose_states(&p, &smoothed, &d)?;
    let (ge, gd, gc) = crate::adjoint::grad_full(
        &p,
        &eps,
        &d,
        &c,
        crate::adjoint::StagePenalty::Quadratic,
    )?;
    let mut grad_inf = crate::vec_ops::norm(gc.coeffs(), crate::vec_ops::NormKind::LInf);
    for t in 1..=t_max {
        grad_inf = grad_inf.max(crate::vec_ops::norm(
            ge.residual(t),
            crate::vec_ops::NormKind::LInf,
        ));
        let _ = &gd;
    }
    let zero = crate::seq::NoiseSeq::zeros(grid, t_max);
    let czero = crate::seq::CoefVec::zeros(p.dict().id());
    let (g0e, _, g0c) =
        crate::adjoint::grad_full(&p, &zero, &d, &czero, crate::adjoint::StagePenalty::Quadratic)?;
    let mut scale = crate::vec_ops::norm(g0c.coeffs(), crate::vec_ops::NormKind::LInf);
    for t in 1..=t_max {
        scale = scale.max(crate::vec_ops::norm(
            g0e.residual(t),
            crate::vec_ops::NormKind::LInf,
        ));
    }

    println!("kalman-check\tmax-rel-diff\t{worst:.3e}");
    println!(
        "kalman-check\tgrad-inf-norm\t{:.3e} (scale {scale:.3e})",
        grad_inf
    );
    let pass = worst <= 1e-6 && grad_inf <= 1e-6 * scale.max(1.0);
    println!("kalman-check\t{}", if pass { "pass" } else { "fail" });
    Ok(if pass { 0 } else { 1 })
}
