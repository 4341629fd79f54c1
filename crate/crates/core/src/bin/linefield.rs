use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;

use linefield::detector::{detect, DetectSource, DetectorParams, FilterParams};
use linefield::eval::{
    corner_error, estimate_homography, localization_error, match_one_to_one, repeatability, vp_consistency, vp_error_auc,
    DistanceKind, EvalParams,
};
use linefield::fields::render_fields;
use linefield::geometry::{CameraIntrinsics, Homography};
use linefield::gt::{generate_pseudo_gt, HomographySamplerParams};
use linefield::io::{read_fields, read_homography, read_pgm, write_fields, write_homography, LinesFile, VpFile};
use linefield::refine::{refine_joint, refine_lines, RefineParams};
use linefield::vp::{fit_vps, VpParams};

type CliResult = Result<(), Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "linefield", version, about = "Line attraction fields, line detection, vanishing points and refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render distance and angle fields from a lines file.
    GenFields {
        #[arg(long)]
        lines: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 5.0)]
        r: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build pseudo ground-truth fields by homography adaptation.
    GenGt {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        num_homographies: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        r: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect line segments on an image or on fields.
    Detect {
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        fields: Option<PathBuf>,
        /// Skip the distance/angle consistency filter (field mode only).
        #[arg(long)]
        no_filter: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine segments against fields, optionally with VP constraints.
    Refine {
        #[arg(long)]
        lines: PathBuf,
        #[arg(long)]
        fields: PathBuf,
        #[arg(long)]
        vp: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        vps_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit vanishing points to a set of segments.
    Vps {
        #[arg(long)]
        lines: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluation metrics.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Structural,
    Orthogonal,
}

impl From<Kind> for DistanceKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Structural => DistanceKind::Structural,
            Kind::Orthogonal => DistanceKind::Orthogonal,
        }
    }
}

#[derive(Args)]
struct PairArgs {
    /// Lines detected in the first image.
    #[arg(long)]
    a: PathBuf,
    /// Lines detected in the second image.
    #[arg(long)]
    b: PathBuf,
    /// Ground-truth homography from the first image to the second (identity if omitted).
    #[arg(long)]
    homography: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Kind::Structural)]
    kind: Kind,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Repeatability under a known homography.
    Rep {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
    },
    /// Localization error of the best matches.
    Le {
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, default_value_t = 50)]
        top_k: usize,
    },
    /// Homography estimation from row-aligned candidate line matches.
    Hest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        width: f64,
        #[arg(long)]
        height: f64,
        /// Ground truth used to report the corner error.
        #[arg(long)]
        homography: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        iters: usize,
        #[arg(long, default_value_t = 3.0)]
        inlier_threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// VP error/AUC against ground-truth VPs, and VP consistency when the
    /// ground-truth lines are given.
    Vp {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        fx: f64,
        #[arg(long)]
        fy: f64,
        #[arg(long)]
        cx: f64,
        #[arg(long)]
        cy: f64,
        #[arg(long, default_value_t = 10.0)]
        max_angle: f64,
        /// Lines clustered by the assignment stored in the ground-truth file.
        #[arg(long)]
        lines: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 5.0, 10.0])]
        thresholds: Vec<f64>,
    },
}

fn print_metric(name: &str, value: f64) {
    println!("{name} {value}");
}

fn load_h(path: &Option<PathBuf>) -> Result<Homography, Box<dyn std::error::Error>> {
    Ok(match path {
        Some(p) => read_homography(p)?,
        None => Homography::identity(),
    })
}

fn run_eval(cmd: EvalCommand) -> CliResult {
    match cmd {
        EvalCommand::Rep { pair, threshold } => {
            let a = LinesFile::read(&pair.a)?.lines;
            let b = LinesFile::read(&pair.b)?.lines;
            let h = load_h(&pair.homography)?;
            let params = EvalParams { rep_threshold: threshold, distance_kind: pair.kind.into(), ..Default::default() };
            let m = match_one_to_one(&a, &b, &h, params.distance_kind);
            print_metric("repeatability", repeatability(&m, a.len(), b.len(), &params)?);
        }
        EvalCommand::Le { pair, top_k } => {
            let a = LinesFile::read(&pair.a)?.lines;
            let b = LinesFile::read(&pair.b)?.lines;
            let h = load_h(&pair.homography)?;
            let params = EvalParams { le_top_k: top_k, distance_kind: pair.kind.into(), ..Default::default() };
            let m = match_one_to_one(&a, &b, &h, params.distance_kind);
            print_metric("localization_error", localization_error(&m, &params)?);
        }
        EvalCommand::Hest { a, b, width, height, homography, iters, inlier_threshold, seed, out } => {
            let a = LinesFile::read(&a)?.lines;
            let b = LinesFile::read(&b)?.lines;
            if a.len() != b.len() {
                return Err(format!("candidate files differ in length: {} vs {}", a.len(), b.len()).into());
            }
            let pairs: Vec<_> = a.into_iter().zip(b).collect();
            let params = EvalParams { hest_iters: iters, hest_inlier_threshold: inlier_threshold, seed, ..Default::default() };
            let (h, mask) = estimate_homography(&pairs, &params)?;
            print_metric("inliers", mask.iter().filter(|m| **m).count() as f64);
            if let Some(gt) = homography {
                let err = corner_error(&h, &read_homography(&gt)?, width, height)?;
                print_metric("corner_error", err);
                print_metric("correct", if err <= params.hest_corner_threshold { 1.0 } else { 0.0 });
            }
            if let Some(out) = out {
                write_homography(&out, &h)?;
            }
        }
        EvalCommand::Vp { gt, pred, fx, fy, cx, cy, max_angle, lines, thresholds } => {
            let k = CameraIntrinsics::new(fx, fy, cx, cy)?;
            let (gt_vps, gt_assign) = VpFile::read(&gt)?.to_model()?;
            let (pred_vps, _) = VpFile::read(&pred)?.to_model()?;
            let dirs: Vec<Vector3<f64>> = gt_vps.iter().map(|v| k.back_project(v.as_vector())).collect();
            let (median, auc) = vp_error_auc(&dirs, &pred_vps, &k, max_angle);
            print_metric("median_error_deg", median);
            print_metric("auc", auc);
            if let Some(lines) = lines {
                let lines = LinesFile::read(&lines)?.lines;
                if lines.len() != gt_assign.0.len() {
                    return Err(format!("{} lines but {} assignments", lines.len(), gt_assign.0.len()).into());
                }
                let clusters: Vec<Vec<_>> = (0..gt_vps.len()).map(|j| gt_assign.inliers_of(j).into_iter().map(|i| lines[i]).collect()).collect();
                for (t, v) in thresholds.iter().zip(vp_consistency(&clusters, &pred_vps, &thresholds)) {
                    print_metric(&format!("consistency@{t}"), v);
                }
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::GenFields { lines, width, height, r, out } => {
            let lines = LinesFile::read(&lines)?.lines;
            write_fields(&out, &render_fields(&lines, width, height, r)?)?;
        }
        Command::GenGt { image, num_homographies, seed, r, out } => {
            let img = read_pgm(&image)?;
            let sampler = HomographySamplerParams { seed, ..Default::default() };
            let fp = generate_pseudo_gt(&img, num_homographies, &DetectorParams::classical(), &sampler, r)?;
            write_fields(&out, &fp)?;
        }
        Command::Detect { image, fields, no_filter, out } => {
            let img = image.as_deref().map(read_pgm).transpose()?;
            let lines = match (&fields, &img) {
                (Some(f), img) => {
                    let fp = read_fields(f)?;
                    let filter = FilterParams::default();
                    detect(
                        DetectSource::Fields { fields: &fp, image: img.as_ref() },
                        &DetectorParams::default(),
                        (!no_filter).then_some(&filter),
                    )?
                }
                (None, Some(img)) => detect(DetectSource::Image(img), &DetectorParams::classical(), None)?,
                (None, None) => return Err("one of --image or --fields is required".into()),
            };
            LinesFile::new(lines).write(&out)?;
        }
        Command::Refine { lines, fields, vp, out, vps_out, seed } => {
            let input = LinesFile::read(&lines)?;
            let fp = read_fields(&fields)?;
            let params = RefineParams::default();
            let (refined, model) = if vp {
                let vp_params = VpParams { seed, ..Default::default() };
                let j = refine_joint(&input.lines, &fp, &vp_params, &params)?;
                (j.lines, Some((j.vps, j.assignment)))
            } else {
                (refine_lines(&input.lines, &fp, &params)?, None)
            };
            LinesFile { header: input.header, lines: refined }.write(&out)?;
            if let Some(path) = vps_out {
                let (vps, assignment) = model.ok_or("--vps-out requires --vp")?;
                let mut f = VpFile::from_model(&vps, &assignment);
                f.width = Some(fp.width());
                f.height = Some(fp.height());
                f.write(&path)?;
            }
        }
        Command::Vps { lines, width, height, out, seed } => {
            let lines = LinesFile::read(&lines)?.lines;
            let (vps, assignment) = fit_vps(&lines, &VpParams { seed, ..Default::default() })?;
            let mut f = VpFile::from_model(&vps, &assignment);
            f.width = Some(width);
            f.height = Some(height);
            f.write(&out)?;
        }
        Command::Eval(cmd) => run_eval(cmd)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
