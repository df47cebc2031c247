//! `bevobb` — command-line driver for the BEV detection pipeline.
//!
//! Subcommands cover the pipeline end to end: rasterize a scan, derive
//! anchors from labels, self-test the box codec, overfit the toy trainer,
//! score detections, benchmark resolutions, and print architecture shapes.
//! Every run that writes files also writes a `manifest.json` describing the
//! invocation; `bevobb rerun --manifest <file>` replays it.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use bevobb::bev::{rasterize, GridConfig};
use bevobb::boxes::{compute_anchors, decode, encode, Anchor, HeadConfig};
use bevobb::eval::{
    ap_csv, bench_csv, bench_resolution_sweep, map_over_thresholds, mean_ap, read_detections,
    Interp, IouKind,
};
use bevobb::kitti::{filter_to_image_fov, parse_calibration, parse_kitti_labels, read_velodyne_scan};
use bevobb::loss::{ConfTarget, LossBreakdown};
use bevobb::net::io::save_weights;
use bevobb::net::train::{evaluate_toy_fit, train_toy, ToyTrainConfig};
use bevobb::net::{build_network, Network, NetworkSpec};
use bevobb::plot::{write_line_chart, Series};
use bevobb::types::{wrap_angle, ClassId, Obb3D, Point, PointCloud};

/// Seed sub-streams, so every consumer of the master seed draws from its own
/// independent sequence (the library reserves 0 and 1 for network init and
/// scene generation).
const STREAM_BOX_SAMPLES: u64 = 2;
const STREAM_BENCH_CLOUD: u64 = 3;

#[derive(Parser, Debug)]
#[command(name = "bevobb", version, about = "BEV oriented-box detection pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Rasterize a LiDAR scan into the two-channel BEV grid.
    Rasterize(RasterizeArgs),
    /// Derive per-class anchor dimensions from KITTI labels.
    Anchors(AnchorsArgs),
    /// Round-trip self-test of the box encoder/decoder.
    EncodeDecode(EncodeDecodeArgs),
    /// Overfit the small network on synthetic scenes.
    TrainToy(TrainToyArgs),
    /// Score detections against ground truth (AP over IoU thresholds).
    Eval(EvalArgs),
    /// Time rasterization (+ forward pass) across grid resolutions.
    Bench(BenchArgs),
    /// Print the layer-by-layer shape chain of an architecture.
    Shapes(ShapesArgs),
    /// Replay a previous run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Cell size, meters per pixel.
    #[arg(long = "res", default_value_t = 0.1)]
    res: f64,
    /// Forward extent in meters.
    #[arg(long, default_value_t = 60.8)]
    x_range: f64,
    /// Lateral extent each side, meters.
    #[arg(long, default_value_t = 30.4)]
    y_half_range: f64,
    /// Lower height clip, meters.
    #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
    z_min: f64,
    /// Upper height clip, meters.
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    z_max: f64,
}

impl GridArgs {
    fn to_config(&self) -> anyhow::Result<GridConfig> {
        let cfg = GridConfig {
            x_range: self.x_range,
            y_half_range: self.y_half_range,
            resolution: self.res,
            z_min: self.z_min,
            z_max: self.z_max,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RasterizeArgs {
    /// KITTI velodyne .bin scan.
    #[arg(long)]
    scan: PathBuf,
    /// Optional calibration file; when given, points outside the camera
    /// field of view are dropped before rasterization.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Output directory for height/density PNGs and the raw grid.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnchorsArgs {
    /// KITTI label file, or a directory of them.
    #[arg(long)]
    labels: PathBuf,
    /// Calibration file, or a directory with files named like the labels.
    #[arg(long)]
    calib: PathBuf,
    /// Optional output directory for anchors.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EncodeDecodeArgs {
    /// Number of random boxes to round-trip.
    #[arg(long, default_value_t = 1000)]
    boxes: usize,
    /// Anchor file (`class w l h` per line); defaults to built-in priors.
    #[arg(long)]
    anchors: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional output directory for the per-box error CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainToyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1500)]
    steps: usize,
    /// Scenes to overfit (1..=16).
    #[arg(long, default_value_t = 4)]
    scenes: usize,
    /// Objectness target: `iou` (predicted-vs-gt overlap) or `one`.
    #[arg(long, default_value = "one")]
    conf_target: ConfTarget,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for loss.csv and toy.weights.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Detections file: `frame class conf cx cy cz w l h yaw` per line.
    #[arg(long)]
    dets: PathBuf,
    /// Ground-truth file, same format (confidence column ignored as 1).
    #[arg(long)]
    gts: PathBuf,
    /// Overlap measure for matching.
    #[arg(long, default_value = "bev")]
    iou: IouKind,
    /// AP interpolation grid (11 or 40 recall points).
    #[arg(long, default_value = "11")]
    interp: Interp,
    /// Comma-separated IoU thresholds to sweep.
    #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    thresholds: String,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for ap.csv and ap.svg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Scan to rasterize; a synthetic cloud is generated when omitted.
    #[arg(long)]
    scan: Option<PathBuf>,
    /// Comma-separated resolutions to sweep, meters per pixel.
    #[arg(long, default_value = "0.25,0.2,0.15,0.1")]
    resolutions: String,
    /// Timed repetitions per resolution (raised to 20 if lower).
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Network to run after rasterization, or `none` for grid-only timing.
    #[arg(long, value_parser = ["toy", "table1", "none"], default_value = "toy")]
    arch: String,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for bench.csv and bench.svg.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ShapesArgs {
    /// Architecture to describe.
    #[arg(long, value_parser = ["table1", "toy"], default_value = "table1")]
    arch: String,
    /// Optional output directory for shapes.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RerunArgs {
    /// manifest.json from a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

/// What a run writes next to its outputs; enough to replay it.
#[derive(Serialize, Deserialize, Debug)]
struct Manifest {
    tool: String,
    version: String,
    command: String,
    /// Original command line (everything after the binary name).
    argv: Vec<String>,
    seed: Option<u64>,
    /// Worker threads the run actually used.
    threads: usize,
    outputs: Vec<String>,
}

fn write_manifest(
    dir: &Path,
    command: &str,
    argv: &[String],
    seed: Option<u64>,
    outputs: &[&str],
) -> anyhow::Result<()> {
    let manifest = Manifest {
        tool: "bevobb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        argv: argv.to_vec(),
        seed,
        threads: rayon::current_num_threads(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").with_context(|| path.display().to_string())?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // Ignore the error from a pool that already exists (e.g. a rerun
        // that dispatched in-process); the determinism contract holds at
        // any pool size anyway.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn parse_f64_list(text: &str) -> anyhow::Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("bad number `{s}`: {e}")))
        .collect()
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1, // usage error
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd, &argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd, argv: &[String]) -> anyhow::Result<()> {
    match cmd {
        Cmd::Rasterize(a) => cmd_rasterize(a, argv),
        Cmd::Anchors(a) => cmd_anchors(a, argv),
        Cmd::EncodeDecode(a) => cmd_encode_decode(a, argv),
        Cmd::TrainToy(a) => cmd_train_toy(a, argv),
        Cmd::Eval(a) => cmd_eval(a, argv),
        Cmd::Bench(a) => cmd_bench(a, argv),
        Cmd::Shapes(a) => cmd_shapes(a, argv),
        Cmd::Rerun(a) => cmd_rerun(a),
    }
}

fn cmd_rasterize(a: RasterizeArgs, argv: &[String]) -> anyhow::Result<()> {
    let cfg = a.grid.to_config()?;
    let (mut cloud, skipped) = read_velodyne_scan(&a.scan)?;
    let total = cloud.points.len();
    if let Some(calib_path) = &a.calib {
        let calib = parse_calibration(calib_path)?;
        cloud = filter_to_image_fov(&cloud, &calib);
        println!("fov filter kept {} of {total} points", cloud.points.len());
    }
    let map = rasterize(&cloud, &cfg)?;
    ensure_dir(&a.out)?;
    map.write_pngs(&a.out, "grid")?;
    map.write_raw(&a.out.join("grid.raw"))?;
    let occupied = map.density.iter().filter(|&&d| d > 0.0).count();
    println!(
        "read {total} points ({skipped} non-finite skipped); grid {}x{}, {occupied} occupied cells",
        map.rows(),
        map.cols()
    );
    println!("wrote grid_height.png, grid_density.png, grid.raw to {}", a.out.display());
    write_manifest(
        &a.out,
        "rasterize",
        argv,
        None,
        &["grid_height.png", "grid_density.png", "grid.raw"],
    )
}

/// Label files (and their calibrations) for `--labels`/`--calib` that may
/// each be a single file or a directory. Directory contents pair by file
/// name.
fn label_files(labels: &Path, calib: &Path) -> anyhow::Result<Vec<(PathBuf, PathBuf)>> {
    if labels.is_file() {
        let calib_file =
            if calib.is_dir() { calib.join(labels.file_name().unwrap()) } else { calib.into() };
        return Ok(vec![(labels.into(), calib_file)]);
    }
    let mut names: Vec<PathBuf> = fs::read_dir(labels)
        .with_context(|| labels.display().to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no .txt label files in {}", labels.display());
    }
    names
        .into_iter()
        .map(|p| {
            let calib_file =
                if calib.is_dir() { calib.join(p.file_name().unwrap()) } else { calib.into() };
            Ok((p, calib_file))
        })
        .collect()
}

fn cmd_anchors(a: AnchorsArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut boxes: Vec<Obb3D> = Vec::new();
    let mut skipped = (0usize, 0usize);
    for (label_path, calib_path) in label_files(&a.labels, &a.calib)? {
        let calib = parse_calibration(&calib_path)?;
        let set = parse_kitti_labels(&label_path, &calib)?;
        skipped.0 += set.skipped_malformed;
        skipped.1 += set.skipped_other_class;
        boxes.extend(set.boxes());
    }
    let anchors = compute_anchors(&boxes, &ClassId::ALL)?;
    println!(
        "{} labels ({} malformed, {} other classes skipped)",
        boxes.len(),
        skipped.0,
        skipped.1
    );
    let text = anchor_file_text(&anchors);
    print!("{text}");
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        fs::write(out.join("anchors.txt"), &text)?;
        write_manifest(out, "anchors", argv, None, &["anchors.txt"])?;
    }
    Ok(())
}

fn anchor_file_text(anchors: &[Anchor]) -> String {
    let mut text = String::new();
    for a in anchors {
        writeln!(text, "{} {} {} {}", a.class, a.p_w, a.p_l, a.p_h).unwrap();
    }
    text
}

/// Parses an anchor file: `class p_w p_l p_h` per line, `#` comments allowed.
fn parse_anchor_file(path: &Path) -> anyhow::Result<Vec<Anchor>> {
    let text = fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let mut anchors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let ctx = || format!("{}:{}", path.display(), lineno + 1);
        if fields.len() != 4 {
            bail!("{}: expected `class w l h`, got {} fields", ctx(), fields.len());
        }
        let class =
            ClassId::parse(fields[0]).ok_or_else(|| anyhow!("{}: unknown class", ctx()))?;
        let dim = |i: usize| -> anyhow::Result<f64> {
            let v: f64 = fields[i].parse().with_context(ctx)?;
            if v <= 0.0 {
                bail!("{}: dimensions must be positive", ctx());
            }
            Ok(v)
        };
        anchors.push(Anchor { class, p_w: dim(1)?, p_l: dim(2)?, p_h: dim(3)? });
    }
    if anchors.is_empty() {
        bail!("{}: no anchors", path.display());
    }
    Ok(anchors)
}

/// Built-in priors used when no anchor file is given.
fn default_anchors() -> Vec<Anchor> {
    ClassId::ALL
        .iter()
        .map(|&class| {
            let (w, l, h) = bevobb::net::train::class_base_dims(class);
            Anchor { class, p_w: w, p_l: l, p_h: h }
        })
        .collect()
}

fn cmd_encode_decode(a: EncodeDecodeArgs, argv: &[String]) -> anyhow::Result<()> {
    let grid = a.grid.to_config()?;
    let head = HeadConfig::for_grid(&grid, 16, ClassId::COUNT)?;
    let anchors = match &a.anchors {
        Some(path) => parse_anchor_file(path)?,
        None => default_anchors(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    rng.set_stream(STREAM_BOX_SAMPLES);

    let mut csv = String::from("index,class,cx,cy,cz,w,l,h,yaw,conf,max_abs_err\n");
    let mut worst = 0.0f64;
    for i in 0..a.boxes {
        let class = ClassId::from_index(rng.random_range(0..ClassId::COUNT)).unwrap();
        let anchor = anchors
            .iter()
            .find(|an| an.class == class)
            .ok_or_else(|| anyhow!("anchor file has no {class} entry"))?;
        let dz = grid.z_max - grid.z_min;
        let original = Obb3D {
            cx: rng.random_range(0.02 * grid.x_range..0.98 * grid.x_range),
            cy: rng.random_range(-0.98 * grid.y_half_range..0.98 * grid.y_half_range),
            cz: rng.random_range(grid.z_min + 0.02 * dz..grid.z_max - 0.02 * dz),
            w: anchor.p_w * rng.random_range(-0.4f64..0.4).exp(),
            l: anchor.p_l * rng.random_range(-0.4f64..0.4).exp(),
            h: anchor.p_h * rng.random_range(-0.4f64..0.4).exp(),
            yaw: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            class,
            confidence: rng.random_range(0.05..0.95),
        };
        let (cell, raw) = encode(&original, anchor, &head, &grid)?;
        let back = decode(&raw, cell, anchor, &head, &grid);
        let err = [
            back.cx - original.cx,
            back.cy - original.cy,
            back.cz - original.cz,
            back.w - original.w,
            back.l - original.l,
            back.h - original.h,
            wrap_angle(back.yaw - original.yaw),
            back.confidence - original.confidence,
        ]
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
        worst = worst.max(err);
        writeln!(
            csv,
            "{i},{},{},{},{},{},{},{},{},{},{err}",
            original.class,
            original.cx,
            original.cy,
            original.cz,
            original.w,
            original.l,
            original.h,
            original.yaw,
            original.confidence
        )
        .unwrap();
    }
    println!("{} boxes round-tripped, max abs error {worst:.3e}", a.boxes);
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        fs::write(out.join("round_trip.csv"), &csv)?;
        write_manifest(out, "encode-decode", argv, Some(a.seed), &["round_trip.csv"])?;
    }
    if worst > 1e-6 {
        bail!("round-trip error {worst:.3e} exceeds 1e-6");
    }
    Ok(())
}

fn cmd_train_toy(a: TrainToyArgs, argv: &[String]) -> anyhow::Result<()> {
    init_threads(a.threads);
    let cfg = ToyTrainConfig {
        seed: a.seed,
        steps: a.steps,
        scenes: a.scenes,
        conf_target: a.conf_target,
        ..ToyTrainConfig::default()
    };
    let result = train_toy(&cfg)?;

    let mut csv = String::from(LossBreakdown::CSV_HEADER);
    csv.push('\n');
    for rec in &result.log {
        csv.push_str(&rec.loss.csv_line(rec.step));
        csv.push('\n');
    }
    ensure_dir(&a.out)?;
    fs::write(a.out.join("loss.csv"), &csv)?;
    save_weights(&result.net, &a.out.join("toy.weights"))?;

    let first = result.log.first().map(|r| r.loss.total).unwrap_or(0.0);
    let last = result.log.last().map(|r| r.loss.total).unwrap_or(0.0);
    println!(
        "{} steps over {} scenes: loss {first:.4} -> {last:.4} ({:.1}% of start)",
        a.steps,
        a.scenes,
        100.0 * last / first.max(f64::MIN_POSITIVE)
    );
    let mean_iou = evaluate_toy_fit(&result, 0.3, 0.45)?;
    println!("mean best IoU vs labels after NMS: {mean_iou:.3}");
    println!("wrote loss.csv, toy.weights to {}", a.out.display());
    write_manifest(&a.out, "train-toy", argv, Some(a.seed), &["loss.csv", "toy.weights"])
}

fn cmd_eval(a: EvalArgs, argv: &[String]) -> anyhow::Result<()> {
    init_threads(a.threads);
    let thresholds = parse_f64_list(&a.thresholds)?;
    let dets = read_detections(&a.dets)?;
    let gts = read_detections(&a.gts)?;
    let curves = map_over_thresholds(&dets, &gts, &thresholds, a.interp, a.iou)?;
    let map = mean_ap(&curves);

    for curve in &curves {
        let row: Vec<String> =
            curve.points.iter().map(|(t, ap)| format!("{t}:{ap:.4}")).collect();
        println!("{:<12} {}", curve.class.to_string(), row.join("  "));
    }
    let map_row: Vec<String> = map.iter().map(|(t, ap)| format!("{t}:{ap:.4}")).collect();
    println!("{:<12} {}", "mAP", map_row.join("  "));

    ensure_dir(&a.out)?;
    fs::write(a.out.join("ap.csv"), ap_csv(&curves))?;
    let mut series: Vec<Series> = curves
        .iter()
        .map(|c| Series { label: c.class.to_string(), points: c.points.clone() })
        .collect();
    series.push(Series { label: "mAP".into(), points: map });
    write_line_chart(&a.out.join("ap.svg"), "AP vs IoU threshold", "IoU threshold", "AP", &series)?;
    println!("wrote ap.csv, ap.svg to {}", a.out.display());
    write_manifest(&a.out, "eval", argv, None, &["ap.csv", "ap.svg"])
}

/// Synthetic stand-in for a scan: uniform points over the grid footprint.
fn synthetic_bench_cloud(cfg: &GridConfig, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_BENCH_CLOUD);
    let points = (0..120_000)
        .map(|_| Point {
            x: rng.random_range(0.0..cfg.x_range) as f32,
            y: rng.random_range(-cfg.y_half_range..cfg.y_half_range) as f32,
            z: rng.random_range(cfg.z_min..cfg.z_max) as f32,
            r: rng.random_range(0.0..1.0),
        })
        .collect();
    PointCloud { points }
}

fn cmd_bench(a: BenchArgs, argv: &[String]) -> anyhow::Result<()> {
    let base = a.grid.to_config()?;
    let resolutions = parse_f64_list(&a.resolutions)?;
    let cloud = match &a.scan {
        Some(path) => read_velodyne_scan(path)?.0,
        None => synthetic_bench_cloud(&base, a.seed),
    };
    let net: Option<Network> = match a.arch.as_str() {
        "toy" => Some(build_network(&NetworkSpec::toy(), a.seed)?),
        "table1" => Some(build_network(&NetworkSpec::table1(), a.seed)?),
        _ => None,
    };
    println!(
        "timing {} points, arch {}, {} runs per resolution",
        cloud.points.len(),
        a.arch,
        a.runs.max(20)
    );
    let (records, fit) = bench_resolution_sweep(&cloud, &base, &resolutions, net.as_ref(), a.runs)?;
    for r in &records {
        println!("res {:>5} m/px  grid {:>4}  median {:.2} ms", r.resolution, r.grid_side, r.median_ms);
    }
    println!("fit: t = {:.4}*(1/r)^2 + {:.4} ms, R^2 = {:.4}", fit.a, fit.c, fit.r2);

    ensure_dir(&a.out)?;
    fs::write(a.out.join("bench.csv"), bench_csv(&records, &fit))?;
    let xs: Vec<f64> = records.iter().map(|r| (1.0 / r.resolution).powi(2)).collect();
    let series = vec![
        Series {
            label: "measured".into(),
            points: xs.iter().zip(&records).map(|(&x, r)| (x, r.median_ms)).collect(),
        },
        Series {
            label: "fit".into(),
            points: xs.iter().map(|&x| (x, fit.a * x + fit.c)).collect(),
        },
    ];
    write_line_chart(
        &a.out.join("bench.svg"),
        "Pipeline time vs cell count",
        "(1/resolution)^2",
        "median ms",
        &series,
    )?;
    println!("wrote bench.csv, bench.svg to {}", a.out.display());
    write_manifest(&a.out, "bench", argv, Some(a.seed), &["bench.csv", "bench.svg"])
}

fn cmd_shapes(a: ShapesArgs, argv: &[String]) -> anyhow::Result<()> {
    let spec = match a.arch.as_str() {
        "table1" => NetworkSpec::table1(),
        _ => NetworkSpec::toy(),
    };
    let text = spec.describe()?;
    print!("{text}");
    println!("parameters: {}", spec.param_count());
    if let Some(out) = &a.out {
        ensure_dir(out)?;
        fs::write(out.join("shapes.txt"), &text)?;
        write_manifest(out, "shapes", argv, None, &["shapes.txt"])?;
    }
    Ok(())
}

fn cmd_rerun(a: RerunArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&a.manifest).with_context(|| a.manifest.display().to_string())?;
    let manifest: Manifest =
        serde_json::from_str(&text).with_context(|| a.manifest.display().to_string())?;
    println!("replaying: bevobb {}", manifest.argv.join(" "));
    let full: Vec<String> =
        std::iter::once("bevobb".to_string()).chain(manifest.argv.iter().cloned()).collect();
    let cli = Cli::try_parse_from(&full)
        .map_err(|e| anyhow!("manifest argv does not parse: {e}"))?;
    dispatch(cli.cmd, &manifest.argv)
}
