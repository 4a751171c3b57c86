//! `hvdflow` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use hvdflow::evaluation::{colorize_flow, mepe, sparsity_report, MaxMagnitude};
use hvdflow::grid::high_pass;
use hvdflow::io::{read_flo, read_image, write_flo, write_gray_png};
use hvdflow::synthetic::{self, TextureSpec};
use hvdflow::{FlowError, ImagePair, RunConfig, SchemeKind, ScalarGrid};

type Flow = hvdflow::Flow;

#[derive(Parser, Debug)]
#[command(name = "hvdflow", version, about = "Dense optical flow with an HVD sparse regularizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate flow between two frames.
    Estimate(EstimateArgs),
    /// MEPE as a function of the measurement ratio.
    Sweep(SweepArgs),
    /// Sparsity of the derivative maps of a ground-truth flow.
    Sparsity(SparsityArgs),
    /// Write a synthetic frame pair with ground truth.
    Synth(SynthArgs),
    /// Evaluate on a local copy of the Middlebury training set.
    Middlebury(MiddleburyArgs),
}

/// Solver flags shared by the estimating subcommands. Unset flags fall back
/// to the config file, then to the built-in defaults.
#[derive(Args, Debug, Default)]
struct SolverFlags {
    /// Flat `key = value` config file using these flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Data term [default: ofc]
    #[arg(long, value_parser = ["ofc", "gca", "gdim"])]
    data: Option<String>,
    /// Regularization weight, in [1e-3, 1e-1] [default: 0.01]
    #[arg(long)]
    lambda: Option<String>,
    /// Huber threshold [default: 0.01]
    #[arg(long)]
    epsilon: Option<String>,
    /// Pyramid down-sampling factor [default: 0.70]
    #[arg(long)]
    pyramid_scale: Option<String>,
    /// Iteration cap per level [default: 500]
    #[arg(long)]
    max_iter: Option<String>,
    /// Measurement ratio m/n in (0, 1] [default: 1]
    #[arg(long)]
    ratio: Option<String>,
    /// Measurement selection [default: full]
    #[arg(long, value_parser = ["random", "significant", "combined", "full"])]
    scheme: Option<String>,
    /// Significant share of n for the combined scheme [default: 0.05]
    #[arg(long)]
    sig_frac: Option<String>,
    /// Selection seed [default: 0]
    #[arg(long)]
    seed: Option<String>,
    /// Edge-stopping weights on the regularizer
    #[arg(long)]
    adaptive: bool,
    /// High-pass the frames (9x9 Gaussian, sigma 1) before estimation
    #[arg(long)]
    preprocess: bool,
    /// Raw `key=value` override for settings without a dedicated flag
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl SolverFlags {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(usage)?;
            c.apply_text(&text).map_err(usage)?;
        }
        let pairs = [
            ("data", &self.data),
            ("lambda", &self.lambda),
            ("epsilon", &self.epsilon),
            ("pyramid-scale", &self.pyramid_scale),
            ("max-iter", &self.max_iter),
            ("ratio", &self.ratio),
            ("scheme", &self.scheme),
            ("sig-frac", &self.sig_frac),
            ("seed", &self.seed),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                c.set(k, v).map_err(usage)?;
            }
        }
        if self.adaptive {
            c.solver.adaptive = true;
        }
        if self.preprocess {
            c.preprocess = true;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            c.set(k.trim(), v.trim()).map_err(usage)?;
        }
        // Selecting a sub-sampling scheme without a ratio keeps every pixel,
        // so `--ratio` alone switches from `full` to random selection.
        if c.solver.scheme.kind == SchemeKind::Full && c.solver.scheme.ratio < 1.0 && self.scheme.is_none() {
            c.solver.scheme.kind = SchemeKind::Random;
        }
        c.solver.validate().map_err(usage)?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    frame0: PathBuf,
    frame1: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Ground-truth `.flo`; prints MEPE when given
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out_flo: Option<PathBuf>,
    /// Color-coded flow image
    #[arg(long)]
    out_png: Option<PathBuf>,
    /// Per-level solver diagnostics as CSV
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    frame0: PathBuf,
    frame1: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Comma-separated measurement ratios
    #[arg(long, default_value = "0.1,0.2,0.4,0.6,0.8,1.0", value_delimiter = ',')]
    ratios: Vec<f64>,
    /// Comma-separated schemes
    #[arg(long, default_value = "random,significant,combined", value_delimiter = ',')]
    schemes: Vec<String>,
    #[arg(long, default_value_t = hvdflow::sweep::DEFAULT_REPETITIONS)]
    repetitions: usize,
    /// CSV output path (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SparsityArgs {
    /// Ground-truth `.flo`
    gt: PathBuf,
    /// CSV output path (stdout if absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the binarized map PNGs
    #[arg(long)]
    map_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(value_parser = ["translate", "two-region", "brightness"])]
    kind: String,
    /// Output directory for frame0.png, frame1.png and gt.flo
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Horizontal shift for translate / brightness
    #[arg(long, default_value_t = 1.25, allow_hyphen_values = true)]
    dx: f64,
    /// Vertical shift for translate / brightness
    #[arg(long, default_value_t = 0.75, allow_hyphen_values = true)]
    dy: f64,
    /// Offset added to frame 1 for brightness
    #[arg(long, default_value_t = 0.1, allow_hyphen_values = true)]
    offset: f64,
}

#[derive(Args, Debug)]
struct MiddleburyArgs {
    /// Directory holding `other-data/<Seq>/frame10.png, frame11.png` and
    /// `other-gt-flow/<Seq>/flow10.flo`
    root: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Regularization weights tried per sequence; the best is reported
    #[arg(long, default_value = "0.001,0.003,0.01,0.03,0.1", value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Only check the directory layout
    #[arg(long)]
    check_only: bool,
}

const MIDDLEBURY_TRAINING: [&str; 8] = [
    "Dimetrodon",
    "Grove2",
    "Grove3",
    "Hydrangea",
    "RubberWhale",
    "Urban2",
    "Urban3",
    "Venus",
];

/// Marks an error as a usage error (exit code 1).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow::Error::new(UsageError(e.to_string()))
}

fn load_pair(frame0: &Path, frame1: &Path, preprocess: bool) -> anyhow::Result<ImagePair<f64>> {
    let f0: ScalarGrid<f64> = read_image(frame0).with_context(|| format!("reading {}", frame0.display()))?;
    let f1: ScalarGrid<f64> = read_image(frame1).with_context(|| format!("reading {}", frame1.display()))?;
    if f0.dims() != f1.dims() {
        bail!("frame sizes differ: {:?} vs {:?}", f0.dims(), f1.dims());
    }
    let (f0, f1) = if preprocess { (high_pass(&f0)?, high_pass(&f1)?) } else { (f0, f1) };
    Ok(ImagePair::new(f0, f1)?)
}

fn load_gt(path: &Path, dims: (usize, usize)) -> anyhow::Result<Flow> {
    let gt: Flow = read_flo(path).with_context(|| format!("reading {}", path.display()))?;
    if gt.dims() != dims {
        bail!("ground truth {:?} does not match frames {:?}", gt.dims(), dims);
    }
    Ok(gt)
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let cfg = args.solver.resolve()?;
    let pair = load_pair(&args.frame0, &args.frame1, cfg.preprocess)?;
    let gt = args.gt.as_ref().map(|p| load_gt(p, pair.dims())).transpose()?;
    let est = hvdflow::solve_coarse_to_fine(&pair, &cfg.solver)?;
    if let Some(p) = &args.out_flo {
        write_flo(p, &est.flow).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.out_png {
        colorize_flow(&est.flow, MaxMagnitude::Auto)
            .save_with_format(p, image::ImageFormat::Png)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &args.report {
        let mut csv = String::from("level,warp,width,height,rows,energy_start,energy_end,iterations,lipschitz,restarts\n");
        for l in &est.levels {
            csv.push_str(&format!(
                "{},{},{},{},{},{:.9e},{:.9e},{},{},{}\n",
                l.level, l.warp, l.width, l.height, l.rows, l.energy_start, l.energy_end, l.iterations, l.lipschitz, l.restarts
            ));
        }
        fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(gt) = gt {
        println!("mepe {:.6}", mepe(&est.flow, &gt)?);
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let cfg = args.solver.resolve()?;
    let schemes = args
        .schemes
        .iter()
        .map(|s| s.parse::<SchemeKind>().map_err(usage))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if args.ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(usage("ratios must lie in (0, 1]"));
    }
    if args.repetitions == 0 {
        return Err(usage("repetitions must be at least 1"));
    }
    let pair = load_pair(&args.frame0, &args.frame1, cfg.preprocess)?;
    let gt = load_gt(&args.gt, pair.dims())?;
    let table = hvdflow::sweep_ratios(&pair, &gt, &cfg.solver, &args.ratios, &schemes, args.repetitions)?;
    write_out(args.out.as_deref(), &table.to_csv())
}

fn cmd_sparsity(args: &SparsityArgs) -> anyhow::Result<()> {
    let gt: Flow = read_flo(&args.gt).with_context(|| format!("reading {}", args.gt.display()))?;
    let report = sparsity_report(&gt);
    let mut csv = String::from("map,fraction,threshold,fraction_vx,fraction_vy,threshold_vx,threshold_vy\n");
    for m in &report.maps {
        csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            m.name, m.fraction, m.threshold, m.fraction_vx, m.fraction_vy, m.threshold_vx, m.threshold_vy
        ));
    }
    if let Some(dir) = &args.map_dir {
        fs::create_dir_all(dir)?;
        for (k, m) in report.maps.iter().enumerate() {
            write_gray_png(dir.join(format!("{}.png", m.name)), &report.map_image(k))?;
        }
    }
    write_out(args.out.as_deref(), &csv)
}

/// 16-bit PNG so the synthetic frames survive the round trip almost exactly.
fn write_frame(path: &Path, g: &ScalarGrid<f64>) -> anyhow::Result<()> {
    let data: Vec<u16> = g.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16).collect();
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(g.width() as u32, g.height() as u32, data).expect("buffer size");
    img.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    if args.size < 16 {
        return Err(usage("--size must be at least 16"));
    }
    let spec = TextureSpec {
        width: args.size,
        height: args.size,
        seed: args.seed,
        ..Default::default()
    };
    let case = match args.kind.as_str() {
        "translate" => synthetic::translation(&spec, args.dx, args.dy)?,
        "two-region" => synthetic::two_region(&spec)?,
        "brightness" => synthetic::with_brightness_offset(&synthetic::translation(&spec, args.dx, args.dy)?, args.offset)?,
        other => return Err(usage(format!("unknown kind '{other}'"))),
    };
    fs::create_dir_all(&args.out_dir)?;
    write_frame(&args.out_dir.join("frame0.png"), &case.pair.frame0)?;
    write_frame(&args.out_dir.join("frame1.png"), &case.pair.frame1)?;
    write_flo(args.out_dir.join("gt.flo"), &case.ground_truth)?;
    Ok(())
}

fn middlebury_paths(root: &Path, seq: &str) -> [PathBuf; 3] {
    [
        root.join("other-data").join(seq).join("frame10.png"),
        root.join("other-data").join(seq).join("frame11.png"),
        root.join("other-gt-flow").join(seq).join("flow10.flo"),
    ]
}

fn cmd_middlebury(args: &MiddleburyArgs) -> anyhow::Result<()> {
    let missing: Vec<String> = MIDDLEBURY_TRAINING
        .iter()
        .flat_map(|s| middlebury_paths(&args.root, s))
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        bail!("dataset layout incomplete, missing:\n  {}", missing.join("\n  "));
    }
    if args.check_only {
        println!("layout ok");
        return Ok(());
    }
    let base = args.solver.resolve()?;
    println!("sequence,lambda,mepe");
    let mut total = 0.0;
    for seq in MIDDLEBURY_TRAINING {
        let [f0, f1, gtp] = middlebury_paths(&args.root, seq);
        let pair = load_pair(&f0, &f1, base.preprocess)?;
        let gt = load_gt(&gtp, pair.dims())?;
        let mut best = (f64::NAN, f64::INFINITY);
        for &lambda in &args.lambdas {
            let cfg = hvdflow::SolverConfig { lambda, ..base.solver.clone() };
            cfg.validate().map_err(usage)?;
            let e = mepe(&hvdflow::solve_coarse_to_fine(&pair, &cfg)?.flow, &gt)?;
            if e < best.1 {
                best = (lambda, e);
            }
        }
        println!("{seq},{},{:.6}", best.0, best.1);
        total += best.1;
    }
    println!("average,,{:.6}", total / MIDDLEBURY_TRAINING.len() as f64);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Sparsity(a) => cmd_sparsity(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Middlebury(a) => cmd_middlebury(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<FlowError>(), Some(FlowError::InvalidParameter(_) | FlowError::Config(_)));
            ExitCode::from(if is_usage { 1 } else { 2 })
        }
    }
}
