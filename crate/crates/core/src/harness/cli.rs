//! `ghostlab` command-line interface.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures.

use super::{export_dataset, read_ppm, run_eval, write_ppm, DatasetConfig, EvalConfig};
use crate::attack::{solve_attack, AttackConfig, AttackMode};
use crate::channel::{
    color_samples_from_observations, emulate, fit_color_matrix, fit_illuminance, read_color_csv,
    read_illuminance_csv, ChannelParams, ExposureMode, Placement,
};
use crate::classifier::{gen_dataset, train, Classifier, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::{ghost_about, ghost_resolution, resolution_schedule, ProjectorOptics, ScheduleMode};
use crate::image::ImageTensor;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "ghostlab", version, about = "Emulate and optimize projector ghost attacks on image classifiers")]
struct Cli {
    /// Seed for every random stream (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit illuminance constants from a `T_d,P_a,d,I` CSV.
    FitChannel {
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit the color matrix from an `r,g,b,yr,yg,yb` CSV.
    FitColor {
        #[arg(long)]
        input: PathBuf,
    },
    /// Write the synthetic sign dataset as PPM files and labels.csv.
    GenDataset(DatasetArgs),
    /// Train the default classifier on the synthetic dataset.
    Train(DatasetArgs),
    /// Solve one attack and write its report and images.
    Attack(AttackArgs),
    /// Pass a pattern through the channel model onto a background.
    Emulate(EmulateArgs),
    /// Run the evaluation sweep over distances and class pairs.
    Evaluate {
        /// Also write plot_data.csv.
        #[arg(long)]
        plot_data: bool,
    },
    /// Ghost position and resolution queries.
    Geometry(GeometryArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    #[arg(long)]
    n_per_class: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Creation,
    Alteration,
}

#[derive(Debug, Args)]
struct AttackArgs {
    /// Trained model JSON; a default model is trained when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Channel parameters JSON.
    #[arg(long)]
    channel: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    target: Option<usize>,
    /// Distance in meters, selecting the grid side from the table.
    #[arg(long, default_value_t = 3.0)]
    distance: f64,
    /// Grid side in blocks, overriding the distance schedule.
    #[arg(long)]
    side: Option<usize>,
    /// Benign image for alteration attacks (PPM).
    #[arg(long)]
    background: Option<PathBuf>,
    /// Class of a generated benign exemplar when no background is given.
    #[arg(long)]
    source: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Debug, Args)]
struct EmulateArgs {
    /// Projector pattern (PPM), centered on the background.
    #[arg(long)]
    pattern: PathBuf,
    /// Benign image (PPM); black when omitted.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    distance: f64,
    #[arg(long)]
    channel: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per-pixel")]
    exposure: ExposureArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExposureArg {
    PerPixel,
    GlobalMax,
    GlobalMean,
}

#[derive(Debug, Default, Args)]
struct GeometryArgs {
    /// Print the ghost position of `--a` about `--oi` for ratio `--r`.
    #[arg(long)]
    ghost: bool,
    /// Print the grid side usable at `--distance`.
    #[arg(long)]
    resolution: bool,
    /// Image center `x,y`.
    #[arg(long, value_parser = parse_point)]
    oi: Option<[f64; 2]>,
    /// Light-source position `x,y`.
    #[arg(long, value_parser = parse_point)]
    a: Option<[f64; 2]>,
    /// Ghost ratio.
    #[arg(long, allow_negative_numbers = true)]
    r: Option<f64>,
    #[arg(long)]
    distance: Option<f64>,
    /// Use the optics formula instead of the published table.
    #[arg(long)]
    formula: bool,
    /// Further geometry options, parsed like the ones above.
    #[arg(last = true)]
    rest: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(name = "geometry", no_binary_name = true)]
struct GeometryRest {
    #[command(flatten)]
    args: GeometryArgs,
}

fn parse_point(s: &str) -> std::result::Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got '{s}'"));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}"));
    Ok([num(parts[0])?, num(parts[1])?])
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&text, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable value")
}

fn channel_params(path: Option<&Path>) -> Result<ChannelParams> {
    let p: ChannelParams = match path {
        Some(p) => read_json(p)?,
        None => ChannelParams::default(),
    };
    p.validate()?;
    Ok(p)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker threads: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(&cli, out)) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<()> {
    let say = |out: &mut (dyn Write + Send), line: String| {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
    };
    let dir = &cli.out_dir;
    match &cli.command {
        Command::FitChannel { input } => {
            let mut params = channel_params(cli.config.as_deref())?;
            let fit = fit_illuminance(&read_illuminance_csv(input)?, params.i_max)?;
            fit.apply(&mut params);
            let path = write_text(dir, "channel.json", &to_json(&params))?;
            say(
                out,
                format!(
                    "a={} b={} c_t={} c_d={} rmse={} -> {}",
                    fit.a,
                    fit.b,
                    fit.c_t,
                    fit.c_d,
                    fit.rmse,
                    path.display()
                ),
            )
        }
        Command::FitColor { input } => {
            let mut params = channel_params(cli.config.as_deref())?;
            let pairs = color_samples_from_observations(&read_color_csv(input)?, &params)?;
            params.color_matrix = fit_color_matrix(&pairs)?;
            let path = write_text(dir, "channel.json", &to_json(&params))?;
            say(out, format!("fitted color matrix from {} samples -> {}", pairs.len(), path.display()))
        }
        Command::GenDataset(args) => {
            let cfg = dataset_config(cli, args)?;
            let ds = cfg.generate()?;
            let target = dir.join("dataset");
            export_dataset(&ds, &target)?;
            say(out, format!("wrote {} images to {}", ds.len(), target.display()))
        }
        Command::Train(args) => {
            let mut cfg: TrainConfig = match &cli.config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let ds = dataset_config(cli, args)?.generate()?;
            let (model, report) = train(&cfg, &ds)?;
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("model.json");
            model.save(&path)?;
            write_text(dir, "train_report.json", &to_json(&report))?;
            say(
                out,
                format!(
                    "train accuracy {:.4}, test accuracy {} -> {}",
                    report.train_accuracy,
                    report.test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
                    path.display()
                ),
            )
        }
        Command::Attack(args) => attack(cli, args, out),
        Command::Emulate(args) => {
            let params = channel_params(args.channel.as_deref().or(cli.config.as_deref()))?.at_distance(args.distance);
            let pattern = read_ppm(&args.pattern)?;
            let background = match &args.background {
                Some(p) => read_ppm(p)?,
                None => ImageTensor::zeros(pattern.width(), pattern.height()),
            };
            if pattern.width() > background.width() || pattern.height() > background.height() {
                return Err(Error::Config("pattern is larger than the background".into()));
            }
            let placement = Placement {
                x: (background.width() - pattern.width()) / 2,
                y: (background.height() - pattern.height()) / 2,
                width: pattern.width(),
                height: pattern.height(),
                rows: 1,
                cols: 1,
            };
            let exposure = match args.exposure {
                ExposureArg::PerPixel => ExposureMode::PerPixel,
                ExposureArg::GlobalMax => ExposureMode::GlobalMax,
                ExposureArg::GlobalMean => ExposureMode::GlobalMean,
            };
            let y = emulate(Some(&pattern), &background, &placement, &params, exposure, true)?;
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("perceived.ppm");
            write_ppm(&y, &path)?;
            say(out, format!("{} -> {}", y.checksum(), path.display()))
        }
        Command::Evaluate { plot_data } => {
            let mut cfg = match &cli.config {
                Some(p) => EvalConfig::load(p)?,
                None => EvalConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.out_dir = Some(dir.clone());
            let report = run_eval(&cfg)?;
            report.write(dir, *plot_data)?;
            for r in &report.results {
                say(
                    out,
                    format!(
                        "d={} side={} success={}/{} rate={:.4}",
                        r.distance, r.side, r.successes, r.attempts, r.success_rate
                    ),
                )?;
            }
            Ok(())
        }
        Command::Geometry(args) => geometry(args, out),
    }
}

fn dataset_config(cli: &Cli, args: &DatasetArgs) -> Result<DatasetConfig> {
    let mut cfg = DatasetConfig::default();
    if let Some(n) = args.n_per_class {
        cfg.n_per_class = n;
    }
    if let Some(w) = args.width {
        cfg.width = w;
    }
    if let Some(h) = args.height {
        cfg.height = h;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn attack(cli: &Cli, args: &AttackArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let mut cfg: AttackConfig = match &cli.config {
        Some(p) => read_json(p)?,
        None => AttackConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Creation => AttackMode::Creation,
            ModeArg::Alteration => AttackMode::Alteration,
        };
    }
    if let Some(t) = args.target {
        cfg.target = t;
    }
    if let Some(v) = args.kappa {
        cfg.kappa = v;
    }
    if let Some(v) = args.c {
        cfg.c = v;
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.max_iters {
        cfg.adam.max_iters = v;
    }
    cfg.validate()?;
    let model = match &args.model {
        Some(p) => Classifier::load(p)?,
        None => train(&TrainConfig::default(), &DatasetConfig::default().generate()?)?.0,
    };
    let params = channel_params(args.channel.as_deref())?.at_distance(args.distance);
    let shape = model.input_shape();
    let background = match (&args.background, args.source) {
        (Some(p), _) => read_ppm(p)?,
        (None, Some(class)) => {
            let pool = gen_dataset(cfg.seed, 1, shape.width, shape.height);
            pool.images
                .into_iter()
                .zip(pool.labels)
                .find(|(_, l)| *l == class)
                .map(|(img, _)| img)
                .ok_or_else(|| Error::Config(format!("no exemplar for class {class}")))?
        }
        (None, None) => ImageTensor::zeros(shape.width, shape.height),
    };
    if cfg.mode == AttackMode::Alteration && args.background.is_none() && args.source.is_none() {
        return Err(Error::Config("alteration needs --background or --source".into()));
    }
    let side = match args.side {
        Some(s) => s,
        None => resolution_schedule(args.distance, ScheduleMode::Table, &ProjectorOptics::default())?,
    }
    .min(shape.width)
    .min(shape.height);
    let placement = Placement::centered(shape.width, shape.height, side)?;
    let report = solve_attack(&model, &params, &placement, &background, &cfg)?;

    let problem = crate::attack::AttackProblem::new(&model, &params, placement, &background, &cfg)?;
    let perceived = problem.perceive(&report.pattern, &mut problem.eval_stream(0))?;
    let mut pattern_full = ImageTensor::zeros(shape.width, shape.height);
    let means = report.pattern.render_means(placement.width, placement.height)?;
    for y in 0..placement.height {
        for x in 0..placement.width {
            pattern_full.set_pixel(placement.x + x, placement.y + y, means.pixel(x, y));
        }
    }
    write_text(&cli.out_dir, "report.json", &report.to_json())?;
    report.write_trace_csv(&cli.out_dir.join("trace.csv"))?;
    write_text(&cli.out_dir, "mu.json", &to_json(&report.pattern))?;
    write_ppm(&pattern_full, &cli.out_dir.join("pattern.ppm"))?;
    write_ppm(problem_background(&background, cfg.mode).as_ref(), &cli.out_dir.join("background.ppm"))?;
    write_ppm(&perceived, &cli.out_dir.join("perceived.ppm"))?;
    writeln!(
        out,
        "target={} predicted={} success={} gap={:.4} iterations={}",
        report.target,
        report.predicted,
        report.success,
        report.logits_gap,
        report.trace.len()
    )
    .map_err(|e| Error::io("<stdout>", e))
}

fn problem_background(x: &ImageTensor, mode: AttackMode) -> std::borrow::Cow<'_, ImageTensor> {
    match mode {
        AttackMode::Creation => std::borrow::Cow::Owned(ImageTensor::zeros(x.width(), x.height())),
        AttackMode::Alteration => std::borrow::Cow::Borrowed(x),
    }
}

fn geometry(args: &GeometryArgs, out: &mut (dyn Write + Send)) -> Result<()> {
    let extra = if args.rest.is_empty() {
        GeometryArgs::default()
    } else {
        GeometryRest::try_parse_from(&args.rest)
            .map_err(|e| Error::Config(e.render().to_string()))?
            .args
    };
    let ghost = args.ghost || extra.ghost;
    let resolution = args.resolution || extra.resolution;
    let oi = extra.oi.or(args.oi);
    let a = extra.a.or(args.a);
    let r = extra.r.or(args.r);
    let distance = extra.distance.or(args.distance);
    let formula = args.formula || extra.formula;
    if !ghost && !resolution {
        return Err(Error::Config("geometry needs --ghost or --resolution".into()));
    }
    let mut say = |line: String| writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e));
    if ghost {
        let (Some(oi), Some(a), Some(r)) = (oi, a, r) else {
            return Err(Error::Config("--ghost needs --oi, --a and --r".into()));
        };
        let g = ghost_about(oi, r, a)?;
        say(format!("{},{}", g[0], g[1]))?;
    }
    if resolution {
        let d = distance.ok_or_else(|| Error::Config("--resolution needs --distance".into()))?;
        let optics = ProjectorOptics::default();
        let mode = if formula { ScheduleMode::Formula } else { ScheduleMode::Table };
        let side = resolution_schedule(d, mode, &optics)?;
        say(format!("side={side} pixels={}", ghost_resolution(&optics, d)?))?;
    }
    Ok(())
}
