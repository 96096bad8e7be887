use super::ppm::write_ppm;
use crate::attack::{AttackConfig, AttackMode, AttackProblem, solve_attack};
use crate::channel::{emulate, ChannelParams, Placement};
use crate::classifier::{gen_dataset, train, Classifier, Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::geometry::{resolution_schedule, ProjectorOptics, ScheduleMode};
use crate::image::ImageTensor;
use crate::numkit::RngStream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// What the attacker knows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Awareness {
    /// Channel only: the target exemplar is downsampled and projected as is.
    CameraAware,
    /// Channel and classifier: patterns come from [`solve_attack`].
    #[default]
    SystemAware,
}

/// Synthetic dataset parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            width: 32,
            height: 32,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config("dataset images must be at least 16x16".into()));
        }
        if self.n_per_class == 0 {
            return Err(Error::Config("n_per_class must be positive".into()));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        Ok(gen_dataset(self.seed, self.n_per_class, self.width, self.height))
    }
}

/// Evaluation sweep settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Projector–camera distances in meters.
    pub distances: Vec<f64>,
    pub schedule: ScheduleMode,
    pub optics: ProjectorOptics,
    /// Samples `k` per (source, target) cell.
    pub samples_per_cell: usize,
    pub awareness: Awareness,
    pub mode: AttackMode,
    /// Restricts the evaluated classes; all classes when absent.
    pub classes: Option<Vec<usize>>,
    /// Trained model; one is trained from `dataset`/`train` when absent.
    pub model: Option<PathBuf>,
    /// Channel parameters JSON; defaults when absent.
    pub channel: Option<PathBuf>,
    /// Used when `channel` is absent.
    pub channel_params: ChannelParams,
    pub seed: u64,
    /// Where partial results go on abort. Not echoed into reports, so the
    /// same sweep written to two places stays byte-identical.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    /// Attack settings; `target`, `mode` and `seed` are set per cell.
    pub attack: AttackConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            distances: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            schedule: ScheduleMode::Table,
            optics: ProjectorOptics::default(),
            samples_per_cell: 5,
            awareness: Awareness::SystemAware,
            mode: AttackMode::Creation,
            classes: None,
            model: None,
            channel: None,
            channel_params: ChannelParams::default(),
            seed: 0,
            out_dir: None,
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            attack: AttackConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.distances.is_empty() || self.distances.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Config("distances must be a non-empty list of positive numbers".into()));
        }
        if self.samples_per_cell == 0 {
            return Err(Error::Config("samples_per_cell must be at least 1".into()));
        }
        self.optics.validate()?;
        self.dataset.validate()?;
        self.train.validate()?;
        self.attack.validate()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::json(text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn load_channel(&self) -> Result<ChannelParams> {
        let params = match &self.channel {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::json(&text, e))?
            }
            None => self.channel_params.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    /// Loads the configured model or trains one from the dataset settings.
    pub fn load_model(&self) -> Result<Classifier> {
        match &self.model {
            Some(path) => Classifier::load(path),
            None => Ok(train(&self.train, &self.dataset.generate()?)?.0),
        }
    }
}

/// Decides what class an evaluation image is seen as.
pub trait SuccessJudge: Sync {
    /// Predicted class for `image`; `target` is only context.
    fn judge(&self, image: &ImageTensor, target: usize) -> Result<usize>;
}

impl SuccessJudge for Classifier {
    fn judge(&self, image: &ImageTensor, _target: usize) -> Result<usize> {
        self.predict(image)
    }
}

/// Results at one distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub distance: f64,
    /// Pattern side in blocks.
    pub side: usize,
    pub successes: usize,
    pub attempts: usize,
    /// `successes / attempts`.
    pub success_rate: f64,
    /// `successes / (k·m²)`, the unskipped-grid normalization.
    pub km2_rate: f64,
    /// Source rows (one "blank" row for creation) by target columns:
    /// successful samples per cell.
    pub counts: Vec<Vec<usize>>,
    /// `counts / k`, with `null` on skipped diagonal cells.
    pub matrix: Vec<Vec<Option<f64>>>,
}

/// Full sweep output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub complete: bool,
    pub classes: Vec<usize>,
    pub class_names: Vec<String>,
    /// Row labels of every matrix.
    pub sources: Vec<String>,
    pub results: Vec<DistanceResult>,
    pub config: EvalConfig,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// `distance,side,source,target,successes,samples,fraction` rows.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("distance,side,source,target,successes,samples,fraction\n");
        let k = self.config.samples_per_cell;
        for r in &self.results {
            for (si, row) in r.counts.iter().enumerate() {
                for (ti, &n) in row.iter().enumerate() {
                    if r.matrix[si][ti].is_none() {
                        continue;
                    }
                    out += &format!(
                        "{},{},{},{},{n},{k},{}\n",
                        r.distance,
                        r.side,
                        self.sources[si],
                        self.class_names[ti],
                        n as f64 / k as f64
                    );
                }
            }
        }
        out
    }

    /// `distance,side,success_rate` series for plotting.
    pub fn plot_data_csv(&self) -> String {
        let mut out = String::from("distance,side,success_rate\n");
        for r in &self.results {
            out += &format!("{},{},{}\n", r.distance, r.side, r.success_rate);
        }
        out
    }

    pub fn write(&self, dir: &Path, plot_data: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        put("report.json", self.to_json())?;
        put("matrix.csv", self.matrix_csv())?;
        if plot_data {
            put("plot_data.csv", self.plot_data_csv())?;
        }
        Ok(())
    }
}

/// Block-mean pooling to `side × side` blocks followed by block-constant
/// upsampling back to the input size.
///
/// When `side` does not divide the image, block edges fall at
/// `floor(i·w/side)`; `side` larger than the image is clamped to it.
pub fn downsample(image: &ImageTensor, side: usize) -> ImageTensor {
    let (w, h) = (image.width(), image.height());
    let (sx, sy) = (side.clamp(1, w.max(1)), side.clamp(1, h.max(1)));
    let mut out = ImageTensor::zeros(w, h);
    for by in 0..sy {
        let (y0, y1) = (by * h / sy, (by + 1) * h / sy);
        for bx in 0..sx {
            let (x0, x1) = (bx * w / sx, (bx + 1) * w / sx);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            let mut mean = [0.0; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = image.pixel(x, y);
                    for c in 0..3 {
                        mean[c] += p[c];
                    }
                }
            }
            let mean = mean.map(|s| s / n);
            for y in y0..y1 {
                for x in x0..x1 {
                    out.set_pixel(x, y, mean);
                }
            }
        }
    }
    out
}

fn crop(image: &ImageTensor, p: &Placement) -> ImageTensor {
    let mut out = ImageTensor::zeros(p.width, p.height);
    for y in 0..p.height {
        for x in 0..p.width {
            out.set_pixel(x, y, image.pixel(p.x + x, p.y + y));
        }
    }
    out
}

/// One (source, target) cell at one distance.
struct Cell {
    source: Option<usize>,
    target: usize,
}

struct Context<'a> {
    config: &'a EvalConfig,
    model: &'a Classifier,
    judge: &'a dyn SuccessJudge,
    exemplars: &'a [Vec<ImageTensor>],
    width: usize,
    height: usize,
}

const CELL_STREAM: u64 = 0xCE11;

impl Context<'_> {
    fn cell_seed(&self, d_index: usize, cell: &Cell, sample: usize) -> u64 {
        let src = cell.source.map_or(0, |s| s + 1) as u64;
        RngStream::new(self.config.seed, CELL_STREAM)
            .derive(d_index as u64)
            .derive(src)
            .derive(cell.target as u64)
            .derive(sample as u64)
            .next_u64()
    }

    fn background(&self, cell: &Cell, sample: usize) -> ImageTensor {
        match cell.source {
            Some(s) => self.exemplars[s][sample].clone(),
            None => ImageTensor::zeros(self.width, self.height),
        }
    }

    /// Number of samples in which the cell's attack succeeded.
    fn run_cell(&self, d_index: usize, params: &ChannelParams, placement: &Placement, cell: &Cell) -> Result<usize> {
        let k = self.config.samples_per_cell;
        let mode = self.config.mode;
        let mut hits = 0;
        match self.config.awareness {
            Awareness::CameraAware => {
                for s in 0..k {
                    let exemplar = &self.exemplars[cell.target][s];
                    let pattern = downsample(&crop(exemplar, placement), placement.rows);
                    let y = emulate(
                        Some(&pattern),
                        &self.background(cell, s),
                        placement,
                        params,
                        self.config.attack.exposure,
                        true,
                    )?;
                    hits += (self.judge.judge(&y, cell.target)? == cell.target) as usize;
                }
            }
            Awareness::SystemAware if mode == AttackMode::Creation => {
                // Every creation sample shares the black background, so one
                // solve serves the cell and each sample is a fresh noisy
                // projection of the solved pattern.
                let cfg = AttackConfig {
                    target: cell.target,
                    mode,
                    seed: self.cell_seed(d_index, cell, 0),
                    ..self.config.attack.clone()
                };
                let black = ImageTensor::zeros(self.width, self.height);
                let report = solve_attack(self.model, params, placement, &black, &cfg)?;
                let problem = AttackProblem::new(self.model, params, *placement, &black, &cfg)?;
                for s in 0..k {
                    let y = problem.perceive(&report.pattern, &mut problem.eval_stream(s as u64))?;
                    hits += (self.judge.judge(&y, cell.target)? == cell.target) as usize;
                }
            }
            Awareness::SystemAware => {
                for s in 0..k {
                    let cfg = AttackConfig {
                        target: cell.target,
                        mode,
                        seed: self.cell_seed(d_index, cell, s),
                        ..self.config.attack.clone()
                    };
                    let x = self.background(cell, s);
                    let report = solve_attack(self.model, params, placement, &x, &cfg)?;
                    let problem = AttackProblem::new(self.model, params, *placement, &x, &cfg)?;
                    let y = problem.perceive(&report.pattern, &mut problem.eval_stream(0))?;
                    hits += (self.judge.judge(&y, cell.target)? == cell.target) as usize;
                }
            }
        }
        Ok(hits)
    }
}

/// Runs the sweep, judging success with the model itself.
pub fn run_eval(config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let model = config.load_model()?;
    run_eval_with(config, &model, &model)
}

/// Runs the sweep with an explicit model (for gradients) and judge.
///
/// When `config.out_dir` is set and a cell fails, the results gathered so
/// far are written there with `complete: false` before the error returns.
pub fn run_eval_with(config: &EvalConfig, model: &Classifier, judge: &dyn SuccessJudge) -> Result<EvalReport> {
    config.validate()?;
    let base = config.load_channel()?;
    let m = model.num_classes();
    let classes = config.classes.clone().unwrap_or_else(|| (0..m).collect());
    if classes.is_empty() || classes.iter().any(|&c| c >= m) {
        return Err(Error::Config(format!("classes must be a non-empty subset of 0..{m}")));
    }
    let shape = model.input_shape();
    let (width, height) = (shape.width, shape.height);

    // Exemplars come from a fresh draw of the generator, never seen in
    // training.
    let exemplar_seed = RngStream::new(config.seed, 0xE8E).next_u64();
    let pool = gen_dataset(exemplar_seed, config.samples_per_cell, width, height);
    let mut exemplars = vec![Vec::new(); m];
    for (img, &l) in pool.images.iter().zip(&pool.labels) {
        if l < m {
            exemplars[l].push(img.clone());
        }
    }
    if exemplars.iter().any(|e| e.len() < config.samples_per_cell) {
        return Err(Error::Config(format!(
            "model has {m} classes but the exemplar generator provides {}",
            pool.num_classes()
        )));
    }

    let sources: Vec<Option<usize>> = match config.mode {
        AttackMode::Creation => vec![None],
        AttackMode::Alteration => classes.iter().map(|&c| Some(c)).collect(),
    };
    let class_names: Vec<String> = classes.iter().map(|&c| model.class_names()[c].clone()).collect();
    let mut report = EvalReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        complete: false,
        classes: classes.clone(),
        class_names,
        sources: sources
            .iter()
            .map(|s| s.map_or("blank".to_string(), |c| model.class_names()[c].clone()))
            .collect(),
        results: Vec::new(),
        config: config.clone(),
    };
    let ctx = Context {
        config,
        model,
        judge,
        exemplars: &exemplars,
        width,
        height,
    };
    let k = config.samples_per_cell;

    for (di, &d) in config.distances.iter().enumerate() {
        let outcome = (|| -> Result<DistanceResult> {
            let side = resolution_schedule(d, config.schedule, &config.optics)?.min(width).min(height);
            let placement = Placement::centered(width, height, side)?;
            let params = base.at_distance(d);
            let cells: Vec<(usize, usize, Cell)> = sources
                .iter()
                .enumerate()
                .flat_map(|(si, &source)| {
                    classes
                        .iter()
                        .enumerate()
                        .filter(move |(_, &t)| source != Some(t))
                        .map(move |(ti, &target)| (si, ti, Cell { source, target }))
                })
                .collect();
            let hits: Result<Vec<usize>> = cells
                .par_iter()
                .map(|(_, _, cell)| ctx.run_cell(di, &params, &placement, cell))
                .collect();
            let hits = hits?;
            let mut counts = vec![vec![0; classes.len()]; sources.len()];
            let mut matrix = vec![vec![None; classes.len()]; sources.len()];
            for ((si, ti, _), &n) in cells.iter().zip(&hits) {
                counts[*si][*ti] = n;
                matrix[*si][*ti] = Some(n as f64 / k as f64);
            }
            let successes: usize = hits.iter().sum();
            let attempts = cells.len() * k;
            Ok(DistanceResult {
                distance: d,
                side,
                successes,
                attempts,
                success_rate: successes as f64 / attempts as f64,
                km2_rate: successes as f64 / (k * classes.len() * classes.len()) as f64,
                counts,
                matrix,
            })
        })();
        match outcome {
            Ok(r) => report.results.push(r),
            Err(e) => {
                if let Some(dir) = &config.out_dir {
                    // Best effort: the original error matters more.
                    let _ = report.write(dir, false);
                }
                return Err(e);
            }
        }
    }
    report.complete = true;
    Ok(report)
}

/// Writes `dataset` as `NNNNN_<class>.ppm` files plus `labels.csv`.
pub fn export_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut labels = String::from("file,label,class\n");
    for (i, (img, &l)) in dataset.images.iter().zip(&dataset.labels).enumerate() {
        let name = format!("{i:05}_{}.ppm", dataset.class_names[l]);
        write_ppm(img, &dir.join(&name))?;
        labels += &format!("{name},{l},{}\n", dataset.class_names[l]);
    }
    let path = dir.join("labels.csv");
    std::fs::write(&path, labels).map_err(|e| Error::io(path, e))
}
