//! Run configuration: line-based `key = value` files with CLI overrides.
//! Every run writes its resolved configuration to `run.cfg` alongside the
//! outputs, so a run is reproducible from its output directory alone.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use tbnet::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cnn3,
    Unet,
    TlHead,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cnn3" => Ok(ModelKind::Cnn3),
            "unet" => Ok(ModelKind::Unet),
            "tlhead" => Ok(ModelKind::TlHead),
            other => Err(Error::InvalidArgument(format!(
                "unknown model `{other}` (expected cnn3, unet, or tlhead)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Cnn3 => "cnn3",
            ModelKind::Unet => "unet",
            ModelKind::TlHead => "tlhead",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    None,
    Balanced,
}

impl WeightMode {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WeightMode::None),
            "balanced" => Ok(WeightMode::Balanced),
            other => Err(Error::InvalidArgument(format!(
                "unknown class-weights mode `{other}` (expected none or balanced)"
            ))),
        }
    }
}

/// Shared flags for `train` and `crossval`. Unset flags fall back to the
/// `--config` file, then to per-model defaults.
#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Manifest CSV of the dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// cnn3 | unet | tlhead
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` config file; CLI flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Square input size the images are resized to.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of folds (crossval only).
    #[arg(long)]
    pub k: Option<usize>,
    /// none | balanced
    #[arg(long = "class-weights")]
    pub class_weights: Option<String>,
    /// Enable the reduce-on-plateau learning-rate schedule.
    #[arg(long)]
    pub plateau: bool,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelKind,
    pub size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub k: usize,
    pub seed: u64,
    pub class_weights: WeightMode,
    pub plateau: bool,
    pub data: PathBuf,
    pub out: PathBuf,
}

impl RunConfig {
    /// Precedence: CLI flag, then config file, then the model's defaults
    /// (unet trains 14 epochs at batch 10 with the plateau schedule;
    /// cnn3 and tlhead train 30 epochs at batch 32).
    pub fn resolve(args: &TrainArgs) -> Result<RunConfig> {
        let file = match &args.config {
            Some(path) => parse_config_file(path)?,
            None => Vec::new(),
        };
        let from_file = |key: &str| -> Option<&str> {
            file.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
        };
        for (key, _) in &file {
            const KNOWN: [&str; 11] = [
                "model",
                "size",
                "epochs",
                "batch_size",
                "lr",
                "k",
                "seed",
                "class_weights",
                "plateau",
                "data",
                "out",
            ];
            if !KNOWN.contains(&key.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "unknown config key `{key}`"
                )));
            }
        }

        let model_name = args
            .model
            .as_deref()
            .or_else(|| from_file("model"))
            .unwrap_or("cnn3");
        let model = ModelKind::parse(model_name)?;
        let (default_epochs, default_batch, default_plateau) = match model {
            ModelKind::Unet => (14, 10, true),
            _ => (30, 32, false),
        };

        let parse_num = |key: &str, v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("config {key}: bad value `{v}`")))
        };

        let size = match (args.size, from_file("size")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_num("size", v)? as usize,
            (None, None) => 64,
        };
        let epochs = match (args.epochs, from_file("epochs")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_num("epochs", v)? as usize,
            (None, None) => default_epochs,
        };
        let batch_size = match (args.batch, from_file("batch_size")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_num("batch_size", v)? as usize,
            (None, None) => default_batch,
        };
        let lr = match (args.lr, from_file("lr")) {
            (Some(v), _) => v,
            (None, Some(v)) => v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("config lr: bad value `{v}`")))?,
            (None, None) => 1e-3,
        };
        let k = match (args.k, from_file("k")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_num("k", v)? as usize,
            (None, None) => 5,
        };
        let seed = match (args.seed, from_file("seed")) {
            (Some(v), _) => v,
            (None, Some(v)) => parse_num("seed", v)?,
            (None, None) => 42,
        };
        let class_weights = match (args.class_weights.as_deref(), from_file("class_weights")) {
            (Some(v), _) => WeightMode::parse(v)?,
            (None, Some(v)) => WeightMode::parse(v)?,
            (None, None) => WeightMode::None,
        };
        let plateau = match (args.plateau, from_file("plateau")) {
            (true, _) => true,
            (false, Some(v)) => v == "true",
            (false, None) => default_plateau,
        };
        let data = args
            .data
            .clone()
            .or_else(|| from_file("data").map(PathBuf::from))
            .ok_or_else(|| Error::InvalidArgument("--data is required".into()))?;
        let out = args
            .out
            .clone()
            .or_else(|| from_file("out").map(PathBuf::from))
            .ok_or_else(|| Error::InvalidArgument("--out is required".into()))?;

        let config = RunConfig {
            model,
            size,
            epochs,
            batch_size,
            lr,
            k,
            seed,
            class_weights,
            plateau,
            data,
            out,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.size < 8 {
            return Err(Error::InvalidArgument(format!(
                "input size must be at least 8, got {}",
                self.size
            )));
        }
        Ok(())
    }

    /// The resolved `run.cfg` contents, fixed key order.
    pub fn to_text(&self) -> String {
        format!(
            "model = {}\nsize = {}\nepochs = {}\nbatch_size = {}\nlr = {}\nk = {}\nseed = {}\nclass_weights = {}\nplateau = {}\ndata = {}\nout = {}\n",
            self.model,
            self.size,
            self.epochs,
            self.batch_size,
            self.lr,
            self.k,
            self.seed,
            match self.class_weights {
                WeightMode::None => "none",
                WeightMode::Balanced => "balanced",
            },
            self.plateau,
            self.data.display(),
            self.out.display(),
        )
    }

    pub fn write_resolved(&self) -> Result<()> {
        let path = self.out.join("run.cfg");
        std::fs::write(&path, self.to_text()).map_err(|e| Error::Io {
            path,
            source: e,
        })
    }
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped.
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidArgument(format!(
                "{}:{}: expected `key = value`, found `{raw}`",
                path.display(),
                i + 1
            )));
        };
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}
