use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::Method;
use crate::array::ArrayConfig;
use crate::datagen::DatasetConfig;
use crate::error::{Error, Result};
use crate::grid::{make_grid, partition_grid, AngularGrid, Partition};
use crate::nn::{ArchConfig, TrainConfig};

/// Prefix of environment variables that override config keys, e.g.
/// `DEEPMUSIC_TRIALS=20`.
pub const ENV_PREFIX: &str = "DEEPMUSIC_";

/// How evaluation trials place their sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoaMode {
    /// One source in each of `sources` random regions, as in training.
    Random,
    /// `base_doas` all shifted by one shared offset uniform in ±`jitter_deg`.
    Jitter,
}

/// Every knob of data generation, training and the benchmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub num_elements: usize,
    pub spacing: f64,
    pub grid_start: f64,
    pub grid_final: f64,
    pub grid_points: usize,
    pub regions: usize,
    /// Sources per evaluation trial.
    pub sources: usize,
    /// Sources per training DOA set.
    pub train_sources: usize,
    /// Evaluation snapshots.
    pub snapshots: usize,
    pub train_snapshots: usize,
    pub snr_train_db: Vec<f64>,
    pub j_alpha: usize,
    pub j_beta: usize,
    pub seed: u64,
    pub snr_grid_db: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub corr_snr_db: f64,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub doa_mode: DoaMode,
    pub base_doas: Vec<f64>,
    pub jitter_deg: f64,
    pub edge_guard_bins: f64,
    /// Subarray length of forward-backward smoothing; 0 means `M − K`.
    pub smoothing_subarray: usize,
    pub filters: usize,
    pub fc_width: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub lr_drop_factor: f64,
    pub lr_drop_period: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub val_fraction: f64,
    pub timing: bool,
    pub time_reps: usize,
    pub time_warmup: usize,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_elements: 16,
            spacing: 0.5,
            grid_start: -60.0,
            grid_final: 60.0,
            grid_points: 4096,
            regions: 8,
            sources: 2,
            train_sources: 5,
            snapshots: 100,
            train_snapshots: 500,
            snr_train_db: vec![15.0, 20.0, 25.0, 30.0],
            j_alpha: 100,
            j_beta: 100,
            seed: 1,
            snr_grid_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            rho_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            corr_snr_db: 20.0,
            trials: 100,
            methods: vec![Method::DeepMusic, Method::SpectralMusic, Method::RootMusic],
            doa_mode: DoaMode::Random,
            base_doas: vec![-30.0, 20.0],
            jitter_deg: 2.0,
            edge_guard_bins: 2.0,
            smoothing_subarray: 0,
            filters: 256,
            fc_width: 1024,
            dropout: 0.5,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 128,
            lr_drop_factor: 0.5,
            lr_drop_period: 10,
            patience: 3,
            max_epochs: 100,
            val_fraction: 0.2,
            timing: true,
            time_reps: 50,
            time_warmup: 5,
            dataset: None,
            model: None,
            output: None,
        }
    }
}

/// Recognized keys, in documentation order.
pub const KEYS: &[&str] = &[
    "num_elements",
    "spacing",
    "grid_start",
    "grid_final",
    "grid_points",
    "regions",
    "sources",
    "train_sources",
    "snapshots",
    "train_snapshots",
    "snr_train_db",
    "j_alpha",
    "j_beta",
    "seed",
    "snr_grid_db",
    "rho_grid",
    "corr_snr_db",
    "trials",
    "methods",
    "doa_mode",
    "base_doas",
    "jitter_deg",
    "edge_guard_bins",
    "smoothing_subarray",
    "filters",
    "fc_width",
    "dropout",
    "learning_rate",
    "momentum",
    "batch_size",
    "lr_drop_factor",
    "lr_drop_period",
    "patience",
    "max_epochs",
    "val_fraction",
    "timing",
    "time_reps",
    "time_warmup",
    "dataset",
    "model",
    "output",
];

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, format!("cannot parse {v:?}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| scalar(key, s.trim())).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, format!("expected a boolean, got {v:?}"))),
    }
}

fn path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "num_elements" => self.num_elements = scalar(key, v)?,
            "spacing" => self.spacing = scalar(key, v)?,
            "grid_start" => self.grid_start = scalar(key, v)?,
            "grid_final" => self.grid_final = scalar(key, v)?,
            "grid_points" => self.grid_points = scalar(key, v)?,
            "regions" => self.regions = scalar(key, v)?,
            "sources" => self.sources = scalar(key, v)?,
            "train_sources" => self.train_sources = scalar(key, v)?,
            "snapshots" => self.snapshots = scalar(key, v)?,
            "train_snapshots" => self.train_snapshots = scalar(key, v)?,
            "snr_train_db" => self.snr_train_db = list(key, v)?,
            "j_alpha" => self.j_alpha = scalar(key, v)?,
            "j_beta" => self.j_beta = scalar(key, v)?,
            "seed" => self.seed = scalar(key, v)?,
            "snr_grid_db" => self.snr_grid_db = list(key, v)?,
            "rho_grid" => self.rho_grid = list(key, v)?,
            "corr_snr_db" => self.corr_snr_db = scalar(key, v)?,
            "trials" => self.trials = scalar(key, v)?,
            "methods" => {
                self.methods = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e: Error| bad(key, e.to_string())))
                    .collect::<Result<_>>()?
            }
            "doa_mode" => {
                self.doa_mode = match v {
                    "random" => DoaMode::Random,
                    "jitter" => DoaMode::Jitter,
                    _ => return Err(bad(key, format!("expected random or jitter, got {v:?}"))),
                }
            }
            "base_doas" => self.base_doas = list(key, v)?,
            "jitter_deg" => self.jitter_deg = scalar(key, v)?,
            "edge_guard_bins" => self.edge_guard_bins = scalar(key, v)?,
            "smoothing_subarray" => self.smoothing_subarray = scalar(key, v)?,
            "filters" => self.filters = scalar(key, v)?,
            "fc_width" => self.fc_width = scalar(key, v)?,
            "dropout" => self.dropout = scalar(key, v)?,
            "learning_rate" => self.learning_rate = scalar(key, v)?,
            "momentum" => self.momentum = scalar(key, v)?,
            "batch_size" => self.batch_size = scalar(key, v)?,
            "lr_drop_factor" => self.lr_drop_factor = scalar(key, v)?,
            "lr_drop_period" => self.lr_drop_period = scalar(key, v)?,
            "patience" => self.patience = scalar(key, v)?,
            "max_epochs" => self.max_epochs = scalar(key, v)?,
            "val_fraction" => self.val_fraction = scalar(key, v)?,
            "timing" => self.timing = boolean(key, v)?,
            "time_reps" => self.time_reps = scalar(key, v)?,
            "time_warmup" => self.time_warmup = scalar(key, v)?,
            "dataset" => self.dataset = path(v),
            "model" => self.model = path(v),
            "output" => self.output = path(v),
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(line, format!("line {} is not key = value", n + 1)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    /// Applies every `DEEPMUSIC_<KEY>` variable in `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|key| (key.to_ascii_lowercase(), v)))
            .collect();
        found.sort();
        for (key, value) in found {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| bad(o, "override must be key=value"))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(bad(key, msg)) };
        check(self.trials >= 1, "trials", "must be at least 1")?;
        check(!self.snr_grid_db.is_empty(), "snr_grid_db", "must not be empty")?;
        check(!self.snr_train_db.is_empty(), "snr_train_db", "must not be empty")?;
        check(self.rho_grid.iter().all(|r| (0.0..=1.0).contains(r)), "rho_grid", "values must lie in [0, 1]")?;
        check(self.sources >= 1 && self.sources <= self.regions, "sources", "must lie in 1..=regions")?;
        check(self.train_sources >= 1 && self.train_sources <= self.regions, "train_sources", "must lie in 1..=regions")?;
        check(self.sources < self.num_elements, "sources", "must be below num_elements")?;
        check(self.snapshots >= 1, "snapshots", "must be at least 1")?;
        check(self.train_snapshots >= 1, "train_snapshots", "must be at least 1")?;
        check(self.val_fraction > 0.0 && self.val_fraction < 1.0, "val_fraction", "must lie in (0, 1)")?;
        check(self.time_reps >= 1, "time_reps", "must be at least 1")?;
        check(
            self.smoothing_subarray == 0 || (self.smoothing_subarray > self.sources && self.smoothing_subarray <= self.num_elements),
            "smoothing_subarray",
            "must exceed sources and not exceed num_elements",
        )?;
        check(!self.methods.is_empty(), "methods", "must not be empty")?;
        self.array().map_err(|e| bad("num_elements", e.to_string()))?;
        self.partition().map_err(|e| bad("grid_points", e.to_string()))?;
        if self.doa_mode == DoaMode::Jitter {
            check(self.base_doas.len() == self.sources, "base_doas", "needs one angle per source")?;
        }
        Ok(())
    }

    pub fn array(&self) -> Result<ArrayConfig> {
        ArrayConfig::new(self.num_elements, self.spacing)
    }

    pub fn grid(&self) -> Result<AngularGrid> {
        make_grid(self.grid_start, self.grid_final, self.grid_points)
    }

    pub fn partition(&self) -> Result<Partition> {
        partition_grid(self.grid()?, self.regions)
    }

    pub fn smoothing_len(&self) -> usize {
        if self.smoothing_subarray == 0 {
            self.num_elements - self.sources
        } else {
            self.smoothing_subarray
        }
    }

    pub fn dataset_config(&self) -> Result<DatasetConfig> {
        Ok(DatasetConfig {
            j_alpha: self.j_alpha,
            j_beta: self.j_beta,
            snapshots: self.train_snapshots,
            snr_train_db: self.snr_train_db.clone(),
            num_sources: self.train_sources,
            num_regions: self.regions,
            grid: self.grid()?,
            seed: self.seed,
            guard_bins: self.edge_guard_bins,
        })
    }

    pub fn arch_config(&self) -> Result<ArchConfig> {
        let partition = self.partition()?;
        Ok(ArchConfig {
            fc_width: self.fc_width,
            dropout: self.dropout,
            ..ArchConfig::new(self.num_elements, partition.region_len, self.filters)
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            batch_size: self.batch_size,
            lr_drop_factor: self.lr_drop_factor,
            lr_drop_period: self.lr_drop_period,
            patience: self.patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
        }
    }
}
