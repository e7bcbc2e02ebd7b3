use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deepmusic::bench::{self, ExperimentConfig, Method, RmseTable};
use deepmusic::datagen::{generate_dataset, load_dataset, save_dataset, split_train_val};
use deepmusic::estimator::{load_model, save_model, train_model, DeepMusicModel};

/// Direction-of-arrival estimation with per-region convolutional networks.
#[derive(Parser)]
#[command(name = "deepmusic", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled training corpus.
    GenData(Common),
    /// Train one network per angular region and write a model bundle.
    Train(Common),
    /// Score a model bundle against spectral MUSIC across the SNR grid.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Also write predicted and reference spectra (CSV) to this path.
        #[arg(long, value_name = "PATH")]
        emit_spectrum: Option<PathBuf>,
    },
    /// RMSE against SNR for the configured methods, with the CRB.
    BenchSnr(Common),
    /// RMSE against source correlation.
    BenchCorr(Common),
    /// Covariance-to-DOA latency of each method.
    BenchTime(Common),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(short, long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Comma-separated methods (same as --set methods=...).
    #[arg(long)]
    methods: Option<String>,
    /// Random seed (same as --set seed=...).
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset path.
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Model bundle path.
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    /// Output path; CSV goes to stdout when absent.
    #[arg(short, long, value_name = "PATH")]
    output: Option<PathBuf>,
}

impl Common {
    /// Defaults, then the file, then `DEEPMUSIC_*` variables, then flags.
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_env(std::env::vars())?;
        cfg.apply_overrides(&self.overrides)?;
        if let Some(m) = &self.methods {
            cfg.set("methods", m)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = &self.dataset {
            cfg.dataset = Some(p.clone());
        }
        if let Some(p) = &self.model {
            cfg.model = Some(p.clone());
        }
        if let Some(p) = &self.output {
            cfg.output = Some(p.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    match p {
        Some(p) => Ok(p),
        None => bail!("no {key} path given (use --{key} or set {key} = ...)"),
    }
}

fn open_model(cfg: &ExperimentConfig) -> Result<DeepMusicModel> {
    let path = required(&cfg.model, "model")?;
    load_model(path).with_context(|| format!("cannot load model {}", path.display()))
}

fn model_if_needed(cfg: &ExperimentConfig) -> Result<Option<DeepMusicModel>> {
    if cfg.methods.contains(&Method::DeepMusic) {
        Ok(Some(open_model(cfg)?))
    } else {
        Ok(None)
    }
}

fn write_table(table: &RmseTable, output: &Option<PathBuf>) -> Result<()> {
    match output {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let cfg = common.load()?;
            let out = required(&cfg.output, "output").or_else(|_| required(&cfg.dataset, "dataset"))?;
            let d = generate_dataset(&cfg.dataset_config()?, &cfg.array()?)?;
            save_dataset(&d, out).with_context(|| format!("cannot write {}", out.display()))?;
            eprintln!("wrote J = {} samples to {}", d.len(), out.display());
        }
        Command::Train(common) => {
            let cfg = common.load()?;
            let data_path = required(&cfg.dataset, "dataset")?;
            let out = required(&cfg.output, "output").or_else(|_| required(&cfg.model, "model"))?;
            let d = load_dataset(data_path).with_context(|| format!("cannot load dataset {}", data_path.display()))?;
            let (tr, va) = split_train_val(&d, 1.0 - cfg.val_fraction, cfg.seed)?;
            let arch = deepmusic::nn::ArchConfig { input_side: d.header.num_elements, region_len: d.header.region_len, ..cfg.arch_config()? };
            let model = train_model(&tr, &va, cfg.array()?, &arch, &cfg.train_config())?;
            save_model(&model, out).with_context(|| format!("cannot write {}", out.display()))?;
            for (q, log) in model.logs.iter().enumerate() {
                if let Some(best) = log.best() {
                    eprintln!(
                        "region {q}: {} epochs, best validation loss {:.4e} at epoch {}",
                        log.records.len(),
                        best.val_loss,
                        best.epoch
                    );
                }
            }
        }
        Command::Eval { common, emit_spectrum } => {
            let cfg = common.load()?;
            let model = open_model(&cfg)?;
            let table = bench::run_eval(&cfg, &model)?;
            write_table(&table, &cfg.output)?;
            if let Some(path) = emit_spectrum {
                let dumps = bench::emit_spectra(&cfg, &model)?;
                let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
                bench::write_spectra_csv(&dumps, BufWriter::new(f))?;
            }
        }
        Command::BenchSnr(common) => {
            let cfg = common.load()?;
            let model = model_if_needed(&cfg)?;
            write_table(&bench::run_rmse_vs_snr(&cfg, &cfg.methods, model.as_ref())?, &cfg.output)?;
        }
        Command::BenchCorr(common) => {
            let cfg = common.load()?;
            let model = model_if_needed(&cfg)?;
            write_table(&bench::run_correlation_sweep(&cfg, &cfg.methods, model.as_ref())?, &cfg.output)?;
        }
        Command::BenchTime(common) => {
            let cfg = common.load()?;
            let model = model_if_needed(&cfg)?;
            let timings = bench::time_methods(&cfg, &cfg.methods, model.as_ref())?;
            write_table(&RmseTable::from(timings.as_slice()), &cfg.output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
