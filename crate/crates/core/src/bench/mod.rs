//! Monte-Carlo benchmarks: RMSE against SNR and against source
//! correlation, the CRB reference, and latency measurements. Results are
//! plain tables written as CSV.

mod config;
mod table;

pub use config::{DoaMode, ExperimentConfig, ENV_PREFIX, KEYS};
pub use table::{read_csv, RmseRow, RmseTable, CSV_HEADER};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::array::{
    correlated_pair_covariance, sample_covariance, simulate_snapshots_with, snr_to_noise_variance, ArrayConfig,
    CovMatrix, SourceConfig,
};
use crate::datagen::draw_region_doas;
use crate::error::{invalid, Error, Result};
use crate::estimator::DeepMusicModel;
use crate::grid::{AngularGrid, Partition};
use crate::rng;
use crate::subspace::{
    eigendecompose, forward_backward_smooth, music_spectrum, root_music, spectral_peaks, stochastic_crb,
};
use crate::CMatrix;

/// DOA estimators the harness can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    DeepMusic,
    SpectralMusic,
    RootMusic,
    /// Spectral MUSIC on the forward-backward smoothed covariance.
    SpectralMusicFb,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DeepMusic, Method::SpectralMusic, Method::RootMusic, Method::SpectralMusicFb];

    pub fn name(self) -> &'static str {
        match self {
            Method::DeepMusic => "deepmusic",
            Method::SpectralMusic => "spectral_music",
            Method::RootMusic => "root_music",
            Method::SpectralMusicFb => "spectral_music_fb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Sort-and-pair RMSE over all trials and targets, in degrees.
pub fn rmse(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return invalid(format!("{} estimate lists for {} truth lists", estimates.len(), truths.len()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, (e, t)) in estimates.iter().zip(truths).enumerate() {
        if e.len() != t.len() {
            return invalid(format!("trial {i}: {} estimates for {} targets", e.len(), t.len()));
        }
        let mut e = e.clone();
        let mut t = t.clone();
        e.sort_by(f64::total_cmp);
        t.sort_by(f64::total_cmp);
        sum += e.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += t.len();
    }
    if count == 0 {
        return invalid("no targets to score");
    }
    Ok((sum / count as f64).sqrt())
}

/// Runs the configured estimators on one covariance.
pub struct Estimators<'a> {
    pub array: ArrayConfig,
    pub grid: AngularGrid,
    pub smoothing_len: usize,
    pub model: Option<&'a DeepMusicModel>,
}

impl<'a> Estimators<'a> {
    pub fn new(cfg: &ExperimentConfig, model: Option<&'a DeepMusicModel>) -> Result<Self> {
        let array = cfg.array()?;
        if let Some(m) = model {
            if m.array != array {
                return invalid(format!(
                    "model was trained for {} elements at spacing {}, config has {} at {}",
                    m.array.num_elements, m.array.spacing_wavelengths, array.num_elements, array.spacing_wavelengths
                ));
            }
        }
        Ok(Self { array, grid: cfg.grid()?, smoothing_len: cfg.smoothing_len(), model })
    }

    /// Estimates of `k` DOAs, ascending. Root-MUSIC lists that come up short
    /// are padded with the grid centre.
    pub fn estimate(&self, method: Method, r: &CovMatrix, k: usize) -> Result<Vec<f64>> {
        match method {
            Method::SpectralMusic => {
                let basis = eigendecompose(r, k)?;
                Ok(spectral_peaks(&music_spectrum(&basis, &self.grid, &self.array)?, k)?.angles_deg)
            }
            Method::SpectralMusicFb => {
                let smoothed = forward_backward_smooth(r, self.smoothing_len)?;
                let sub = ArrayConfig::new(self.smoothing_len, self.array.spacing_wavelengths)?;
                let basis = eigendecompose(&smoothed, k)?;
                Ok(spectral_peaks(&music_spectrum(&basis, &self.grid, &sub)?, k)?.angles_deg)
            }
            Method::RootMusic => {
                let mut a = root_music(&eigendecompose(r, k)?, &self.array)?.angles_deg;
                let centre = 0.5 * (self.grid.start_deg + self.grid.final_deg);
                a.resize(k, centre);
                a.sort_by(f64::total_cmp);
                Ok(a)
            }
            Method::DeepMusic => {
                let model = self.model.ok_or_else(|| Error::InvalidArgument("deepmusic needs a model bundle".into()))?;
                Ok(model.estimate_doas(r, k)?.angles_deg)
            }
        }
    }
}

/// One Monte-Carlo trial: truths, the CRB variance sum, and per-method estimates and times.
struct TrialResult {
    truths: Vec<f64>,
    crb_var: Option<f64>,
    estimates: Vec<Vec<f64>>,
    seconds: Vec<f64>,
}

/// Source placement of one trial.
pub fn trial_doas<R: Rng + ?Sized>(cfg: &ExperimentConfig, partition: &Partition, rng: &mut R) -> Result<Vec<f64>> {
    match cfg.doa_mode {
        DoaMode::Random => draw_region_doas(rng, partition, cfg.sources, cfg.edge_guard_bins),
        DoaMode::Jitter => {
            let u = if cfg.jitter_deg > 0.0 { rng.random_range(-cfg.jitter_deg..=cfg.jitter_deg) } else { 0.0 };
            let mut d: Vec<f64> = cfg.base_doas.iter().map(|b| b + u).collect();
            d.sort_by(f64::total_cmp);
            Ok(d)
        }
    }
}

/// Sample covariance of one trial and the scenario behind it.
pub fn trial_covariance<R: Rng + ?Sized>(
    cfg: &ExperimentConfig,
    gamma: &dyn Fn(usize) -> Result<CMatrix>,
    snr_db: f64,
    rng: &mut R,
) -> Result<(SourceConfig, CovMatrix)> {
    let partition = cfg.partition()?;
    let doas = trial_doas(cfg, &partition, rng)?;
    let src = SourceConfig::new(doas, gamma(cfg.sources)?, snr_to_noise_variance(snr_db))?;
    let y = simulate_snapshots_with(&src, &cfg.array()?, cfg.snapshots, rng)?;
    let r = sample_covariance(&y)?;
    Ok((src, r))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Runs `cfg.trials` trials at every sweep value and tabulates each method
/// plus a `crb` reference row.
fn sweep(
    cfg: &ExperimentConfig,
    methods: &[Method],
    model: Option<&DeepMusicModel>,
    tag: u64,
    values: &[f64],
    scenario: impl Fn(f64) -> (f64, Box<dyn Fn(usize) -> Result<CMatrix> + Send + Sync>) + Sync,
) -> Result<RmseTable> {
    cfg.validate()?;
    if methods.contains(&Method::DeepMusic) && model.is_none() {
        return invalid("deepmusic requested without a model bundle");
    }
    let est = Estimators::new(cfg, model)?;
    let array = cfg.array()?;
    let mut table = RmseTable::default();
    for (vi, &value) in values.iter().enumerate() {
        let (snr_db, gamma) = scenario(value);
        let trials: Vec<TrialResult> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(cfg.seed, rng::stream_id(&[tag, vi as u64, t as u64]));
                let (src, r) = trial_covariance(cfg, &*gamma, snr_db, &mut rng)?;
                let crb_var = stochastic_crb(&src, &array, cfg.snapshots).ok().map(|c| c.iter().map(|s| s * s).sum());
                let mut estimates = Vec::with_capacity(methods.len());
                let mut seconds = Vec::with_capacity(methods.len());
                for &m in methods {
                    let start = Instant::now();
                    estimates.push(est.estimate(m, &r, cfg.sources)?);
                    seconds.push(start.elapsed().as_secs_f64());
                }
                Ok(TrialResult { truths: src.doas_deg, crb_var, estimates, seconds })
            })
            .collect::<Result<_>>()?;

        let truths: Vec<Vec<f64>> = trials.iter().map(|t| t.truths.clone()).collect();
        let crb = trials
            .iter()
            .map(|t| t.crb_var)
            .sum::<Option<f64>>()
            .map(|s| (s / (trials.len() * cfg.sources) as f64).sqrt());
        for (mi, &m) in methods.iter().enumerate() {
            let estimates: Vec<Vec<f64>> = trials.iter().map(|t| t.estimates[mi].clone()).collect();
            let times: Vec<f64> = trials.iter().map(|t| t.seconds[mi]).collect();
            let (mean, std) = mean_std(&times);
            table.rows.push(RmseRow {
                method: m.name().to_string(),
                sweep_value: value,
                rmse_deg: Some(rmse(&estimates, &truths)?),
                crb_deg: crb,
                runtime_s: cfg.timing.then_some(mean),
                runtime_std_s: cfg.timing.then_some(std),
                trials: cfg.trials,
                seed: cfg.seed,
            });
        }
        table.rows.push(RmseRow {
            method: "crb".to_string(),
            sweep_value: value,
            rmse_deg: crb,
            crb_deg: crb,
            runtime_s: None,
            runtime_std_s: None,
            trials: cfg.trials,
            seed: cfg.seed,
        });
    }
    Ok(table)
}

/// RMSE of each method at every SNR of `cfg.snr_grid_db` with uncorrelated unit-power sources.
pub fn run_rmse_vs_snr(cfg: &ExperimentConfig, methods: &[Method], model: Option<&DeepMusicModel>) -> Result<RmseTable> {
    sweep(cfg, methods, model, 1, &cfg.snr_grid_db, |snr| {
        (snr, Box::new(|k: usize| Ok(CMatrix::identity(k, k))))
    })
}

/// RMSE at `cfg.corr_snr_db` for two sources with correlation `ρ` over
/// `cfg.rho_grid`. Requesting spectral MUSIC also runs its smoothed variant.
pub fn run_correlation_sweep(
    cfg: &ExperimentConfig,
    methods: &[Method],
    model: Option<&DeepMusicModel>,
) -> Result<RmseTable> {
    if cfg.sources != 2 {
        return invalid("the correlation sweep needs sources = 2");
    }
    let mut methods = methods.to_vec();
    if methods.contains(&Method::SpectralMusic) && !methods.contains(&Method::SpectralMusicFb) {
        methods.push(Method::SpectralMusicFb);
    }
    sweep(cfg, &methods, model, 2, &cfg.rho_grid, |rho| {
        (
            cfg.corr_snr_db,
            Box::new(move |k: usize| {
                if k != 2 {
                    return invalid("correlated pairs need two sources");
                }
                correlated_pair_covariance(1.0, 1.0, rho)
            }),
        )
    })
}

/// Deterministic DeepMUSIC evaluation with spectral MUSIC as reference; never timed.
pub fn run_eval(cfg: &ExperimentConfig, model: &DeepMusicModel) -> Result<RmseTable> {
    let cfg = ExperimentConfig { timing: false, ..cfg.clone() };
    run_rmse_vs_snr(&cfg, &[Method::DeepMusic, Method::SpectralMusic], Some(model))
}

/// Mean and spread of repeated single-threaded covariance-to-DOA runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub method: Method,
    pub grid_points: usize,
    pub mean_s: f64,
    pub std_s: f64,
    pub reps: usize,
}

/// Times each method on one fixed covariance (first SNR of the grid);
/// warm-up runs are discarded.
pub fn time_methods(cfg: &ExperimentConfig, methods: &[Method], model: Option<&DeepMusicModel>) -> Result<Vec<Timing>> {
    cfg.validate()?;
    let est = Estimators::new(cfg, model)?;
    let mut rng = rng::stream(cfg.seed, rng::stream_id(&[3]));
    let gamma = |k: usize| Ok(CMatrix::identity(k, k));
    let (_, r) = trial_covariance(cfg, &gamma, cfg.snr_grid_db[0], &mut rng)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Numerical(format!("cannot build timing thread pool: {e}")))?;
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for &m in methods {
        if seen.contains(&m) {
            continue;
        }
        seen.push(m);
        let samples = pool.install(|| -> Result<Vec<f64>> {
            for _ in 0..cfg.time_warmup {
                std::hint::black_box(est.estimate(m, &r, cfg.sources)?);
            }
            (0..cfg.time_reps)
                .map(|_| {
                    let start = Instant::now();
                    std::hint::black_box(est.estimate(m, &r, cfg.sources)?);
                    Ok(start.elapsed().as_secs_f64())
                })
                .collect()
        })?;
        let (mean_s, std_s) = mean_std(&samples);
        out.push(Timing { method: m, grid_points: cfg.grid_points, mean_s, std_s, reps: cfg.time_reps });
    }
    Ok(out)
}

impl From<&[Timing]> for RmseTable {
    fn from(t: &[Timing]) -> Self {
        RmseTable {
            rows: t
                .iter()
                .map(|t| RmseRow {
                    method: t.method.name().to_string(),
                    sweep_value: t.grid_points as f64,
                    rmse_deg: None,
                    crb_deg: None,
                    runtime_s: Some(t.mean_s),
                    runtime_std_s: Some(t.std_s),
                    trials: t.reps,
                    seed: 0,
                })
                .collect(),
        }
    }
}

/// Predicted and reference spectra at one SNR for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumDump {
    pub snr_db: f64,
    pub truths: Vec<f64>,
    pub angles_deg: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Spectral MUSIC on the same covariance, scaled to sum to one.
    pub reference: Vec<f64>,
}

/// First trial of every SNR: the DeepMUSIC spectrum and the normalized MUSIC spectrum.
pub fn emit_spectra(cfg: &ExperimentConfig, model: &DeepMusicModel) -> Result<Vec<SpectrumDump>> {
    let est = Estimators::new(cfg, Some(model))?;
    cfg.snr_grid_db
        .iter()
        .enumerate()
        .map(|(vi, &snr)| {
            let mut rng = rng::stream(cfg.seed, rng::stream_id(&[1, vi as u64, 0]));
            let gamma = |k: usize| Ok(CMatrix::identity(k, k));
            let (src, r) = trial_covariance(cfg, &gamma, snr, &mut rng)?;
            let x = crate::datagen::build_input_tensor(&r).to_f32();
            let predicted = model.predict_full_spectrum(&x)?.values;
            let music = music_spectrum(&eigendecompose(&r, cfg.sources)?, &model.partition.grid, &est.array)?.values;
            let total: f64 = music.iter().sum();
            Ok(SpectrumDump {
                snr_db: snr,
                truths: src.doas_deg,
                angles_deg: model.partition.grid.angles().collect(),
                predicted,
                reference: music.iter().map(|v| v / total).collect(),
            })
        })
        .collect()
}

/// Long-format CSV of spectrum dumps: `snr_db,angle_deg,predicted,reference`.
pub fn write_spectra_csv<W: std::io::Write>(dumps: &[SpectrumDump], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["snr_db", "angle_deg", "predicted", "reference"])?;
    for d in dumps {
        for ((a, p), r) in d.angles_deg.iter().zip(&d.predicted).zip(&d.reference) {
            out.write_record([d.snr_db.to_string(), a.to_string(), p.to_string(), r.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
