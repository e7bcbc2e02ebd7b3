use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use super::labels::label_spectra;
use super::tensor::{build_input_tensor, InputTensor, NUM_CHANNELS};
use crate::array::{sample_covariance, simulate_snapshots_with, ArrayConfig, SourceConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::{AngularGrid, Partition};
use crate::io::*;
use crate::{rng, CMatrix};

pub const DATASET_MAGIC: &[u8; 4] = b"DMDS";
pub const DATASET_VERSION: u16 = 1;

/// Training-corpus generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    /// Number of DOA sets.
    pub j_alpha: usize,
    /// Noise realizations per DOA set and SNR.
    pub j_beta: usize,
    pub snapshots: usize,
    pub snr_train_db: Vec<f64>,
    pub num_sources: usize,
    pub num_regions: usize,
    pub grid: AngularGrid,
    pub seed: u64,
    /// DOAs keep this many grid steps away from region edges.
    pub guard_bins: f64,
}

impl DatasetConfig {
    /// Total sample count `|SNR|·J_α·J_β`.
    pub fn total_len(&self) -> usize {
        self.snr_train_db.len() * self.j_alpha * self.j_beta
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::new(self.grid, self.num_regions)
    }

    fn validate(&self, array: &ArrayConfig) -> Result<()> {
        if self.num_sources == 0 || self.num_sources > self.num_regions {
            return invalid(format!(
                "need 1 ≤ K ≤ Q, got K={} Q={}",
                self.num_sources, self.num_regions
            ));
        }
        if self.num_sources >= array.num_elements {
            return invalid("source count must be below the array size");
        }
        if self.j_alpha == 0 || self.j_beta == 0 || self.snapshots == 0 || self.snr_train_db.is_empty() {
            return invalid("J_alpha, J_beta, T and the SNR list must be nonzero");
        }
        if self.total_len() > u32::MAX as usize {
            return invalid("dataset too large for 32-bit sample ids");
        }
        Ok(())
    }
}

/// Header fields persisted with a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub num_elements: usize,
    pub num_points: usize,
    pub num_regions: usize,
    pub region_len: usize,
    pub num_sources: usize,
    pub snapshots: usize,
    pub snr_train_db: Vec<f64>,
    pub grid_start_deg: f64,
    pub grid_final_deg: f64,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn grid(&self) -> Result<AngularGrid> {
        AngularGrid::new(self.grid_start_deg, self.grid_final_deg, self.num_points)
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::new(self.grid()?, self.num_regions)
    }
}

/// One input with the labels of every region network.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// Position `μ` in generation order.
    pub id: u32,
    pub true_doas_deg: Vec<f64>,
    pub input: InputTensor<f32>,
    /// `Q` vectors of length `L`.
    pub labels: Vec<Vec<f32>>,
}

/// The `Q` training sets `D_q`, stored once since they share inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Input/label pairs of the network for region `q`.
    pub fn region(&self, q: usize) -> impl Iterator<Item = (&InputTensor<f32>, &[f32])> + '_ {
        self.samples.iter().map(move |s| (&s.input, s.labels[q].as_slice()))
    }
}

/// Draws `K` DOAs: `K` distinct regions uniformly, then one continuous angle
/// uniformly inside each region, `guard_bins·γ` away from both edges.
/// Returned ascending.
pub fn draw_region_doas<R: Rng + ?Sized>(
    rng: &mut R,
    partition: &Partition,
    k: usize,
    guard_bins: f64,
) -> Result<Vec<f64>> {
    if k == 0 || k > partition.num_regions {
        return invalid(format!("cannot place {k} sources in {} regions", partition.num_regions));
    }
    let guard = guard_bins * partition.grid.resolution_deg;
    let mut regions = index::sample(rng, partition.num_regions, k).into_vec();
    regions.sort_unstable();
    let mut doas = Vec::with_capacity(k);
    for q in regions {
        let (s, f) = partition.region_bounds[q];
        let (lo, hi) = (s + guard, f - guard);
        if !(lo < hi) {
            return invalid(format!("guard of {guard_bins} bins leaves region {q} empty"));
        }
        doas.push(rng.random_range(lo..hi));
    }
    Ok(doas)
}

/// Generates the partitioned-spectrum corpus.
///
/// For each DOA set `α` the labels are computed once from the noiseless
/// spectrum; then for every realization `β` and every training SNR a fresh
/// set of `T` snapshots yields one input. Sample ids run `α`-major, then `β`,
/// then SNR. Each `α` draws from its own substream of `seed`, so the output
/// does not depend on scheduling.
pub fn generate_dataset(cfg: &DatasetConfig, array: &ArrayConfig) -> Result<Dataset> {
    cfg.validate(array)?;
    let partition = cfg.partition()?;
    let k = cfg.num_sources;
    let per_alpha = cfg.j_beta * cfg.snr_train_db.len();
    let gamma = CMatrix::identity(k, k);

    let chunks: Vec<Vec<LabeledSample>> = (0..cfg.j_alpha)
        .into_par_iter()
        .map(|alpha| -> Result<Vec<LabeledSample>> {
            let mut rng = rng::stream(cfg.seed, alpha as u64);
            let doas = draw_region_doas(&mut rng, &partition, k, cfg.guard_bins)?;
            let labels: Vec<Vec<f32>> = label_spectra(&doas, &partition, array, &gamma)?
                .into_iter()
                .map(|l| l.into_iter().map(|v| v as f32).collect())
                .collect();
            let mut out = Vec::with_capacity(per_alpha);
            for beta in 0..cfg.j_beta {
                for (s, &snr) in cfg.snr_train_db.iter().enumerate() {
                    let src = SourceConfig::unit_power_at_snr(doas.clone(), snr)?;
                    let y = simulate_snapshots_with(&src, array, cfg.snapshots, &mut rng)?;
                    let x = build_input_tensor(&sample_covariance(&y)?).to_f32();
                    out.push(LabeledSample {
                        id: (alpha * per_alpha + beta * cfg.snr_train_db.len() + s) as u32,
                        true_doas_deg: doas.clone(),
                        input: x,
                        labels: labels.clone(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(Dataset {
        header: DatasetHeader {
            num_elements: array.num_elements,
            num_points: cfg.grid.num_points,
            num_regions: cfg.num_regions,
            region_len: partition.region_len,
            num_sources: k,
            snapshots: cfg.snapshots,
            snr_train_db: cfg.snr_train_db.clone(),
            grid_start_deg: cfg.grid.start_deg,
            grid_final_deg: cfg.grid.final_deg,
            seed: cfg.seed,
        },
        samples: chunks.into_iter().flatten().collect(),
    })
}

/// Seeded shuffle then split; the same permutation serves every region.
pub fn split_train_val(d: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if d.is_empty() {
        return invalid("cannot split an empty dataset");
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return invalid(format!("train fraction {train_fraction} outside (0, 1)"));
    }
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, SPLIT_STREAM));
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n);
    let pick = |idx: &[usize]| Dataset {
        header: d.header.clone(),
        samples: idx.iter().map(|&i| d.samples[i].clone()).collect(),
    };
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

/// Writes `d` in the `DMDS` format.
pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(d, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset<W: Write>(d: &Dataset, w: &mut W) -> Result<()> {
    let h = &d.header;
    w.write_all(DATASET_MAGIC)?;
    put_u16(w, DATASET_VERSION)?;
    put_usize(w, h.num_elements, "M")?;
    put_usize(w, h.num_points, "N")?;
    put_usize(w, h.num_regions, "Q")?;
    put_usize(w, h.region_len, "L")?;
    put_usize(w, h.num_sources, "K")?;
    put_usize(w, d.len(), "J")?;
    put_usize(w, h.snapshots, "T")?;
    put_usize(w, h.snr_train_db.len(), "SNR count")?;
    for &s in &h.snr_train_db {
        put_f64(w, s)?;
    }
    put_f64(w, h.grid_start_deg)?;
    put_f64(w, h.grid_final_deg)?;
    put_u64(w, h.seed)?;

    let m = h.num_elements;
    for s in &d.samples {
        if s.true_doas_deg.len() != h.num_sources
            || s.input.data.len() != NUM_CHANNELS * m * m
            || s.labels.len() != h.num_regions
            || s.labels.iter().any(|l| l.len() != h.region_len)
        {
            return Err(Error::Format(format!("sample {} does not match the header shapes", s.id)));
        }
        put_u32(w, s.id)?;
        for &a in &s.true_doas_deg {
            put_f64(w, a)?;
        }
        put_f32s(w, &s.input.data)?;
        for l in &s.labels {
            put_f32s(w, l)?;
        }
    }
    Ok(())
}

/// Reads a `DMDS` file.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset(&mut r)
}

const MAX_DIM: usize = 1 << 20;

// Substream reserved for the train/validation permutation.
const SPLIT_STREAM: u64 = u64::MAX - 1;

pub fn read_dataset<R: Read>(r: &mut R) -> Result<Dataset> {
    expect_magic(r, DATASET_MAGIC)?;
    expect_version(r, DATASET_VERSION)?;
    let num_elements = get_count(r, "M", 4096)?;
    let num_points = get_count(r, "N", MAX_DIM)?;
    let num_regions = get_count(r, "Q", MAX_DIM)?;
    let region_len = get_count(r, "L", MAX_DIM)?;
    let num_sources = get_count(r, "K", 4096)?;
    let j = get_u32(r, "J")? as usize;
    let snapshots = get_u32(r, "T")? as usize;
    let n_snr = get_count(r, "SNR count", 4096)?;
    let snr_train_db = (0..n_snr).map(|_| get_f64(r, "SNR list")).collect::<Result<_>>()?;
    let grid_start_deg = get_f64(r, "grid start")?;
    let grid_final_deg = get_f64(r, "grid final")?;
    let seed = get_u64(r, "seed")?;
    if num_regions * region_len != num_points {
        return Err(Error::Format(format!("Q·L = {} does not equal N = {num_points}", num_regions * region_len)));
    }
    let header = DatasetHeader {
        num_elements,
        num_points,
        num_regions,
        region_len,
        num_sources,
        snapshots,
        snr_train_db,
        grid_start_deg,
        grid_final_deg,
        seed,
    };
    header.grid().map_err(|e| Error::Format(format!("bad grid in header: {e}")))?;

    let input_len = NUM_CHANNELS * num_elements * num_elements;
    let mut samples = Vec::with_capacity(j.min(1 << 16));
    for _ in 0..j {
        let id = get_u32(r, "sample id")?;
        let true_doas_deg = (0..num_sources).map(|_| get_f64(r, "true DOAs")).collect::<Result<_>>()?;
        let input = InputTensor { side: num_elements, data: get_f32s(r, input_len, "input tensor")? };
        let labels = (0..num_regions)
            .map(|_| get_f32s(r, region_len, "label vector"))
            .collect::<Result<_>>()?;
        samples.push(LabeledSample { id, true_doas_deg, input, labels });
    }
    expect_eof(r)?;
    Ok(Dataset { header, samples })
}
