//! Multi-network spectrum estimation: Q region networks share one input
//! tensor, their softmax outputs are concatenated into a full-grid
//! spectrum, and the strongest region peaks become DOA estimates.

mod bundle;
mod training;

pub use bundle::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use training::{dataset_inputs, region_targets, train_model};

use rayon::prelude::*;

use crate::array::{ArrayConfig, CovMatrix};
use crate::datagen::{build_input_tensor, InputTensor, NUM_CHANNELS};
use crate::error::{invalid, Result};
use crate::grid::Partition;
use crate::nn::{InputStats, Network, Tensor4, TrainLog};
use crate::subspace::music::argmax;
use crate::subspace::Spectrum;

/// Q trained region networks with the grid and array they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepMusicModel {
    pub array: ArrayConfig,
    pub partition: Partition,
    pub stats: InputStats,
    pub networks: Vec<Network<f32>>,
    pub logs: Vec<TrainLog>,
}

/// DOA estimates read from a predicted spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    /// Ascending.
    pub angles_deg: Vec<f64>,
    /// Maximum of each region's sub-spectrum.
    pub region_peak_values: Vec<f64>,
    /// Set when some network produced non-finite output.
    pub degraded: bool,
}

/// Channel-major tensors to one NHWC batch.
pub fn to_nhwc(inputs: &[&InputTensor<f32>]) -> Result<Tensor4<f32>> {
    let Some(first) = inputs.first() else {
        return invalid("no inputs");
    };
    let m = first.side;
    let plane = m * m;
    let mut data = Vec::with_capacity(inputs.len() * plane * NUM_CHANNELS);
    for x in inputs {
        if x.side != m || x.data.len() != plane * NUM_CHANNELS {
            return invalid("input tensors disagree in size");
        }
        for p in 0..plane {
            for c in 0..NUM_CHANNELS {
                data.push(x.data[c * plane + p]);
            }
        }
    }
    Tensor4::new([inputs.len(), m, m, NUM_CHANNELS], data)
}

impl DeepMusicModel {
    pub fn new(
        array: ArrayConfig,
        partition: Partition,
        stats: InputStats,
        networks: Vec<Network<f32>>,
        logs: Vec<TrainLog>,
    ) -> Result<Self> {
        let m = array.num_elements;
        if networks.len() != partition.num_regions {
            return invalid(format!("{} networks for {} regions", networks.len(), partition.num_regions));
        }
        if logs.len() != networks.len() {
            return invalid("one training log per network required");
        }
        if stats.mean.len() != NUM_CHANNELS || stats.std.len() != NUM_CHANNELS {
            return invalid("input statistics must cover three channels");
        }
        for (q, net) in networks.iter().enumerate() {
            net.validate()?;
            if net.input_shape != [m, m, NUM_CHANNELS] {
                return invalid(format!("network {q} expects input {:?}, array gives {m}x{m}x3", net.input_shape));
            }
            let out = net.output_shape()?;
            if out.iter().product::<usize>() != partition.region_len {
                return invalid(format!(
                    "network {q} outputs {} values, regions hold {}",
                    out.iter().product::<usize>(),
                    partition.region_len
                ));
            }
        }
        Ok(Self { array, partition, stats, networks, logs })
    }

    pub fn num_regions(&self) -> usize {
        self.networks.len()
    }

    /// Standardized NHWC batch.
    pub fn prepare(&self, inputs: &[&InputTensor<f32>]) -> Result<Tensor4<f32>> {
        if let Some(x) = inputs.iter().find(|x| x.side != self.array.num_elements) {
            return invalid(format!("input side {} does not match {} elements", x.side, self.array.num_elements));
        }
        let mut t = to_nhwc(inputs)?;
        self.stats.apply(&mut t)?;
        Ok(t)
    }

    fn run(&self, q: usize, x: &Tensor4<f32>) -> Result<Vec<Vec<f64>>> {
        let out = self.networks[q].predict(x)?;
        Ok((0..out.batch()).map(|b| out.sample(b).iter().map(|&v| v as f64).collect()).collect())
    }

    /// Softmax output of network `q` in inference mode.
    pub fn predict_subspectrum(&self, q: usize, x: &InputTensor<f32>) -> Result<Vec<f64>> {
        if q >= self.num_regions() {
            return invalid(format!("region {q} out of range 0..{}", self.num_regions()));
        }
        let t = self.prepare(&[x])?;
        Ok(self.run(q, &t)?.remove(0))
    }

    /// Concatenated region outputs for a batch of inputs, one row per input.
    pub fn predict_batch(&self, inputs: &[&InputTensor<f32>]) -> Result<Vec<Vec<f64>>> {
        let t = self.prepare(inputs)?;
        let per_region: Vec<Vec<Vec<f64>>> =
            (0..self.num_regions()).into_par_iter().map(|q| self.run(q, &t)).collect::<Result<_>>()?;
        Ok((0..inputs.len()).map(|b| per_region.iter().flat_map(|r| r[b].iter().copied()).collect()).collect())
    }

    pub fn predict_full_spectrum(&self, x: &InputTensor<f32>) -> Result<Spectrum> {
        let values = self.predict_batch(&[x])?.remove(0);
        Ok(Spectrum { values, grid: self.partition.grid.clone(), saturated: false })
    }

    /// Top-`k` regions by peak value (ties to the lower region), each read at its argmax.
    pub fn doas_from_spectrum(&self, spectrum: &[f64], k: usize) -> Result<DoaEstimate> {
        let q = self.num_regions();
        if k == 0 || k > q {
            return invalid(format!("cannot read {k} DOAs from {q} regions"));
        }
        if spectrum.len() != self.partition.grid.len() {
            return invalid("spectrum length does not match the grid");
        }
        let degraded = spectrum.iter().any(|v| !v.is_finite());
        let regions: Vec<&[f64]> = spectrum.chunks(self.partition.region_len).collect();
        let peaks: Vec<f64> =
            regions.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| peaks[b].total_cmp(&peaks[a]).then(a.cmp(&b)));
        let mut angles: Vec<f64> = order[..k]
            .iter()
            .map(|&r| self.partition.grid.angle(self.partition.region_range(r).start + argmax(regions[r])))
            .collect();
        angles.sort_by(f64::total_cmp);
        Ok(DoaEstimate { angles_deg: angles, region_peak_values: peaks, degraded })
    }

    pub fn estimate_doas(&self, r: &CovMatrix, k: usize) -> Result<DoaEstimate> {
        if k == 0 || k > self.num_regions() {
            return invalid(format!("cannot read {k} DOAs from {} regions", self.num_regions()));
        }
        let x = build_input_tensor(r).to_f32();
        let spectrum = self.predict_full_spectrum(&x)?;
        self.doas_from_spectrum(&spectrum.values, k)
    }
}
