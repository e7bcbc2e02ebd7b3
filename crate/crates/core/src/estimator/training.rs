use std::sync::Arc;

use rayon::prelude::*;

use super::{to_nhwc, DeepMusicModel};
use crate::array::ArrayConfig;
use crate::datagen::Dataset;
use crate::error::{invalid, Result};
use crate::nn::{build_deepmusic_network, train_network, ArchConfig, InputStats, Network, Tensor4, TrainConfig, TrainSet};
use crate::rng;

/// All inputs of a dataset as one NHWC tensor, unstandardized.
pub fn dataset_inputs(d: &Dataset) -> Result<Tensor4<f32>> {
    to_nhwc(&d.samples.iter().map(|s| &s.input).collect::<Vec<_>>())
}

/// Region-`q` labels of every sample, concatenated.
pub fn region_targets(d: &Dataset, q: usize) -> Vec<f32> {
    d.samples.iter().flat_map(|s| s.labels[q].iter().copied()).collect()
}

/// Trains one network per region. Input statistics come from the training
/// split; network `q` is initialized and shuffled from substream `q` of
/// `cfg.seed`.
pub fn train_model(
    train: &Dataset,
    val: &Dataset,
    array: ArrayConfig,
    arch: &ArchConfig,
    cfg: &TrainConfig,
) -> Result<DeepMusicModel> {
    if train.is_empty() || val.is_empty() {
        return invalid("training and validation splits must be nonempty");
    }
    if train.header != val.header {
        return invalid("training and validation splits come from different corpora");
    }
    let h = &train.header;
    if h.num_elements != array.num_elements {
        return invalid(format!("dataset has M = {}, array has {}", h.num_elements, array.num_elements));
    }
    if arch.input_side != h.num_elements || arch.region_len != h.region_len {
        return invalid("architecture does not match the dataset shape");
    }
    let partition = h.partition()?;
    let specs = build_deepmusic_network(arch)?;

    let mut train_x = dataset_inputs(train)?;
    let mut val_x = dataset_inputs(val)?;
    let stats = InputStats::from_tensor(&train_x);
    stats.apply(&mut train_x)?;
    stats.apply(&mut val_x)?;
    let (train_x, val_x) = (Arc::new(train_x), Arc::new(val_x));
    let shape = [h.num_elements, h.num_elements, 3];

    let trained: Vec<_> = (0..partition.num_regions)
        .into_par_iter()
        .map(|q| {
            let seed = rng::stream_id(&[cfg.seed, q as u64]);
            let mut net = Network::new(shape, &specs, seed)?;
            let tr = TrainSet::new(train_x.clone(), region_targets(train, q))?;
            let va = TrainSet::new(val_x.clone(), region_targets(val, q))?;
            let log = train_network(&mut net, &tr, &va, &TrainConfig { seed, ..cfg.clone() })?;
            Ok((net, log))
        })
        .collect::<Result<_>>()?;
    let (networks, logs) = trained.into_iter().unzip();
    DeepMusicModel::new(array, partition, stats, networks, logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, split_train_val, DatasetConfig};
    use crate::grid::make_grid;

    fn corpus() -> Dataset {
        let cfg = DatasetConfig {
            j_alpha: 6,
            j_beta: 2,
            snapshots: 50,
            snr_train_db: vec![20.0],
            num_sources: 1,
            num_regions: 2,
            grid: make_grid(-60.0, 60.0, 16).unwrap(),
            seed: 4,
            guard_bins: 2.0,
        };
        generate_dataset(&cfg, &ArrayConfig::new(13, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn small_pipeline_is_deterministic() {
        let d = corpus();
        let (tr, va) = split_train_val(&d, 0.75, 1).unwrap();
        let arch = ArchConfig { fc_width: 8, ..ArchConfig::new(13, 8, 2) };
        let cfg = TrainConfig { max_epochs: 2, batch_size: 4, seed: 5, ..Default::default() };
        let array = ArrayConfig::new(13, 0.5).unwrap();
        let a = train_model(&tr, &va, array, &arch, &cfg).unwrap();
        let b = train_model(&tr, &va, array, &arch, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_regions(), 2);
        assert_eq!(a.logs[0].records.len(), 2);
        assert_ne!(a.networks[0], a.networks[1]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let d = corpus();
        let (tr, va) = split_train_val(&d, 0.75, 1).unwrap();
        let arch = ArchConfig::new(13, 4, 2);
        let array = ArrayConfig::new(13, 0.5).unwrap();
        assert!(train_model(&tr, &va, array, &arch, &TrainConfig::default()).is_err());
    }
}
