//! Training-corpus construction: network input tensors, partitioned
//! spectrum labels, corpus generation and the `DMDS` file format.

mod dataset;
mod labels;
mod tensor;

pub use crate::grid::{make_grid, partition_grid};
pub use dataset::{
    draw_region_doas, generate_dataset, load_dataset, read_dataset, save_dataset, split_train_val,
    write_dataset, Dataset, DatasetConfig, DatasetHeader, LabeledSample, DATASET_MAGIC, DATASET_VERSION,
};
pub use labels::{label_spectra, normalized_label_spectrum, LABEL_RANK_TOL};
pub use tensor::{build_input_tensor, InputTensor, NUM_CHANNELS};
