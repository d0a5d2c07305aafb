//! On-disk formats: pair files, dataset directories and checkpoints.

mod checkpoint;
mod container;
mod dataset;
mod pairfile;

pub use checkpoint::{
    conventions, Checkpoint, CheckpointManifest, NormEntry, OptimizerEntry, TensorEntry, TrainProgress,
    CHECKPOINT_VERSION,
};
pub use dataset::{
    kitti_pairs, load_dataset, pair_seed, read_manifest, synthesize_pairs, write_dataset, DatasetManifest, DatasetSource, PairEntry,
    DATASET_FORMAT, DATASET_VERSION, MANIFEST_FILE,
};
pub use pairfile::{PairHeader, PairRecord, PAIR_FORMAT_VERSION};
