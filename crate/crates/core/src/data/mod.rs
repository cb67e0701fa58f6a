//! Synthetic blobs, label-noise injection, input jitter and dataset CSV files.

mod augment;
mod dataset;
mod io;
mod noise;

pub use augment::{augment, augment_batch};
pub use dataset::{make_blobs, make_blobs_split, BlobSpec, NoisyDataset, Split, TrainView};
pub use io::{format_sig9, load_csv, parse_csv, save_csv, to_csv_string};
pub use noise::{inject_noise, TransitionMatrix};
