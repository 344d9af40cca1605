//! ConvLSTM encoder-decoder forecaster with Monte-Carlo dropout.

mod cell;
mod data;
mod mc;
mod model_file;
mod network;
mod tensor;
mod train;

pub use data::{build_sequences, NormStats, SequenceSample};
pub use mc::{aggregate, mc_predict, mc_samples, predict, read_prediction, write_prediction, PredictionResult};
pub use model_file::{decode_model, encode_model, load_model, save_model};
pub use network::{DropoutMask, NetConfig, Network};
pub use train::{train, TrainConfig, TrainReport};
