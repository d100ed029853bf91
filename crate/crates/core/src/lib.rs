//! Group-batched metric learning for short texts: a from-scratch LSTM
//! encoder trained with an in-batch triplet objective, plus a dual-head
//! variant that classifies and groups in one pass.

pub mod batch;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod multisiam;
pub mod oracle;
pub mod pairwise;
pub mod rng;
pub mod smcd;
pub mod synth;
pub mod tensor;
pub mod text;
pub mod train;
pub mod triplet;

pub use batch::{make_batches, EncodedGroup, FlatBatch, GroupedBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint, Model};
pub use data::{GroupRecord, GroupedData, PairRecord};
pub use error::{Error, Result};
pub use eval::{group_by_threshold, pair_accuracy, verify_group, GroupingResult};
pub use multisiam::{forward_flat, forward_grouped, MultiSiamModel};
pub use smcd::SmcdModel;
pub use rng::SeededRng;
pub use train::{
    compare_step_times, train_multisiam, train_smcd, AdamState, EpochMetrics, StepTiming,
    TrainConfig,
};
pub use triplet::{triplet_loss, TripletBreakdown, TripletConfig};
pub use tensor::Tensor;
pub use text::{EncodedText, Vocabulary, PAD_ID, UNK_ID};
