//! Corpus handling, batching, optimisation and persistence.

pub mod batch;
pub mod checkpoint;
pub mod sgd;
pub mod trainer;
pub mod vocab;

pub use batch::{batchify, Batch, BatchPlan};
pub use checkpoint::{load_checkpoint, load_for_training, save_checkpoint, Checkpoint};
pub use sgd::{clip_gradients, global_grad_norm, sgd_step};
pub use trainer::{
    train, train_epoch, train_from, write_log, EpochRecord, LogWriter, TrainOutcome, LOG_HEADER,
};
pub use vocab::{build_vocab, read_corpus, tokenize_lines, Vocab, EOS, UNK};
