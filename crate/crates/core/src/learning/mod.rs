//! The tied-weight encoder-decoder, the winner classifier, their training
//! loops, evaluation and checkpoints.

mod checkpoint;
mod classifier;
mod encdec;
mod eval;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_classifier, load_encoder_decoder, save_classifier,
    save_encoder_decoder, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use classifier::{Classifier, ClassifierCache, ClassifierConfig};
pub use encdec::{EncoderDecoder, EncoderDecoderConfig, EncoderDecoderGrads, EncoderDecoderMse, ForwardCache};
pub use eval::{evaluate_classifier, Confusion, EvalReport};
pub use train::{
    reconstruction_mse, retrieve, train_classifier, train_encoder_decoder, variant_inputs, EpochRecord, InputVariant,
    Precision, TrainConfig, TrainOutcome,
};
