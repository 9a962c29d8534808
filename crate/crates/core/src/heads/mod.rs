//! Bag classifier, caption decoder and the loss compositions.

mod caption;
mod classifier;
mod vocab;

pub use caption::{CaptionConfig, CaptionModel, DecodeMode, DEFAULT_D_MODEL};
pub use classifier::{
    bce_loss, bce_loss_var, total_loss, total_loss_var, ClassifierHead, Task, DEFAULT_HIDDEN, PROB_CLAMP,
};
pub use vocab::{tokenize, Vocabulary, BOS, EOS, PAD, UNK};
