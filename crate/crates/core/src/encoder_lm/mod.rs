//! Token vocabulary, bidirectional LSTM language model, layer mixing and PCA.

mod bilm;
mod mixer;
mod pca;
mod vocab;

pub use bilm::{bilm_forward, bilm_loss, embed_tokens, BiLm, BiLmVars, LayerStack};
pub use mixer::{mix_layers, LayerMixer};
pub use pca::{pca_fit, PcaProjection};
pub use vocab::{TokenVocab, BOS, EOS, PAD, UNK};
