use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::combiner::{FinalRepr, LabelMode};
use crate::encoder::EncoderDims;
use crate::error::{Error, Result};
use crate::numerics::AdamConfig;

pub const PRESETS: [&str; 3] = ["desk", "paper-finetune", "paper-pretrain"];

/// Every knob of a model and its training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: String,
    /// Registered sentence encoder name.
    pub encoder: String,

    pub d_emb: usize,
    /// BiGRU hidden size per direction.
    pub gru_hidden: usize,
    pub attn_hidden: usize,
    pub attn_heads: usize,
    pub lm_layers: usize,
    pub lm_hidden: usize,
    pub d_mix: usize,
    pub context_hidden: usize,
    pub label_dim: usize,

    /// Previous-label feature during training: `gold` (teacher forcing) or `none`.
    pub label_mode: LabelMode,
    /// Feed the conversation state forward (combiner recurrence and attention context).
    pub context: bool,
    pub final_repr: FinalRepr,
    pub bptt_window: Option<usize>,

    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_conversations: usize,
    pub dropout: f64,
    /// Weight of the auxiliary language-model loss for BiLM encoders.
    pub lm_weight: f64,
    /// Stop after this many epochs without validation improvement.
    pub early_stop_patience: Option<usize>,

    pub fallback_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    pub fn desk() -> Self {
        Self {
            preset: "desk".into(),
            encoder: "attention".into(),
            d_emb: 32,
            gru_hidden: 32,
            attn_hidden: 16,
            attn_heads: 4,
            lm_layers: 2,
            lm_hidden: 32,
            d_mix: 32,
            context_hidden: 32,
            label_dim: 8,
            label_mode: LabelMode::Gold,
            context: true,
            final_repr: FinalRepr::Concat,
            bptt_window: None,
            lr: 5e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_conversations: 8,
            dropout: 0.1,
            lm_weight: 0.0,
            early_stop_patience: None,
            fallback_threshold: 0.5,
        }
    }

    /// Fine-tuning hyperparameters at their published values.
    pub fn paper_finetune() -> Self {
        Self {
            preset: "paper-finetune".into(),
            lr: 1e-5,
            weight_decay: 0.1,
            epochs: 7,
            batch_conversations: 8000,
            ..Self::desk()
        }
    }

    /// Published pre-training encoder sizes (24 layers, hidden 1024, 16 heads of size 64).
    pub fn paper_pretrain() -> Self {
        Self {
            preset: "paper-pretrain".into(),
            encoder: "both-concat".into(),
            lm_layers: 24,
            lm_hidden: 1024,
            gru_hidden: 1024,
            d_emb: 1024,
            d_mix: 1024,
            context_hidden: 1024,
            attn_heads: 16,
            attn_hidden: 64,
            dropout: 0.1,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper-finetune" => Ok(Self::paper_finetune()),
            "paper-pretrain" => Ok(Self::paper_pretrain()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; known: {}",
                PRESETS.join(", ")
            ))),
        }
    }

    /// `{"preset": NAME, ...overrides}`; the preset defaults to `desk`.
    pub fn from_json(value: &Value) -> Result<Self> {
        let overrides = value
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        let preset = match overrides.get("preset") {
            None => "desk",
            Some(Value::String(s)) => s.as_str(),
            Some(other) => return Err(Error::Config(format!("preset must be a string, got {other}"))),
        };
        let mut merged = serde_json::to_value(Self::preset(preset)?)?;
        let target = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in overrides {
            target.insert(k.clone(), v.clone());
        }
        let config: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_json(&value)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.label_mode == LabelMode::Predicted {
            return bad("training label_mode must be \"gold\" or \"none\"".into());
        }
        if !(0.0..=1.0).contains(&self.fallback_threshold) {
            return bad(format!("fallback_threshold {} outside [0, 1]", self.fallback_threshold));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.weight_decay < 0.0 || self.lm_weight < 0.0 {
            return bad("weight_decay and lm_weight must be non-negative".into());
        }
        if self.batch_conversations == 0 {
            return bad("batch_conversations must be at least 1".into());
        }
        let widths = [
            ("d_emb", self.d_emb),
            ("gru_hidden", self.gru_hidden),
            ("attn_hidden", self.attn_hidden),
            ("attn_heads", self.attn_heads),
            ("context_hidden", self.context_hidden),
        ];
        if let Some((name, _)) = widths.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be at least 1"));
        }
        if self.encoder != "attention" && (self.lm_hidden == 0 || self.d_mix == 0) {
            return bad("BiLM encoders need lm_hidden and d_mix of at least 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn encoder_dims(&self, vocab_size: usize) -> EncoderDims {
        EncoderDims {
            vocab_size,
            d_emb: self.d_emb,
            gru_hidden: self.gru_hidden,
            attn_hidden: self.attn_hidden,
            attn_heads: self.attn_heads,
            context: self.context_hidden,
            lm_layers: self.lm_layers,
            lm_hidden: self.lm_hidden,
            d_mix: self.d_mix,
        }
    }

    /// Label embedding width actually used (0 when the feature is off).
    pub fn effective_label_dim(&self) -> usize {
        match self.label_mode {
            LabelMode::None => 0,
            _ => self.label_dim,
        }
    }
}
