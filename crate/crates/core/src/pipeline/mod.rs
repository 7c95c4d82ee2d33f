//! Training, evaluation, multi-seed protocol, persistence and baselines.

mod baseline;
mod checkpoint;
mod config;
mod eval;
mod model;
mod probes;
mod train;

pub use baseline::{BowBaseline, BowConfig};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, checkpoint_hash, load_checkpoint, load_checkpoint_for, save_checkpoint,
    MAGIC, VERSION,
};
pub use config::{ModelConfig, PRESETS};
pub use eval::{
    evaluate, evaluate_with_threshold, mean_and_std, multi_seed_eval, thread_budget, train_and_evaluate, EvalReport,
    ReferenceResult, RunReport, SeedRun, REFERENCE_BASELINE_MARGIN, REFERENCE_RESULTS,
};
pub use model::{build_vocab, ConversationPrediction, Model, RuleSource};
pub use probes::{GradProbe, ProbeFn, ProbeRegistry, ProbeResult, GRADCHECK_TOLERANCE};
pub use train::{train, EpochRecord, TrainReport, Validator};
