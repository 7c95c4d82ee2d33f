use std::time::Instant;

use serde::Serialize;

use super::model::build_vocab;
use super::{Model, ModelConfig};
use crate::corpus::{Conversation, Taxonomy};
use crate::error::{Error, Result};
use crate::numerics::{Adam, ParamStore, SeededRng, Tape};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy per training utterance.
    pub train_loss: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs_run: usize,
    /// Epoch whose parameters were kept (0 means the initial parameters).
    pub best_epoch: usize,
    pub best_validation_accuracy: Option<f64>,
    pub history: Vec<EpochRecord>,
    pub wall_seconds: f64,
}

/// Validation hook: receives the current model, returns an accuracy.
pub type Validator<'a> = dyn FnMut(&Model) -> Result<f64> + 'a;

/// Trains a fresh model on fully labelled `train` conversations.
///
/// Conversations are shuffled each epoch and grouped into batches of
/// `batch_conversations`; gradients are averaged over the utterances of a
/// batch. When `validate` is given the best-scoring epoch's parameters are
/// kept; ties keep the earlier epoch.
pub fn train(
    config: &ModelConfig,
    taxonomy: &Taxonomy,
    train: &[Conversation],
    mut validate: Option<&mut Validator<'_>>,
    seed: u64,
) -> Result<(Model, TrainReport)> {
    let start = Instant::now();
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    if let Some(c) = train.iter().find(|c| !c.is_fully_labeled() || c.utterances.is_empty()) {
        return Err(Error::Config(format!(
            "training conversation {:?} is empty or not fully labelled",
            c.id
        )));
    }
    let mut model = Model::new(config.clone(), taxonomy.clone(), build_vocab(train), seed)?;
    let mut rng = SeededRng::new(!seed);
    let mut dropout_rng = rng.fork();
    let mut adam = Adam::new(config.adam());

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParamStore)> = None;
    if config.epochs == 0 {
        if let Some(v) = validate.as_mut() {
            let acc = v(&model)?;
            best = Some((acc, 0, model.params.clone()));
        }
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;
    let mut stale = 0usize;
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut utterances = 0usize;
        for batch in order.chunks(config.batch_conversations) {
            step += 1;
            model.params.zero_grads();
            let mut batch_utts = 0usize;
            for &ci in batch {
                let conv = &train[ci];
                let mut tape = Tape::new();
                let (loss, n) = model.conversation_loss(&mut tape, conv, Some(&mut dropout_rng))?;
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    let culprit = model
                        .params
                        .iter()
                        .find(|(_, p)| !p.value.is_finite())
                        .map_or("none (finite parameters)", |(n, _)| n);
                    return Err(Error::Numeric(format!(
                        "non-finite loss {value} at epoch {epoch}, step {step}, conversation {:?}; first non-finite parameter: {culprit}",
                        conv.id
                    )));
                }
                tape.backward(loss)?;
                tape.accumulate_into(&mut model.params)?;
                loss_sum += value;
                batch_utts += n;
            }
            utterances += batch_utts;
            model.params.scale_grads(1.0 / batch_utts as f64);
            adam.step(&mut model.params).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("step {step}: {msg}")),
                other => other,
            })?;
        }
        let validation_accuracy = match validate.as_mut() {
            Some(v) => Some(v(&model)?),
            None => None,
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / utterances as f64,
            validation_accuracy,
        });
        if let Some(acc) = validation_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            if config.early_stop_patience.is_some_and(|p| stale >= p) {
                break;
            }
        }
    }
    let epochs_run = history.len();
    let (best_validation_accuracy, best_epoch) = match best {
        Some((acc, epoch, params)) => {
            model.params.copy_values_from(&params);
            (Some(acc), epoch)
        }
        None => (None, epochs_run),
    };
    model.params.zero_grads();
    let report = TrainReport {
        seed,
        epochs_run,
        best_epoch,
        best_validation_accuracy,
        history,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
