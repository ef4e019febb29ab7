use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::optim::{Adamax, AdamaxConfig, ScheduleConfig};
use crate::data::{AnnotationRecord, Dataset, Prediction, Split};
use crate::error::{Error, Result};
use crate::layers::argmax;
use crate::metrics::{score, vqa_score, AccuracyRule, EvalResult};
use crate::model::{Example, VqaModel};
use crate::params::InitRng;
use crate::tensor::{Tape, Var};

/// Random stream for weight initialization.
pub const INIT_STREAM: u64 = 0;
/// Random stream for the per-epoch shuffle.
pub const SHUFFLE_STREAM: u64 = 1;

/// Seeded generator on one of the two streams above.
pub fn seeded_rng(seed: u64, stream: u64) -> InitRng {
    let mut rng = InitRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr_multiplier: f64,
    pub mean_loss: f64,
    /// Running accuracy over the epoch's training batches.
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Training questions whose designated answer is outside the answer
    /// vocabulary.
    pub skipped_instances: usize,
    /// Optimizer steps dropped because of non-finite gradients.
    pub skipped_steps: usize,
}

pub const CSV_HEADER: &str = "epoch,lr_multiplier,mean_loss,train_acc,val_acc";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.lr_multiplier, e.mean_loss, e.train_acc, e.val_acc
            );
        }
        out
    }

    pub fn from_csv(text: &str, source_name: &str) -> Result<Vec<EpochRecord>> {
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(Error::Parse {
                source_name: source_name.into(),
                location: "line 1".into(),
                detail: format!("expected header '{CSV_HEADER}'"),
            });
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let bad = |detail: String| Error::Parse {
                    source_name: source_name.into(),
                    location: format!("line {}", i + 2),
                    detail,
                };
                let cells: Vec<&str> = line.split(',').collect();
                if cells.len() != 5 {
                    return Err(bad(format!("expected 5 cells, got {}", cells.len())));
                }
                let num = |j: usize| cells[j].parse::<f64>().map_err(|e| bad(e.to_string()));
                Ok(EpochRecord {
                    epoch: cells[0].parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                    lr_multiplier: num(1)?,
                    mean_loss: num(2)?,
                    train_acc: num(3)?,
                    val_acc: num(4)?,
                })
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean cross-entropy of `batch` on one tape, plus each example's argmax.
pub fn batch_loss<'t>(
    model: &VqaModel,
    tape: &'t Tape,
    batch: &[&Example],
) -> Result<(Var<'t>, Vec<usize>)> {
    let mut total: Option<Var<'t>> = None;
    let mut predicted = Vec::with_capacity(batch.len());
    for ex in batch {
        let target = ex.target.ok_or_else(|| {
            Error::Contract(format!("question {} has no answer index", ex.question_id))
        })?;
        let logits = model.forward(tape, ex)?;
        predicted.push(argmax(logits.value().data()));
        let loss = logits.cross_entropy(target)?;
        total = Some(match total {
            Some(t) => t.add(&loss)?,
            None => loss,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("empty batch".into()))?;
    Ok((total.scale(1.0 / batch.len() as f64), predicted))
}

/// Mini-batch Adamax training. Each epoch reshuffles the in-vocabulary
/// training examples, then scores the validation split.
pub fn train(
    model: &mut VqaModel,
    data: &Dataset,
    config: &TrainConfig,
    schedule: &ScheduleConfig,
) -> Result<TrainLog> {
    config.validate()?;
    schedule.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Validation("training needs non-empty train and val splits".into()));
    }
    let examples = model.prepare(&data.train)?;
    let val_examples = model.prepare(&data.val)?;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..examples.len())
        .filter(|&i| examples[i].target.is_some())
        .collect();
    log.skipped_instances = examples.len() - order.len();
    if log.skipped_instances > 0 {
        log::warn!(
            "skipping {} training questions whose answer is outside the vocabulary",
            log.skipped_instances
        );
    }
    if order.is_empty() {
        return Err(Error::Validation("no training question has an in-vocabulary answer".into()));
    }

    let mut rng = seeded_rng(config.seed, SHUFFLE_STREAM);
    let mut optimizer = Adamax::new(&model.store, AdamaxConfig::default());
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr_multiplier = schedule.multiplier(epoch as i64)?;
        let (mut loss_sum, mut score_sum, mut seen) = (0.0, 0u64, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let tape = Tape::new();
            let (loss, predicted) = batch_loss(model, &tape, &batch)?;
            let grads = tape.backward(loss)?;
            for (&i, p) in chunk.iter().zip(&predicted) {
                let answer = model.answers.answer(*p)?;
                score_sum += u64::from(vqa_score(answer, &data.train.annotations[i].answers, AccuracyRule::Literal)?.0);
            }
            loss_sum += loss.item() * batch.len() as f64;
            seen += batch.len();

            model.store.zero_grads();
            grads.accumulate_into(&mut model.store);
            let stepped = optimizer.step(&mut model.store, |group| {
                schedule.lr(epoch as i64, group).unwrap_or(0.0)
            });
            if let Err(e @ Error::NumericDomain { .. }) = stepped {
                log::warn!("epoch {epoch}: skipped an optimizer step: {e}");
                log.skipped_steps += 1;
            } else {
                stepped?;
            }
        }
        model.store.zero_grads();
        let val = evaluate_examples(model, &val_examples, &data.val.annotations, AccuracyRule::Literal)?;
        let record = EpochRecord {
            epoch,
            lr_multiplier,
            mean_loss: loss_sum / seen as f64,
            train_acc: score_sum as f64 / (30.0 * seen as f64),
            val_acc: val.overall,
        };
        log::info!(
            "epoch {epoch:>2}  lr x{lr_multiplier:.4}  loss {:.4}  train {:.4}  val {:.4}",
            record.mean_loss,
            record.train_acc,
            record.val_acc
        );
        log.epochs.push(record);
    }
    Ok(log)
}

/// Argmax answer for every example.
pub fn predict_examples(model: &VqaModel, examples: &[Example]) -> Result<Vec<Prediction>> {
    examples
        .iter()
        .map(|ex| {
            Ok(Prediction {
                question_id: ex.question_id,
                answer: model.predict_answer(ex)?.to_string(),
            })
        })
        .collect()
}

pub fn predict(model: &VqaModel, split: &Split) -> Result<Vec<Prediction>> {
    predict_examples(model, &model.prepare(split)?)
}

fn evaluate_examples(
    model: &VqaModel,
    examples: &[Example],
    annotations: &[AnnotationRecord],
    rule: AccuracyRule,
) -> Result<EvalResult> {
    score(&predict_examples(model, examples)?, annotations, rule)
}

/// Scores the model's answers on `split`; parameters are untouched.
pub fn evaluate(model: &VqaModel, split: &Split, rule: AccuracyRule) -> Result<EvalResult> {
    if split.is_empty() {
        return Err(Error::Validation("cannot evaluate an empty split".into()));
    }
    evaluate_examples(model, &model.prepare(split)?, &split.annotations, rule)
}
