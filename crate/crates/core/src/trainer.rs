//! Whole-utterance uPIT training loop: Adam with gradient clipping,
//! per-epoch validation, best-epoch model selection, and a single-example
//! overfit diagnostic.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::{upit_score, Metric, PermutationResult};
use crate::mixture::LoadedExample;
use crate::optim::{adam_step, AdamState};
use crate::separator::{ModelConfig, SeparatorModel};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Validation metric used for model selection.
    pub select_metric: Metric,
    /// Halve the learning rate after this many epochs without validation
    /// improvement; 0 keeps the rate constant.
    pub lr_halve_patience: usize,
    /// Stop once the validation score reaches this value, if set.
    pub stop_at_val_db: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 150,
            lr: 0.001,
            batch_size: 1,
            clip_norm: 5.0,
            seed: 0,
            select_metric: Metric::SdSdr,
            lr_halve_patience: 0,
            stop_at_val_db: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("train.lr must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LogEntry {
    /// Epoch index (or step index for the overfit diagnostic), 1-based for
    /// epochs, 0-based for steps.
    pub index: usize,
    /// Mean negative uPIT SD-SDR over the optimizer steps of this entry.
    pub train_loss: f64,
    /// Validation score in dB under the selection metric.
    pub val_db: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    /// 1-based index into `entries` of the best validation score.
    pub best_epoch: usize,
    pub optimizer_steps: usize,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_db,seconds\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{:.6},{:.4},{:.3}", e.index, e.train_loss, e.val_db, e.seconds);
        }
        out
    }

    /// Plot-ready whitespace table (gnuplot: `plot "log.dat" using 1:2`).
    pub fn to_plot(&self) -> String {
        let mut out = String::from("# epoch train_loss val_db seconds\n");
        for e in &self.entries {
            let _ = writeln!(out, "{} {:.6} {:.4} {:.3}", e.index, e.train_loss, e.val_db, e.seconds);
        }
        out
    }
}

pub struct TrainOutcome {
    pub best: SeparatorModel<f32>,
    pub last: SeparatorModel<f32>,
    pub log: TrainLog,
}

/// Builds the uPIT loss for one example on the tape: the permutation is
/// chosen on SD-SDR values, then the loss is the negative total over the
/// chosen pairs. Returns the loss node, the chosen permutation, and the
/// parameter leaf map for gradient extraction.
fn example_loss(
    tape: &mut Tape<f32>,
    model: &SeparatorModel<f32>,
    example: &LoadedExample,
) -> Result<(Var, PermutationResult, VarMap)> {
    let (ests, vars) = model.forward_tape(tape, &example.mixture)?;
    let est_values: Vec<Vec<f32>> =
        ests.iter().map(|&v| tape.value(v).data().to_vec()).collect();
    let est_slices: Vec<&[f32]> = est_values.iter().map(|v| v.as_slice()).collect();
    let ref_slices: Vec<&[f32]> = example.references.iter().map(|v| v.as_slice()).collect();
    let perm = upit_score(&est_slices, &ref_slices, Metric::SdSdr)?;

    let mut total: Option<Var> = None;
    for (e, &r) in perm.assignment.iter().enumerate() {
        let reference = Tensor::from_vec(
            vec![example.references[r].len()],
            example.references[r].clone(),
        );
        let s = tape.sd_sdr(ests[e], reference);
        total = Some(match total {
            None => s,
            Some(acc) => tape.add(acc, s),
        });
    }
    let loss = tape.scale(total.expect("at least one speaker"), -1.0);
    Ok((loss, perm, vars))
}

/// Copies every parameter gradient off the tape into the store.
fn pull_grads(tape: &Tape<f32>, vars: &VarMap, params: &mut crate::param::ParamStore<f32>) {
    for (name, &var) in vars {
        params.accumulate_grad(name, &tape.grad(var));
    }
}

/// Mean best-permutation score over a validation set; no parameter updates.
pub fn validate(
    model: &SeparatorModel<f32>,
    examples: &[LoadedExample],
    metric: Metric,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArg("validation set is empty".into()));
    }
    let mut sum = 0.0;
    for ex in examples {
        let ests = model.separate(&ex.mixture)?;
        let est_slices: Vec<&[f32]> = ests.iter().map(|v| v.as_slice()).collect();
        let ref_slices: Vec<&[f32]> = ex.references.iter().map(|v| v.as_slice()).collect();
        sum += upit_score(&est_slices, &ref_slices, metric)?.mean_db();
    }
    Ok(sum / examples.len() as f64)
}

/// Mean SI-SDR improvement of the model's estimates over using the raw
/// mixture as the estimate for every speaker.
pub fn si_sdr_improvement(
    model: &SeparatorModel<f32>,
    examples: &[LoadedExample],
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidArg("evaluation set is empty".into()));
    }
    let mut sum = 0.0;
    for ex in examples {
        let ests = model.separate(&ex.mixture)?;
        let est_slices: Vec<&[f32]> = ests.iter().map(|v| v.as_slice()).collect();
        let ref_slices: Vec<&[f32]> = ex.references.iter().map(|v| v.as_slice()).collect();
        let separated = upit_score(&est_slices, &ref_slices, Metric::SiSdr)?.mean_db();
        let baseline = ex
            .references
            .iter()
            .map(|r| crate::metrics::si_sdr(&ex.mixture, r))
            .sum::<Result<f64>>()?
            / ex.references.len() as f64;
        sum += separated - baseline;
    }
    Ok(sum / examples.len() as f64)
}

/// Whole-utterance training: forward, uPIT SD-SDR, backprop, clip, Adam;
/// validates after every epoch and returns the best-validation model.
pub fn train(
    model_config: &ModelConfig,
    config: &TrainConfig,
    train_set: &[LoadedExample],
    val_set: &[LoadedExample],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArg("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::InvalidArg("validation set is empty".into()));
    }
    let val_ids: HashSet<&str> = val_set.iter().map(|e| e.id.as_str()).collect();

    let mut model = SeparatorModel::<f32>::init(model_config.clone(), config.seed)?;
    let mut adam = AdamState::new(&model.params, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut log = TrainLog::default();
    let mut best: Option<(f64, SeparatorModel<f32>)> = None;
    let mut epochs_since_best = 0usize;
    let mut stepped_ids: HashSet<String> = HashSet::new();

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks(config.batch_size) {
            for &i in batch {
                let ex = &train_set[i];
                if val_ids.contains(ex.id.as_str()) {
                    return Err(Error::InvalidArg(format!(
                        "example '{}' appears in both train and validation sets",
                        ex.id
                    )));
                }
                stepped_ids.insert(ex.id.clone());
                let mut tape = Tape::new();
                let (loss, _, vars) = example_loss(&mut tape, &model, ex)?;
                let value = tape.value(loss).item() as f64;
                if !value.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at example '{}' (epoch {epoch})",
                        ex.id
                    )));
                }
                loss_sum += value;
                loss_count += 1;
                tape.backward(loss);
                pull_grads(&tape, &vars, &mut model.params);
            }
            if batch.len() > 1 {
                model.params.scale_grads(1.0 / batch.len() as f32);
            }
            model.params.clip_global_grad_norm(config.clip_norm);
            adam_step(&mut model.params, &mut adam);
            log.optimizer_steps += 1;
        }

        debug_assert!(stepped_ids.iter().all(|id| !val_ids.contains(id.as_str())));
        let val_db = validate(&model, val_set, config.select_metric)?;
        log.entries.push(LogEntry {
            index: epoch,
            train_loss: loss_sum / loss_count.max(1) as f64,
            val_db,
            seconds: start.elapsed().as_secs_f64(),
        });

        let improved = best.as_ref().map_or(true, |(b, _)| val_db > *b);
        if improved {
            best = Some((val_db, model.clone()));
            log.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if config.lr_halve_patience > 0 && epochs_since_best >= config.lr_halve_patience {
                adam.lr /= 2.0;
                epochs_since_best = 0;
            }
        }
        if config.stop_at_val_db.is_some_and(|target| val_db >= target) {
            break;
        }
    }

    let best = best.expect("at least one epoch ran").1;
    Ok(TrainOutcome { best, last: model, log })
}

/// Names and vars in the same order `forward_tape` registered them. The
/// tape registers parameters as its first leaves, sorted by name.
fn register_order(tape: &Tape<f32>, model: &SeparatorModel<f32>) -> Vec<(String, Var)> {
    let _ = tape;
    let mut out = Vec::with_capacity(model.params.len());
    for (i, (name, _)) in model.params.iter().enumerate() {
        out.push((name.to_string(), Var::from_index(i)));
    }
    out
}

/// Trains on a single example for `steps` optimizer steps; entry `i` logs
/// the loss of the forward pass before update `i`, so entry 0 is the
/// untrained loss.
pub fn overfit_single_batch(
    model_config: &ModelConfig,
    example: &LoadedExample,
    steps: usize,
    config: &TrainConfig,
) -> Result<(SeparatorModel<f32>, TrainLog)> {
    config.validate()?;
    let mut model = SeparatorModel::<f32>::init(model_config.clone(), config.seed)?;
    let mut adam = AdamState::new(&model.params, config.lr);
    let mut log = TrainLog::default();

    for step in 0..=steps {
        let start = Instant::now();
        let mut tape = Tape::new();
        let (loss, perm) = example_loss(&mut tape, &model, example)?;
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at example '{}' (step {step})",
                example.id
            )));
        }
        let current_db = perm.mean_db();
        log.entries.push(LogEntry {
            index: step,
            train_loss: value,
            val_db: current_db,
            seconds: start.elapsed().as_secs_f64(),
        });
        if config.stop_at_val_db.is_some_and(|target| current_db >= target) {
            break;
        }
        if step == steps {
            break;
        }
        tape.backward(loss);
        for (name, var) in register_order(&tape, &model) {
            model.params.accumulate_grad(&name, &tape.grad(var));
        }
        model.params.clip_global_grad_norm(config.clip_norm);
        adam_step(&mut model.params, &mut adam);
        log.optimizer_steps += 1;
    }
    let best_idx = log
        .entries
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.val_db.partial_cmp(&b.1.val_db).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    log.best_epoch = best_idx + 1;
    Ok((model, log))
}
