use log::info;
use pillarmatch_autodiff::Graph;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss, match_counts, Adam, AdamConfig, LossKind, MatchCounts};
use crate::cloud::CorrespondenceLabels;
use crate::network::{ModelParameters, NormUsage, PairInput};
use crate::transport::extract_matches;
use crate::{Error, Result};

/// A network input with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub input: PairInput<f32>,
    pub labels: CorrespondenceLabels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub adam: AdamConfig,
    /// Stop after this many optimizer steps, even mid-epoch.
    pub max_steps: Option<u64>,
    /// Checkpoint every this many epochs; `None` only at the end.
    pub checkpoint_every: Option<usize>,
    /// Confidence threshold for the precision/accuracy readout.
    pub match_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 16,
            seed: 0,
            loss: LossKind::Nllp,
            adam: AdamConfig::default(),
            max_steps: None,
            checkpoint_every: None,
            match_threshold: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps completed so far.
    pub steps: u64,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    pub precision: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: ModelParameters<f32>,
    pub optimizer: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(model: ModelParameters<f32>, adam: AdamConfig) -> Self {
        let optimizer = Adam::new(adam, model.tensors());
        TrainState {
            model,
            optimizer,
            epoch: 0,
            history: Vec::new(),
        }
    }
}

/// Mean loss of `batch` under `kind`, in training mode, with its gradient
/// applied by one Adam step. Returns the loss before the step and the
/// match counts of the training-mode assignment.
pub fn train_step(state: &mut TrainState, batch: &[&TrainingPair], kind: LossKind, threshold: f64) -> Result<(f64, MatchCounts)> {
    let mut g = Graph::<f32>::new();
    let vars = state.model.bind(&mut g)?;
    let inputs: Vec<&PairInput<f32>> = batch.iter().map(|p| &p.input).collect();
    let out = state.model.forward(&mut g, &vars, &inputs, NormUsage::Batch)?;
    let mut losses = Vec::with_capacity(batch.len());
    let mut counts = MatchCounts::default();
    for (p, o) in batch.iter().zip(&out.pairs) {
        losses.push(loss(&mut g, kind, o.log_assignment, &p.labels)?);
        let pred = extract_matches(g.value(o.log_assignment), threshold)?;
        counts += match_counts(&pred, &p.labels);
    }
    let total = g.sum_scalars(&losses)?;
    let mean = g.scale(total, 1.0 / batch.len() as f32)?;
    let value = g.value(mean).as_slice()[0] as f64;
    let grads = g.backward(mean)?;
    let grads: Vec<_> = vars.iter().map(|&v| grads.get_or_zeros(v, &g)).collect();
    state.optimizer.update(state.model.tensors_mut(), &grads)?;
    state.model.update_running_stats(&out.batch_stats)?;
    Ok((value, counts))
}

/// Epoch order: a permutation seeded by `(seed, epoch)`, so a resumed run
/// sees the same batches as an uninterrupted one.
pub fn epoch_order(len: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

/// Trains from `state` until `config.epochs` epochs (or `max_steps`) are done.
/// `on_epoch` runs after every epoch with the updated state.
pub fn train(
    data: &[TrainingPair],
    config: &TrainConfig,
    mut state: TrainState,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if let Some(k) = data.iter().position(|p| p.labels.gt_count() == 0) {
        return Err(Error::Argument(format!("training pair {k} has no ground-truth cells")));
    }
    while state.epoch < config.epochs {
        if config.max_steps.is_some_and(|m| state.optimizer.step >= m) {
            break;
        }
        let order = epoch_order(data.len(), config.seed, state.epoch);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        let mut counts = MatchCounts::default();
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| state.optimizer.step >= m) {
                break;
            }
            let batch: Vec<&TrainingPair> = chunk.iter().map(|&k| &data[k]).collect();
            let (l, c) = train_step(&mut state, &batch, config.loss, config.match_threshold)?;
            loss_sum += l;
            batches += 1;
            counts += c;
        }
        state.epoch += 1;
        let record = EpochRecord {
            epoch: state.epoch,
            steps: state.optimizer.step,
            loss: loss_sum / batches.max(1) as f64,
            precision: counts.precision(),
            accuracy: counts.accuracy(),
        };
        info!(
            "epoch {} steps {} loss {:.5} precision {:.4} accuracy {:.4}",
            record.epoch, record.steps, record.loss, record.precision, record.accuracy
        );
        state.history.push(record);
        on_epoch(&state)?;
    }
    Ok(state)
}

/// Eval-mode match counts of `model` over `data`.
pub fn evaluate_matching(model: &ModelParameters<f32>, data: &[TrainingPair], threshold: f64) -> Result<MatchCounts> {
    let mut counts = MatchCounts::default();
    for p in data {
        let a = model.infer(&p.input)?;
        counts += match_counts(&extract_matches(&a.log_p, threshold)?, &p.labels);
    }
    Ok(counts)
}
