//! Mini-batch training on a sample set.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audit::{Phase, PhaseGuard};
use crate::dataset::SampleSet;
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::stream;

use super::adam::{AdamConfig, AdamState};
use super::net::backward;
use super::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            epochs: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::invalid("learning rate must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub accuracy: f64,
}

/// Owns a parameter copy, optimizer state, and shuffle stream; steps through
/// seeded mini-batches. One `Trainer` run is bit-reproducible from
/// (initial params, config).
pub struct Trainer {
    params: ModelParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    cfg: TrainConfig,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(params.len());
        let rng = stream(cfg.seed);
        Ok(Trainer {
            params,
            adam,
            rng,
            cfg,
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    fn next_batch(&mut self, n: usize) -> Vec<usize> {
        if self.order.len() != n || self.cursor >= n {
            self.order = (0..n).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.cfg.batch_size).min(n);
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// One optimizer step on the next mini-batch. Returns (sum loss, correct
    /// count, batch size) computed at the pre-step parameters.
    fn step(&mut self, data: &SampleSet) -> Result<(f64, usize, usize)> {
        let samples = data.samples();
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let batch = self.next_batch(samples.len());
        let params = &self.params;
        let results = parallel::map_indexed(batch.len(), |j| {
            let s = &samples[batch[j]];
            backward(params, &s.window, s.label).map(|(loss, grad)| {
                let correct = (loss < std::f64::consts::LN_2) as usize;
                (loss, grad, correct)
            })
        });

        // Fixed-order reduction keeps the update bit-identical across the
        // parallel and sequential execution modes.
        let inv = 1.0 / batch.len() as f64;
        let mut mean_grad = self.params.zeros_like();
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for r in results {
            let (loss, grad, c) = r?;
            loss_sum += loss;
            correct += c;
            for (m, g) in mean_grad.data_mut().iter_mut().zip(grad.data()) {
                *m += g;
            }
        }
        for m in mean_grad.data_mut().iter_mut() {
            *m *= inv;
        }
        let adam_cfg = self.cfg.adam();
        self.adam
            .step(self.params.data_mut(), mean_grad.data(), &adam_cfg);
        Ok((loss_sum, correct, batch.len()))
    }

    /// One pass over the data in seeded shuffled order.
    pub fn run_epoch(&mut self, data: &SampleSet) -> Result<EpochStats> {
        let _g = PhaseGuard::enter(Phase::Training);
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = data.len();
        let steps = n.div_ceil(self.cfg.batch_size);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for _ in 0..steps {
            let (l, c, b) = self.step(data)?;
            loss_sum += l;
            correct += c;
            seen += b;
        }
        Ok(EpochStats {
            mean_loss: loss_sum / seen as f64,
            accuracy: correct as f64 / seen as f64,
        })
    }

    /// Exactly `steps` optimizer steps (mini-batches cycle through reshuffles).
    pub fn run_steps(&mut self, data: &SampleSet, steps: usize) -> Result<EpochStats> {
        let _g = PhaseGuard::enter(Phase::Training);
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for _ in 0..steps {
            let (l, c, b) = self.step(data)?;
            loss_sum += l;
            correct += c;
            seen += b;
        }
        Ok(EpochStats {
            mean_loss: if seen > 0 { loss_sum / seen as f64 } else { 0.0 },
            accuracy: if seen > 0 { correct as f64 / seen as f64 } else { 0.0 },
        })
    }
}

/// Train a copy of `params` for `cfg.epochs` epochs of mini-batch Adam on
/// mean binary cross-entropy. The input parameters are left untouched.
pub fn train_local(
    params: &ModelParams,
    data: &SampleSet,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    let mut trainer = Trainer::new(params.clone(), cfg.clone())?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for _ in 0..cfg.epochs {
        trainer.run_epoch(data)?;
    }
    Ok(trainer.into_params())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::arch::ArchitectureConfig;
    use crate::model::net::forward;
    use crate::dataset::LabeledSample;
    use crate::window::PhaseWindow;

    fn tiny_arch() -> ArchitectureConfig {
        ArchitectureConfig {
            input_h: 8,
            input_w: 16,
            stem_channels: 3,
            stem_stride: (2, 2),
            stem_pool: (1, 2),
            block_channels: vec![3],
            convs_per_block: 4,
            kernel: 3,
        }
    }

    fn toy_set() -> SampleSet {
        // Class 1 windows carry much larger values than class 0.
        let mut samples = Vec::new();
        for i in 0..6 {
            let scale = if i % 2 == 0 { 0.05 } else { 1.0 };
            let data: Vec<f32> = (0..8 * 16)
                .map(|j| scale * ((j % 7) as f32 - 3.0) / 3.0)
                .collect();
            samples.push(LabeledSample {
                window: PhaseWindow::from_data(8, 16, data, 0, 0.0, "t").unwrap(),
                label: (i % 2) as u8,
            });
        }
        SampleSet::new(samples)
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let arch = tiny_arch();
        let p = ModelParams::init(&arch, 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train_local(&p, &toy_set(), &cfg).unwrap();
        assert_eq!(out.data(), p.data());
    }

    #[test]
    fn training_is_deterministic() {
        let arch = tiny_arch();
        let p = ModelParams::init(&arch, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 9,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let a = train_local(&p, &toy_set(), &cfg).unwrap();
        let b = train_local(&p, &toy_set(), &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        let other = TrainConfig { seed: 10, ..cfg };
        let c = train_local(&p, &toy_set(), &other).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn separable_sample_converges() {
        let arch = tiny_arch();
        let p = ModelParams::init(&arch, 5).unwrap();
        let one = SampleSet::new(toy_set().samples()[..1].to_vec());
        let cfg = TrainConfig {
            learning_rate: 5e-3,
            epochs: 200,
            batch_size: 1,
            seed: 2,
            ..TrainConfig::default()
        };
        let trained = train_local(&p, &one, &cfg).unwrap();
        let s = &one.samples()[0];
        let y_hat = forward(&trained, &s.window).unwrap();
        let loss = crate::model::net::bce_loss(y_hat, s.label);
        assert!(loss < 0.01, "loss {loss}");
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let arch = tiny_arch();
        let p = ModelParams::init(&arch, 3).unwrap();
        let empty = SampleSet::new(Vec::new());
        assert!(matches!(
            train_local(&p, &empty, &TrainConfig::default()),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn training_leaves_input_params_untouched() {
        let arch = tiny_arch();
        let p = ModelParams::init(&arch, 3).unwrap();
        let before = p.flatten();
        let cfg = TrainConfig {
            epochs: 1,
            seed: 4,
            ..TrainConfig::default()
        };
        let _ = train_local(&p, &toy_set(), &cfg).unwrap();
        assert_eq!(p.flatten(), before);
    }

    #[test]
    fn epochs_mark_training_phase_reads() {
        let arch = tiny_arch();
        let p = ModelParams::init(&arch, 3).unwrap();
        let data = toy_set();
        let cfg = TrainConfig {
            epochs: 2,
            seed: 4,
            ..TrainConfig::default()
        };
        let _ = train_local(&p, &data, &cfg).unwrap();
        assert!(data.counters().reads(Phase::Training) > 0);
        assert_eq!(data.counters().reads(Phase::Evaluation), 0);
    }
}
