//! Federated averaging across simulated nodes.
//!
//! The five-step loop: a global model is initialized once, every node
//! trains a copy on its own data for a fixed number of local epochs, the
//! parameter vectors travel to the aggregator, a uniform element-wise mean
//! replaces the global model, and the result is redistributed. Samples
//! never leave their node: the orchestrator moves `ModelParams` and metric
//! rows only.

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::metrics::eval_loss_acc;
use crate::model::{ArchitectureConfig, ModelParams, TrainConfig, Trainer};
use crate::rng::mix;

/// Minimum samples a node must hold to join a federation.
pub const MIN_NODE_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FedSchedule {
    /// Local epochs per round between aggregations.
    pub local_epochs: usize,
    /// Federation rounds.
    pub rounds: usize,
}

impl Default for FedSchedule {
    fn default() -> Self {
        // Aggregation every 10 local epochs, three rounds.
        FedSchedule {
            local_epochs: 10,
            rounds: 3,
        }
    }
}

#[derive(Debug)]
struct FedNode {
    id: String,
    model: ModelParams,
    data: DatasetSplit,
}

/// What a metric row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FedEvent {
    /// Snapshot after one local epoch of node training.
    LocalEpoch,
    /// Snapshot of the freshly aggregated global model.
    Aggregation,
}

/// One accuracy/loss measurement: `model` (a node id or "global") scored on
/// `split` (a node id's test split).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedMetricRow {
    pub round: usize,
    pub epoch: usize,
    pub model: String,
    pub split: String,
    pub accuracy: f64,
    pub loss: f64,
    pub event: FedEvent,
}

#[derive(Debug, Clone, Default)]
pub struct FedRunReport {
    pub rows: Vec<FedMetricRow>,
}

#[derive(Debug)]
pub struct FederationState {
    round: usize,
    global: ModelParams,
    nodes: Vec<FedNode>,
    pub schedule: FedSchedule,
    /// Static participation mask; masked-out nodes skip local training and
    /// aggregation but keep receiving the global model.
    pub participation: Vec<bool>,
    local_train: TrainConfig,
    base_seed: u64,
}

/// Uniform (or explicitly weighted) element-wise mean of parameter vectors.
/// Summation folds in slice order, so the result is exactly deterministic.
pub fn aggregate(models: &[&ModelParams], weights: Option<&[f64]>) -> Result<ModelParams> {
    let first = *models.first().ok_or(Error::EmptyDataset)?;
    for m in models.iter().skip(1) {
        first.same_shape(m)?;
    }
    if models.len() == 1 && weights.is_none() {
        return Ok(first.clone());
    }
    let uniform;
    let w: &[f64] = match weights {
        Some(w) => {
            if w.len() != models.len() {
                return Err(Error::invalid("one weight per model required"));
            }
            if w.iter().any(|&x| x < 0.0) {
                return Err(Error::invalid("weights must be non-negative"));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
            }
            w
        }
        None => {
            uniform = vec![1.0 / models.len() as f64; models.len()];
            &uniform
        }
    };
    let mut data = vec![0.0f64; first.len()];
    for (m, &wm) in models.iter().zip(w) {
        for (acc, &v) in data.iter_mut().zip(m.data()) {
            *acc += wm * v;
        }
    }
    Ok(ModelParams::with_data(first.plan().clone(), data))
}

/// Build a federation: a seeded global model, every node model equal to it.
/// Each node must bring at least [`MIN_NODE_SAMPLES`] samples.
pub fn init_federation(
    node_ids: &[&str],
    datasets: Vec<DatasetSplit>,
    arch: &ArchitectureConfig,
    seed: u64,
    schedule: FedSchedule,
    local_train: TrainConfig,
) -> Result<FederationState> {
    if node_ids.len() != datasets.len() {
        return Err(Error::invalid("one dataset per node required"));
    }
    if node_ids.len() < 2 {
        return Err(Error::invalid("a federation needs at least 2 nodes"));
    }
    for (id, d) in node_ids.iter().zip(&datasets) {
        let have = d.train.len() + d.test.len();
        if have < MIN_NODE_SAMPLES {
            return Err(Error::NodeConstraint {
                node: id.to_string(),
                have,
                need: MIN_NODE_SAMPLES,
            });
        }
    }
    let global = ModelParams::init(arch, seed)?;
    let nodes = node_ids
        .iter()
        .zip(datasets)
        .map(|(id, data)| FedNode {
            id: id.to_string(),
            model: global.clone(),
            data,
        })
        .collect();
    let n = node_ids.len();
    Ok(FederationState {
        round: 0,
        global,
        nodes,
        schedule,
        participation: vec![true; n],
        local_train,
        base_seed: seed,
    })
}

impl FederationState {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn global(&self) -> &ModelParams {
        &self.global
    }

    pub fn node_ids(&self) -> Vec<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }

    pub fn node_model(&self, m: usize) -> &ModelParams {
        &self.nodes[m].model
    }

    /// Read-only view of a node's split, for reporting and audits.
    pub fn node_split(&self, m: usize) -> &DatasetSplit {
        &self.nodes[m].data
    }

    fn local_seed(&self, round: usize) -> u64 {
        // Node-independent: two nodes with identical data in the same round
        // produce identical updates.
        mix(self.base_seed, round as u64 + 1)
    }

    fn local_config(&self, round: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.schedule.local_epochs,
            seed: self.local_seed(round),
            ..self.local_train.clone()
        }
    }

    /// One local update for node `m`: train a copy of the current global
    /// model for the scheduled epochs on the node's train split.
    pub fn local_round(&mut self, m: usize) -> Result<()> {
        if !self.participation[m] {
            return Ok(());
        }
        let cfg = self.local_config(self.round);
        let mut trainer = Trainer::new(self.global.clone(), cfg)?;
        for _ in 0..self.schedule.local_epochs {
            trainer.run_epoch(&self.nodes[m].data.train)?;
        }
        self.nodes[m].model = trainer.into_params();
        Ok(())
    }

    /// Score `model` on every node's test split, appending rows.
    fn record(
        &self,
        rows: &mut Vec<FedMetricRow>,
        round: usize,
        epoch: usize,
        model: &ModelParams,
        model_name: &str,
        event: FedEvent,
    ) -> Result<()> {
        for node in &self.nodes {
            let (loss, accuracy) = eval_loss_acc(model, &node.data.test)?;
            rows.push(FedMetricRow {
                round,
                epoch,
                model: model_name.to_string(),
                split: node.id.clone(),
                accuracy,
                loss,
                event,
            });
        }
        Ok(())
    }

    /// Run `rounds` federation rounds, recording per-epoch node-model
    /// accuracy and per-aggregation global accuracy on every test split.
    pub fn run(&mut self, rounds: usize) -> Result<FedRunReport> {
        if rounds == 0 {
            return Err(Error::invalid("rounds must be >= 1"));
        }
        let mut rows = Vec::new();
        for _ in 0..rounds {
            let round = self.round;
            let cfg = self.local_config(round);
            // Local updates run epoch by epoch so the curves show how node
            // models drift away between aggregations.
            let mut trainers: Vec<Option<Trainer>> = Vec::with_capacity(self.nodes.len());
            for &participates in &self.participation {
                trainers.push(if participates {
                    Some(Trainer::new(self.global.clone(), cfg.clone())?)
                } else {
                    None
                });
            }
            for epoch in 0..self.schedule.local_epochs {
                for (m, trainer) in trainers.iter_mut().enumerate() {
                    if let Some(t) = trainer {
                        t.run_epoch(&self.nodes[m].data.train)?;
                    }
                }
                for (m, trainer) in trainers.iter().enumerate() {
                    if let Some(t) = trainer {
                        let name = self.nodes[m].id.clone();
                        self.record(&mut rows, round, epoch, t.params(), &name, FedEvent::LocalEpoch)?;
                    }
                }
            }
            for (m, trainer) in trainers.into_iter().enumerate() {
                if let Some(t) = trainer {
                    self.nodes[m].model = t.into_params();
                }
            }

            // Upload + aggregate + redistribute.
            let participating: Vec<&ModelParams> = self
                .nodes
                .iter()
                .zip(&self.participation)
                .filter(|(_, &p)| p)
                .map(|(n, _)| &n.model)
                .collect();
            if participating.is_empty() {
                return Err(Error::invalid("no participating nodes"));
            }
            self.global = aggregate(&participating, None)?;
            self.round += 1;
            let global = self.global.clone();
            self.record(
                &mut rows,
                round,
                self.schedule.local_epochs,
                &global,
                "global",
                FedEvent::Aggregation,
            )?;
        }
        Ok(FedRunReport { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, LabeledSample};
    use crate::model::train_local;
    use crate::window::PhaseWindow;

    fn tiny_arch() -> ArchitectureConfig {
        ArchitectureConfig {
            input_h: 8,
            input_w: 16,
            stem_channels: 3,
            stem_stride: (2, 2),
            stem_pool: (1, 2),
            block_channels: vec![3],
            convs_per_block: 2,
            kernel: 3,
        }
    }

    fn toy_samples(n: usize, scale: f32) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 0.05 } else { 1.0 } * scale;
                let data: Vec<f32> =
                    (0..8 * 16).map(|j| s * ((j % 5) as f32 - 2.0) / 2.0).collect();
                LabeledSample {
                    window: PhaseWindow::from_data(8, 16, data, 0, 0.0, "t").unwrap(),
                    label: (i % 2) as u8,
                }
            })
            .collect()
    }

    fn toy_split(n: usize, scale: f32) -> DatasetSplit {
        split(toy_samples(n, scale), 0.8, 7).unwrap()
    }

    fn quick_train() -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn aggregate_means_vectors() {
        let arch = tiny_arch();
        let mut a = ModelParams::zeros(&arch).unwrap();
        let mut b = ModelParams::zeros(&arch).unwrap();
        a.data_mut()[0] = 1.0;
        a.data_mut()[1] = 3.0;
        b.data_mut()[0] = 3.0;
        b.data_mut()[1] = 5.0;
        let mean = aggregate(&[&a, &b], None).unwrap();
        assert_eq!(mean.data()[0], 2.0);
        assert_eq!(mean.data()[1], 4.0);
    }

    #[test]
    fn aggregate_single_model_is_bit_identity() {
        let p = ModelParams::init(&tiny_arch(), 3).unwrap();
        let out = aggregate(&[&p], None).unwrap();
        assert_eq!(out.data(), p.data());
    }

    #[test]
    fn aggregate_identical_inputs_stays_within_one_ulp() {
        let p = ModelParams::init(&tiny_arch(), 4).unwrap();
        let out = aggregate(&[&p, &p, &p], None).unwrap();
        for (o, v) in out.data().iter().zip(p.data()) {
            let ulp = (v.abs() * f64::EPSILON).max(f64::MIN_POSITIVE);
            assert!((o - v).abs() <= ulp, "{o} vs {v}");
        }
    }

    #[test]
    fn aggregate_rejects_bad_weights_and_shapes() {
        let a = ModelParams::init(&tiny_arch(), 1).unwrap();
        let b = ModelParams::init(&ArchitectureConfig::compact(), 1).unwrap();
        assert!(aggregate(&[&a, &b], None).is_err());
        let c = a.clone();
        assert!(aggregate(&[&a, &c], Some(&[0.9, 0.2])).is_err());
        assert!(aggregate(&[&a, &c], Some(&[0.5])).is_err());
        assert!(aggregate(&[], None).is_err());
    }

    #[test]
    fn explicit_weights_reproduce_uniform_mean() {
        let a = ModelParams::init(&tiny_arch(), 1).unwrap();
        let b = ModelParams::init(&tiny_arch(), 2).unwrap();
        let uniform = aggregate(&[&a, &b], None).unwrap();
        let weighted = aggregate(&[&a, &b], Some(&[0.5, 0.5])).unwrap();
        assert_eq!(uniform.data(), weighted.data());
    }

    #[test]
    fn init_rejects_underfilled_nodes() {
        let arch = tiny_arch();
        let small = split(toy_samples(4, 1.0), 0.5, 1).unwrap();
        let ok = toy_split(20, 1.0);
        let err = init_federation(
            &["a", "b"],
            vec![ok, small],
            &arch,
            1,
            FedSchedule::default(),
            quick_train(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NodeConstraint { node, .. } if node == "b"));
    }

    #[test]
    fn init_models_are_bit_identical_and_deterministic() {
        let arch = tiny_arch();
        let mk = || {
            init_federation(
                &["a", "b", "c"],
                vec![toy_split(20, 1.0), toy_split(20, 0.5), toy_split(20, 2.0)],
                &arch,
                9,
                FedSchedule::default(),
                quick_train(),
            )
            .unwrap()
        };
        let s1 = mk();
        let s2 = mk();
        assert_eq!(s1.node_count(), 3);
        for m in 0..3 {
            assert_eq!(s1.node_model(m).data(), s1.global().data());
        }
        assert_eq!(s1.global().data(), s2.global().data());
    }

    #[test]
    fn zero_local_epochs_is_a_no_op_round() {
        let arch = tiny_arch();
        let mut state = init_federation(
            &["a", "b"],
            vec![toy_split(20, 1.0), toy_split(20, 0.5)],
            &arch,
            2,
            FedSchedule {
                local_epochs: 0,
                rounds: 1,
            },
            quick_train(),
        )
        .unwrap();
        state.local_round(0).unwrap();
        assert_eq!(state.node_model(0).data(), state.global().data());
    }

    #[test]
    fn identical_nodes_same_seed_update_identically() {
        let arch = tiny_arch();
        let mut state = init_federation(
            &["a", "b"],
            vec![toy_split(20, 1.0), toy_split(20, 1.0)],
            &arch,
            3,
            FedSchedule {
                local_epochs: 2,
                rounds: 1,
            },
            quick_train(),
        )
        .unwrap();
        state.local_round(0).unwrap();
        state.local_round(1).unwrap();
        assert_eq!(state.node_model(0).data(), state.node_model(1).data());
    }

    #[test]
    fn degenerate_federation_matches_sequential_training() {
        // Identical data on both nodes: aggregation of two bit-identical
        // models is exact (division by two), so the global trajectory equals
        // chaining train_local round by round with the same per-round seeds.
        let arch = tiny_arch();
        let schedule = FedSchedule {
            local_epochs: 2,
            rounds: 2,
        };
        let mut state = init_federation(
            &["a", "b"],
            vec![toy_split(20, 1.0), toy_split(20, 1.0)],
            &arch,
            11,
            schedule,
            quick_train(),
        )
        .unwrap();
        let expected_seeds: Vec<u64> = (0..2).map(|r| state.local_seed(r)).collect();
        let mut reference = state.global().clone();
        let data = toy_split(20, 1.0);
        for seed in expected_seeds {
            let cfg = TrainConfig {
                epochs: 2,
                seed,
                batch_size: 4,
                ..TrainConfig::default()
            };
            reference = train_local(&reference, &data.train, &cfg).unwrap();
        }
        state.run(2).unwrap();
        assert_eq!(state.global().data(), reference.data());
    }

    #[test]
    fn run_records_epoch_and_aggregation_rows() {
        let arch = tiny_arch();
        let mut state = init_federation(
            &["a", "b"],
            vec![toy_split(20, 1.0), toy_split(20, 0.5)],
            &arch,
            4,
            FedSchedule {
                local_epochs: 2,
                rounds: 1,
            },
            quick_train(),
        )
        .unwrap();
        let report = state.run(2).unwrap();
        let agg_rows = report
            .rows
            .iter()
            .filter(|r| r.event == FedEvent::Aggregation)
            .count();
        // 2 rounds x 2 splits scored per aggregation.
        assert_eq!(agg_rows, 4);
        let epoch_rows = report
            .rows
            .iter()
            .filter(|r| r.event == FedEvent::LocalEpoch)
            .count();
        // 2 rounds x 2 epochs x 2 node models x 2 splits.
        assert_eq!(epoch_rows, 16);
        assert_eq!(state.round(), 2);
    }

    #[test]
    fn no_training_reads_of_test_splits() {
        use crate::audit::Phase;
        let arch = tiny_arch();
        let mut state = init_federation(
            &["a", "b"],
            vec![toy_split(20, 1.0), toy_split(20, 0.5)],
            &arch,
            5,
            FedSchedule {
                local_epochs: 1,
                rounds: 1,
            },
            quick_train(),
        )
        .unwrap();
        state.run(1).unwrap();
        for m in 0..2 {
            let counters = state.node_split(m).test.counters();
            assert_eq!(counters.learning_reads(), 0);
            assert!(counters.reads(Phase::Evaluation) > 0);
        }
    }

    #[test]
    fn masked_nodes_keep_the_distributed_model() {
        let arch = tiny_arch();
        let mut state = init_federation(
            &["a", "b", "c"],
            vec![toy_split(20, 1.0), toy_split(20, 0.5), toy_split(20, 2.0)],
            &arch,
            6,
            FedSchedule {
                local_epochs: 1,
                rounds: 1,
            },
            quick_train(),
        )
        .unwrap();
        let initial = state.node_model(2).data().to_vec();
        state.participation[2] = false;
        let report = state.run(1).unwrap();
        assert_eq!(state.node_model(2).data(), initial.as_slice());
        assert!(report.rows.iter().all(|r| r.model != "c"));
    }
}
