//! Executes one experiment spec across its seeds.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::dataset::{split, DatasetSplit, SampleSet};
use crate::error::{Error, Result};
use crate::fedavg::{init_federation, FedSchedule};
use crate::metrics::{eval_loss_acc, evaluate};
use crate::model::{ModelParams, TrainConfig, Trainer};
use crate::profile::reference_profile;
use crate::reptile::{fine_tune, meta_train, sample_support};
use crate::rng::mix;
use crate::synth::synthesize_dataset;

use super::{
    split_ratio, CellResult, Case, EpochRow, ExperimentReport, ExperimentSpec, SeededFedRow,
    ShotRow, Strategy,
};

/// Per-node datasets for one run seed.
struct DataBundle {
    splits: BTreeMap<String, DatasetSplit>,
}

impl DataBundle {
    fn build(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let mut nodes: Vec<&String> = spec.train_nodes.iter().chain(&spec.test_nodes).collect();
        nodes.sort();
        nodes.dedup();
        let mut splits = BTreeMap::new();
        for node in nodes {
            let profile = reference_profile(node)?;
            let n = spec.run.sizes.for_node(node)?;
            let data_seed = mix(spec.run.data_seed, seed);
            let samples = synthesize_dataset(&profile, n, spec.run.class_balance, data_seed)?;
            let split_seed = mix(mix(seed, 0x73706c69), profile.seed);
            let ds = split(samples, split_ratio(node), split_seed)?;
            splits.insert(node.clone(), ds);
        }
        Ok(DataBundle { splits })
    }

    fn get(&self, node: &str) -> &DatasetSplit {
        &self.splits[node]
    }

    fn take_all(self, order: &[String]) -> Vec<DatasetSplit> {
        let mut map = self.splits;
        order
            .iter()
            .map(|n| map.remove(n).expect("node present"))
            .collect()
    }
}

/// Concatenate the train splits of several nodes into one pool.
fn pooled_train(bundle: &DataBundle, nodes: &[String]) -> SampleSet {
    let mut merged = Vec::new();
    for node in nodes {
        merged.extend_from_slice(bundle.get(node).train.samples());
    }
    SampleSet::new(merged)
}

pub fn run_case(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let t0 = Instant::now();
    let mut report = ExperimentReport {
        label: spec.label(),
        config_digest: spec.digest(),
        ..ExperimentReport::default()
    };
    for &seed in &spec.run.seeds {
        match spec.strategy {
            Strategy::Independent | Strategy::Universal => {
                run_pooled(spec, seed, &mut report)?;
            }
            Strategy::Federated => run_federated(spec, seed, &mut report)?,
            Strategy::Meta => run_meta(spec, seed, &mut report)?,
        }
    }
    report.runtime_s = t0.elapsed().as_secs_f64();
    Ok(report)
}

fn approach(spec: &ExperimentSpec) -> String {
    spec.strategy.label(spec.train_nodes.len())
}

fn push_cell(report: &mut ExperimentReport, spec: &ExperimentSpec, seed: u64, test: &str, accuracy: f64) {
    report.cells.push(CellResult {
        approach: approach(spec),
        case: spec.case.tag(),
        training: spec.training_label(),
        test: test.to_string(),
        seed,
        accuracy,
    });
}

/// Independent and universal strategies: plain mini-batch training on the
/// (possibly pooled) train split, with per-epoch validation curves on every
/// test target.
fn run_pooled(spec: &ExperimentSpec, seed: u64, report: &mut ExperimentReport) -> Result<()> {
    let bundle = DataBundle::build(spec, seed)?;
    let train_set = pooled_train(&bundle, &spec.train_nodes);
    let arch = spec.run.arch.config();
    let init = ModelParams::init(&arch, mix(seed, 0x706f6f6c))?;
    let cfg = TrainConfig {
        seed: mix(seed, 0x74726169),
        ..spec.run.train.clone()
    };
    let mut trainer = Trainer::new(init, cfg.clone())?;
    for epoch in 0..cfg.epochs {
        let stats = trainer.run_epoch(&train_set)?;
        report.epoch_rows.push(EpochRow {
            seed,
            epoch,
            split: "train".to_string(),
            loss: stats.mean_loss,
            accuracy: stats.accuracy,
        });
        for node in &spec.test_nodes {
            let (loss, accuracy) = eval_loss_acc(trainer.params(), &bundle.get(node).test)?;
            report.epoch_rows.push(EpochRow {
                seed,
                epoch,
                split: node.clone(),
                loss,
                accuracy,
            });
        }
    }
    for node in &spec.test_nodes {
        let accuracy = evaluate(trainer.params(), &bundle.get(node).test)?;
        push_cell(report, spec, seed, node, accuracy);
    }
    // The SD case additionally proves no training read ever touched the
    // held-out side; cross-node cases prove the target files stayed cold.
    for node in &spec.test_nodes {
        debug_assert_eq!(bundle.get(node).test.counters().learning_reads(), 0);
    }
    Ok(())
}

fn run_federated(spec: &ExperimentSpec, seed: u64, report: &mut ExperimentReport) -> Result<()> {
    let bundle = DataBundle::build(spec, seed)?;
    let datasets = bundle.take_all(&spec.train_nodes);
    let ids: Vec<&str> = spec.train_nodes.iter().map(|s| s.as_str()).collect();
    let arch = spec.run.arch.config();
    let schedule = FedSchedule {
        local_epochs: spec.run.fed.local_epochs,
        rounds: spec.run.fed.rounds,
    };
    let local_train = TrainConfig {
        epochs: schedule.local_epochs,
        ..spec.run.train.clone()
    };
    let mut state = init_federation(
        &ids,
        datasets,
        &arch,
        mix(seed, 0x66656465),
        schedule,
        local_train,
    )?;
    let fed_report = state.run(schedule.rounds)?;
    for row in fed_report.rows {
        report.fed_rows.push(SeededFedRow { seed, row });
    }
    for node in &spec.test_nodes {
        let idx = spec
            .train_nodes
            .iter()
            .position(|n| n == node)
            .ok_or_else(|| Error::invalid(format!("test node '{node}' not in federation")))?;
        let accuracy = evaluate(state.global(), &state.node_split(idx).test)?;
        push_cell(report, spec, seed, node, accuracy);
        debug_assert_eq!(state.node_split(idx).test.counters().learning_reads(), 0);
    }
    Ok(())
}

fn run_meta(spec: &ExperimentSpec, seed: u64, report: &mut ExperimentReport) -> Result<()> {
    let bundle = DataBundle::build(spec, seed)?;
    let sources: Vec<&SampleSet> = spec
        .train_nodes
        .iter()
        .map(|n| &bundle.get(n).train)
        .collect();
    let arch = spec.run.arch.config();
    let cfg = &spec.run.meta;
    let state = meta_train(&sources, &arch, cfg, mix(seed, 0x6d657461))?;
    for (it, record) in state.history.iter().enumerate() {
        report.epoch_rows.push(EpochRow {
            seed,
            epoch: it,
            split: "query".to_string(),
            loss: record.final_inner_loss,
            accuracy: record.query_accuracy,
        });
    }
    if spec.run.eval_shots < 1 || spec.run.eval_shots > cfg.shot_budget {
        return Err(Error::invalid(format!(
            "eval_shots {} outside 1..={}",
            spec.run.eval_shots, cfg.shot_budget
        )));
    }
    for node in &spec.test_nodes {
        let target = bundle.get(node);
        let support = sample_support(&target.train, cfg.shot_budget, mix(seed, 0x73757070))?;
        let mut cell_accuracy = None;
        for shots in 1..=cfg.shot_budget {
            let tuned = fine_tune(&state.model, &support, shots, cfg.finetune_lr)?;
            let accuracy = evaluate(&tuned, &target.test)?;
            report.shot_rows.push(ShotRow {
                seed,
                node: node.clone(),
                shots,
                accuracy,
            });
            if shots == spec.run.eval_shots {
                cell_accuracy = Some(accuracy);
            }
        }
        push_cell(
            report,
            spec,
            seed,
            node,
            cell_accuracy.expect("eval_shots within budget"),
        );
        debug_assert_eq!(target.test.counters().learning_reads(), 0);
    }
    Ok(())
}

/// The same-data reference experiment used by the collapse comparison: the
/// independent strategy trained and tested on the data-rich node.
pub fn sd_reference(run: super::RunConfig) -> Result<ExperimentSpec> {
    ExperimentSpec::reference(Case::SameData, Strategy::Independent, run)
}
