//! Experiment protocol: SD / DA / DR cases under four training strategies,
//! with CSV reporting.
//!
//! A case names the train/test environment relationship (same node,
//! different areas, different road sections); a strategy names how the
//! model is obtained (independent local training, pooled universal
//! training, federated averaging, or Reptile meta-initialization plus
//! few-shot fine-tuning). Node roles per combination are fixed by
//! [`reference_roles`]; [`reference_matrix`] yields the twelve-row result
//! table, and [`run_matrix`] executes it.

mod report;
mod runner;

pub use report::{write_matrix_csv, write_report_csvs, write_run_manifest};
pub use runner::run_case;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fedavg::{FedMetricRow, FedSchedule};
use crate::model::{ArchitectureConfig, TrainConfig};
use crate::reptile::MetaConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// Train and test data from the same node.
    #[serde(rename = "SD")]
    SameData,
    /// Train and test from geographically distinct areas.
    #[serde(rename = "DA")]
    DifferentAreas,
    /// Train and test from two road sections of one area.
    #[serde(rename = "DR")]
    DifferentRoads,
}

impl Case {
    pub fn tag(self) -> &'static str {
        match self {
            Case::SameData => "SD",
            Case::DifferentAreas => "DA",
            Case::DifferentRoads => "DR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Independent,
    Universal,
    Federated,
    Meta,
}

impl Strategy {
    /// Approach label used in the result table.
    pub fn label(self, n_train_nodes: usize) -> String {
        match self {
            Strategy::Independent => "Independent".to_string(),
            Strategy::Universal => "Universal".to_string(),
            Strategy::Federated => format!("FL-{n_train_nodes}Agents"),
            Strategy::Meta => "Meta".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    Compact,
    Deep,
}

impl ArchPreset {
    pub fn config(self) -> ArchitectureConfig {
        match self {
            ArchPreset::Compact => ArchitectureConfig::compact(),
            ArchPreset::Deep => ArchitectureConfig::deep(),
        }
    }
}

/// Dataset sizes per reference node. Defaults keep the strong imbalance
/// (one data-rich node, two sparse ones) at desk scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeConfig {
    pub red: usize,
    pub ca: usize,
    pub cb: usize,
}

impl Default for SizeConfig {
    fn default() -> Self {
        SizeConfig {
            red: 200,
            ca: 60,
            cb: 60,
        }
    }
}

impl SizeConfig {
    pub fn for_node(&self, node: &str) -> Result<usize> {
        match node {
            "red" => Ok(self.red),
            "ca" => Ok(self.ca),
            "cb" => Ok(self.cb),
            other => Err(Error::invalid(format!("unknown node '{other}'"))),
        }
    }
}

/// Train/test split ratio per reference node: the data-rich node keeps a
/// thin test slice, sparse nodes hold back more for testing.
pub fn split_ratio(node: &str) -> f64 {
    if node == "red" {
        0.94
    } else {
        0.8
    }
}

/// Everything a run needs besides the (case, strategy) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sizes: SizeConfig,
    pub class_balance: f64,
    /// Mixed with each run seed to derive dataset seeds.
    pub data_seed: u64,
    pub arch: ArchPreset,
    /// Optimizer settings for independent / universal / federated local
    /// training. `epochs` applies to independent and universal runs.
    pub train: TrainConfig,
    pub fed: FedSchedule,
    pub meta: MetaConfig,
    /// Shots spent for the reported meta cell (the sweep covers
    /// 1..=meta.shot_budget regardless).
    pub eval_shots: usize,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sizes: SizeConfig::default(),
            class_balance: 0.5,
            data_seed: 7,
            arch: ArchPreset::Compact,
            train: TrainConfig {
                epochs: 20,
                learning_rate: 3e-3,
                batch_size: 8,
                ..TrainConfig::default()
            },
            fed: FedSchedule::default(),
            meta: MetaConfig::default(),
            eval_shots: 5,
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

/// One experiment: a (case, strategy) pair with its node roles and configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub case: Case,
    pub strategy: Strategy,
    pub train_nodes: Vec<String>,
    pub test_nodes: Vec<String>,
    pub run: RunConfig,
}

/// The fixed node roles per (case, strategy) combination.
pub fn reference_roles(case: Case, strategy: Strategy) -> Result<(Vec<&'static str>, Vec<&'static str>)> {
    use Case::*;
    use Strategy::*;
    let roles = match (case, strategy) {
        (SameData, Independent) => (vec!["red"], vec!["red"]),
        (DifferentAreas, Independent) => (vec!["red"], vec!["ca"]),
        (DifferentRoads, Independent) => (vec!["cb"], vec!["ca"]),
        (DifferentAreas, Universal) => (vec!["red", "ca", "cb"], vec!["red", "ca"]),
        (DifferentRoads, Universal) => (vec!["ca", "cb"], vec!["ca"]),
        (DifferentAreas, Federated) => (vec!["red", "ca", "cb"], vec!["red", "ca", "cb"]),
        (DifferentRoads, Federated) => (vec!["ca", "cb"], vec!["ca", "cb"]),
        (DifferentAreas, Meta) => (vec!["red"], vec!["ca"]),
        (DifferentRoads, Meta) => (vec!["cb"], vec!["ca"]),
        (SameData, _) => {
            return Err(Error::invalid(
                "the same-data case is defined for the independent strategy only",
            ))
        }
    };
    Ok(roles)
}

impl ExperimentSpec {
    /// Build the reference experiment for a (case, strategy) pair.
    pub fn reference(case: Case, strategy: Strategy, run: RunConfig) -> Result<Self> {
        let (train, test) = reference_roles(case, strategy)?;
        Ok(ExperimentSpec {
            case,
            strategy,
            train_nodes: train.iter().map(|s| s.to_string()).collect(),
            test_nodes: test.iter().map(|s| s.to_string()).collect(),
            run,
        })
    }

    /// Short label like `da_federated`, used for file names.
    pub fn label(&self) -> String {
        format!(
            "{}_{:?}",
            self.case.tag().to_lowercase(),
            self.strategy
        )
        .to_lowercase()
    }

    /// Training-set label for the result table ("red", "all", "ca+cb").
    pub fn training_label(&self) -> String {
        if self.train_nodes.len() == 3 {
            "all".to_string()
        } else {
            self.train_nodes.join("+")
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.seeds.is_empty() {
            return Err(Error::invalid("seed list must not be empty"));
        }
        if !(self.run.class_balance > 0.0 && self.run.class_balance < 1.0) {
            return Err(Error::invalid("class_balance must be in (0, 1)"));
        }
        let (train, test) = reference_roles(self.case, self.strategy)?;
        if self.train_nodes != train || self.test_nodes != test {
            return Err(Error::invalid(format!(
                "roles {:?}->{:?} do not match the {}/{:?} protocol ({:?}->{:?})",
                self.train_nodes,
                self.test_nodes,
                self.case.tag(),
                self.strategy,
                train,
                test
            )));
        }
        self.run.train.validate()?;
        self.run.meta.validate()?;
        Ok(())
    }

    /// Hex digest of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hex_string(&hasher.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One accuracy cell: a (strategy, case, training, test, seed) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub approach: String,
    pub case: &'static str,
    pub training: String,
    pub test: String,
    pub seed: u64,
    pub accuracy: f64,
}

/// Curve sample for independent / universal / meta runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub seed: u64,
    pub epoch: usize,
    /// "train" or the node id of a validation split ("query" for meta).
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

/// Few-shot sweep sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRow {
    pub seed: u64,
    pub node: String,
    pub shots: usize,
    pub accuracy: f64,
}

/// Federation curve row tagged with its run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeededFedRow {
    pub seed: u64,
    #[serde(flatten)]
    pub row: FedMetricRow,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub label: String,
    pub config_digest: String,
    pub cells: Vec<CellResult>,
    pub epoch_rows: Vec<EpochRow>,
    pub fed_rows: Vec<SeededFedRow>,
    pub shot_rows: Vec<ShotRow>,
    pub runtime_s: f64,
}

/// Mean/std aggregate of one table cell over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub approach: String,
    pub case: &'static str,
    pub training: String,
    pub test: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixReport {
    pub reports: Vec<ExperimentReport>,
    pub table: Vec<TableRow>,
}

/// The twelve-row reference result matrix.
pub fn reference_matrix(run: &RunConfig) -> Result<Vec<ExperimentSpec>> {
    let combos = [
        (Case::DifferentAreas, Strategy::Independent),
        (Case::DifferentRoads, Strategy::Independent),
        (Case::DifferentAreas, Strategy::Universal),
        (Case::DifferentRoads, Strategy::Universal),
        (Case::DifferentAreas, Strategy::Federated),
        (Case::DifferentRoads, Strategy::Federated),
        (Case::DifferentAreas, Strategy::Meta),
        (Case::DifferentRoads, Strategy::Meta),
    ];
    combos
        .into_iter()
        .map(|(c, s)| ExperimentSpec::reference(c, s, run.clone()))
        .collect()
}

/// Run every spec over all its seeds and aggregate the table.
pub fn run_matrix(specs: &[ExperimentSpec]) -> Result<MatrixReport> {
    if specs.is_empty() {
        return Err(Error::invalid("no experiments requested"));
    }
    let mut reports = Vec::with_capacity(specs.len());
    for spec in specs {
        reports.push(run_case(spec)?);
    }
    // Aggregate: mean and population std per cell key, in first-seen order.
    let mut order: Vec<(String, &'static str, String, String)> = Vec::new();
    let mut by_key: BTreeMap<(String, &'static str, String, String), Vec<f64>> = BTreeMap::new();
    for report in &reports {
        for cell in &report.cells {
            let key = (
                cell.approach.clone(),
                cell.case,
                cell.training.clone(),
                cell.test.clone(),
            );
            if !by_key.contains_key(&key) {
                order.push(key.clone());
            }
            by_key.entry(key).or_default().push(cell.accuracy);
        }
    }
    let table = order
        .into_iter()
        .map(|key| {
            let accs = &by_key[&key];
            let n = accs.len() as f64;
            let mean = accs.iter().sum::<f64>() / n;
            let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            TableRow {
                approach: key.0,
                case: key.1,
                training: key.2,
                test: key.3,
                mean_accuracy: mean,
                std_accuracy: var.sqrt(),
                seeds: accs.len(),
            }
        })
        .collect();
    Ok(MatrixReport { reports, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roles_pin_the_protocol() {
        let (train, test) = reference_roles(Case::DifferentAreas, Strategy::Independent).unwrap();
        assert_eq!(train, vec!["red"]);
        assert_eq!(test, vec!["ca"]);
        let (train, test) = reference_roles(Case::DifferentRoads, Strategy::Independent).unwrap();
        assert_eq!(train, vec!["cb"]);
        assert_eq!(test, vec!["ca"]);
        assert!(reference_roles(Case::SameData, Strategy::Federated).is_err());
    }

    #[test]
    fn spec_validation_rejects_role_tampering() {
        let mut spec = ExperimentSpec::reference(
            Case::DifferentAreas,
            Strategy::Independent,
            RunConfig::default(),
        )
        .unwrap();
        spec.validate().unwrap();
        spec.test_nodes = vec!["cb".into()];
        assert!(spec.validate().is_err());
        spec.test_nodes = vec!["ca".into()];
        spec.run.seeds.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn reference_matrix_has_twelve_rows() {
        let specs = reference_matrix(&RunConfig::default()).unwrap();
        let rows: Vec<(String, &str, String, String)> = specs
            .iter()
            .flat_map(|s| {
                let approach = s.strategy.label(s.train_nodes.len());
                let training = s.training_label();
                s.test_nodes
                    .iter()
                    .map(move |t| (approach.clone(), s.case.tag(), training.clone(), t.clone()))
            })
            .collect();
        assert_eq!(rows.len(), 12);
        let expected: Vec<(&str, &str, &str, &str)> = vec![
            ("Independent", "DA", "red", "ca"),
            ("Independent", "DR", "cb", "ca"),
            ("Universal", "DA", "all", "red"),
            ("Universal", "DA", "all", "ca"),
            ("Universal", "DR", "ca+cb", "ca"),
            ("FL-3Agents", "DA", "all", "red"),
            ("FL-3Agents", "DA", "all", "ca"),
            ("FL-3Agents", "DA", "all", "cb"),
            ("FL-2Agents", "DR", "ca+cb", "ca"),
            ("FL-2Agents", "DR", "ca+cb", "cb"),
            ("Meta", "DA", "red", "ca"),
            ("Meta", "DR", "cb", "ca"),
        ];
        let got: std::collections::HashSet<_> = rows
            .iter()
            .map(|(a, c, tr, te)| (a.as_str(), *c, tr.as_str(), te.as_str()))
            .collect();
        let want: std::collections::HashSet<_> = expected.into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let a = ExperimentSpec::reference(
            Case::DifferentAreas,
            Strategy::Independent,
            RunConfig::default(),
        )
        .unwrap();
        let b = a.clone();
        assert_eq!(a.digest(), b.digest());
        let mut c = a.clone();
        c.run.data_seed += 1;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn empty_spec_list_is_rejected() {
        assert!(run_matrix(&[]).is_err());
    }
}
