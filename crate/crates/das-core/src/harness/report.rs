//! CSV and manifest emission.
//!
//! One CSV per figure analog: epoch curves, federation curves with
//! aggregation markers, and the few-shot sweep; plus the aggregated result
//! table and the per-seed cells. Files carry no timestamps, so identical
//! configs and seeds reproduce them byte for byte.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::fedavg::FedEvent;

use super::{ExperimentReport, MatrixReport};

fn write_lines(path: &Path, header: &str, lines: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    writeln!(out, "{header}")?;
    for line in lines {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Emit the curve files for one experiment. Empty row sets still produce a
/// header-only file, so downstream plotting never special-cases absence.
pub fn write_report_csvs(dir: &Path, report: &ExperimentReport) -> Result<Vec<String>> {
    let mut written = Vec::new();

    let epochs = format!("{}_epochs.csv", report.label);
    let lines: Vec<String> = report
        .epoch_rows
        .iter()
        .map(|r| format!("{},{},{},{},{}", r.seed, r.epoch, r.split, r.loss, r.accuracy))
        .collect();
    write_lines(&dir.join(&epochs), "seed,epoch,split,loss,accuracy", &lines)?;
    written.push(epochs);

    let fed = format!("{}_fed.csv", report.label);
    let lines: Vec<String> = report
        .fed_rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{}",
                r.seed,
                r.row.round,
                r.row.epoch,
                r.row.model,
                r.row.split,
                r.row.loss,
                r.row.accuracy,
                u8::from(r.row.event == FedEvent::Aggregation)
            )
        })
        .collect();
    write_lines(
        &dir.join(&fed),
        "seed,round,epoch,model,split,loss,accuracy,aggregation",
        &lines,
    )?;
    written.push(fed);

    let shots = format!("{}_shots.csv", report.label);
    let lines: Vec<String> = report
        .shot_rows
        .iter()
        .map(|r| format!("{},{},{},{}", r.seed, r.node, r.shots, r.accuracy))
        .collect();
    write_lines(&dir.join(&shots), "seed,node,shots,accuracy", &lines)?;
    written.push(shots);

    Ok(written)
}

/// Emit the aggregated table and the per-seed cells.
pub fn write_matrix_csv(dir: &Path, matrix: &MatrixReport) -> Result<Vec<String>> {
    let lines: Vec<String> = matrix
        .table
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.approach, r.case, r.training, r.test, r.mean_accuracy, r.std_accuracy, r.seeds
            )
        })
        .collect();
    write_lines(
        &dir.join("table.csv"),
        "approach,case,training,test,mean_accuracy,std_accuracy,seeds",
        &lines,
    )?;

    let lines: Vec<String> = matrix
        .reports
        .iter()
        .flat_map(|rep| rep.cells.iter())
        .map(|c| {
            format!(
                "{},{},{},{},{},{}",
                c.approach, c.case, c.training, c.test, c.seed, c.accuracy
            )
        })
        .collect();
    write_lines(
        &dir.join("cells.csv"),
        "approach,case,training,test,seed,accuracy",
        &lines,
    )?;
    Ok(vec!["table.csv".to_string(), "cells.csv".to_string()])
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_digest: &'a str,
    seeds: &'a [u64],
    outputs: &'a [String],
    runtime_s: f64,
}

/// Manifest naming the config digest, seeds, and produced files.
pub fn write_run_manifest(
    dir: &Path,
    config_digest: &str,
    seeds: &[u64],
    outputs: &[String],
    runtime_s: f64,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        config_digest,
        seeds,
        outputs,
        runtime_s,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}
