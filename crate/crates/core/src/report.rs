//! Result files and rendered tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, REFERENCE_RANDOM_4WAY, REFERENCE_RANDOM_AVERAGE};

/// Flat per-dataset record of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub dataset_id: String,
    pub k: usize,
    pub repetition_seeds: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    pub seen: Option<bool>,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub checkpoints: BTreeMap<String, String>,
    /// `<tool>-<config hash>-<digest of the records>`.
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub provenance: Provenance,
    pub records: Vec<ResultRecord>,
    pub averages: Vec<AverageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageRecord {
    pub model: String,
    pub k: usize,
    pub average: f64,
}

pub fn records(reports: &[EvalReport]) -> Vec<ResultRecord> {
    reports
        .iter()
        .flat_map(|r| {
            r.datasets.iter().map(|d| ResultRecord {
                dataset_id: d.dataset_id.clone(),
                k: d.k,
                repetition_seeds: d.repetition_seeds.clone(),
                mean: d.mean,
                std: d.std,
                seen: d.seen,
                model: d.model.clone(),
            })
        })
        .collect()
}

pub fn results_file(reports: &[EvalReport], config_hash: &str, seeds: &[u64]) -> Result<ResultsFile> {
    let records = records(reports);
    let digest = hex::encode(Sha256::digest(serde_json::to_vec(&records)?));
    let tool = format!("nested-entail/{}", env!("CARGO_PKG_VERSION"));
    let checkpoints = reports
        .iter()
        .filter_map(|r| r.checkpoint_hash.as_ref().map(|h| (r.model.clone(), h.clone())))
        .collect();
    Ok(ResultsFile {
        provenance: Provenance {
            id: format!("{tool}-{config_hash}-{}", &digest[..12]),
            tool,
            config_hash: config_hash.to_string(),
            seeds: seeds.to_vec(),
            checkpoints,
        },
        averages: reports
            .iter()
            .map(|r| AverageRecord {
                model: r.model.clone(),
                k: r.k,
                average: r.average,
            })
            .collect(),
        records,
    })
}

fn cell(mean: f64, std: f64) -> String {
    format!("{:.1} ± {:.1}", 100.0 * mean, 100.0 * std)
}

fn seen_tag(seen: Option<bool>) -> &'static str {
    match seen {
        Some(true) => "seen",
        Some(false) => "unseen",
        None => "?",
    }
}

/// Models × {0-shot, k-shot} rows, datasets as columns (unseen first), and
/// an average column.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut columns: Vec<(String, Option<bool>)> = Vec::new();
    for r in reports {
        for d in &r.datasets {
            if !columns.iter().any(|(id, _)| id == &d.dataset_id) {
                columns.push((d.dataset_id.clone(), d.seen));
            }
        }
    }
    columns.sort_by_key(|(_, seen)| match seen {
        Some(false) => 0,
        None => 1,
        Some(true) => 2,
    });

    let mut out = String::new();
    let header: Vec<String> = columns
        .iter()
        .map(|(id, seen)| format!("{id} ({})", seen_tag(*seen)))
        .collect();
    writeln!(out, "| Setting | Model | {} | Average |", header.join(" | ")).unwrap();
    writeln!(out, "|---|---|{}---|", "---|".repeat(columns.len())).unwrap();

    let mut ordered: Vec<&EvalReport> = reports.iter().collect();
    ordered.sort_by_key(|r| r.k);
    for r in ordered {
        let setting = format!("{}-shot", r.k);
        let cells: Vec<String> = columns
            .iter()
            .map(|(id, _)| r.get(id).map_or_else(|| "-".to_string(), |d| cell(d.mean, d.std)))
            .collect();
        writeln!(
            out,
            "| {setting} | {} | {} | {:.1} |",
            r.model,
            cells.join(" | "),
            100.0 * r.average
        )
        .unwrap();
    }
    writeln!(
        out,
        "\nRandom-guess reference: {:.1} on a balanced 4-class benchmark, {:.1} averaged over nine benchmarks.",
        100.0 * REFERENCE_RANDOM_4WAY,
        100.0 * REFERENCE_RANDOM_AVERAGE
    )
    .unwrap();
    out
}

/// Writes `results.json` and `results.md` into `out_dir`.
pub fn emit_report(reports: &[EvalReport], out_dir: &Path, config_hash: &str, seeds: &[u64]) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to emit".into()));
    }
    let file = results_file(reports, config_hash, seeds)?;
    let json_path = out_dir.join("results.json");
    let md_path = out_dir.join("results.md");
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    write_atomic(&json_path, json.as_bytes())?;
    let md = format!("Provenance: {}\n\n{}", file.provenance.id, render_table(reports));
    write_atomic(&md_path, md.as_bytes())?;
    Ok((json_path, md_path))
}

/// Case-study rows: each input sentence followed by its top `top` labels,
/// an ellipsis, and the lowest-ranked label.
pub fn render_case_study(rows: &[(String, Vec<(String, f64)>)], top: usize) -> String {
    let mut out = String::new();
    for (text, ranked) in rows {
        writeln!(out, "{text}").unwrap();
        let mut cells: Vec<String> = ranked
            .iter()
            .take(top)
            .map(|(l, s)| format!("{l} {s:.2}"))
            .collect();
        if ranked.len() > top + 1 {
            cells.push("...".into());
        }
        if ranked.len() > top {
            let (l, s) = ranked.last().unwrap();
            cells.push(format!("{l} {s:.2}"));
        }
        writeln!(out, "  {}", cells.join(" | ")).unwrap();
    }
    out
}
