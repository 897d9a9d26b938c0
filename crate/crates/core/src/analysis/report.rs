use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Goal;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed(String),
}

/// One grid run: its swept settings and final metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub index: usize,
    pub config: BTreeMap<String, String>,
    pub status: RunStatus,
    pub metrics: BTreeMap<String, f64>,
}

impl ResultRow {
    fn config_key(&self) -> String {
        self.config
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Ranks successful runs by `metric` (ties broken by the lexicographic order
/// of the rendered configuration `k=v;...`), appends failed runs, and renders
/// a comma-separated table: `rank,index,<config keys>,status,<metrics>`.
/// Every successful run must report the same metric names.
pub fn grid_report(rows: &[ResultRow], metric: &str, goal: Goal) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no grid results to report"));
    }
    let ok: Vec<&ResultRow> = rows.iter().filter(|r| r.status == RunStatus::Ok).collect();
    let metric_names: Vec<String> = match ok.first() {
        Some(r) => r.metrics.keys().cloned().collect(),
        None => Vec::new(),
    };
    for r in &ok {
        if r.metrics.keys().ne(metric_names.iter()) {
            return Err(Error::invalid(format!(
                "run {} reports metrics {:?}, expected {:?}",
                r.index,
                r.metrics.keys().collect::<Vec<_>>(),
                metric_names
            )));
        }
    }
    if !ok.is_empty() && !metric_names.iter().any(|m| m == metric) {
        return Err(Error::invalid(format!("unknown ranking metric {metric:?}")));
    }
    let mut ranked = ok.clone();
    ranked.sort_by(|a, b| {
        let (x, y) = (a.metrics[metric], b.metrics[metric]);
        let ord = match goal {
            Goal::Minimize => x.total_cmp(&y),
            Goal::Maximize => y.total_cmp(&x),
        };
        ord.then_with(|| a.config_key().cmp(&b.config_key()))
    });
    let mut failed: Vec<&ResultRow> = rows.iter().filter(|r| r.status != RunStatus::Ok).collect();
    failed.sort_by_key(|r| r.config_key());

    let keys: BTreeSet<&String> = rows.iter().flat_map(|r| r.config.keys()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string(), "index".to_string()];
    header.extend(keys.iter().map(|k| k.to_string()));
    header.push("status".into());
    header.extend(metric_names.iter().cloned());
    let table_err = |e: csv::Error| Error::invalid(format!("writing report: {e}"));
    w.write_record(&header).map_err(table_err)?;
    for (rank, r) in ranked.iter().chain(&failed).enumerate() {
        let mut row = vec![(rank + 1).to_string(), r.index.to_string()];
        row.extend(keys.iter().map(|k| r.config.get(*k).cloned().unwrap_or_default()));
        match &r.status {
            RunStatus::Ok => {
                row.push("ok".into());
                row.extend(metric_names.iter().map(|m| r.metrics[m].to_string()));
            }
            RunStatus::Failed(msg) => {
                row.push(format!("failed: {msg}"));
                row.extend(metric_names.iter().map(|_| String::new()));
            }
        }
        w.write_record(&row).map_err(table_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("writing report: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))
}
