//! Grid search: the cartesian product of swept values over a base
//! configuration, run by a pool of worker threads.
//!
//! ```toml
//! workers = 4
//! metric = "accuracy"     # ranking metric of the results table
//! goal = "maximize"
//!
//! [base]                  # any run configuration keys
//! game = "reconstruction"
//! out_dir = "runs/grid"
//!
//! [sweep]                 # key -> candidate values
//! lr = [0.001, 0.01]
//! temperature = [0.5, 1.0]
//! ```
//!
//! Runs are numbered in product order with the sweep keys sorted by name and
//! the last key varying fastest. Run `i` trains with seed
//! `derive_u64(seed, "grid", i) >> 1` (seeds stay within TOML's integer range) in `<out_dir>/run_<i>` (four digits).

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use emcomm::analysis::{grid_report, ResultRow, RunStatus};
use emcomm::game::Goal;
use emcomm::rng;

use crate::config::{self, RunConfig};
use crate::run::cmd_train;
use crate::CliError;

const GRID_KEYS: &[&str] = &["workers", "metric", "goal", "base", "sweep"];

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub base: toml::Table,
    /// Sorted by key.
    pub sweep: BTreeMap<String, Vec<toml::Value>>,
    pub workers: usize,
    pub metric: String,
    pub goal: Goal,
}

fn render(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::from_table(config::read_table(path)?)
    }

    pub fn from_table(mut t: toml::Table) -> Result<Self, CliError> {
        if let Some(k) = t.keys().find(|k| !GRID_KEYS.contains(&k.as_str())) {
            let hint = GRID_KEYS
                .iter()
                .find(|g| strsim::damerau_levenshtein(k, g) <= 2)
                .map_or(String::new(), |g| format!("; did you mean \"{g}\"?"));
            return Err(CliError::Validation(format!("unknown grid key \"{k}\"{hint}")));
        }
        let table = |t: &mut toml::Table, key: &str| match t.remove(key) {
            None => Ok(toml::Table::new()),
            Some(toml::Value::Table(x)) => Ok(x),
            Some(_) => Err(CliError::Validation(format!("grid {key} must be a table"))),
        };
        let base = table(&mut t, "base")?;
        let sweep_table = table(&mut t, "sweep")?;
        let mut sweep = BTreeMap::new();
        for (k, v) in sweep_table {
            if !config::KEYS.contains(&k.as_str()) {
                return Err(config::unknown_key(&k));
            }
            if k == "out_dir" {
                return Err(CliError::Validation("out_dir cannot be swept; runs get their own directories".into()));
            }
            match v {
                toml::Value::Array(values) if !values.is_empty() => {
                    sweep.insert(k, values);
                }
                _ => return Err(CliError::Validation(format!("sweep.{k} must be a non-empty list"))),
            }
        }
        let workers = match t.remove("workers") {
            None => 1,
            Some(toml::Value::Integer(n)) if n >= 1 => n as usize,
            Some(v) => return Err(CliError::Validation(format!("workers must be a positive integer, got {v}"))),
        };
        let metric = match t.remove("metric") {
            None => "loss".to_string(),
            Some(toml::Value::String(s)) => s,
            Some(v) => return Err(CliError::Validation(format!("metric must be a string, got {v}"))),
        };
        let goal = match t.remove("goal") {
            None => {
                if metric == "loss" {
                    Goal::Minimize
                } else {
                    Goal::Maximize
                }
            }
            Some(v) => v
                .try_into()
                .map_err(|_| CliError::Validation("goal must be \"minimize\" or \"maximize\"".into()))?,
        };
        Ok(GridSpec {
            base,
            sweep,
            workers,
            metric,
            goal,
        })
    }

    pub fn len(&self) -> usize {
        self.sweep.values().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Child configurations in run order, each with the swept settings that
    /// produced it. All are validated here, before anything runs.
    pub fn expand(&self) -> Result<Vec<(BTreeMap<String, String>, RunConfig)>, CliError> {
        let base = RunConfig::from_table(self.base.clone())?;
        let keys: Vec<&String> = self.sweep.keys().collect();
        let mut out = Vec::with_capacity(self.len());
        for index in 0..self.len() {
            let mut rest = index;
            let mut picks = Vec::with_capacity(keys.len());
            for k in keys.iter().rev() {
                let values = &self.sweep[*k];
                picks.push((*k, &values[rest % values.len()]));
                rest /= values.len();
            }
            picks.reverse();
            let mut table = self.base.clone();
            let mut shown = BTreeMap::new();
            for (k, v) in picks {
                table.insert(k.clone(), v.clone());
                shown.insert(k.clone(), render(v));
            }
            let mut child = RunConfig::from_table(table)
                .map_err(|e| CliError::Validation(format!("run {index}: {e}")))?;
            child.seed = rng::derive_u64(child.seed, rng::GRID, index as u64) >> 1;
            child.out_dir = base.out_dir.join(format!("run_{index:04}"));
            out.push((shown, child));
        }
        Ok(out)
    }

    pub fn out_dir(&self) -> Result<std::path::PathBuf, CliError> {
        Ok(RunConfig::from_table(self.base.clone())?.out_dir)
    }
}

pub struct GridOutcome {
    /// One row per run, in run order.
    pub rows: Vec<ResultRow>,
    /// Ranked results table (also written to `results.csv`).
    pub table: String,
}

impl GridOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != RunStatus::Ok).count()
    }
}

/// Runs every child, at most `workers` at a time. A failing child is
/// recorded and the others continue. Writes `results.jsonl` (run order) and
/// `results.csv` (ranked) to the base output directory.
pub fn run_grid(spec: &GridSpec) -> Result<GridOutcome, CliError> {
    let children = spec.expand()?;
    let out_dir = spec.out_dir()?;
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Runtime(format!("{}: {e}", out_dir.display())))?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ResultRow>>> = Mutex::new(vec![None; children.len()]);
    std::thread::scope(|s| {
        for _ in 0..spec.workers.min(children.len()) {
            s.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some((shown, config)) = children.get(index) else {
                    break;
                };
                let result = catch_unwind(AssertUnwindSafe(|| cmd_train(config, None)));
                let (status, metrics) = match result {
                    Ok(Ok(summary)) => (RunStatus::Ok, summary.final_metrics()),
                    Ok(Err(e)) => (RunStatus::Failed(e.to_string()), BTreeMap::new()),
                    Err(_) => (RunStatus::Failed("run panicked".into()), BTreeMap::new()),
                };
                let row = ResultRow {
                    index,
                    config: shown.clone(),
                    status,
                    metrics,
                };
                slots.lock().expect("no worker panics while holding the lock")[index] = Some(row);
            });
        }
    });
    let rows: Vec<ResultRow> = slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every run reports"))
        .collect();

    let mut lines = String::new();
    for r in &rows {
        lines += &serde_json::to_string(r).map_err(CliError::runtime)?;
        lines.push('\n');
    }
    let jsonl = out_dir.join("results.jsonl");
    fs::write(&jsonl, lines).map_err(|e| CliError::Runtime(format!("{}: {e}", jsonl.display())))?;
    let table = grid_report(&rows, &spec.metric, spec.goal).map_err(CliError::runtime)?;
    let csv = out_dir.join("results.csv");
    fs::write(&csv, &table).map_err(|e| CliError::Runtime(format!("{}: {e}", csv.display())))?;
    Ok(GridOutcome { rows, table })
}
