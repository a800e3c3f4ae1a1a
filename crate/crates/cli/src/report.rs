//! Cross-run summaries: learning outcomes per strategy and observation
//! distribution diagnostics.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

use fedpon_core::analysis::{obs_distribution_report, ObsDistributionReport, ObsMoments};
use fedpon_core::fed::{RoundRecord, Strategy};

use crate::runner::{discover_cells, load_rounds};

/// Return threshold used for the speed-of-learning comparison.
pub const RETURN_THRESHOLD: f64 = -20.0;

/// Across-agents mean of the per-agent round return (evaluation return when
/// recorded, training return otherwise).
pub fn round_return(record: &RoundRecord) -> Option<f64> {
    let vals: Vec<f64> = record
        .agents
        .iter()
        .filter_map(|a| a.eval_return.or(a.train_return))
        .collect();
    if vals.is_empty() {
        None
    } else {
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Learning curve of one cell: across-agents mean return per round.
pub fn learning_curve(records: &[RoundRecord]) -> Vec<Option<f64>> {
    records.iter().map(round_return).collect()
}

/// First cumulative step count at which the across-agents mean return
/// reaches `threshold`.
pub fn steps_to_threshold(records: &[RoundRecord], threshold: f64) -> Option<u64> {
    for record in records {
        if round_return(record).is_some_and(|r| r >= threshold) {
            return record.agents.first().map(|a| a.env_steps);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub final_return: f64,
    pub best_return: f64,
    pub steps_to_threshold: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub final_return_mean: f64,
    /// Standard deviation of the final return over seeds.
    pub final_return_std: f64,
    pub best_return_mean: f64,
    /// Mean steps to the threshold over the seeds that reached it.
    pub steps_to_threshold_mean: Option<f64>,
    pub seeds_reached_threshold: usize,
    pub per_seed: Vec<SeedOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub threshold: f64,
    /// Sorted by descending mean final return.
    pub strategies: Vec<StrategySummary>,
}

/// Summarize every cell under `dir` and write `summary.json` there.
pub fn summarize(dir: &Path) -> Result<Summary> {
    let cells = discover_cells(dir)?;
    if cells.is_empty() {
        bail!("no runs found under {}", dir.display());
    }

    let mut by_strategy: BTreeMap<&'static str, (Strategy, Vec<SeedOutcome>)> = BTreeMap::new();
    for (strategy, seed, cell) in &cells {
        let records = load_rounds(cell)?;
        let curve: Vec<f64> = learning_curve(&records).into_iter().flatten().collect();
        if curve.is_empty() {
            bail!("no returns recorded in {}", cell.display());
        }
        let outcome = SeedOutcome {
            seed: *seed,
            final_return: *curve.last().unwrap(),
            best_return: curve.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            steps_to_threshold: steps_to_threshold(&records, RETURN_THRESHOLD),
        };
        by_strategy
            .entry(strategy.name())
            .or_insert((*strategy, Vec::new()))
            .1
            .push(outcome);
    }

    let mut strategies: Vec<StrategySummary> = by_strategy
        .into_values()
        .map(|(strategy, per_seed)| {
            let n = per_seed.len() as f64;
            let finals: Vec<f64> = per_seed.iter().map(|s| s.final_return).collect();
            let mean = finals.iter().sum::<f64>() / n;
            let var = finals.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
            let reached: Vec<u64> = per_seed.iter().filter_map(|s| s.steps_to_threshold).collect();
            StrategySummary {
                strategy,
                final_return_mean: mean,
                final_return_std: var.sqrt(),
                best_return_mean: per_seed.iter().map(|s| s.best_return).sum::<f64>() / n,
                steps_to_threshold_mean: if reached.is_empty() {
                    None
                } else {
                    Some(reached.iter().sum::<u64>() as f64 / reached.len() as f64)
                },
                seeds_reached_threshold: reached.len(),
                per_seed,
            }
        })
        .collect();
    strategies.sort_by(|a, b| b.final_return_mean.total_cmp(&a.final_return_mean));

    let summary = Summary {
        threshold: RETURN_THRESHOLD,
        strategies,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn render_summary(summary: &Summary) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<18} {:>12} {:>10} {:>12} {:>16}\n",
        "strategy", "final", "std", "best", "steps_to_thresh"
    ));
    for s in &summary.strategies {
        out.push_str(&format!(
            "{:<18} {:>12.2} {:>10.2} {:>12.2} {:>16}\n",
            s.strategy.name(),
            s.final_return_mean,
            s.final_return_std,
            s.best_return_mean,
            s.steps_to_threshold_mean
                .map(|v| format!("{:.0} ({}/{})", v, s.seeds_reached_threshold, s.per_seed.len()))
                .unwrap_or_else(|| "never".into()),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnosis {
    pub strategy: Strategy,
    pub seed: u64,
    pub obs: ObsDistributionReport,
    /// Final-round weight norms, one row per agent.
    pub policy_w_norms: Vec<Vec<f64>>,
    pub stats_counts: Vec<u64>,
}

/// Observation and weight diagnostics for every cell under `dir`.
pub fn diagnose(dir: &Path) -> Result<Vec<CellDiagnosis>> {
    let cells = discover_cells(dir)?;
    if cells.is_empty() {
        bail!("no runs found under {}", dir.display());
    }
    let mut out = Vec::new();
    for (strategy, seed, cell) in cells {
        let records = load_rounds(&cell)?;
        let n_agents = records
            .first()
            .map(|r| r.agents.len())
            .unwrap_or_default();
        let per_agent: Vec<Vec<ObsMoments>> = (0..n_agents)
            .map(|a| records.iter().map(|r| r.agents[a].obs.clone()).collect())
            .collect();
        let last = records.last().expect("non-empty records");
        out.push(CellDiagnosis {
            strategy,
            seed,
            obs: obs_distribution_report(&per_agent)?,
            policy_w_norms: last.agents.iter().map(|a| a.policy_w_norms.clone()).collect(),
            stats_counts: last.agents.iter().map(|a| a.stats_count).collect(),
        });
    }
    Ok(out)
}

pub fn render_diagnosis(cells: &[CellDiagnosis]) -> String {
    let mut out = String::new();
    for c in cells {
        out.push_str(&format!("{} seed {}\n", c.strategy.name(), c.seed));
        for agent in 0..c.obs.avg_abs_norm_mean.len() {
            out.push_str(&format!(
                "  agent {}: |norm mean| {:.4}  norm var {:.4}  raw var {:.4}  stats n {}  policy |W| {}\n",
                agent,
                c.obs.avg_abs_norm_mean[agent],
                c.obs.avg_norm_var[agent],
                c.obs.avg_raw_var[agent],
                c.stats_counts[agent],
                c.policy_w_norms[agent]
                    .iter()
                    .map(|v| format!("{:.3}", v))
                    .collect::<Vec<_>>()
                    .join("/"),
            ));
        }
    }
    out
}
