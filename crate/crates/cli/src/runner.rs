//! Sweep execution and on-disk artifacts.
//!
//! Layout under the output directory:
//! `<strategy>/seed-<seed>/{manifest.json, metrics.csv, rounds.json}`.
//! All files are deterministic functions of (config, strategy, seed), so
//! re-running a cell reproduces them byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use fedpon_core::envs::Morphology;
use fedpon_core::fed::{init_agents, run_round, RoundRecord, Strategy};

use crate::config::ExperimentConfig;

/// Identification block written next to each run's metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub morphologies: Vec<Morphology>,
    pub config: ExperimentConfig,
}

pub const METRICS_HEADER: [&str; 15] = [
    "run_id",
    "seed",
    "strategy",
    "round",
    "agent_id",
    "env_steps",
    "mean_return",
    "policy_loss",
    "value_loss",
    "approx_kl",
    "clip_fraction",
    "obs_mean_l2",
    "obs_var_l2",
    "policy_w_norms",
    "value_w_norms",
];

fn l2(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn join_norms(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Train one (strategy, seed) cell in memory.
pub fn run_single(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<RoundRecord>> {
    let morphs = cfg.morphologies(seed)?;
    let mut slots = init_agents(&morphs, &cfg.hidden, seed)?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        records.push(run_round(
            &mut slots,
            strategy,
            &cfg.ppo,
            round,
            cfg.eval_episodes,
        )?);
    }
    Ok(records)
}

/// Directory of one (strategy, seed) cell.
pub fn cell_dir(out: &Path, strategy: Strategy, seed: u64) -> PathBuf {
    out.join(strategy.name()).join(format!("seed-{}", seed))
}

/// Write manifest.json, metrics.csv and rounds.json for one cell.
pub fn write_artifacts(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    seed: u64,
    records: &[RoundRecord],
    out: &Path,
) -> Result<PathBuf> {
    let dir = cell_dir(out, strategy, seed);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let manifest = Manifest {
        run_id: cfg.run_id.clone(),
        strategy,
        seed,
        morphologies: cfg.morphologies(seed)?,
        config: cfg.clone(),
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let mut writer = csv::Writer::from_path(dir.join("metrics.csv"))?;
    writer.write_record(METRICS_HEADER)?;
    for record in records {
        for agent in &record.agents {
            let mean_return = agent
                .eval_return
                .or(agent.train_return)
                .map(|r| r.to_string())
                .unwrap_or_default();
            writer.write_record([
                cfg.run_id.as_str(),
                &seed.to_string(),
                strategy.name(),
                &record.round.to_string(),
                &agent.agent_id.to_string(),
                &agent.env_steps.to_string(),
                &mean_return,
                &agent.loss.policy_loss.to_string(),
                &agent.loss.value_loss.to_string(),
                &agent.loss.approx_kl.to_string(),
                &agent.loss.clip_fraction.to_string(),
                &l2(&agent.obs.raw_mean).to_string(),
                &l2(&agent.obs.raw_var).to_string(),
                &join_norms(&agent.policy_w_norms),
                &join_norms(&agent.value_w_norms),
            ])?;
        }
    }
    writer.flush()?;

    fs::write(dir.join("rounds.json"), serde_json::to_string(records)?)?;
    Ok(dir)
}

/// Run every requested (strategy, seed) cell and write its artifacts.
/// Returns the cell directories in execution order.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let mut dirs = Vec::new();
    for &strategy in strategies {
        for &seed in seeds {
            let records = run_single(cfg, strategy, seed)?;
            dirs.push(write_artifacts(cfg, strategy, seed, &records, out)?);
        }
    }
    Ok(dirs)
}

/// Load the records of one cell back from disk.
pub fn load_rounds(dir: &Path) -> Result<Vec<RoundRecord>> {
    let text = fs::read_to_string(dir.join("rounds.json"))
        .with_context(|| format!("reading {}", dir.join("rounds.json").display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Enumerate all cell directories under an output directory, sorted.
pub fn discover_cells(out: &Path) -> Result<Vec<(Strategy, u64, PathBuf)>> {
    let mut cells = Vec::new();
    for strat_entry in fs::read_dir(out).with_context(|| format!("reading {}", out.display()))? {
        let strat_entry = strat_entry?;
        if !strat_entry.file_type()?.is_dir() {
            continue;
        }
        let name = strat_entry.file_name().to_string_lossy().into_owned();
        let Ok(strategy) = name.parse::<Strategy>() else {
            continue;
        };
        for seed_entry in fs::read_dir(strat_entry.path())? {
            let seed_entry = seed_entry?;
            let seed_name = seed_entry.file_name().to_string_lossy().into_owned();
            if let Some(seed) = seed_name
                .strip_prefix("seed-")
                .and_then(|s| s.parse::<u64>().ok())
            {
                cells.push((strategy, seed, seed_entry.path()));
            }
        }
    }
    cells.sort_by_key(|(s, seed, _)| (s.name(), *seed));
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            n_agents: 2,
            obs_scales: Some(vec![1.0, 10.0]),
            hidden: vec![8],
            seeds: vec![1],
            rounds: 2,
            eval_episodes: 1,
            ppo: fedpon_core::ppo::PpoConfig {
                rollout_steps: 64,
                batch_size: 32,
                local_epochs: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn artifacts_are_written_and_reproducible() {
        let cfg = tiny_config();
        let tmp = tempfile::tempdir().unwrap();
        let records = run_single(&cfg, Strategy::FedAvgPon, 1).unwrap();
        let dir = write_artifacts(&cfg, Strategy::FedAvgPon, 1, &records, tmp.path()).unwrap();
        let first_csv = fs::read(dir.join("metrics.csv")).unwrap();
        let first_manifest = fs::read(dir.join("manifest.json")).unwrap();
        let first_rounds = fs::read(dir.join("rounds.json")).unwrap();

        // Re-run the same cell: byte-identical artifacts.
        let records2 = run_single(&cfg, Strategy::FedAvgPon, 1).unwrap();
        let dir2 = write_artifacts(&cfg, Strategy::FedAvgPon, 1, &records2, tmp.path()).unwrap();
        assert_eq!(dir, dir2);
        assert_eq!(first_csv, fs::read(dir.join("metrics.csv")).unwrap());
        assert_eq!(first_manifest, fs::read(dir.join("manifest.json")).unwrap());
        assert_eq!(first_rounds, fs::read(dir.join("rounds.json")).unwrap());
    }

    #[test]
    fn metrics_csv_has_fixed_schema_and_row_count() {
        let cfg = tiny_config();
        let tmp = tempfile::tempdir().unwrap();
        let records = run_single(&cfg, Strategy::Independent, 1).unwrap();
        let dir = write_artifacts(&cfg, Strategy::Independent, 1, &records, tmp.path()).unwrap();
        let mut reader = csv::Reader::from_path(dir.join("metrics.csv")).unwrap();
        assert_eq!(
            reader.headers().unwrap().iter().collect::<Vec<_>>(),
            METRICS_HEADER.to_vec()
        );
        let rows: Vec<_> = reader.records().collect::<std::result::Result<_, _>>().unwrap();
        assert_eq!(rows.len(), cfg.rounds * cfg.n_agents);
    }

    #[test]
    fn rounds_json_round_trips() {
        let cfg = tiny_config();
        let tmp = tempfile::tempdir().unwrap();
        let records = run_single(&cfg, Strategy::FedAvgSharedOn, 1).unwrap();
        let dir =
            write_artifacts(&cfg, Strategy::FedAvgSharedOn, 1, &records, tmp.path()).unwrap();
        let loaded = load_rounds(&dir).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn discover_cells_finds_all_runs() {
        let cfg = tiny_config();
        let tmp = tempfile::tempdir().unwrap();
        let dirs = run_experiment(
            &cfg,
            &[Strategy::Independent, Strategy::FedAvgPon],
            &[1],
            tmp.path(),
        )
        .unwrap();
        assert_eq!(dirs.len(), 2);
        let cells = discover_cells(tmp.path()).unwrap();
        assert_eq!(cells.len(), 2);
        assert!(cells.iter().any(|(s, _, _)| *s == Strategy::FedAvgPon));
    }
}
