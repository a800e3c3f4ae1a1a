//! Experiment configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fedpon_core::envs::{sample_morphologies, EnvKind, Morphology, MorphologyRanges};
use fedpon_core::fed::Strategy;
use fedpon_core::ppo::PpoConfig;

/// A full sweep description: which environment population to train on, with
/// which strategies, seeds and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub env: EnvKind,
    pub n_agents: usize,
    /// Explicit per-agent observation scales (scaled point mass only). When
    /// set, morphologies are fixed instead of sampled, so every seed trains
    /// on the same population.
    pub obs_scales: Option<Vec<f64>>,
    /// Sampling intervals used when `obs_scales` is not set.
    pub morph_ranges: MorphologyRanges,
    pub hidden: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rounds: usize,
    /// Deterministic evaluation episodes per agent per round (0 disables).
    pub eval_episodes: usize,
    pub strategies: Vec<Strategy>,
    pub ppo: PpoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run_id: "fedpon".into(),
            env: EnvKind::ScaledPointMass,
            n_agents: 3,
            obs_scales: Some(vec![1.0, 5.0, 10.0]),
            morph_ranges: MorphologyRanges::default(),
            hidden: vec![32, 32],
            seeds: vec![1, 2, 3, 4, 5],
            rounds: 100,
            eval_episodes: 5,
            strategies: Strategy::ALL.to_vec(),
            ppo: PpoConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.rounds == 0 || self.seeds.is_empty() {
            bail!("n_agents, rounds and seeds must be non-empty");
        }
        if self.strategies.is_empty() {
            bail!("at least one strategy is required");
        }
        if let Some(scales) = &self.obs_scales {
            if self.env != EnvKind::ScaledPointMass {
                bail!("obs_scales only applies to the scaled point mass");
            }
            if scales.len() != self.n_agents {
                bail!(
                    "obs_scales has {} entries but n_agents is {}",
                    scales.len(),
                    self.n_agents
                );
            }
            if scales.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
                bail!("obs_scales must be positive and finite");
            }
        }
        Ok(())
    }

    /// The agent population for one seed. With explicit `obs_scales` the
    /// morphologies are fixed; otherwise they are sampled from
    /// `morph_ranges` deterministically in the seed. Either way the
    /// population depends only on (config, seed), never on the strategy, so
    /// strategy comparisons within a seed are paired.
    pub fn morphologies(&self, seed: u64) -> Result<Vec<Morphology>> {
        if let Some(scales) = &self.obs_scales {
            Ok(scales
                .iter()
                .enumerate()
                .map(|(agent_id, &k)| Morphology {
                    env_kind: self.env,
                    params: BTreeMap::from([("obs_scale".to_string(), k)]),
                    agent_id,
                })
                .collect())
        } else {
            Ok(sample_morphologies(
                self.env,
                self.n_agents,
                &self.morph_ranges,
                seed,
            )?)
        }
    }
}
