//! Federated orchestration: local PPO phases, uniform parameter averaging,
//! broadcast, and the normalization-handling strategies under comparison.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{weight_norms, ObsMoments};
use crate::envs::{reset, step, EnvInstance, Morphology};
use crate::error::{Error, Result};
use crate::nn::{build_mlp, forward_policy, forward_value, AdamState, ParamVector};
use crate::ppo::{collect_rollout, compute_gae, ppo_update, LossReport, PpoConfig};
use crate::rng::{stream, tag};
use crate::runstats::{merge_average, summarize_batch, RunningStats};

/// How agents coordinate between local training phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// No communication; each agent trains alone, without normalization.
    Independent,
    /// FedAvg on raw observations (no normalization).
    FedAvgNoNorm,
    /// FedAvg with personalized observation normalization: each agent keeps
    /// its own running statistics, which are never aggregated.
    FedAvgPon,
    /// FedAvg that also averages the normalization statistics, so every
    /// agent normalizes with the same global moments.
    FedAvgSharedOn,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Independent,
        Strategy::FedAvgNoNorm,
        Strategy::FedAvgPon,
        Strategy::FedAvgSharedOn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Independent => "independent",
            Strategy::FedAvgNoNorm => "fedavg-nonorm",
            Strategy::FedAvgPon => "fedavg-pon",
            Strategy::FedAvgSharedOn => "fedavg-sharedon",
        }
    }

    pub fn uses_fedavg(self) -> bool {
        self != Strategy::Independent
    }

    pub fn uses_normalization(self) -> bool {
        matches!(self, Strategy::FedAvgPon | Strategy::FedAvgSharedOn)
    }

    pub fn shares_normalization(self) -> bool {
        self == Strategy::FedAvgSharedOn
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        Strategy::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy '{}'", s)))
    }
}

/// One agent's full local state.
#[derive(Debug, Clone)]
pub struct AgentSlot {
    pub agent_id: usize,
    pub policy: ParamVector,
    pub value: ParamVector,
    pub stats: RunningStats,
    pub adam_policy: AdamState,
    pub adam_value: AdamState,
    pub env: EnvInstance,
    pub action_rng: ChaCha8Rng,
    pub shuffle_rng: ChaCha8Rng,
    pub eval_rng: ChaCha8Rng,
    pub env_steps: u64,
}

impl AgentSlot {
    /// Build the slot for `morph.agent_id`, deriving all random streams from
    /// the experiment seed. Networks are built from the seed alone, so every
    /// agent starts from the same parameters.
    pub fn new(morph: Morphology, hidden: &[usize], seed: u64) -> Result<AgentSlot> {
        let id = morph.agent_id as u64;
        let obs_dim = morph.env_kind.obs_dim();
        let act_dim = morph.env_kind.act_dim();
        let (policy, value) = build_mlp(obs_dim, act_dim, hidden, seed)?;
        let adam_policy = AdamState::new(policy.total_len());
        let adam_value = AdamState::new(value.total_len());
        let agent_id = morph.agent_id;
        let env = EnvInstance::new(morph, stream(seed, &[tag::ENV_RESET, id]));
        Ok(AgentSlot {
            agent_id,
            policy,
            value,
            stats: RunningStats::new(obs_dim),
            adam_policy,
            adam_value,
            env,
            action_rng: stream(seed, &[tag::ACTION, id]),
            shuffle_rng: stream(seed, &[tag::SHUFFLE, id]),
            eval_rng: stream(seed, &[tag::EVAL, id]),
            env_steps: 0,
        })
    }
}

/// Build one slot per morphology.
pub fn init_agents(morphs: &[Morphology], hidden: &[usize], seed: u64) -> Result<Vec<AgentSlot>> {
    morphs
        .iter()
        .map(|m| AgentSlot::new(m.clone(), hidden, seed))
        .collect()
}

/// Mean that is exact in the cases the federation relies on: if every
/// participant holds bit-identical values the mean is that value, and
/// otherwise the summation order is canonical so the result is independent
/// of agent ordering.
fn exact_mean(values: &mut [f64]) -> f64 {
    let first = values[0];
    if values.iter().all(|v| v.to_bits() == first.to_bits()) {
        return first;
    }
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Uniform FedAvg over parameter vectors of identical shape.
///
/// Guarantees: aggregating identical inputs returns them unchanged bit for
/// bit, and the result does not depend on the order of the inputs.
pub fn aggregate_fedavg(params: &[ParamVector]) -> Result<ParamVector> {
    let first = params.first().ok_or(Error::EmptyList)?;
    for p in &params[1..] {
        if !first.shape_matches(p) {
            return Err(Error::ShapeMismatch(
                "parameter vectors differ in shape".into(),
            ));
        }
    }
    let flats: Vec<Vec<f64>> = params.iter().map(|p| p.flatten()).collect();
    let len = flats[0].len();
    let mut out = Vec::with_capacity(len);
    let mut column = vec![0.0; flats.len()];
    for i in 0..len {
        for (c, f) in column.iter_mut().zip(&flats) {
            *c = f[i];
        }
        out.push(exact_mean(&mut column));
    }
    first.from_flat(&out)
}

/// Install the aggregated model on every agent and reset their optimizers.
/// Under the shared-normalization strategy the merged statistics replace the
/// local ones; under every other strategy local statistics are untouched.
pub fn broadcast(
    slots: &mut [AgentSlot],
    strategy: Strategy,
    policy: &ParamVector,
    value: &ParamVector,
    shared_stats: Option<&RunningStats>,
) -> Result<()> {
    if strategy.shares_normalization() && shared_stats.is_none() {
        return Err(Error::InvalidArgument(
            "shared-normalization broadcast requires merged statistics".into(),
        ));
    }
    for slot in slots.iter_mut() {
        slot.policy = policy.clone();
        slot.value = value.clone();
        slot.adam_policy = AdamState::new(policy.total_len());
        slot.adam_value = AdamState::new(value.total_len());
        if strategy.shares_normalization() {
            slot.stats = shared_stats.unwrap().clone();
        }
    }
    Ok(())
}

/// Normalize an observation with the uniform average of several agents'
/// statistics.
pub fn normalize_shared(
    stats_list: &[RunningStats],
    x: &[f64],
    epsilon: f64,
) -> Result<Vec<f64>> {
    merge_average(stats_list)?.normalize(x, epsilon)
}

/// Everything recorded about one agent in one round, measured after its
/// local update and before aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRoundStats {
    pub agent_id: usize,
    /// Cumulative environment steps taken by this agent so far.
    pub env_steps: u64,
    /// Mean return of episodes completed during this round's rollout.
    pub train_return: Option<f64>,
    pub loss: LossReport,
    pub policy_w_norms: Vec<f64>,
    pub value_w_norms: Vec<f64>,
    /// Moments of this round's raw and normalized observations.
    pub obs: ObsMoments,
    /// Snapshot of the agent's running statistics after the round.
    pub stats_mean: Vec<f64>,
    pub stats_var: Vec<f64>,
    pub stats_count: u64,
    /// Deterministic-policy evaluation return, when requested.
    pub eval_return: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub agents: Vec<AgentRoundStats>,
}

/// Run one bulk-synchronous round: a local PPO phase on every agent, then
/// (except under `Independent`) aggregation and broadcast. With
/// `eval_episodes > 0` each agent is also evaluated deterministically after
/// its local update, before aggregation.
pub fn run_round(
    slots: &mut [AgentSlot],
    strategy: Strategy,
    cfg: &PpoConfig,
    round: usize,
    eval_episodes: usize,
) -> Result<RoundRecord> {
    run_round_capturing(slots, strategy, cfg, round, eval_episodes).map(|(record, _)| record)
}

/// Like [`run_round`], but also returns each agent's rollout so callers can
/// audit exactly which observations entered the running statistics.
pub fn run_round_capturing(
    slots: &mut [AgentSlot],
    strategy: Strategy,
    cfg: &PpoConfig,
    round: usize,
    eval_episodes: usize,
) -> Result<(RoundRecord, Vec<crate::ppo::Trajectory>)> {
    if slots.is_empty() {
        return Err(Error::EmptyList);
    }

    let per_agent: Vec<(AgentRoundStats, crate::ppo::Trajectory)> = slots
        .par_iter_mut()
        .map(|slot| -> Result<(AgentRoundStats, crate::ppo::Trajectory)> {
            let stats_opt = if strategy.uses_normalization() {
                Some(&mut slot.stats)
            } else {
                None
            };
            let traj = collect_rollout(
                &slot.policy,
                &slot.value,
                stats_opt,
                &mut slot.env,
                cfg.rollout_steps,
                cfg,
                &mut slot.action_rng,
            )?;
            let (adv, ret) = compute_gae(&traj, cfg.gamma, cfg.lam);
            let loss = ppo_update(
                &mut slot.policy,
                &mut slot.value,
                &mut slot.adam_policy,
                &mut slot.adam_value,
                &traj,
                &adv,
                &ret,
                cfg,
                &mut slot.shuffle_rng,
            )?;
            slot.env_steps += cfg.rollout_steps as u64;

            let completed = slot.env.drain_completed_returns();
            let train_return = if completed.is_empty() {
                None
            } else {
                Some(completed.iter().sum::<f64>() / completed.len() as f64)
            };

            let raw_rows: Vec<&[f64]> =
                traj.transitions.iter().map(|t| t.raw_obs.as_slice()).collect();
            let norm_rows: Vec<&[f64]> =
                traj.transitions.iter().map(|t| t.norm_obs.as_slice()).collect();
            let raw = summarize_batch(&raw_rows)?;
            let norm = summarize_batch(&norm_rows)?;

            let eval_return = if eval_episodes > 0 {
                let stats_ref = strategy.uses_normalization().then_some(&slot.stats);
                Some(evaluate_policy(
                    &slot.policy,
                    stats_ref,
                    &slot.env.morph,
                    eval_episodes,
                    &mut slot.eval_rng,
                    cfg,
                )?)
            } else {
                None
            };

            let stats = AgentRoundStats {
                agent_id: slot.agent_id,
                env_steps: slot.env_steps,
                train_return,
                loss,
                policy_w_norms: weight_norms(&slot.policy),
                value_w_norms: weight_norms(&slot.value),
                obs: ObsMoments {
                    raw_mean: raw.mean,
                    raw_var: raw.var,
                    norm_mean: norm.mean,
                    norm_var: norm.var,
                },
                stats_mean: slot.stats.mean().to_vec(),
                stats_var: slot.stats.var().to_vec(),
                stats_count: slot.stats.count(),
                eval_return,
            };
            Ok((stats, traj))
        })
        .collect::<Result<Vec<_>>>()?;
    let (agents, trajectories): (Vec<_>, Vec<_>) = per_agent.into_iter().unzip();

    if strategy.uses_fedavg() {
        let policies: Vec<ParamVector> = slots.iter().map(|s| s.policy.clone()).collect();
        let values: Vec<ParamVector> = slots.iter().map(|s| s.value.clone()).collect();
        let avg_policy = aggregate_fedavg(&policies)?;
        let avg_value = aggregate_fedavg(&values)?;
        let shared = if strategy.shares_normalization() {
            let all_stats: Vec<RunningStats> = slots.iter().map(|s| s.stats.clone()).collect();
            // Hand each agent its per-agent share of the merged count so
            // counts grow linearly (not geometrically) across rounds.
            Some(merge_average(&all_stats)?.with_count_divided_by(slots.len() as u64))
        } else {
            None
        };
        broadcast(slots, strategy, &avg_policy, &avg_value, shared.as_ref())?;
    }

    Ok((RoundRecord { round, agents }, trajectories))
}

/// Average return of `episodes` episodes under the deterministic (mean)
/// policy, with frozen normalization statistics.
pub fn evaluate_policy(
    policy: &ParamVector,
    stats: Option<&RunningStats>,
    morph: &Morphology,
    episodes: usize,
    rng: &mut ChaCha8Rng,
    cfg: &PpoConfig,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let mut total = 0.0;
    for _ in 0..episodes {
        let episode_seed = rng.random::<u64>();
        let (mut state, mut obs) = reset(morph, episode_seed);
        let mut ep_return = 0.0;
        loop {
            let norm = match stats {
                Some(s) if s.count() > 0 => {
                    let mut v = s.normalize(&obs, cfg.epsilon)?;
                    if let Some(c) = cfg.norm_clip {
                        for x in &mut v {
                            *x = x.clamp(-c, c);
                        }
                    }
                    v
                }
                _ => obs.clone(),
            };
            let action = forward_policy(policy, &norm)?.mean;
            let (next_state, result) = step(&state, morph, &action)?;
            ep_return += result.reward;
            state = next_state;
            obs = result.observation;
            if result.done {
                break;
            }
        }
        total += ep_return;
    }
    Ok(total / episodes as f64)
}

/// Value prediction with the same normalization path as evaluation; handy
/// for diagnostics.
pub fn predict_value(
    value_net: &ParamVector,
    stats: Option<&RunningStats>,
    obs: &[f64],
    epsilon: f64,
) -> Result<f64> {
    let norm = match stats {
        Some(s) if s.count() > 0 => s.normalize(obs, epsilon)?,
        _ => obs.to_vec(),
    };
    forward_value(value_net, &norm)
}
