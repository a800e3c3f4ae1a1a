//! PPO-Clip local trainer: rollout collection with observation-normalization
//! hooks, generalized advantage estimation, and the multi-epoch clipped
//! surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::EnvInstance;
use crate::error::{Error, Result};
use crate::nn::{
    self, adam_update_flat, collect_grads, forward_policy, forward_value, gaussian_log_prob,
    register_params, AdamState, GradVector, ParamVector,
};
use crate::nn::tape::{Tape, Tensor};
use crate::runstats::{summarize_batch, BatchSummary, RunningStats};

/// One environment transition as stored in a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub raw_obs: Vec<f64>,
    pub norm_obs: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub done: bool,
    pub value: f64,
}

/// Ordered transitions collected by one agent, plus the value bootstrap for
/// the state following the last transition (zero if that step was terminal).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub bootstrap_value: f64,
}

/// Granularity at which running statistics absorb new observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatsGranularity {
    /// Absorb each observation before normalizing it (streaming reading).
    PerStep,
    /// Normalize the whole segment with frozen statistics, then absorb it
    /// once at the end of the rollout.
    PerRollout,
}

/// PPO hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lam: f64,
    pub clip: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub rollout_steps: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub advantage_norm: bool,
    pub max_grad_norm: f64,
    pub epsilon: f64,
    /// Symmetric clip applied to normalized observations, off by default.
    pub norm_clip: Option<f64>,
    pub stats_granularity: StatsGranularity,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lam: 0.95,
            clip: 0.2,
            lr: 3e-4,
            batch_size: 64,
            local_epochs: 10,
            rollout_steps: 2048,
            value_coef: 0.5,
            entropy_coef: 0.0,
            advantage_norm: true,
            max_grad_norm: 0.5,
            epsilon: 1e-8,
            norm_clip: None,
            stats_granularity: StatsGranularity::PerStep,
        }
    }
}

fn apply_norm_clip(mut obs: Vec<f64>, clip: Option<f64>) -> Vec<f64> {
    if let Some(c) = clip {
        for v in &mut obs {
            *v = v.clamp(-c, c);
        }
    }
    obs
}

/// Collect `n_steps` transitions, resetting the environment on episode end.
///
/// With `stats = Some(..)` each raw observation is folded into the running
/// statistics and normalized before being fed to the policy; with `None`
/// normalization is disabled and `norm_obs == raw_obs`.
pub fn collect_rollout(
    policy: &ParamVector,
    value_net: &ParamVector,
    mut stats: Option<&mut RunningStats>,
    env: &mut EnvInstance,
    n_steps: usize,
    cfg: &PpoConfig,
    action_rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let frozen = stats.as_deref().cloned();
    let mut transitions = Vec::with_capacity(n_steps);
    let act_dim = env.act_dim();

    for _ in 0..n_steps {
        let raw = env.current_obs().to_vec();
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObservation);
        }
        let norm = match (&mut stats, cfg.stats_granularity) {
            (Some(s), StatsGranularity::PerStep) => {
                let batch = BatchSummary {
                    count: 1,
                    mean: raw.clone(),
                    var: vec![0.0; raw.len()],
                };
                **s = s.update(&batch)?;
                apply_norm_clip(s.normalize(&raw, cfg.epsilon)?, cfg.norm_clip)
            }
            (Some(_), StatsGranularity::PerRollout) => {
                let f = frozen.as_ref().unwrap();
                if f.count() == 0 {
                    raw.clone()
                } else {
                    apply_norm_clip(f.normalize(&raw, cfg.epsilon)?, cfg.norm_clip)
                }
            }
            (None, _) => raw.clone(),
        };

        let value = forward_value(value_net, &norm)?;
        let pol = forward_policy(policy, &norm)?;
        let action: Vec<f64> = (0..act_dim)
            .map(|d| {
                let z: f64 = action_rng.sample(StandardNormal);
                pol.mean[d] + pol.std[d] * z
            })
            .collect();
        let log_prob = gaussian_log_prob(&pol, &action);
        let result = env.step(&action)?;

        transitions.push(Transition {
            raw_obs: raw,
            norm_obs: norm,
            action,
            log_prob,
            reward: result.reward,
            done: result.done,
            value,
        });
    }

    if let (Some(s), StatsGranularity::PerRollout) = (&mut stats, cfg.stats_granularity) {
        let rows: Vec<&[f64]> = transitions.iter().map(|t| t.raw_obs.as_slice()).collect();
        **s = s.update(&summarize_batch(&rows)?)?;
    }

    let bootstrap_value = if transitions.last().map_or(false, |t| t.done) {
        0.0
    } else {
        let raw = env.current_obs().to_vec();
        let norm = match (&stats, cfg.stats_granularity) {
            (Some(s), StatsGranularity::PerStep) => {
                apply_norm_clip(s.normalize(&raw, cfg.epsilon)?, cfg.norm_clip)
            }
            (Some(_), StatsGranularity::PerRollout) => {
                let f = frozen.as_ref().unwrap();
                if f.count() == 0 {
                    raw
                } else {
                    apply_norm_clip(f.normalize(&raw, cfg.epsilon)?, cfg.norm_clip)
                }
            }
            (None, _) => raw,
        };
        forward_value(value_net, &norm)?
    };

    Ok(Trajectory {
        transitions,
        bootstrap_value,
    })
}

/// Generalized advantage estimation.
///
/// delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t);
/// A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1};
/// returns_t = A_t + V(s_t).
pub fn compute_gae(traj: &Trajectory, gamma: f64, lam: f64) -> (Vec<f64>, Vec<f64>) {
    let n = traj.transitions.len();
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let tr = &traj.transitions[t];
        let cont = if tr.done { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n {
            if tr.done {
                0.0
            } else {
                traj.transitions[t + 1].value
            }
        } else {
            traj.bootstrap_value
        };
        let delta = tr.reward + gamma * next_value * cont - tr.value;
        next_adv = delta + gamma * lam * cont * next_adv;
        advantages[t] = next_adv;
        returns[t] = next_adv + tr.value;
    }
    (advantages, returns)
}

/// Inputs of one surrogate-loss evaluation (a minibatch).
pub struct LossInputs<'a> {
    /// Normalized observations, one row per sample.
    pub obs: &'a [Vec<f64>],
    pub actions: &'a [Vec<f64>],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

/// Scalar diagnostics of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct LossReport {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

pub struct LossOutput {
    pub total_loss: f64,
    pub policy_grad: GradVector,
    pub value_grad: GradVector,
    pub report: LossReport,
}

/// Evaluate the joint PPO objective on one minibatch and differentiate it
/// with respect to both networks.
///
/// total = -mean(min(rho * A, clip(rho, 1-eps, 1+eps) * A))
///         + value_coef * mean((V - returns)^2) - entropy_coef * entropy
pub fn ppo_loss_and_grad(
    policy: &ParamVector,
    value_net: &ParamVector,
    inputs: &LossInputs,
    cfg: &PpoConfig,
) -> Result<LossOutput> {
    let batch = inputs.obs.len();
    if batch == 0 {
        return Err(Error::EmptyBatch);
    }
    let obs_dim = inputs.obs[0].len();
    let act_dim = inputs.actions[0].len();

    let mut tape = Tape::new();
    let policy_vars = register_params(&mut tape, policy);
    let value_vars = register_params(&mut tape, value_net);

    let x = tape.constant(Tensor::from_vec(batch, obs_dim, inputs.obs.concat()));
    let actions = tape.constant(Tensor::from_vec(batch, act_dim, inputs.actions.concat()));
    let old_lp = tape.constant(Tensor::from_vec(batch, 1, inputs.old_log_probs.to_vec()));
    let adv = tape.constant(Tensor::from_vec(batch, 1, inputs.advantages.to_vec()));
    let ret = tape.constant(Tensor::from_vec(batch, 1, inputs.returns.to_vec()));

    // Policy log-probabilities under the current parameters.
    let mean = nn::forward_tape(&mut tape, &policy_vars, x);
    let log_std = *policy_vars
        .extra
        .first()
        .ok_or_else(|| Error::ShapeMismatch("policy has no log_std".into()))?;
    let ls_rows = tape.broadcast_rows(log_std, batch);
    let diff = tape.sub(actions, mean);
    let diff_sq = tape.square(diff);
    let neg2ls = tape.scale(ls_rows, -2.0);
    let inv_var = tape.exp(neg2ls);
    let weighted = tape.mul(diff_sq, inv_var);
    let quad = tape.scale(weighted, -0.5);
    let centered = tape.sub(quad, ls_rows);
    let per_dim = tape.add_scalar(centered, -0.5 * nn::LOG_2PI);
    let new_lp = tape.sum_cols(per_dim);

    // Clipped surrogate.
    let lp_delta = tape.sub(new_lp, old_lp);
    let ratio = tape.exp(lp_delta);
    let surr1 = tape.mul(ratio, adv);
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    let surr2 = tape.mul(clipped, adv);
    let surrogate = tape.min(surr1, surr2);
    let mean_surr = tape.mean(surrogate);
    let policy_loss = tape.scale(mean_surr, -1.0);

    // Value regression.
    let v = nn::forward_tape(&mut tape, &value_vars, x);
    let v_err = tape.sub(v, ret);
    let v_sq = tape.square(v_err);
    let value_loss = tape.mean(v_sq);

    let scaled_v = tape.scale(value_loss, cfg.value_coef);
    let mut total = tape.add(policy_loss, scaled_v);

    // Diagonal Gaussian entropy: sum(log_std) + act_dim/2 * (1 + ln 2 pi).
    let entropy_value = policy
        .extra(nn::LOG_STD)
        .map(|ls| ls.iter().sum::<f64>() + act_dim as f64 * 0.5 * (1.0 + nn::LOG_2PI))
        .unwrap_or(0.0);
    if cfg.entropy_coef != 0.0 {
        let ls_sum = tape.sum_cols(log_std);
        let ent = tape.add_scalar(ls_sum, act_dim as f64 * 0.5 * (1.0 + nn::LOG_2PI));
        let ent_term = tape.scale(ent, -cfg.entropy_coef);
        total = tape.add(total, ent_term);
    }

    let total_value = tape.value(total).data[0];
    if !total_value.is_finite() {
        return Err(Error::NonFiniteLoss);
    }

    // Diagnostics from forward values.
    let new_lp_vals = &tape.value(new_lp).data;
    let ratio_vals = &tape.value(ratio).data;
    let approx_kl = inputs
        .old_log_probs
        .iter()
        .zip(new_lp_vals.iter())
        .map(|(o, n)| o - n)
        .sum::<f64>()
        / batch as f64;
    let clip_fraction = ratio_vals
        .iter()
        .filter(|r| (**r - 1.0).abs() > cfg.clip)
        .count() as f64
        / batch as f64;
    let report = LossReport {
        policy_loss: tape.value(policy_loss).data[0],
        value_loss: tape.value(value_loss).data[0],
        entropy: entropy_value,
        approx_kl,
        clip_fraction,
    };

    let table = tape.backward(total)?;
    let policy_grad = collect_grads(&table, &policy_vars, policy);
    let value_grad = collect_grads(&table, &value_vars, value_net);

    Ok(LossOutput {
        total_loss: total_value,
        policy_grad,
        value_grad,
        report,
    })
}

/// Standardize advantages to zero mean, unit standard deviation.
pub fn standardize_advantages(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    advantages.iter().map(|a| (a - mean) / std).collect()
}

/// The multi-epoch minibatch PPO update. Policy and value networks are
/// updated jointly; gradients are clipped by their combined global norm.
/// Returns diagnostics averaged over all minibatches.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    policy: &mut ParamVector,
    value_net: &mut ParamVector,
    adam_policy: &mut AdamState,
    adam_value: &mut AdamState,
    traj: &Trajectory,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    shuffle_rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    let n = traj.transitions.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let adv = if cfg.advantage_norm {
        standardize_advantages(advantages)
    } else {
        advantages.to_vec()
    };
    let obs: Vec<Vec<f64>> = traj.transitions.iter().map(|t| t.norm_obs.clone()).collect();
    let actions: Vec<Vec<f64>> = traj.transitions.iter().map(|t| t.action.clone()).collect();
    let old_lp: Vec<f64> = traj.transitions.iter().map(|t| t.log_prob).collect();

    let mut policy_flat = policy.flatten();
    let mut value_flat = value_net.flatten();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut sum_report = LossReport::default();
    let mut batches = 0usize;

    for _ in 0..cfg.local_epochs {
        indices.shuffle(shuffle_rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let mb_obs: Vec<Vec<f64>> = chunk.iter().map(|&i| obs[i].clone()).collect();
            let mb_act: Vec<Vec<f64>> = chunk.iter().map(|&i| actions[i].clone()).collect();
            let mb_old: Vec<f64> = chunk.iter().map(|&i| old_lp[i]).collect();
            let mb_adv: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
            let mb_ret: Vec<f64> = chunk.iter().map(|&i| returns[i]).collect();

            let cur_policy = policy.from_flat(&policy_flat)?;
            let cur_value = value_net.from_flat(&value_flat)?;
            let mut out = ppo_loss_and_grad(
                &cur_policy,
                &cur_value,
                &LossInputs {
                    obs: &mb_obs,
                    actions: &mb_act,
                    old_log_probs: &mb_old,
                    advantages: &mb_adv,
                    returns: &mb_ret,
                },
                cfg,
            )?;

            // Joint global gradient-norm clipping.
            let norm = (out.policy_grad.flat.iter().map(|g| g * g).sum::<f64>()
                + out.value_grad.flat.iter().map(|g| g * g).sum::<f64>())
            .sqrt();
            if norm > cfg.max_grad_norm {
                let scale = cfg.max_grad_norm / norm;
                out.policy_grad.scale(scale);
                out.value_grad.scale(scale);
            }

            adam_update_flat(&mut policy_flat, &out.policy_grad.flat, adam_policy, cfg.lr);
            adam_update_flat(&mut value_flat, &out.value_grad.flat, adam_value, cfg.lr);

            sum_report.policy_loss += out.report.policy_loss;
            sum_report.value_loss += out.report.value_loss;
            sum_report.entropy += out.report.entropy;
            sum_report.approx_kl += out.report.approx_kl;
            sum_report.clip_fraction += out.report.clip_fraction;
            batches += 1;
        }
    }

    *policy = policy.from_flat(&policy_flat)?;
    *value_net = value_net.from_flat(&value_flat)?;

    let k = batches as f64;
    Ok(LossReport {
        policy_loss: sum_report.policy_loss / k,
        value_loss: sum_report.value_loss / k,
        entropy: sum_report.entropy / k,
        approx_kl: sum_report.approx_kl / k,
        clip_fraction: sum_report.clip_fraction / k,
    })
}
