//! Heterogeneous toy continuous-control environments.
//!
//! All agents of one kind share the observation space, action space, and
//! reward function; per-agent morphology parameters change only the
//! state-transition dynamics (and, for the scaled point mass, the linear
//! observation emission). Dynamics are deterministic; stochasticity enters
//! through the reset distribution and the stochastic policy.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tag};

pub const DT: f64 = 0.05;
pub const HORIZON: usize = 200;
pub const GRAVITY: f64 = 9.81;
const POINT_MASS_DAMPING: f64 = 0.95;
const PENDULUM_MAX_SPEED: f64 = 8.0;
const PENDULUM_MAX_TORQUE: f64 = 2.0;

/// Environment family. Observation/action dimensionality is shared per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    /// 2-D double integrator whose observation is the internal state scaled
    /// by a per-agent factor `obs_scale`. Exists to make the observation
    /// standard deviation directly controllable.
    ScaledPointMass,
    /// Torque-controlled swing-up pendulum with per-agent pole length and
    /// mass.
    HeteroPendulum,
}

impl EnvKind {
    pub fn obs_dim(self) -> usize {
        match self {
            EnvKind::ScaledPointMass => 4,
            EnvKind::HeteroPendulum => 3,
        }
    }

    pub fn act_dim(self) -> usize {
        match self {
            EnvKind::ScaledPointMass => 2,
            EnvKind::HeteroPendulum => 1,
        }
    }

    /// Symmetric action bound applied (by clipping) before the dynamics.
    pub fn action_bound(self) -> f64 {
        match self {
            EnvKind::ScaledPointMass => 1.0,
            EnvKind::HeteroPendulum => PENDULUM_MAX_TORQUE,
        }
    }
}

/// Per-agent environment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Morphology {
    pub env_kind: EnvKind,
    pub params: BTreeMap<String, f64>,
    pub agent_id: usize,
}

impl Morphology {
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }
}

/// Sampling intervals for morphology parameters, `lo <= hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyRanges {
    pub obs_scale: (f64, f64),
    pub pole_length: (f64, f64),
    pub pole_mass: (f64, f64),
}

impl Default for MorphologyRanges {
    fn default() -> Self {
        MorphologyRanges {
            obs_scale: (1.0, 10.0),
            pole_length: (0.5, 1.5),
            pole_mass: (0.5, 1.5),
        }
    }
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> Result<f64> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok(lo + rng.random::<f64>() * (hi - lo))
}

/// Draw `n_agents` morphologies i.i.d. uniform from the configured ranges.
pub fn sample_morphologies(
    kind: EnvKind,
    n_agents: usize,
    ranges: &MorphologyRanges,
    seed: u64,
) -> Result<Vec<Morphology>> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("n_agents must be >= 1".into()));
    }
    let mut rng = stream(seed, &[tag::MORPH]);
    (0..n_agents)
        .map(|agent_id| {
            let mut params = BTreeMap::new();
            match kind {
                EnvKind::ScaledPointMass => {
                    params.insert("obs_scale".into(), sample_range(&mut rng, ranges.obs_scale)?);
                }
                EnvKind::HeteroPendulum => {
                    params.insert(
                        "pole_length".into(),
                        sample_range(&mut rng, ranges.pole_length)?,
                    );
                    params.insert(
                        "pole_mass".into(),
                        sample_range(&mut rng, ranges.pole_mass)?,
                    );
                }
            }
            Ok(Morphology {
                env_kind: kind,
                params,
                agent_id,
            })
        })
        .collect()
}

/// Internal simulator state of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub internal: Vec<f64>,
    pub step_counter: usize,
    pub done: bool,
}

/// One transition's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

fn emit_observation(morph: &Morphology, internal: &[f64]) -> Vec<f64> {
    match morph.env_kind {
        EnvKind::ScaledPointMass => {
            let k = morph.param("obs_scale");
            internal.iter().map(|v| k * v).collect()
        }
        EnvKind::HeteroPendulum => {
            let (theta, theta_dot) = (internal[0], internal[1]);
            vec![theta.cos(), theta.sin(), theta_dot]
        }
    }
}

/// Start a new episode. Point mass: position and velocity components
/// uniform in [-0.5, 0.5]. Pendulum: angle near hanging-down (theta = pi),
/// small angular velocity; theta = 0 is upright.
pub fn reset(morph: &Morphology, episode_seed: u64) -> (EnvState, Vec<f64>) {
    let mut rng = stream(episode_seed, &[tag::ENV_RESET]);
    let internal = match morph.env_kind {
        EnvKind::ScaledPointMass => (0..4).map(|_| rng.random::<f64>() - 0.5).collect(),
        EnvKind::HeteroPendulum => {
            let theta = std::f64::consts::PI + (rng.random::<f64>() * 0.2 - 0.1);
            let theta_dot = rng.random::<f64>() * 0.1 - 0.05;
            vec![theta, theta_dot]
        }
    };
    let obs = emit_observation(morph, &internal);
    (
        EnvState {
            internal,
            step_counter: 0,
            done: false,
        },
        obs,
    )
}

/// Wrap an angle into [-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = (theta + std::f64::consts::PI) % two_pi;
    if t < 0.0 {
        t += two_pi;
    }
    t - std::f64::consts::PI
}

/// Advance one step. Actions are clipped to the kind's bound before use.
pub fn step(state: &EnvState, morph: &Morphology, action: &[f64]) -> Result<(EnvState, StepResult)> {
    if state.done {
        return Err(Error::EpisodeFinished);
    }
    if action.len() != morph.env_kind.act_dim() {
        return Err(Error::DimMismatch {
            expected: morph.env_kind.act_dim(),
            got: action.len(),
        });
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFiniteObservation);
    }
    let bound = morph.env_kind.action_bound();
    let a: Vec<f64> = action.iter().map(|v| v.clamp(-bound, bound)).collect();

    let (internal, reward) = match morph.env_kind {
        EnvKind::ScaledPointMass => {
            let (px, py, vx, vy) = (
                state.internal[0],
                state.internal[1],
                state.internal[2],
                state.internal[3],
            );
            let vx1 = POINT_MASS_DAMPING * vx + DT * a[0];
            let vy1 = POINT_MASS_DAMPING * vy + DT * a[1];
            let px1 = px + DT * vx1;
            let py1 = py + DT * vy1;
            let reward = -(px1 * px1 + py1 * py1) - 0.01 * (a[0] * a[0] + a[1] * a[1]);
            (vec![px1, py1, vx1, vy1], reward)
        }
        EnvKind::HeteroPendulum => {
            let (theta, theta_dot) = (state.internal[0], state.internal[1]);
            let length = morph.param("pole_length");
            let mass = morph.param("pole_mass");
            let torque = a[0];
            // Cost on the pre-step state and the applied torque.
            let wrapped = wrap_angle(theta);
            let reward =
                -(wrapped * wrapped + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque);
            let theta_ddot = (3.0 * GRAVITY / (2.0 * length)) * theta.sin()
                + 3.0 * torque / (mass * length * length);
            let theta_dot1 =
                (theta_dot + DT * theta_ddot).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
            let theta1 = theta + DT * theta_dot1;
            (vec![theta1, theta_dot1], reward)
        }
    };

    let step_counter = state.step_counter + 1;
    let done = step_counter >= HORIZON;
    let observation = emit_observation(morph, &internal);
    Ok((
        EnvState {
            internal,
            step_counter,
            done,
        },
        StepResult {
            observation,
            reward,
            done,
        },
    ))
}

/// An owned environment with auto-reset bookkeeping for rollout collection.
///
/// Episode seeds are drawn from a dedicated reset stream, so the sequence of
/// initial states depends only on (seed, agent) and not on the policy.
#[derive(Debug, Clone)]
pub struct EnvInstance {
    pub morph: Morphology,
    state: EnvState,
    current_obs: Vec<f64>,
    reset_rng: ChaCha8Rng,
    episode_return: f64,
    completed_returns: Vec<f64>,
}

impl EnvInstance {
    pub fn new(morph: Morphology, mut reset_rng: ChaCha8Rng) -> Self {
        let episode_seed = reset_rng.random::<u64>();
        let (state, current_obs) = reset(&morph, episode_seed);
        EnvInstance {
            morph,
            state,
            current_obs,
            reset_rng,
            episode_return: 0.0,
            completed_returns: Vec::new(),
        }
    }

    pub fn current_obs(&self) -> &[f64] {
        &self.current_obs
    }

    pub fn obs_dim(&self) -> usize {
        self.morph.env_kind.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.morph.env_kind.act_dim()
    }

    /// Step the environment, auto-resetting when the episode ends. After a
    /// terminal step, `current_obs` is the first observation of the next
    /// episode.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let (state, result) = step(&self.state, &self.morph, action)?;
        self.episode_return += result.reward;
        if result.done {
            self.completed_returns.push(self.episode_return);
            self.episode_return = 0.0;
            let episode_seed = self.reset_rng.random::<u64>();
            let (state, obs) = reset(&self.morph, episode_seed);
            self.state = state;
            self.current_obs = obs;
        } else {
            self.state = state;
            self.current_obs = result.observation.clone();
        }
        Ok(result)
    }

    /// Returns of episodes completed since the last drain.
    pub fn drain_completed_returns(&mut self) -> Vec<f64> {
        std::mem::take(&mut self.completed_returns)
    }
}

/// Empirical per-dimension mean/variance of observations under a
/// uniform-random policy; verifies the heterogeneity of the observation
/// distributions across morphologies.
pub fn observation_stats_truth(
    morph: &Morphology,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let mut action_rng = stream(seed, &[tag::ACTION, morph.agent_id as u64]);
    let mut env = EnvInstance::new(morph.clone(), stream(seed, &[tag::ENV_RESET]));
    let bound = morph.env_kind.action_bound();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push(env.current_obs().to_vec());
        let action: Vec<f64> = (0..morph.env_kind.act_dim())
            .map(|_| (action_rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        env.step(&action)?;
    }
    let summary = crate::runstats::summarize_batch(&rows)?;
    Ok((summary.mean, summary.var))
}
