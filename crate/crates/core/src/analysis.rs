//! Diagnostics: weight norms, activation-scale probes, observation
//! distribution summaries, and the norm-imbalance toy experiment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::rng::{stream, tag};
use rand::Rng;
use rand_distr::StandardNormal;

/// Frobenius norm of each layer's weight matrix (biases excluded).
pub fn weight_norms(params: &ParamVector) -> Vec<f64> {
    params
        .layers
        .iter()
        .map(|l| l.w.iter().map(|w| w * w).sum::<f64>().sqrt())
        .collect()
}

/// Per-unit variance of the first layer's pre-activations over a batch of
/// inputs. Requires at least two samples.
pub fn output_variance(params: &ParamVector, inputs: &[Vec<f64>]) -> Result<Vec<f64>> {
    if inputs.len() < 2 {
        return Err(Error::InvalidArgument(
            "output_variance needs at least 2 samples".into(),
        ));
    }
    let layer = params.layers.first().ok_or(Error::EmptyList)?;
    let units = layer.rows;
    let mut preacts = vec![Vec::with_capacity(inputs.len()); units];
    for x in inputs {
        if x.len() != layer.cols {
            return Err(Error::DimMismatch {
                expected: layer.cols,
                got: x.len(),
            });
        }
        for u in 0..units {
            let row = &layer.w[u * layer.cols..(u + 1) * layer.cols];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + layer.b[u];
            preacts[u].push(z);
        }
    }
    Ok(preacts
        .iter()
        .map(|zs| {
            let n = zs.len() as f64;
            let mean = zs.iter().sum::<f64>() / n;
            zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n
        })
        .collect())
}

/// Raw and normalized observation moments of one agent over one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsMoments {
    pub raw_mean: Vec<f64>,
    pub raw_var: Vec<f64>,
    pub norm_mean: Vec<f64>,
    pub norm_var: Vec<f64>,
}

/// Per-agent aggregates over a sequence of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsDistributionReport {
    /// Mean over rounds of mean over dims of |normalized-obs mean|.
    pub avg_abs_norm_mean: Vec<f64>,
    /// Mean over rounds of mean over dims of normalized-obs variance.
    pub avg_norm_var: Vec<f64>,
    /// Mean over rounds of mean over dims of raw-obs variance.
    pub avg_raw_var: Vec<f64>,
    /// Last round's raw-obs variance vector, per agent.
    pub final_raw_var: Vec<Vec<f64>>,
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Summarize raw/normalized observation moments across rounds, one inner
/// vector of rounds per agent.
pub fn obs_distribution_report(per_agent: &[Vec<ObsMoments>]) -> Result<ObsDistributionReport> {
    if per_agent.is_empty() || per_agent.iter().any(|r| r.is_empty()) {
        return Err(Error::EmptyList);
    }
    let mut report = ObsDistributionReport {
        avg_abs_norm_mean: Vec::new(),
        avg_norm_var: Vec::new(),
        avg_raw_var: Vec::new(),
        final_raw_var: Vec::new(),
    };
    for rounds in per_agent {
        let n = rounds.len() as f64;
        report.avg_abs_norm_mean.push(
            rounds
                .iter()
                .map(|m| mean_of(&m.norm_mean.iter().map(|v| v.abs()).collect::<Vec<_>>()))
                .sum::<f64>()
                / n,
        );
        report
            .avg_norm_var
            .push(rounds.iter().map(|m| mean_of(&m.norm_var)).sum::<f64>() / n);
        report
            .avg_raw_var
            .push(rounds.iter().map(|m| mean_of(&m.raw_var)).sum::<f64>() / n);
        report
            .final_raw_var
            .push(rounds.last().unwrap().raw_var.clone());
    }
    Ok(report)
}

/// Outcome of the two-agent federated linear-regression probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    /// Input-scale ratio sigma_1 / sigma_2 of the two agents.
    pub scale_ratio: f64,
    /// Pre-aggregation |w| of each agent after the last round.
    pub agent_norms: [f64; 2],
    /// agent_norms[0] / agent_norms[1]; the scale argument predicts this to
    /// approach `1 / scale_ratio`.
    pub norm_ratio: f64,
    pub predicted_ratio: f64,
    /// Each agent's share of the summed weight magnitude.
    pub contribution_share: [f64; 2],
    pub rounds: usize,
}

/// Federated linear regression with heterogeneous input scales.
///
/// Both agents fit y = z from x_i = sigma_i * z (sigma_1 = `ratio`,
/// sigma_2 = 1), running local gradient descent between uniform parameter
/// averages. The local optimum of agent i is w_i = 1/sigma_i, so the
/// pre-aggregation weight-norm ratio |w_1|/|w_2| settles near 1/`ratio`:
/// the larger an agent's input scale, the smaller its learned weights.
pub fn norm_imbalance_experiment(ratio: f64, rounds: usize, seed: u64) -> Result<NormReport> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::InvalidArgument("ratio must be positive".into()));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    let sigmas = [ratio, 1.0];
    let batch = 256;
    let local_steps = 50;
    // Stable for quadratic loss: lr < 1/max(sigma^2) per-agent; use a shared
    // conservative value tied to the larger scale.
    let lr = 0.5 / (ratio * ratio).max(1.0);
    let mut rng = stream(seed, &[tag::MORPH, 40]);
    let mut weights = [0.0f64; 2];

    for round in 0..rounds {
        for (w, sigma) in weights.iter_mut().zip(sigmas) {
            for _ in 0..local_steps {
                // grad of mean((w*x - y)^2) with x = sigma*z, y = z.
                let mut grad = 0.0;
                for _ in 0..batch {
                    let z: f64 = rng.sample(StandardNormal);
                    let x = sigma * z;
                    grad += 2.0 * (*w * x - z) * x;
                }
                *w -= lr * grad / batch as f64;
            }
        }
        // Report the pre-aggregation weights of the last round; earlier
        // rounds end with a uniform-average broadcast.
        if round + 1 < rounds {
            let avg = (weights[0] + weights[1]) / 2.0;
            weights = [avg, avg];
        }
    }

    let norms = [weights[0].abs(), weights[1].abs()];
    let total = norms[0] + norms[1];
    Ok(NormReport {
        scale_ratio: ratio,
        agent_norms: norms,
        norm_ratio: norms[0] / norms[1],
        predicted_ratio: 1.0 / ratio,
        contribution_share: [norms[0] / total, norms[1] / total],
        rounds,
    })
}
