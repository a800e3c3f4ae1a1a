//! Fully connected actor-critic networks with exact reverse-mode gradients.
//!
//! Parameters live in [`ParamVector`], a flat, layer-indexed container that
//! is the unit of federated averaging. Forward passes for rollout collection
//! are plain loops; training losses are built on the [`tape`] autodiff.

pub mod init;
pub mod tape;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, tag};
use tape::{Tape, Tensor, Var};

pub const LOG_STD: &str = "log_std";
pub const LOG_2PI: f64 = 1.8378770664093453;

/// One affine layer: row-major `rows x cols` weight matrix plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Named non-layer parameter (e.g. the state-independent `log_std`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedParam {
    pub name: String,
    pub values: Vec<f64>,
}

/// All parameters of one network, in a fixed flattening order:
/// per layer weight then bias, then the extra parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layers: Vec<Layer>,
    pub extra: Vec<NamedParam>,
}

impl ParamVector {
    pub fn total_len(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>()
            + self.extra.iter().map(|e| e.values.len()).sum::<usize>()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.cols)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    pub fn extra(&self, name: &str) -> Option<&[f64]> {
        self.extra
            .iter()
            .find(|e| e.name == name)
            .map(|e| e.values.as_slice())
    }

    pub fn shape_matches(&self, other: &ParamVector) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.rows == b.rows && a.cols == b.cols)
            && self.extra.len() == other.extra.len()
            && self
                .extra
                .iter()
                .zip(&other.extra)
                .all(|(a, b)| a.name == b.name && a.values.len() == b.values.len())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        for e in &self.extra {
            out.extend_from_slice(&e.values);
        }
        out
    }

    /// Rebuild a ParamVector of this shape from a flat slice.
    pub fn from_flat(&self, flat: &[f64]) -> Result<ParamVector> {
        if flat.len() != self.total_len() {
            return Err(Error::ShapeMismatch(format!(
                "flat length {} != total_len {}",
                flat.len(),
                self.total_len()
            )));
        }
        let mut out = self.clone();
        let mut pos = 0;
        for l in &mut out.layers {
            let wlen = l.w.len();
            l.w.copy_from_slice(&flat[pos..pos + wlen]);
            pos += wlen;
            let blen = l.b.len();
            l.b.copy_from_slice(&flat[pos..pos + blen]);
            pos += blen;
        }
        for e in &mut out.extra {
            let elen = e.values.len();
            e.values.copy_from_slice(&flat[pos..pos + elen]);
            pos += elen;
        }
        Ok(out)
    }
}

/// Gaussian policy head output.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Gradient of a scalar loss with respect to a ParamVector, stored in the
/// ParamVector flattening order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector {
    pub flat: Vec<f64>,
}

impl GradVector {
    pub fn l2_norm(&self) -> f64 {
        self.flat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        for v in &mut self.flat {
            *v *= k;
        }
    }
}

/// Build the policy and value networks.
///
/// Policy: obs_dim -> hidden... -> act_dim Gaussian mean head plus a
/// state-independent `log_std` vector initialized to zero. Value:
/// obs_dim -> hidden... -> 1. Hidden layers are orthogonally initialized
/// with gain sqrt(2), the policy head with gain 0.01, the value head with
/// gain 1; biases start at zero.
pub fn build_mlp(
    obs_dim: usize,
    act_dim: usize,
    hidden: &[usize],
    seed: u64,
) -> Result<(ParamVector, ParamVector)> {
    if obs_dim == 0 || act_dim == 0 {
        return Err(Error::InvalidArgument(
            "obs_dim and act_dim must be >= 1".into(),
        ));
    }
    let mut rng = stream(seed, &[tag::INIT]);
    let sqrt2 = 2.0_f64.sqrt();

    let build = |out_dim: usize, head_gain: f64, rng: &mut ChaCha8Rng| {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let (cols, rows) = (dims[i], dims[i + 1]);
            let gain = if i == dims.len() - 2 { head_gain } else { sqrt2 };
            layers.push(Layer {
                rows,
                cols,
                w: init::orthogonal(rows, cols, gain, rng),
                b: vec![0.0; rows],
            });
        }
        layers
    };

    let policy = ParamVector {
        layers: build(act_dim, 0.01, &mut rng),
        extra: vec![NamedParam {
            name: LOG_STD.into(),
            values: vec![0.0; act_dim],
        }],
    };
    let value = ParamVector {
        layers: build(1, 1.0, &mut rng),
        extra: vec![],
    };
    Ok((policy, value))
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layer.rows);
    for r in 0..layer.rows {
        let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
        let mut acc = layer.b[r];
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        out.push(acc);
    }
    out
}

fn mlp_forward(params: &ParamVector, obs: &[f64]) -> Result<Vec<f64>> {
    let first = params
        .layers
        .first()
        .ok_or_else(|| Error::ShapeMismatch("network has no layers".into()))?;
    if obs.len() != first.cols {
        return Err(Error::DimMismatch {
            expected: first.cols,
            got: obs.len(),
        });
    }
    let last = params.layers.len() - 1;
    let mut h = obs.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        h = affine(layer, &h);
        if i != last {
            for v in &mut h {
                *v = v.tanh();
            }
        }
    }
    Ok(h)
}

/// Policy forward pass: tanh hidden layers, identity mean head,
/// `std = exp(log_std)`.
pub fn forward_policy(params: &ParamVector, obs: &[f64]) -> Result<PolicyOutput> {
    let mean = mlp_forward(params, obs)?;
    let log_std = params
        .extra(LOG_STD)
        .ok_or_else(|| Error::ShapeMismatch("policy has no log_std".into()))?;
    if log_std.len() != mean.len() {
        return Err(Error::ShapeMismatch("log_std length != act_dim".into()));
    }
    Ok(PolicyOutput {
        mean,
        std: log_std.iter().map(|v| v.exp()).collect(),
    })
}

/// Value forward pass; scalar output.
pub fn forward_value(params: &ParamVector, obs: &[f64]) -> Result<f64> {
    let out = mlp_forward(params, obs)?;
    if out.len() != 1 {
        return Err(Error::ShapeMismatch("value head must be scalar".into()));
    }
    Ok(out[0])
}

/// Log-density of `action` under the diagonal Gaussian `out`.
pub fn gaussian_log_prob(out: &PolicyOutput, action: &[f64]) -> f64 {
    debug_assert_eq!(out.mean.len(), action.len());
    let mut lp = 0.0;
    for ((&a, &m), &s) in action.iter().zip(&out.mean).zip(&out.std) {
        let z = (a - m) / s;
        lp += -0.5 * z * z - s.ln() - 0.5 * LOG_2PI;
    }
    lp
}

/// Adam moment estimates over a flattened parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One Adam step over a flat parameter vector, in place.
pub fn adam_update_flat(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Pure-function Adam step over a ParamVector.
pub fn adam_step(
    params: &ParamVector,
    grads: &GradVector,
    state: &AdamState,
    lr: f64,
) -> Result<(ParamVector, AdamState)> {
    if grads.flat.len() != params.total_len() {
        return Err(Error::ShapeMismatch(format!(
            "grad length {} != param length {}",
            grads.flat.len(),
            params.total_len()
        )));
    }
    let mut flat = params.flatten();
    let mut st = state.clone();
    adam_update_flat(&mut flat, &grads.flat, &mut st, lr);
    Ok((params.from_flat(&flat)?, st))
}

/// Tape handles for one network's parameters.
pub struct NetVars {
    pub ws: Vec<Var>,
    pub bs: Vec<Var>,
    pub extra: Vec<Var>,
}

/// Register every parameter of `params` on the tape as trainable leaves.
pub fn register_params(tape: &mut Tape, params: &ParamVector) -> NetVars {
    let mut ws = Vec::new();
    let mut bs = Vec::new();
    for l in &params.layers {
        ws.push(tape.param(Tensor::from_vec(l.rows, l.cols, l.w.clone())));
        bs.push(tape.param(Tensor::from_vec(1, l.rows, l.b.clone())));
    }
    let extra = params
        .extra
        .iter()
        .map(|e| tape.param(Tensor::from_vec(1, e.values.len(), e.values.clone())))
        .collect();
    NetVars { ws, bs, extra }
}

/// MLP forward on the tape: tanh on hidden layers, identity output.
pub fn forward_tape(tape: &mut Tape, vars: &NetVars, x: Var) -> Var {
    let last = vars.ws.len() - 1;
    let mut h = x;
    for i in 0..vars.ws.len() {
        h = tape.linear(h, vars.ws[i], vars.bs[i]);
        if i != last {
            h = tape.tanh(h);
        }
    }
    h
}

/// Collect gradients for one network from a backward table, flattened in
/// ParamVector order. Parameters that did not influence the loss get zeros.
pub fn collect_grads(
    table: &[Option<Tensor>],
    vars: &NetVars,
    params: &ParamVector,
) -> GradVector {
    let mut flat = Vec::with_capacity(params.total_len());
    let pull = |var: Var, len: usize, flat: &mut Vec<f64>| match &table[var.index()] {
        Some(t) => flat.extend_from_slice(&t.data),
        None => flat.extend(std::iter::repeat(0.0).take(len)),
    };
    for (i, l) in params.layers.iter().enumerate() {
        pull(vars.ws[i], l.w.len(), &mut flat);
        pull(vars.bs[i], l.b.len(), &mut flat);
    }
    for (i, e) in params.extra.iter().enumerate() {
        pull(vars.extra[i], e.values.len(), &mut flat);
    }
    GradVector { flat }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn build_mlp_shape_arithmetic() {
        let (policy, value) = build_mlp(2, 1, &[64, 64], 0).unwrap();
        // (2*64+64) + (64*64+64) + (64*1+1) + 1 = 4418
        assert_eq!(policy.total_len(), 4418);
        assert_eq!(value.total_len(), (2 * 64 + 64) + (64 * 64 + 64) + (64 + 1));
        assert_eq!(policy.input_dim(), 2);
        assert_eq!(policy.output_dim(), 1);
        assert_eq!(value.output_dim(), 1);
    }

    #[test]
    fn build_mlp_is_deterministic() {
        let a = build_mlp(3, 2, &[8, 8], 17).unwrap();
        let b = build_mlp(3, 2, &[8, 8], 17).unwrap();
        assert_eq!(a, b);
        let c = build_mlp(3, 2, &[8, 8], 18).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn log_std_starts_at_zero() {
        let (policy, _) = build_mlp(3, 2, &[8], 0).unwrap();
        assert_eq!(policy.extra(LOG_STD).unwrap(), &[0.0, 0.0]);
        let out = forward_policy(&policy, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.std, vec![1.0, 1.0]);
    }

    #[test]
    fn build_mlp_rejects_zero_dims() {
        assert!(build_mlp(0, 1, &[4], 0).is_err());
        assert!(build_mlp(1, 0, &[4], 0).is_err());
    }

    fn zero_net(dims: &[usize], log_std: Option<usize>) -> ParamVector {
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                rows: w[1],
                cols: w[0],
                w: vec![0.0; w[0] * w[1]],
                b: vec![0.0; w[1]],
            })
            .collect();
        ParamVector {
            layers,
            extra: log_std
                .map(|d| {
                    vec![NamedParam {
                        name: LOG_STD.into(),
                        values: vec![0.0; d],
                    }]
                })
                .unwrap_or_default(),
        }
    }

    #[test]
    fn zero_network_outputs_zero_mean_unit_std() {
        let p = zero_net(&[3, 4, 2], Some(2));
        let out = forward_policy(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out.mean, vec![0.0, 0.0]);
        assert_eq!(out.std, vec![1.0, 1.0]);
        let v = zero_net(&[3, 4, 1], None);
        assert_eq!(forward_value(&v, &[1.0, -2.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn single_linear_layer_literal() {
        let mut p = zero_net(&[1, 1], Some(1));
        p.layers[0].w = vec![2.0];
        p.layers[0].b = vec![1.0];
        let out = forward_policy(&p, &[3.0]).unwrap();
        assert_eq!(out.mean, vec![7.0]);

        let mut v = zero_net(&[2, 1], None);
        v.layers[0].w = vec![1.0, 1.0];
        assert_eq!(forward_value(&v, &[2.0, 3.0]).unwrap(), 5.0);
    }

    #[test]
    fn forward_rejects_dim_mismatch() {
        let (policy, value) = build_mlp(3, 1, &[4], 0).unwrap();
        assert!(forward_policy(&policy, &[0.0, 0.0]).is_err());
        assert!(forward_value(&value, &[0.0; 4]).is_err());
    }

    /// Straight-line matrix-arithmetic oracle, written independently of the
    /// layer iteration in `mlp_forward`.
    fn oracle_forward_2h(p: &ParamVector, obs: &[f64]) -> Vec<f64> {
        let l = &p.layers;
        let mv = |layer: &Layer, x: &[f64]| -> Vec<f64> {
            (0..layer.rows)
                .map(|r| {
                    layer.b[r]
                        + x.iter()
                            .enumerate()
                            .map(|(c, &xv)| layer.w[r * layer.cols + c] * xv)
                            .sum::<f64>()
                })
                .collect()
        };
        let h1: Vec<f64> = mv(&l[0], obs).iter().map(|v| v.tanh()).collect();
        let h2: Vec<f64> = mv(&l[1], &h1).iter().map(|v| v.tanh()).collect();
        mv(&l[2], &h2)
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let (policy, value) = build_mlp(3, 2, &[5, 7], 41).unwrap();
        let mut rng = crate::rng::stream(41, &[100]);
        for _ in 0..20 {
            let obs: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let got = forward_policy(&policy, &obs).unwrap();
            let want = oracle_forward_2h(&policy, &obs);
            for (g, w) in got.mean.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
            }
            let gv = forward_value(&value, &obs).unwrap();
            let wv = oracle_forward_2h(&value, &obs)[0];
            assert!((gv - wv).abs() <= 1e-12 * wv.abs().max(1.0));
        }
    }

    #[test]
    fn log_prob_at_mean_unit_std() {
        for d in 1..4usize {
            let out = PolicyOutput {
                mean: vec![0.3; d],
                std: vec![1.0; d],
            };
            let lp = gaussian_log_prob(&out, &vec![0.3; d]);
            assert!((lp - (-(d as f64) * 0.5 * LOG_2PI)).abs() < 1e-12);
            assert!((lp / d as f64 + 0.918939).abs() < 1e-6);
        }
    }

    #[test]
    fn log_prob_direct_formula() {
        let out = PolicyOutput {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let lp = gaussian_log_prob(&out, &[1.0]);
        assert!((lp - (-0.5 - 0.918938533204672_f64)).abs() < 1e-9);
        assert!((lp + 1.418939).abs() < 1e-6);
    }

    #[test]
    fn doubling_std_costs_ln2_per_dim() {
        for d in 1..4usize {
            let narrow = PolicyOutput {
                mean: vec![0.0; d],
                std: vec![1.0; d],
            };
            let wide = PolicyOutput {
                mean: vec![0.0; d],
                std: vec![2.0; d],
            };
            let drop = gaussian_log_prob(&narrow, &vec![0.0; d])
                - gaussian_log_prob(&wide, &vec![0.0; d]);
            assert!((drop - d as f64 * 2.0_f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn flatten_round_trips_bit_exactly() {
        let (policy, _) = build_mlp(3, 2, &[4, 4], 7).unwrap();
        let flat = policy.flatten();
        assert_eq!(flat.len(), policy.total_len());
        let back = policy.from_flat(&flat).unwrap();
        assert_eq!(policy, back);
    }

    #[test]
    fn checkpoint_json_round_trip() {
        let (policy, _) = build_mlp(2, 1, &[3], 5).unwrap();
        let json = serde_json::to_string(&policy).unwrap();
        let back: ParamVector = serde_json::from_str(&json).unwrap();
        assert_eq!(policy, back);
    }

    #[test]
    fn grad_of_param_sum_is_ones() {
        let (policy, _) = build_mlp(2, 1, &[3], 5).unwrap();
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &policy);
        // Sum all parameters via mean * numel per tensor.
        let mut total: Option<Var> = None;
        for &v in vars.ws.iter().chain(&vars.bs).chain(&vars.extra) {
            let n = tape.value(v).numel() as f64;
            let m = tape.mean(v);
            let s = tape.scale(m, n);
            total = Some(match total {
                Some(t) => tape.add(t, s),
                None => s,
            });
        }
        let table = tape.backward(total.unwrap()).unwrap();
        let g = collect_grads(&table, &vars, &policy);
        assert_eq!(g.flat, vec![1.0; policy.total_len()]);
    }

    /// Central finite differences of a scalar function of the flattened
    /// parameters.
    fn finite_diff(
        params: &ParamVector,
        f: &dyn Fn(&ParamVector) -> f64,
        h: f64,
    ) -> Vec<f64> {
        let flat = params.flatten();
        let mut out = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let fp = f(&params.from_flat(&plus).unwrap());
            let fm = f(&params.from_flat(&minus).unwrap());
            out.push((fp - fm) / (2.0 * h));
        }
        out
    }

    #[test]
    fn regression_loss_gradient_matches_finite_differences() {
        // loss = ||W x + b - y||^2 on a small random net.
        let (_, net) = build_mlp(3, 1, &[4], 23).unwrap();
        let mut rng = crate::rng::stream(23, &[55]);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let ys: Vec<f64> = (0..4).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();

        let loss_fn = |p: &ParamVector| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, &y)| {
                    let d = forward_value(p, x).unwrap() - y;
                    d * d
                })
                .sum::<f64>()
                / xs.len() as f64
        };

        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &net);
        let x = tape.constant(Tensor::from_vec(4, 3, xs.concat()));
        let target = tape.constant(Tensor::from_vec(4, 1, ys.clone()));
        let pred = forward_tape(&mut tape, &vars, x);
        let diff = tape.sub(pred, target);
        let sq = tape.square(diff);
        let loss = tape.mean(sq);
        let table = tape.backward(loss).unwrap();
        let got = collect_grads(&table, &vars, &net);

        let want = finite_diff(&net, &loss_fn, 1e-5);
        for (g, w) in got.flat.iter().zip(&want) {
            let rel = (g - w).abs() / g.abs().max(w.abs()).max(1e-6);
            assert!(rel <= 1e-6, "grad {} vs fd {} rel {}", g, w, rel);
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let (policy, _) = build_mlp(2, 1, &[3], 5).unwrap();
        let g = GradVector {
            flat: vec![0.0; policy.total_len()],
        };
        let st = AdamState::new(policy.total_len());
        let (p2, st2) = adam_step(&policy, &g, &st, 3e-4).unwrap();
        assert_eq!(p2, policy);
        assert_eq!(st2.t, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        let (policy, _) = build_mlp(2, 1, &[3], 5).unwrap();
        let mut rng = crate::rng::stream(5, &[77]);
        let g = GradVector {
            flat: (0..policy.total_len())
                .map(|_| {
                    let v: f64 = rng.random::<f64>() * 2.0 - 1.0;
                    if v.abs() < 1e-3 {
                        1e-3
                    } else {
                        v
                    }
                })
                .collect(),
        };
        let st = AdamState::new(policy.total_len());
        let lr = 0.01;
        let (p2, _) = adam_step(&policy, &g, &st, lr).unwrap();
        let before = policy.flatten();
        let after = p2.flatten();
        for ((a, b), g) in after.iter().zip(&before).zip(&g.flat) {
            let step = a - b;
            // m_hat / sqrt(v_hat) = sign(g) on the first step.
            assert!((step + lr * g.signum()).abs() < 1e-5);
        }
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // Oracle: the same scalar recurrence run standalone.
        let mut w_oracle = 0.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=100 {
            let g = 2.0 * (w_oracle - 3.0);
            m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g;
            v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m / (1.0 - ADAM_BETA1.powi(t));
            let v_hat = v / (1.0 - ADAM_BETA2.powi(t));
            w_oracle -= 0.1 * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }

        let mut p = ParamVector {
            layers: vec![],
            extra: vec![NamedParam {
                name: "w".into(),
                values: vec![0.0],
            }],
        };
        let mut st = AdamState::new(1);
        for _ in 0..100 {
            let g = GradVector {
                flat: vec![2.0 * (p.extra[0].values[0] - 3.0)],
            };
            let (p2, st2) = adam_step(&p, &g, &st, 0.1).unwrap();
            p = p2;
            st = st2;
        }
        assert_eq!(p.extra[0].values[0], w_oracle);
        assert!((p.extra[0].values[0] - 3.0).abs() < 0.05);
    }
}
