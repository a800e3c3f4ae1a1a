//! Streaming per-dimension observation statistics.
//!
//! Maintains the cumulative count, running mean, and running population
//! variance of an observation stream via a batch-merge update (a Chan-style
//! parallel merge), plus the normalization and cross-agent averaging used by
//! the federation strategies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cumulative count, running mean, and running population variance of an
/// observation stream, one entry per observation dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Count, mean, and population variance of a single batch of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub count: u64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    /// Empty statistics over `dim` dimensions.
    pub fn new(dim: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; dim],
            var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Same moments with the count divided by `divisor` (at least 1).
    ///
    /// Used when statistics merged from `n` agents are handed back to a
    /// single agent: keeping the summed count would let it compound
    /// geometrically across repeated merge/redistribute cycles and overflow,
    /// while the per-agent share keeps subsequent updates sensibly weighted.
    pub fn with_count_divided_by(mut self, divisor: u64) -> RunningStats {
        self.count = (self.count / divisor.max(1)).max(1);
        self
    }

    /// Fold one batch into the running statistics, returning the updated
    /// statistics. `self` is left untouched.
    ///
    /// With previous count `C_p` and batch count `C_b`:
    /// count' = C_p + C_b, mean' = mean + delta * C_b / count', and
    /// var' = (var * C_p + var_b * C_b + delta^2 * C_p * C_b / count') / count'
    /// where delta = mean_b - mean, all element-wise.
    pub fn update(&self, batch: &BatchSummary) -> Result<RunningStats> {
        if batch.mean.len() != self.dim() || batch.var.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: batch.mean.len(),
            });
        }
        if batch.count == 0 {
            return Err(Error::EmptyBatch);
        }
        let count = self
            .count
            .checked_add(batch.count)
            .ok_or(Error::CountOverflow)?;
        let c_prev = self.count as f64;
        let c_batch = batch.count as f64;
        let c_total = count as f64;

        let mut mean = vec![0.0; self.dim()];
        let mut var = vec![0.0; self.dim()];
        for d in 0..self.dim() {
            let delta = batch.mean[d] - self.mean[d];
            mean[d] = self.mean[d] + delta * c_batch / c_total;
            let m_prev = self.var[d] * c_prev;
            let m_batch = batch.var[d] * c_batch;
            let v = (m_prev + m_batch + delta * delta * c_prev * c_batch / c_total) / c_total;
            var[d] = v.max(0.0);
        }
        Ok(RunningStats { count, mean, var })
    }

    /// Normalize an observation to `(x - mean) / sqrt(var + epsilon)`.
    pub fn normalize(&self, x: &[f64], epsilon: f64) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::NormalizeBeforeUpdate);
        }
        if x.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(self.var.iter()))
            .map(|(&xi, (&m, &v))| (xi - m) / (v + epsilon).sqrt())
            .collect())
    }
}

/// Per-column count, mean, and population variance of a batch of
/// observations (one row per sample).
pub fn summarize_batch<S: AsRef<[f64]>>(rows: &[S]) -> Result<BatchSummary> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let dim = rows[0].as_ref().len();
    for row in rows {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteObservation);
        }
    }
    let inv_n = 1.0 / n as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, &v) in mean.iter_mut().zip(row.as_ref()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m *= inv_n;
    }
    let mut var = vec![0.0; dim];
    for row in rows {
        for (s, (&v, &m)) in var.iter_mut().zip(row.as_ref().iter().zip(mean.iter())) {
            let d = v - m;
            *s += d * d;
        }
    }
    for v in &mut var {
        *v *= inv_n;
    }
    Ok(BatchSummary {
        count: n as u64,
        mean,
        var,
    })
}

/// Uniform element-wise average of agent statistics, used by the shared
/// normalization strategy. Counts are summed.
pub fn merge_average(stats_list: &[RunningStats]) -> Result<RunningStats> {
    let first = stats_list.first().ok_or(Error::EmptyList)?;
    let dim = first.dim();
    let n = stats_list.len() as f64;
    let mut count: u64 = 0;
    let mut mean = vec![0.0; dim];
    let mut var = vec![0.0; dim];
    for s in stats_list {
        if s.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: s.dim(),
            });
        }
        count = count.checked_add(s.count).ok_or(Error::CountOverflow)?;
        for d in 0..dim {
            mean[d] += s.mean[d];
            var[d] += s.var[d];
        }
    }
    for d in 0..dim {
        mean[d] /= n;
        var[d] /= n;
    }
    Ok(RunningStats { count, mean, var })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two-pass population statistics over a full stream; the independent
    /// oracle for the incremental update.
    fn two_pass(rows: &[Vec<f64>]) -> (u64, Vec<f64>, Vec<f64>) {
        let n = rows.len() as f64;
        let dim = rows[0].len();
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for d in 0..dim {
                let diff = r[d] - mean[d];
                var[d] += diff * diff / n;
            }
        }
        (rows.len() as u64, mean, var)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    #[test]
    fn summarize_constant_batch() {
        let b = summarize_batch(&[[1.0], [1.0], [1.0]]).unwrap();
        assert_eq!(b.count, 3);
        assert_eq!(b.mean, vec![1.0]);
        assert_eq!(b.var, vec![0.0]);
    }

    #[test]
    fn summarize_two_samples() {
        // Two-pass oracle: ((1-2)^2 + (3-2)^2) / 2 = 1.
        let (_, om, ov) = two_pass(&[vec![1.0], vec![3.0]]);
        let b = summarize_batch(&[[1.0], [3.0]]).unwrap();
        assert_eq!(b.count, 2);
        assert_eq!(b.mean, om);
        assert_eq!(b.var, ov);
        assert_eq!(b.mean, vec![2.0]);
        assert_eq!(b.var, vec![1.0]);
    }

    #[test]
    fn summarize_single_sample() {
        let b = summarize_batch(&[[0.0, 4.0]]).unwrap();
        assert_eq!(b.count, 1);
        assert_eq!(b.mean, vec![0.0, 4.0]);
        assert_eq!(b.var, vec![0.0, 0.0]);
    }

    #[test]
    fn summarize_rejects_empty_and_non_finite() {
        let empty: [[f64; 1]; 0] = [];
        assert!(matches!(summarize_batch(&empty), Err(Error::EmptyBatch)));
        assert!(matches!(
            summarize_batch(&[[f64::NAN]]),
            Err(Error::NonFiniteObservation)
        ));
    }

    #[test]
    fn first_batch_adopts_batch_stats() {
        let s = RunningStats::new(1);
        let b = BatchSummary {
            count: 3,
            mean: vec![1.0],
            var: vec![0.0],
        };
        let s = s.update(&b).unwrap();
        assert_eq!(s.count(), 3);
        assert_eq!(s.mean(), &[1.0]);
        assert_eq!(s.var(), &[0.0]);
    }

    #[test]
    fn update_matches_concatenation_oracle() {
        // stats of [1,2,3] merged with batch of [4,5] == stats of [1..5].
        let s = RunningStats::new(1)
            .update(&summarize_batch(&[[1.0], [2.0], [3.0]]).unwrap())
            .unwrap();
        let s = s.update(&summarize_batch(&[[4.0], [5.0]]).unwrap()).unwrap();
        let (oc, om, ov) = two_pass(&[vec![1.0], vec![2.0], vec![3.0], vec![4.0], vec![5.0]]);
        assert_eq!(s.count(), oc);
        assert!(rel_err(s.mean()[0], om[0]) < 1e-14);
        assert!(rel_err(s.var()[0], ov[0]) < 1e-14);
        assert_eq!(s.mean(), &[3.0]);
        assert_eq!(s.var(), &[2.0]);
    }

    #[test]
    fn merging_identical_distributions_is_stable() {
        let s = RunningStats {
            count: 5,
            mean: vec![3.0],
            var: vec![2.0],
        };
        let b = BatchSummary {
            count: 5,
            mean: vec![3.0],
            var: vec![2.0],
        };
        let merged = s.update(&b).unwrap();
        assert_eq!(merged.count(), 10);
        assert_eq!(merged.mean(), &[3.0]);
        assert_eq!(merged.var(), &[2.0]);
    }

    #[test]
    fn update_rejects_mismatch_and_empty() {
        let s = RunningStats::new(2);
        let b = BatchSummary {
            count: 1,
            mean: vec![0.0],
            var: vec![0.0],
        };
        assert!(matches!(s.update(&b), Err(Error::DimMismatch { .. })));
        let b = BatchSummary {
            count: 0,
            mean: vec![0.0; 2],
            var: vec![0.0; 2],
        };
        assert!(matches!(s.update(&b), Err(Error::EmptyBatch)));
    }

    #[test]
    fn update_count_overflow() {
        let s = RunningStats {
            count: u64::MAX,
            mean: vec![0.0],
            var: vec![0.0],
        };
        let b = BatchSummary {
            count: 1,
            mean: vec![0.0],
            var: vec![0.0],
        };
        assert!(matches!(s.update(&b), Err(Error::CountOverflow)));
    }

    #[test]
    fn normalize_centers_its_own_mean() {
        let s = RunningStats {
            count: 10,
            mean: vec![3.0, -1.5],
            var: vec![2.0, 0.5],
        };
        let out = s.normalize(&[3.0, -1.5], 1e-8).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-6));
    }

    #[test]
    fn normalize_matches_direct_formula() {
        // (5 - 3) / sqrt(2) with epsilon -> 0.
        let s = RunningStats {
            count: 10,
            mean: vec![3.0],
            var: vec![2.0],
        };
        let out = s.normalize(&[5.0], 1e-300).unwrap();
        assert!((out[0] - 2.0 / 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((out[0] - 1.414214).abs() < 1e-6);
    }

    #[test]
    fn normalize_zero_variance_is_safe() {
        let s = RunningStats {
            count: 4,
            mean: vec![7.0],
            var: vec![0.0],
        };
        let out = s.normalize(&[7.0], 1e-8).unwrap();
        assert_eq!(out, vec![0.0]);
        assert!(s.normalize(&[8.0], 1e-8).unwrap()[0].is_finite());
    }

    #[test]
    fn normalize_before_update_is_an_error() {
        let s = RunningStats::new(1);
        assert!(matches!(
            s.normalize(&[0.0], 1e-8),
            Err(Error::NormalizeBeforeUpdate)
        ));
    }

    #[test]
    fn merge_average_identical_stats() {
        let s = RunningStats {
            count: 4,
            mean: vec![1.0, 2.0],
            var: vec![0.5, 1.5],
        };
        let merged = merge_average(&[s.clone(), s.clone(), s.clone()]).unwrap();
        assert_eq!(merged.count(), 12);
        assert_eq!(merged.mean(), s.mean());
        assert_eq!(merged.var(), s.var());
    }

    #[test]
    fn merge_average_element_wise_mean() {
        let a = RunningStats {
            count: 1,
            mean: vec![0.0],
            var: vec![1.0],
        };
        let b = RunningStats {
            count: 1,
            mean: vec![2.0],
            var: vec![3.0],
        };
        let merged = merge_average(&[a, b]).unwrap();
        assert_eq!(merged.mean(), &[1.0]);
        assert_eq!(merged.var(), &[2.0]);
    }

    #[test]
    fn merge_average_errors() {
        assert!(matches!(merge_average(&[]), Err(Error::EmptyList)));
        let a = RunningStats::new(1);
        let b = RunningStats::new(2);
        assert!(matches!(
            merge_average(&[a, b]),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let s = RunningStats {
            count: 17,
            mean: vec![0.1 + 0.2, -3.25e-7],
            var: vec![1.0 / 3.0, 2.5e9],
        };
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"count\":17"));
        let back: RunningStats = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }

    fn batch_stream_strategy() -> impl Strategy<Value = (usize, Vec<Vec<Vec<f64>>>)> {
        (1usize..4).prop_flat_map(|dim| {
            let value = prop_oneof![
                (-1e3..1e3f64),
                (-1.0..1.0f64),
                (-1e-3..1e-3f64).prop_map(|v| v + 0.5e-3)
            ];
            let row = prop::collection::vec(value, dim);
            let batch = prop::collection::vec(row, 1..12);
            (Just(dim), prop::collection::vec(batch, 1..10))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        // Folding batches through `update` must agree with two-pass
        // statistics over the concatenated stream.
        #[test]
        fn fold_matches_two_pass_oracle((dim, batches) in batch_stream_strategy()) {
            let mut stats = RunningStats::new(dim);
            let mut all: Vec<Vec<f64>> = Vec::new();
            for batch in &batches {
                stats = stats.update(&summarize_batch(batch).unwrap()).unwrap();
                all.extend(batch.iter().cloned());
            }
            let (oc, om, ov) = two_pass(&all);
            prop_assert_eq!(stats.count(), oc);
            for d in 0..dim {
                prop_assert!(rel_err(stats.mean()[d], om[d]) <= 1e-10);
                // Variance is compared with an absolute floor: catastrophic
                // cancellation on near-constant streams is bounded by the
                // square of the mean's rounding error.
                let scale = ov[d].max(1e-10 * om[d] * om[d]).max(1e-300);
                prop_assert!((stats.var()[d] - ov[d]).abs() / scale <= 1e-10);
            }
        }

        // Permuting the batch order must not materially change the result.
        #[test]
        fn fold_is_order_robust((dim, batches) in batch_stream_strategy()) {
            let fold = |bs: &[Vec<Vec<f64>>]| {
                let mut s = RunningStats::new(dim);
                for b in bs {
                    s = s.update(&summarize_batch(b).unwrap()).unwrap();
                }
                s
            };
            let forward = fold(&batches);
            let mut reversed = batches.clone();
            reversed.reverse();
            let backward = fold(&reversed);
            prop_assert_eq!(forward.count(), backward.count());
            for d in 0..dim {
                prop_assert!(rel_err(forward.mean()[d], backward.mean()[d]) <= 1e-8);
                let scale = forward.var()[d]
                    .max(1e-8 * forward.mean()[d] * forward.mean()[d])
                    .max(1e-300);
                prop_assert!((forward.var()[d] - backward.var()[d]).abs() / scale <= 1e-8);
            }
        }

        // Absorbing a batch with the same mean/variance as the running state
        // leaves the mean unchanged (delta = 0 exactly).
        #[test]
        fn same_distribution_batch_keeps_mean(m in -10.0..10.0f64, v in 0.0..4.0f64,
                                              c_prev in 1u64..1000, c_batch in 1u64..1000) {
            let s = RunningStats { count: c_prev, mean: vec![m], var: vec![v] };
            let b = BatchSummary { count: c_batch, mean: vec![m], var: vec![v] };
            let out = s.update(&b).unwrap();
            prop_assert_eq!(out.mean()[0], m);
            prop_assert!(rel_err(out.var()[0], v.max(0.0)) <= 1e-12 || (v == 0.0 && out.var()[0] == 0.0));
        }
    }

    #[test]
    fn normalization_fixed_point() {
        // A large i.i.d. sample normalized with its own converged stats has
        // sample mean ~0 and sample population variance ~1.
        use rand::Rng;
        let mut rng = crate::rng::stream(42, &[99]);
        let n = 200_000;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![3.0 + 2.0 * rng.random::<f64>(), -50.0 + 10.0 * rng.random::<f64>()])
            .collect();
        let mut stats = RunningStats::new(2);
        for chunk in rows.chunks(1000) {
            stats = stats.update(&summarize_batch(chunk).unwrap()).unwrap();
        }
        let normed: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| stats.normalize(r, 1e-8).unwrap())
            .collect();
        let (_, m, v) = two_pass(&normed);
        for d in 0..2 {
            assert!(m[d].abs() < 1e-6, "mean {} not centered", m[d]);
            assert!((v[d] - 1.0).abs() < 1e-6, "variance {} not unit", v[d]);
        }
    }
}
