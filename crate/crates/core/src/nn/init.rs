//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Orthogonal initialization of a `rows x cols` matrix (row-major), scaled
/// by `gain`. Computed from a Gaussian sample via modified Gram-Schmidt on
/// the tall orientation, with columns sign-corrected so the factorization is
/// unique.
pub fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (tall_r, tall_c, transpose) = if rows >= cols {
        (rows, cols, false)
    } else {
        (cols, rows, true)
    };

    // Gaussian sample, column-major columns for Gram-Schmidt.
    let mut a: Vec<Vec<f64>> = (0..tall_c)
        .map(|_| (0..tall_r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();

    for j in 0..tall_c {
        for i in 0..j {
            let (head, tail) = a.split_at_mut(j);
            let qi = &head[i];
            let col = &mut tail[0];
            let dot: f64 = qi.iter().zip(col.iter()).map(|(x, y)| x * y).sum();
            for (c, q) in col.iter_mut().zip(qi) {
                *c -= dot * q;
            }
        }
        let norm: f64 = a[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        // Sign convention: first entry non-negative.
        let sign = if a[j][0] < 0.0 { -1.0 } else { 1.0 };
        for v in &mut a[j] {
            *v /= norm * sign;
        }
    }

    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let q = if transpose { a[r][c] } else { a[c][r] };
            out[r * cols + c] = gain * q;
        }
    }
    out
}
