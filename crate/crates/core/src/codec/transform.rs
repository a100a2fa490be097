//! Orthonormal 2-D DCT-II with a uniform scalar quantizer.

use std::sync::OnceLock;

/// Square transform sizes.
pub const TRANSFORM_SIZES: [usize; 5] = [4, 8, 16, 32, 64];

/// Quantizer step `2^((qp - 4)/6)`.
pub fn qstep(qp: i32) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

/// Basis matrix `C[k][i]`, row-major.
pub fn dct_matrix(n: usize) -> &'static [f64] {
    static CACHE: [OnceLock<Vec<f64>>; 5] = [const { OnceLock::new() }; 5];
    let slot = TRANSFORM_SIZES
        .iter()
        .position(|&s| s == n)
        .unwrap_or_else(|| panic!("unsupported transform size {n}"));
    CACHE[slot].get_or_init(|| {
        let mut c = vec![0.0; n * n];
        for k in 0..n {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for i in 0..n {
                c[k * n + i] =
                    scale * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        c
    })
}

/// `C·X·Cᵀ`.
pub fn forward_dct(block: &[f64], n: usize) -> Vec<f64> {
    let c = dct_matrix(n);
    let mut tmp = vec![0.0; n * n];
    // tmp = C·X
    for k in 0..n {
        for i in 0..n {
            let ck = c[k * n + i];
            if ck == 0.0 {
                continue;
            }
            for j in 0..n {
                tmp[k * n + j] += ck * block[i * n + j];
            }
        }
    }
    // out = tmp·Cᵀ
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            let row = &c[l * n..(l + 1) * n];
            out[k * n + l] = tmp[k * n..(k + 1) * n].iter().zip(row).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// `Cᵀ·Y·C`.
pub fn inverse_dct(coeffs: &[f64], n: usize) -> Vec<f64> {
    let c = dct_matrix(n);
    let mut tmp = vec![0.0; n * n];
    // tmp = Cᵀ·Y
    for k in 0..n {
        for i in 0..n {
            let ck = c[k * n + i];
            for j in 0..n {
                let y = coeffs[k * n + j];
                if y != 0.0 {
                    tmp[i * n + j] += ck * y;
                }
            }
        }
    }
    // out = tmp·C
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let t = tmp[i * n + l];
            if t == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += t * c[l * n + j];
            }
        }
    }
    out
}

/// Round half away from zero.
#[inline]
pub fn quantize(value: f64, step: f64) -> i32 {
    let q = (value.abs() / step + 0.5).floor();
    (q as i32) * if value < 0.0 { -1 } else { 1 }
}

pub fn transform_quantize(residual: &[i32], n: usize, qp: i32) -> Vec<i32> {
    let block: Vec<f64> = residual.iter().map(|&v| v as f64).collect();
    let step = qstep(qp);
    forward_dct(&block, n).into_iter().map(|c| quantize(c, step)).collect()
}

/// Dequantized inverse transform, rounded to integers.
pub fn dequantize_inverse(levels: &[i32], n: usize, qp: i32) -> Vec<i32> {
    if levels.iter().all(|&l| l == 0) {
        return vec![0; n * n];
    }
    let step = qstep(qp);
    let coeffs: Vec<f64> = levels.iter().map(|&l| l as f64 * step).collect();
    inverse_dct(&coeffs, n).into_iter().map(|v| v.round() as i32).collect()
}

/// Prediction plus residual, clipped to the sample range.
pub fn reconstruct(pred: &[u8], residual: &[i32]) -> Vec<u8> {
    pred.iter()
        .zip(residual)
        .map(|(&p, &r)| (p as i32 + r).clamp(0, 255) as u8)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct cosine sums.
    fn naive_dct(x: &[f64], n: usize) -> Vec<f64> {
        let a = |k: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += x[i * n + j]
                            * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                            * (std::f64::consts::PI * (2 * j + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                    }
                }
                out[u * n + v] = a(u) * a(v) * s;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dct_and_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [4usize, 8, 16] {
            let x: Vec<f64> = (0..n * n).map(|_| rng.random_range(-255.0..255.0)).collect();
            let fast = forward_dct(&x, n);
            let slow = naive_dct(&x, n);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
            }
            let back = inverse_dct(&fast, n);
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        for n in TRANSFORM_SIZES {
            let c = dct_matrix(n);
            for a in 0..n {
                for b in 0..n {
                    let d: f64 = (0..n).map(|i| c[a * n + i] * c[b * n + i]).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_residual_gives_zero_levels() {
        for qp in 0..=51 {
            assert!(transform_quantize(&[0; 64], 8, qp).iter().all(|&l| l == 0));
        }
    }

    #[test]
    fn coarse_step_zeroes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r: Vec<i32> = (0..16).map(|_| rng.random_range(-3..=3)).collect();
        let max = forward_dct(&r.iter().map(|&v| v as f64).collect::<Vec<_>>(), 4)
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()));
        let qp = (0..=51).find(|&q| qstep(q) > 2.0 * max).unwrap();
        assert!(transform_quantize(&r, 4, qp).iter().all(|&l| l == 0));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(quantize(2.5, 1.0), 3);
        assert_eq!(quantize(-2.5, 1.0), -3);
        assert_eq!(quantize(2.49, 1.0), 2);
        assert_eq!(quantize(-0.49, 1.0), 0);
        assert_eq!(qstep(4), 1.0);
        assert_eq!(qstep(10), 2.0);
    }

    #[test]
    fn reconstruction_error_bounded_by_half_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4usize, 8, 16, 32] {
            let c = dct_matrix(n);
            // Σ_k |C[k][i]| per sample position.
            let col_l1: Vec<f64> = (0..n).map(|i| (0..n).map(|k| c[k * n + i].abs()).sum()).collect();
            for qp in (0..=51).step_by(3) {
                let r: Vec<i32> = (0..n * n).map(|_| rng.random_range(-255..=255)).collect();
                let levels = transform_quantize(&r, n, qp);
                let back = dequantize_inverse(&levels, n, qp);
                let half = qstep(qp) / 2.0;
                let mut sq = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let e = (back[i * n + j] - r[i * n + j]) as f64;
                        sq += e * e;
                        let bound = half * col_l1[i] * col_l1[j] + 0.5;
                        assert!(e.abs() <= bound + 1e-9, "n={n} qp={qp}");
                    }
                }
                // Orthonormal: ‖e‖₂ ≤ ‖q‖₂ + rounding ≤ n·step/2 + n/2.
                assert!(sq.sqrt() <= n as f64 * (half + 0.5) + 1e-9, "n={n} qp={qp}");
            }
        }
    }

    #[test]
    fn reconstruct_clips() {
        assert_eq!(reconstruct(&[250, 5, 100], &[10, -10, 3]), vec![255, 0, 103]);
    }
}
