//! Quality and rate-difference measures.

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::msfd::mse;

/// Peak signal-to-noise ratio in dB; `+inf` for identical frames.
pub fn psnr(orig: &Frame, recon: &Frame) -> Result<f64> {
    let e = mse(orig, recon)?;
    Ok(psnr_from_mse(e))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// PSNR as printed in reports: `inf` for lossless.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() {
        "inf".into()
    } else {
        format!("{db:.4}")
    }
}

/// One operating point of a rate-quality curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub bpp: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(bpp: f64, quality: f64) -> Self {
        RdPoint { bpp, quality }
    }
}

/// Average rate difference of `test` against `anchor` in percent, over their
/// common quality range. Log-rate is fitted as a cubic in quality by least
/// squares and the fits are integrated exactly.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    let fa = fit_curve(anchor, "anchor")?;
    let fb = fit_curve(test, "test")?;
    let lo = range(anchor).0.max(range(test).0);
    let hi = range(anchor).1.min(range(test).1);
    if hi <= lo {
        return Err(Error::Metric(format!(
            "quality ranges do not overlap ([{}, {}] vs [{}, {}])",
            range(anchor).0,
            range(anchor).1,
            range(test).0,
            range(test).1
        )));
    }
    let avg = |c: &[f64; 4]| (integral(c, hi) - integral(c, lo)) / (hi - lo);
    Ok(((avg(&fb) - avg(&fa)).exp() - 1.0) * 100.0)
}

fn range(points: &[RdPoint]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.quality), hi.max(p.quality))
    })
}

/// Coefficients `c0..c3` of `ln(bpp) ≈ Σ c_k·q^k`.
fn fit_curve(points: &[RdPoint], which: &str) -> Result<[f64; 4]> {
    if points.len() < 4 {
        return Err(Error::Metric(format!(
            "{which} curve has {} points, at least 4 are needed",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.quality.is_finite())) {
        return Err(Error::Metric(format!("{which} curve has an invalid point {p:?}")));
    }
    // Centre and scale quality so the normal equations stay well conditioned.
    let (lo, hi) = range(points);
    if hi <= lo {
        return Err(Error::Metric(format!("{which} curve has a single quality value")));
    }
    let mid = (lo + hi) / 2.0;
    let half = (hi - lo) / 2.0;
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for p in points {
        let t = (p.quality - mid) / half;
        let row = [1.0, t, t * t, t * t * t];
        let y = p.bpp.ln();
        for i in 0..4 {
            atb[i] += row[i] * y;
            for j in 0..4 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let c = solve4(ata, atb)
        .ok_or_else(|| Error::Metric(format!("{which} curve fit is singular")))?;
    // Expand Σ c_k·((q − mid)/half)^k back into powers of q.
    let mut out = [0.0f64; 4];
    for (k, &ck) in c.iter().enumerate() {
        let scale = ck / half.powi(k as i32);
        for (j, o) in out.iter_mut().enumerate().take(k + 1) {
            *o += scale * binomial(k, j) as f64 * (-mid).powi((k - j) as i32);
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn integral(c: &[f64; 4], q: f64) -> f64 {
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * q.powi(k as i32 + 1) / (k + 1) as f64)
        .sum()
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (v, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}
