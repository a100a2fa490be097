//! Coefficient coding.
//!
//! Levels are read in zigzag order. Each non-zero level is sent as a signed
//! exp-Golomb code followed by the unary-coded count of zeros that precede it.
//! Level code 0 (a single `1` bit) never denotes a level and ends the block.

use std::sync::OnceLock;

use super::bits::{se_len, BitReader, BitWriter};
use super::transform::TRANSFORM_SIZES;
use crate::error::{Error, Result};

/// Raster positions in zigzag order.
pub fn zigzag(n: usize) -> &'static [usize] {
    static CACHE: [OnceLock<Vec<usize>>; 5] = [const { OnceLock::new() }; 5];
    let slot = TRANSFORM_SIZES
        .iter()
        .position(|&s| s == n)
        .unwrap_or_else(|| panic!("unsupported block size {n}"));
    CACHE[slot].get_or_init(|| {
        let mut order = Vec::with_capacity(n * n);
        for s in 0..2 * n - 1 {
            let rows: Vec<usize> = (0..n).filter(|&r| s >= r && s - r < n).collect();
            if s % 2 == 0 {
                order.extend(rows.iter().rev().map(|&r| r * n + (s - r)));
            } else {
                order.extend(rows.iter().map(|&r| r * n + (s - r)));
            }
        }
        order
    })
}

pub fn encode_levels(w: &mut BitWriter, levels: &[i32], n: usize) {
    let mut run = 0u64;
    for &pos in zigzag(n) {
        let v = levels[pos];
        if v == 0 {
            run += 1;
        } else {
            w.put_se(v as i64);
            w.put_unary(run);
            run = 0;
        }
    }
    w.put_se(0);
}

/// Exact length of [`encode_levels`] output.
pub fn levels_bits(levels: &[i32], n: usize) -> u64 {
    let mut run = 0u64;
    let mut bits = 1;
    for &pos in zigzag(n) {
        let v = levels[pos];
        if v == 0 {
            run += 1;
        } else {
            bits += se_len(v as i64) + run + 1;
            run = 0;
        }
    }
    bits
}

pub fn decode_levels(r: &mut BitReader, n: usize) -> Result<Vec<i32>> {
    let scan = zigzag(n);
    let mut out = vec![0i32; n * n];
    let mut pos = 0usize;
    loop {
        let v = r.se()?;
        if v == 0 {
            return Ok(out);
        }
        let level = i32::try_from(v)
            .map_err(|_| Error::Bitstream(format!("coefficient level {v} out of range")))?;
        let run = r.unary((n * n) as u64)? as usize;
        pos += run;
        if pos >= n * n {
            return Err(Error::Bitstream(format!(
                "coefficient run overflows {n}x{n} block"
            )));
        }
        out[scan[pos]] = level;
        pos += 1;
    }
}
