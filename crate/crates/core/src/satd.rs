//! Hadamard SATD pre-analysis, the texture-complexity signal for CTU bit
//! allocation.

use crate::frame::{BlockRegion, CtuGrid, Frame};

/// 8×8 Hadamard transform `H·X·Hᵀ` (Sylvester ordering, no scaling).
pub fn hadamard8(block: &[[i32; 8]; 8]) -> [[i32; 8]; 8] {
    let mut tmp = [[0i32; 8]; 8];
    for (row, out) in block.iter().zip(tmp.iter_mut()) {
        *out = butterfly8(*row);
    }
    let mut res = [[0i32; 8]; 8];
    for col in 0..8 {
        let column = std::array::from_fn(|r| tmp[r][col]);
        let t = butterfly8(column);
        for r in 0..8 {
            res[r][col] = t[r];
        }
    }
    res
}

/// Fast Walsh-Hadamard of length 8 in natural (Sylvester) order.
#[inline]
fn butterfly8(mut v: [i32; 8]) -> [i32; 8] {
    let mut h = 1;
    while h < 8 {
        for i in (0..8).step_by(h * 2) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
    v
}

/// DC-excluded SATD of an 8×8 block, scaled by 1/8.
pub fn block_satd(block: &[[i32; 8]; 8]) -> f64 {
    let c = hadamard8(block);
    let total: i64 = c.iter().flatten().map(|v| v.unsigned_abs() as i64).sum();
    (total - c[0][0].unsigned_abs() as i64) as f64 / 8.0
}

/// Sum of [`block_satd`] over the 8×8 tiling of `region`. Partial tiles at the
/// region's right and bottom edges are completed by edge replication.
pub fn ctu_satd(frame: &Frame, region: BlockRegion) -> f64 {
    let mut sum = 0.0;
    let x_end = region.right();
    let y_end = region.bottom();
    let mut ty = region.y;
    while ty < y_end {
        let mut tx = region.x;
        while tx < x_end {
            let tile: [[i32; 8]; 8] = std::array::from_fn(|r| {
                std::array::from_fn(|c| {
                    let x = (tx + c as i64).min(x_end - 1);
                    let y = (ty + r as i64).min(y_end - 1);
                    frame.get_clamped(x, y) as i32
                })
            });
            sum += block_satd(&tile);
            tx += 8;
        }
        ty += 8;
    }
    sum
}

/// Per-CTU SATD in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct SatdReport {
    pub satd: Vec<f64>,
}

impl SatdReport {
    pub fn analyze(frame: &Frame, grid: &CtuGrid) -> Self {
        SatdReport {
            satd: grid.regions().map(|r| ctu_satd(frame, r)).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,satd\n");
        for (k, s) in self.satd.iter().enumerate() {
            out.push_str(&format!("{k},{s}\n"));
        }
        out
    }
}
