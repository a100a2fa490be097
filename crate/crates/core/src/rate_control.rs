//! CTU-level bit allocation and QP governance.
//!
//! Each CTU's share of the remaining picture budget is proportional to its
//! cost `satd / 3 + alpha * importance`. The target is turned into a QP through
//! a λ-domain model, and the QP is then limited twice: to ±1 around the mean
//! QP of already-coded CTUs, and to a band around the QP of the most strongly
//! connected coded neighbour (±2 when connectivity exceeds 0.7, ±9 otherwise).
//! There is deliberately no band around the picture QP.

use crate::error::{Error, Result};
use crate::frame::CtuGrid;
use crate::roim::RoimMap;

pub const QP_MIN: i32 = 0;
pub const QP_MAX: i32 = 51;

/// Connectivity above which the tight anchor band applies.
pub const TIGHT_CONNECTIVITY: f64 = 0.7;
pub const TIGHT_BAND: i32 = 2;
pub const LOOSE_BAND: i32 = 9;
/// Half-width of the band around the running mean QP.
pub const MEAN_BAND: i32 = 1;

pub const DEFAULT_ALPHA: f64 = 10_000.0;

/// `Clip(lo, hi, v)`: `v` limited to `[lo, hi]`.
#[inline]
pub fn clip(lo: i32, hi: i32, v: i32) -> i32 {
    v.max(lo).min(hi)
}

#[inline]
pub fn ctu_cost(satd: f64, importance: f64, alpha: f64) -> f64 {
    satd / 3.0 + alpha * importance
}

/// Power-law rate model `λ = a·bpp^b` with `QP = c1·ln λ + c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaModel {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for LambdaModel {
    fn default() -> Self {
        LambdaModel {
            a: 3.2003,
            b: -1.367,
            c1: 4.2005,
            c2: 13.7122,
        }
    }
}

impl LambdaModel {
    pub fn lambda(&self, bpp: f64) -> f64 {
        self.a * bpp.powf(self.b)
    }

    /// Unrounded QP for a bits-per-pixel target.
    pub fn qp_real(&self, bpp: f64) -> f64 {
        self.c1 * self.lambda(bpp).ln() + self.c2
    }

    pub fn derive_qp(&self, target_bits: f64, area: u64) -> i32 {
        let bpp = target_bits.max(1.0) / area.max(1) as f64;
        let qp = self.qp_real(bpp);
        if qp.is_nan() {
            return QP_MAX;
        }
        (qp.round().clamp(QP_MIN as f64, QP_MAX as f64)) as i32
    }

    /// Bits the model expects at `qp` for a block of `area` pixels.
    pub fn predicted_bits(&self, qp: i32, area: u64) -> f64 {
        let lambda = ((qp as f64 - self.c2) / self.c1).exp();
        let bpp = (lambda / self.a).powf(1.0 / self.b);
        bpp * area as f64
    }

    /// Refits `a` so that `bpp` maps to the (possibly fractional) `qp`.
    pub fn anchored(self, qp: f64, bpp: f64) -> Self {
        let lambda = ((qp - self.c2) / self.c1).exp();
        LambdaModel {
            a: lambda / bpp.powf(self.b),
            ..self
        }
    }

    /// Multiplicative correction after coding a CTU; the step is limited to a
    /// factor of four either way.
    pub fn update(&mut self, actual_bits: f64, predicted_bits: f64) {
        if actual_bits <= 0.0 || predicted_bits <= 0.0 {
            return;
        }
        let step = (actual_bits / predicted_bits).sqrt().clamp(0.25, 4.0);
        self.a *= step;
    }
}

/// Result of one allocation step.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// CTU the target is for (head of the uncoded set).
    pub ctu: usize,
    pub target: i64,
    /// Remaining budget before this CTU.
    pub remaining: i64,
    /// Targets of every uncoded CTU, head first.
    pub uncoded_targets: Vec<(usize, i64)>,
    pub overrun: bool,
}

impl Allocation {
    pub fn uncoded_sum(&self) -> i64 {
        self.uncoded_targets.iter().map(|(_, t)| t).sum()
    }
}

/// Sequential bit budget for one picture.
#[derive(Debug, Clone)]
pub struct BudgetState {
    target_pic: i64,
    bits_coded: i64,
    qp_pic: i32,
    uncoded: Vec<usize>,
    head: usize,
    coded: Vec<bool>,
    targets: Vec<Option<i64>>,
    final_qp: Vec<Option<i32>>,
    qp_sum: i64,
}

impl BudgetState {
    /// Budget over CTUs `0..ctu_count` in raster order.
    pub fn new(target_pic: i64, ctu_count: usize, qp_pic: i32) -> Self {
        BudgetState {
            target_pic,
            bits_coded: 0,
            qp_pic,
            uncoded: (0..ctu_count).collect(),
            head: 0,
            coded: vec![false; ctu_count],
            targets: vec![None; ctu_count],
            final_qp: vec![None; ctu_count],
            qp_sum: 0,
        }
    }

    pub fn target_pic(&self) -> i64 {
        self.target_pic
    }

    pub fn bits_coded(&self) -> i64 {
        self.bits_coded
    }

    pub fn qp_pic(&self) -> i32 {
        self.qp_pic
    }

    pub fn remaining(&self) -> i64 {
        self.target_pic - self.bits_coded
    }

    pub fn uncoded(&self) -> &[usize] {
        &self.uncoded[self.head..]
    }

    pub fn coded(&self) -> &[bool] {
        &self.coded
    }

    pub fn target(&self, k: usize) -> Option<i64> {
        self.targets.get(k).copied().flatten()
    }

    pub fn final_qp(&self, k: usize) -> Option<i32> {
        self.final_qp.get(k).copied().flatten()
    }

    /// Charges bits outside any CTU (headers) against the budget.
    pub fn charge_overhead(&mut self, bits: i64) {
        self.bits_coded += bits;
    }

    /// Mean final QP over coded CTUs.
    pub fn mean_qp(&self) -> Option<f64> {
        (self.head > 0).then(|| self.qp_sum as f64 / self.head as f64)
    }

    /// Splits the remaining budget over the uncoded CTUs in proportion to
    /// `costs` (indexed by CTU) and returns the head CTU's target.
    pub fn allocate(&mut self, costs: &[f64]) -> Result<Allocation> {
        let uncoded = self.uncoded().to_vec();
        let Some(&ctu) = uncoded.first() else {
            return Err(Error::RateControl("no uncoded CTU left".into()));
        };
        if costs.len() < self.coded.len() {
            return Err(Error::RateControl(format!(
                "{} costs for {} CTUs",
                costs.len(),
                self.coded.len()
            )));
        }
        let remaining = self.remaining();
        let overrun = remaining <= 0;
        let uncoded_targets: Vec<(usize, i64)> = if overrun {
            uncoded.iter().map(|&j| (j, 1)).collect()
        } else {
            let sum: f64 = uncoded.iter().map(|&j| costs[j]).sum();
            uncoded
                .iter()
                .map(|&j| {
                    let share = if sum > 0.0 {
                        remaining as f64 * costs[j] / sum
                    } else {
                        remaining as f64 / uncoded.len() as f64
                    };
                    (j, share.round() as i64)
                })
                .collect()
        };
        let target = uncoded_targets[0].1;
        self.targets[ctu] = Some(target);
        Ok(Allocation {
            ctu,
            target,
            remaining,
            uncoded_targets,
            overrun,
        })
    }

    /// Retires CTU `k` (must be the head of the uncoded set).
    pub fn update_after_ctu(&mut self, k: usize, actual_bits: i64, qp_used: i32) -> Result<()> {
        if self.coded.get(k).copied().unwrap_or(false) {
            return Err(Error::RateControl(format!("CTU {k} already coded")));
        }
        match self.uncoded().first() {
            Some(&head) if head == k => {}
            Some(&head) => {
                return Err(Error::RateControl(format!(
                    "CTU {k} retired out of order (next is {head})"
                )))
            }
            None => return Err(Error::RateControl(format!("CTU {k} out of range"))),
        }
        self.coded[k] = true;
        self.head += 1;
        self.bits_coded += actual_bits;
        self.final_qp[k] = Some(qp_used);
        self.qp_sum += qp_used as i64;
        Ok(())
    }
}

/// Coded 4-neighbour of `i` with the highest connectivity; ties go to the
/// smaller index.
pub fn select_anchor_neighbor(
    i: usize,
    grid: &CtuGrid,
    roim: &RoimMap,
    coded: &[bool],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut neighbors = grid.neighbors(i);
    neighbors.sort_unstable();
    for j in neighbors {
        if !coded.get(j).copied().unwrap_or(false) {
            continue;
        }
        let m = roim.connectivity(i, j).unwrap_or(0.0);
        if best.is_none_or(|(_, bm)| m > bm) {
            best = Some((j, m));
        }
    }
    best
}

/// Band limits applied to an estimated QP, in order: running mean ±1, then
/// the anchor band, then the legal QP range.
pub fn constrain_qp(
    qp_est: i32,
    anchor_qp: Option<i32>,
    m_c: Option<f64>,
    qp_cu_mean: Option<f64>,
) -> i32 {
    let mut qp = qp_est;
    if let Some(mean) = qp_cu_mean {
        let m = mean.round() as i32;
        qp = clip(m - MEAN_BAND, m + MEAN_BAND, qp);
    }
    if let Some(anchor) = anchor_qp {
        let band = anchor_band(m_c.unwrap_or(0.0));
        qp = clip(anchor - band, anchor + band, qp);
    }
    clip(QP_MIN, QP_MAX, qp)
}

#[inline]
pub fn anchor_band(m_c: f64) -> i32 {
    if m_c > TIGHT_CONNECTIVITY {
        TIGHT_BAND
    } else {
        LOOSE_BAND
    }
}
