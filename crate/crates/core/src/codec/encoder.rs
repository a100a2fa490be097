//! Frame encoder: pre-analysis, CTU bit allocation, QP governance and RDO.

use std::fmt::Write as _;

use super::bitstream::{write_stream, Header, HEADER_BYTES};
use super::bits::{se_len, BitWriter};
use super::predict::IntraMode;
use super::rdo::{rdo_lambda, rdo_select, write_tree, RdoParams, MIN_CU};
use crate::error::{Error, Result};
use crate::features::{FeatureProvider, ZeroFeatures};
use crate::frame::{CtuGrid, Frame};
use crate::msfd::MultiScaleConfig;
use crate::rate_control::{
    constrain_qp, ctu_cost, select_anchor_neighbor, BudgetState, LambdaModel, DEFAULT_ALPHA, QP_MAX,
    QP_MIN,
};
use crate::roim::RoimMap;
use crate::satd::SatdReport;

/// Header size in bits; charged to the budget before the first CTU.
pub const HEADER_BITS: i64 = HEADER_BYTES as i64 * 8;

/// Default distortion-units factor in the RDO Lagrangian: with the default
/// beta of 0.02 and zero feature distance, a 16×16 CU then weighs squared
/// error against rate exactly as an SSE-driven encoder would.
pub const DEFAULT_KAPPA: f64 = 0.02 / 256.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateMode {
    /// Picture budget `round(bpp·width·height)` bits.
    TargetBpp(f64),
    /// Every CTU at one QP.
    ConstantQp(i32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub ctu_size: u32,
    pub min_cu: u32,
    pub rate: RateMode,
    pub alpha: f64,
    pub msfd: MultiScaleConfig,
    pub kappa: f64,
    pub lambda_model: LambdaModel,
    /// Refit the rate model with trial encodes before coding.
    pub calibrate: bool,
    /// Upper bound on full coding passes in calibrated budget mode.
    pub max_passes: u32,
    /// Relative rate miss that ends the pass loop early.
    pub rate_tolerance: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            ctu_size: 64,
            min_cu: MIN_CU,
            rate: RateMode::TargetBpp(0.1),
            alpha: DEFAULT_ALPHA,
            msfd: MultiScaleConfig::default(),
            kappa: DEFAULT_KAPPA,
            lambda_model: LambdaModel::default(),
            calibrate: true,
            max_passes: 3,
            rate_tolerance: 0.08,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.min_cu.is_power_of_two() || self.min_cu < MIN_CU || self.min_cu > self.ctu_size {
            return Err(Error::Config(format!(
                "minimum CU {} must be a power of two in [{MIN_CU}, {}]",
                self.min_cu, self.ctu_size
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("max_passes must be >= 1".into()));
        }
        if !(self.rate_tolerance.is_finite() && self.rate_tolerance >= 0.0) {
            return Err(Error::Config(format!("rate tolerance must be >= 0, got {}", self.rate_tolerance)));
        }
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::Config(format!("kappa must be > 0, got {}", self.kappa)));
        }
        match self.rate {
            RateMode::TargetBpp(bpp) if !(bpp.is_finite() && bpp > 0.0) => {
                return Err(Error::RateControl(format!("target bpp must be > 0, got {bpp}")))
            }
            RateMode::ConstantQp(qp) if !(QP_MIN..=QP_MAX).contains(&qp) => {
                return Err(Error::Config(format!("QP {qp} outside [{QP_MIN}, {QP_MAX}]")))
            }
            _ => {}
        }
        self.msfd.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtuRecord {
    pub index: usize,
    pub satd: f64,
    pub importance: f64,
    pub cost: f64,
    pub target_bits: Option<i64>,
    pub actual_bits: u64,
    pub qp_est: i32,
    pub qp_final: i32,
    pub anchor: Option<usize>,
    pub anchor_qp: Option<i32>,
    pub connectivity: Option<f64>,
    /// Mean final QP of the CTUs coded before this one.
    pub mean_qp_before: Option<f64>,
    pub remaining_before: Option<i64>,
    /// Sum of the targets handed to every uncoded CTU at this step.
    pub uncoded_target_sum: Option<i64>,
    pub uncoded_count: usize,
    pub overrun: bool,
    pub rd_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafRecord {
    pub ctu: usize,
    pub x: u32,
    pub y: u32,
    pub size: u32,
    pub mode: IntraMode,
    pub qp: i32,
    pub msfd: f64,
    pub mse: f64,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeStats {
    pub width: u32,
    pub height: u32,
    pub ctu_size: u32,
    pub qp_pic: i32,
    pub target_bits: Option<i64>,
    pub header_bits: u64,
    /// Size of the whole stream in bits.
    pub total_bits: u64,
    /// Fractional QP the trial encodes placed at the picture budget.
    pub calibrated_qp: Option<f64>,
    /// Coding pass the stream comes from.
    pub passes: u32,
    pub ctus: Vec<CtuRecord>,
    pub leaves: Vec<LeafRecord>,
}

pub const STATS_HEADER: &str =
    "index,satd,m_i,cost,target_bits,actual_bits,qp_est,qp_final,anchor_index,m_c";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl EncodeStats {
    pub fn bpp(&self) -> f64 {
        self.total_bits as f64 / (self.width as f64 * self.height as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(STATS_HEADER);
        s.push('\n');
        for c in &self.ctus {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                c.index,
                c.satd,
                c.importance,
                c.cost,
                opt(c.target_bits),
                c.actual_bits,
                c.qp_est,
                c.qp_final,
                opt(c.anchor),
                opt(c.connectivity)
            );
        }
        s
    }

    /// Final CTU QPs painted over the frame, scaled by 5 for contrast.
    pub fn qp_map(&self) -> Frame {
        let cols = self.width.div_ceil(self.ctu_size);
        Frame::from_fn(self.width, self.height, |x, y| {
            let k = ((y / self.ctu_size) * cols + x / self.ctu_size) as usize;
            (self.ctus[k].qp_final * 5).clamp(0, 255) as u8
        })
        .expect("stats describe a non-empty frame")
    }
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub bitstream: Vec<u8>,
    /// Encoder reconstruction, cropped to the frame.
    pub recon: Frame,
    pub stats: EncodeStats,
}

pub fn encode_frame(
    orig: &Frame,
    roim: &RoimMap,
    cfg: &EncoderConfig,
    provider: &dyn FeatureProvider,
) -> Result<EncodeOutput> {
    cfg.validate()?;
    let grid = CtuGrid::new(orig.width(), orig.height(), cfg.ctu_size)?;
    roim.check_grid(&grid)?;
    let (pw, ph) = grid.padded_dims();
    let padded = orig.padded_to(pw, ph);
    let satd = SatdReport::analyze(orig, &grid).satd;
    let costs: Vec<f64> = satd
        .iter()
        .zip(roim.importance())
        .map(|(&s, &m)| ctu_cost(s, m, cfg.alpha))
        .collect();
    let pic = Picture { orig, padded: &padded, grid: &grid, roim, satd: &satd, costs: &costs };

    let bpp = match cfg.rate {
        RateMode::ConstantQp(qp) => {
            return pic.code(cfg, provider, None, qp, cfg.lambda_model, None, 1);
        }
        RateMode::TargetBpp(bpp) => bpp,
    };
    let target = (bpp * orig.area() as f64).round() as i64;
    if target <= HEADER_BITS {
        return Err(Error::RateControl(format!(
            "budget of {target} bits does not cover the {HEADER_BITS}-bit header"
        )));
    }
    let payload = (target - HEADER_BITS) as f64;
    let model_for = |q: f64| cfg.lambda_model.anchored(q, payload / padded.area() as f64);
    if !cfg.calibrate {
        let qp_pic = cfg.lambda_model.derive_qp(payload, padded.area());
        return pic.code(cfg, provider, Some(target), qp_pic, cfg.lambda_model, None, 1);
    }

    let mut cal = Calibrator {
        padded: &padded,
        grid: &grid,
        cfg,
        trials: (0..=QP_MAX).map(|_| None).collect(),
    };
    let q0 = cal.qp_for(payload)?;
    // Real-provider bits per trial bit, measured on a CTU sample.
    let ratio = cal.provider_ratio(q0.round() as i32, provider)?;
    let mut q = cal.qp_for(payload / ratio)?;
    // Passes that spent too much (lower QP side) and too little, as
    // (calibrated QP, ln bits); the closest of each is kept.
    let mut over: Option<(f64, f64)> = None;
    let mut under: Option<(f64, f64)> = None;
    let mut best: Option<EncodeOutput> = None;
    for pass in 1..=cfg.max_passes {
        let model = model_for(q);
        let qp_pic = model.derive_qp(payload, padded.area());
        log::debug!("pass {pass}: calibrated qp {q:.3}, qp_pic {qp_pic}");
        let out = pic.code(cfg, provider, Some(target), qp_pic, model, Some(q), pass)?;
        let miss = rate_miss(&out.stats);
        let spent = (out.stats.total_bits as f64 - HEADER_BITS as f64).max(1.0);
        if best.as_ref().is_none_or(|b| miss < rate_miss(&b.stats)) {
            best = Some(out);
        }
        if miss <= cfg.rate_tolerance {
            break;
        }
        if spent > payload {
            if over.is_none_or(|(qo, _)| q > qo) {
                over = Some((q, spent.ln()));
            }
        } else if under.is_none_or(|(qu, _)| q < qu) {
            under = Some((q, spent.ln()));
        }
        let next = match (over, under) {
            (Some((qo, bo)), Some((qu, bu))) if bo > bu => qo + (bo - payload.ln()) / (bo - bu) * (qu - qo),
            (Some((qo, _)), Some((qu, _))) => 0.5 * (qo + qu),
            // no bracket yet: rescale the trial curve by the observed miss
            _ => {
                let r = spent / cal.bits_at(q)?;
                cal.qp_for(payload / r)?
            }
        };
        if (next - q).abs() < 1e-3 {
            break;
        }
        q = next;
    }
    Ok(best.expect("at least one pass"))
}

/// Relative distance of the stream size from the picture budget.
fn rate_miss(stats: &EncodeStats) -> f64 {
    let target = stats.target_bits.unwrap_or(0).max(1) as f64;
    (stats.total_bits as f64 / target - 1.0).abs()
}

struct Picture<'a> {
    orig: &'a Frame,
    padded: &'a Frame,
    grid: &'a CtuGrid,
    roim: &'a RoimMap,
    satd: &'a [f64],
    costs: &'a [f64],
}

impl Picture<'_> {
    /// One CTU-sequential coding pass.
    #[allow(clippy::too_many_arguments)]
    fn code(
        &self,
        cfg: &EncoderConfig,
        provider: &dyn FeatureProvider,
        target_pic: Option<i64>,
        qp_pic: i32,
        mut model: LambdaModel,
        calibrated_qp: Option<f64>,
        pass: u32,
    ) -> Result<EncodeOutput> {
        let (grid, roim, padded) = (self.grid, self.roim, self.padded);
        let mut state = BudgetState::new(target_pic.unwrap_or(0), grid.len(), qp_pic);
        state.charge_overhead(HEADER_BITS);
        let mut recon = Frame::filled(padded.width(), padded.height(), 0)?;
        let mut w = BitWriter::new();
        let mut prev_qp = qp_pic;
        let mut ctus = Vec::with_capacity(grid.len());
        let mut leaves = Vec::new();

        for k in 0..grid.len() {
            let region = grid.coded_region(k);
            let area = region.area();
            let alloc = match target_pic {
                Some(_) => Some(state.allocate(self.costs)?),
                None => None,
            };
            let qp_est = match (&alloc, cfg.rate) {
                (Some(a), _) => model.derive_qp(a.target as f64, area),
                (None, RateMode::ConstantQp(q)) => q,
                (None, RateMode::TargetBpp(_)) => qp_pic,
            };
            let anchor = select_anchor_neighbor(k, grid, roim, state.coded());
            let anchor_qp = anchor.and_then(|(j, _)| state.final_qp(j));
            let mean = state.mean_qp();
            let qp = constrain_qp(qp_est, anchor_qp, anchor.map(|a| a.1), mean);

            let params = RdoParams {
                qp,
                lambda: rdo_lambda(qp, cfg.kappa),
                min_cu: cfg.min_cu,
                msfd: &cfg.msfd,
                provider,
            };
            let coded = rdo_select(region, &params, padded, &mut recon)?;
            let delta = (qp - prev_qp) as i64;
            w.put_se(delta);
            write_tree(&mut w, &coded.tree, region.w, cfg.min_cu);
            prev_qp = qp;
            let bits = se_len(delta) + coded.bits;

            if let Some(a) = &alloc {
                model.update(bits as f64, a.target.max(1) as f64);
            }
            state.update_after_ctu(k, bits as i64, qp)?;

            for leaf in coded.tree.leaves() {
                leaves.push(LeafRecord {
                    ctu: k,
                    x: leaf.region.x as u32,
                    y: leaf.region.y as u32,
                    size: leaf.region.w,
                    mode: leaf.mode,
                    qp,
                    msfd: leaf.msfd,
                    mse: leaf.mse,
                    bits: leaf.bits,
                });
            }
            log::trace!("ctu {k}: qp_est {qp_est} qp {qp} bits {bits}");
            ctus.push(CtuRecord {
                index: k,
                satd: self.satd[k],
                importance: roim.importance()[k],
                cost: self.costs[k],
                target_bits: alloc.as_ref().map(|a| a.target),
                actual_bits: bits,
                qp_est,
                qp_final: qp,
                anchor: anchor.map(|a| a.0),
                anchor_qp,
                connectivity: anchor.map(|a| a.1),
                mean_qp_before: mean,
                remaining_before: alloc.as_ref().map(|a| a.remaining),
                uncoded_target_sum: alloc.as_ref().map(|a| a.uncoded_sum()),
                uncoded_count: grid.len() - k,
                overrun: alloc.as_ref().is_some_and(|a| a.overrun),
                rd_cost: coded.cost,
            });
        }

        let orig = self.orig;
        let (payload, payload_bits) = w.into_bytes();
        let header = Header {
            width: orig.width(),
            height: orig.height(),
            ctu_size: cfg.ctu_size,
            min_cu: cfg.min_cu,
            qp_pic,
            payload_bits,
        };
        let bitstream = write_stream(&header, &payload);
        let stats = EncodeStats {
            width: orig.width(),
            height: orig.height(),
            ctu_size: cfg.ctu_size,
            qp_pic,
            target_bits: target_pic,
            header_bits: HEADER_BITS as u64,
            total_bits: bitstream.len() as u64 * 8,
            calibrated_qp,
            passes: pass,
            ctus,
            leaves,
        };
        Ok(EncodeOutput {
            bitstream,
            recon: recon.cropped(orig.width(), orig.height())?,
            stats,
        })
    }
}

/// Every `SAMPLE_STRIDE`-th CTU is re-coded with the real feature provider
/// during calibration.
const SAMPLE_STRIDE: usize = 4;

struct Trial {
    bits: u64,
    ctu_bits: Vec<u64>,
    recon: Frame,
}

/// Constant-QP encode of `padded` with feature distance switched off.
fn trial_encode(padded: &Frame, grid: &CtuGrid, cfg: &EncoderConfig, qp: i32) -> Result<Trial> {
    let mut recon = Frame::filled(padded.width(), padded.height(), 0)?;
    let params = RdoParams {
        qp,
        lambda: rdo_lambda(qp, cfg.kappa),
        min_cu: cfg.min_cu,
        msfd: &cfg.msfd,
        provider: &ZeroFeatures,
    };
    let mut ctu_bits = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        ctu_bits.push(1 + rdo_select(grid.coded_region(k), &params, padded, &mut recon)?.bits);
    }
    Ok(Trial { bits: ctu_bits.iter().sum(), ctu_bits, recon })
}

struct Calibrator<'a> {
    padded: &'a Frame,
    grid: &'a CtuGrid,
    cfg: &'a EncoderConfig,
    trials: Vec<Option<Trial>>,
}

impl Calibrator<'_> {
    fn trial(&mut self, qp: i32) -> Result<&Trial> {
        if self.trials[qp as usize].is_none() {
            let t = trial_encode(self.padded, self.grid, self.cfg, qp)?;
            log::debug!("calibration trial qp {qp}: {} bits", t.bits);
            self.trials[qp as usize] = Some(t);
        }
        Ok(self.trials[qp as usize].as_ref().unwrap())
    }

    fn bits(&mut self, qp: i32) -> Result<f64> {
        Ok(self.trial(qp)?.bits as f64)
    }

    /// Trial bits at a fractional QP, interpolated in log-rate.
    fn bits_at(&mut self, q: f64) -> Result<f64> {
        let q = q.clamp(QP_MIN as f64, QP_MAX as f64);
        let lo = q.floor() as i32;
        let hi = (lo + 1).min(QP_MAX);
        let (bl, bh) = (self.bits(lo)?.max(1.0), self.bits(hi)?.max(1.0));
        let t = q - lo as f64;
        Ok((bl.ln() * (1.0 - t) + bh.ln() * t).exp())
    }

    /// Fractional QP at which trial encodes spend `payload` bits, interpolated
    /// in log-rate between the bracketing integer QPs.
    fn qp_for(&mut self, payload: f64) -> Result<f64> {
        if self.bits(QP_MIN)? <= payload {
            return Ok(QP_MIN as f64);
        }
        if self.bits(QP_MAX)? >= payload {
            return Ok(QP_MAX as f64);
        }
        // bits(lo) > payload >= bits(hi)
        let (mut lo, mut hi) = (QP_MIN, QP_MAX);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.bits(mid)? > payload {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (bl, bh) = (self.bits(lo)?, self.bits(hi)?);
        let frac = if bl > bh { (bl / payload).ln() / (bl / bh).ln() } else { 0.5 };
        Ok(lo as f64 + frac.clamp(0.0, 1.0))
    }

    /// Ratio of real-provider bits to trial bits on a sample of CTUs coded at
    /// `qp` in the trial reconstruction's context.
    fn provider_ratio(&mut self, qp: i32, provider: &dyn FeatureProvider) -> Result<f64> {
        let (padded, grid, cfg) = (self.padded, self.grid, self.cfg);
        let trial = self.trial(qp)?;
        let mut recon = trial.recon.clone();
        let params = RdoParams {
            qp,
            lambda: rdo_lambda(qp, cfg.kappa),
            min_cu: cfg.min_cu,
            msfd: &cfg.msfd,
            provider,
        };
        let (mut real, mut base) = (0u64, 0u64);
        for k in (SAMPLE_STRIDE / 2..grid.len()).step_by(SAMPLE_STRIDE).chain((grid.len() < SAMPLE_STRIDE).then_some(0)) {
            real += 1 + rdo_select(grid.coded_region(k), &params, padded, &mut recon)?.bits;
            base += trial.ctu_bits[k];
        }
        Ok(if base > 0 && real > 0 { real as f64 / base as f64 } else { 1.0 })
    }
}

