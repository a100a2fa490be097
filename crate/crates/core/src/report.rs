//! Rate sweeps, beta calibration and rate-quality CSV handling.

use std::fmt::Write as _;

use crate::codec::{encode_frame, EncoderConfig, RateMode};
use crate::error::{Error, Result};
use crate::features::FeatureProvider;
use crate::frame::{CtuGrid, Frame};
use crate::metrics::{format_psnr, psnr, RdPoint};
use crate::roim::RoimMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub target_bpp: f64,
    pub bpp: f64,
    pub bits: u64,
    pub psnr: f64,
    pub qp_pic: i32,
}

pub const SWEEP_HEADER: &str = "target_bpp,bpp,bits,psnr,qp_pic";

/// Encodes `frame` once per target rate.
pub fn sweep(
    frame: &Frame,
    roim: &RoimMap,
    cfg: &EncoderConfig,
    rates: &[f64],
    provider: &dyn FeatureProvider,
) -> Result<Vec<SweepRow>> {
    rates
        .iter()
        .map(|&target| {
            let cfg = EncoderConfig { rate: RateMode::TargetBpp(target), ..cfg.clone() };
            let out = encode_frame(frame, roim, &cfg, provider)?;
            log::info!("target {target} bpp: {} bits", out.stats.total_bits);
            Ok(SweepRow {
                target_bpp: target,
                bpp: out.stats.bpp(),
                bits: out.stats.total_bits,
                psnr: psnr(frame, &out.recon)?,
                qp_pic: out.stats.qp_pic,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.target_bpp, r.bpp, r.bits, format_psnr(r.psnr), r.qp_pic);
    }
    s
}

/// Rate and quality columns of a CSV. With a header, the rate column is
/// `bpp` (else `rate`) and the quality column the first of `psnr`,
/// `quality`, `score`; without one, columns 0 and 1.
pub fn parse_rd_csv(text: &str) -> Result<Vec<RdPoint>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).peekable();
    let first = lines.peek().ok_or_else(|| Error::Metric("empty rate-quality file".into()))?;
    let fields: Vec<&str> = first.split(',').map(str::trim).collect();
    let (rate_col, quality_col) = if fields.iter().all(|f| f.parse::<f64>().is_ok()) {
        (0, 1)
    } else {
        let find = |names: &[&str]| {
            names
                .iter()
                .find_map(|n| fields.iter().position(|f| f.eq_ignore_ascii_case(n)))
        };
        let rate = find(&["bpp", "rate"])
            .ok_or_else(|| Error::Metric("header has no bpp or rate column".into()))?;
        let quality = find(&["psnr", "quality", "score"])
            .ok_or_else(|| Error::Metric("header has no psnr, quality or score column".into()))?;
        lines.next();
        (rate, quality)
    };
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |c: usize| -> Result<f64> {
                f.get(c)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Metric(format!("row {}: column {c} is not a number", i + 1)))
            };
            Ok(RdPoint::new(get(rate_col)?, get(quality_col)?))
        })
        .collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaCalibration {
    pub beta: f64,
    pub median_msfd: f64,
    pub median_mse: f64,
    pub leaves: usize,
}

/// Beta that puts the median `β·MSE` on the median MSFD over the coded leaves
/// of constant-QP encodes of `frames`.
pub fn calibrate_beta(
    frames: &[Frame],
    cfg: &EncoderConfig,
    qp: i32,
    provider: &dyn FeatureProvider,
) -> Result<BetaCalibration> {
    let cfg = EncoderConfig { rate: RateMode::ConstantQp(qp), ..cfg.clone() };
    let (mut msfd, mut mse) = (Vec::new(), Vec::new());
    for f in frames {
        let grid = CtuGrid::new(f.width(), f.height(), cfg.ctu_size)?;
        let out = encode_frame(f, &RoimMap::empty(&grid), &cfg, provider)?;
        for l in &out.stats.leaves {
            msfd.push(l.msfd);
            mse.push(l.mse);
        }
    }
    let leaves = msfd.len();
    let median_msfd = median(&mut msfd).ok_or_else(|| Error::Config("no frames to calibrate on".into()))?;
    let median_mse = median(&mut mse).unwrap_or(0.0);
    if median_mse <= 0.0 {
        return Err(Error::Config(format!(
            "median leaf MSE is zero at QP {qp}; pick a coarser QP"
        )));
    }
    Ok(BetaCalibration {
        beta: median_msfd / median_mse,
        median_msfd,
        median_mse,
        leaves,
    })
}
