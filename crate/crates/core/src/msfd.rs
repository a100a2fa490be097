//! Multi-scale feature distortion.
//!
//! A coding unit is scored on a stack of windows that grow by `delta_d`
//! pixels per scale towards the top and left, where the samples are already
//! reconstructed. For each window the cosine feature distance between the
//! original and the reconstruction is computed; the weighted sum is scaled by
//! the CU area. Units narrower or shorter than `small_block_threshold` are too
//! small for the extractor and are charged the maximum distance, 2, on every
//! window. A plain MSE term weighted by `beta` is added on top.

use crate::error::{Error, Result};
use crate::features::{feature_distance, FeatureProvider, FeatureTensor};
use crate::frame::{extract_block, BlockRegion, Frame};

/// Largest possible cosine distance.
pub const MAX_FD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiScaleConfig {
    pub delta_d: u32,
    /// One positive weight per window; index 0 is the native CU window.
    pub weights: Vec<f64>,
    pub beta: f64,
    pub small_block_threshold: u32,
}

impl Default for MultiScaleConfig {
    fn default() -> Self {
        MultiScaleConfig {
            delta_d: 8,
            weights: vec![4.0, 2.0, 1.0],
            beta: 0.02,
            small_block_threshold: 16,
        }
    }
}

impl MultiScaleConfig {
    pub fn num_windows(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("at least one window weight is required".into()));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Config("window weights must be positive".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    #[inline]
    pub fn is_small(&self, cu: &BlockRegion) -> bool {
        cu.w < self.small_block_threshold || cu.h < self.small_block_threshold
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdDistortion {
    pub msfd: f64,
    pub mse: f64,
    pub combined: f64,
    /// Feature distance per window.
    pub fd: Vec<f64>,
}

/// Window `s` is the CU grown by `s·delta_d` on its top and left edges.
pub fn build_windows(cu: &BlockRegion, cfg: &MultiScaleConfig) -> Vec<BlockRegion> {
    (0..cfg.num_windows() as u32)
        .map(|s| {
            let grow = s * cfg.delta_d;
            BlockRegion::new(
                cu.x - grow as i64,
                cu.y - grow as i64,
                cu.w + grow,
                cu.h + grow,
            )
        })
        .collect()
}

/// `Σ w_i·FD_i·W·H`.
pub fn msfd_from_fd(fd: &[f64], weights: &[f64], cu: &BlockRegion) -> f64 {
    debug_assert_eq!(fd.len(), weights.len());
    let weighted: f64 = fd.iter().zip(weights).map(|(f, w)| w * f).sum();
    weighted * cu.area() as f64
}

/// Features of every window of `cu`, sampled from `frame` with edge
/// replication outside it.
pub fn window_features(
    frame: &Frame,
    cu: &BlockRegion,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> Result<Vec<FeatureTensor>> {
    build_windows(cu, cfg)
        .iter()
        .map(|win| provider.extract(&extract_block(frame, *win, true)?))
        .collect()
}

/// Per-window FD and MSFD of `recon` against precomputed original features.
/// `orig_features` is ignored for small CUs and may be empty.
pub fn msfd_against(
    orig_features: &[FeatureTensor],
    recon: &Frame,
    cu: &BlockRegion,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> Result<(f64, Vec<f64>)> {
    let fd: Vec<f64> = if cfg.is_small(cu) {
        vec![MAX_FD; cfg.num_windows()]
    } else {
        let recon_features = window_features(recon, cu, cfg, provider)?;
        if recon_features.len() != orig_features.len() {
            return Err(Error::Features(format!(
                "{} original window features for {} windows",
                orig_features.len(),
                recon_features.len()
            )));
        }
        recon_features
            .iter()
            .zip(orig_features)
            .map(|(r, o)| feature_distance(r, o))
            .collect::<Result<_>>()?
    };
    Ok((msfd_from_fd(&fd, &cfg.weights, cu), fd))
}

/// MSFD of the CU at `cu`: original windows come from `orig`, reconstructed
/// windows from `recon` (which must already hold the candidate CU).
pub fn msfd(
    orig: &Frame,
    recon: &Frame,
    cu: &BlockRegion,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> Result<(f64, Vec<f64>)> {
    let orig_features = if cfg.is_small(cu) {
        Vec::new()
    } else {
        window_features(orig, cu, cfg, provider)?
    };
    msfd_against(&orig_features, recon, cu, cfg, provider)
}

/// Mean squared sample difference.
pub fn mse(orig: &Frame, recon: &Frame) -> Result<f64> {
    if (orig.width(), orig.height()) != (recon.width(), recon.height()) {
        return Err(Error::Metric(format!(
            "shape mismatch {}x{} vs {}x{}",
            orig.width(),
            orig.height(),
            recon.width(),
            recon.height()
        )));
    }
    Ok(mse_samples(orig.samples(), recon.samples()))
}

pub(crate) fn mse_samples(a: &[u8], b: &[u8]) -> f64 {
    let sse: u64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    sse as f64 / a.len() as f64
}

#[inline]
pub fn combined_distortion(msfd: f64, mse: f64, beta: f64) -> f64 {
    msfd + beta * mse
}

/// Full distortion of the CU at `cu`.
pub fn distortion(
    orig: &Frame,
    recon: &Frame,
    cu: &BlockRegion,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> Result<RdDistortion> {
    let (msfd, fd) = msfd(orig, recon, cu, cfg, provider)?;
    let mse = mse(
        &extract_block(orig, *cu, false)?,
        &extract_block(recon, *cu, false)?,
    )?;
    Ok(RdDistortion {
        msfd,
        mse,
        combined: combined_distortion(msfd, mse, cfg.beta),
        fd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Vgg11Features, ZeroFeatures};
    use proptest::prelude::*;

    fn r(x: i64, y: i64, w: u32, h: u32) -> BlockRegion {
        BlockRegion::new(x, y, w, h)
    }

    #[test]
    fn windows_grow_top_left() {
        let cfg = MultiScaleConfig::default();
        assert_eq!(
            build_windows(&r(64, 64, 16, 16), &cfg),
            vec![r(64, 64, 16, 16), r(56, 56, 24, 24), r(48, 48, 32, 32)]
        );
        let flat = MultiScaleConfig {
            delta_d: 0,
            ..cfg.clone()
        };
        assert!(build_windows(&r(8, 8, 16, 16), &flat)
            .iter()
            .all(|w| *w == r(8, 8, 16, 16)));
        let w = build_windows(&r(0, 0, 16, 16), &cfg);
        assert_eq!((w[2].x, w[2].y), (-16, -16));
    }

    #[test]
    fn windows_nest() {
        let cfg = MultiScaleConfig::default();
        let w = build_windows(&r(40, 24, 32, 16), &cfg);
        for pair in w.windows(2) {
            assert!(pair[1].contains_region(&pair[0]));
            assert_ne!(pair[1], pair[0]);
        }
    }

    #[test]
    fn weighted_sum_example() {
        let v = msfd_from_fd(&[0.5, 0.25, 0.125], &[4.0, 2.0, 1.0], &r(0, 0, 16, 16));
        assert_eq!(v, 672.0);
    }

    #[test]
    fn small_block_ceiling() {
        let orig = Frame::from_fn(32, 32, |x, y| (x * 7 + y) as u8).unwrap();
        let recon = Frame::filled(32, 32, 3).unwrap();
        let cfg = MultiScaleConfig::default();
        let (m, fd) = msfd(&orig, &recon, &r(8, 8, 8, 8), &cfg, &ZeroFeatures).unwrap();
        assert_eq!(m, 896.0);
        assert_eq!(fd, vec![2.0; 3]);
        let (m, _) = msfd(&orig, &orig, &r(0, 16, 16, 4), &cfg, &ZeroFeatures).unwrap();
        assert_eq!(m, 2.0 * 7.0 * 64.0);
    }

    #[test]
    fn identical_reconstruction_is_free() {
        let net = Vgg11Features::builtin(0);
        let f = Frame::from_fn(48, 48, |x, y| ((x * x + y * 3) % 251) as u8).unwrap();
        let d = distortion(&f, &f, &r(16, 16, 16, 16), &MultiScaleConfig::default(), &net).unwrap();
        assert_eq!(d.msfd, 0.0);
        assert_eq!(d.mse, 0.0);
        assert_eq!(d.combined, 0.0);
    }

    #[test]
    fn mse_cases() {
        let a = Frame::from_fn(5, 3, |x, y| (x * 20 + y) as u8).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        let b = Frame::from_fn(5, 3, |x, y| (x * 20 + y + 2) as u8).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 4.0);
        assert!(mse(&a, &Frame::filled(3, 5, 0).unwrap()).is_err());
    }

    #[test]
    fn mse_matches_double_loop() {
        let a = Frame::from_fn(13, 7, |x, y| ((x * 91 + y * 37) % 256) as u8).unwrap();
        let b = Frame::from_fn(13, 7, |x, y| ((x * 53 + y * 11 + 5) % 256) as u8).unwrap();
        let mut sum = 0.0f64;
        for y in 0..7 {
            for x in 0..13 {
                let d = a.get(x, y) as f64 - b.get(x, y) as f64;
                sum += d * d;
            }
        }
        assert_eq!(mse(&a, &b).unwrap(), sum / 91.0);
    }

    #[test]
    fn combined_examples() {
        assert_eq!(combined_distortion(672.0, 100.0, 0.0), 672.0);
        assert_eq!(combined_distortion(672.0, 100.0, 0.02), 674.0);
        assert_eq!(combined_distortion(0.0, 0.0, 0.02), 0.0);
    }

    proptest! {
        #[test]
        fn msfd_monotone_in_each_fd(fd in prop::collection::vec(0.0f64..1.9, 3), i in 0usize..3, bump in 0.01f64..0.1) {
            let cu = r(0, 0, 16, 32);
            let w = [4.0, 2.0, 1.0];
            let base = msfd_from_fd(&fd, &w, &cu);
            let mut up = fd.clone();
            up[i] += bump;
            prop_assert!(msfd_from_fd(&up, &w, &cu) > base);
        }

        #[test]
        fn combined_linear_in_mse(m in 0.0f64..1e4, e1 in 0.0f64..1e4, e2 in 0.0f64..1e4, beta in 0.0f64..5.0) {
            let d1 = combined_distortion(m, e1, beta);
            let d2 = combined_distortion(m, e2, beta);
            prop_assert!(((d2 - d1) - beta * (e2 - e1)).abs() <= 1e-9 * (d1.abs() + d2.abs() + 1.0));
        }
    }
}
