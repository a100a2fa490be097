//! Shared helpers for the integration suites.
#![allow(dead_code)]

use mvrd_core::codec::bits::se_len;
use mvrd_core::codec::entropy::levels_bits;
use mvrd_core::codec::predict::{predict_intra, IntraMode};
use mvrd_core::codec::transform::{dequantize_inverse, reconstruct, transform_quantize};
use mvrd_core::features::FeatureProvider;
use mvrd_core::frame::{BlockRegion, Frame};
use mvrd_core::msfd::{msfd, MultiScaleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A 16×16 CTU at (16, 16) of a 32×32 frame whose top and left neighbours
/// are already reconstructed.
pub struct Toy {
    pub orig: Frame,
    pub recon: Frame,
    pub ctu: BlockRegion,
    pub qp: i32,
}

pub fn toy(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = seed % 5;
    let base = rng.random_range(40i32..200);
    let (gx, gy) = (rng.random_range(-8i32..=8), rng.random_range(-8i32..=8));
    let noise = [2i32, 12, 3, 2, 30][kind as usize];
    let edge = rng.random_range(4i32..28);
    let tiles: Vec<i32> = (0..16).map(|_| rng.random_range(0i32..=255)).collect();
    let orig = Frame::from_fn(32, 32, |x, y| {
        let (xi, yi) = (x as i32, y as i32);
        let v = match kind {
            // 8×8 tiles of unrelated flat levels.
            2 => tiles[((y / 8) * 4 + x / 8) as usize],
            // Sharp oblique edge.
            3 => base + if xi + yi / 2 > edge + 12 { 80 } else { -40 },
            _ => base + gx * (xi - 16) / 2 + gy * (yi - 16) / 2,
        };
        (v + rng.random_range(-noise..=noise)).clamp(0, 255) as u8
    })
    .unwrap();
    // Neighbours carry a little coding noise; the CTU itself starts blank.
    let recon = Frame::from_fn(32, 32, |x, y| {
        if x >= 16 && y >= 16 {
            0
        } else {
            (orig.get(x, y) as i32 + rng.random_range(-3..=3)).clamp(0, 255) as u8
        }
    })
    .unwrap();
    Toy {
        orig,
        recon,
        ctu: BlockRegion::new(16, 16, 16, 16),
        qp: rng.random_range(22..=50),
    }
}

/// Candidate partition of a 16×16 CTU with 8×8 minimum CUs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyTree {
    Leaf(IntraMode),
    Split([IntraMode; 4]),
}

pub fn all_toy_trees() -> Vec<ToyTree> {
    let mut out: Vec<ToyTree> = IntraMode::ALL.iter().map(|&m| ToyTree::Leaf(m)).collect();
    for a in IntraMode::ALL {
        for b in IntraMode::ALL {
            for c in IntraMode::ALL {
                for d in IntraMode::ALL {
                    out.push(ToyTree::Split([a, b, c, d]));
                }
            }
        }
    }
    out
}

/// `(D + λ·R)` of one leaf, coded straight from the primitives; the leaf's
/// reconstruction is written into `recon`.
fn leaf_cost(
    t: &Toy,
    recon: &mut Frame,
    region: BlockRegion,
    mode: IntraMode,
    lambda: f64,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> f64 {
    let n = region.w as usize;
    let pred = predict_intra(recon, &region, mode);
    let mut orig = Vec::with_capacity(n * n);
    for y in 0..region.h {
        for x in 0..region.w {
            orig.push(t.orig.get(region.x as u32 + x, region.y as u32 + y));
        }
    }
    let residual: Vec<i32> = orig.iter().zip(&pred).map(|(&o, &p)| o as i32 - p as i32).collect();
    let levels = transform_quantize(&residual, n, t.qp);
    let rec = reconstruct(&pred, &dequantize_inverse(&levels, n, t.qp));
    let mut sse = 0.0;
    for (i, (&r, &o)) in rec.iter().zip(&orig).enumerate() {
        recon.set(region.x as u32 + (i % n) as u32, region.y as u32 + (i / n) as u32, r);
        sse += (r as f64 - o as f64).powi(2);
    }
    let (m, _) = msfd(&t.orig, recon, &region, cfg, provider).unwrap();
    let bits = 2 + levels_bits(&levels, n);
    (m + cfg.beta * (sse / (n * n) as f64)) + lambda * bits as f64
}

/// Total `J` of a candidate tree: leaf costs plus one flag bit at the root.
pub fn toy_tree_cost(
    t: &Toy,
    tree: ToyTree,
    lambda: f64,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> f64 {
    let mut recon = t.recon.clone();
    match tree {
        ToyTree::Leaf(m) => leaf_cost(t, &mut recon, t.ctu, m, lambda, cfg, provider) + lambda,
        ToyTree::Split(modes) => {
            let mut j = lambda;
            for (q, m) in modes.iter().enumerate() {
                let region = BlockRegion::new(
                    t.ctu.x + 8 * (q as i64 % 2),
                    t.ctu.y + 8 * (q as i64 / 2),
                    8,
                    8,
                );
                j += leaf_cost(t, &mut recon, region, *m, lambda, cfg, provider);
            }
            j
        }
    }
}

/// Minimum over every candidate tree.
pub fn exhaustive_min(
    t: &Toy,
    lambda: f64,
    cfg: &MultiScaleConfig,
    provider: &dyn FeatureProvider,
) -> (f64, ToyTree) {
    all_toy_trees()
        .into_iter()
        .map(|tree| (toy_tree_cost(t, tree, lambda, cfg, provider), tree))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
}

/// Bits of a signed QP delta, re-derived for budget checks.
pub fn qp_delta_bits(delta: i64) -> u64 {
    se_len(delta)
}

/// Features are the normalized samples themselves, so any window size works
/// and FD tracks structural change at every CU size.
pub struct PixelFeatures;

impl FeatureProvider for PixelFeatures {
    fn extract(&self, patch: &Frame) -> mvrd_core::Result<mvrd_core::features::FeatureTensor> {
        Ok(mvrd_core::features::FeatureTensor::from_patch(patch))
    }

    fn name(&self) -> &str {
        "pixels"
    }
}
