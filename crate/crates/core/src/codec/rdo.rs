//! Quad-tree mode and partition search.

use super::bits::{BitReader, BitWriter};
use super::entropy::{decode_levels, encode_levels, levels_bits};
use super::predict::{predict_intra, IntraMode};
use super::transform::{dequantize_inverse, reconstruct, transform_quantize};
use crate::error::{Error, Result};
use crate::features::{FeatureProvider, FeatureTensor};
use crate::frame::{BlockRegion, Frame};
use crate::msfd::{combined_distortion, msfd_against, mse_samples, window_features, MultiScaleConfig};

/// Smallest CU edge.
pub const MIN_CU: u32 = 4;
/// Bits for a mode index.
pub const MODE_BITS: u64 = 2;

/// Lagrangian for `J = D + λ·R`: `0.85·2^((qp−12)/3)·kappa`.
pub fn rdo_lambda(qp: i32, kappa: f64) -> f64 {
    0.85 * 2f64.powf((qp as f64 - 12.0) / 3.0) * kappa
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuLeaf {
    pub region: BlockRegion,
    pub mode: IntraMode,
    /// Quantized levels, raster order.
    pub levels: Vec<i32>,
    pub msfd: f64,
    pub mse: f64,
    /// Mode and coefficient bits, excluding the split flag.
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CuTree {
    Leaf(CuLeaf),
    /// Children in z-order: top-left, top-right, bottom-left, bottom-right.
    Split(Box<[CuTree; 4]>),
}

impl CuTree {
    pub fn leaves(&self) -> Vec<&CuLeaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a CuLeaf>) {
        match self {
            CuTree::Leaf(l) => out.push(l),
            CuTree::Split(c) => c.iter().for_each(|t| t.collect_leaves(out)),
        }
    }
}

#[inline]
fn has_split_flag(size: u32, min_cu: u32) -> bool {
    size > min_cu
}

/// The four quadrants of a square region in z-order.
pub fn quadrants(r: &BlockRegion) -> [BlockRegion; 4] {
    let h = r.w / 2;
    [
        BlockRegion::new(r.x, r.y, h, h),
        BlockRegion::new(r.x + h as i64, r.y, h, h),
        BlockRegion::new(r.x, r.y + h as i64, h, h),
        BlockRegion::new(r.x + h as i64, r.y + h as i64, h, h),
    ]
}

pub fn write_tree(w: &mut BitWriter, tree: &CuTree, size: u32, min_cu: u32) {
    match tree {
        CuTree::Leaf(leaf) => {
            if has_split_flag(size, min_cu) {
                w.put_bit(false);
            }
            w.put_bits(leaf.mode.index() as u64, MODE_BITS as u32);
            encode_levels(w, &leaf.levels, size as usize);
        }
        CuTree::Split(children) => {
            w.put_bit(true);
            for c in children.iter() {
                write_tree(w, c, size / 2, min_cu);
            }
        }
    }
}

pub fn tree_bits(tree: &CuTree, size: u32, min_cu: u32) -> u64 {
    let flag = has_split_flag(size, min_cu) as u64;
    match tree {
        CuTree::Leaf(leaf) => flag + MODE_BITS + levels_bits(&leaf.levels, size as usize),
        CuTree::Split(children) => {
            flag + children.iter().map(|c| tree_bits(c, size / 2, min_cu)).sum::<u64>()
        }
    }
}

/// Parsed leaf before reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLeaf {
    pub region: BlockRegion,
    pub mode: IntraMode,
    pub levels: Vec<i32>,
}

/// Reads a CU tree, returning leaves in coding order.
pub fn read_tree(
    r: &mut BitReader,
    region: BlockRegion,
    min_cu: u32,
    out: &mut Vec<ParsedLeaf>,
) -> Result<()> {
    if has_split_flag(region.w, min_cu) && r.bit()? {
        for q in quadrants(&region) {
            read_tree(r, q, min_cu, out)?;
        }
        return Ok(());
    }
    let mode = IntraMode::from_index(r.bits(MODE_BITS as u32)? as u8)
        .ok_or_else(|| Error::Bitstream("invalid intra mode".into()))?;
    let levels = decode_levels(r, region.w as usize)?;
    out.push(ParsedLeaf { region, mode, levels });
    Ok(())
}

/// Prediction plus decoded residual for a leaf, as the decoder sees it.
pub fn reconstruct_leaf(recon: &Frame, region: &BlockRegion, mode: IntraMode, levels: &[i32], qp: i32) -> Vec<u8> {
    let pred = predict_intra(recon, region, mode);
    reconstruct(&pred, &dequantize_inverse(levels, region.w as usize, qp))
}

pub fn read_block(frame: &Frame, r: &BlockRegion) -> Vec<u8> {
    let (x0, y0) = (r.x as usize, r.y as usize);
    let fw = frame.width() as usize;
    let mut out = Vec::with_capacity(r.area() as usize);
    for y in y0..y0 + r.h as usize {
        out.extend_from_slice(&frame.samples()[y * fw + x0..y * fw + x0 + r.w as usize]);
    }
    out
}

pub fn write_block(frame: &mut Frame, r: &BlockRegion, data: &[u8]) {
    let (x0, y0) = (r.x as usize, r.y as usize);
    let fw = frame.width() as usize;
    let w = r.w as usize;
    let s = frame.samples_mut();
    for (j, row) in data.chunks_exact(w).enumerate() {
        let at = (y0 + j) * fw + x0;
        s[at..at + w].copy_from_slice(row);
    }
}

#[derive(Clone, Copy)]
pub struct RdoParams<'a> {
    pub qp: i32,
    pub lambda: f64,
    pub min_cu: u32,
    pub msfd: &'a MultiScaleConfig,
    pub provider: &'a dyn FeatureProvider,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedCtu {
    pub qp: i32,
    pub tree: CuTree,
    /// Total `J` of the chosen tree.
    pub cost: f64,
    /// Tree bits, excluding the QP delta.
    pub bits: u64,
}

/// Chooses the partition and modes of the square CTU at `ctu`, leaving the
/// chosen reconstruction in `recon`. Both frames must contain `ctu`, and every
/// sample above and left of it must already be reconstructed.
pub fn rdo_select(
    ctu: BlockRegion,
    params: &RdoParams,
    orig: &Frame,
    recon: &mut Frame,
) -> Result<CodedCtu> {
    if ctu.w != ctu.h || !ctu.w.is_power_of_two() || ctu.w < params.min_cu {
        return Err(Error::Geometry(format!("CTU {}x{} is not a legal square", ctu.w, ctu.h)));
    }
    if !orig.bounds().contains_region(&ctu) || !recon.bounds().contains_region(&ctu) {
        return Err(Error::Geometry("CTU lies outside the frame".into()));
    }
    let (cost, tree, bits) = search(ctu, params, orig, recon)?;
    Ok(CodedCtu { qp: params.qp, tree, cost, bits })
}

fn search(
    region: BlockRegion,
    p: &RdoParams,
    orig: &Frame,
    recon: &mut Frame,
) -> Result<(f64, CuTree, u64)> {
    let size = region.w;
    let flag = has_split_flag(size, p.min_cu) as u64;
    let (leaf, leaf_j) = best_leaf(region, p, orig, recon)?;
    let unsplit_j = leaf_j + p.lambda * flag as f64;
    let unsplit_bits = leaf.bits + flag;
    if flag == 0 {
        return Ok((unsplit_j, CuTree::Leaf(leaf), unsplit_bits));
    }

    let kept = read_block(recon, &region);
    let mut split_j = p.lambda;
    let mut split_bits = 1;
    let mut children = Vec::with_capacity(4);
    for q in quadrants(&region) {
        let (j, t, b) = search(q, p, orig, recon)?;
        split_j += j;
        split_bits += b;
        children.push(t);
    }
    if split_j < unsplit_j {
        let children: [CuTree; 4] = children.try_into().expect("four quadrants");
        Ok((split_j, CuTree::Split(Box::new(children)), split_bits))
    } else {
        write_block(recon, &region, &kept);
        Ok((unsplit_j, CuTree::Leaf(leaf), unsplit_bits))
    }
}

/// Best unsplit coding of `region`; its reconstruction is left in `recon`.
fn best_leaf(
    region: BlockRegion,
    p: &RdoParams,
    orig: &Frame,
    recon: &mut Frame,
) -> Result<(CuLeaf, f64)> {
    let n = region.w as usize;
    let orig_block = read_block(orig, &region);
    let orig_features: Vec<FeatureTensor> = if p.msfd.is_small(&region) {
        Vec::new()
    } else {
        window_features(orig, &region, p.msfd, p.provider)?
    };
    let mut best: Option<(CuLeaf, f64, Vec<u8>)> = None;
    for mode in IntraMode::ALL {
        let pred = predict_intra(recon, &region, mode);
        let residual: Vec<i32> = orig_block
            .iter()
            .zip(&pred)
            .map(|(&o, &q)| o as i32 - q as i32)
            .collect();
        let levels = transform_quantize(&residual, n, p.qp);
        let rec = reconstruct(&pred, &dequantize_inverse(&levels, n, p.qp));
        write_block(recon, &region, &rec);
        let (msfd, _) = msfd_against(&orig_features, recon, &region, p.msfd, p.provider)?;
        let mse = mse_samples(&orig_block, &rec);
        let bits = MODE_BITS + levels_bits(&levels, n);
        let j = combined_distortion(msfd, mse, p.msfd.beta) + p.lambda * bits as f64;
        if best.as_ref().is_none_or(|(_, bj, _)| j < *bj) {
            best = Some((CuLeaf { region, mode, levels, msfd, mse, bits }, j, rec));
        }
    }
    let (leaf, j, rec) = best.expect("at least one mode");
    write_block(recon, &region, &rec);
    Ok((leaf, j))
}
