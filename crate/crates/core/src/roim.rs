//! Region-of-interest-for-machine maps.
//!
//! A [`RoimMap`] carries two signals derived from detector box proposals:
//!
//! * per-CTU **importance**, the number of box-covered pixels inside the CTU
//!   (summed over boxes, so a pixel under `n` boxes counts `n` times)
//!   normalised by the largest such count in the frame;
//! * per-pair **connectivity** for 4-adjacent CTUs, the fraction of their
//!   shared boundary covered by the union of boxes.
//!
//! Maps are produced offline and stored as JSON documents.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{BlockRegion, CtuGrid, CTU_SIZES};

/// Box proposal document as exported by a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDocument {
    pub image_width: u32,
    pub image_height: u32,
    pub boxes: Vec<BoxEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxEntry {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl BoxDocument {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: BoxDocument = serde_json::from_str(&text)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Boxes("image dimensions must be positive".into()));
        }
        for (n, b) in self.boxes.iter().enumerate() {
            if ![b.x, b.y, b.w, b.h].iter().all(|v| v.is_finite()) {
                return Err(Error::Boxes(format!("box {n} has a non-finite coordinate")));
            }
            if b.w < 0.0 || b.h < 0.0 {
                return Err(Error::Boxes(format!("box {n} has negative extent")));
            }
        }
        Ok(())
    }
}

/// Proposal boxes clipped to a frame. Empty and fully out-of-frame boxes are
/// dropped on construction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BoxSet {
    boxes: Vec<BlockRegion>,
}

impl BoxSet {
    pub fn new(boxes: impl IntoIterator<Item = BlockRegion>, width: u32, height: u32) -> Self {
        let frame = BlockRegion::new(0, 0, width, height);
        BoxSet {
            boxes: boxes
                .into_iter()
                .filter_map(|b| b.intersect(&frame))
                .collect(),
        }
    }

    /// Fractional coordinates are rounded outwards to whole pixels.
    pub fn from_document(doc: &BoxDocument, width: u32, height: u32) -> Result<Self> {
        doc.validate()?;
        if doc.image_width != width || doc.image_height != height {
            return Err(Error::Boxes(format!(
                "box document is for {}x{}, frame is {width}x{height}",
                doc.image_width, doc.image_height
            )));
        }
        let rects = doc.boxes.iter().filter_map(|b| {
            let x0 = b.x.floor();
            let y0 = b.y.floor();
            let x1 = (b.x + b.w).ceil();
            let y1 = (b.y + b.h).ceil();
            (x1 > x0 && y1 > y0).then(|| {
                BlockRegion::new(x0 as i64, y0 as i64, (x1 - x0) as u32, (y1 - y0) as u32)
            })
        });
        Ok(BoxSet::new(rects, width, height))
    }

    pub fn boxes(&self) -> &[BlockRegion] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Pixels in the intersection of a CTU and a box.
#[inline]
pub fn overlap_pixels(ctu: &BlockRegion, b: &BlockRegion) -> u64 {
    ctu.intersect(b).map_or(0, |r| r.area())
}

/// Per-CTU importance in raster order.
pub fn compute_importance(grid: &CtuGrid, boxes: &BoxSet) -> Vec<f64> {
    let raw: Vec<u64> = grid
        .regions()
        .map(|ctu| boxes.boxes().iter().map(|b| overlap_pixels(&ctu, b)).sum())
        .collect();
    let max = raw.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![0.0; raw.len()];
    }
    raw.iter().map(|&r| r as f64 / max as f64).collect()
}

/// Shared boundary of two adjacent CTUs: `(covered, length)` in pixels.
pub fn boundary_coverage(
    grid: &CtuGrid,
    boxes: &BoxSet,
    i: usize,
    j: usize,
) -> Result<(u32, u32)> {
    if !grid.are_adjacent(i, j) {
        return Err(Error::Roim(format!("CTUs {i} and {j} are not 4-adjacent")));
    }
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let ra = grid.region(a);
    let rb = grid.region(b);
    let horizontal = ra.y == rb.y;
    // boundary runs along rows for horizontal neighbours, columns otherwise
    let (start, len, seam) = if horizontal {
        (ra.y, ra.h, rb.x)
    } else {
        (ra.x, ra.w, rb.y)
    };
    let mut covered = vec![false; len as usize];
    for bx in boxes.boxes() {
        let (lo, hi, across_lo, across_hi) = if horizontal {
            (bx.y, bx.bottom(), bx.x, bx.right())
        } else {
            (bx.x, bx.right(), bx.y, bx.bottom())
        };
        // box must include the seam line on either side: seam - 1 or seam
        if across_lo > seam || across_hi < seam {
            continue;
        }
        let from = (lo.max(start) - start).max(0);
        let to = (hi.min(start + len as i64) - start).max(0);
        for slot in covered.iter_mut().take(to as usize).skip(from as usize) {
            *slot = true;
        }
    }
    Ok((covered.iter().filter(|&&c| c).count() as u32, len))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoimMap {
    ctu_size: u32,
    cols: u32,
    rows: u32,
    importance: Vec<f64>,
    /// `rows × (cols - 1)`, entry for CTU `k` and its right neighbour.
    horizontal: Vec<f64>,
    /// `(rows - 1) × cols`, entry for CTU `k` and the CTU below.
    vertical: Vec<f64>,
    boxes: Option<Vec<BlockRegion>>,
}

impl RoimMap {
    pub fn build(grid: &CtuGrid, boxes: &BoxSet) -> Self {
        let mut map = RoimMap::empty(grid);
        map.importance = compute_importance(grid, boxes);
        for k in 0..grid.len() {
            let (c, r) = grid.position(k);
            if c + 1 < grid.cols() {
                let (cov, len) = boundary_coverage(grid, boxes, k, k + 1).expect("adjacent");
                map.horizontal[(r * (grid.cols() - 1) + c) as usize] = cov as f64 / len as f64;
            }
            if r + 1 < grid.rows() {
                let below = grid.index(c, r + 1);
                let (cov, len) = boundary_coverage(grid, boxes, k, below).expect("adjacent");
                map.vertical[k] = cov as f64 / len as f64;
            }
        }
        map.boxes = Some(boxes.boxes().to_vec());
        map
    }

    /// Map with zero importance and connectivity everywhere.
    pub fn empty(grid: &CtuGrid) -> Self {
        let (cols, rows) = (grid.cols(), grid.rows());
        RoimMap {
            ctu_size: grid.ctu_size(),
            cols,
            rows,
            importance: vec![0.0; grid.len()],
            horizontal: vec![0.0; (rows * (cols - 1)) as usize],
            vertical: vec![0.0; ((rows - 1) * cols) as usize],
            boxes: None,
        }
    }

    pub fn ctu_size(&self) -> u32 {
        self.ctu_size
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn boxes(&self) -> Option<&[BlockRegion]> {
        self.boxes.as_deref()
    }

    /// Connectivity of two 4-adjacent CTUs; symmetric in its arguments.
    pub fn connectivity(&self, i: usize, j: usize) -> Result<f64> {
        let n = (self.cols * self.rows) as usize;
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if b >= n {
            return Err(Error::Roim(format!("CTU index {b} out of range")));
        }
        let cols = self.cols as usize;
        let (ca, ra) = (a % cols, a / cols);
        if b == a + 1 && ra == b / cols {
            Ok(self.horizontal[ra * (cols - 1) + ca])
        } else if b == a + cols {
            Ok(self.vertical[a])
        } else {
            Err(Error::Roim(format!("CTUs {i} and {j} are not 4-adjacent")))
        }
    }

    /// All adjacent pairs `(i, j, value)` with `i < j`, in raster order of `i`.
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let cols = self.cols as usize;
        let mut out = Vec::with_capacity(self.horizontal.len() + self.vertical.len());
        for k in 0..(self.cols * self.rows) as usize {
            let (c, r) = (k % cols, k / cols);
            if c + 1 < cols {
                out.push((k, k + 1, self.horizontal[r * (cols - 1) + c]));
            }
            if r + 1 < self.rows as usize {
                out.push((k, k + cols, self.vertical[k]));
            }
        }
        out
    }

    pub fn check_grid(&self, grid: &CtuGrid) -> Result<()> {
        if self.ctu_size != grid.ctu_size() || self.cols != grid.cols() || self.rows != grid.rows()
        {
            return Err(Error::Roim(format!(
                "ROIM grid {}x{} @ {} does not match frame grid {}x{} @ {}",
                self.cols,
                self.rows,
                self.ctu_size,
                grid.cols(),
                grid.rows(),
                grid.ctu_size()
            )));
        }
        Ok(())
    }

    pub fn to_document(&self) -> RoimDocument {
        RoimDocument {
            ctu_size: self.ctu_size,
            cols: self.cols,
            rows: self.rows,
            importance: self.importance.clone(),
            connectivity: self
                .pairs()
                .into_iter()
                .map(|(i, j, value)| PairValue { i, j, value })
                .collect(),
            boxes: self.boxes.as_ref().map(|bs| {
                bs.iter()
                    .map(|b| BoxEntry {
                        x: b.x as f64,
                        y: b.y as f64,
                        w: b.w as f64,
                        h: b.h as f64,
                        score: None,
                    })
                    .collect()
            }),
        }
    }

    pub fn from_document(doc: &RoimDocument) -> Result<Self> {
        if !CTU_SIZES.contains(&doc.ctu_size) {
            return Err(Error::Roim(format!("ctu_size {} not allowed", doc.ctu_size)));
        }
        if doc.cols == 0 || doc.rows == 0 {
            return Err(Error::Roim("empty grid".into()));
        }
        let n = (doc.cols * doc.rows) as usize;
        if doc.importance.len() != n {
            return Err(Error::Roim(format!(
                "expected {n} importance values, found {}",
                doc.importance.len()
            )));
        }
        check_unit(doc.importance.iter().copied(), "importance")?;
        let mut map = RoimMap {
            ctu_size: doc.ctu_size,
            cols: doc.cols,
            rows: doc.rows,
            importance: doc.importance.clone(),
            horizontal: vec![f64::NAN; (doc.rows * (doc.cols - 1)) as usize],
            vertical: vec![f64::NAN; ((doc.rows - 1) * doc.cols) as usize],
            boxes: None,
        };
        let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
        for p in &doc.connectivity {
            check_unit(std::iter::once(p.value), "connectivity")?;
            let key = (p.i.min(p.j), p.i.max(p.j));
            if seen.insert(key, p.value).is_some() {
                return Err(Error::Roim(format!("duplicate pair ({}, {})", p.i, p.j)));
            }
        }
        let cols = doc.cols as usize;
        for ((a, b), value) in seen {
            if b >= n {
                return Err(Error::Roim(format!("pair ({a}, {b}) out of range")));
            }
            if b == a + 1 && a / cols == b / cols {
                map.horizontal[(a / cols) * (cols - 1) + a % cols] = value;
            } else if b == a + cols {
                map.vertical[a] = value;
            } else {
                return Err(Error::Roim(format!("pair ({a}, {b}) is not 4-adjacent")));
            }
        }
        if map.horizontal.iter().chain(&map.vertical).any(|v| v.is_nan()) {
            return Err(Error::Roim("connectivity missing for some adjacent pair".into()));
        }
        map.boxes = doc.boxes.as_ref().map(|bs| {
            bs.iter()
                .map(|b| BlockRegion::new(b.x as i64, b.y as i64, b.w as u32, b.h as u32))
                .collect()
        });
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("ROIM document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        RoimMap::from_document(&serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RoimMap::from_json(&text)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn check_unit(values: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    for v in values {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::Roim(format!("{what} value {v} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Serialized form of a [`RoimMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoimDocument {
    pub ctu_size: u32,
    pub cols: u32,
    pub rows: u32,
    pub importance: Vec<f64>,
    pub connectivity: Vec<PairValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<BoxEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(x: i64, y: i64, w: u32, h: u32) -> BlockRegion {
        BlockRegion::new(x, y, w, h)
    }

    #[test]
    fn overlap_cases() {
        let ctu = r(0, 0, 64, 64);
        assert_eq!(overlap_pixels(&ctu, &r(0, 0, 64, 64)), 4096);
        assert_eq!(overlap_pixels(&ctu, &r(64, 0, 64, 64)), 0);
        assert_eq!(overlap_pixels(&ctu, &r(32, 32, 64, 64)), 1024);
    }

    #[test]
    fn importance_single_box() {
        let grid = CtuGrid::new(128, 64, 64).unwrap();
        let boxes = BoxSet::new([r(0, 0, 64, 64)], 128, 64);
        assert_eq!(compute_importance(&grid, &boxes), vec![1.0, 0.0]);
    }

    #[test]
    fn importance_counts_overlap_per_box() {
        let grid = CtuGrid::new(128, 64, 64).unwrap();
        let boxes = BoxSet::new([r(0, 0, 64, 64), r(32, 0, 64, 64)], 128, 64);
        let m = compute_importance(&grid, &boxes);
        assert_eq!(m[0], 1.0);
        assert_eq!(m[1], 2048.0 / 6144.0);
    }

    #[test]
    fn importance_without_boxes_is_zero() {
        let grid = CtuGrid::new(128, 128, 64).unwrap();
        assert_eq!(compute_importance(&grid, &BoxSet::default()), vec![0.0; 4]);
    }

    #[test]
    fn connectivity_half_boundary() {
        let grid = CtuGrid::new(128, 64, 64).unwrap();
        let boxes = BoxSet::new([r(48, 0, 32, 32)], 128, 64);
        assert_eq!(boundary_coverage(&grid, &boxes, 0, 1).unwrap(), (32, 64));
        let map = RoimMap::build(&grid, &boxes);
        assert_eq!(map.connectivity(0, 1).unwrap(), 0.5);
        assert_eq!(map.connectivity(1, 0).unwrap(), 0.5);
    }

    #[test]
    fn connectivity_union_not_sum() {
        let grid = CtuGrid::new(128, 64, 64).unwrap();
        let boxes = BoxSet::new([r(60, 0, 8, 64), r(32, 0, 64, 64)], 128, 64);
        let map = RoimMap::build(&grid, &boxes);
        assert_eq!(map.connectivity(0, 1).unwrap(), 1.0);
    }

    #[test]
    fn connectivity_touching_one_side_counts() {
        // box ends exactly at the seam: it still covers column 63
        let grid = CtuGrid::new(128, 64, 64).unwrap();
        let boxes = BoxSet::new([r(0, 0, 64, 16)], 128, 64);
        assert_eq!(boundary_coverage(&grid, &boxes, 0, 1).unwrap(), (16, 64));
        let away = BoxSet::new([r(0, 0, 63, 16)], 128, 64);
        assert_eq!(boundary_coverage(&grid, &away, 0, 1).unwrap(), (0, 64));
    }

    #[test]
    fn connectivity_vertical_and_errors() {
        let grid = CtuGrid::new(128, 128, 64).unwrap();
        let boxes = BoxSet::new([r(0, 60, 16, 8)], 128, 128);
        assert_eq!(boundary_coverage(&grid, &boxes, 0, 2).unwrap(), (16, 64));
        assert!(boundary_coverage(&grid, &boxes, 0, 3).is_err());
        let map = RoimMap::build(&grid, &boxes);
        assert!(map.connectivity(0, 3).is_err());
        assert_eq!(map.connectivity(1, 3).unwrap(), 0.0);
    }

    #[test]
    fn box_document_clipping() {
        let doc = BoxDocument {
            image_width: 100,
            image_height: 50,
            boxes: vec![
                BoxEntry { x: -10.0, y: 5.5, w: 20.0, h: 10.0, score: Some(0.9) },
                BoxEntry { x: 200.0, y: 0.0, w: 5.0, h: 5.0, score: None },
            ],
        };
        let set = BoxSet::from_document(&doc, 100, 50).unwrap();
        assert_eq!(set.boxes(), &[r(0, 5, 10, 11)]);
        assert!(BoxSet::from_document(&doc, 99, 50).is_err());
    }

    #[test]
    fn rejects_out_of_range_importance() {
        let grid = CtuGrid::new(128, 64, 64).unwrap();
        let mut doc = RoimMap::empty(&grid).to_document();
        doc.importance[0] = 1.3;
        let err = RoimMap::from_document(&doc).unwrap_err();
        assert!(err.to_string().contains("outside [0, 1]"));
    }

    #[test]
    fn rejects_missing_or_bogus_pairs() {
        let grid = CtuGrid::new(128, 128, 64).unwrap();
        let mut doc = RoimMap::empty(&grid).to_document();
        doc.connectivity.pop();
        assert!(RoimMap::from_document(&doc).is_err());
        let mut doc = RoimMap::empty(&grid).to_document();
        doc.connectivity[0] = PairValue { i: 0, j: 3, value: 0.0 };
        assert!(RoimMap::from_document(&doc).is_err());
    }

    #[test]
    fn grid_mismatch_detected() {
        let grid = CtuGrid::new(128, 128, 64).unwrap();
        let other = CtuGrid::new(192, 128, 64).unwrap();
        assert!(RoimMap::empty(&grid).check_grid(&other).is_err());
        assert!(RoimMap::empty(&grid).check_grid(&grid).is_ok());
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<(i64, i64, u32, u32)>> {
        prop::collection::vec((-40i64..300, -40i64..300, 1u32..150, 1u32..150), 0..8)
    }

    proptest! {
        #[test]
        fn json_round_trip(ws in 1u32..6, hs in 1u32..6, bx in arb_boxes()) {
            let grid = CtuGrid::new(ws * 64 + 9, hs * 64 + 5, 64).unwrap();
            let boxes = BoxSet::new(
                bx.into_iter().map(|(x, y, w, h)| r(x, y, w, h)),
                grid.width(),
                grid.height(),
            );
            let map = RoimMap::build(&grid, &boxes);
            let back = RoimMap::from_json(&map.to_json()).unwrap();
            prop_assert_eq!(back, map);
        }

        #[test]
        fn duplicate_box_leaves_connectivity(bx in arb_boxes(), pick in 0usize..8) {
            let grid = CtuGrid::new(256, 192, 64).unwrap();
            let rects: Vec<_> = bx.into_iter().map(|(x, y, w, h)| r(x, y, w, h)).collect();
            prop_assume!(!rects.is_empty());
            let mut dup = rects.clone();
            dup.push(rects[pick % rects.len()]);
            let a = RoimMap::build(&grid, &BoxSet::new(rects, 256, 192));
            let b = RoimMap::build(&grid, &BoxSet::new(dup, 256, 192));
            prop_assert_eq!(a.pairs(), b.pairs());
        }

        #[test]
        fn adding_box_never_lowers_raw_coverage(bx in arb_boxes(), extra in (-40i64..300, -40i64..300, 1u32..150, 1u32..150)) {
            let grid = CtuGrid::new(256, 256, 64).unwrap();
            let mut rects: Vec<_> = bx.into_iter().map(|(x, y, w, h)| r(x, y, w, h)).collect();
            let raw = |set: &BoxSet| -> Vec<u64> {
                grid.regions().map(|c| set.boxes().iter().map(|b| overlap_pixels(&c, b)).sum()).collect()
            };
            let before = raw(&BoxSet::new(rects.clone(), 256, 256));
            rects.push(r(extra.0, extra.1, extra.2, extra.3));
            let after = raw(&BoxSet::new(rects.clone(), 256, 256));
            for (a, b) in before.iter().zip(&after) {
                prop_assert!(b >= a);
            }
            let m = compute_importance(&grid, &BoxSet::new(rects, 256, 256));
            let top = after.iter().enumerate().max_by_key(|(_, v)| **v).map(|(k, _)| k).unwrap();
            if after[top] > 0 {
                prop_assert_eq!(m[top], 1.0);
            }
        }

        #[test]
        fn translation_by_one_ctu_permutes(bx in prop::collection::vec((0i64..128, 0i64..192, 1u32..64, 1u32..64), 1..6)) {
            // boxes confined to the left 3 columns of a 4x3 grid, shifted right by one CTU
            let grid = CtuGrid::new(256, 192, 64).unwrap();
            let rects: Vec<_> = bx.iter().map(|&(x, y, w, h)| r(x, y, w.min((192 - x) as u32), h)).collect();
            let shifted: Vec<_> = rects.iter().map(|b| r(b.x + 64, b.y, b.w, b.h)).collect();
            let a = compute_importance(&grid, &BoxSet::new(rects, 256, 192));
            let b = compute_importance(&grid, &BoxSet::new(shifted, 256, 192));
            for row in 0..3usize {
                for col in 0..3usize {
                    prop_assert_eq!(a[row * 4 + col], b[row * 4 + col + 1]);
                }
                prop_assert_eq!(b[row * 4], 0.0);
            }
        }
    }
}
