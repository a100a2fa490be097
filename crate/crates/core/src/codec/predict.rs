//! Intra prediction from the reconstructed top row and left column.

use crate::frame::{BlockRegion, Frame};

/// Reference value used when a side lies outside the frame.
pub const DEFAULT_REFERENCE: u8 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntraMode {
    Dc = 0,
    Horizontal = 1,
    Vertical = 2,
    Planar = 3,
}

impl IntraMode {
    pub const ALL: [IntraMode; 4] = [
        IntraMode::Dc,
        IntraMode::Horizontal,
        IntraMode::Vertical,
        IntraMode::Planar,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

/// Top and left reference samples of `region`; `None` when that side is
/// outside the frame.
pub fn references(recon: &Frame, region: &BlockRegion) -> (Option<Vec<u8>>, Option<Vec<u8>>) {
    let top = (region.y > 0).then(|| {
        (0..region.w as i64)
            .map(|i| recon.get_clamped(region.x + i, region.y - 1))
            .collect()
    });
    let left = (region.x > 0).then(|| {
        (0..region.h as i64)
            .map(|j| recon.get_clamped(region.x - 1, region.y + j))
            .collect()
    });
    (top, left)
}

/// Predicted block in row-major order.
pub fn predict_intra(recon: &Frame, region: &BlockRegion, mode: IntraMode) -> Vec<u8> {
    let (top, left) = references(recon, region);
    predict_from_references(top.as_deref(), left.as_deref(), region.w, region.h, mode)
}

pub fn predict_from_references(
    top: Option<&[u8]>,
    left: Option<&[u8]>,
    w: u32,
    h: u32,
    mode: IntraMode,
) -> Vec<u8> {
    let (w, h) = (w as usize, h as usize);
    let t: Vec<u32> = match top {
        Some(t) => t.iter().map(|&v| v as u32).collect(),
        None => vec![DEFAULT_REFERENCE as u32; w],
    };
    let l: Vec<u32> = match left {
        Some(l) => l.iter().map(|&v| v as u32).collect(),
        None => vec![DEFAULT_REFERENCE as u32; h],
    };
    let mut out = vec![0u8; w * h];
    match mode {
        IntraMode::Dc => {
            let (sum, n) = match (top, left) {
                (Some(_), Some(_)) => (t.iter().sum::<u32>() + l.iter().sum::<u32>(), w + h),
                (Some(_), None) => (t.iter().sum(), w),
                (None, Some(_)) => (l.iter().sum(), h),
                (None, None) => (DEFAULT_REFERENCE as u32, 1),
            };
            let n = n as u32;
            out.fill(((sum + n / 2) / n) as u8);
        }
        IntraMode::Horizontal => {
            for (y, row) in out.chunks_exact_mut(w).enumerate() {
                row.fill(l[y] as u8);
            }
        }
        IntraMode::Vertical => {
            for row in out.chunks_exact_mut(w) {
                for (o, &v) in row.iter_mut().zip(&t) {
                    *o = v as u8;
                }
            }
        }
        IntraMode::Planar => {
            let (tr, bl) = (t[w - 1], l[h - 1]);
            let (wu, hu) = (w as u32, h as u32);
            for y in 0..h {
                for x in 0..w {
                    let (xu, yu) = (x as u32, y as u32);
                    let hor = (wu - 1 - xu) * l[y] + (xu + 1) * tr;
                    let ver = (hu - 1 - yu) * t[x] + (yu + 1) * bl;
                    out[y * w + x] = ((hor * hu + ver * wu + wu * hu) / (2 * wu * hu)) as u8;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_references_give_flat_dc() {
        let f = Frame::filled(16, 16, 77).unwrap();
        let p = predict_intra(&f, &BlockRegion::new(8, 8, 8, 8), IntraMode::Dc);
        assert!(p.iter().all(|&v| v == 77));
    }

    #[test]
    fn horizontal_copies_left_column() {
        let f = Frame::from_fn(8, 8, |x, y| (x * 3 + y * 10) as u8).unwrap();
        let p = predict_intra(&f, &BlockRegion::new(4, 2, 4, 4), IntraMode::Horizontal);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(p[y * 4 + x], f.get(3, y as u32 + 2));
            }
        }
    }

    #[test]
    fn vertical_copies_top_row() {
        let f = Frame::from_fn(8, 8, |x, y| (x * 3 + y * 10) as u8).unwrap();
        let p = predict_intra(&f, &BlockRegion::new(4, 4, 4, 4), IntraMode::Vertical);
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(p[y * 4 + x], f.get(x as u32 + 4, 3));
            }
        }
    }

    #[test]
    fn origin_block_is_mid_grey_for_every_mode() {
        let f = Frame::from_fn(8, 8, |x, y| (x * 31 + y) as u8).unwrap();
        for mode in IntraMode::ALL {
            let p = predict_intra(&f, &BlockRegion::new(0, 0, 4, 4), mode);
            assert!(p.iter().all(|&v| v == 128), "{mode:?}");
        }
    }

    #[test]
    fn dc_single_side() {
        let top = [10u8, 20, 30, 40];
        let p = predict_from_references(Some(&top), None, 4, 4, IntraMode::Dc);
        assert!(p.iter().all(|&v| v == 25));
        let p = predict_from_references(None, Some(&top), 4, 4, IntraMode::Dc);
        assert!(p.iter().all(|&v| v == 25));
    }

    #[test]
    fn planar_blends_corners() {
        let p = predict_from_references(Some(&[100; 4]), Some(&[100; 4]), 4, 4, IntraMode::Planar);
        assert!(p.iter().all(|&v| v == 100));
        // top ramps to 200 at the right end, left is 0: the last column leans on 200.
        let top = [0u8, 0, 0, 200];
        let left = [0u8; 4];
        let p = predict_from_references(Some(&top), Some(&left), 4, 4, IntraMode::Planar);
        // x = 3, y = 0: hor = 4·200 = 800, ver = 3·200 + 0 = 600 → (3200 + 2400 + 16)/32 = 175
        assert_eq!(p[3], 175);
        // x = 0, y = 0: hor = 200, ver = 0 → (800 + 16)/32 = 25
        assert_eq!(p[0], 25);
    }

    #[test]
    fn mode_index_round_trip() {
        for m in IntraMode::ALL {
            assert_eq!(IntraMode::from_index(m.index()), Some(m));
        }
        assert_eq!(IntraMode::from_index(4), None);
    }
}
