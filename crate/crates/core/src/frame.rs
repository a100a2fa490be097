//! Luma frames, PGM I/O, CTU partitioning and block geometry.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Allowed CTU edge lengths.
pub const CTU_SIZES: [u32; 4] = [16, 32, 64, 128];

/// An 8-bit single-plane raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Geometry(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize;
        if samples.len() != expected {
            return Err(Error::Geometry(format!(
                "frame {width}x{height} needs {expected} samples, got {}",
                samples.len()
            )));
        }
        Ok(Frame {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Frame::new(width, height, vec![value; width as usize * height as usize])
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Result<Self> {
        let mut samples = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Frame::new(width, height, samples)
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.samples[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.samples[y as usize * self.width as usize + x as usize] = v;
    }

    /// Sample with coordinates clamped into the frame (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }

    pub fn bounds(&self) -> BlockRegion {
        BlockRegion::new(0, 0, self.width, self.height)
    }

    /// Copies `block` into this frame with its top-left corner at (`x`, `y`).
    /// Samples falling outside the frame are dropped.
    pub fn paste(&mut self, block: &Frame, x: i64, y: i64) {
        for by in 0..block.height {
            let fy = y + by as i64;
            if fy < 0 || fy >= self.height as i64 {
                continue;
            }
            for bx in 0..block.width {
                let fx = x + bx as i64;
                if fx < 0 || fx >= self.width as i64 {
                    continue;
                }
                self.set(fx as u32, fy as u32, block.get(bx, by));
            }
        }
    }

    /// Returns a copy extended to `width`×`height` by edge replication.
    pub fn padded_to(&self, width: u32, height: u32) -> Frame {
        let mut samples = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                samples.push(self.get_clamped(x as i64, y as i64));
            }
        }
        Frame {
            width,
            height,
            samples,
        }
    }

    /// Top-left `width`×`height` crop.
    pub fn cropped(&self, width: u32, height: u32) -> Result<Frame> {
        if width > self.width || height > self.height {
            return Err(Error::Geometry(format!(
                "crop {width}x{height} exceeds frame {}x{}",
                self.width, self.height
            )));
        }
        extract_block(self, BlockRegion::new(0, 0, width, height), false)
    }
}

/// Axis-aligned pixel rectangle. The origin may be negative for windows that
/// reach past the top or left frame edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockRegion {
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
}

impl BlockRegion {
    pub const fn new(x: i64, y: i64, w: u32, h: u32) -> Self {
        BlockRegion { x, y, w, h }
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    #[inline]
    pub fn right(&self) -> i64 {
        self.x + self.w as i64
    }

    #[inline]
    pub fn bottom(&self) -> i64 {
        self.y + self.h as i64
    }

    pub fn intersect(&self, other: &BlockRegion) -> Option<BlockRegion> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(BlockRegion::new(x0, y0, (x1 - x0) as u32, (y1 - y0) as u32))
        } else {
            None
        }
    }

    pub fn contains_region(&self, other: &BlockRegion) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    #[inline]
    pub fn contains_point(&self, x: i64, y: i64) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

/// Raster-ordered CTU partition of a frame. Border CTUs are clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtuGrid {
    width: u32,
    height: u32,
    ctu_size: u32,
    cols: u32,
    rows: u32,
}

impl CtuGrid {
    pub fn new(width: u32, height: u32, ctu_size: u32) -> Result<Self> {
        if !CTU_SIZES.contains(&ctu_size) {
            return Err(Error::Geometry(format!(
                "ctu size {ctu_size} not in {CTU_SIZES:?}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::Geometry("empty frame".into()));
        }
        if ctu_size > width && ctu_size > height {
            return Err(Error::Geometry(format!(
                "ctu size {ctu_size} exceeds both frame dimensions {width}x{height}"
            )));
        }
        Ok(CtuGrid {
            width,
            height,
            ctu_size,
            cols: width.div_ceil(ctu_size),
            rows: height.div_ceil(ctu_size),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
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

    pub fn len(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Frame dimensions rounded up to whole CTUs.
    pub fn padded_dims(&self) -> (u32, u32) {
        (self.cols * self.ctu_size, self.rows * self.ctu_size)
    }

    #[inline]
    pub fn position(&self, k: usize) -> (u32, u32) {
        ((k % self.cols as usize) as u32, (k / self.cols as usize) as u32)
    }

    #[inline]
    pub fn index(&self, col: u32, row: u32) -> usize {
        row as usize * self.cols as usize + col as usize
    }

    /// Full (unclipped) CTU square, as coded.
    pub fn coded_region(&self, k: usize) -> BlockRegion {
        let (c, r) = self.position(k);
        BlockRegion::new(
            (c * self.ctu_size) as i64,
            (r * self.ctu_size) as i64,
            self.ctu_size,
            self.ctu_size,
        )
    }

    /// CTU rectangle clipped to the frame.
    pub fn region(&self, k: usize) -> BlockRegion {
        self.coded_region(k)
            .intersect(&BlockRegion::new(0, 0, self.width, self.height))
            .expect("every CTU overlaps the frame")
    }

    pub fn regions(&self) -> impl Iterator<Item = BlockRegion> + '_ {
        (0..self.len()).map(move |k| self.region(k))
    }

    /// 4-neighbours of `k` in order: top, left, right, bottom.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        let (c, r) = self.position(k);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(self.index(c, r - 1));
        }
        if c > 0 {
            out.push(self.index(c - 1, r));
        }
        if c + 1 < self.cols {
            out.push(self.index(c + 1, r));
        }
        if r + 1 < self.rows {
            out.push(self.index(c, r + 1));
        }
        out
    }

    pub fn are_adjacent(&self, i: usize, j: usize) -> bool {
        if i >= self.len() || j >= self.len() {
            return false;
        }
        let (ci, ri) = self.position(i);
        let (cj, rj) = self.position(j);
        (ri == rj && ci.abs_diff(cj) == 1) || (ci == cj && ri.abs_diff(rj) == 1)
    }
}

pub fn partition_ctus(frame: &Frame, ctu_size: u32) -> Result<CtuGrid> {
    CtuGrid::new(frame.width(), frame.height(), ctu_size)
}

/// Copies `region` out of `frame`. With `pad` set, samples outside the frame
/// are filled from the nearest edge sample.
pub fn extract_block(frame: &Frame, region: BlockRegion, pad: bool) -> Result<Frame> {
    if region.area() == 0 {
        return Err(Error::Geometry("zero-area region".into()));
    }
    if !pad && !frame.bounds().contains_region(&region) {
        return Err(Error::Geometry(format!(
            "region {region:?} leaves the {}x{} frame and padding is disabled",
            frame.width(),
            frame.height()
        )));
    }
    let mut samples = Vec::with_capacity(region.area() as usize);
    if frame.bounds().contains_region(&region) {
        let stride = frame.width() as usize;
        for row in 0..region.h as usize {
            let start = (region.y as usize + row) * stride + region.x as usize;
            samples.extend_from_slice(&frame.samples()[start..start + region.w as usize]);
        }
    } else {
        for dy in 0..region.h as i64 {
            for dx in 0..region.w as i64 {
                samples.push(frame.get_clamped(region.x + dx, region.y + dy));
            }
        }
    }
    Frame::new(region.w, region.h, samples)
}

/// Reads a binary PGM (P5) or PPM (P6, converted to BT.601 luma), maxval 255.
pub fn load_image(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn store_image(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(frame)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.samples());
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("bad {what}")))
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::MalformedHeader("missing P magic".into()));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        b'1'..=b'4' | b'7' => {
            return Err(Error::UnsupportedFormat(format!(
                "P{} (only binary P5/P6 are read)",
                bytes[1] as char
            )))
        }
        _ => return Err(Error::MalformedHeader("unknown magic".into())),
    };
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(Error::MalformedHeader("magic not followed by whitespace".into()));
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero dimension".into()));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::MalformedHeader("missing separator after maxval".into()));
    }
    let payload = &bytes[cur.pos + 1..];
    let n = width as usize * height as usize;
    let expected = n * channels;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let samples = if channels == 1 {
        payload[..n].to_vec()
    } else {
        payload[..expected]
            .chunks_exact(3)
            .map(|p| rgb_to_luma(p[0], p[1], p[2]))
            .collect()
    };
    Frame::new(width, height, samples)
}

/// BT.601 luma with round-half-up.
#[inline]
pub fn rgb_to_luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}
