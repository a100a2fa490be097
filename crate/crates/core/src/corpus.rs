//! Deterministic synthetic test images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{BlockRegion, Frame};

/// Photograph-like content: octave value noise whose amplitude grows with
/// scale, a handful of flat-shaded rectangles and discs with soft texture, and
/// mild sensor noise. Equal seeds give equal images.
pub fn synthetic_image(seed: u64, width: u32, height: u32) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = rng.random_range(70.0..180.0);
    let contrast = rng.random_range(0.5..1.5);
    let mut plane = vec![base; (width * height) as usize];
    for cell in [64u32, 32, 16, 8, 4] {
        let amp = contrast * 0.8 * cell as f64;
        let layer = value_noise(&mut rng, width, height, cell);
        for (p, v) in plane.iter_mut().zip(layer) {
            *p += amp * v;
        }
    }
    let (w, h) = (width as f64, height as f64);
    for _ in 0..rng.random_range(2..7) {
        let shape = Shape::random(&mut rng, w, h);
        let grain = value_noise(&mut rng, width, height, 4);
        for y in 0..height {
            for x in 0..width {
                if shape.contains(x as f64, y as f64) {
                    let i = (y * width + x) as usize;
                    plane[i] = shape.level + shape.texture * grain[i];
                }
            }
        }
    }
    let noise = rng.random_range(0.0..2.5);
    Frame::from_fn(width, height, |x, y| {
        let n = (rng.random::<f64>() - 0.5) * 2.0 * noise;
        (plane[(y * width + x) as usize] + n).round().clamp(0.0, 255.0) as u8
    })
    .expect("non-empty synthetic frame")
}

/// Bilinearly interpolated uniform noise in [-0.5, 0.5] on a `cell`-pixel lattice.
fn value_noise(rng: &mut ChaCha8Rng, width: u32, height: u32, cell: u32) -> Vec<f64> {
    let gw = (width / cell + 2) as usize;
    let gh = (height / cell + 2) as usize;
    let lattice: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>() - 0.5).collect();
    let c = cell as f64;
    let mut out = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        let fy = y as f64 / c;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for x in 0..width {
            let fx = x as f64 / c;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let at = |i: usize, j: usize| lattice[j * gw + i];
            let top = at(x0, y0) * (1.0 - tx) + at(x0 + 1, y0) * tx;
            let bottom = at(x0, y0 + 1) * (1.0 - tx) + at(x0 + 1, y0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

struct Shape {
    disc: bool,
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    level: f64,
    texture: f64,
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Self {
        Shape {
            disc: rng.random(),
            cx: rng.random_range(0.0..w),
            cy: rng.random_range(0.0..h),
            rx: rng.random_range(0.05..0.25) * w,
            ry: rng.random_range(0.05..0.25) * h,
            level: rng.random_range(20.0..235.0),
            texture: rng.random_range(0.0..30.0),
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - self.cx) / self.rx, (y - self.cy) / self.ry);
        if self.disc {
            dx * dx + dy * dy <= 1.0
        } else {
            dx.abs() <= 1.0 && dy.abs() <= 1.0
        }
    }
}

/// Plain textured background with one object centred in the frame; returns
/// the frame and the object's bounding box.
pub fn centered_object_scene(seed: u64, width: u32, height: u32, box_w: u32, box_h: u32) -> (Frame, BlockRegion) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let background = synthetic_image(seed, width, height);
    let bx = BlockRegion::new(
        ((width - box_w) / 2) as i64,
        ((height - box_h) / 2) as i64,
        box_w,
        box_h,
    );
    let level = rng.random_range(40.0..215.0);
    let (fx, fy) = (rng.random_range(2.0..6.0), rng.random_range(2.0..6.0));
    let mut frame = background;
    for y in 0..box_h {
        for x in 0..box_w {
            let (u, v) = (x as f64 / box_w as f64, y as f64 / box_h as f64);
            let checker = if ((u * fx) as i64 + (v * fy) as i64) % 2 == 0 { 30.0 } else { -30.0 };
            let ring = 20.0 * ((u - 0.5).hypot(v - 0.5) * 25.0).sin();
            let px = bx.x as u32 + x;
            let py = bx.y as u32 + y;
            frame.set(px, py, (level + checker + ring).round().clamp(0.0, 255.0) as u8);
        }
    }
    (frame, bx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(synthetic_image(4, 64, 48), synthetic_image(4, 64, 48));
        assert_ne!(synthetic_image(4, 64, 48), synthetic_image(5, 64, 48));
    }

    #[test]
    fn has_texture() {
        let f = synthetic_image(1, 64, 64);
        let min = f.samples().iter().min().unwrap();
        let max = f.samples().iter().max().unwrap();
        assert!(max - min > 20);
    }

    #[test]
    fn object_is_centred() {
        let (_, b) = centered_object_scene(0, 128, 96, 48, 32);
        assert_eq!(b, BlockRegion::new(40, 32, 48, 32));
    }
}
