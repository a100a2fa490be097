//! Convolutional feature extraction and cosine feature distance.
//!
//! The extractor is a truncated VGG-11: eight 3×3 convolutions (stride 1,
//! zero padding 1, ReLU) with 2×2 max-pooling after stages 1, 2, 4 and 6, and
//! neither the final pool nor any fully connected layer. Weights either come
//! from a seeded generator or from an FTEN file.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::tensor_file::{load_tensor_file, NamedTensor};

/// Output channels of the eight convolution stages.
pub const VGG11_CHANNELS: [usize; 8] = [64, 128, 256, 256, 512, 512, 512, 512];
/// Stages (0-based) followed by a 2×2 max-pool.
pub const VGG11_POOL_AFTER: [usize; 4] = [0, 1, 3, 5];
/// Smallest patch edge the extractor accepts (four halvings).
pub const MIN_PATCH: u32 = 16;

pub const INPUT_MEAN: f32 = 0.449;
pub const INPUT_STD: f32 = 0.226;

/// Channel-major activation block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Features(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Features("non-finite activation".into()));
        }
        Ok(FeatureTensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        FeatureTensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn scaled(&self, c: f32) -> Self {
        FeatureTensor {
            data: self.data.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Normalised single-channel input tensor for a luma patch.
    pub fn from_patch(patch: &Frame) -> Self {
        let data = patch
            .samples()
            .iter()
            .map(|&s| (s as f32 / 255.0 - INPUT_MEAN) / INPUT_STD)
            .collect();
        FeatureTensor {
            channels: 1,
            height: patch.height() as usize,
            width: patch.width() as usize,
            data,
        }
    }
}

/// `1 - cos(a, b)` over the flattened tensors, in `[0, 2]`.
///
/// Two all-zero tensors are at distance 0; a single all-zero tensor is at
/// distance 1.
pub fn feature_distance(a: &FeatureTensor, b: &FeatureTensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Features(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    match (na == 0.0, nb == 0.0) {
        (true, true) => {
            log::debug!("feature distance of two zero tensors taken as 0");
            Ok(0.0)
        }
        (true, false) | (false, true) => {
            log::debug!("feature distance against a zero tensor taken as 1");
            Ok(1.0)
        }
        _ if a.data == b.data => Ok(0.0),
        _ => Ok((1.0 - dot / (na.sqrt() * nb.sqrt())).clamp(0.0, 2.0)),
    }
}

/// Source of deep features for a luma patch.
pub trait FeatureProvider: Send + Sync {
    fn extract(&self, patch: &Frame) -> Result<FeatureTensor>;

    /// Short label for logs and reports.
    fn name(&self) -> &str;
}

/// Returns an all-zero tensor for every patch, so every feature distance is 0.
/// Turns the combined distortion into a pure MSE criterion.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroFeatures;

impl FeatureProvider for ZeroFeatures {
    fn extract(&self, _patch: &Frame) -> Result<FeatureTensor> {
        Ok(FeatureTensor::zeros(1, 1, 1))
    }

    fn name(&self) -> &str {
        "zero"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × 3 × 3`, row-major.
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Truncated VGG-11 feature extractor.
#[derive(Debug, Clone)]
pub struct Vgg11Features {
    layers: Vec<ConvLayer>,
    label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProviderKind {
    /// Seeded Gaussian weights, He-scaled per filter.
    Builtin { seed: u64 },
    WeightFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureProviderConfig {
    pub kind: ProviderKind,
}

impl Default for FeatureProviderConfig {
    fn default() -> Self {
        FeatureProviderConfig {
            kind: ProviderKind::Builtin { seed: 0 },
        }
    }
}

impl FeatureProviderConfig {
    pub fn build(&self) -> Result<Vgg11Features> {
        match &self.kind {
            ProviderKind::Builtin { seed } => Ok(Vgg11Features::builtin(*seed)),
            ProviderKind::WeightFile(path) => Vgg11Features::from_file(path),
        }
    }
}

impl Vgg11Features {
    pub fn builtin(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(VGG11_CHANNELS.len());
        let mut cin = 1;
        for &cout in &VGG11_CHANNELS {
            let std = (2.0 / (9.0 * cin as f64)).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let weight = (0..cout * cin * 9)
                .map(|_| normal.sample(&mut rng) as f32)
                .collect();
            layers.push(ConvLayer {
                in_channels: cin,
                out_channels: cout,
                weight,
                bias: vec![0.0; cout],
            });
            cin = cout;
        }
        Vgg11Features {
            layers,
            label: format!("vgg11-builtin-{seed}"),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let tensors = load_tensor_file(path)?;
        let mut net = Vgg11Features::from_tensors(&tensors)?;
        net.label = format!("vgg11-file-{}", path.display());
        Ok(net)
    }

    /// Expects `conv1.weight`/`conv1.bias` … `conv8.weight`/`conv8.bias`.
    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::Features(format!("weight file lacks '{name}'")))
        };
        let mut layers = Vec::with_capacity(8);
        let mut cin = 1usize;
        for (i, &cout) in VGG11_CHANNELS.iter().enumerate() {
            let w = find(&format!("conv{}.weight", i + 1))?;
            let b = find(&format!("conv{}.bias", i + 1))?;
            let want = [cout as u32, cin as u32, 3, 3];
            if w.dims != want {
                return Err(Error::Features(format!(
                    "'{}' has dims {:?}, topology needs {want:?}",
                    w.name, w.dims
                )));
            }
            if b.dims != [cout as u32] {
                return Err(Error::Features(format!(
                    "'{}' has dims {:?}, topology needs [{cout}]",
                    b.name, b.dims
                )));
            }
            layers.push(ConvLayer {
                in_channels: cin,
                out_channels: cout,
                weight: w.data.clone(),
                bias: b.data.clone(),
            });
            cin = cout;
        }
        Ok(Vgg11Features {
            layers,
            label: "vgg11-file".into(),
        })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(NamedTensor {
                name: format!("conv{}.weight", i + 1),
                dims: vec![l.out_channels as u32, l.in_channels as u32, 3, 3],
                data: l.weight.clone(),
            });
            out.push(NamedTensor {
                name: format!("conv{}.bias", i + 1),
                dims: vec![l.out_channels as u32],
                data: l.bias.clone(),
            });
        }
        out
    }

    /// Runs the network on a normalised input tensor.
    pub fn forward(&self, input: FeatureTensor) -> FeatureTensor {
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            x = conv3x3_relu(&x, layer);
            if VGG11_POOL_AFTER.contains(&i) {
                x = max_pool2(&x);
            }
        }
        x
    }
}

impl FeatureProvider for Vgg11Features {
    fn extract(&self, patch: &Frame) -> Result<FeatureTensor> {
        if patch.width() < MIN_PATCH || patch.height() < MIN_PATCH {
            return Err(Error::Features(format!(
                "patch {}x{} is below the {MIN_PATCH}x{MIN_PATCH} minimum",
                patch.width(),
                patch.height()
            )));
        }
        Ok(self.forward(FeatureTensor::from_patch(patch)))
    }

    fn name(&self) -> &str {
        &self.label
    }
}

/// 3×3 convolution, stride 1, zero padding 1, followed by ReLU. Lowered to a
/// single GEMM over an im2col buffer.
pub fn conv3x3_relu(input: &FeatureTensor, layer: &ConvLayer) -> FeatureTensor {
    assert_eq!(input.channels, layer.in_channels, "channel mismatch");
    let (h, w) = (input.height, input.width);
    let hw = h * w;
    let k = layer.in_channels * 9;
    let mut cols = vec![0.0f32; k * hw];
    for c in 0..layer.in_channels {
        let plane = &input.data[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    // dst[x] = src[x + kx - 1] where in range
                    match kx {
                        0 => dst[1..].copy_from_slice(&src[..w - 1]),
                        1 => dst.copy_from_slice(src),
                        _ => dst[..w - 1].copy_from_slice(&src[1..]),
                    }
                }
            }
        }
    }
    let m = layer.out_channels;
    let mut out = vec![0.0f32; m * hw];
    for (o, chunk) in out.chunks_exact_mut(hw).enumerate() {
        chunk.fill(layer.bias[o]);
    }
    // SAFETY: all pointers cover the full m×k, k×hw and m×hw row-major
    // matrices described by the strides.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            hw,
            1.0,
            layer.weight.as_ptr(),
            k as isize,
            1,
            cols.as_ptr(),
            hw as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            hw as isize,
            1,
        );
    }
    for v in &mut out {
        *v = v.max(0.0);
    }
    FeatureTensor {
        channels: m,
        height: h,
        width: w,
        data: out,
    }
}

/// 2×2 max-pool, stride 2; odd trailing rows and columns are dropped.
pub fn max_pool2(input: &FeatureTensor) -> FeatureTensor {
    let (c, h, w) = input.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input.data[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let a = plane[2 * y * w + 2 * x];
                let b = plane[2 * y * w + 2 * x + 1];
                let d = plane[(2 * y + 1) * w + 2 * x];
                let e = plane[(2 * y + 1) * w + 2 * x + 1];
                out.push(a.max(b).max(d).max(e));
            }
        }
    }
    FeatureTensor {
        channels: c,
        height: oh,
        width: ow,
        data: out,
    }
}
