//! Image-to-tensor preprocessing shared with the training side.
//!
//! Direct bilinear resize (half-pixel centres, no antialiasing, source
//! coordinates clamped at the border), scaling to [0, 1], then per-channel
//! standardization. This matches `torch.nn.functional.interpolate(...,
//! mode="bilinear", align_corners=False, antialias=False)` followed by
//! `(x - mean) / std`.

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSpec {
    pub width: u32,
    pub height: u32,
    /// Per-channel mean, in RGB order.
    pub mean: [f32; 3],
    /// Per-channel standard deviation, in RGB order.
    pub std: [f32; 3],
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        Self {
            width: 224,
            height: 224,
            mean: [0.485, 0.456, 0.406],
            std: [0.229, 0.224, 0.225],
        }
    }
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("preprocess size must be positive".into()));
        }
        if self.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidConfig("preprocess std must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn shape(&self) -> [usize; 3] {
        [3, self.height as usize, self.width as usize]
    }
}

/// Channel-major (C x H x W) float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub shape: [usize; 3],
    pub data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 3]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }
}

/// Source sample positions and weights along one axis.
///
/// Computed in f32 with a fused multiply-add, so the weights carry exactly
/// the rounding of the reference resize.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f32)> {
    let scale = input as f32 / output as f32;
    (0..output)
        .map(|dst| {
            let src = scale.mul_add(dst as f32 + 0.5, -0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f32)
        })
        .collect()
}

pub fn preprocess_image(image: &DynamicImage, spec: &PreprocessSpec) -> Result<ImageTensor> {
    spec.validate()?;
    let rgb = image.to_rgb8();
    let (in_w, in_h) = rgb.dimensions();
    if in_w == 0 || in_h == 0 {
        return Err(Error::ImageDecode {
            path: "<memory>".into(),
            message: "empty image".into(),
        });
    }
    let (out_w, out_h) = (spec.width as usize, spec.height as usize);
    let xs = axis_taps(in_w as usize, out_w);
    let ys = axis_taps(in_h as usize, out_h);
    let raw = rgb.as_raw();
    let px = |x: usize, y: usize, c: usize| raw[(y * in_w as usize + x) * 3 + c] as f32 / 255.0;

    let mut data = vec![0.0f32; 3 * out_h * out_w];
    for c in 0..3 {
        let mean = spec.mean[c] as f32;
        let std = spec.std[c] as f32;
        for (oy, &(y0, y1, ly)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, lx)) in xs.iter().enumerate() {
                let top = (1.0 - lx) * px(x0, y0, c) + lx * px(x1, y0, c);
                let bottom = (1.0 - lx) * px(x0, y1, c) + lx * px(x1, y1, c);
                let v = (1.0 - ly) * top + ly * bottom;
                data[(c * out_h + oy) * out_w + ox] = (v - mean) / std;
            }
        }
    }
    ImageTensor::new(spec.shape(), data)
}

pub fn preprocess_path(path: &std::path::Path, spec: &PreprocessSpec) -> Result<ImageTensor> {
    preprocess_image(&crate::crop::open_image(path)?, spec)
}
