use super::image::GrayImage;
use crate::error::{Error, Result};
use crate::nn::INPUT_SIZE;
use crate::tensor::Tensor;

/// Side of the square the ink bounding box is fitted into.
pub const ACTIVE_SIZE: usize = 90;

/// Scales the ink bounding box (aspect preserved) into a centered 90×90
/// square on a blank 100×100 canvas and returns it as a `[1,100,100]` tensor.
///
/// Resampling is bilinear. When shrinking, each output pixel averages a
/// grid of bilinear samples over its footprint so thin strokes survive.
pub fn preprocess(img: &GrayImage) -> Result<Tensor<f32>> {
    let (x0, y0, x1, y1) = img.ink_bounds().ok_or(Error::BlankImage)?;
    let bw = (x1 - x0 + 1) as f64;
    let bh = (y1 - y0 + 1) as f64;
    let scale = ACTIVE_SIZE as f64 / bw.max(bh);
    let canvas = INPUT_SIZE as f64;
    let ox = (canvas - bw * scale) / 2.0;
    let oy = (canvas - bh * scale) / 2.0;
    let n = (1.0 / scale).ceil().max(1.0) as usize;
    let inv_n = 1.0 / n as f64;
    let weight = 1.0 / (n * n) as f32;

    let mut out = vec![0.0f32; INPUT_SIZE * INPUT_SIZE];
    for v in 0..INPUT_SIZE {
        for u in 0..INPUT_SIZE {
            let mut acc = 0.0;
            for sy in 0..n {
                let cy = v as f64 + (sy as f64 + 0.5) * inv_n;
                let src_y = y0 as f64 + (cy - oy) / scale - 0.5;
                for sx in 0..n {
                    let cx = u as f64 + (sx as f64 + 0.5) * inv_n;
                    let src_x = x0 as f64 + (cx - ox) / scale - 0.5;
                    acc += img.sample_bilinear(src_x, src_y);
                }
            }
            out[v * INPUT_SIZE + u] = (acc * weight).clamp(0.0, 1.0);
        }
    }
    Tensor::from_vec(&[1, INPUT_SIZE, INPUT_SIZE], out)
}
