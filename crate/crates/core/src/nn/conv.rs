//! Valid (no padding, stride 1) 2-D convolution lowered to GEMM via im2col.
//!
//! The kernel is applied as a cross-correlation: output `(o, y, x)` is
//! `bias[o] + Σ_{c,dy,dx} kernels[o,c,dy,dx] * input[c, y+dy, x+dx]`.

use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor, Transpose};

/// One convolution layer together with the max-pool window that follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage<T = f32> {
    /// `[out_maps, in_maps, k, k]`
    pub kernels: Tensor<T>,
    pub bias: Vec<T>,
    pub pool_window: usize,
}

impl<T: Real> ConvStage<T> {
    pub fn zeros(out_maps: usize, in_maps: usize, k: usize, pool_window: usize) -> Self {
        ConvStage {
            kernels: Tensor::zeros(&[out_maps, in_maps, k, k]),
            bias: vec![T::zero(); out_maps],
            pool_window,
        }
    }

    pub fn out_maps(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn validate(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let ks = self.kernels.shape();
        if ks.len() != 4 || ks[2] != ks[3] || self.bias.len() != ks[0] {
            return Err(Error::InvalidArgument(format!(
                "malformed conv stage: kernels {:?}, bias length {}",
                ks,
                self.bias.len()
            )));
        }
        let is = input.shape();
        let k = ks[2];
        if is.len() != 3 || is[0] != ks[1] || is[1] < k || is[2] < k {
            return Err(Error::ShapeMismatch {
                op: "conv_forward (input [c,h,w] vs kernels [o,c,k,k])",
                expected: ks.to_vec(),
                actual: is.to_vec(),
            });
        }
        Ok((is[0], is[1], is[2]))
    }
}

/// Gradients produced by [`conv_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub kernels: Tensor<T>,
    pub bias: Vec<T>,
    pub input: Option<Tensor<T>>,
}

/// Unfolds every `k×k` patch of `input` into a column of a
/// `[c*k*k, oh*ow]` matrix.
fn im2col<T: Real>(input: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let plane = oh * ow;
    let mut cols = vec![T::zero(); c * k * k * plane];
    for ci in 0..c {
        let src = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let s = (oy + ky) * w + kx;
                    dst[oy * ow..(oy + 1) * ow].copy_from_slice(&src[s..s + ow]);
                }
            }
        }
    }
    cols
}

/// Inverse of [`im2col`]: scatters columns back, summing overlaps.
fn col2im<T: Real>(cols: &[T], c: usize, h: usize, w: usize, k: usize) -> Vec<T> {
    let (oh, ow) = (h - k + 1, w - k + 1);
    let plane = oh * ow;
    let mut out = vec![T::zero(); c * h * w];
    for ci in 0..c {
        let dst = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                for oy in 0..oh {
                    let d = (oy + ky) * w + kx;
                    for (o, &v) in dst[d..d + ow].iter_mut().zip(&src[oy * ow..(oy + 1) * ow]) {
                        *o += v;
                    }
                }
            }
        }
    }
    out
}

/// Forward convolution of a `[c,h,w]` input; returns `[out_maps, h-k+1, w-k+1]`.
pub fn conv_forward<T: Real>(input: &Tensor<T>, stage: &ConvStage<T>) -> Result<Tensor<T>> {
    let (c, h, w) = stage.validate(input)?;
    let k = stage.kernel_size();
    let o = stage.out_maps();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let plane = oh * ow;
    let cols = im2col(input.data(), c, h, w, k);

    let mut out = Vec::with_capacity(o * plane);
    for &b in &stage.bias {
        out.extend(std::iter::repeat_n(b, plane));
    }
    gemm(
        Transpose::No,
        Transpose::No,
        o,
        c * k * k,
        plane,
        T::one(),
        stage.kernels.data(),
        &cols,
        T::one(),
        &mut out,
    );
    Tensor::from_vec(&[o, oh, ow], out)
}

/// Backward pass of [`conv_forward`] given the gradient w.r.t. its output.
///
/// The input gradient is only formed when `want_input_grad` is set; the
/// first layer of a network never needs it during training.
pub fn conv_backward<T: Real>(
    input: &Tensor<T>,
    stage: &ConvStage<T>,
    grad_out: &Tensor<T>,
    want_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let (c, h, w) = stage.validate(input)?;
    let k = stage.kernel_size();
    let o = stage.out_maps();
    let (oh, ow) = (h - k + 1, w - k + 1);
    grad_out.expect_shape("conv_backward (upstream gradient)", &[o, oh, ow])?;
    let plane = oh * ow;
    let ckk = c * k * k;
    let cols = im2col(input.data(), c, h, w, k);
    let g = grad_out.data();

    let bias: Vec<T> = g
        .chunks_exact(plane)
        .map(|row| row.iter().copied().sum())
        .collect();

    let mut dk = vec![T::zero(); o * ckk];
    gemm(
        Transpose::No,
        Transpose::Yes,
        o,
        plane,
        ckk,
        T::one(),
        g,
        &cols,
        T::zero(),
        &mut dk,
    );

    let input_grad = if want_input_grad {
        let mut dcols = cols;
        gemm(
            Transpose::Yes,
            Transpose::No,
            ckk,
            o,
            plane,
            T::one(),
            stage.kernels.data(),
            g,
            T::zero(),
            &mut dcols,
        );
        Some(Tensor::from_vec(&[c, h, w], col2im(&dcols, c, h, w, k))?)
    } else {
        None
    };

    Ok(ConvGrads {
        kernels: Tensor::from_vec(stage.kernels.shape(), dk)?,
        bias,
        input: input_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Quadruple-loop reference, written independently of the im2col path.
    fn naive_conv(input: &Tensor<f64>, stage: &ConvStage<f64>) -> Tensor<f64> {
        let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (o, k) = (stage.out_maps(), stage.kernel_size());
        let (oh, ow) = (h - k + 1, w - k + 1);
        let mut out = Tensor::zeros(&[o, oh, ow]);
        let x = input.data();
        let kw = stage.kernels.data();
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = stage.bias[oc];
                    for ic in 0..c {
                        for dy in 0..k {
                            for dx in 0..k {
                                acc += kw[((oc * c + ic) * k + dy) * k + dx]
                                    * x[(ic * h + y + dy) * w + xx + dx];
                            }
                        }
                    }
                    out.data_mut()[(oc * oh + y) * ow + xx] = acc;
                }
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_input_yields_bias() {
        let mut stage = ConvStage::<f32>::zeros(1, 1, 3, 1);
        stage.kernels.data_mut().iter_mut().for_each(|v| *v = 0.7);
        stage.bias[0] = 0.25;
        let out = conv_forward(&Tensor::zeros(&[1, 3, 3]), &stage).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[0.25]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let mut stage = ConvStage::<f32>::zeros(1, 1, 1, 1);
        stage.kernels.data_mut()[0] = 1.0;
        let input = Tensor::from_vec(&[1, 3, 3], (0..9).map(|v| v as f32).collect()).unwrap();
        let out = conv_forward(&input, &stage).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn matches_naive_on_5x5_two_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor(&mut rng, &[1, 5, 5]);
        let stage = ConvStage {
            kernels: random_tensor(&mut rng, &[2, 1, 3, 3]),
            bias: vec![0.3, -0.1],
            pool_window: 1,
        };
        let fast = conv_forward(&input, &stage).unwrap();
        let slow = naive_conv(&input, &stage);
        assert_eq!(fast.shape(), &[2, 3, 3]);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn f32_kernel_matches_naive_on_varied_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for size in [5usize, 9, 17, 30] {
            let c = rng.random_range(1..4);
            let k = rng.random_range(1..=size.min(7));
            let input = random_tensor(&mut rng, &[c, size, size]);
            let stage = ConvStage {
                kernels: random_tensor(&mut rng, &[3, c, k, k]),
                bias: vec![0.1, 0.0, -0.2],
                pool_window: 1,
            };
            let slow = naive_conv(&input, &stage);
            let fast = conv_forward(
                &input.cast::<f32>(),
                &ConvStage {
                    kernels: stage.kernels.cast(),
                    bias: stage.bias.iter().map(|&b| b as f32).collect(),
                    pool_window: 1,
                },
            )
            .unwrap();
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((*a as f64 - b).abs() < 1e-5, "size {size}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_naming_both_shapes() {
        let stage = ConvStage::<f32>::zeros(2, 3, 3, 1);
        let err = conv_forward(&Tensor::zeros(&[1, 5, 5]), &stage).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("[2, 3, 3, 3]") && msg.contains("[1, 5, 5]"),
            "{msg}"
        );
    }

    #[test]
    fn rejects_input_smaller_than_kernel() {
        let stage = ConvStage::<f32>::zeros(1, 1, 5, 1);
        assert!(conv_forward(&Tensor::zeros(&[1, 4, 8]), &stage).is_err());
    }
}
