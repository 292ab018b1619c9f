//! The fixed feature network: three conv + ReLU + max-pool stages followed by
//! one linear map from 2304 pooled features to a 64-d embedding.
//!
//! ```text
//! 1×100×100 ─conv 13─▶ 32×88×88 ─pool 4─▶ 32×22×22
//!           ─conv 7──▶ 64×16×16 ─pool 2─▶ 64×8×8
//!           ─conv 3──▶ 256×6×6  ─pool 2─▶ 256×3×3 ─flatten─▶ 2304 ─linear─▶ 64
//! ```

use rand::Rng;

use super::activation::{relu, relu_backward};
use super::conv::{conv_backward, conv_forward, ConvStage};
use super::linear::{linear_backward, linear_forward, LinearStage};
use super::pool::{maxpool_backward, maxpool_forward, ArgmaxMask};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const INPUT_SIZE: usize = 100;
pub const FEATURE_DIM: usize = 64;
pub const FLAT_DIM: usize = 2304;

/// `(out_maps, kernel, pool)` per conv stage.
pub const CONV_LAYOUT: [(usize, usize, usize); 3] = [(32, 13, 4), (64, 7, 2), (256, 3, 2)];

/// Pooled map shapes after each stage for a 100×100 input.
pub const STAGE_SHAPES: [[usize; 3]; 3] = [[32, 22, 22], [64, 8, 8], [256, 3, 3]];

/// Parameters of one domain network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub conv: [ConvStage<T>; 3],
    pub linear: LinearStage<T>,
}

/// Borrowed view of one named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamRef<'a, T> {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

const PARAM_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "conv3.weight",
    "conv3.bias",
    "linear.weight",
    "linear.bias",
];

impl<T: Real> NetworkParams<T> {
    pub fn zeros() -> Self {
        let mut in_maps = 1;
        let conv = CONV_LAYOUT.map(|(out, k, p)| {
            let stage = ConvStage::zeros(out, in_maps, k, p);
            in_maps = out;
            stage
        });
        NetworkParams {
            conv,
            linear: LinearStage::zeros(FEATURE_DIM, FLAT_DIM),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut params = Self::zeros();
        for stage in &mut params.conv {
            let k2 = stage.kernel_size() * stage.kernel_size();
            let fan_in = stage.in_maps() * k2;
            let fan_out = stage.out_maps() * k2;
            fill_uniform(rng, stage.kernels.data_mut(), fan_in, fan_out);
        }
        fill_uniform(rng, params.linear.weights.data_mut(), FLAT_DIM, FEATURE_DIM);
        params
    }

    /// Named parameter tensors in checkpoint order.
    pub fn params(&self) -> [ParamRef<'_, T>; 8] {
        let [c1, c2, c3] = &self.conv;
        let l = &self.linear;
        [
            weight(PARAM_NAMES[0], &c1.kernels),
            bias(PARAM_NAMES[1], &c1.bias),
            weight(PARAM_NAMES[2], &c2.kernels),
            bias(PARAM_NAMES[3], &c2.bias),
            weight(PARAM_NAMES[4], &c3.kernels),
            bias(PARAM_NAMES[5], &c3.bias),
            weight(PARAM_NAMES[6], &l.weights),
            bias(PARAM_NAMES[7], &l.bias),
        ]
    }

    /// Mutable parameter slices in the same order as [`params`](Self::params).
    pub fn params_mut(&mut self) -> [&mut [T]; 8] {
        let [c1, c2, c3] = &mut self.conv;
        [
            c1.kernels.data_mut(),
            &mut c1.bias,
            c2.kernels.data_mut(),
            &mut c2.bias,
            c3.kernels.data_mut(),
            &mut c3.bias,
            self.linear.weights.data_mut(),
            &mut self.linear.bias,
        ]
    }

    pub fn param_names() -> [&'static str; 8] {
        PARAM_NAMES
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.data.len()).sum()
    }

    /// `self += other`, parameter by parameter.
    pub fn add_assign(&mut self, other: &NetworkParams<T>) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            for (d, &s) in dst.iter_mut().zip(src.data) {
                *d += s;
            }
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &NetworkParams<T>, scale: T) {
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            for (d, &s) in dst.iter_mut().zip(src.data) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for dst in self.params_mut() {
            dst.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        let conv_cast = |s: &ConvStage<T>| ConvStage {
            kernels: s.kernels.cast(),
            bias: s.bias.iter().map(|v| U::lit(v.as_f64())).collect(),
            pool_window: s.pool_window,
        };
        NetworkParams {
            conv: [
                conv_cast(&self.conv[0]),
                conv_cast(&self.conv[1]),
                conv_cast(&self.conv[2]),
            ],
            linear: LinearStage {
                weights: self.linear.weights.cast(),
                bias: self
                    .linear
                    .bias
                    .iter()
                    .map(|v| U::lit(v.as_f64()))
                    .collect(),
            },
        }
    }

    /// Checks that every tensor has the fixed architecture's shape.
    pub fn validate(&self) -> Result<()> {
        let reference = NetworkParams::<T>::zeros();
        for (p, r) in self.params().iter().zip(reference.params()) {
            if p.shape != r.shape || p.data.len() != r.data.len() {
                return Err(Error::ShapeMismatch {
                    op: p.name,
                    expected: r.shape.clone(),
                    actual: p.shape.clone(),
                });
            }
        }
        for (stage, &(_, _, pool)) in self.conv.iter().zip(&CONV_LAYOUT) {
            if stage.pool_window != pool {
                return Err(Error::InvalidArgument(format!(
                    "pool window {} where the architecture requires {pool}",
                    stage.pool_window
                )));
            }
        }
        Ok(())
    }

    /// Embeds one `[1,100,100]` image.
    pub fn forward(&self, image: &Tensor<T>) -> Result<Vec<T>> {
        image.expect_shape("net_forward input", &[1, INPUT_SIZE, INPUT_SIZE])?;
        let mut x = image.clone();
        for (stage, expected) in self.conv.iter().zip(&STAGE_SHAPES) {
            let act = relu(&conv_forward(&x, stage)?);
            let (pooled, _) = maxpool_forward(&act, stage.pool_window)?;
            pooled.expect_shape("net_forward stage output", expected)?;
            x = pooled;
        }
        linear_forward(x.data(), &self.linear)
    }

    /// Forward pass that keeps every activation needed by [`backward`](Self::backward).
    pub fn forward_trace(&self, image: &Tensor<T>) -> Result<ForwardTrace<T>> {
        image.expect_shape("net_forward input", &[1, INPUT_SIZE, INPUT_SIZE])?;
        let mut stages = Vec::with_capacity(3);
        let mut x = image.clone();
        for (stage, expected) in self.conv.iter().zip(&STAGE_SHAPES) {
            let pre_act = conv_forward(&x, stage)?;
            let (pooled, mask) = maxpool_forward(&relu(&pre_act), stage.pool_window)?;
            pooled.expect_shape("net_forward stage output", expected)?;
            stages.push(StageTrace {
                input: std::mem::replace(&mut x, pooled),
                pre_act,
                mask,
            });
        }
        let features = linear_forward(x.data(), &self.linear)?;
        Ok(ForwardTrace {
            stages,
            flat: x,
            features,
        })
    }

    /// Exact gradients of `upstream · f(image)` w.r.t. every parameter, and
    /// optionally w.r.t. the input image.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        upstream: &[T],
        want_input_grad: bool,
    ) -> Result<ParamGrads<T>> {
        if trace.stages.len() != 3 {
            return Err(Error::MissingForwardState(format!(
                "trace holds {} of 3 conv stages",
                trace.stages.len()
            )));
        }
        if upstream.len() != FEATURE_DIM {
            return Err(Error::ShapeMismatch {
                op: "net_backward upstream",
                expected: vec![FEATURE_DIM],
                actual: vec![upstream.len()],
            });
        }
        let mut grads = NetworkParams::zeros();
        let lin = linear_backward(trace.flat.data(), &self.linear, upstream)?;
        grads.linear.weights = lin.weights;
        grads.linear.bias = lin.bias;

        let mut g = Tensor::from_vec(trace.flat.shape(), lin.input)?;
        let mut input_grad = None;
        for (i, (stage, st)) in self.conv.iter().zip(&trace.stages).enumerate().rev() {
            let g_act = maxpool_backward(&g, &st.mask)?;
            let g_pre = relu_backward(&st.pre_act, &g_act)?;
            let need_input = i > 0 || want_input_grad;
            let cg = conv_backward(&st.input, stage, &g_pre, need_input)?;
            grads.conv[i].kernels = cg.kernels;
            grads.conv[i].bias = cg.bias;
            if let Some(gi) = cg.input {
                if i > 0 {
                    g = gi;
                } else {
                    input_grad = Some(gi);
                }
            }
        }
        Ok(ParamGrads {
            params: grads,
            input: input_grad,
        })
    }
}

fn weight<'a, T: Real>(name: &'static str, t: &'a Tensor<T>) -> ParamRef<'a, T> {
    ParamRef {
        name,
        shape: t.shape().to_vec(),
        data: t.data(),
    }
}

fn bias<'a, T>(name: &'static str, b: &'a [T]) -> ParamRef<'a, T> {
    ParamRef {
        name,
        shape: vec![b.len()],
        data: b,
    }
}

fn fill_uniform<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    data: &mut [T],
    fan_in: usize,
    fan_out: usize,
) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in data {
        *v = T::lit(rng.random_range(-a..a));
    }
}

/// Activations of one conv stage kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StageTrace<T> {
    pub input: Tensor<T>,
    pub pre_act: Tensor<T>,
    pub mask: ArgmaxMask,
}

/// Stored state of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T = f32> {
    stages: Vec<StageTrace<T>>,
    flat: Tensor<T>,
    features: Vec<T>,
}

impl<T: Real> ForwardTrace<T> {
    pub fn features(&self) -> &[T] {
        &self.features
    }

    /// Pooled output shape of each conv stage.
    pub fn stage_shapes(&self) -> Vec<Vec<usize>> {
        self.stages
            .iter()
            .skip(1)
            .map(|s| s.input.shape().to_vec())
            .chain(std::iter::once(self.flat.shape().to_vec()))
            .collect()
    }

    pub fn stages(&self) -> &[StageTrace<T>] {
        &self.stages
    }
}

/// Parameter gradients of one network, plus the input gradient if requested.
#[derive(Debug, Clone)]
pub struct ParamGrads<T = f32> {
    pub params: NetworkParams<T>,
    pub input: Option<Tensor<T>>,
}
