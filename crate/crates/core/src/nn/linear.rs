use crate::error::{Error, Result};
use crate::tensor::{gemm, Real, Tensor, Transpose};

/// Fully connected map `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStage<T = f32> {
    /// `[out, in]`
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct LinearGrads<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub input: Vec<T>,
}

impl<T: Real> LinearStage<T> {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        LinearStage {
            weights: Tensor::zeros(&[outputs, inputs]),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn inputs(&self) -> usize {
        self.weights.shape()[1]
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.inputs() {
            return Err(Error::ShapeMismatch {
                op: "linear_forward",
                expected: vec![self.inputs()],
                actual: vec![input.len()],
            });
        }
        Ok(())
    }
}

pub fn linear_forward<T: Real>(input: &[T], stage: &LinearStage<T>) -> Result<Vec<T>> {
    stage.check_input(input)?;
    let mut out = stage.bias.clone();
    gemm(
        Transpose::No,
        Transpose::No,
        stage.outputs(),
        stage.inputs(),
        1,
        T::one(),
        stage.weights.data(),
        input,
        T::one(),
        &mut out,
    );
    Ok(out)
}

pub fn linear_backward<T: Real>(
    input: &[T],
    stage: &LinearStage<T>,
    upstream: &[T],
) -> Result<LinearGrads<T>> {
    stage.check_input(input)?;
    if upstream.len() != stage.outputs() {
        return Err(Error::ShapeMismatch {
            op: "linear_backward",
            expected: vec![stage.outputs()],
            actual: vec![upstream.len()],
        });
    }
    let (m, n) = (stage.outputs(), stage.inputs());
    let mut dw = vec![T::zero(); m * n];
    for (row, &g) in dw.chunks_exact_mut(n).zip(upstream) {
        for (d, &x) in row.iter_mut().zip(input) {
            *d = g * x;
        }
    }
    let mut dx = vec![T::zero(); n];
    gemm(
        Transpose::Yes,
        Transpose::No,
        n,
        m,
        1,
        T::one(),
        stage.weights.data(),
        upstream,
        T::zero(),
        &mut dx,
    );
    Ok(LinearGrads {
        weights: Tensor::from_vec(&[m, n], dw)?,
        bias: upstream.to_vec(),
        input: dx,
    })
}
