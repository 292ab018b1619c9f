use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Winning input offset for every pooled cell, kept for routing gradients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgmaxMask {
    input_shape: Vec<usize>,
    indices: Vec<usize>,
}

impl ArgmaxMask {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Flat offsets into the pooled input, one per output cell.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Non-overlapping `p×p` max pooling over a `[c,h,w]` tensor.
///
/// Ties go to the first element in row-major window order.
pub fn maxpool_forward<T: Real>(input: &Tensor<T>, p: usize) -> Result<(Tensor<T>, ArgmaxMask)> {
    let s = input.shape();
    if s.len() != 3 || p == 0 || !s[1].is_multiple_of(p) || !s[2].is_multiple_of(p) {
        return Err(Error::InvalidArgument(format!(
            "max pool window {p} does not tile input of shape {s:?}"
        )));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    let (oh, ow) = (h / p, w / p);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut indices = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        let base = ci * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * p * w + ox * p;
                let mut best_v = x[best];
                for dy in 0..p {
                    let row = base + (oy * p + dy) * w + ox * p;
                    for (dx, &v) in x[row..row + p].iter().enumerate() {
                        if v > best_v {
                            best_v = v;
                            best = row + dx;
                        }
                    }
                }
                out.push(best_v);
                indices.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c, oh, ow], out)?,
        ArgmaxMask {
            input_shape: s.to_vec(),
            indices,
        },
    ))
}

/// Routes each pooled gradient back to the input position that won its window.
pub fn maxpool_backward<T: Real>(grad_out: &Tensor<T>, mask: &ArgmaxMask) -> Result<Tensor<T>> {
    if grad_out.len() != mask.indices.len() {
        return Err(Error::ShapeMismatch {
            op: "maxpool_backward",
            expected: vec![mask.indices.len()],
            actual: grad_out.shape().to_vec(),
        });
    }
    let mut grad_in = Tensor::zeros(&mask.input_shape);
    let gi = grad_in.data_mut();
    for (&idx, &g) in mask.indices.iter().zip(grad_out.data()) {
        gi[idx] += g;
    }
    Ok(grad_in)
}
