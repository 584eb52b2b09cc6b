use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient of `relu` given its input `x`.
pub fn relu_backward(x: &Tensor, upstream: &Tensor) -> Tensor {
    let mut d = upstream.clone();
    for (g, v) in d.data_mut().iter_mut().zip(x.data()) {
        if *v <= 0.0 {
            *g = 0.0;
        }
    }
    d
}

/// 2x2 stride-2 max pooling; returns the output and the flat argmax per output cell.
///
/// Ties resolve to the first cell of the window in row-major order.
pub fn max_pool2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = dims(x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::InvalidInput(format!("cannot pool an odd {h}x{w} map")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, ho, wo]);
    let mut argmax = vec![0usize; c * ho * wo];
    for ch in 0..c {
        let src = x.channel(ch);
        for i in 0..ho {
            for j in 0..wo {
                let mut best = (2 * i) * w + 2 * j;
                for idx in [(2 * i) * w + 2 * j + 1, (2 * i + 1) * w + 2 * j, (2 * i + 1) * w + 2 * j + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.channel_mut(ch)[i * wo + j] = src[best];
                argmax[(ch * ho + i) * wo + j] = ch * h * w + best;
            }
        }
    }
    Ok((out, argmax))
}

pub fn max_pool2_backward(input_shape: &[usize], argmax: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if upstream.len() != argmax.len() {
        return Err(Error::ShapeMismatch { expected: vec![argmax.len()], got: upstream.shape().to_vec() });
    }
    let mut d = Tensor::zeros(input_shape);
    for (g, idx) in upstream.data().iter().zip(argmax) {
        d.data_mut()[*idx] += g;
    }
    Ok(d)
}

/// Remove `margin` cells from every spatial border.
pub fn crop(x: &Tensor, margin: usize) -> Result<Tensor> {
    let (c, h, w) = dims(x)?;
    if 2 * margin >= h || 2 * margin >= w {
        return Err(Error::InvalidInput(format!("cannot crop {margin} from a {h}x{w} map")));
    }
    let (ho, wo) = (h - 2 * margin, w - 2 * margin);
    let mut out = Tensor::zeros(&[c, ho, wo]);
    for ch in 0..c {
        let src = x.channel(ch);
        let dst = out.channel_mut(ch);
        for i in 0..ho {
            dst[i * wo..(i + 1) * wo].copy_from_slice(&src[(i + margin) * w + margin..(i + margin) * w + margin + wo]);
        }
    }
    Ok(out)
}

pub fn crop_backward(input_shape: &[usize], margin: usize, upstream: &Tensor) -> Tensor {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (ho, wo) = (h - 2 * margin, w - 2 * margin);
    let mut d = Tensor::zeros(input_shape);
    for ch in 0..c {
        let src = upstream.channel(ch);
        let dst = d.channel_mut(ch);
        for i in 0..ho {
            dst[(i + margin) * w + margin..(i + margin) * w + margin + wo].copy_from_slice(&src[i * wo..(i + 1) * wo]);
        }
    }
    d
}

pub(crate) fn dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [c, h, w] => Ok((*c, *h, *w)),
        other => Err(Error::ShapeMismatch { expected: vec![0, 0, 0], got: other.to_vec() }),
    }
}
