//! Layer kernels with hand-written backward passes.
//!
//! Activations are laid out `[batch, ...]`; images are `[batch, channels,
//! height, width]`.

use serde::{Deserialize, Serialize};

use super::flipout::{FlipoutCache, FlipoutDense};
use super::linalg::{matmul, matmul_a_bt, matmul_at_b_acc};
use super::loss::softmax_rows;
use crate::numerics::{PrngStream, Tensor};
use crate::{Error, Result};

/// Architecture description of one layer, without its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Maxpool2d {
        size: usize,
        stride: usize,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    FlipoutDense {
        inputs: usize,
        units: usize,
        prior_std: f64,
    },
    Flatten,
    Relu,
    Softmax,
    Dropout {
        rate: f64,
    },
}

fn conv_out(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (len + 2 * padding)
        .checked_sub(kernel)
        .map(|d| d / stride + 1)
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => Err(Error::invalid(
                format!("dropout rate must lie in [0, 1), got {rate}"),
            )),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 => {
                Err(Error::invalid("conv2d sizes must be positive"))
            }
            LayerSpec::Maxpool2d { size, stride } if size == 0 || stride == 0 => {
                Err(Error::invalid("maxpool sizes must be positive"))
            }
            LayerSpec::Dense { inputs, units } | LayerSpec::FlipoutDense { inputs, units, .. }
                if inputs == 0 || units == 0 =>
            {
                Err(Error::invalid("dense sizes must be positive"))
            }
            LayerSpec::FlipoutDense { prior_std, .. } if !(prior_std > 0.0) => {
                Err(Error::invalid("prior std must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.validate()?;
        let flat: usize = input.iter().product();
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let &[c, h, w] = input else {
                    return Err(Error::shape(format!(
                        "conv2d needs [C,H,W] input, got {input:?}"
                    )));
                };
                if c != in_channels {
                    return Err(Error::shape(format!(
                        "conv2d expects {in_channels} channels, got {c}"
                    )));
                }
                match (
                    conv_out(h, kernel, stride, padding),
                    conv_out(w, kernel, stride, padding),
                ) {
                    (Some(oh), Some(ow)) => Ok(vec![out_channels, oh, ow]),
                    _ => Err(Error::shape(format!(
                        "{h}x{w} input is smaller than a {kernel}x{kernel} kernel"
                    ))),
                }
            }
            LayerSpec::Maxpool2d { size, stride } => {
                let &[c, h, w] = input else {
                    return Err(Error::shape(format!(
                        "maxpool needs [C,H,W] input, got {input:?}"
                    )));
                };
                match (conv_out(h, size, stride, 0), conv_out(w, size, stride, 0)) {
                    (Some(oh), Some(ow)) => Ok(vec![c, oh, ow]),
                    _ => Err(Error::shape(format!(
                        "{h}x{w} input is smaller than the pool window"
                    ))),
                }
            }
            LayerSpec::Dense { inputs, units } | LayerSpec::FlipoutDense { inputs, units, .. } => {
                if flat != inputs {
                    return Err(Error::shape(format!(
                        "dense layer expects {inputs} inputs, got {flat}"
                    )));
                }
                Ok(vec![units])
            }
            LayerSpec::Flatten => Ok(vec![flat]),
            LayerSpec::Relu | LayerSpec::Softmax | LayerSpec::Dropout { .. } => Ok(input.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[inputs, units]`
    pub weight: Tensor,
    /// `[units]`
    pub bias: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
}

/// A layer with materialised parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool2d { size: usize, stride: usize },
    Dense(Dense),
    FlipoutDense(FlipoutDense),
    Flatten,
    Relu,
    Softmax,
    Dropout { rate: f64 },
}

#[derive(Clone, Debug)]
pub(crate) enum Cache {
    Input(Tensor),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Shape(Vec<usize>),
    Mask(Vec<f64>),
    Flipout(FlipoutCache),
    Passthrough,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => {
                let s = c.weight.shape();
                LayerSpec::Conv2d {
                    in_channels: s[1],
                    out_channels: s[0],
                    kernel: s[2],
                    stride: c.stride,
                    padding: c.padding,
                }
            }
            Layer::MaxPool2d { size, stride } => LayerSpec::Maxpool2d {
                size: *size,
                stride: *stride,
            },
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.weight.shape()[0],
                units: d.weight.shape()[1],
            },
            Layer::FlipoutDense(f) => LayerSpec::FlipoutDense {
                inputs: f.inputs(),
                units: f.units(),
                prior_std: f.weight.prior_std,
            },
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Relu => LayerSpec::Relu,
            Layer::Softmax => LayerSpec::Softmax,
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::FlipoutDense(f) => f.params(),
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::FlipoutDense(f) => f.params_mut(),
            _ => Vec::new(),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Layer::FlipoutDense(_))
            || matches!(self, Layer::Dropout { rate } if *rate > 0.0)
    }

    /// Forward pass. `noise` feeds dropout masks and flipout draws; the cache
    /// is only built when `keep` is set.
    pub(crate) fn forward(
        &self,
        x: Tensor,
        stochastic: bool,
        noise: &mut PrngStream,
        keep: bool,
    ) -> Result<(Tensor, Option<Cache>)> {
        match self {
            Layer::Dense(d) => {
                let (m, k) = (x.rows(), x.row_len());
                let n = d.weight.shape()[1];
                if k != d.weight.shape()[0] {
                    return Err(Error::shape(format!(
                        "dense layer expects {} inputs, got {k}",
                        d.weight.shape()[0]
                    )));
                }
                let mut z = matmul(x.data(), d.weight.data(), m, k, n);
                for row in z.chunks_mut(n) {
                    for (v, b) in row.iter_mut().zip(d.bias.data()) {
                        *v += b;
                    }
                }
                Ok((Tensor::new(vec![m, n], z)?, keep.then_some(Cache::Input(x))))
            }
            Layer::FlipoutDense(f) => {
                let (z, cache) = f.forward(&x, stochastic, noise, keep)?;
                Ok((z, cache.map(Cache::Flipout)))
            }
            Layer::Conv2d(c) => {
                let y = conv_forward(c, &x)?;
                Ok((y, keep.then_some(Cache::Input(x))))
            }
            Layer::MaxPool2d { size, stride } => {
                let (y, argmax) = pool_forward(&x, *size, *stride)?;
                let cache = keep.then(|| Cache::Pool {
                    input_shape: x.shape().to_vec(),
                    argmax,
                });
                Ok((y, cache))
            }
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let m = x.rows();
                let w = x.row_len();
                Ok((x.reshape(vec![m, w])?, keep.then_some(Cache::Shape(shape))))
            }
            Layer::Relu => {
                let y = x.map(|v| v.max(0.0));
                let cache = keep.then(|| {
                    Cache::Mask(
                        x.data()
                            .iter()
                            .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
                            .collect(),
                    )
                });
                Ok((y, cache))
            }
            Layer::Dropout { rate } => {
                if !stochastic || *rate == 0.0 {
                    return Ok((x, keep.then_some(Cache::Passthrough)));
                }
                let scale = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if noise.uniform() >= *rate { scale } else { 0.0 })
                    .collect();
                let mut y = x;
                for (v, m) in y.data_mut().iter_mut().zip(&mask) {
                    *v *= m;
                }
                Ok((y, keep.then_some(Cache::Mask(mask))))
            }
            Layer::Softmax => Ok((softmax_rows(&x), None)),
        }
    }

    /// Backward pass: input gradient plus parameter gradients in [`Layer::params`] order.
    /// The input gradient is skipped when `need_dx` is false (first layer).
    pub(crate) fn backward(
        &self,
        cache: &Cache,
        grad: Tensor,
        need_dx: bool,
    ) -> Result<(Option<Tensor>, Vec<Tensor>)> {
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => {
                let (m, k, n) = (x.rows(), x.row_len(), d.weight.shape()[1]);
                let mut dw = Tensor::zeros(d.weight.shape());
                matmul_at_b_acc(x.data(), grad.data(), m, k, n, dw.data_mut());
                let mut db = Tensor::zeros(d.bias.shape());
                for row in grad.data().chunks(n) {
                    for (a, g) in db.data_mut().iter_mut().zip(row) {
                        *a += g;
                    }
                }
                let dx = if need_dx {
                    Some(Tensor::new(
                        x.shape().to_vec(),
                        matmul_a_bt(grad.data(), d.weight.data(), m, n, k),
                    )?)
                } else {
                    None
                };
                Ok((dx, vec![dw, db]))
            }
            (Layer::FlipoutDense(f), Cache::Flipout(c)) => f.backward(c, &grad, need_dx),
            (Layer::Conv2d(c), Cache::Input(x)) => {
                let (dx, grads) = conv_backward(c, x, &grad)?;
                Ok((need_dx.then_some(dx), grads))
            }
            (
                Layer::MaxPool2d { .. },
                Cache::Pool {
                    input_shape,
                    argmax,
                },
            ) => {
                let mut dx = Tensor::zeros(input_shape);
                for (g, &src) in grad.data().iter().zip(argmax) {
                    dx.data_mut()[src] += g;
                }
                Ok((Some(dx), Vec::new()))
            }
            (Layer::Flatten, Cache::Shape(shape)) => {
                Ok((Some(grad.reshape(shape.clone())?), Vec::new()))
            }
            (Layer::Relu, Cache::Mask(mask)) | (Layer::Dropout { .. }, Cache::Mask(mask)) => {
                let mut g = grad;
                for (v, m) in g.data_mut().iter_mut().zip(mask) {
                    *v *= m;
                }
                Ok((Some(g), Vec::new()))
            }
            (Layer::Dropout { .. }, Cache::Passthrough) => Ok((Some(grad), Vec::new())),
            _ => Err(Error::shape("layer cache does not match layer kind")),
        }
    }
}

fn conv_dims(
    c: &Conv2d,
    x: &Tensor,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize)> {
    let ws = c.weight.shape();
    let (o, ci, k) = (ws[0], ws[1], ws[2]);
    let &[b, xc, h, w] = x.shape() else {
        return Err(Error::shape(format!(
            "conv2d needs [B,C,H,W] input, got {:?}",
            x.shape()
        )));
    };
    if xc != ci {
        return Err(Error::shape(format!(
            "conv2d expects {ci} channels, got {xc}"
        )));
    }
    match (
        conv_out(h, k, c.stride, c.padding),
        conv_out(w, k, c.stride, c.padding),
    ) {
        (Some(oh), Some(ow)) => Ok((b, ci, h, w, o, k, oh, ow)),
        _ => Err(Error::shape(format!(
            "{h}x{w} input is smaller than a {k}x{k} kernel"
        ))),
    }
}

fn conv_forward(c: &Conv2d, x: &Tensor) -> Result<Tensor> {
    let (b, ci, h, w, o, k, oh, ow) = conv_dims(c, x)?;
    let (s, p) = (c.stride, c.padding as isize);
    let xd = x.data();
    let wd = c.weight.data();
    let mut out = vec![0.0; b * o * oh * ow];
    for bi in 0..b {
        for oc in 0..o {
            let plane = &mut out[(bi * o + oc) * oh * ow..(bi * o + oc + 1) * oh * ow];
            plane.fill(c.bias.data()[oc]);
            for ic in 0..ci {
                let xin = &xd[(bi * ci + ic) * h * w..(bi * ci + ic + 1) * h * w];
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = wd[((oc * ci + ic) * k + kh) * k + kw];
                        for y in 0..oh {
                            let iy = (y * s + kh) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &xin[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[y * ow..(y + 1) * ow];
                            for (xo, ov) in orow.iter_mut().enumerate() {
                                let ix = (xo * s + kw) as isize - p;
                                if ix >= 0 && ix < w as isize {
                                    *ov += wv * xrow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, o, oh, ow], out)
}

fn conv_backward(c: &Conv2d, x: &Tensor, grad: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
    let (b, ci, h, w, o, k, oh, ow) = conv_dims(c, x)?;
    let (s, p) = (c.stride, c.padding as isize);
    let xd = x.data();
    let wd = c.weight.data();
    let gd = grad.data();
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wd.len()];
    let mut db = vec![0.0; o];
    for bi in 0..b {
        for oc in 0..o {
            let gplane = &gd[(bi * o + oc) * oh * ow..(bi * o + oc + 1) * oh * ow];
            db[oc] += gplane.iter().sum::<f64>();
            for ic in 0..ci {
                let base = (bi * ci + ic) * h * w;
                for kh in 0..k {
                    for kw in 0..k {
                        let widx = ((oc * ci + ic) * k + kh) * k + kw;
                        let wv = wd[widx];
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let iy = (y * s + kh) as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for xo in 0..ow {
                                let ix = (xo * s + kw) as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = base + iy as usize * w + ix as usize;
                                let g = gplane[y * ow + xo];
                                acc += g * xd[xi];
                                dx[xi] += g * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        vec![
            Tensor::new(c.weight.shape().to_vec(), dw)?,
            Tensor::new(vec![o], db)?,
        ],
    ))
}

fn pool_forward(x: &Tensor, size: usize, stride: usize) -> Result<(Tensor, Vec<usize>)> {
    let &[b, c, h, w] = x.shape() else {
        return Err(Error::shape(format!(
            "maxpool needs [B,C,H,W] input, got {:?}",
            x.shape()
        )));
    };
    let (Some(oh), Some(ow)) = (conv_out(h, size, stride, 0), conv_out(w, size, stride, 0)) else {
        return Err(Error::shape(format!(
            "{h}x{w} input is smaller than the pool window"
        )));
    };
    let xd = x.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + y * stride * w + xo * stride;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = base + (y * stride + dy) * w + xo * stride + dx;
                        // first maximum wins on ties
                        if xd[i] > xd[best] {
                            best = i;
                        }
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, argmax))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_shapes() {
        let conv = LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 6,
            kernel: 5,
            stride: 1,
            padding: 2,
        };
        assert_eq!(conv.output_shape(&[1, 28, 28]).unwrap(), vec![6, 28, 28]);
        let pool = LayerSpec::Maxpool2d { size: 2, stride: 2 };
        assert_eq!(pool.output_shape(&[6, 28, 28]).unwrap(), vec![6, 14, 14]);
        let small = LayerSpec::Conv2d {
            in_channels: 16,
            out_channels: 120,
            kernel: 5,
            stride: 1,
            padding: 0,
        };
        assert!(small.output_shape(&[16, 4, 4]).is_err());
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: 0.0 }.validate().is_ok());
    }

    #[test]
    fn conv_matches_hand_value() {
        // 1x1x3x3 input, one 2x2 kernel of ones, no padding: sums of 2x2 windows
        let c = Conv2d {
            weight: Tensor::filled(&[1, 1, 2, 2], 1.0),
            bias: Tensor::filled(&[1], 0.5),
            stride: 1,
            padding: 0,
        };
        let x = Tensor::new(vec![1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
        let y = conv_forward(&c, &x).unwrap();
        assert_eq!(y.data(), &[12.5, 16.5, 24.5, 28.5]);
    }

    #[test]
    fn pool_picks_max() {
        let x = Tensor::new(
            vec![1, 1, 2, 4],
            vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, 0.0, 1.0],
        )
        .unwrap();
        let (y, arg) = pool_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[5.0, 2.0]);
        assert_eq!(arg, vec![1, 2]);
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let layer = Layer::Dropout { rate: 0.0 };
        let x = Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let (y, _) = layer
            .forward(x.clone(), true, &mut PrngStream::new(0, 0), false)
            .unwrap();
        assert_eq!(y, x);
    }
}
