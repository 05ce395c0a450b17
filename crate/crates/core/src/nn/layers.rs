//! Differentiable primitives: convolution, dense, max pooling, masked
//! softmax, and the loss functions. Forward passes take their inputs by
//! reference; backward passes accumulate parameter gradients and return the
//! input gradient.

use super::{real, Scalar};
use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView2, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named tensor with its gradient accumulator and momentum buffer.
pub struct Param<F> {
    pub name: String,
    pub value: ArrayD<F>,
    pub grad: ArrayD<F>,
    pub vel: ArrayD<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(name: impl Into<String>, value: ArrayD<F>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let vel = ArrayD::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
            vel,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }

    /// SGD with momentum: `vel = momentum * vel + grad * scale`,
    /// `value -= lr * vel`. `scale` is typically 1/batch.
    pub fn sgd_step(&mut self, lr: F, momentum: F, scale: F) {
        let value = self.value.as_slice_mut().expect("contiguous");
        let grad = self.grad.as_slice().expect("contiguous");
        let vel = self.vel.as_slice_mut().expect("contiguous");
        for ((v, &g), m) in value.iter_mut().zip(grad).zip(vel.iter_mut()) {
            *m = momentum * *m + g * scale;
            *v = *v - lr * *m;
        }
    }
}

/// Xavier-uniform sample: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform<F: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> ArrayD<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<F> = (0..shape.iter().product::<usize>())
        .map(|_| real::<F>(rng.random_range(-limit..limit)))
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape matches length")
}

/// 2D convolution, stride 1, square kernel, optional zero padding.
/// Feature maps are `(channels, height, width)`.
pub struct Conv2d<F> {
    pub w: Param<F>,
    pub b: Param<F>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
}

impl<F: Scalar> Conv2d<F> {
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        let w = Param::new(
            format!("{name}.weight"),
            xavier_uniform(
                &[out_channels, in_channels, kernel, kernel],
                fan_in,
                fan_out,
                rng,
            ),
        );
        let b = Param::new(
            format!("{name}.bias"),
            ArrayD::zeros(IxDyn(&[out_channels])),
        );
        Self {
            w,
            b,
            in_channels,
            out_channels,
            kernel,
            padding,
        }
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        (
            h + 2 * self.padding - self.kernel + 1,
            w + 2 * self.padding - self.kernel + 1,
        )
    }

    fn padded(&self, x: &Array3<F>) -> Array3<F> {
        let (c, h, w) = x.dim();
        let p = self.padding;
        if p == 0 {
            return x.clone();
        }
        let mut out = Array3::zeros((c, h + 2 * p, w + 2 * p));
        for ch in 0..c {
            for r in 0..h {
                let src = x.slice(ndarray::s![ch, r, ..]);
                let mut dst = out.slice_mut(ndarray::s![ch, r + p, p..p + w]);
                dst.assign(&src);
            }
        }
        out
    }

    /// Unrolls the padded input into a `(in_c * k * k, oh * ow)` matrix so
    /// convolution becomes one gemm.
    fn im2col(&self, padded: &Array3<F>, oh: usize, ow: usize) -> Array2<F> {
        let (ic, ph, pw) = padded.dim();
        let k = self.kernel;
        let xd = padded.as_slice().expect("contiguous");
        let mut cols = Array2::zeros((ic * k * k, oh * ow));
        {
            let cd = cols.as_slice_mut().expect("contiguous");
            for i in 0..ic {
                for kr in 0..k {
                    for kc in 0..k {
                        let row = (i * k + kr) * k + kc;
                        for r in 0..oh {
                            let src = (i * ph + r + kr) * pw + kc;
                            let dst = row * oh * ow + r * ow;
                            cd[dst..dst + ow].copy_from_slice(&xd[src..src + ow]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn weights_matrix(&self) -> ArrayView2<'_, F> {
        let n = self.in_channels * self.kernel * self.kernel;
        ArrayView2::from_shape(
            (self.out_channels, n),
            self.w.value.as_slice().expect("contiguous"),
        )
        .expect("weight shape")
    }

    pub fn forward(&self, x: &Array3<F>) -> Array3<F> {
        let (ic, h, w) = x.dim();
        debug_assert_eq!(ic, self.in_channels);
        let (oh, ow) = self.out_spatial(h, w);
        let padded = self.padded(x);
        let cols = self.im2col(&padded, oh, ow);
        let mut y2 = self.weights_matrix().dot(&cols);
        let bd = self.b.value.as_slice().expect("contiguous");
        for (o, mut row) in y2.rows_mut().into_iter().enumerate() {
            let b = bd[o];
            row.mapv_inplace(|v| v + b);
        }
        let data = y2.into_raw_vec_and_offset().0;
        Array3::from_shape_vec((self.out_channels, oh, ow), data).expect("gemm shape")
    }

    /// Accumulates dW and db, returns dX. `x` must be the forward input.
    pub fn backward(&mut self, x: &Array3<F>, dy: &Array3<F>) -> Array3<F> {
        let (ic, h, w) = x.dim();
        let (oc, oh, ow) = dy.dim();
        let k = self.kernel;
        let p = self.padding;
        let padded = self.padded(x);
        let (_, ph, pw) = padded.dim();
        let cols = self.im2col(&padded, oh, ow);
        let dy2 = ArrayView2::from_shape((oc, oh * ow), dy.as_slice().expect("contiguous"))
            .expect("dy shape");

        let dw2 = dy2.dot(&cols.t());
        {
            let dwd = self.w.grad.as_slice_mut().expect("contiguous");
            for (g, &v) in dwd.iter_mut().zip(dw2.as_slice().expect("contiguous")) {
                *g = *g + v;
            }
        }
        {
            let dbd = self.b.grad.as_slice_mut().expect("contiguous");
            for (o, row) in dy2.rows().into_iter().enumerate() {
                let mut sum = F::zero();
                for &g in row {
                    sum = sum + g;
                }
                dbd[o] = dbd[o] + sum;
            }
        }

        // dcols = W^T dy, then fold the columns back onto the padded grid.
        let dcols = self.weights_matrix().t().dot(&dy2);
        let dcd = dcols.as_slice().expect("contiguous");
        let mut dpad = vec![F::zero(); ic * ph * pw];
        for i in 0..ic {
            for kr in 0..k {
                for kc in 0..k {
                    let row = (i * k + kr) * k + kc;
                    for r in 0..oh {
                        let dst = (i * ph + r + kr) * pw + kc;
                        let src = row * oh * ow + r * ow;
                        let dprow = &mut dpad[dst..dst + ow];
                        for (dp, &g) in dprow.iter_mut().zip(&dcd[src..src + ow]) {
                            *dp = *dp + g;
                        }
                    }
                }
            }
        }

        // Crop the padding off the input gradient.
        let mut dx = Array3::zeros((ic, h, w));
        {
            let dxd = dx.as_slice_mut().expect("contiguous");
            for i in 0..ic {
                for r in 0..h {
                    let src = (i * ph + r + p) * pw + p;
                    let dst = (i * h + r) * w;
                    dxd[dst..dst + w].copy_from_slice(&dpad[src..src + w]);
                }
            }
        }
        dx
    }
}

/// 2x2 max pooling, stride 2, floor semantics (trailing odd row/col dropped).
pub struct MaxPool2;

impl MaxPool2 {
    /// Returns the pooled map and the flat input index of each maximum
    /// (ties resolved to the first, i.e. lowest index).
    pub fn forward<F: Scalar>(&self, x: &Array3<F>) -> (Array3<F>, Vec<u32>) {
        let (c, h, w) = x.dim();
        let (oh, ow) = (h / 2, w / 2);
        let xd = x.as_slice().expect("contiguous");
        let mut y = Array3::zeros((c, oh, ow));
        let mut arg = vec![0u32; c * oh * ow];
        {
            let yd = y.as_slice_mut().expect("contiguous");
            for ch in 0..c {
                for r in 0..oh {
                    for col in 0..ow {
                        let mut best = F::neg_infinity();
                        let mut best_ix = 0u32;
                        for dr in 0..2 {
                            for dc in 0..2 {
                                let ix = (ch * h + 2 * r + dr) * w + 2 * col + dc;
                                if xd[ix] > best {
                                    best = xd[ix];
                                    best_ix = ix as u32;
                                }
                            }
                        }
                        let oix = (ch * oh + r) * ow + col;
                        yd[oix] = best;
                        arg[oix] = best_ix;
                    }
                }
            }
        }
        (y, arg)
    }

    pub fn backward<F: Scalar>(
        &self,
        dy: &Array3<F>,
        argmax: &[u32],
        in_dim: (usize, usize, usize),
    ) -> Array3<F> {
        let mut dx = Array3::zeros(in_dim);
        {
            let dxd = dx.as_slice_mut().expect("contiguous");
            let dyd = dy.as_slice().expect("contiguous");
            for (&g, &ix) in dyd.iter().zip(argmax) {
                dxd[ix as usize] = dxd[ix as usize] + g;
            }
        }
        dx
    }
}

/// Fully connected layer: y = W x + b with W of shape `(out, in)`.
pub struct Dense<F> {
    pub w: Param<F>,
    pub b: Param<F>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<F: Scalar> Dense<F> {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = Param::new(
            format!("{name}.weight"),
            xavier_uniform(&[out_dim, in_dim], in_dim, out_dim, rng),
        );
        let b = Param::new(format!("{name}.bias"), ArrayD::zeros(IxDyn(&[out_dim])));
        Self {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &Array1<F>) -> Array1<F> {
        debug_assert_eq!(x.len(), self.in_dim);
        let wd = self.w.value.as_slice().expect("contiguous");
        let bd = self.b.value.as_slice().expect("contiguous");
        let xd = x.as_slice().expect("contiguous");
        let mut y = Array1::zeros(self.out_dim);
        let yd = y.as_slice_mut().expect("contiguous");
        for o in 0..self.out_dim {
            let row = &wd[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = bd[o];
            for (&wv, &xv) in row.iter().zip(xd) {
                acc = acc + wv * xv;
            }
            yd[o] = acc;
        }
        y
    }

    /// Accumulates dW and db, returns dX. `x` must be the forward input.
    pub fn backward(&mut self, x: &Array1<F>, dy: &Array1<F>) -> Array1<F> {
        let xd = x.as_slice().expect("contiguous");
        let dyd = dy.as_slice().expect("contiguous");
        let wd = self.w.value.as_slice().expect("contiguous");
        let dwd = self.w.grad.as_slice_mut().expect("contiguous");
        let dbd = self.b.grad.as_slice_mut().expect("contiguous");
        let mut dx = Array1::zeros(self.in_dim);
        let dxd = dx.as_slice_mut().expect("contiguous");
        for o in 0..self.out_dim {
            let g = dyd[o];
            dbd[o] = dbd[o] + g;
            let wrow = &wd[o * self.in_dim..(o + 1) * self.in_dim];
            let dwrow = &mut dwd[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                dwrow[i] = dwrow[i] + g * xd[i];
                dxd[i] = dxd[i] + wrow[i] * g;
            }
        }
        dx
    }
}

/// Softmax restricted to legal entries: illegal actions get exactly 0 and the
/// legal ones sum to 1.
pub fn masked_softmax<F: Scalar>(logits: &[F], legal: &[bool]) -> Vec<F> {
    debug_assert_eq!(logits.len(), legal.len());
    let mut max = F::neg_infinity();
    for (l, &ok) in logits.iter().zip(legal) {
        if ok && *l > max {
            max = *l;
        }
    }
    let mut out = vec![F::zero(); logits.len()];
    let mut sum = F::zero();
    for (i, (&l, &ok)) in logits.iter().zip(legal).enumerate() {
        if ok {
            let e = (l - max).exp();
            out[i] = e;
            sum = sum + e;
        }
    }
    for v in &mut out {
        *v = *v / sum;
    }
    out
}

/// Cross-entropy -sum(t * ln p) over entries with positive target mass.
pub fn cross_entropy<F: Scalar>(probs: &[F], target: &[F]) -> F {
    let floor = real::<F>(1e-30);
    probs
        .iter()
        .zip(target)
        .filter(|(_, &t)| t > F::zero())
        .map(|(&p, &t)| -t * p.max(floor).ln())
        .sum()
}
