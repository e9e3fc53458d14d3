#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::numerics::conv;
use crate::numerics::element::Element;

/// Handle to a value in a [`Graph`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Tensor(pub(crate) usize);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// How a node's value was produced, plus whatever the backward rule needs.
enum Op<E> {
    Leaf,
    Add(Tensor, Tensor),
    Sub(Tensor, Tensor),
    Mul(Tensor, Tensor),
    Scale(Tensor, E),
    /// Broadcast `bias` (length = shape\[axis\]) over every other axis of `x`.
    AddBias {
        x: Tensor,
        bias: Tensor,
        axis: usize,
    },
    MatMul(Tensor, Tensor),
    Transpose(Tensor),
    Conv {
        x: Tensor,
        w: Tensor,
        bias: Option<Tensor>,
        /// Cached im2col buffers, one block per batch item.
        cols: Vec<E>,
    },
    MaxPool {
        x: Tensor,
        /// Flat input index of the maximum for every output element.
        argmax: Vec<u32>,
    },
    BatchNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        mean: Vec<E>,
        invstd: Vec<E>,
    },
    BatchNormEval {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        mean: Vec<E>,
        invstd: Vec<E>,
    },
    Relu(Tensor),
    /// Softmax along the last axis.
    Softmax(Tensor),
    LayerNorm {
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        axis: usize,
        mean: Vec<E>,
        invstd: Vec<E>,
    },
    ConcatMany {
        inputs: Vec<Tensor>,
        axis: usize,
    },
    Select {
        x: Tensor,
        axis: usize,
        index: usize,
    },
    Narrow {
        x: Tensor,
        axis: usize,
        start: usize,
        len: usize,
    },
    Reshape(Tensor),
    SumAll(Tensor),
    MeanAll(Tensor),
    Abs(Tensor),
}

struct Node<E> {
    shape: Vec<usize>,
    value: Vec<E>,
    grad: Option<Vec<E>>,
    requires_grad: bool,
    op: Op<E>,
}

/// Computation graph. Operations append nodes; [`Graph::backward`] walks the
/// recorded ops in reverse and accumulates gradients.
pub struct Graph<E: Element> {
    nodes: Vec<Node<E>>,
    /// Worker threads used by the convolution kernels (1 = serial).
    pub threads: usize,
}

impl<E: Element> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Graph<E> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            threads: 1,
        }
    }

    pub fn with_threads(threads: usize) -> Self {
        Graph {
            nodes: Vec::new(),
            threads: threads.max(1),
        }
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<E>, requires_grad: bool, op: Op<E>) -> Tensor {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            requires_grad,
            op,
        });
        Tensor(self.nodes.len() - 1)
    }

    fn requires(&self, t: Tensor) -> bool {
        self.nodes[t.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, t: Tensor) -> &[usize] {
        &self.nodes[t.0].shape
    }

    pub fn value(&self, t: Tensor) -> &[E] {
        &self.nodes[t.0].value
    }

    /// Value of a single-element tensor.
    pub fn scalar(&self, t: Tensor) -> E {
        debug_assert_eq!(self.nodes[t.0].value.len(), 1);
        self.nodes[t.0].value[0]
    }

    pub fn grad(&self, t: Tensor) -> Option<&[E]> {
        self.nodes[t.0].grad.as_deref()
    }

    // ── Node constructors ────────────────────────────────────────────

    pub fn leaf(&mut self, shape: &[usize], values: Vec<E>, requires_grad: bool) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!(
                "leaf with zero extent in shape {shape:?}"
            )));
        }
        if numel(shape) != values.len() {
            return Err(Error::Shape(format!(
                "leaf shape {shape:?} expects {} values, got {}",
                numel(shape),
                values.len()
            )));
        }
        Ok(self.push(shape.to_vec(), values, requires_grad, Op::Leaf))
    }

    pub fn constant(&mut self, shape: &[usize], values: Vec<E>) -> Result<Tensor> {
        self.leaf(shape, values, false)
    }

    fn same_shape(&self, a: Tensor, b: Tensor, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "{what}: expected matching shapes, got {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape(a, b, "add")?;
        let value: Vec<E> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), value, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape(a, b, "sub")?;
        let value: Vec<E> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), value, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.same_shape(a, b, "mul")?;
        let value: Vec<E> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(self.nodes[a.0].shape.clone(), value, rg, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Tensor, c: E) -> Result<Tensor> {
        let value: Vec<E> = self.value(a).iter().map(|&x| x * c).collect();
        let rg = self.requires(a);
        Ok(self.push(self.nodes[a.0].shape.clone(), value, rg, Op::Scale(a, c)))
    }

    pub fn add_bias(&mut self, x: Tensor, bias: Tensor, axis: usize) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::Shape(format!(
                "add_bias: axis {axis} out of range for {xs:?}"
            )));
        }
        let bs = self.shape(bias);
        if bs.len() != 1 || bs[0] != xs[axis] {
            return Err(Error::Shape(format!(
                "add_bias: bias shape {bs:?} does not match axis {axis} of {xs:?}"
            )));
        }
        let (outer, alen, inner) = axis_split(&xs, axis);
        let mut value = self.value(x).to_vec();
        let b = self.value(bias);
        for o in 0..outer {
            for a in 0..alen {
                let base = (o * alen + a) * inner;
                let bv = b[a];
                for v in &mut value[base..base + inner] {
                    *v += bv;
                }
            }
        }
        let rg = self.requires(x) || self.requires(bias);
        Ok(self.push(xs, value, rg, Op::AddBias { x, bias, axis }))
    }

    pub fn matmul(&mut self, a: Tensor, b: Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Shape(format!(
                "matmul: expected [m,k] @ [k,n], got {sa:?} @ {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut value = vec![E::zero(); m * n];
        E::gemm(
            m,
            k,
            n,
            E::one(),
            self.value(a),
            self.value(b),
            E::zero(),
            &mut value,
        );
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(vec![m, n], value, rg, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::Shape(format!(
                "transpose: expected 2-d tensor, got {s:?}"
            )));
        }
        let (r, c) = (s[0], s[1]);
        let v = self.value(x);
        let mut value = vec![E::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                value[j * r + i] = v[i * c + j];
            }
        }
        let rg = self.requires(x);
        Ok(self.push(vec![c, r], value, rg, Op::Transpose(x)))
    }

    pub fn relu(&mut self, x: Tensor) -> Result<Tensor> {
        let value: Vec<E> = self
            .value(x)
            .iter()
            .map(|&v| if v > E::zero() { v } else { E::zero() })
            .collect();
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), value, rg, Op::Relu(x)))
    }

    pub fn abs(&mut self, x: Tensor) -> Result<Tensor> {
        let value: Vec<E> = self.value(x).iter().map(|&v| v.abs()).collect();
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), value, rg, Op::Abs(x)))
    }

    /// Softmax along the last axis; rows sum to one.
    pub fn softmax(&mut self, x: Tensor) -> Result<Tensor> {
        let s = self.shape(x);
        if s.is_empty() {
            return Err(Error::Shape("softmax: scalar input".into()));
        }
        let last = s[s.len() - 1];
        let rows = numel(s) / last;
        let v = self.value(x);
        let mut value = vec![E::zero(); v.len()];
        for r in 0..rows {
            let row = &v[r * last..(r + 1) * last];
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let mut sum = E::zero();
            for (o, &i) in value[r * last..(r + 1) * last].iter_mut().zip(row) {
                *o = (i - max).exp();
                sum += *o;
            }
            for o in &mut value[r * last..(r + 1) * last] {
                *o /= sum;
            }
        }
        let rg = self.requires(x);
        Ok(self.push(self.nodes[x.0].shape.clone(), value, rg, Op::Softmax(x)))
    }

    /// Normalize along `axis`; `gamma`/`beta` have length = shape\[axis\].
    pub fn layer_norm(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        axis: usize,
        eps: E,
    ) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::Shape(format!(
                "layer_norm: axis {axis} out of range for {xs:?}"
            )));
        }
        let alen = xs[axis];
        for (t, name) in [(gamma, "gamma"), (beta, "beta")] {
            let s = self.shape(t);
            if s.len() != 1 || s[0] != alen {
                return Err(Error::Shape(format!(
                    "layer_norm: {name} shape {s:?}, expected [{alen}]"
                )));
            }
        }
        let (outer, _, inner) = axis_split(&xs, axis);
        let lanes = outer * inner;
        let v = self.value(x).to_vec();
        let g = self.value(gamma).to_vec();
        let b = self.value(beta).to_vec();
        let mut mean = vec![E::zero(); lanes];
        let mut invstd = vec![E::zero(); lanes];
        let mut value = vec![E::zero(); v.len()];
        let count = E::from_f64(alen as f64);
        for o in 0..outer {
            for i in 0..inner {
                let lane = o * inner + i;
                let mut s = E::zero();
                for a in 0..alen {
                    s += v[(o * alen + a) * inner + i];
                }
                let m = s / count;
                let mut var = E::zero();
                for a in 0..alen {
                    let d = v[(o * alen + a) * inner + i] - m;
                    var += d * d;
                }
                var /= count;
                let istd = (var + eps).sqrt().recip();
                mean[lane] = m;
                invstd[lane] = istd;
                for a in 0..alen {
                    let idx = (o * alen + a) * inner + i;
                    value[idx] = g[a] * ((v[idx] - m) * istd) + b[a];
                }
            }
        }
        let rg = self.requires(x) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(
            xs,
            value,
            rg,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                axis,
                mean,
                invstd,
            },
        ))
    }

    /// Batch normalization in training mode over a `[N, C, spatial…]` tensor.
    /// Normalizes per channel across batch and spatial positions; returns the
    /// output plus the batch mean/variance so the caller can maintain running
    /// statistics. Fails for batch size 1.
    pub fn batch_norm_train(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        eps: E,
    ) -> Result<(Tensor, Vec<E>, Vec<E>)> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::Shape(format!(
                "batch_norm: expected [N, C, …], got {xs:?}"
            )));
        }
        if xs[0] == 1 {
            return Err(Error::InvalidArgument(
                "batch_norm in training mode requires batch size > 1, got 1".into(),
            ));
        }
        let (n, c) = (xs[0], xs[1]);
        let sp: usize = xs[2..].iter().product();
        self.check_bn_affine(gamma, beta, c)?;
        let v = self.value(x).to_vec();
        let g = self.value(gamma).to_vec();
        let b = self.value(beta).to_vec();
        let count = E::from_f64((n * sp) as f64);
        let mut mean = vec![E::zero(); c];
        let mut var = vec![E::zero(); c];
        for ch in 0..c {
            let mut s = E::zero();
            for bi in 0..n {
                let base = (bi * c + ch) * sp;
                for &e in &v[base..base + sp] {
                    s += e;
                }
            }
            let m = s / count;
            let mut vr = E::zero();
            for bi in 0..n {
                let base = (bi * c + ch) * sp;
                for &e in &v[base..base + sp] {
                    let d = e - m;
                    vr += d * d;
                }
            }
            mean[ch] = m;
            var[ch] = vr / count;
        }
        let invstd: Vec<E> = var.iter().map(|&vr| (vr + eps).sqrt().recip()).collect();
        let mut value = vec![E::zero(); v.len()];
        for bi in 0..n {
            for ch in 0..c {
                let base = (bi * c + ch) * sp;
                let (m, istd) = (mean[ch], invstd[ch]);
                for i in 0..sp {
                    value[base + i] = g[ch] * ((v[base + i] - m) * istd) + b[ch];
                }
            }
        }
        let rg = self.requires(x) || self.requires(gamma) || self.requires(beta);
        let out = self.push(
            xs,
            value,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean: mean.clone(),
                invstd,
            },
        );
        Ok((out, mean, var))
    }

    /// Batch normalization in evaluation mode, using running statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Tensor,
        gamma: Tensor,
        beta: Tensor,
        running_mean: &[E],
        running_var: &[E],
        eps: E,
    ) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 {
            return Err(Error::Shape(format!(
                "batch_norm: expected [N, C, …], got {xs:?}"
            )));
        }
        let (n, c) = (xs[0], xs[1]);
        let sp: usize = xs[2..].iter().product();
        self.check_bn_affine(gamma, beta, c)?;
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::Shape(format!(
                "batch_norm: running stats length {} vs {c} channels",
                running_mean.len()
            )));
        }
        let invstd: Vec<E> = running_var
            .iter()
            .map(|&vr| (vr + eps).sqrt().recip())
            .collect();
        let v = self.value(x).to_vec();
        let g = self.value(gamma).to_vec();
        let b = self.value(beta).to_vec();
        let mut value = vec![E::zero(); v.len()];
        for bi in 0..n {
            for ch in 0..c {
                let base = (bi * c + ch) * sp;
                for i in 0..sp {
                    value[base + i] =
                        g[ch] * ((v[base + i] - running_mean[ch]) * invstd[ch]) + b[ch];
                }
            }
        }
        let rg = self.requires(x) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(
            xs,
            value,
            rg,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean: running_mean.to_vec(),
                invstd,
            },
        ))
    }

    fn check_bn_affine(&self, gamma: Tensor, beta: Tensor, c: usize) -> Result<()> {
        for (t, name) in [(gamma, "gamma"), (beta, "beta")] {
            let s = self.shape(t);
            if s.len() != 1 || s[0] != c {
                return Err(Error::Shape(format!(
                    "batch_norm: {name} shape {s:?}, expected [{c}]"
                )));
            }
        }
        Ok(())
    }

    /// Convolution over `[N, C_in, spatial…]` with weights
    /// `[C_out, C_in, k…]`, stride 1 and "same" padding (`k/2` per axis).
    pub fn conv(&mut self, x: Tensor, w: Tensor, bias: Option<Tensor>) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let dims = xs.len().saturating_sub(2);
        if !(dims == 2 || dims == 3) {
            return Err(Error::Shape(format!(
                "conv: expected [N, C, 2 or 3 spatial axes], got {xs:?}"
            )));
        }
        if ws.len() != dims + 2 || ws[1] != xs[1] {
            return Err(Error::Shape(format!(
                "conv: weight shape {ws:?} incompatible with input {xs:?}"
            )));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs.len() != 1 || bs[0] != ws[0] {
                return Err(Error::Shape(format!(
                    "conv: bias shape {bs:?}, expected [{}]",
                    ws[0]
                )));
            }
        }
        let bias_val = bias.map(|b| self.value(b).to_vec());
        let (value, out_shape, cols) = conv::conv_forward(
            self.value(x),
            &xs,
            self.value(w),
            &ws,
            bias_val.as_deref(),
            self.threads,
        )?;
        let rg =
            self.requires(x) || self.requires(w) || bias.map(|b| self.requires(b)).unwrap_or(false);
        Ok(self.push(out_shape, value, rg, Op::Conv { x, w, bias, cols }))
    }

    /// Max pooling with kernel 2 and stride 2; output extents are the floor
    /// halves of the input extents.
    pub fn max_pool(&mut self, x: Tensor) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        let dims = xs.len().saturating_sub(2);
        if !(dims == 2 || dims == 3) {
            return Err(Error::Shape(format!(
                "max_pool: expected [N, C, 2 or 3 spatial axes], got {xs:?}"
            )));
        }
        if xs[2..].iter().any(|&e| e / 2 == 0) {
            return Err(Error::Shape(format!(
                "max_pool: spatial extents {:?} would collapse to zero; provide a larger input",
                &xs[2..]
            )));
        }
        let (value, out_shape, argmax) = conv::max_pool_forward(self.value(x), &xs);
        let rg = self.requires(x);
        Ok(self.push(out_shape, value, rg, Op::MaxPool { x, argmax }))
    }

    pub fn concat_many(&mut self, inputs: &[Tensor], axis: usize) -> Result<Tensor> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("concat of zero tensors".into()));
        }
        let first = self.shape(inputs[0]).to_vec();
        if axis >= first.len() {
            return Err(Error::Shape(format!(
                "concat: axis {axis} out of range for {first:?}"
            )));
        }
        let mut total = 0usize;
        for &t in inputs {
            let s = self.shape(t);
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::Shape(format!(
                    "concat: shape {s:?} incompatible with {first:?} along axis {axis}"
                )));
            }
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut value = vec![E::zero(); numel(&out_shape)];
        let mut offset = 0usize;
        for &t in inputs {
            let alen = self.shape(t)[axis];
            let v = self.value(t);
            for o in 0..outer {
                let src = o * alen * inner;
                let dst = (o * total + offset) * inner;
                value[dst..dst + alen * inner].copy_from_slice(&v[src..src + alen * inner]);
            }
            offset += alen;
        }
        let rg = inputs.iter().any(|&t| self.requires(t));
        Ok(self.push(
            out_shape,
            value,
            rg,
            Op::ConcatMany {
                inputs: inputs.to_vec(),
                axis,
            },
        ))
    }

    /// Pick index `index` along `axis`, dropping that axis.
    pub fn select(&mut self, x: Tensor, axis: usize, index: usize) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || index >= xs[axis] {
            return Err(Error::Shape(format!(
                "select: axis {axis} index {index} out of range for {xs:?}"
            )));
        }
        let (outer, alen, inner) = axis_split(&xs, axis);
        let v = self.value(x);
        let mut value = vec![E::zero(); outer * inner];
        for o in 0..outer {
            let src = (o * alen + index) * inner;
            value[o * inner..(o + 1) * inner].copy_from_slice(&v[src..src + inner]);
        }
        let mut out_shape = xs.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.requires(x);
        Ok(self.push(out_shape, value, rg, Op::Select { x, axis, index }))
    }

    /// Slice `len` entries starting at `start` along `axis`, keeping the axis.
    pub fn narrow(&mut self, x: Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() || len == 0 || start + len > xs[axis] {
            return Err(Error::Shape(format!(
                "narrow: range {start}..{} along axis {axis} out of bounds for {xs:?}",
                start + len
            )));
        }
        let (outer, alen, inner) = axis_split(&xs, axis);
        let v = self.value(x);
        let mut value = vec![E::zero(); outer * len * inner];
        for o in 0..outer {
            let src = (o * alen + start) * inner;
            value[o * len * inner..(o + 1) * len * inner]
                .copy_from_slice(&v[src..src + len * inner]);
        }
        let mut out_shape = xs;
        out_shape[axis] = len;
        let rg = self.requires(x);
        Ok(self.push(
            out_shape,
            value,
            rg,
            Op::Narrow {
                x,
                axis,
                start,
                len,
            },
        ))
    }

    pub fn reshape(&mut self, x: Tensor, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != numel(self.shape(x)) {
            return Err(Error::Shape(format!(
                "reshape: {:?} ({} values) to {shape:?} ({} values)",
                self.shape(x),
                numel(self.shape(x)),
                numel(shape)
            )));
        }
        let value = self.value(x).to_vec();
        let rg = self.requires(x);
        Ok(self.push(shape.to_vec(), value, rg, Op::Reshape(x)))
    }

    pub fn sum_all(&mut self, x: Tensor) -> Result<Tensor> {
        let mut s = E::zero();
        for &v in self.value(x) {
            s += v;
        }
        let rg = self.requires(x);
        Ok(self.push(vec![1], vec![s], rg, Op::SumAll(x)))
    }

    pub fn mean_all(&mut self, x: Tensor) -> Result<Tensor> {
        let n = self.value(x).len();
        let mut s = E::zero();
        for &v in self.value(x) {
            s += v;
        }
        let rg = self.requires(x);
        Ok(self.push(vec![1], vec![s / E::from_f64(n as f64)], rg, Op::MeanAll(x)))
    }

    /// Rows-as-samples affine map: `x[n, in] @ w[in, out] + b`.
    pub fn linear(&mut self, x: Tensor, w: Tensor, bias: Option<Tensor>) -> Result<Tensor> {
        let y = self.matmul(x, w)?;
        match bias {
            Some(b) => self.add_bias(y, b, 1),
            None => Ok(y),
        }
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Populate gradients of every tensor that requires them and contributed
    /// to `loss`. Leaf gradients accumulate across repeated calls;
    /// intermediate gradients are recomputed from scratch each time.
    pub fn backward(&mut self, loss: Tensor) -> Result<()> {
        if numel(self.shape(loss)) != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        for node in &mut self.nodes[..=loss.0] {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        self.accumulate(loss, vec![E::one()]);
        for id in (0..=loss.0).rev() {
            if self.nodes[id].grad.is_none() || matches!(self.nodes[id].op, Op::Leaf) {
                continue;
            }
            let contributions = self.backward_op(id);
            for (t, contrib) in contributions {
                self.accumulate(t, contrib);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, t: Tensor, contrib: Vec<E>) {
        let node = &mut self.nodes[t.0];
        match &mut node.grad {
            Some(g) => {
                for (gi, ci) in g.iter_mut().zip(contrib) {
                    *gi += ci;
                }
            }
            None => node.grad = Some(contrib),
        }
    }

    fn push_if(&self, out: &mut Vec<(Tensor, Vec<E>)>, t: Tensor, g: Vec<E>) {
        if self.nodes[t.0].requires_grad {
            out.push((t, g));
        }
    }

    fn backward_op(&self, id: usize) -> Vec<(Tensor, Vec<E>)> {
        let node = &self.nodes[id];
        let dy = node
            .grad
            .as_ref()
            .expect("backward_op on node without grad");
        let mut out: Vec<(Tensor, Vec<E>)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.push_if(&mut out, *a, dy.clone());
                self.push_if(&mut out, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                self.push_if(&mut out, *a, dy.clone());
                self.push_if(&mut out, *b, dy.iter().map(|&g| -g).collect());
            }
            Op::Mul(a, b) => {
                self.push_if(
                    &mut out,
                    *a,
                    dy.iter()
                        .zip(self.value(*b))
                        .map(|(&g, &v)| g * v)
                        .collect(),
                );
                self.push_if(
                    &mut out,
                    *b,
                    dy.iter()
                        .zip(self.value(*a))
                        .map(|(&g, &v)| g * v)
                        .collect(),
                );
            }
            Op::Scale(a, c) => {
                self.push_if(&mut out, *a, dy.iter().map(|&g| g * *c).collect());
            }
            Op::AddBias { x, bias, axis } => {
                self.push_if(&mut out, *x, dy.clone());
                if self.nodes[bias.0].requires_grad {
                    let (outer, alen, inner) = axis_split(&node.shape, *axis);
                    let mut db = vec![E::zero(); alen];
                    for o in 0..outer {
                        for a in 0..alen {
                            let base = (o * alen + a) * inner;
                            for &g in &dy[base..base + inner] {
                                db[a] += g;
                            }
                        }
                    }
                    out.push((*bias, db));
                }
            }
            Op::MatMul(a, b) => {
                let (m, n) = (node.shape[0], node.shape[1]);
                let k = self.shape(*a)[1];
                if self.nodes[a.0].requires_grad {
                    // dA = dY @ B^T (B^T viewed via strides: row 1, col n)
                    let mut da = vec![E::zero(); m * k];
                    E::gemm_strided(
                        m,
                        n,
                        k,
                        E::one(),
                        dy,
                        n as isize,
                        1,
                        self.value(*b),
                        1,
                        n as isize,
                        E::zero(),
                        &mut da,
                        k as isize,
                        1,
                    );
                    out.push((*a, da));
                }
                if self.nodes[b.0].requires_grad {
                    // dB = A^T @ dY
                    let mut db = vec![E::zero(); k * n];
                    E::gemm_strided(
                        k,
                        m,
                        n,
                        E::one(),
                        self.value(*a),
                        1,
                        k as isize,
                        dy,
                        n as isize,
                        1,
                        E::zero(),
                        &mut db,
                        n as isize,
                        1,
                    );
                    out.push((*b, db));
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (node.shape[0], node.shape[1]);
                let mut dx = vec![E::zero(); r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[j * r + i] = dy[i * c + j];
                    }
                }
                self.push_if(&mut out, *x, dx);
            }
            Op::Conv { x, w, bias, cols } => {
                let (dx, dw, db) = conv::conv_backward(
                    dy,
                    &node.shape,
                    self.value(*x),
                    self.shape(*x),
                    self.value(*w),
                    self.shape(*w),
                    cols,
                    self.nodes[x.0].requires_grad,
                    self.nodes[w.0].requires_grad,
                    bias.map(|b| self.nodes[b.0].requires_grad).unwrap_or(false),
                    self.threads,
                );
                if let Some(dx) = dx {
                    out.push((*x, dx));
                }
                if let Some(dw) = dw {
                    out.push((*w, dw));
                }
                if let (Some(b), Some(db)) = (bias, db) {
                    out.push((*b, db));
                }
            }
            Op::MaxPool { x, argmax } => {
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![E::zero(); numel(self.shape(*x))];
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src as usize] += dy[o];
                    }
                    out.push((*x, dx));
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                invstd,
            } => {
                let xs = self.shape(*x);
                let (n, c) = (xs[0], xs[1]);
                let sp: usize = xs[2..].iter().product();
                let count = E::from_f64((n * sp) as f64);
                let xv = self.value(*x);
                let g = self.value(*gamma);
                let mut dgamma = vec![E::zero(); c];
                let mut dbeta = vec![E::zero(); c];
                for ch in 0..c {
                    for bi in 0..n {
                        let base = (bi * c + ch) * sp;
                        for i in 0..sp {
                            let xhat = (xv[base + i] - mean[ch]) * invstd[ch];
                            dgamma[ch] += dy[base + i] * xhat;
                            dbeta[ch] += dy[base + i];
                        }
                    }
                }
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![E::zero(); xv.len()];
                    for ch in 0..c {
                        let mean_dy = dbeta[ch] / count;
                        let mean_dy_xhat = dgamma[ch] / count;
                        let scale = g[ch] * invstd[ch];
                        for bi in 0..n {
                            let base = (bi * c + ch) * sp;
                            for i in 0..sp {
                                let xhat = (xv[base + i] - mean[ch]) * invstd[ch];
                                dx[base + i] =
                                    scale * (dy[base + i] - mean_dy - xhat * mean_dy_xhat);
                            }
                        }
                    }
                    out.push((*x, dx));
                }
                if self.nodes[gamma.0].requires_grad {
                    out.push((*gamma, dgamma));
                }
                if self.nodes[beta.0].requires_grad {
                    out.push((*beta, dbeta));
                }
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                mean,
                invstd,
            } => {
                let xs = self.shape(*x);
                let (n, c) = (xs[0], xs[1]);
                let sp: usize = xs[2..].iter().product();
                let xv = self.value(*x);
                let g = self.value(*gamma);
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![E::zero(); xv.len()];
                    for bi in 0..n {
                        for ch in 0..c {
                            let base = (bi * c + ch) * sp;
                            let scale = g[ch] * invstd[ch];
                            for i in 0..sp {
                                dx[base + i] = dy[base + i] * scale;
                            }
                        }
                    }
                    out.push((*x, dx));
                }
                if self.nodes[gamma.0].requires_grad || self.nodes[beta.0].requires_grad {
                    let mut dgamma = vec![E::zero(); c];
                    let mut dbeta = vec![E::zero(); c];
                    for bi in 0..n {
                        for ch in 0..c {
                            let base = (bi * c + ch) * sp;
                            for i in 0..sp {
                                let xhat = (xv[base + i] - mean[ch]) * invstd[ch];
                                dgamma[ch] += dy[base + i] * xhat;
                                dbeta[ch] += dy[base + i];
                            }
                        }
                    }
                    self.push_if(&mut out, *gamma, dgamma);
                    self.push_if(&mut out, *beta, dbeta);
                }
            }
            Op::Relu(x) => {
                let dx: Vec<E> = dy
                    .iter()
                    .zip(&node.value)
                    .map(|(&g, &y)| if y > E::zero() { g } else { E::zero() })
                    .collect();
                self.push_if(&mut out, *x, dx);
            }
            Op::Softmax(x) => {
                let last = node.shape[node.shape.len() - 1];
                let rows = node.value.len() / last;
                let y = &node.value;
                let mut dx = vec![E::zero(); y.len()];
                for r in 0..rows {
                    let base = r * last;
                    let mut dot = E::zero();
                    for i in 0..last {
                        dot += dy[base + i] * y[base + i];
                    }
                    for i in 0..last {
                        dx[base + i] = y[base + i] * (dy[base + i] - dot);
                    }
                }
                self.push_if(&mut out, *x, dx);
            }
            Op::Abs(x) => {
                let dx: Vec<E> = dy
                    .iter()
                    .zip(self.value(*x))
                    .map(|(&g, &v)| {
                        if v > E::zero() {
                            g
                        } else if v < E::zero() {
                            -g
                        } else {
                            E::zero()
                        }
                    })
                    .collect();
                self.push_if(&mut out, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                axis,
                mean,
                invstd,
            } => {
                let xs = self.shape(*x);
                let (outer, alen, inner) = axis_split(xs, *axis);
                let xv = self.value(*x);
                let g = self.value(*gamma);
                let count = E::from_f64(alen as f64);
                let mut dgamma = vec![E::zero(); alen];
                let mut dbeta = vec![E::zero(); alen];
                let mut dx = vec![E::zero(); xv.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let lane = o * inner + i;
                        let (m, istd) = (mean[lane], invstd[lane]);
                        let mut s1 = E::zero();
                        let mut s2 = E::zero();
                        for a in 0..alen {
                            let idx = (o * alen + a) * inner + i;
                            let xhat = (xv[idx] - m) * istd;
                            let gd = g[a] * dy[idx];
                            s1 += gd;
                            s2 += gd * xhat;
                            dgamma[a] += dy[idx] * xhat;
                            dbeta[a] += dy[idx];
                        }
                        for a in 0..alen {
                            let idx = (o * alen + a) * inner + i;
                            let xhat = (xv[idx] - m) * istd;
                            dx[idx] = istd * (g[a] * dy[idx] - s1 / count - xhat * (s2 / count));
                        }
                    }
                }
                self.push_if(&mut out, *x, dx);
                self.push_if(&mut out, *gamma, dgamma);
                self.push_if(&mut out, *beta, dbeta);
            }
            Op::ConcatMany { inputs, axis } => {
                let (outer, total, inner) = axis_split(&node.shape, *axis);
                let mut offset = 0usize;
                for &t in inputs {
                    let alen = self.shape(t)[*axis];
                    if self.nodes[t.0].requires_grad {
                        let mut dt = vec![E::zero(); numel(self.shape(t))];
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            let dst = o * alen * inner;
                            dt[dst..dst + alen * inner]
                                .copy_from_slice(&dy[src..src + alen * inner]);
                        }
                        out.push((t, dt));
                    }
                    offset += alen;
                }
            }
            Op::Select { x, axis, index } => {
                if self.nodes[x.0].requires_grad {
                    let xs = self.shape(*x);
                    let (outer, alen, inner) = axis_split(xs, *axis);
                    let mut dx = vec![E::zero(); numel(xs)];
                    for o in 0..outer {
                        let dst = (o * alen + index) * inner;
                        dx[dst..dst + inner].copy_from_slice(&dy[o * inner..(o + 1) * inner]);
                    }
                    out.push((*x, dx));
                }
            }
            Op::Narrow {
                x,
                axis,
                start,
                len,
            } => {
                if self.nodes[x.0].requires_grad {
                    let xs = self.shape(*x);
                    let (outer, alen, inner) = axis_split(xs, *axis);
                    let mut dx = vec![E::zero(); numel(xs)];
                    for o in 0..outer {
                        let dst = (o * alen + start) * inner;
                        let src = o * len * inner;
                        dx[dst..dst + len * inner].copy_from_slice(&dy[src..src + len * inner]);
                    }
                    out.push((*x, dx));
                }
            }
            Op::Reshape(x) => {
                self.push_if(&mut out, *x, dy.clone());
            }
            Op::SumAll(x) => {
                let g = dy[0];
                self.push_if(&mut out, *x, vec![g; numel(self.shape(*x))]);
            }
            Op::MeanAll(x) => {
                let n = numel(self.shape(*x));
                let g = dy[0] / E::from_f64(n as f64);
                self.push_if(&mut out, *x, vec![g; n]);
            }
        }
        out
    }
}

/// Split a shape at `axis` into (outer, axis length, inner) products.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> Graph<f64> {
        Graph::new()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = graph();
        let x = g.leaf(&[3], vec![1.0, -2.0, 5.0], true).unwrap();
        let loss = g.sum_all(x).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic_gradient_is_x() {
        // loss = 0.5 * ||x||^2  =>  grad = x
        let mut g = graph();
        let x = g.leaf(&[4], vec![1.0, 2.0, -3.0, 0.5], true).unwrap();
        let sq = g.mul(x, x).unwrap();
        let s = g.sum_all(sq).unwrap();
        let loss = g.scale(s, 0.5).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 2.0, -3.0, 0.5]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = graph();
        let x = g.leaf(&[2], vec![1.0, 2.0], true).unwrap();
        let y = g.relu(x).unwrap();
        assert!(g.backward(y).is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = graph();
        let x = g.leaf(&[2], vec![3.0, 4.0], true).unwrap();
        let loss = g.sum_all(x).unwrap();
        g.backward(loss).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = graph();
        let x = g.leaf(&[3], vec![0.0, 0.0, 0.0], false).unwrap();
        let y = g.softmax(x).unwrap();
        for &v in g.value(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_positive() {
        let mut g = graph();
        let x = g
            .leaf(
                &[2, 4],
                vec![3.0, -1.0, 0.5, 9.0, -2.0, -2.5, 4.0, 0.0],
                false,
            )
            .unwrap();
        let y = g.softmax(x).unwrap();
        let v = g.value(y);
        for r in 0..2 {
            let row = &v[r * 4..(r + 1) * 4];
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn matmul_and_transpose_values() {
        let mut g = graph();
        let a = g.leaf(&[2, 2], vec![1.0, 2.0, 3.0, 4.0], false).unwrap();
        let b = g.leaf(&[2, 2], vec![5.0, 6.0, 7.0, 8.0], false).unwrap();
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[19.0, 22.0, 43.0, 50.0]);
        let t = g.transpose(c).unwrap();
        assert_eq!(g.value(t), &[19.0, 43.0, 22.0, 50.0]);
    }

    #[test]
    fn identity_pointwise_conv_preserves_input() {
        // 1x1 convolution with an identity kernel across channels.
        let mut g = graph();
        let x = g
            .leaf(
                &[1, 2, 2, 2],
                vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
                false,
            )
            .unwrap();
        let w = g
            .leaf(&[2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0], false)
            .unwrap();
        let y = g.conv(x, w, None).unwrap();
        assert_eq!(g.shape(y), &[1, 2, 2, 2]);
        assert_eq!(g.value(y), g.value(x));
    }

    #[test]
    fn pool_shape_follows_floor_halving() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.leaf(&[1, 1, 5, 7], vec![0.0; 35], false).unwrap();
        let y = g.max_pool(x).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 2, 3]);
    }

    #[test]
    fn pool_collapse_to_zero_is_rejected() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.leaf(&[1, 1, 1, 4], vec![0.0; 4], false).unwrap();
        let err = g.max_pool(x).unwrap_err();
        assert!(err.to_string().contains("larger input"));
    }

    #[test]
    fn batch_norm_train_rejects_batch_of_one() {
        let mut g: Graph<f32> = Graph::new();
        let x = g.leaf(&[1, 2, 2, 2], vec![0.0; 8], false).unwrap();
        let gamma = g.leaf(&[2], vec![1.0, 1.0], false).unwrap();
        let beta = g.leaf(&[2], vec![0.0, 0.0], false).unwrap();
        assert!(g.batch_norm_train(x, gamma, beta, 1e-5).is_err());
    }

    #[test]
    fn shape_mismatch_error_names_extents() {
        let mut g = graph();
        let a = g.leaf(&[2, 3], vec![0.0; 6], false).unwrap();
        let b = g.leaf(&[3, 3], vec![0.0; 9], false).unwrap();
        let err = g.add(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 3]"), "{msg}");
    }

    #[test]
    fn concat_and_select_round_trip() {
        let mut g = graph();
        let a = g.leaf(&[2, 2], vec![1.0, 2.0, 3.0, 4.0], true).unwrap();
        let b = g.leaf(&[2, 1], vec![9.0, 8.0], true).unwrap();
        let c = g.concat_many(&[a, b], 1).unwrap();
        assert_eq!(g.shape(c), &[2, 3]);
        assert_eq!(g.value(c), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
        let col = g.select(c, 1, 2).unwrap();
        assert_eq!(g.value(col), &[9.0, 8.0]);
        let loss = g.sum_all(col).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[1.0, 1.0]);
        assert_eq!(g.grad(a).unwrap(), &[0.0, 0.0, 0.0, 0.0]);
    }
}
