//! Per-image forward and backward passes, generic over the float type so
//! gradients can be checked in double precision.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2, LinalgScalar};
use num_traits::Float;

use super::{LayerSpec, Shape};

pub trait Real: Float + LinalgScalar + Send + Sync + std::fmt::Debug + 'static {}
impl Real for f32 {}
impl Real for f64 {}

fn view<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix shape")
}

fn view_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub filters: usize,
    pub fh: usize,
    pub fw: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn new(input: Shape, filters: usize, fh: usize, fw: usize, stride: usize) -> Self {
        ConvGeom {
            c: input.0,
            h: input.1,
            w: input.2,
            filters,
            fh,
            fw,
            stride,
        }
    }

    pub fn oh(&self) -> usize {
        (self.h - self.fh) / self.stride + 1
    }

    pub fn ow(&self) -> usize {
        (self.w - self.fw) / self.stride + 1
    }

    /// Window length.
    pub fn k(&self) -> usize {
        self.c * self.fh * self.fw
    }

    /// Output positions.
    pub fn p(&self) -> usize {
        self.oh() * self.ow()
    }
}

/// Window matrix, `k x p` row-major; row `(ch * fh + r) * fw + c`.
pub fn im2col<T: Real>(x: &[T], g: &ConvGeom) -> Vec<T> {
    let (oh, ow, p) = (g.oh(), g.ow(), g.p());
    let mut cols = vec![T::zero(); g.k() * p];
    for ch in 0..g.c {
        for r in 0..g.fh {
            for c in 0..g.fw {
                let row = &mut cols[((ch * g.fh + r) * g.fw + c) * p..][..p];
                for oy in 0..oh {
                    let src = &x[(ch * g.h + oy * g.stride + r) * g.w + c..];
                    for ox in 0..ow {
                        row[oy * ow + ox] = src[ox * g.stride];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], g: &ConvGeom) -> Vec<T> {
    let (oh, ow, p) = (g.oh(), g.ow(), g.p());
    let mut x = vec![T::zero(); g.c * g.h * g.w];
    for ch in 0..g.c {
        for r in 0..g.fh {
            for c in 0..g.fw {
                let row = &cols[((ch * g.fh + r) * g.fw + c) * p..][..p];
                for oy in 0..oh {
                    let base = (ch * g.h + oy * g.stride + r) * g.w + c;
                    for ox in 0..ow {
                        let d = &mut x[base + ox * g.stride];
                        *d = *d + row[oy * ow + ox];
                    }
                }
            }
        }
    }
    x
}

/// Returns `(output, window matrix)`; output is `filters x oh x ow`.
pub fn conv_forward<T: Real>(x: &[T], g: &ConvGeom, w: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    let cols = im2col(x, g);
    let p = g.p();
    let mut out: Vec<T> = b.iter().flat_map(|&bf| std::iter::repeat_n(bf, p)).collect();
    general_mat_mul(
        T::one(),
        &view(w, g.filters, g.k()),
        &view(&cols, g.k(), p),
        T::one(),
        &mut view_mut(&mut out, g.filters, p),
    );
    (out, cols)
}

/// Accumulates weight and bias gradients; returns the input gradient if asked.
pub fn conv_backward<T: Real>(
    g: &ConvGeom,
    w: &[T],
    cols: &[T],
    dout: &[T],
    dw: &mut [T],
    db: &mut [T],
    need_dx: bool,
) -> Option<Vec<T>> {
    let (k, p) = (g.k(), g.p());
    let dmat = view(dout, g.filters, p);
    general_mat_mul(T::one(), &dmat, &view(cols, k, p).t(), T::one(), &mut view_mut(dw, g.filters, k));
    for (f, d) in db.iter_mut().enumerate() {
        *d = dout[f * p..(f + 1) * p].iter().fold(*d, |acc, &v| acc + v);
    }
    if !need_dx {
        return None;
    }
    let mut dcols = vec![T::zero(); k * p];
    general_mat_mul(T::one(), &view(w, g.filters, k).t(), &dmat, T::zero(), &mut view_mut(&mut dcols, k, p));
    Some(col2im(&dcols, g))
}

/// Non-overlapping max pooling; returns `(output, argmax input index per output)`.
pub fn maxpool_forward<T: Real>(x: &[T], shape: Shape, ph: usize, pw: usize) -> (Vec<T>, Vec<usize>) {
    let (c, h, w) = shape;
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (ch * h + oy * ph) * w + ox * pw;
                for r in 0..ph {
                    for q in 0..pw {
                        let i = (ch * h + oy * ph + r) * w + ox * pw + q;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// Sign is the network's activation; hard tanh shares its clipped
/// straight-through gradient and makes that gradient exact, which is what
/// the finite-difference checks rely on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sign,
    #[cfg(test)]
    HardTanh,
}

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Sign => {
                if x >= T::zero() {
                    T::one()
                } else {
                    -T::one()
                }
            }
            #[cfg(test)]
            Activation::HardTanh => x.max(-T::one()).min(T::one()),
        }
    }
}

pub fn ste_backward<T: Real>(g: T, x: T) -> T {
    if x.abs() <= T::one() {
        g
    } else {
        T::zero()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn empty() -> Self {
        LayerParams { w: Vec::new(), b: Vec::new() }
    }

    pub fn zeros_like(&self) -> Self {
        LayerParams {
            w: vec![T::zero(); self.w.len()],
            b: vec![T::zero(); self.b.len()],
        }
    }

    #[cfg(test)]
    pub fn cast<U: Real>(&self) -> LayerParams<U> {
        let c = |v: &[T]| v.iter().map(|&x| U::from(x).expect("float cast")).collect();
        LayerParams { w: c(&self.w), b: c(&self.b) }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.w.iter_mut().zip(&other.w).chain(self.b.iter_mut().zip(&other.b)) {
            *a = *a + b;
        }
    }
}

/// Everything the backward pass needs from one forward pass.
pub struct Tape<T> {
    /// Input of each layer (for a dense layer: after the dropout mask).
    pub inputs: Vec<Vec<T>>,
    pub cols: Vec<Vec<T>>,
    pub argmax: Vec<Vec<usize>>,
    pub output: Vec<T>,
}

/// Runs one image through the layers. `shapes[i]` is the input shape of
/// layer `i`; `dropout` multiplies the dense input elementwise.
pub fn forward<T: Real>(
    layers: &[LayerSpec],
    shapes: &[Shape],
    params: &[LayerParams<T>],
    x: Vec<T>,
    act: Activation,
    dropout: Option<&[T]>,
) -> Tape<T> {
    let mut tape = Tape {
        inputs: Vec::with_capacity(layers.len()),
        cols: vec![Vec::new(); layers.len()],
        argmax: vec![Vec::new(); layers.len()],
        output: Vec::new(),
    };
    let mut cur = x;
    for (i, layer) in layers.iter().enumerate() {
        let next = match *layer {
            LayerSpec::Conv { filters, fh, fw, stride } => {
                let g = ConvGeom::new(shapes[i], filters, fh, fw, stride);
                let (out, cols) = conv_forward(&cur, &g, &params[i].w, &params[i].b);
                tape.cols[i] = cols;
                out
            }
            LayerSpec::Sign => cur.iter().map(|&v| act.apply(v)).collect(),
            LayerSpec::MaxPool { ph, pw } => {
                let (out, arg) = maxpool_forward(&cur, shapes[i], ph, pw);
                tape.argmax[i] = arg;
                out
            }
            LayerSpec::Dense { units, .. } => {
                if let Some(mask) = dropout {
                    for (v, &m) in cur.iter_mut().zip(mask) {
                        *v = *v * m;
                    }
                }
                let n = cur.len();
                let p = &params[i];
                (0..units)
                    .map(|u| {
                        p.w[u * n..(u + 1) * n]
                            .iter()
                            .zip(&cur)
                            .fold(p.b[u], |acc, (&wi, &xi)| acc + wi * xi)
                    })
                    .collect()
            }
        };
        tape.inputs.push(std::mem::replace(&mut cur, next));
    }
    tape.output = cur;
    tape
}

/// Back-propagates `dout` (gradient of the loss at the network output)
/// and returns per-layer parameter gradients.
pub fn backward<T: Real>(
    layers: &[LayerSpec],
    shapes: &[Shape],
    params: &[LayerParams<T>],
    tape: &Tape<T>,
    dropout: Option<&[T]>,
    dout: Vec<T>,
) -> Vec<LayerParams<T>> {
    let mut grads: Vec<LayerParams<T>> = params.iter().map(LayerParams::zeros_like).collect();
    let mut d = dout;
    for i in (0..layers.len()).rev() {
        let need_dx = i > 0;
        let input = &tape.inputs[i];
        d = match layers[i] {
            LayerSpec::Conv { filters, fh, fw, stride } => {
                let g = ConvGeom::new(shapes[i], filters, fh, fw, stride);
                let gr = &mut grads[i];
                match conv_backward(&g, &params[i].w, &tape.cols[i], &d, &mut gr.w, &mut gr.b, need_dx) {
                    Some(dx) => dx,
                    None => break,
                }
            }
            LayerSpec::Sign => d.iter().zip(input).map(|(&g, &x)| ste_backward(g, x)).collect(),
            LayerSpec::MaxPool { .. } => {
                let mut dx = vec![T::zero(); input.len()];
                for (&g, &j) in d.iter().zip(&tape.argmax[i]) {
                    dx[j] = dx[j] + g;
                }
                dx
            }
            LayerSpec::Dense { units, .. } => {
                let n = input.len();
                let gr = &mut grads[i];
                let mut dx = vec![T::zero(); n];
                for u in 0..units {
                    let gu = d[u];
                    gr.b[u] = gr.b[u] + gu;
                    let wrow = &params[i].w[u * n..(u + 1) * n];
                    for ((gw, dxi), (&xi, &wi)) in gr.w[u * n..(u + 1) * n]
                        .iter_mut()
                        .zip(dx.iter_mut())
                        .zip(input.iter().zip(wrow))
                    {
                        *gw = *gw + gu * xi;
                        *dxi = *dxi + gu * wi;
                    }
                }
                if let Some(mask) = dropout {
                    for (v, &m) in dx.iter_mut().zip(mask) {
                        *v = *v * m;
                    }
                }
                dx
            }
        };
        if !need_dx {
            break;
        }
    }
    grads
}

/// Softmax cross-entropy against class `target`: `(loss, d loss / d logits)`.
pub fn softmax_ce<T: Real>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    let loss = sum.ln() + m - logits[target];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| e / sum - if i == target { T::one() } else { T::zero() })
        .collect();
    (loss, grad)
}
