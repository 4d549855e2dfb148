use rand::Rng;

use super::{ImageShape, Real};

/// Fully connected layer, weights stored `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weights: Vec<T>,
    pub grad_bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            grad_weights: vec![T::zero(); inputs * outputs],
            grad_bias: vec![T::zero(); outputs],
        }
    }

    /// Uniform init in `[-scale * sqrt(3 / fan_in), +...]`, zero bias.
    pub fn init<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        let bound = scale * (3.0 / self.inputs as f64).sqrt();
        for w in &mut self.weights {
            *w = T::of(rng.random_range(-bound..=bound));
        }
        self.bias.fill(T::zero());
    }

    fn forward(&self, input: &[T], batch: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(batch * self.outputs);
        for x in input.chunks_exact(self.inputs) {
            for (row, &b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
                let dot = row.iter().zip(x).fold(T::zero(), |acc, (&w, &v)| acc + w * v);
                out.push(b + dot);
            }
        }
        out
    }

    fn backward(&mut self, input: &[T], grad_out: &[T], params: bool, need_input: bool) -> Option<Vec<T>> {
        if params {
            for (x, g) in input.chunks_exact(self.inputs).zip(grad_out.chunks_exact(self.outputs)) {
                for ((grow, gb), &go) in self
                    .grad_weights
                    .chunks_exact_mut(self.inputs)
                    .zip(&mut self.grad_bias)
                    .zip(g)
                {
                    *gb = *gb + go;
                    if go != T::zero() {
                        for (gw, &v) in grow.iter_mut().zip(x) {
                            *gw = *gw + go * v;
                        }
                    }
                }
            }
        }
        if !need_input {
            return None;
        }
        let mut grad_in = vec![T::zero(); input.len()];
        for (gi, g) in grad_in.chunks_exact_mut(self.inputs).zip(grad_out.chunks_exact(self.outputs)) {
            for (row, &go) in self.weights.chunks_exact(self.inputs).zip(g) {
                if go == T::zero() {
                    continue;
                }
                for (d, &w) in gi.iter_mut().zip(row) {
                    *d = *d + go * w;
                }
            }
        }
        Some(grad_in)
    }
}

/// Stride-1 square convolution with symmetric zero padding.
///
/// Weights are laid out `[out_channels][in_channels][kernel][kernel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub input: ImageShape,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weights: Vec<T>,
    pub grad_bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn zeros(input: ImageShape, out_channels: usize, kernel: usize, padding: usize) -> Self {
        let n = out_channels * input.channels * kernel * kernel;
        Self {
            input,
            out_channels,
            kernel,
            padding,
            weights: vec![T::zero(); n],
            bias: vec![T::zero(); out_channels],
            grad_weights: vec![T::zero(); n],
            grad_bias: vec![T::zero(); out_channels],
        }
    }

    pub fn init<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        let fan_in = (self.input.channels * self.kernel * self.kernel) as f64;
        let bound = scale * (3.0 / fan_in).sqrt();
        for w in &mut self.weights {
            *w = T::of(rng.random_range(-bound..=bound));
        }
        self.bias.fill(T::zero());
    }

    pub fn output_shape(&self) -> Option<ImageShape> {
        let h = (self.input.height + 2 * self.padding).checked_sub(self.kernel)? + 1;
        let w = (self.input.width + 2 * self.padding).checked_sub(self.kernel)? + 1;
        Some(ImageShape::new(self.out_channels, h, w))
    }

    /// Calls `f(out_index, in_index, weight_index)` for every in-bounds tap
    /// of one sample.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let ImageShape {
            channels: ic_n,
            height: ih,
            width: iw,
        } = self.input;
        let out = self.output_shape().expect("validated at build");
        let (k, p) = (self.kernel, self.padding as isize);
        for oc in 0..self.out_channels {
            for oy in 0..out.height {
                for ox in 0..out.width {
                    let o = (oc * out.height + oy) * out.width + ox;
                    for ic in 0..ic_n {
                        for ky in 0..k {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= ih as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= iw as isize {
                                    continue;
                                }
                                let i = (ic * ih + iy as usize) * iw + ix as usize;
                                let w = ((oc * ic_n + ic) * k + ky) * k + kx;
                                f(o, i, w);
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, input: &[T], batch: usize) -> Vec<T> {
        let out_shape = self.output_shape().expect("validated at build");
        let plane = out_shape.height * out_shape.width;
        let mut out = vec![T::zero(); batch * out_shape.len()];
        for (x, y) in input.chunks_exact(self.input.len()).zip(out.chunks_exact_mut(out_shape.len())) {
            for (oc, ys) in y.chunks_exact_mut(plane).enumerate() {
                ys.fill(self.bias[oc]);
            }
            self.for_each_tap(|o, i, w| y[o] = y[o] + self.weights[w] * x[i]);
        }
        out
    }

    fn backward(&mut self, input: &[T], grad_out: &[T], params: bool, need_input: bool) -> Option<Vec<T>> {
        let out_shape = self.output_shape().expect("validated at build");
        let plane = out_shape.height * out_shape.width;
        let mut grad_in = need_input.then(|| vec![T::zero(); input.len()]);
        let mut gw = std::mem::take(&mut self.grad_weights);
        for (s, (x, g)) in input
            .chunks_exact(self.input.len())
            .zip(grad_out.chunks_exact(out_shape.len()))
            .enumerate()
        {
            if params {
                for (oc, gs) in g.chunks_exact(plane).enumerate() {
                    self.grad_bias[oc] = gs.iter().fold(self.grad_bias[oc], |a, &v| a + v);
                }
            }
            let base = s * self.input.len();
            self.for_each_tap(|o, i, w| {
                if params {
                    gw[w] = gw[w] + g[o] * x[i];
                }
                if let Some(gi) = grad_in.as_mut() {
                    gi[base + i] = gi[base + i] + g[o] * self.weights[w];
                }
            });
        }
        self.grad_weights = gw;
        grad_in
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub input: ImageShape,
}

impl MaxPool2d {
    pub fn output_shape(&self) -> ImageShape {
        ImageShape::new(self.input.channels, self.input.height / 2, self.input.width / 2)
    }

    /// Returns pooled output and, per output element, the flat input index of
    /// the winning element.
    fn forward<T: Real>(&self, input: &[T], batch: usize) -> (Vec<T>, Vec<usize>) {
        let out_shape = self.output_shape();
        let (ih, iw) = (self.input.height, self.input.width);
        let mut out = Vec::with_capacity(batch * out_shape.len());
        let mut argmax = Vec::with_capacity(batch * out_shape.len());
        for s in 0..batch {
            let base = s * self.input.len();
            for c in 0..out_shape.channels {
                for oy in 0..out_shape.height {
                    for ox in 0..out_shape.width {
                        let mut best = base + (c * ih + 2 * oy) * iw + 2 * ox;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let i = base + (c * ih + 2 * oy + dy) * iw + 2 * ox + dx;
                            if input[i] > input[best] {
                                best = i;
                            }
                        }
                        out.push(input[best]);
                        argmax.push(best);
                    }
                }
            }
        }
        (out, argmax)
    }
}

/// Layer operation.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    Relu,
    MaxPool2d(MaxPool2d),
}

impl<T: Real> LayerKind<T> {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Dense(_) | LayerKind::Conv2d(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense(_) => "dense",
            LayerKind::Conv2d(_) => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2d(_) => "maxpool2d",
        }
    }

    /// `(params, grads)` pairs: weights first, then bias.
    pub fn tensors(&self) -> Vec<(&[T], &[T])> {
        match self {
            LayerKind::Dense(d) => vec![(&d.weights, &d.grad_weights), (&d.bias, &d.grad_bias)],
            LayerKind::Conv2d(c) => vec![(&c.weights, &c.grad_weights), (&c.bias, &c.grad_bias)],
            _ => Vec::new(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&mut Vec<T>, &mut Vec<T>)> {
        match self {
            LayerKind::Dense(d) => vec![
                (&mut d.weights, &mut d.grad_weights),
                (&mut d.bias, &mut d.grad_bias),
            ],
            LayerKind::Conv2d(c) => vec![
                (&mut c.weights, &mut c.grad_weights),
                (&mut c.bias, &mut c.grad_bias),
            ],
            _ => Vec::new(),
        }
    }

    pub fn zero_grads(&mut self) {
        for (_, g) in self.tensors_mut() {
            g.fill(T::zero());
        }
    }

    /// Output plus pooling switches (empty for non-pooling layers).
    pub(crate) fn forward(&self, input: &[T], batch: usize) -> (Vec<T>, Vec<usize>) {
        match self {
            LayerKind::Dense(d) => (d.forward(input, batch), Vec::new()),
            LayerKind::Conv2d(c) => (c.forward(input, batch), Vec::new()),
            LayerKind::Relu => (input.iter().map(|&v| v.max(T::zero())).collect(), Vec::new()),
            LayerKind::MaxPool2d(p) => p.forward(input, batch),
        }
    }

    /// Accumulates parameter gradients when `params` is set and returns the
    /// gradient with respect to the input when `need_input` is set.
    pub(crate) fn backward(
        &mut self,
        input: &[T],
        output: &[T],
        switches: &[usize],
        grad_out: &[T],
        params: bool,
        need_input: bool,
    ) -> Option<Vec<T>> {
        match self {
            LayerKind::Dense(d) => d.backward(input, grad_out, params, need_input),
            LayerKind::Conv2d(c) => c.backward(input, grad_out, params, need_input),
            LayerKind::Relu => need_input.then(|| {
                output
                    .iter()
                    .zip(grad_out)
                    .map(|(&y, &g)| if y > T::zero() { g } else { T::zero() })
                    .collect()
            }),
            LayerKind::MaxPool2d(_) => need_input.then(|| {
                let mut gi = vec![T::zero(); input.len()];
                for (&i, &g) in switches.iter().zip(grad_out) {
                    gi[i] = gi[i] + g;
                }
                gi
            }),
        }
    }
}
