use rand::Rng;

use super::layers::{Conv2d, Dense, LayerKind, MaxPool2d};
use super::loss::softmax_cross_entropy;
use super::{Group, ImageShape, Real};
use crate::error::{Error, Result};
use crate::groups;

/// A layer plus its group tag and freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind<T>,
    pub group: Group,
    pub frozen: bool,
    pub input: ImageShape,
    pub output: ImageShape,
}

/// Ordered stack of layers ending in class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    input: ImageShape,
    layers: Vec<Layer<T>>,
}

/// Activations recorded by a forward pass, consumed by [`Model::backward`].
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    start: usize,
    batch: usize,
    /// `activations[0]` is the input to layer `start`, the last entry the logits.
    activations: Vec<Vec<T>>,
    switches: Vec<Vec<usize>>,
}

impl<T> ForwardPass<T> {
    pub fn logits(&self) -> &[T] {
        self.activations.last().expect("at least the input is recorded")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn into_logits(mut self) -> Vec<T> {
        self.activations.pop().expect("at least the input is recorded")
    }
}

pub struct ModelBuilder<T> {
    input: ImageShape,
    current: ImageShape,
    layers: Vec<Layer<T>>,
    error: Option<Error>,
}

impl<T: Real> ModelBuilder<T> {
    pub fn new(input: ImageShape) -> Self {
        Self {
            input,
            current: input,
            layers: Vec::new(),
            error: None,
        }
    }

    fn push(mut self, kind: LayerKind<T>, output: ImageShape) -> Self {
        self.layers.push(Layer {
            kind,
            group: Group::Initial,
            frozen: false,
            input: self.current,
            output,
        });
        self.current = output;
        self
    }

    /// Fully connected layer over the flattened current shape.
    pub fn dense(self, outputs: usize) -> Self {
        let inputs = self.current.len();
        self.push(LayerKind::Dense(Dense::zeros(inputs, outputs)), ImageShape::flat(outputs))
    }

    pub fn conv2d(mut self, out_channels: usize, kernel: usize, padding: usize) -> Self {
        let conv = Conv2d::zeros(self.current, out_channels, kernel, padding);
        match conv.output_shape() {
            Some(out) if !out.is_empty() => self.push(LayerKind::Conv2d(conv), out),
            _ => {
                self.error.get_or_insert(Error::Shape(format!(
                    "conv kernel {kernel} with padding {padding} does not fit input {:?}",
                    self.current
                )));
                self
            }
        }
    }

    pub fn relu(self) -> Self {
        let shape = self.current;
        self.push(LayerKind::Relu, shape)
    }

    pub fn max_pool(mut self) -> Self {
        let pool = MaxPool2d { input: self.current };
        let out = pool.output_shape();
        if out.is_empty() {
            self.error.get_or_insert(Error::Shape(format!(
                "2x2 pooling does not fit input {:?}",
                self.current
            )));
            return self;
        }
        self.push(LayerKind::MaxPool2d(pool), out)
    }

    /// Builds with all parameters zero.
    pub fn build_zeroed(self) -> Result<Model<T>> {
        if let Some(err) = self.error {
            return Err(err);
        }
        if self.input.is_empty() {
            return Err(Error::Shape("empty input shape".into()));
        }
        let mut model = Model {
            input: self.input,
            layers: self.layers,
        };
        let n_param = model.param_layer_indices().len();
        if n_param == 0 || !matches!(model.layers.last().map(|l| &l.kind), Some(LayerKind::Dense(_))) {
            return Err(Error::Shape("model must end in a dense layer".into()));
        }
        if let Some((b1, b2)) = groups::default_boundaries(n_param) {
            model.tag_groups(b1, b2);
        }
        Ok(model)
    }

    /// Builds with He-uniform hidden layers and a down-scaled classifier head,
    /// so initial logits are near zero.
    pub fn build<R: Rng + ?Sized>(self, rng: &mut R) -> Result<Model<T>> {
        let mut model = self.build_zeroed()?;
        let head = *model.param_layer_indices().last().expect("checked in build_zeroed");
        for (i, layer) in model.layers.iter_mut().enumerate() {
            let scale = if i == head { 0.1 } else { 2f64.sqrt() };
            match &mut layer.kind {
                LayerKind::Dense(d) => d.init(scale, rng),
                LayerKind::Conv2d(c) => c.init(scale, rng),
                _ => {}
            }
        }
        Ok(model)
    }
}

impl<T: Real> Model<T> {
    /// `input -> [dense -> relu]* -> dense(n_classes)`.
    pub fn mlp<R: Rng + ?Sized>(input: ImageShape, hidden: &[usize], n_classes: usize, rng: &mut R) -> Result<Self> {
        let mut b = ModelBuilder::new(input);
        for &h in hidden {
            b = b.dense(h).relu();
        }
        b.dense(n_classes).build(rng)
    }

    /// Two conv/relu/pool stages followed by two dense layers.
    pub fn small_cnn<R: Rng + ?Sized>(input: ImageShape, n_classes: usize, rng: &mut R) -> Result<Self> {
        ModelBuilder::new(input)
            .conv2d(8, 3, 1)
            .relu()
            .max_pool()
            .conv2d(16, 3, 1)
            .relu()
            .max_pool()
            .dense(64)
            .relu()
            .dense(n_classes)
            .build(rng)
    }

    pub fn input_shape(&self) -> ImageShape {
        self.input
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output.len())
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn param_layer_indices(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].kind.has_params())
            .collect()
    }

    /// Tags parameterized layer `j` as initial (`j < b1`), mid (`j < b2`) or
    /// final; activation layers inherit the tag of the preceding parameterized
    /// layer.
    pub(crate) fn tag_groups(&mut self, b1: usize, b2: usize) {
        let mut seen = 0usize;
        let mut group = Group::Initial;
        for layer in &mut self.layers {
            if layer.kind.has_params() {
                group = if seen < b1 {
                    Group::Initial
                } else if seen < b2 {
                    Group::Mid
                } else {
                    Group::Final
                };
                seen += 1;
            }
            layer.group = group;
        }
    }

    /// Index of the first layer of the final group.
    pub fn head_start(&self) -> usize {
        self.layers
            .iter()
            .position(|l| l.group == Group::Final)
            .unwrap_or(self.layers.len())
    }

    pub fn forward(&self, input: &[T], batch: usize) -> Result<ForwardPass<T>> {
        self.forward_from(0, input, batch)
    }

    /// Runs layers `start..` on `input`, which must be shaped like layer
    /// `start`'s input.
    pub fn forward_from(&self, start: usize, input: &[T], batch: usize) -> Result<ForwardPass<T>> {
        self.check_input(start, input, batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() - start + 1);
        let mut switches = Vec::with_capacity(self.layers.len() - start);
        activations.push(input.to_vec());
        for layer in &self.layers[start..] {
            let (out, sw) = layer.kind.forward(activations.last().expect("non-empty"), batch);
            activations.push(out);
            switches.push(sw);
        }
        Ok(ForwardPass {
            start,
            batch,
            activations,
            switches,
        })
    }

    /// Output of layers `start..end` without recording intermediates.
    ///
    /// Fails on the first layer that produces a non-finite value.
    pub fn forward_range(&self, start: usize, end: usize, input: &[T], batch: usize) -> Result<Vec<T>> {
        if end < start || end > self.layers.len() {
            return Err(Error::Shape(format!("layer range {start}..{end} out of bounds")));
        }
        self.check_input(start, input, batch)?;
        let mut x = input.to_vec();
        for (i, layer) in self.layers[start..end].iter().enumerate() {
            x = layer.kind.forward(&x, batch).0;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "activations of layer {} ({})",
                    start + i,
                    layer.kind.name()
                )));
            }
        }
        Ok(x)
    }

    fn check_input(&self, start: usize, input: &[T], batch: usize) -> Result<()> {
        if start >= self.layers.len() {
            return Err(Error::Shape(format!("start layer {start} out of bounds")));
        }
        let per = self.layers[start].input.len();
        if batch == 0 || input.len() != batch * per {
            return Err(Error::Shape(format!(
                "layer {start} expects {batch} x {per} inputs, got {}",
                input.len()
            )));
        }
        Ok(())
    }

    /// Fills gradients of mean cross-entropy plus `(weight_decay / 2) * |w|^2`
    /// over trainable parameters and returns that loss.
    ///
    /// Gradients of frozen layers are left at zero and backpropagation stops at
    /// the first trainable layer.
    pub fn backward(&mut self, pass: &ForwardPass<T>, labels: &[u16], weight_decay: f64) -> Result<T> {
        if pass.batch != labels.len() {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                pass.batch
            )));
        }
        let (data_loss, mut grad) = softmax_cross_entropy(pass.logits(), labels, self.n_classes())?;
        self.zero_grads();
        let first_trainable =
            (pass.start..self.layers.len()).find(|&i| self.layers[i].kind.has_params() && !self.layers[i].frozen);
        if let Some(first) = first_trainable {
            for i in (first..self.layers.len()).rev() {
                let local = i - pass.start;
                let layer = &mut self.layers[i];
                let params = layer.kind.has_params() && !layer.frozen;
                if let Some(g) = layer.kind.backward(
                    &pass.activations[local],
                    &pass.activations[local + 1],
                    &pass.switches[local],
                    &grad,
                    params,
                    i > first,
                ) {
                    grad = g;
                }
            }
        }
        let loss = data_loss + self.apply_weight_decay(weight_decay);
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        Ok(loss)
    }

    /// Adds `weight_decay * w` to the gradient of every trainable parameter
    /// and returns the penalty `(weight_decay / 2) * |w|^2`.
    pub fn apply_weight_decay(&mut self, weight_decay: f64) -> T {
        if weight_decay == 0.0 {
            return T::zero();
        }
        let wd = T::of(weight_decay);
        let mut sq = T::zero();
        for layer in self.layers.iter_mut().filter(|l| !l.frozen) {
            for (p, g) in layer.kind.tensors_mut() {
                for (&w, gw) in p.iter().zip(g.iter_mut()) {
                    sq = sq + w * w;
                    *gw = *gw + wd * w;
                }
            }
        }
        wd * sq / T::of(2.0)
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.kind.zero_grads();
        }
    }

    /// Copies of every parameter tensor in layer order.
    pub fn parameters(&self) -> Vec<Vec<T>> {
        self.layers
            .iter()
            .flat_map(|l| l.kind.tensors().into_iter().map(|(p, _)| p.to_vec()))
            .collect()
    }

    pub fn set_parameters(&mut self, params: &[Vec<T>]) -> Result<()> {
        let mut it = params.iter();
        for layer in &mut self.layers {
            for (p, _) in layer.kind.tensors_mut() {
                let src = it
                    .next()
                    .ok_or_else(|| Error::Shape("too few parameter tensors".into()))?;
                if src.len() != p.len() {
                    return Err(Error::Shape(format!(
                        "parameter tensor of {} elements, expected {}",
                        src.len(),
                        p.len()
                    )));
                }
                p.copy_from_slice(src);
            }
        }
        if it.next().is_some() {
            return Err(Error::Shape("too many parameter tensors".into()));
        }
        Ok(())
    }

    /// Parameter tensors grouped per group tag.
    pub fn parameters_of(&self, group: Group) -> Vec<Vec<T>> {
        self.layers
            .iter()
            .filter(|l| l.group == group)
            .flat_map(|l| l.kind.tensors().into_iter().map(|(p, _)| p.to_vec()))
            .collect()
    }

    pub fn gradients(&self) -> Vec<Vec<T>> {
        self.layers
            .iter()
            .flat_map(|l| l.kind.tensors().into_iter().map(|(_, g)| g.to_vec()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(Vec::len).sum()
    }

    /// Converts parameters to another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of(x.as_f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                kind: match &l.kind {
                    LayerKind::Dense(d) => LayerKind::Dense(Dense {
                        inputs: d.inputs,
                        outputs: d.outputs,
                        weights: conv(&d.weights),
                        bias: conv(&d.bias),
                        grad_weights: conv(&d.grad_weights),
                        grad_bias: conv(&d.grad_bias),
                    }),
                    LayerKind::Conv2d(c) => LayerKind::Conv2d(Conv2d {
                        input: c.input,
                        out_channels: c.out_channels,
                        kernel: c.kernel,
                        padding: c.padding,
                        weights: conv(&c.weights),
                        bias: conv(&c.bias),
                        grad_weights: conv(&c.grad_weights),
                        grad_bias: conv(&c.grad_bias),
                    }),
                    LayerKind::Relu => LayerKind::Relu,
                    LayerKind::MaxPool2d(p) => LayerKind::MaxPool2d(*p),
                },
                group: l.group,
                frozen: l.frozen,
                input: l.input,
                output: l.output,
            })
            .collect();
        Model {
            input: self.input,
            layers,
        }
    }
}
