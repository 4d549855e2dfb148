//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the forward, backward or loss code under test; the
//! oracles read parameters through the public layer fields and redo the
//! arithmetic with plain index loops.

#![allow(dead_code)]

use lrkit::finder::RangeProbe;
use lrkit::nn::{ImageShape, LayerKind, Model, ModelBuilder};
use rand::Rng;

/// Scalar forward pass. Returns the input of every layer followed by the
/// logits, all for the whole batch.
pub fn oracle_activations(model: &Model<f64>, x: &[f64], batch: usize) -> Vec<Vec<f64>> {
    let mut acts = vec![x.to_vec()];
    for layer in model.layers() {
        let input = acts.last().unwrap();
        let (ish, osh) = (layer.input, layer.output);
        let mut out = vec![0.0; batch * osh.len()];
        for s in 0..batch {
            let xin = &input[s * ish.len()..(s + 1) * ish.len()];
            let y = &mut out[s * osh.len()..(s + 1) * osh.len()];
            match &layer.kind {
                LayerKind::Dense(d) => {
                    for o in 0..d.outputs {
                        let mut acc = d.bias[o];
                        for i in 0..d.inputs {
                            acc += d.weights[o * d.inputs + i] * xin[i];
                        }
                        y[o] = acc;
                    }
                }
                LayerKind::Conv2d(c) => {
                    let k = c.kernel as i64;
                    let p = c.padding as i64;
                    for oc in 0..osh.channels {
                        for oy in 0..osh.height {
                            for ox in 0..osh.width {
                                let mut acc = c.bias[oc];
                                for ic in 0..ish.channels {
                                    for ky in 0..k {
                                        for kx in 0..k {
                                            let iy = oy as i64 + ky - p;
                                            let ix = ox as i64 + kx - p;
                                            if iy < 0 || ix < 0 || iy >= ish.height as i64 || ix >= ish.width as i64 {
                                                continue;
                                            }
                                            let w = c.weights[(((oc * ish.channels + ic) as i64 * k + ky) * k + kx) as usize];
                                            let v = xin[(ic * ish.height + iy as usize) * ish.width + ix as usize];
                                            acc += w * v;
                                        }
                                    }
                                }
                                y[(oc * osh.height + oy) * osh.width + ox] = acc;
                            }
                        }
                    }
                }
                LayerKind::Relu => {
                    for (o, &v) in y.iter_mut().zip(xin) {
                        *o = if v > 0.0 { v } else { 0.0 };
                    }
                }
                LayerKind::MaxPool2d(_) => {
                    for c in 0..osh.channels {
                        for oy in 0..osh.height {
                            for ox in 0..osh.width {
                                let mut m = f64::NEG_INFINITY;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        m = m.max(xin[(c * ish.height + 2 * oy + dy) * ish.width + 2 * ox + dx]);
                                    }
                                }
                                y[(c * osh.height + oy) * osh.width + ox] = m;
                            }
                        }
                    }
                }
            }
        }
        acts.push(out);
    }
    acts
}

pub fn oracle_logits(model: &Model<f64>, x: &[f64], batch: usize) -> Vec<f64> {
    oracle_activations(model, x, batch).pop().unwrap()
}

/// Mean softmax cross-entropy plus `(wd / 2) * |w|^2` over unfrozen layers.
pub fn oracle_loss(model: &Model<f64>, x: &[f64], labels: &[u16], wd: f64) -> f64 {
    let k = model.n_classes();
    let logits = oracle_logits(model, x, labels.len());
    let mut total = 0.0;
    for (row, &l) in logits.chunks(k).zip(labels) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[l as usize];
    }
    let mut penalty = 0.0;
    for layer in model.layers().iter().filter(|l| !l.frozen) {
        for (p, _) in layer.kind.tensors() {
            penalty += p.iter().map(|v| v * v).sum::<f64>();
        }
    }
    total / labels.len() as f64 + 0.5 * wd * penalty
}

/// ReLU sign bits and max-pool winners for every layer. Finite differences
/// are only meaningful when this pattern is the same on both sides of a
/// perturbation.
pub fn kink_pattern(model: &Model<f64>, x: &[f64], batch: usize) -> Vec<usize> {
    let acts = oracle_activations(model, x, batch);
    let mut pattern = Vec::new();
    for (layer, input) in model.layers().iter().zip(&acts) {
        match &layer.kind {
            LayerKind::Relu => pattern.extend(input.iter().map(|&v| (v > 0.0) as usize)),
            LayerKind::MaxPool2d(_) => {
                let (ish, osh) = (layer.input, layer.output);
                for s in 0..batch {
                    let xin = &input[s * ish.len()..];
                    for c in 0..osh.channels {
                        for oy in 0..osh.height {
                            for ox in 0..osh.width {
                                let mut best = (0, f64::NEG_INFINITY);
                                for q in 0..4 {
                                    let v = xin[(c * ish.height + 2 * oy + q / 2) * ish.width + 2 * ox + q % 2];
                                    if v > best.1 {
                                        best = (q, v);
                                    }
                                }
                                pattern.push(best.0);
                            }
                        }
                    }
                }
            }
            _ => {}
        }
    }
    pattern
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates skipped because the perturbation crossed a kink.
    pub skipped: usize,
    /// Largest gradient reported for a frozen parameter (must be zero).
    pub frozen_grad: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps round-off on near-zero
/// gradients from dominating.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central differences with step `h` on every parameter of every unfrozen
/// layer, compared with the gradients `backward` produces.
pub fn grad_check(model: &mut Model<f64>, x: &[f64], labels: &[u16], wd: f64, h: f64) -> GradCheck {
    let pass = model.forward(x, labels.len()).unwrap();
    model.backward(&pass, labels, wd).unwrap();
    let base = kink_pattern(model, x, labels.len());
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
        frozen_grad: 0.0,
    };
    let n_layers = model.layers().len();
    for li in 0..n_layers {
        let n_tensors = model.layers()[li].kind.tensors().len();
        for ti in 0..n_tensors {
            let (params, grads) = model.layers()[li].kind.tensors()[ti];
            let (len, analytic) = (params.len(), grads.to_vec());
            if model.layers()[li].frozen {
                out.frozen_grad = analytic.iter().fold(out.frozen_grad, |m, g| m.max(g.abs()));
                continue;
            }
            for j in 0..len {
                let orig = model.layers()[li].kind.tensors()[ti].0[j];
                let eval = |v: f64, model: &mut Model<f64>| {
                    model.layers_mut()[li].kind.tensors_mut()[ti].0[j] = v;
                    let same = kink_pattern(model, x, labels.len()) == base;
                    (oracle_loss(model, x, labels, wd), same)
                };
                let (up, same_up) = eval(orig + h, model);
                let (down, same_down) = eval(orig - h, model);
                model.layers_mut()[li].kind.tensors_mut()[ti].0[j] = orig;
                if !(same_up && same_down) {
                    out.skipped += 1;
                    continue;
                }
                let numeric = (up - down) / (2.0 * h);
                out.max_rel_error = out.max_rel_error.max(rel_error(analytic[j], numeric));
                out.checked += 1;
            }
        }
    }
    out
}

/// Small random network containing every layer type, with random biases.
pub fn random_net<R: Rng>(rng: &mut R) -> Model<f64> {
    let channels = rng.random_range(1..=2);
    let side = rng.random_range(5..=7);
    let k1 = rng.random_range(1..=3);
    let k2 = rng.random_range(1..=3);
    let mut m = ModelBuilder::<f64>::new(ImageShape::new(channels, side, side))
        .conv2d(rng.random_range(1..=3), k1, rng.random_range(0..=k1 / 2))
        .relu()
        .max_pool()
        .conv2d(rng.random_range(1..=3), k2, k2 / 2)
        .relu()
        .dense(rng.random_range(3..=6))
        .relu()
        .dense(rng.random_range(2..=4))
        .build(rng)
        .unwrap();
    for layer in m.layers_mut() {
        for (p, _) in layer.kind.tensors_mut() {
            for v in p.iter_mut() {
                *v = rng.random_range(-0.8..0.8);
            }
        }
    }
    m
}

pub fn random_batch<R: Rng>(rng: &mut R, model: &Model<f64>, batch: usize) -> (Vec<f64>, Vec<u16>) {
    let x = (0..batch * model.input_shape().len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let y = (0..batch).map(|_| rng.random_range(0..model.n_classes()) as u16).collect();
    (x, y)
}

/// `0.5 * (a * w0^2 + b * w1^2)` under plain gradient descent.
#[derive(Debug, Clone, Copy)]
pub struct Quadratic {
    pub curvature: [f64; 2],
    pub w: [f64; 2],
}

impl Quadratic {
    pub fn loss(&self) -> f64 {
        0.5 * (self.curvature[0] * self.w[0] * self.w[0] + self.curvature[1] * self.w[1] * self.w[1])
    }

    pub fn step(&mut self, lr: f64) {
        for i in 0..2 {
            self.w[i] -= lr * self.curvature[i] * self.w[i];
        }
    }
}

impl RangeProbe for Quadratic {
    type Snapshot = [f64; 2];

    fn snapshot(&self) -> [f64; 2] {
        self.w
    }

    fn restore(&mut self, s: [f64; 2]) {
        self.w = s;
    }

    fn train_step(&mut self, lr: f64) -> lrkit::Result<f64> {
        let loss = self.loss();
        self.step(lr);
        Ok(loss)
    }
}
