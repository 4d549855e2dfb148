use super::{GroupLr, Model, Real};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum:
///
/// ```text
/// v <- momentum * v + grad
/// w <- w - lr(group) * v
/// ```
///
/// Weight decay enters through the loss gradient, see [`Model::backward`].
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    momentum: T,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(model: &Model<T>, momentum: f64) -> Result<Self> {
        if !(momentum.is_finite() && (0.0..1.0).contains(&momentum)) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {momentum}"
            )));
        }
        Ok(Self {
            momentum: T::of(momentum),
            velocity: model.parameters().iter().map(|p| vec![T::zero(); p.len()]).collect(),
        })
    }

    pub fn reset(&mut self) {
        for v in &mut self.velocity {
            v.fill(T::zero());
        }
    }

    /// Updates every unfrozen layer; frozen layers and their velocity are
    /// left untouched.
    pub fn step(&mut self, model: &mut Model<T>, lr: GroupLr) {
        let mut slot = 0;
        for layer in model.layers_mut() {
            let group = layer.group;
            let frozen = layer.frozen;
            for (params, grads) in layer.kind.tensors_mut() {
                let v = &mut self.velocity[slot];
                slot += 1;
                if frozen {
                    continue;
                }
                let lr = T::of(lr.get(group));
                for ((w, vel), &g) in params.iter_mut().zip(v.iter_mut()).zip(grads.iter()) {
                    *vel = self.momentum * *vel + g;
                    *w = *w - lr * *vel;
                }
            }
        }
    }
}
