//! Small deterministic neural-network substrate with hand-derived gradients.

mod early_stop;
mod layers;
mod loss;
mod model;
mod optim;
mod train;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

pub use early_stop::{EarlyStopDecision, EarlyStopState};
pub use layers::{Conv2d, Dense, LayerKind, MaxPool2d};
pub use loss::softmax_cross_entropy;
pub use model::{ForwardPass, Layer, Model, ModelBuilder};
pub use optim::Sgd;
pub(crate) use train::argmax_rows;
pub use train::{evaluate, predict, Batcher, Evaluation, TrainConfig};

/// Floating-point element type of a model.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}` (expected f32 or f64)")),
        }
    }
}

/// One of the three layer groups spanning a network, input side first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Initial,
    Mid,
    Final,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Initial, Group::Mid, Group::Final];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Learning rate for each layer group at a single step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLr(pub [f64; 3]);

impl GroupLr {
    pub fn uniform(lr: f64) -> Self {
        GroupLr([lr; 3])
    }

    pub fn get(&self, group: Group) -> f64 {
        self.0[group.index()]
    }
}

/// Per-sample tensor shape, channel-planar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    /// A flat feature vector.
    pub const fn flat(len: usize) -> Self {
        Self::new(len, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
