//! Three-group layer machinery: partitioning, freezing, cached head inputs
//! and per-group annealed learning rates.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{Batcher, Group, GroupLr, Model, Real};
use crate::schedule::{lr_at, CosineCycleConfig};

/// Base learning rate of each group, input side first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerGroupRates {
    pub initial: f64,
    pub mid: f64,
    /// Rate of the final group.
    pub last: f64,
}

impl Default for LayerGroupRates {
    fn default() -> Self {
        Self {
            initial: 1e-4,
            mid: 1e-3,
            last: 1e-2,
        }
    }
}

impl LayerGroupRates {
    pub fn validate(&self) -> Result<()> {
        let all = [self.initial, self.mid, self.last];
        if all.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidConfig(format!("group rates must be > 0, got {all:?}")));
        }
        if !(self.initial <= self.mid && self.mid <= self.last) {
            return Err(Error::InvalidConfig(format!(
                "group rates must satisfy initial <= mid <= final, got {all:?}"
            )));
        }
        Ok(())
    }

    pub fn as_group_lr(&self) -> GroupLr {
        GroupLr([self.initial, self.mid, self.last])
    }
}

/// Boundaries over parameterized layers: `[0, b1)` initial, `[b1, b2)` mid,
/// `[b2, n)` final.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupPartition {
    pub b1: usize,
    pub b2: usize,
}

/// Default boundaries for `n_param` parameterized layers: the classifier head
/// alone in the final group, the body split in half (the extra layer going to
/// the initial group). `None` below three layers.
pub fn default_boundaries(n_param: usize) -> Option<(usize, usize)> {
    if n_param < 3 {
        return None;
    }
    let b2 = n_param - 1;
    Some((b2.div_ceil(2), b2))
}

pub fn partition_layers<T: Real>(model: &mut Model<T>, b1: usize, b2: usize) -> Result<GroupPartition> {
    let n = model.param_layer_indices().len();
    if n < 3 {
        return Err(Error::InvalidPartition(format!(
            "need at least 3 parameterized layers, model has {n}"
        )));
    }
    if !(0 < b1 && b1 < b2 && b2 < n) {
        return Err(Error::InvalidPartition(format!(
            "boundaries must satisfy 0 < b1 < b2 < {n}, got b1={b1} b2={b2}"
        )));
    }
    model.tag_groups(b1, b2);
    Ok(GroupPartition { b1, b2 })
}

/// Freezes exactly the layers whose group is in `frozen` and unfreezes the rest.
pub fn freeze_groups<T: Real>(model: &mut Model<T>, frozen: &[Group]) {
    for layer in model.layers_mut() {
        layer.frozen = frozen.contains(&layer.group);
        if layer.frozen {
            layer.kind.zero_grads();
        }
    }
}

/// Rates of all three groups at `t_global`: each base rate times the shared
/// unit-peak annealing factor, so the ratios between groups never change.
pub fn group_lr_at(t_global: u64, rates: &LayerGroupRates, cfg: &CosineCycleConfig) -> Result<GroupLr> {
    let factor = lr_at(t_global, &cfg.unit())?;
    Ok(GroupLr([
        rates.initial * factor,
        rates.mid * factor,
        rates.last * factor,
    ]))
}

const CACHE_MAGIC: &[u8; 4] = b"LRFC";

/// Inputs to the final group for every sample of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    rows: usize,
    cols: usize,
    features: Vec<f32>,
    labels: Vec<u16>,
}

impl FeatureCache {
    pub fn new(rows: usize, cols: usize, features: Vec<f32>, labels: Vec<u16>) -> Result<Self> {
        if features.len() != rows * cols || labels.len() != rows {
            return Err(Error::Shape(format!(
                "{} features and {} labels for {rows} x {cols} cache",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature cache".into()));
        }
        Ok(Self {
            rows,
            cols,
            features,
            labels,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.cols..(i + 1) * self.cols]
    }

    pub fn gather<T: Real>(&self, indices: &[usize]) -> (Vec<T>, Vec<u16>) {
        let mut x = Vec::with_capacity(indices.len() * self.cols);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend(self.row(i).iter().map(|&v| T::of(v as f64)));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    /// `LRFC`, u32 rows, u32 cols, row-major f32 features, u16 labels; all
    /// little-endian.
    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        let dim = |n: usize| {
            u32::try_from(n).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "cache dimension exceeds u32"))
        };
        out.write_all(CACHE_MAGIC)?;
        out.write_all(&dim(self.rows)?.to_le_bytes())?;
        out.write_all(&dim(self.cols)?.to_le_bytes())?;
        for v in &self.features {
            out.write_all(&v.to_le_bytes())?;
        }
        for l in &self.labels {
            out.write_all(&l.to_le_bytes())?;
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let bad = |msg: String| Error::Data(format!("feature cache: {msg}"));
        let read_err = |e: io::Error| bad(e.to_string());
        let mut head = [0u8; 12];
        input.read_exact(&mut head).map_err(read_err)?;
        if &head[..4] != CACHE_MAGIC {
            return Err(bad("bad magic".into()));
        }
        let rows = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let cols = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let mut body = vec![0u8; rows * cols * 4];
        input.read_exact(&mut body).map_err(read_err)?;
        let features = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let mut raw_labels = vec![0u8; rows * 2];
        input.read_exact(&mut raw_labels).map_err(read_err)?;
        let labels = raw_labels
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
            .collect();
        Self::new(rows, cols, features, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = fs::File::create(path).map_err(|e| Error::io(path, 0, e))?;
        self.write_to(BufWriter::new(f)).map_err(|e| Error::io(path, 0, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, 0, e))?;
        Self::read_from(BufReader::new(f))
    }
}

/// One deterministic pass of `data` through the frozen body.
///
/// Every layer outside the final group must be frozen. Row `i` is the input
/// of the final group for sample `i`.
pub fn precompute_features<T: Real>(model: &Model<T>, data: &Dataset, batch_size: usize) -> Result<FeatureCache> {
    let head = model.head_start();
    if head >= model.layers().len() {
        return Err(Error::InvalidState("model has no final group".into()));
    }
    if let Some(i) = model.layers()[..head].iter().position(|l| l.kind.has_params() && !l.frozen) {
        return Err(Error::InvalidState(format!(
            "layer {i} outside the final group is not frozen"
        )));
    }
    let cols = model.layers()[head].input.len();
    let mut loader = Batcher::new(batch_size, 0, false);
    let mut features = Vec::with_capacity(data.len() * cols);
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(loader.batch_size()) {
        let (x, _) = loader.gather::<T>(data, chunk);
        let out = if head == 0 {
            x
        } else {
            model.forward_range(0, head, &x, chunk.len())?
        };
        features.extend(out.iter().map(|v| v.as_f64() as f32));
    }
    FeatureCache::new(data.len(), cols, features, data.labels().to_vec())
}

/// Final-group logits for every cached row.
pub fn head_logits<T: Real>(model: &Model<T>, cache: &FeatureCache) -> Result<Vec<T>> {
    let all: Vec<usize> = (0..cache.rows()).collect();
    let (x, _) = cache.gather::<T>(&all);
    Ok(model.forward_from(model.head_start(), &x, cache.rows())?.into_logits())
}
