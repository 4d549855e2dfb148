//! The two training protocols being compared.
//!
//! Conventional: fixed `lr1` until early stopping, then fixed `lr2` until
//! early stopping or the target accuracy.
//!
//! Optimized: an LR range test on the model with its body frozen, cosine
//! annealed head training on cached features (one cycle per epoch), then the
//! whole network with per-group rates under a shared annealing factor whose
//! cycles grow by `cycle_mult`.
//!
//! Wall time covers the training loops and their per-epoch validation only.
//! Both protocols start from the same seeded initialization.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{BenchConfig, DatasetSpec, ModelSpec};
use super::report::{confusion, EpochRecord, LrLogRow, PhaseReport, RunReport};
use crate::data::{gaussian_blobs, load_cifar10, normalize, split, Dataset, CIFAR10_MEAN, CIFAR10_STD};
use crate::error::{Error, Result};
use crate::finder::{range_test, suggest_lr, LRFinderTrace, ModelProbe};
use crate::groups::{freeze_groups, group_lr_at, precompute_features, FeatureCache};
use crate::nn::{
    argmax_rows, evaluate, softmax_cross_entropy, Batcher, EarlyStopDecision, EarlyStopState, Group, GroupLr, Model,
    Precision, Real, Sgd,
};
use crate::schedule::{lr_at, CosineCycleConfig};

pub const PHASE_FIXED_HIGH: &str = "fixed-high";
pub const PHASE_FIXED_LOW: &str = "fixed-low";
pub const PHASE_LR_FIND: &str = "lr-find";
pub const PHASE_SGDR: &str = "sgdr-head";
pub const PHASE_DLR: &str = "dlr-clm";

// Independent RNG streams derived from the one configured seed.
const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_BATCH: u64 = 4;
const STREAM_FINDER: u64 = 5;

fn stream(seed: u64, id: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(id)
}

/// Train and validation splits, plus whether training batches are augmented.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub valid: Dataset,
    pub augment: bool,
}

/// Loads (and for CIFAR-10, normalizes) the configured dataset and splits it.
pub fn prepare_data(cfg: &BenchConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let data = match &cfg.dataset {
        DatasetSpec::Blobs(spec) => gaussian_blobs(spec, stream(seed, STREAM_DATA))?,
        DatasetSpec::Cifar10 { path, n_per_class } => {
            let ds = load_cifar10(path, *n_per_class)?;
            if cfg.normalize {
                ds.map_images(|img, shape| normalize(img, shape, &CIFAR10_MEAN, &CIFAR10_STD))?
            } else {
                ds
            }
        }
    };
    let (train, valid) = split(&data, cfg.split.0, cfg.split.1, stream(seed, STREAM_SPLIT))?;
    let shape = train.shape();
    let augment = cfg.augment && shape.height > 1 && shape.width > 1;
    Ok(PreparedData { train, valid, augment })
}

pub fn build_model<T: Real>(cfg: &BenchConfig, data: &Dataset) -> Result<Model<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream(cfg.train.seed, STREAM_INIT));
    match &cfg.model {
        ModelSpec::Mlp { hidden } => Model::mlp(data.shape(), hidden, data.n_classes(), &mut rng),
        ModelSpec::Cnn => Model::small_cnn(data.shape(), data.n_classes(), &mut rng),
    }
}

fn range_test_on<T: Real>(cfg: &BenchConfig, model: &mut Model<T>, train: &Dataset) -> Result<LRFinderTrace> {
    let seed = stream(cfg.train.seed, STREAM_FINDER);
    let t = &cfg.train;
    let mut probe = ModelProbe::new(model, train, t.batch_size, t.momentum, t.weight_decay, seed)?;
    range_test(&mut probe, &cfg.finder)
}

/// The range test of the optimized run, on the freshly initialized model.
///
/// With `freeze_body` only the final group trains, as in the pipeline;
/// otherwise every layer does. Model parameters are restored afterwards, so
/// the trace is all that survives.
pub fn find_lr(cfg: &BenchConfig, data: &PreparedData, freeze_body: bool) -> Result<LRFinderTrace> {
    cfg.validate()?;
    check_data(data)?;
    let frozen: &[Group] = if freeze_body { &[Group::Initial, Group::Mid] } else { &[] };
    match cfg.train.precision {
        Precision::F32 => {
            let mut model = build_model::<f32>(cfg, &data.train)?;
            freeze_groups(&mut model, frozen);
            range_test_on(cfg, &mut model, &data.train)
        }
        Precision::F64 => {
            let mut model = build_model::<f64>(cfg, &data.train)?;
            freeze_groups(&mut model, frozen);
            range_test_on(cfg, &mut model, &data.train)
        }
    }
}

pub fn run_conventional(cfg: &BenchConfig) -> Result<RunReport> {
    let data = prepare_data(cfg)?;
    run_conventional_on(cfg, &data)
}

pub fn run_optimized(cfg: &BenchConfig) -> Result<RunReport> {
    let data = prepare_data(cfg)?;
    run_optimized_on(cfg, &data)
}

pub fn run_conventional_on(cfg: &BenchConfig, data: &PreparedData) -> Result<RunReport> {
    cfg.validate()?;
    match cfg.train.precision {
        Precision::F32 => conventional::<f32>(cfg, data),
        Precision::F64 => conventional::<f64>(cfg, data),
    }
}

pub fn run_optimized_on(cfg: &BenchConfig, data: &PreparedData) -> Result<RunReport> {
    cfg.validate()?;
    match cfg.train.precision {
        Precision::F32 => optimized::<f32>(cfg, data),
        Precision::F64 => optimized::<f64>(cfg, data),
    }
}

/// Mutable state threaded through the epochs of one run.
struct Run {
    history: Vec<EpochRecord>,
    lr_log: Vec<LrLogRow>,
    batcher: Batcher,
    accuracy: f64,
    predictions: Vec<u16>,
}

/// Where training batches come from.
enum Source<'a> {
    Images(&'a Dataset),
    Cache(&'a FeatureCache),
}

impl Source<'_> {
    fn len(&self) -> usize {
        match self {
            Source::Images(d) => d.len(),
            Source::Cache(c) => c.rows(),
        }
    }
}

struct EpochResult {
    train_loss: f64,
    valid_loss: f64,
    accuracy: f64,
}

impl Run {
    fn new(cfg: &BenchConfig, data: &PreparedData, accuracy: f64, predictions: Vec<u16>) -> Self {
        Self {
            history: Vec::new(),
            lr_log: Vec::new(),
            batcher: Batcher::new(cfg.train.batch_size, stream(cfg.train.seed, STREAM_BATCH), data.augment),
            accuracy,
            predictions,
        }
    }

    /// One pass over `source`; `lr(t)` gives the group rates at phase
    /// iteration `t`, which advances by one per mini-batch.
    #[allow(clippy::too_many_arguments)]
    fn epoch<T: Real>(
        &mut self,
        phase: &str,
        model: &mut Model<T>,
        opt: &mut Sgd<T>,
        source: &Source<'_>,
        weight_decay: f64,
        t: &mut u64,
        lr: &dyn Fn(u64) -> Result<GroupLr>,
    ) -> Result<f64> {
        let start = match source {
            Source::Images(_) => 0,
            Source::Cache(_) => model.head_start(),
        };
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in self.batcher.epoch(source.len()) {
            let (x, y) = match source {
                Source::Images(d) => self.batcher.gather::<T>(d, &batch),
                Source::Cache(c) => c.gather::<T>(&batch),
            };
            let rates = lr(*t)?;
            let pass = model.forward_from(start, &x, batch.len())?;
            let loss = model.backward(&pass, &y, weight_decay)?;
            opt.step(model, rates);
            self.lr_log.push(LrLogRow {
                phase: phase.to_string(),
                t: *t,
                lr_initial: rates.0[0],
                lr_mid: rates.0[1],
                lr_final: rates.0[2],
            });
            loss_sum += loss.as_f64() * batch.len() as f64;
            seen += batch.len();
            *t += 1;
        }
        Ok(loss_sum / seen as f64)
    }

    fn validate<T: Real>(&mut self, model: &Model<T>, valid: &Source<'_>, batch_size: usize) -> Result<(f64, f64)> {
        let (loss, predictions) = match valid {
            Source::Images(d) => {
                let e = evaluate(model, d, batch_size)?;
                (e.loss, e.predictions)
            }
            Source::Cache(c) => cache_eval(model, c, batch_size)?,
        };
        let labels: &[u16] = match valid {
            Source::Images(d) => d.labels(),
            Source::Cache(c) => c.labels(),
        };
        let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
        self.accuracy = correct as f64 / labels.len() as f64;
        self.predictions = predictions;
        Ok((loss, self.accuracy))
    }

    /// Epoch loop shared by every training phase. Stops on early stopping,
    /// `max_epochs`, or, when `target = Some((goal, min_epochs))`, once at
    /// least `min_epochs` have run and validation accuracy has reached `goal`.
    #[allow(clippy::too_many_arguments)]
    fn phase<T: Real>(
        &mut self,
        cfg: &BenchConfig,
        name: &str,
        model: &mut Model<T>,
        train: &Source<'_>,
        valid: &Source<'_>,
        weight_decay: f64,
        max_epochs: usize,
        target: Option<(f64, usize)>,
        lr: &dyn Fn(u64) -> Result<GroupLr>,
    ) -> Result<(usize, f64)> {
        let mut opt = Sgd::new(model, cfg.train.momentum)?;
        let mut stopper = EarlyStopState::new(cfg.patience, cfg.min_delta);
        let mut t = 0u64;
        let mut epochs = 0;
        let clock = Instant::now();
        while epochs < max_epochs && !target.is_some_and(|(goal, min)| epochs >= min && self.accuracy >= goal) {
            let started = Instant::now();
            let epoch_lr = lr(t)?.get(Group::Final);
            let train_loss = self.epoch(name, model, &mut opt, train, weight_decay, &mut t, lr)?;
            let (valid_loss, accuracy) = self.validate(model, valid, cfg.train.batch_size)?;
            epochs += 1;
            self.record(name, epochs, epoch_lr, EpochResult { train_loss, valid_loss, accuracy }, started);
            if stopper.update(accuracy) == EarlyStopDecision::Stop {
                break;
            }
        }
        Ok((epochs, clock.elapsed().as_secs_f64()))
    }

    fn record(&mut self, phase: &str, epoch: usize, lr: f64, r: EpochResult, started: Instant) {
        self.history.push(EpochRecord {
            epoch,
            phase: phase.to_string(),
            lr,
            train_loss: r.train_loss,
            valid_loss: r.valid_loss,
            valid_acc: r.accuracy,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    fn finish(self, cfg: &BenchConfig, scheme: &str, data: &PreparedData, phases: Vec<PhaseReport>) -> Result<RunReport> {
        let matrix = confusion(&self.predictions, data.valid.labels(), data.valid.n_classes())?;
        let accuracy = matrix.accuracy();
        Ok(RunReport {
            scheme: scheme.to_string(),
            total_seconds: phases.iter().map(|p| p.wall_seconds).sum(),
            phases,
            confusion: matrix,
            class_names: data.valid.class_names().to_vec(),
            target_accuracy: cfg.target_accuracy,
            reached_target: accuracy >= cfg.target_accuracy,
            eta_max: None,
            history: self.history,
            lr_log: self.lr_log,
            finder: None,
        })
    }
}

/// Loss and predictions of the final group over a cache.
fn cache_eval<T: Real>(model: &Model<T>, cache: &FeatureCache, batch_size: usize) -> Result<(f64, Vec<u16>)> {
    let k = model.n_classes();
    let start = model.head_start();
    let all: Vec<usize> = (0..cache.rows()).collect();
    let mut loss_sum = 0.0;
    let mut predictions = Vec::with_capacity(cache.rows());
    for chunk in all.chunks(batch_size.max(1)) {
        let (x, y) = cache.gather::<T>(chunk);
        let logits = model.forward_from(start, &x, chunk.len())?.into_logits();
        let (loss, _) = softmax_cross_entropy(&logits, &y, k)?;
        loss_sum += loss.as_f64() * chunk.len() as f64;
        predictions.extend(argmax_rows(&logits, k));
    }
    Ok((loss_sum / cache.rows() as f64, predictions))
}

fn check_data(data: &PreparedData) -> Result<()> {
    if data.train.is_empty() || data.valid.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

fn conventional<T: Real>(cfg: &BenchConfig, data: &PreparedData) -> Result<RunReport> {
    check_data(data)?;
    let mut model = build_model::<T>(cfg, &data.train)?;
    freeze_groups(&mut model, &[]);
    let initial = evaluate(&model, &data.valid, cfg.train.batch_size)?;
    let mut run = Run::new(cfg, data, initial.accuracy, initial.predictions);
    let train = Source::Images(&data.train);
    let valid = Source::Images(&data.valid);
    let wd = cfg.conventional_weight_decay;
    let epochs = cfg.train.max_epochs;

    let mut phases = Vec::with_capacity(2);
    for (name, rate, target) in [
        (PHASE_FIXED_HIGH, cfg.lr1, None),
        (PHASE_FIXED_LOW, cfg.lr2, Some((cfg.target_accuracy, 0))),
    ] {
        let lr = move |_t: u64| -> Result<GroupLr> { Ok(GroupLr::uniform(rate)) };
        let (epochs_run, seconds) = run.phase(cfg, name, &mut model, &train, &valid, wd, epochs, target, &lr)?;
        phases.push(PhaseReport {
            name: name.to_string(),
            epochs_run,
            final_valid_acc: run.accuracy,
            wall_seconds: seconds,
            lr: rate,
        });
    }
    run.finish(cfg, "conventional", data, phases)
}

fn optimized<T: Real>(cfg: &BenchConfig, data: &PreparedData) -> Result<RunReport> {
    check_data(data)?;
    let mut model = build_model::<T>(cfg, &data.train)?;
    let initial = evaluate(&model, &data.valid, cfg.train.batch_size)?;
    let mut run = Run::new(cfg, data, initial.accuracy, initial.predictions);
    let wd = cfg.train.weight_decay;
    let batch = cfg.train.batch_size;
    let mut phases = Vec::with_capacity(3);

    // Range test with the body frozen, as the head is what trains next.
    freeze_groups(&mut model, &[Group::Initial, Group::Mid]);
    let clock = Instant::now();
    let trace = range_test_on(cfg, &mut model, &data.train)?;
    let eta_max = suggest_lr(&trace)?;
    phases.push(PhaseReport {
        name: PHASE_LR_FIND.to_string(),
        epochs_run: 0,
        final_valid_acc: run.accuracy,
        wall_seconds: clock.elapsed().as_secs_f64(),
        lr: eta_max,
    });
    if !(eta_max > cfg.schedule.eta_min) {
        return Err(Error::InvalidConfig(format!(
            "suggested rate {eta_max} does not exceed eta_min {}",
            cfg.schedule.eta_min
        )));
    }

    // Head only, on cached body outputs: one cosine cycle per epoch.
    let clock = Instant::now();
    let train_cache = precompute_features(&model, &data.train, batch)?;
    let valid_cache = precompute_features(&model, &data.valid, batch)?;
    let precompute_seconds = clock.elapsed().as_secs_f64();
    let iters = run.batcher.iters_per_epoch(train_cache.rows()) as u64;
    let sgdr = CosineCycleConfig::new(eta_max, cfg.schedule.eta_min, iters, 1)?;
    let lr = move |t: u64| -> Result<GroupLr> { Ok(GroupLr([0.0, 0.0, lr_at(t, &sgdr)?])) };
    let (epochs_run, seconds) = run.phase(
        cfg,
        PHASE_SGDR,
        &mut model,
        &Source::Cache(&train_cache),
        &Source::Cache(&valid_cache),
        wd,
        cfg.sgdr_epochs.min(cfg.train.max_epochs),
        None,
        &lr,
    )?;
    phases.push(PhaseReport {
        name: PHASE_SGDR.to_string(),
        epochs_run,
        final_valid_acc: run.accuracy,
        wall_seconds: precompute_seconds + seconds,
        lr: eta_max,
    });

    // Everything trainable, per-group rates, growing cycles.
    freeze_groups(&mut model, &[]);
    // group_lr_at anneals each base rate towards zero; only the cycle shape
    // of this config matters.
    let clm = CosineCycleConfig::new(1.0, 0.0, cfg.schedule.t0 * iters, cfg.schedule.mult)?;
    let rates = cfg.rates;
    let lr = move |t: u64| group_lr_at(t, &rates, &clm);
    let (epochs_run, seconds) = run.phase(
        cfg,
        PHASE_DLR,
        &mut model,
        &Source::Images(&data.train),
        &Source::Images(&data.valid),
        wd,
        cfg.train.max_epochs,
        Some((cfg.target_accuracy, 1)),
        &lr,
    )?;
    phases.push(PhaseReport {
        name: PHASE_DLR.to_string(),
        epochs_run,
        final_valid_acc: run.accuracy,
        wall_seconds: seconds,
        lr: cfg.rates.last,
    });

    let mut report = run.finish(cfg, "optimized", data, phases)?;
    report.eta_max = Some(eta_max);
    report.finder = Some(trace);
    Ok(report)
}
