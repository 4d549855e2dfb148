//! Acceptance suite: one `[PASS]`/`[FAIL]` line per criterion, non-zero
//! exit if any criterion fails. Built with `harness = false`, so
//! `cargo test --test acceptance` runs `main` directly.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{grad_check, random_batch, random_net, Quadratic};
use lrkit::bench::{
    confusion, prepare_data, run_conventional_on, run_optimized_on, speedup_ratio, write_report, BenchConfig,
    DatasetSpec,
};
use lrkit::data::{gaussian_blobs, BlobsSpec};
use lrkit::finder::{range_test, suggest_lr, RangeTestConfig};
use lrkit::groups::{freeze_groups, head_logits, precompute_features};
use lrkit::nn::{Batcher, Group, GroupLr, Model, Sgd};
use lrkit::schedule::{cosine_lr, dump_schedule, locate, lr_at, CosineCycleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(
        elapsed <= limit,
        format!("{detail}; {:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn schedule_exactness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=100_000u64);
        let t = rng.random_range(0..=len);
        let eta_max = 10f64.powf(rng.random_range(-6.0..1.0));
        let eta_min = if rng.random_bool(0.5) { 0.0 } else { eta_max * rng.random_range(0.0..1.0) };
        let cfg = CosineCycleConfig::new(eta_max, eta_min, len, 1).map_err(|e| e.to_string())?;
        let want = eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (PI * t as f64 / len as f64).cos());
        let got = cosine_lr(t, len, &cfg).map_err(|e| e.to_string())?;
        // relative to eta_max: near the cycle end with eta_min = 0 both
        // values are tiny and a pointwise ratio only measures cancellation
        worst = worst.max((got - want).abs() / eta_max);
        if t < len && lr_at(t, &cfg).map_err(|e| e.to_string())? != got {
            return Err(format!("lr_at disagrees with cosine_lr at t={t}, T={len}"));
        }
        let ends = cosine_lr(0, len, &cfg).unwrap() == eta_max && cosine_lr(len, len, &cfg).unwrap() == eta_min;
        if !ends {
            return Err(format!("endpoint identity broken for T={len}"));
        }
        let mirror = cosine_lr(t, len, &cfg).unwrap() + cosine_lr(len - t, len, &cfg).unwrap();
        worst = worst.max((mirror - (eta_max + eta_min)).abs() / eta_max);
    }
    let base = CosineCycleConfig::new(0.01, 0.0, 100, 1).unwrap();
    let mid = cosine_lr(50, 100, &base).unwrap();
    if (mid - 0.005).abs() > 1e-12 * 0.005 {
        return Err(format!("midpoint {mid}"));
    }
    if worst > 1e-12 {
        return Err(format!("max relative error {worst:e}"));
    }
    within(
        start.elapsed(),
        Duration::from_secs(1),
        format!("10^4 tuples, max relative error {worst:.1e}"),
    )
}

fn clm_boundaries() -> Outcome {
    let start = Instant::now();
    let cfg = CosineCycleConfig::new(0.01, 0.0, 100, 2).unwrap();
    let (mut end, mut len, mut oracle) = (0u64, 100u64, Vec::new());
    for _ in 0..4 {
        end += len;
        len *= 2;
        oracle.push(end);
    }
    // 1501 points so that iteration 1500 itself is in the dump
    let series = dump_schedule(&cfg, 1501).map_err(|e| e.to_string())?;
    let restarts: Vec<u64> = series
        .windows(2)
        .filter(|w| w[1].1 > w[0].1)
        .map(|w| w[1].0)
        .collect();
    if restarts != oracle {
        return Err(format!("restarts {restarts:?}, expected {oracle:?}"));
    }
    for &t in &oracle {
        if series[t as usize].1 != 0.01 || locate(t, &cfg).t_within != 0 {
            return Err(format!("iteration {t} is not an exact restart"));
        }
    }
    within(start.elapsed(), Duration::from_secs(1), format!("restarts at {restarts:?}"))
}

fn speedup_arithmetic() -> Outcome {
    let rows = [
        ("ResNet-50", 34039.0, 11817.0, 2.88),
        ("ResNet-101", 60639.0, 6673.0, 9.09),
        ("ResNet-152", 91888.0, 9012.0, 10.20),
        ("DenseNet-161", 54628.0, 7195.0, 7.59),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, conv, opt, printed) in rows {
        let s = speedup_ratio(conv, opt).map_err(|e| e.to_string())?;
        ok &= (s - printed).abs() <= 0.01;
        parts.push(format!("{name} {s:.3}"));
    }
    let r34 = speedup_ratio(17757.0, 9565.0).map_err(|e| e.to_string())?;
    parts.push(format!("ResNet-34 {r34:.3} (the reference value 1.84 does not follow from these totals)"));
    check(ok, parts.join(", "))
}

fn grid_lr(i: usize, n: usize, cfg: &RangeTestConfig) -> f64 {
    (cfg.lr_lo.ln() + (cfg.lr_hi / cfg.lr_lo).ln() * i as f64 / (n - 1) as f64).exp()
}

fn finder_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = RangeTestConfig::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for curvature in [[4.0, 4.0], [4.0, 1.0], [10.0, 0.5]] {
        let w = [1.0, 1.0];
        let trace = range_test(&mut Quadratic { curvature, w }, &cfg).map_err(|e| e.to_string())?;
        let suggestion = suggest_lr(&trace).map_err(|e| e.to_string())?;
        // 20 fixed-rate runs of the same length as the range test
        let mut best = (f64::INFINITY, f64::NAN);
        for i in 0..20 {
            let lr = grid_lr(i, 20, &cfg);
            let mut q = Quadratic { curvature, w };
            for _ in 0..cfg.n_steps {
                q.step(lr);
            }
            let loss = if q.loss().is_finite() { q.loss() } else { f64::INFINITY };
            if loss < best.0 {
                best = (loss, lr);
            }
        }
        let decades = (suggestion / best.1).log10();
        ok &= decades.abs() < 1.0;
        parts.push(format!(
            "{curvature:?}: suggestion {suggestion:.4}, best grid lr {:.4} ({decades:+.2} decades)",
            best.1
        ));
    }
    let out = within(start.elapsed(), Duration::from_secs(60), parts.join("; "));
    if ok {
        out
    } else {
        Err(out.unwrap_or_else(|e| e))
    }
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    for cfg in 0..20 {
        let mut m = random_net(&mut rng);
        let batch = rng.random_range(1..=3);
        let wd = if cfg % 2 == 0 { 0.0 } else { rng.random_range(0.0..0.1) };
        let (x, y) = random_batch(&mut rng, &m, batch);
        let r = grad_check(&mut m, &x, &y, wd, 1e-5);
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    let detail = format!("20 configs, {checked} coordinates ({skipped} skipped at kinks), max relative error {worst:.1e}");
    if worst >= 1e-4 || skipped * 50 > checked {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(60), detail)
}

fn freeze_and_cache() -> Outcome {
    let data = gaussian_blobs(
        &BlobsSpec {
            n_per_class: 100,
            ..BlobsSpec::default()
        },
        3,
    )
    .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut m: Model<f64> = Model::mlp(data.shape(), &[32, 16], data.n_classes(), &mut rng).unwrap();
    freeze_groups(&mut m, &[Group::Initial, Group::Mid]);
    let body = [m.parameters_of(Group::Initial), m.parameters_of(Group::Mid)];
    let cache = precompute_features(&m, &data, 32).map_err(|e| e.to_string())?;

    // phase 2: head only, from the cache, cosine restarts every epoch
    let mut batcher = Batcher::new(32, 7, false);
    let iters = data.len().div_ceil(32) as u64;
    let sched = CosineCycleConfig::new(0.05, 0.0, iters, 1).unwrap();
    let mut opt = Sgd::new(&m, 0.9).unwrap();
    let mut t = 0u64;
    while t < 200 {
        for batch in batcher.epoch(data.len()) {
            if t == 200 {
                break;
            }
            let (x, y) = cache.gather::<f64>(&batch);
            let pass = m.forward_from(m.head_start(), &x, batch.len()).map_err(|e| e.to_string())?;
            m.backward(&pass, &y, 1e-4).map_err(|e| e.to_string())?;
            opt.step(&mut m, GroupLr([0.0, 0.0, lr_at(t, &sched).unwrap()]));
            t += 1;
        }
    }
    if [m.parameters_of(Group::Initial), m.parameters_of(Group::Mid)] != body {
        return Err("frozen parameters changed".into());
    }
    let from_cache = head_logits(&m, &cache).map_err(|e| e.to_string())?;
    let x: Vec<f64> = data.images().iter().map(|&v| v as f64).collect();
    let full = m.forward(&x, data.len()).map_err(|e| e.to_string())?.into_logits();
    let diff = from_cache.iter().zip(&full).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(
        diff < 1e-6,
        format!("200 steps, frozen body bit-identical, max head logit diff {diff:.1e}"),
    )
}

fn blobs_cfg(seed: u64) -> BenchConfig {
    let mut cfg = BenchConfig {
        dataset: DatasetSpec::Blobs(BlobsSpec::default()),
        ..BenchConfig::default()
    };
    cfg.train.seed = seed;
    cfg
}

fn pipeline_property() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let cfg = blobs_cfg(seed);
        let data = prepare_data(&cfg).map_err(|e| e.to_string())?;
        let conv = run_conventional_on(&cfg, &data).map_err(|e| e.to_string())?;
        let opt = run_optimized_on(&cfg, &data).map_err(|e| e.to_string())?;
        let seed_ok = opt.reached_target
            && opt.total_seconds <= conv.total_seconds
            && opt.accuracy() >= conv.accuracy() - 0.01;
        ok &= seed_ok;
        parts.push(format!(
            "seed {seed}: acc {:.4} vs {:.4}, {:.2} s vs {:.2} s{}",
            opt.accuracy(),
            conv.accuracy(),
            opt.total_seconds,
            conv.total_seconds,
            if seed_ok { "" } else { " (fails)" }
        ));
    }
    let out = within(start.elapsed(), Duration::from_secs(600), parts.join("; "));
    if ok {
        out
    } else {
        Err(out.unwrap_or_else(|e| e))
    }
}

/// `history.csv` with the `seconds` column removed.
fn history_without_seconds(path: &Path) -> Result<Vec<String>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = header
        .iter()
        .position(|&h| h == "seconds")
        .ok_or("history.csv has no seconds column")?;
    Ok(text
        .lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|&(i, _)| i != col)
                .map(|(_, v)| v)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect())
}

fn determinism() -> Outcome {
    let mut cfg = blobs_cfg(11);
    cfg.set("blobs_per_class", "200").map_err(|e| e.to_string())?;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for dir in &dirs {
        let data = prepare_data(&cfg).map_err(|e| e.to_string())?;
        let conv = run_conventional_on(&cfg, &data).map_err(|e| e.to_string())?;
        let opt = run_optimized_on(&cfg, &data).map_err(|e| e.to_string())?;
        write_report(&conv, &dir.path().join("conventional")).map_err(|e| e.to_string())?;
        write_report(&opt, &dir.path().join("optimized")).map_err(|e| e.to_string())?;
    }
    let mut rows = 0;
    for scheme in ["conventional", "optimized"] {
        let a = history_without_seconds(&dirs[0].path().join(scheme).join("history.csv"))?;
        let b = history_without_seconds(&dirs[1].path().join(scheme).join("history.csv"))?;
        if a != b {
            return Err(format!("{scheme} histories differ"));
        }
        for file in ["lr_log.csv", "confusion.csv"] {
            let read = |d: &Path| fs::read(d.join(scheme).join(file)).unwrap_or_default();
            if read(dirs[0].path()) != read(dirs[1].path()) {
                return Err(format!("{scheme}/{file} differs"));
            }
        }
        rows += a.len() - 1;
    }
    Ok(format!("{rows} history rows identical across two runs"))
}

fn confusion_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for v in 0..1000 {
        let k = rng.random_range(1..=10usize);
        let n = rng.random_range(1..=400usize);
        let labels: Vec<u16> = (0..n).map(|_| rng.random_range(0..k) as u16).collect();
        let preds: Vec<u16> = (0..n).map(|_| rng.random_range(0..k) as u16).collect();
        let m = confusion(&preds, &labels, k).map_err(|e| e.to_string())?;
        for truth in 0..k {
            for pred in 0..k {
                let brute = labels
                    .iter()
                    .zip(&preds)
                    .filter(|&(&l, &p)| l as usize == truth && p as usize == pred)
                    .count() as u64;
                if m.get(truth, pred) != brute {
                    return Err(format!("vector {v}: cell ({truth},{pred}) {} vs {brute}", m.get(truth, pred)));
                }
            }
        }
        let hits = labels.iter().zip(&preds).filter(|(l, p)| l == p).count();
        if (m.accuracy() - hits as f64 / n as f64).abs() > 1e-12 {
            return Err(format!("vector {v}: accuracy {}", m.accuracy()));
        }
        let per_class: Vec<u64> = (0..k).map(|c| labels.iter().filter(|&&l| l as usize == c).count() as u64).collect();
        if m.row_sums() != per_class {
            return Err(format!("vector {v}: row sums"));
        }
    }
    // and on a real report
    let mut cfg = blobs_cfg(5);
    cfg.set("blobs_per_class", "150").map_err(|e| e.to_string())?;
    let data = prepare_data(&cfg).map_err(|e| e.to_string())?;
    let r = run_optimized_on(&cfg, &data).map_err(|e| e.to_string())?;
    let m = &r.confusion;
    let counts: Vec<u64> = data.valid.class_counts().iter().map(|&c| c as u64).collect();
    let ok = (r.accuracy() - m.trace() as f64 / m.total() as f64).abs() <= 1e-12
        && (r.phases.last().unwrap().final_valid_acc - m.trace() as f64 / m.total() as f64).abs() <= 1e-12
        && m.row_sums() == counts;
    check(ok, format!("1000 random vectors recounted; run report row sums {counts:?}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("schedule exactness", schedule_exactness),
        ("CLM boundaries", clm_boundaries),
        ("speedup arithmetic", speedup_arithmetic),
        ("LR finder vs fixed-LR grid", finder_oracle),
        ("gradient checks", gradient_checks),
        ("freeze and cache", freeze_and_cache),
        ("end-to-end pipeline", pipeline_property),
        ("determinism", determinism),
        ("confusion matrix", confusion_properties),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("[PASS] {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
