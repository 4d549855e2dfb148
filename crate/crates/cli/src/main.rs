//! `lrkit` command-line harness.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error, 3 data
//! error, 4 the range test found no descending loss segment.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lrkit::bench::{self, BenchConfig, RunReport};
use lrkit::finder::{suggest_lr, LRFinderTrace};
use lrkit::schedule::{dump_schedule, write_schedule_csv, CosineCycleConfig};
use lrkit::Error;

#[derive(Parser, Debug)]
#[command(name = "lrkit", version, about = "Learning-rate schedule benchmark harness")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// `blobs` or `cifar10:PATH`.
    #[arg(long, global = true, value_name = "SPEC")]
    dataset: Option<String>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, global = true, value_enum)]
    precision: Option<PrecisionArg>,
    /// Extra `key=value` config overrides, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModelArg {
    Mlp,
    Cnn,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Scheme {
    Conventional,
    Optimized,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the LR range test and print the suggested rate.
    LrFind {
        /// Train every layer during the test instead of only the final group.
        #[arg(long)]
        full_model: bool,
    },
    /// Run one training scheme and write its report.
    Train {
        #[arg(long, value_enum)]
        scheme: Scheme,
    },
    /// Run the conventional then the optimized scheme and report the speedup.
    Benchmark,
    /// Write the cosine schedule with restarts as `t,lr` CSV.
    ScheduleDump {
        #[arg(long, default_value_t = 0.01)]
        eta_max: f64,
        #[arg(long, default_value_t = 0.0)]
        eta_min: f64,
        #[arg(long, default_value_t = 100)]
        t0: u64,
        #[arg(long, default_value_t = 2)]
        mult: u64,
        #[arg(long, default_value_t = 1500)]
        iters: u64,
    },
    /// Build a confusion matrix from a `label,pred` CSV.
    Confusion {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Number of classes; defaults to the largest id seen plus one.
        #[arg(long)]
        classes: Option<usize>,
    },
}

const DEFAULT_OUT: &str = "lrkit-out";

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidPartition(_) => 2,
        Error::NoDescentFound | Error::TraceTooShort { .. } => 4,
        e if e.is_data_error() => 3,
        _ => 1,
    }
}

fn load_config(common: &Common) -> lrkit::Result<BenchConfig> {
    let mut cfg = match &common.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::default(),
    };
    if let Some(dataset) = &common.dataset {
        cfg.set("dataset", dataset)?;
    }
    if let Some(model) = common.model {
        cfg.set("model", if matches!(model, ModelArg::Mlp) { "mlp" } else { "cnn" })?;
    }
    if let Some(p) = common.precision {
        cfg.set("precision", if matches!(p, PrecisionArg::F32) { "f32" } else { "f64" })?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        offset: 0,
        source: e,
    }
}

fn write_file(path: &Path, contents: &str) -> lrkit::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn write_trace(trace: &LRFinderTrace, dir: &Path) -> lrkit::Result<PathBuf> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join("finder.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    trace.write_csv(io::BufWriter::new(file)).map_err(io_err(&path))?;
    Ok(path)
}

fn summary_line(r: &RunReport) -> String {
    format!(
        "{}: accuracy {:.4}, {:.3} s, target {}",
        r.scheme,
        r.accuracy(),
        r.total_seconds,
        if r.reached_target { "reached" } else { "not reached" }
    )
}

fn run(cli: Cli) -> lrkit::Result<()> {
    let common = &cli.common;
    match cli.command {
        Command::LrFind { full_model } => {
            let cfg = load_config(common)?;
            let data = bench::prepare_data(&cfg)?;
            let trace = bench::find_lr(&cfg, &data, !full_model)?;
            let path = write_trace(&trace, &out_dir(common))?;
            println!("trace: {} ({} steps, {:?})", path.display(), trace.steps.len(), trace.stop_reason);
            let lr = suggest_lr(&trace)?;
            println!("suggested lr: {lr}");
        }
        Command::Train { scheme } => {
            let cfg = load_config(common)?;
            let report = match scheme {
                Scheme::Conventional => bench::run_conventional(&cfg)?,
                Scheme::Optimized => bench::run_optimized(&cfg)?,
            };
            let dir = out_dir(common);
            bench::write_report(&report, &dir)?;
            print!("{}", bench::render_text(&report));
            println!("report written to {}", dir.display());
        }
        Command::Benchmark => {
            let cfg = load_config(common)?;
            let data = bench::prepare_data(&cfg)?;
            // sequential on purpose: the two wall times must not compete
            let conventional = bench::run_conventional_on(&cfg, &data)?;
            let optimized = bench::run_optimized_on(&cfg, &data)?;
            let dir = out_dir(common);
            bench::write_report(&conventional, &dir.join("conventional"))?;
            bench::write_report(&optimized, &dir.join("optimized"))?;
            let speedup = bench::speedup(&conventional, &optimized)?;
            let mut csv = String::from("scheme,total_seconds,final_valid_acc,reached_target\n");
            for r in [&conventional, &optimized] {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    r.scheme,
                    r.total_seconds,
                    r.accuracy(),
                    r.reached_target
                ));
            }
            write_file(&dir.join("comparison.csv"), &csv)?;
            let text = format!(
                "{}\n{}\nspeedup: {speedup:.3}\n",
                summary_line(&conventional),
                summary_line(&optimized)
            );
            write_file(&dir.join("summary.txt"), &text)?;
            print!("{text}");
            println!("reports written to {}", dir.display());
        }
        Command::ScheduleDump {
            eta_max,
            eta_min,
            t0,
            mult,
            iters,
        } => {
            let sched = CosineCycleConfig::new(eta_max, eta_min, t0, mult)?;
            let series = dump_schedule(&sched, iters)?;
            match &common.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(io_err(dir))?;
                    let path = dir.join("schedule.csv");
                    let file = fs::File::create(&path).map_err(io_err(&path))?;
                    write_schedule_csv(io::BufWriter::new(file), &series).map_err(io_err(&path))?;
                    println!("schedule written to {}", path.display());
                }
                None => {
                    let stdout = io::stdout();
                    write_schedule_csv(stdout.lock(), &series).map_err(io_err(Path::new("<stdout>")))?;
                }
            }
        }
        Command::Confusion { input, classes } => {
            let (labels, preds) = read_pairs(&input)?;
            let n = classes.unwrap_or_else(|| {
                labels.iter().chain(&preds).map(|&c| c as usize + 1).max().unwrap_or(1)
            });
            let matrix = bench::confusion(&preds, &labels, n)?;
            let names: Vec<String> = (0..n).map(|c| c.to_string()).collect();
            match &common.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(io_err(dir))?;
                    let path = dir.join("confusion.csv");
                    bench::write_confusion_csv(&path, &matrix, &names)?;
                    println!("confusion written to {}", path.display());
                }
                None => {
                    let mut out = io::stdout().lock();
                    let _ = writeln!(out, "true\\predicted,{}", names.join(","));
                    for (name, row) in names.iter().zip(matrix.counts()) {
                        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                        let _ = writeln!(out, "{name},{}", cells.join(","));
                    }
                }
            }
            println!("accuracy: {} ({} / {})", matrix.accuracy(), matrix.trace(), matrix.total());
        }
    }
    Ok(())
}

/// Reads `label,pred` rows (with that header).
fn read_pairs(path: &Path) -> lrkit::Result<(Vec<u16>, Vec<u16>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "label,pred" => {}
        _ => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: 0,
                msg: "expected header `label,pred`".into(),
            })
        }
    }
    let (mut labels, mut preds) = (Vec::new(), Vec::new());
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format {
            path: path.to_path_buf(),
            offset: (line.as_ptr() as usize - text.as_ptr() as usize) as u64,
            msg: format!("line {}: expected two class ids, got `{line}`", n + 1),
        };
        let (l, p) = line.split_once(',').ok_or_else(bad)?;
        labels.push(l.trim().parse().map_err(|_| bad())?);
        preds.push(p.trim().parse().map_err(|_| bad())?);
    }
    Ok((labels, preds))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::NoDescentFound) {
                eprintln!("hint: widen --set finder_lr_lo / finder_lr_hi or raise finder_steps");
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
