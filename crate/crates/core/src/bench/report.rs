//! Run reports, confusion matrices and their CSV / text forms.
//!
//! Files written by [`write_report`]:
//!
//! | file          | columns                                                  |
//! |---------------|----------------------------------------------------------|
//! | `phases.csv`  | `phase,epochs_run,final_valid_acc,wall_seconds,lr`       |
//! | `history.csv` | `epoch,phase,lr,train_loss,valid_loss,valid_acc,seconds` |
//! | `lr_log.csv`  | `phase,t,lr_initial,lr_mid,lr_final`                     |
//! | `confusion.csv` | class-name header row and column, true classes as rows |
//! | `finder.csv`  | `step,lr,raw_loss,smoothed_loss` (optimized runs only)   |
//! | `report.txt`  | human-readable summary                                   |
//!
//! Floats are written in shortest round-trip form, so parsing a file back
//! yields the exact in-memory values.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finder::LRFinderTrace;

/// Counts with true classes as rows and predictions as columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let n = counts.len();
        if n == 0 || counts.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("confusion counts must be a non-empty square grid".into()));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Samples per true class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `trace / total`; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.trace() as f64 / total as f64,
        }
    }
}

/// `counts[i][j]` is the number of samples labelled `i` and predicted `j`.
pub fn confusion(preds: &[u16], labels: &[u16], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if n_classes == 0 {
        return Err(Error::InvalidConfig("n_classes must be >= 1".into()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (k, (&p, &l)) in preds.iter().zip(labels).enumerate() {
        let (p, l) = (p as usize, l as usize);
        if p >= n_classes || l >= n_classes {
            return Err(Error::Data(format!(
                "sample {k}: class id out of range (label {l}, prediction {p}, n_classes {n_classes})"
            )));
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    #[serde(rename = "phase")]
    pub name: String,
    pub epochs_run: usize,
    pub final_valid_acc: f64,
    pub wall_seconds: f64,
    /// Fixed rate for constant-rate phases, the suggestion for the range
    /// test, and the peak final-group rate for annealed phases.
    pub lr: f64,
}

/// One row per training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based within the phase.
    pub epoch: usize,
    pub phase: String,
    /// Final-group rate at the first iteration of the epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
    pub seconds: f64,
}

/// Per-iteration learning rates, one column per layer group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrLogRow {
    pub phase: String,
    /// 0-based iteration within the phase.
    pub t: u64,
    pub lr_initial: f64,
    pub lr_mid: f64,
    pub lr_final: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scheme: String,
    pub phases: Vec<PhaseReport>,
    /// Sum of phase wall times.
    pub total_seconds: f64,
    pub confusion: ConfusionMatrix,
    pub class_names: Vec<String>,
    pub target_accuracy: f64,
    pub reached_target: bool,
    /// Finder suggestion; `None` for the conventional scheme.
    pub eta_max: Option<f64>,
    pub history: Vec<EpochRecord>,
    pub lr_log: Vec<LrLogRow>,
    pub finder: Option<LRFinderTrace>,
}

impl RunReport {
    /// Final validation accuracy, `trace / total` of the confusion matrix.
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.name == name)
    }
}

/// `conventional / optimized` total wall time.
pub fn speedup_ratio(conventional_seconds: f64, optimized_seconds: f64) -> Result<f64> {
    if !(optimized_seconds > 0.0 && optimized_seconds.is_finite()) {
        return Err(Error::InvalidState(format!(
            "optimized total time must be > 0, got {optimized_seconds}"
        )));
    }
    if !(conventional_seconds > 0.0 && conventional_seconds.is_finite()) {
        return Err(Error::InvalidState(format!(
            "conventional total time must be > 0, got {conventional_seconds}"
        )));
    }
    Ok(conventional_seconds / optimized_seconds)
}

pub fn speedup(conventional: &RunReport, optimized: &RunReport) -> Result<f64> {
    speedup_ratio(conventional.total_seconds, optimized.total_seconds)
}

fn csv_writer(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| Error::io(&path, 0, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_rows<S: Serialize>(dir: &Path, name: &str, rows: &[S], header: &[&str]) -> Result<()> {
    let mut w = csv_writer(dir, name)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(name), 0, e))?;
    Ok(())
}

fn read_rows<D: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<D>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const PHASES_HEADER: [&str; 5] = ["phase", "epochs_run", "final_valid_acc", "wall_seconds", "lr"];
pub const HISTORY_HEADER: [&str; 7] = ["epoch", "phase", "lr", "train_loss", "valid_loss", "valid_acc", "seconds"];
pub const LR_LOG_HEADER: [&str; 5] = ["phase", "t", "lr_initial", "lr_mid", "lr_final"];

pub fn write_confusion_csv(path: &Path, matrix: &ConfusionMatrix, class_names: &[String]) -> Result<()> {
    if class_names.len() != matrix.n_classes() {
        return Err(Error::Shape(format!(
            "{} class names for a {}-class matrix",
            class_names.len(),
            matrix.n_classes()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, 0, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(class_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in class_names.iter().zip(matrix.counts()) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(u64::to_string));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io(path, 0, e))?;
    Ok(())
}

/// Reads a grid written by [`write_confusion_csv`].
pub fn read_confusion_csv(path: &Path) -> Result<(ConfusionMatrix, Vec<String>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut counts = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record?;
        let name = record.get(0).unwrap_or_default();
        if header.get(i).map(String::as_str) != Some(name) {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: i as u64 + 1,
                msg: format!("row label `{name}` does not match the header"),
            });
        }
        let row = record
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<u64>().map_err(|_| Error::Format {
                    path: path.to_path_buf(),
                    offset: i as u64 + 1,
                    msg: format!("bad count `{c}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        counts.push(row);
    }
    Ok((ConfusionMatrix::from_counts(counts)?, header))
}

pub fn read_phases_csv(path: &Path) -> Result<Vec<PhaseReport>> {
    read_rows(path)
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    read_rows(path)
}

pub fn read_lr_log_csv(path: &Path) -> Result<Vec<LrLogRow>> {
    read_rows(path)
}

/// Human-readable summary.
pub fn render_text(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scheme: {}", report.scheme);
    if let Some(eta) = report.eta_max {
        let _ = writeln!(s, "eta_max (finder suggestion): {eta}");
    }
    let _ = writeln!(s, "\n{:<14} {:>7} {:>10} {:>12} {:>12}", "phase", "epochs", "valid_acc", "seconds", "lr");
    for p in &report.phases {
        let _ = writeln!(
            s,
            "{:<14} {:>7} {:>10.4} {:>12.3} {:>12.3e}",
            p.name, p.epochs_run, p.final_valid_acc, p.wall_seconds, p.lr
        );
    }
    let _ = writeln!(s, "\ntotal seconds: {:.3}", report.total_seconds);
    let _ = writeln!(
        s,
        "final validation accuracy: {:.4} ({} / {})",
        report.accuracy(),
        report.confusion.trace(),
        report.confusion.total()
    );
    let _ = writeln!(
        s,
        "target {:.4}: {}",
        report.target_accuracy,
        if report.reached_target { "reached" } else { "not reached" }
    );
    let _ = writeln!(s, "\nconfusion (rows = true class, columns = predicted):");
    let width = report
        .class_names
        .iter()
        .map(String::len)
        .chain(std::iter::once(6))
        .max()
        .unwrap_or(6);
    let _ = write!(s, "{:width$}", "");
    for name in &report.class_names {
        let _ = write!(s, " {name:>width$}");
    }
    let _ = writeln!(s);
    for (name, row) in report.class_names.iter().zip(report.confusion.counts()) {
        let _ = write!(s, "{name:width$}");
        for c in row {
            let _ = write!(s, " {c:>width$}");
        }
        let _ = writeln!(s);
    }
    s
}

/// Writes every report file into `dir`, creating it if needed.
///
/// A report always holds at least one validation sample; empty runs are
/// rejected before training starts.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, 0, e))?;
    write_rows(dir, "phases.csv", &report.phases, &PHASES_HEADER)?;
    write_rows(dir, "history.csv", &report.history, &HISTORY_HEADER)?;
    write_rows(dir, "lr_log.csv", &report.lr_log, &LR_LOG_HEADER)?;
    write_confusion_csv(&dir.join("confusion.csv"), &report.confusion, &report.class_names)?;
    if let Some(trace) = &report.finder {
        let path = dir.join("finder.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, 0, e))?;
        trace
            .write_csv(BufWriter::new(file))
            .map_err(|e| Error::io(&path, 0, e))?;
    }
    let path = dir.join("report.txt");
    fs::write(&path, render_text(report)).map_err(|e| Error::io(&path, 0, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> RunReport {
        let phases = vec![
            PhaseReport {
                name: "fixed-high".into(),
                epochs_run: 3,
                final_valid_acc: 0.75,
                wall_seconds: 0.125,
                lr: 0.01,
            },
            PhaseReport {
                name: "fixed-low".into(),
                epochs_run: 1,
                final_valid_acc: 2.0 / 3.0,
                wall_seconds: 0.1,
                lr: 0.001,
            },
        ];
        RunReport {
            scheme: "conventional".into(),
            total_seconds: phases.iter().map(|p| p.wall_seconds).sum(),
            phases,
            confusion: confusion(&[0, 1, 1], &[0, 1, 0], 2).unwrap(),
            class_names: vec!["cat".into(), "dog".into()],
            target_accuracy: 0.9,
            reached_target: false,
            eta_max: None,
            history: vec![EpochRecord {
                epoch: 1,
                phase: "fixed-high".into(),
                lr: 0.01,
                train_loss: 1.0 / 3.0,
                valid_loss: 0.1 + 0.2,
                valid_acc: 2.0 / 3.0,
                seconds: 1e-7,
            }],
            lr_log: vec![LrLogRow {
                phase: "fixed-high".into(),
                t: 0,
                lr_initial: 0.01,
                lr_mid: 0.01,
                lr_final: 0.01,
            }],
            finder: None,
        }
    }

    #[test]
    fn confusion_examples() {
        let m = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.counts(), &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let m = confusion(&[0, 0, 0, 0], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(m.counts(), &[vec![1, 0, 0], vec![2, 0, 0], vec![1, 0, 0]]);
        assert_eq!(m.row_sums(), vec![1, 2, 1]);
        assert_eq!(m.accuracy(), 0.25);
    }

    #[test]
    fn confusion_rejects_bad_input() {
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
    }

    #[test]
    fn speedup_examples() {
        assert!((speedup_ratio(91888.0, 9012.0).unwrap() - 10.20).abs() <= 0.01);
        assert!((speedup_ratio(54628.0, 7195.0).unwrap() - 7.59).abs() <= 0.01);
        assert_eq!(speedup_ratio(5.0, 5.0).unwrap(), 1.0);
        assert!(speedup_ratio(5.0, 0.0).is_err());
    }

    #[test]
    fn round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let r = report();
        write_report(&r, dir.path()).unwrap();
        assert_eq!(read_phases_csv(&dir.path().join("phases.csv")).unwrap(), r.phases);
        assert_eq!(read_history_csv(&dir.path().join("history.csv")).unwrap(), r.history);
        assert_eq!(read_lr_log_csv(&dir.path().join("lr_log.csv")).unwrap(), r.lr_log);
        let (m, names) = read_confusion_csv(&dir.path().join("confusion.csv")).unwrap();
        assert_eq!((m, names), (r.confusion.clone(), r.class_names.clone()));
        assert!(!dir.path().join("finder.csv").exists());
    }

    #[test]
    fn golden_column_order() {
        let dir = tempfile::tempdir().unwrap();
        write_report(&report(), dir.path()).unwrap();
        let first = |f: &str| {
            fs::read_to_string(dir.path().join(f))
                .unwrap()
                .lines()
                .next()
                .unwrap()
                .to_string()
        };
        assert_eq!(first("phases.csv"), "phase,epochs_run,final_valid_acc,wall_seconds,lr");
        assert_eq!(first("history.csv"), "epoch,phase,lr,train_loss,valid_loss,valid_acc,seconds");
        assert_eq!(first("lr_log.csv"), "phase,t,lr_initial,lr_mid,lr_final");
        let grid = fs::read_to_string(dir.path().join("confusion.csv")).unwrap();
        assert_eq!(grid, "true\\predicted,cat,dog\ncat,1,1\ndog,0,1\n");
    }

    #[test]
    fn empty_tables_keep_headers() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = report();
        r.history.clear();
        write_report(&r, dir.path()).unwrap();
        assert!(read_history_csv(&dir.path().join("history.csv")).unwrap().is_empty());
    }
}
