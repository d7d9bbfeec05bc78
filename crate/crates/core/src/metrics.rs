//! Confusion matrices, one-vs-rest counts and the four reported metrics:
//! NRMSE, accuracy, balanced error rate and F1.
//!
//! Multiclass ACC, BER and F1 are macro averages: each class is reduced to
//! binary counts against the rest and the per-class values are averaged
//! with equal weight.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    /// row = true class, column = predicted class
    counts: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct BinaryCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|p| self.get(class, p)).sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, class)).sum()
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Param(format!(
                "{classes}-class confusion matrix needs {} counts, got {}",
                classes * classes,
                counts.len()
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks(self.classes.max(1))
            .map(<[u64]>::to_vec)
            .collect()
    }
}

pub fn confusion(
    true_labels: &[usize],
    pred_labels: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::Param(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    let mut counts = vec![0u64; classes * classes];
    for (&t, &p) in true_labels.iter().zip(pred_labels) {
        if t >= classes || p >= classes {
            return Err(Error::Param(format!(
                "label pair ({t}, {p}) out of range for {classes} classes"
            )));
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

/// One-vs-rest reduction with `positive` as the positive class.
pub fn binarize(cm: &ConfusionMatrix, positive: usize) -> Result<BinaryCounts> {
    if positive >= cm.classes {
        return Err(Error::Param(format!(
            "class {positive} out of range for {} classes",
            cm.classes
        )));
    }
    let tp = cm.get(positive, positive);
    let fn_ = cm.row_sum(positive) - tp;
    let fp = cm.col_sum(positive) - tp;
    let tn = cm.total() - tp - fn_ - fp;
    Ok(BinaryCounts { tp, tn, fp, fn_ })
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// `(TP + TN) / (TP + FN + FP + TN)`
pub fn acc(bc: &BinaryCounts) -> Result<f64> {
    let total = bc.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("ACC of zero samples".into()));
    }
    Ok((bc.tp + bc.tn) as f64 / total as f64)
}

/// `0/0` counts as zero; a zero denominator with a nonzero numerator cannot
/// occur because the numerator is part of the denominator.
fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `½ (FP / (TN + FP) + FN / (FN + TP))`, with `0/0` terms taken as 0.
pub fn ber(bc: &BinaryCounts) -> Result<f64> {
    Ok(0.5 * (rate(bc.fp, bc.tn + bc.fp) + rate(bc.fn_, bc.fn_ + bc.tp)))
}

/// Harmonic mean of precision and recall. `tp = 0` gives 0; no positives
/// at all (`tp + fp + fn = 0`) is undefined.
pub fn f1(bc: &BinaryCounts) -> Result<f64> {
    if bc.tp + bc.fp + bc.fn_ == 0 {
        return Err(Error::UndefinedMetric(
            "F1 with no positive predictions or labels".into(),
        ));
    }
    if bc.tp == 0 {
        return Ok(0.0);
    }
    let precision = bc.tp as f64 / (bc.tp + bc.fp) as f64;
    let recall = bc.tp as f64 / (bc.tp + bc.fn_) as f64;
    Ok(2.0 * (precision * recall) / (precision + recall))
}

/// RMSE of `y - d` over all entries divided by the population standard
/// deviation of `d`.
pub fn nrmse(y: &Matrix, d: &Matrix) -> Result<f64> {
    if y.shape() != d.shape() {
        return Err(Error::shape("nrmse", y.shape(), d.shape()));
    }
    let n = d.data().len();
    if n == 0 {
        return Err(Error::UndefinedMetric("NRMSE of zero values".into()));
    }
    let first = d.data()[0];
    if d.data().iter().all(|&v| v == first) {
        return Err(Error::UndefinedMetric("NRMSE with constant targets".into()));
    }
    let nf = n as f64;
    let mean = d.sum() / nf;
    let var = d.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let mse = y
        .data()
        .iter()
        .zip(d.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / nf;
    Ok(mse.sqrt() / var.sqrt())
}

fn macro_average(
    cm: &ConfusionMatrix,
    metric: impl Fn(&BinaryCounts) -> Result<f64>,
) -> Result<f64> {
    if cm.classes == 0 {
        return Err(Error::UndefinedMetric("no classes".into()));
    }
    let mut sum = 0.0;
    for c in 0..cm.classes {
        sum += metric(&binarize(cm, c)?).map_err(|e| match e {
            Error::UndefinedMetric(m) => Error::UndefinedMetric(format!("class {c}: {m}")),
            other => other,
        })?;
    }
    Ok(sum / cm.classes as f64)
}

pub fn macro_acc(cm: &ConfusionMatrix) -> Result<f64> {
    macro_average(cm, acc)
}

pub fn macro_ber(cm: &ConfusionMatrix) -> Result<f64> {
    macro_average(cm, ber)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64> {
    macro_average(cm, f1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub nrmse: f64,
    pub acc: f64,
    pub f1: f64,
    pub ber: f64,
}

impl MetricRow {
    pub const NAMES: [&'static str; 4] = ["NRMSE", "ACC", "F1S", "BER"];

    pub fn values(&self) -> [f64; 4] {
        [self.nrmse, self.acc, self.f1, self.ber]
    }
}

/// Inputs for one subject's row: the confusion matrix plus the posterior
/// matrix `y` and one-hot targets `d` for NRMSE.
pub struct SubjectResult {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub y: Matrix,
    pub d: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub subjects: Vec<(String, MetricRow)>,
    pub average: MetricRow,
}

pub fn subject_row(result: &SubjectResult) -> Result<MetricRow> {
    let label = |metric: &str, r: Result<f64>| {
        r.map_err(|e| match e {
            Error::UndefinedMetric(m) => {
                Error::UndefinedMetric(format!("{} {metric}: {m}", result.name))
            }
            other => other,
        })
    };
    Ok(MetricRow {
        nrmse: label("NRMSE", nrmse(&result.y, &result.d))?,
        acc: label("ACC", macro_acc(&result.confusion))?,
        f1: label("F1S", macro_f1(&result.confusion))?,
        ber: label("BER", macro_ber(&result.confusion))?,
    })
}

pub fn report(per_subject: &[SubjectResult]) -> Result<EvalReport> {
    let rows = per_subject
        .iter()
        .map(|r| Ok((r.name.clone(), subject_row(r)?)))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rows(rows)
}

pub const CSV_FIRST_COLUMN: &str = "metric";

impl EvalReport {
    pub fn from_rows(subjects: Vec<(String, MetricRow)>) -> Result<Self> {
        if subjects.is_empty() {
            return Err(Error::Param("a report needs at least one subject".into()));
        }
        let n = subjects.len() as f64;
        let mean = |f: fn(&MetricRow) -> f64| subjects.iter().map(|(_, r)| f(r)).sum::<f64>() / n;
        let average = MetricRow {
            nrmse: mean(|r| r.nrmse),
            acc: mean(|r| r.acc),
            f1: mean(|r| r.f1),
            ber: mean(|r| r.ber),
        };
        Ok(EvalReport { subjects, average })
    }

    /// Metric rows by subject columns plus `avg`; values use shortest
    /// round-trip formatting so the CSV reproduces the report exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_FIRST_COLUMN);
        for (name, _) in &self.subjects {
            out.push(',');
            out.push_str(&name.to_lowercase());
        }
        out.push_str(",avg\n");
        for (k, metric) in MetricRow::NAMES.iter().enumerate() {
            out.push_str(metric);
            for (_, row) in &self.subjects {
                let _ = write!(out, ",{}", row.values()[k]);
            }
            let _ = writeln!(out, ",{}", self.average.values()[k]);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::Format("empty report".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        if header.len() < 3 || header[0] != CSV_FIRST_COLUMN || header[header.len() - 1] != "avg" {
            return Err(Error::Format(format!("bad report header {header:?}")));
        }
        let names: Vec<String> = header[1..header.len() - 1]
            .iter()
            .map(|s| s.to_uppercase())
            .collect();
        let mut table = vec![[0.0; 4]; names.len()];
        let mut average = [0.0; 4];
        for (k, metric) in MetricRow::NAMES.iter().enumerate() {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format(format!("report missing {metric} row")))?;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != header.len() || fields[0] != *metric {
                return Err(Error::Format(format!("bad {metric} row `{line}`")));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad value `{s}` in {metric} row")))
            };
            for (s, slot) in table.iter_mut().enumerate() {
                slot[k] = parse(fields[s + 1])?;
            }
            average[k] = parse(fields[fields.len() - 1])?;
        }
        let row = |v: [f64; 4]| MetricRow {
            nrmse: v[0],
            acc: v[1],
            f1: v[2],
            ber: v[3],
        };
        Ok(EvalReport {
            subjects: names.into_iter().zip(table.into_iter().map(row)).collect(),
            average: row(average),
        })
    }

    /// Aligned text table: one line per metric, one column per subject and
    /// a final AVG column.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8}", "Metric");
        for (name, _) in &self.subjects {
            let _ = write!(out, "{:>12}", name.to_uppercase());
        }
        let _ = writeln!(out, "{:>12}", "AVG");
        for (k, metric) in MetricRow::NAMES.iter().enumerate() {
            let _ = write!(out, "{metric:<8}");
            for (_, row) in &self.subjects {
                let _ = write!(out, "{:>12.6}", row.values()[k]);
            }
            let _ = writeln!(out, "{:>12.6}", self.average.values()[k]);
        }
        out
    }
}
