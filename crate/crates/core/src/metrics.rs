//! Multi-label evaluation: sample-based scores, per-label and averaged
//! precision/recall/F1, and the multi-label confusion matrix with a
//! no-true-labels row and a no-predicted-labels column.
//!
//! Label matrices are slices of equal-length 0/1 rows. Zero denominators
//! give 0, except that a sample with neither true nor predicted labels
//! counts as a perfect match in the sample-based scores.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
}

fn check(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<usize, MetricsError> {
    if truth.len() != pred.len() {
        return Err(MetricsError::Shape(format!(
            "{} true rows, {} predicted rows",
            truth.len(),
            pred.len()
        )));
    }
    if truth.is_empty() {
        return Err(MetricsError::Shape("no samples".into()));
    }
    let k = truth[0].len();
    for (i, (t, p)) in truth.iter().zip(pred).enumerate() {
        if t.len() != k || p.len() != k {
            return Err(MetricsError::Shape(format!(
                "row {i} has {} true and {} predicted labels, expected {k}",
                t.len(),
                p.len()
            )));
        }
        if t.iter().chain(p).any(|&v| v > 1) {
            return Err(MetricsError::Shape(format!(
                "row {i} has a label outside {{0, 1}}"
            )));
        }
    }
    Ok(k)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

struct SampleCounts {
    inter: f64,
    union: f64,
    truth: f64,
    pred: f64,
}

fn sample_counts(t: &[u8], p: &[u8]) -> SampleCounts {
    let mut c = SampleCounts {
        inter: 0.0,
        union: 0.0,
        truth: 0.0,
        pred: 0.0,
    };
    for (&a, &b) in t.iter().zip(p) {
        c.inter += f64::from(a & b);
        c.union += f64::from(a | b);
        c.truth += f64::from(a);
        c.pred += f64::from(b);
    }
    c
}

pub fn hamming_loss(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<f64, MetricsError> {
    let k = check(truth, pred)?;
    let wrong: usize = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| t.iter().zip(p).filter(|(a, b)| a != b).count())
        .sum();
    Ok(wrong as f64 / (truth.len() * k) as f64)
}

pub fn jaccard_index(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<f64, MetricsError> {
    check(truth, pred)?;
    let total: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let c = sample_counts(t, p);
            if c.union == 0.0 {
                1.0
            } else {
                c.inter / c.union
            }
        })
        .sum();
    Ok(total / truth.len() as f64)
}

pub fn sample_accuracy(truth: &[Vec<u8>], pred: &[Vec<u8>]) -> Result<f64, MetricsError> {
    check(truth, pred)?;
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub name: String,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True occurrences of the label.
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Averages {
    fn new(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f1: harmonic(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfReport {
    pub per_label: Vec<LabelScores>,
    pub micro: Averages,
    pub macro_: Averages,
    /// Per-label scores averaged with support weights.
    pub weighted: Averages,
    pub samples: Averages,
    pub total_support: usize,
}

/// Per-label rows plus micro, macro, support-weighted and sample-based
/// averages. Averaged F1 values are harmonic means of the averaged
/// precision and recall, except the weighted one, which averages the
/// per-label F1 scores.
pub fn precision_recall_f1(
    truth: &[Vec<u8>],
    pred: &[Vec<u8>],
    names: &[String],
) -> Result<PrfReport, MetricsError> {
    let k = check(truth, pred)?;
    if names.len() != k {
        return Err(MetricsError::Shape(format!(
            "{} names for {k} labels",
            names.len()
        )));
    }
    let mut per_label = Vec::with_capacity(k);
    for j in 0..k {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (t, p) in truth.iter().zip(pred) {
            match (t[j], p[j]) {
                (1, 1) => tp += 1,
                (0, 1) => fp += 1,
                (1, 0) => fn_ += 1,
                _ => {}
            }
        }
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        per_label.push(LabelScores {
            name: names[j].clone(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: tp + fn_,
        });
    }
    let tp: usize = per_label.iter().map(|s| s.tp).sum();
    let fp: usize = per_label.iter().map(|s| s.fp).sum();
    let fn_: usize = per_label.iter().map(|s| s.fn_).sum();
    let micro = Averages::new(
        ratio(tp as f64, (tp + fp) as f64),
        ratio(tp as f64, (tp + fn_) as f64),
    );
    let kf = k as f64;
    let macro_ = Averages::new(
        per_label.iter().map(|s| s.precision).sum::<f64>() / kf,
        per_label.iter().map(|s| s.recall).sum::<f64>() / kf,
    );
    let total_support: usize = per_label.iter().map(|s| s.support).sum();
    let ts = total_support as f64;
    let weighted = Averages {
        precision: ratio(
            per_label
                .iter()
                .map(|s| s.precision * s.support as f64)
                .sum(),
            ts,
        ),
        recall: ratio(
            per_label.iter().map(|s| s.recall * s.support as f64).sum(),
            ts,
        ),
        f1: ratio(per_label.iter().map(|s| s.f1 * s.support as f64).sum(), ts),
    };
    let n = truth.len() as f64;
    let (mut sp, mut sr) = (0.0, 0.0);
    for (t, p) in truth.iter().zip(pred) {
        let c = sample_counts(t, p);
        if c.union == 0.0 {
            sp += 1.0;
            sr += 1.0;
        } else {
            sp += ratio(c.inter, c.pred);
            sr += ratio(c.inter, c.truth);
        }
    }
    let samples = Averages::new(sp / n, sr / n);
    Ok(PrfReport {
        per_label,
        micro,
        macro_,
        weighted,
        samples,
        total_support,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    pub hamming_loss: f64,
    pub jaccard_index: f64,
    pub sample_accuracy: f64,
    pub prf: PrfReport,
}

pub fn evaluate(
    truth: &[Vec<u8>],
    pred: &[Vec<u8>],
    names: &[String],
) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        samples: truth.len(),
        hamming_loss: hamming_loss(truth, pred)?,
        jaccard_index: jaccard_index(truth, pred)?,
        sample_accuracy: sample_accuracy(truth, pred)?,
        prf: precision_recall_f1(truth, pred, names)?,
    })
}

impl MetricsReport {
    /// Headline scores in percent.
    pub fn summary(&self) -> String {
        format!(
            "samples: {}\nsample_accuracy_pct: {:.2}\njaccard_index_pct: {:.2}\nhamming_loss_pct: {:.2}\n",
            self.samples,
            100.0 * self.sample_accuracy,
            100.0 * self.jaccard_index,
            100.0 * self.hamming_loss
        )
    }

    /// Delimited per-label table: class, precision, recall, F1, weight.
    pub fn label_table(&self) -> String {
        let mut out = String::from("class,precision,recall,f1_score,weight\n");
        let row = |out: &mut String, name: &str, a: Averages, w: usize| {
            let _ = writeln!(
                out,
                "{name},{:.4},{:.4},{:.4},{w}",
                a.precision, a.recall, a.f1
            );
        };
        for s in &self.prf.per_label {
            row(
                &mut out,
                &s.name,
                Averages {
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                },
                s.support,
            );
        }
        let w = self.prf.total_support;
        row(&mut out, "micro avg", self.prf.micro, w);
        row(&mut out, "macro avg", self.prf.macro_, w);
        row(&mut out, "weighted avg", self.prf.weighted, w);
        row(&mut out, "samples avg", self.prf.samples, w);
        out
    }
}

/// Confusion counts over `k + 1` rows (true labels, then NTL) and `k + 1`
/// columns (predicted labels, then NPL).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlcmMatrix {
    pub names: Vec<String>,
    pub counts: Vec<Vec<f64>>,
}

/// Per sample: each correctly predicted label adds one on the diagonal.
/// Each missed true label is split evenly across the sample's spurious
/// predictions, or goes to NPL when there are none. Spurious predictions
/// not used that way go to the NTL row, and a sample with no true and no
/// predicted labels adds one at (NTL, NPL).
pub fn mlcm_confusion(
    truth: &[Vec<u8>],
    pred: &[Vec<u8>],
    names: &[String],
) -> Result<MlcmMatrix, MetricsError> {
    let k = check(truth, pred)?;
    if names.len() != k {
        return Err(MetricsError::Shape(format!(
            "{} names for {k} labels",
            names.len()
        )));
    }
    let (ntl, npl) = (k, k);
    let mut counts = vec![vec![0.0; k + 1]; k + 1];
    for (t, p) in truth.iter().zip(pred) {
        let missed: Vec<usize> = (0..k).filter(|&j| t[j] == 1 && p[j] == 0).collect();
        let spurious: Vec<usize> = (0..k).filter(|&j| t[j] == 0 && p[j] == 1).collect();
        for j in 0..k {
            if t[j] == 1 && p[j] == 1 {
                counts[j][j] += 1.0;
            }
        }
        if !missed.is_empty() {
            for &m in &missed {
                if spurious.is_empty() {
                    counts[m][npl] += 1.0;
                } else {
                    let share = 1.0 / spurious.len() as f64;
                    for &s in &spurious {
                        counts[m][s] += share;
                    }
                }
            }
        } else {
            for &s in &spurious {
                counts[ntl][s] += 1.0;
            }
        }
        if t.iter().all(|&v| v == 0) && p.iter().all(|&v| v == 0) {
            counts[ntl][npl] += 1.0;
        }
    }
    Ok(MlcmMatrix {
        names: names.to_vec(),
        counts,
    })
}

impl MlcmMatrix {
    /// Rows divided by their totals; all-zero rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(|&v| ratio(v, s)).collect()
            })
            .collect()
    }

    /// Delimited table with row and column headers.
    pub fn to_table(&self, normalized: bool) -> String {
        let values = if normalized {
            self.normalized()
        } else {
            self.counts.clone()
        };
        let mut out = String::from("true\\pred");
        for n in &self.names {
            let _ = write!(out, ",{n}");
        }
        out.push_str(",NPL\n");
        for (i, row) in values.iter().enumerate() {
            out.push_str(self.names.get(i).map_or("NTL", |s| s.as_str()));
            for v in row {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}
