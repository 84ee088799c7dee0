//! Regression errors, confusion-matrix statistics and ROC analysis.
//!
//! Everything here is a pure function of its arguments and works in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod report;

pub use report::{evaluate, mae_by_decade, DecadeMae, EvalReport};

pub const CLASSES: usize = 2;

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Domain(format!(
            "{} labels but {} predictions",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sse / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    let sae: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sae / y.len() as f64)
}

/// RMSE implied by a mean squared error.
pub fn rmse_from_mse(mse: f64) -> f64 {
    mse.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

impl RegressionReport {
    pub fn new(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        let mse = mse(y, y_hat)?;
        Ok(RegressionReport {
            mse,
            rmse: mse.sqrt(),
            mae: mae(y, y_hat)?,
            n: y.len(),
        })
    }

    /// Plain-text table with values at 4 decimals.
    pub fn render(&self) -> String {
        format!(
            "Metric  Value\nMSE     {:.4}\nRMSE    {:.4}\nMAE     {:.4}\nN       {}\n",
            self.mse, self.rmse, self.mae, self.n
        )
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions equal to their labels.
pub fn accuracy(labels: &[usize], preds: &[usize]) -> Result<f64> {
    Ok(confusion_matrix(labels, preds)?.accuracy())
}

/// `counts[true][pred]` over the two gender classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; CLASSES]; CLASSES]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// Each row divided by its sum; an all-zero row stays zero.
    pub fn normalized(&self) -> [[f64; CLASSES]; CLASSES] {
        self.counts.map(|row| {
            let s: u64 = row.iter().sum();
            row.map(|c| ratio(c, s))
        })
    }

    pub fn render(&self) -> String {
        let n = self.normalized();
        let mut out = String::from("true\\pred  0      1      | 0      1\n");
        for (t, row) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{t:<10} {:<6} {:<6} | {:.2}   {:.2}\n",
                row[0], row[1], n[t][0], n[t][1]
            ));
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_matrix(labels: &[usize], preds: &[usize]) -> Result<ConfusionMatrix> {
    if labels.len() != preds.len() {
        return Err(Error::Domain(format!(
            "{} labels but {} predictions",
            labels.len(),
            preds.len()
        )));
    }
    let mut counts = [[0u64; CLASSES]; CLASSES];
    for (&t, &p) in labels.iter().zip(preds) {
        if t >= CLASSES || p >= CLASSES {
            return Err(Error::Domain(format!("class pair ({t}, {p}) outside {{0, 1}}")));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: [ClassMetrics; CLASSES],
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

impl ClassificationReport {
    /// Plain-text table with values at 2 decimals.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{:<17}{:>10}{:>8}{:>10}{:>9}\n",
            "Class", "Precision", "Recall", "F1-Score", "Support"
        );
        for (i, c) in self.classes.iter().enumerate() {
            out.push_str(&format!(
                "{:<17}{:>10.2}{:>8.2}{:>10.2}{:>9}\n",
                i, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push_str(&format!(
            "{:<17}{:>10}{:>8}{:>10.2}{:>9}\n",
            "Accuracy", "-", "-", self.accuracy, self.total
        ));
        for (name, a) in [("Macro-Average", &self.macro_avg), ("Weighted-Average", &self.weighted_avg)] {
            out.push_str(&format!(
                "{:<17}{:>10.2}{:>8.2}{:>10.2}{:>9}\n",
                name, a.precision, a.recall, a.f1, self.total
            ));
        }
        out
    }
}

/// Per-class precision, recall and F1 with their macro and support-weighted
/// averages. Zero denominators yield 0.
pub fn classification_report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Domain("confusion matrix is empty".into()));
    }
    let classes: [ClassMetrics; CLASSES] = std::array::from_fn(|c| {
        let tp = cm.counts[c][c];
        let precision = ratio(tp, cm.predicted(c));
        let recall = ratio(tp, cm.support(c));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.support(c),
        }
    });
    let avg = |weight: &dyn Fn(&ClassMetrics) -> f64| {
        let wsum: f64 = classes.iter().map(weight).sum();
        let mean = |f: fn(&ClassMetrics) -> f64| {
            classes.iter().map(|c| weight(c) * f(c)).sum::<f64>() / wsum
        };
        Averages {
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
        }
    };
    Ok(ClassificationReport {
        classes,
        accuracy: cm.accuracy(),
        macro_avg: avg(&|_| 1.0),
        weighted_avg: avg(&|c| c.support as f64),
        total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows; the origin's threshold is `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        out
    }
}

fn class_counts(labels: &[usize], scores: &[f64]) -> Result<(u64, u64)> {
    if labels.len() != scores.len() {
        return Err(Error::Domain(format!(
            "{} labels but {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= CLASSES) {
        return Err(Error::Domain(format!("label {bad} outside {{0, 1}}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain("ROC needs both classes among the labels".into()));
    }
    Ok((pos, neg))
}

/// ROC over class-1 scores: one point per distinct threshold (descending),
/// starting at (0,0) and ending at (1,1), area by the trapezoidal rule.
pub fn roc_auc(labels: &[usize], scores: &[f64]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(labels, scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// `P(score⁺ > score⁻) + ½·P(score⁺ = score⁻)` over all positive/negative
/// pairs.
pub fn mann_whitney_auc(labels: &[usize], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = class_counts(labels, scores)?;
    let mut twice_wins = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if li != 1 {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj != 0 {
                continue;
            }
            twice_wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    Ok(twice_wins as f64 / (2 * pos * neg) as f64)
}
