use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    argmax, classification_report, confusion_matrix, roc_auc, ClassificationReport,
    ConfusionMatrix, RegressionReport, RocCurve,
};
use crate::data::{ImageBatcher, Manifest};
use crate::error::{Error, Result};
use crate::model::Task;
use crate::train::{predict_outputs, Checkpoint, Targets};

/// MAE over records whose true age falls in `[lo, lo + 10)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecadeMae {
    pub lo: u32,
    pub n: usize,
    pub mae: f64,
}

pub fn mae_by_decade(ages: &[f64], preds: &[f64]) -> Vec<DecadeMae> {
    let mut bins: std::collections::BTreeMap<u32, (usize, f64)> = Default::default();
    for (&y, &p) in ages.iter().zip(preds) {
        let e = bins.entry((y as u32 / 10) * 10).or_default();
        e.0 += 1;
        e.1 += (y - p).abs();
    }
    bins.into_iter()
        .map(|(lo, (n, sum))| DecadeMae {
            lo,
            n,
            mae: sum / n as f64,
        })
        .collect()
}

/// Everything `evaluate` computes. Values are stored at full precision;
/// `text` holds the rendered tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mae_by_decade: Option<Vec<DecadeMae>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roc: Option<RocCurve>,
    pub text: String,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Runs the checkpoint's model over `manifest` and scores it.
///
/// Gender predictions are the argmax class (ties → 0); the ROC uses the
/// class-1 probability and is omitted when only one class is present.
pub fn evaluate(task: Task, ckpt: &Checkpoint, manifest: &Manifest, threads: usize) -> Result<EvalReport> {
    if ckpt.task() != task {
        return Err(Error::Contract(format!(
            "checkpoint holds a {} model but {task} evaluation was requested",
            ckpt.task()
        )));
    }
    if manifest.is_empty() {
        return Err(Error::Domain("evaluation manifest is empty".into()));
    }
    let targets = Targets::from_manifest(task, manifest)?;
    let images = ImageBatcher::new(&manifest.records, threads)?;
    let outputs = predict_outputs(&ckpt.spec, &ckpt.params, &images, ckpt.config.batch_size)?;
    let mut report = EvalReport {
        task,
        n: manifest.len(),
        regression: None,
        mae_by_decade: None,
        confusion: None,
        classification: None,
        roc: None,
        text: String::new(),
    };
    match targets {
        Targets::Age(ages) => {
            let y: Vec<f64> = ages.iter().map(|&a| a as f64).collect();
            let y_hat: Vec<f64> = outputs.iter().map(|o| o[0] as f64).collect();
            let reg = RegressionReport::new(&y, &y_hat)?;
            let decades = mae_by_decade(&y, &y_hat);
            let mut text = reg.render();
            text.push_str("\nDecade  N      MAE\n");
            for d in &decades {
                text.push_str(&format!("{:>2}-{:<3} {:<6} {:.4}\n", d.lo, d.lo + 9, d.n, d.mae));
            }
            report.text = text;
            report.regression = Some(reg);
            report.mae_by_decade = Some(decades);
        }
        Targets::Gender(labels) => {
            let preds: Vec<usize> = outputs.iter().map(|o| argmax(o)).collect();
            let scores: Vec<f64> = outputs.iter().map(|o| o[1] as f64).collect();
            let cm = confusion_matrix(&labels, &preds)?;
            let cls = classification_report(&cm)?;
            let roc = roc_auc(&labels, &scores).ok();
            let mut text = cls.render();
            text.push('\n');
            text.push_str(&cm.render());
            match &roc {
                Some(r) => text.push_str(&format!("\nAUC {:.4}\n", r.auc)),
                None => text.push_str("\nAUC undefined (single class)\n"),
            }
            report.text = text;
            report.confusion = Some(cm);
            report.classification = Some(cls);
            report.roc = roc;
        }
    }
    Ok(report)
}
