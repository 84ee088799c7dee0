//! Classification and regression metrics on hand-made inputs: a 2×2
//! confusion matrix rendered as a report, an ROC curve with both AUC
//! estimators, and MSE/RMSE/MAE.

use faceage::metrics::{
    classification_report, mann_whitney_auc, rmse_from_mse, roc_auc, ConfusionMatrix, RegressionReport,
};

fn main() -> faceage::Result<()> {
    let cm = ConfusionMatrix::from_counts([[28, 20], [23, 49]]);
    println!("{}", cm.render());
    println!("{}", classification_report(&cm)?.render());

    let labels = [0, 0, 1, 1, 0, 1, 1, 0];
    let scores = [0.1, 0.4, 0.35, 0.8, 0.2, 0.9, 0.4, 0.65];
    let roc = roc_auc(&labels, &scores)?;
    print!("{}", roc.to_csv());
    println!("trapezoid AUC {:.4}, pairwise AUC {:.4}\n", roc.auc, mann_whitney_auc(&labels, &scores)?);

    let ages = [23.0, 35.0, 41.0, 8.0, 67.0];
    let preds = [25.5, 31.0, 44.0, 9.5, 58.0];
    println!("{}", RegressionReport::new(&ages, &preds)?.render());
    println!("rmse from mse 52.529: {:.4}", rmse_from_mse(52.529));
    Ok(())
}
