mod common;

use common::oracles::*;
use faceage::metrics::*;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

#[test]
fn reference_report_from_its_confusion_matrix() {
    let r = classification_report(&ConfusionMatrix::from_counts(REFERENCE_CM)).unwrap();
    assert_eq!(report_mismatches(&r), Vec::<String>::new());

    // the same values written out from the definitions
    let (p0, r0) = (28.0 / 51.0, 28.0 / 48.0);
    let (p1, r1) = (49.0 / 69.0, 49.0 / 72.0);
    let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    assert!(close(r.classes[0].precision, p0) && close(r.classes[0].recall, r0));
    assert!(close(r.classes[1].f1, f(p1, r1)));
    assert!(close(r.weighted_avg.precision, (48.0 * p0 + 72.0 * p1) / 120.0));
    assert!(close(r.macro_avg.f1, (f(p0, r0) + f(p1, r1)) / 2.0));
    assert!(close(r.accuracy, 77.0 / 120.0));
}

#[test]
fn reference_rmse_follows_mse() {
    assert!((rmse_from_mse(REFERENCE_MSE) - REFERENCE_RMSE).abs() < 5e-5);
}

#[test]
fn regression_example() {
    let y = [1.0, 2.0, 3.0];
    let p = [1.0, 3.0, 2.0];
    assert!((mae(&y, &p).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((rmse(&y, &p).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert!(mse(&y, &p[..2]).is_err());
    assert!(mse(&[], &[]).is_err());
}

#[test]
fn auc_reference_case() {
    let labels = [0, 0, 1, 1];
    let scores = [0.1, 0.4, 0.35, 0.8];
    assert_eq!(roc_auc(&labels, &scores).unwrap().auc, 0.75);
    assert_eq!(mann_whitney_auc(&labels, &scores).unwrap(), 0.75);
}

#[test]
fn auc_matches_pairwise_oracle() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(77);
    for _ in 0..100 {
        let (labels, scores) = random_auc_instance(&mut rng);
        let oracle = pairwise_auc(&labels, &scores);
        assert!((roc_auc(&labels, &scores).unwrap().auc - oracle).abs() < 1e-9);
        assert!((mann_whitney_auc(&labels, &scores).unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn roc_needs_both_classes() {
    assert!(roc_auc(&[1, 1], &[0.2, 0.3]).is_err());
}

#[test]
fn roc_csv_and_endpoints() {
    let roc = roc_auc(&[0, 1, 1], &[0.2, 0.9, 0.5]).unwrap();
    let (first, last) = (roc.points[0], *roc.points.last().unwrap());
    assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
    assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    let csv = roc.to_csv();
    assert!(csv.starts_with("threshold,fpr,tpr\n"));
    assert_eq!(csv.lines().count(), roc.points.len() + 1);
}

#[test]
fn zero_denominators_give_zero() {
    let r = classification_report(&ConfusionMatrix::from_counts([[5, 0], [3, 0]])).unwrap();
    assert_eq!((r.classes[1].precision, r.classes[1].recall, r.classes[1].f1), (0.0, 0.0, 0.0));
}

#[test]
fn argmax_ties_go_low() {
    assert_eq!(argmax(&[0.5, 0.5]), 0);
    assert_eq!(argmax(&[0.2, 0.8]), 1);
}
