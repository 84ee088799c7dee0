//! Reference values and brute-force oracles for the metrics.

/// Reference per-class rows `(precision, recall, f1, support)` for the
/// confusion matrix [`REFERENCE_CM`], then accuracy, macro and weighted rows.
pub const REFERENCE_CM: [[u64; 2]; 2] = [[28, 20], [23, 49]];
pub const REFERENCE_CLASSES: [(f64, f64, f64, u64); 2] = [(0.55, 0.58, 0.57, 48), (0.71, 0.68, 0.70, 72)];
pub const REFERENCE_ACCURACY: f64 = 0.64;
pub const REFERENCE_MACRO: (f64, f64, f64) = (0.63, 0.63, 0.63);
pub const REFERENCE_WEIGHTED: (f64, f64, f64) = (0.65, 0.64, 0.64);

pub const REFERENCE_MSE: f64 = 52.529;
pub const REFERENCE_RMSE: f64 = 7.2477;

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Every rounded entry of the report that differs from the reference rows.
pub fn report_mismatches(r: &faceage::metrics::ClassificationReport) -> Vec<String> {
    let mut bad = Vec::new();
    let mut cmp = |what: String, got: f64, want: f64| {
        if round2(got) != want {
            bad.push(format!("{what}: {:.2} vs {want:.2}", round2(got)));
        }
    };
    for (c, &(p, rc, f, s)) in REFERENCE_CLASSES.iter().enumerate() {
        let m = r.classes[c];
        cmp(format!("class {c} precision"), m.precision, p);
        cmp(format!("class {c} recall"), m.recall, rc);
        cmp(format!("class {c} f1"), m.f1, f);
        cmp(format!("class {c} support"), m.support as f64, s as f64);
    }
    cmp("accuracy".into(), r.accuracy, REFERENCE_ACCURACY);
    for (name, got, want) in [("macro", r.macro_avg, REFERENCE_MACRO), ("weighted", r.weighted_avg, REFERENCE_WEIGHTED)] {
        cmp(format!("{name} precision"), got.precision, want.0);
        cmp(format!("{name} recall"), got.recall, want.1);
        cmp(format!("{name} f1"), got.f1, want.2);
    }
    bad
}

/// Fraction of positive/negative pairs ranked correctly, ties half.
pub fn pairwise_auc(labels: &[usize], scores: &[f64]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

/// Random labelled scores with both classes present, on a coarse grid so
/// that ties occur.
pub fn random_auc_instance(rng: &mut impl rand::Rng) -> (Vec<usize>, Vec<f64>) {
    loop {
        let n = rng.random_range(2..=200);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        if labels.contains(&0) && labels.contains(&1) {
            let levels = rng.random_range(2..=50);
            let scores = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            return (labels, scores);
        }
    }
}
