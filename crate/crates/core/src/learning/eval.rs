//! Offline classifier evaluation: stratified k-fold and ordered prefixes.

use std::io::Read;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ClassifierKind, GaussianNb, RandomForest, DEFAULT_TREES};
use crate::error::LearnError;

pub const DEFAULT_PREFIX_FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrefixPoint {
    pub fraction: f64,
    pub train_rows: usize,
    pub metrics: Metrics,
}

fn score(truth: &[u8], predicted: &[u8]) -> Metrics {
    let (mut tp, mut tn, mut fp, mut fneg) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (1, 1) => tp += 1.0,
            (0, 0) => tn += 1.0,
            (0, 1) => fp += 1.0,
            _ => fneg += 1.0,
        }
    }
    let n = tp + tn + fp + fneg;
    let recall = |hit: f64, miss: f64| if hit + miss > 0.0 { hit / (hit + miss) } else { 0.0 };
    let present = [(tp + fneg) > 0.0, (tn + fp) > 0.0];
    let recalls: Vec<f64> = [(tp, fneg), (tn, fp)]
        .iter()
        .zip(present)
        .filter(|(_, p)| *p)
        .map(|((h, m), _)| recall(*h, *m))
        .collect();
    let balanced = if recalls.is_empty() { 0.0 } else { recalls.iter().sum::<f64>() / recalls.len() as f64 };
    let f1 = if 2.0 * tp + fp + fneg > 0.0 { 2.0 * tp / (2.0 * tp + fp + fneg) } else { 0.0 };
    Metrics { accuracy: if n > 0.0 { (tp + tn) / n } else { 0.0 }, balanced_accuracy: balanced, f1 }
}

enum Model {
    Gnb(GaussianNb),
    Rf(RandomForest),
}

impl Model {
    fn fit(kind: ClassifierKind, x: &[Vec<f64>], y: &[u8], seed: u64) -> Result<Self, LearnError> {
        match kind {
            ClassifierKind::Gnb => Ok(Model::Gnb(GaussianNb::fit(x, y))),
            ClassifierKind::Rf => Ok(Model::Rf(RandomForest::fit(x, y, DEFAULT_TREES, seed))),
            ClassifierKind::Counting => Err(LearnError::Reject(
                "the counting estimator only tallies relations and has no feature-based evaluation".into(),
            )),
        }
    }

    fn predict(&self, x: &[f64]) -> u8 {
        let p = match self {
            Model::Gnb(m) => m.predict_proba(x),
            Model::Rf(m) => m.predict_proba(x),
        };
        (p >= 0.5) as u8
    }
}

fn mean(ms: &[Metrics]) -> Metrics {
    let n = ms.len() as f64;
    Metrics {
        accuracy: ms.iter().map(|m| m.accuracy).sum::<f64>() / n,
        balanced_accuracy: ms.iter().map(|m| m.balanced_accuracy).sum::<f64>() / n,
        f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}

/// Stratified k-fold cross-validation, metrics averaged over folds.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[u8],
    kind: ClassifierKind,
    folds: usize,
    seed: u64,
) -> Result<Metrics, LearnError> {
    if folds < 2 {
        return Err(LearnError::Reject("need at least two folds".into()));
    }
    if x.len() != y.len() || x.len() < folds {
        return Err(LearnError::Reject(format!("{} rows cannot fill {folds} folds", x.len())));
    }
    let mut pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let mut neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 0).collect();
    if pos.len() < folds || neg.len() < folds {
        return Err(LearnError::Reject(format!(
            "stratification impossible: {} positive and {} negative rows for {folds} folds",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0usize; y.len()];
    for (k, &i) in pos.iter().enumerate() {
        fold_of[i] = k % folds;
    }
    for (k, &i) in neg.iter().enumerate() {
        fold_of[i] = k % folds;
    }

    let mut results = Vec::with_capacity(folds);
    for fold in 0..folds {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..y.len() {
            if fold_of[i] == fold {
                vx.push(&x[i]);
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        let model = Model::fit(kind, &tx, &ty, seed.wrapping_add(fold as u64))?;
        let predicted: Vec<u8> = vx.iter().map(|r| model.predict(r)).collect();
        results.push(score(&vy, &predicted));
    }
    Ok(mean(&results))
}

/// Trains on the first `fraction` of the rows (in recording order) and tests
/// on the rest, for each fraction.
pub fn prefix_curve(
    x: &[Vec<f64>],
    y: &[u8],
    kind: ClassifierKind,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<PrefixPoint>, LearnError> {
    let n = x.len();
    let mut out = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(LearnError::Reject(format!("prefix fraction {fraction} leaves no test rows")));
        }
        let cut = ((n as f64) * fraction).round() as usize;
        if cut == 0 || cut >= n {
            return Err(LearnError::Reject(format!("prefix fraction {fraction} of {n} rows is degenerate")));
        }
        let model = Model::fit(kind, &x[..cut], &y[..cut], seed)?;
        let predicted: Vec<u8> = x[cut..].iter().map(|r| model.predict(r)).collect();
        out.push(PrefixPoint { fraction, train_rows: cut, metrics: score(&y[cut..], &predicted) });
    }
    Ok(out)
}

/// Reads an exported dataset: `constraint_id,<features…>,label`.
pub fn parse_dataset_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>, Vec<u8>), LearnError> {
    let mut reader = csv::Reader::from_reader(input);
    let header = reader.headers().map_err(|e| LearnError::Reject(format!("bad header: {e}")))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "constraint_id" || cols[cols.len() - 1] != "label" {
        return Err(LearnError::Reject("header must be `constraint_id,<features>,label`".into()));
    }
    let names: Vec<String> = cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LearnError::Reject(format!("row {}: {e}", line + 2)))?;
        if rec.len() != cols.len() {
            return Err(LearnError::Reject(format!("row {} has {} fields, expected {}", line + 2, rec.len(), cols.len())));
        }
        let mut row = Vec::with_capacity(names.len());
        for field in rec.iter().skip(1).take(names.len()) {
            row.push(
                field.parse::<f64>().map_err(|_| LearnError::Reject(format!("row {}: bad number `{field}`", line + 2)))?,
            );
        }
        let label = match &rec[cols.len() - 1] {
            "0" => 0,
            "1" => 1,
            other => return Err(LearnError::Reject(format!("row {}: label must be 0 or 1, got `{other}`", line + 2))),
        };
        x.push(row);
        y.push(label);
    }
    Ok((names, x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<Vec<f64>>, Vec<u8>) {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 10) as f64, ((i * 3) % 7) as f64]).collect();
        let y: Vec<u8> = (0..60).map(|i| (i % 10 >= 6) as u8).collect();
        (x, y)
    }

    #[test]
    fn rf_on_separable_data_is_perfect() {
        let (x, y) = separable();
        let m = cross_validate(&x, &y, ClassifierKind::Rf, 10, 0).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.balanced_accuracy, 1.0);
    }

    #[test]
    fn single_class_and_counting_are_rejected() {
        let (x, _) = separable();
        let zeros = vec![0u8; x.len()];
        assert!(cross_validate(&x, &zeros, ClassifierKind::Rf, 10, 0).is_err());
        let (x, y) = separable();
        assert!(cross_validate(&x, &y, ClassifierKind::Counting, 10, 0).is_err());
    }

    #[test]
    fn full_prefix_is_rejected() {
        let (x, y) = separable();
        assert!(prefix_curve(&x, &y, ClassifierKind::Rf, &[1.0], 0).is_err());
        let curve = prefix_curve(&x, &y, ClassifierKind::Gnb, &DEFAULT_PREFIX_FRACTIONS, 0).unwrap();
        assert_eq!(curve.len(), 9);
        assert_eq!(curve[0].train_rows, 6);
    }

    #[test]
    fn metric_definitions() {
        let m = score(&[1, 1, 0, 0, 0, 0], &[1, 0, 0, 0, 0, 1]);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
        assert!((m.balanced_accuracy - (0.5 + 0.75) / 2.0).abs() < 1e-12);
        assert!((m.f1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "constraint_id,a,b,label\n\"x ≠ y\",1,2.5,1\nz,0,0,0\n";
        let (names, x, y) = parse_dataset_csv(text.as_bytes()).unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(x[0], vec![1.0, 2.5]);
        assert_eq!(y, vec![1, 0]);
        assert!(parse_dataset_csv("id,a,label\n".as_bytes()).is_err());
        assert!(parse_dataset_csv("constraint_id,a,label\nq,1,2\n".as_bytes()).is_err());
        assert!(parse_dataset_csv("constraint_id,a,label\nq,one,1\n".as_bytes()).is_err());
    }
}
