//! Online-labeled constraint dataset, probabilistic classifiers and the
//! guidance weights derived from them.
//!
//! Every candidate leaving the bias becomes a training row: label 0 when it
//! was refuted, label 1 when it was learned. Before each top-level query the
//! classifier is refit on all rows and its estimate `P(c ∈ C_T)` is turned
//! into the boolean guidance signal `M(c) = 1/P ≤ ln|Y|`.

mod bayes;
mod eval;
mod features;
mod forest;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bayes::{GaussianNb, VAR_SMOOTHING};
pub use eval::{
    cross_validate, parse_dataset_csv, prefix_curve, Metrics, PrefixPoint, DEFAULT_PREFIX_FRACTIONS,
};
pub use features::{Featurizer, DIM_FEATURES, SCOPE_FEATURES};
pub use forest::{DecisionTree, RandomForest, DEFAULT_TREES};

use crate::error::LearnError;
use crate::model::{Constraint, ConstraintSet, Relation, Vocabulary};
use crate::solver::ObjectiveWeights;

/// Below this many rows the feature-based classifiers defer to counting.
pub const MIN_TRAINING_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    /// The candidate joined the learned network.
    Learned,
    /// The candidate was refuted and dropped from the bias.
    Removed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Counting,
    Gnb,
    Rf,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Counting => "count",
            ClassifierKind::Gnb => "gnb",
            ClassifierKind::Rf => "rf",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "count" | "counting" => Ok(ClassifierKind::Counting),
            "gnb" => Ok(ClassifierKind::Gnb),
            "rf" => Ok(ClassifierKind::Rf),
            other => Err(format!("unknown classifier `{other}` (expected count, gnb or rf)")),
        }
    }
}

/// Per-relation tallies of learned and removed candidates.
///
/// Learned candidates leave the bias too, so they count in both tallies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountingEstimator {
    tallies: BTreeMap<Relation, (u64, u64)>,
}

impl CountingEstimator {
    pub fn record(&mut self, rel: Relation, decision: Decision) {
        let entry = self.tallies.entry(rel).or_default();
        entry.1 += 1;
        if decision == Decision::Learned {
            entry.0 += 1;
        }
    }

    pub fn tally(&self, rel: Relation) -> (u64, u64) {
        self.tallies.get(&rel).copied().unwrap_or_default()
    }

    /// Laplace-smoothed `learned / removed`; 0.5 for an unseen relation.
    pub fn probability(&self, rel: Relation) -> f64 {
        let (learned, removed) = self.tally(rel);
        (learned as f64 + 1.0) / (removed as f64 + 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub constraint: Constraint,
    pub features: Vec<f64>,
    pub label: u8,
}

/// Feature/label rows, one per decided candidate.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    featurizer: Featurizer,
    rows: Vec<Row>,
    labeled: HashSet<Constraint>,
    counting: CountingEstimator,
}

impl LabeledDataset {
    pub fn new(voc: &Vocabulary, language: &[Relation]) -> Self {
        LabeledDataset {
            featurizer: Featurizer::new(voc, language),
            rows: Vec::new(),
            labeled: HashSet::new(),
            counting: CountingEstimator::default(),
        }
    }

    pub fn record_decision(&mut self, c: Constraint, decision: Decision, voc: &Vocabulary) -> Result<(), LearnError> {
        if self.labeled.contains(&c) {
            return Err(LearnError::DuplicateLabel(c));
        }
        let features = self.featurizer.featurize(&c, voc)?;
        let label = match decision {
            Decision::Learned => 1,
            Decision::Removed => 0,
        };
        self.labeled.insert(c);
        self.rows.push(Row { constraint: c, features, label });
        self.counting.record(c.relation(), decision);
        Ok(())
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_labeled(&self, c: &Constraint) -> bool {
        self.labeled.contains(c)
    }

    pub fn counting(&self) -> &CountingEstimator {
        &self.counting
    }

    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|r| r.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn matrix(&self) -> (Vec<Vec<f64>>, Vec<u8>) {
        (self.rows.iter().map(|r| r.features.clone()).collect(), self.rows.iter().map(|r| r.label).collect())
    }

    /// Writes `constraint_id,<feature names>,label` rows.
    pub fn write_csv<W: Write>(&self, voc: &Vocabulary, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["constraint_id".to_string()];
        header.extend(self.featurizer.names());
        header.push("label".into());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.constraint.render(voc)];
            rec.extend(row.features.iter().map(|v| v.to_string()));
            rec.push(row.label.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    Counting,
    Gnb(GaussianNb),
    Rf(RandomForest),
    /// Too few rows or a single class: defer to counting.
    Fallback,
}

/// A classifier fitted on a snapshot of the dataset.
#[derive(Debug, Clone)]
pub struct Classifier {
    kind: ClassifierKind,
    fitted: Fitted,
    counting: CountingEstimator,
    featurizer: Featurizer,
    single_class: bool,
}

impl Classifier {
    pub fn fit(kind: ClassifierKind, dataset: &LabeledDataset, seed: u64) -> Self {
        let positives = dataset.positives();
        let single_class = positives == 0 || positives == dataset.len();
        let undersized = dataset.len() < MIN_TRAINING_ROWS;
        let fitted = match kind {
            ClassifierKind::Counting => Fitted::Counting,
            _ if single_class || undersized => Fitted::Fallback,
            ClassifierKind::Gnb => {
                let (x, y) = dataset.matrix();
                Fitted::Gnb(GaussianNb::fit(&x, &y))
            }
            ClassifierKind::Rf => {
                let (x, y) = dataset.matrix();
                Fitted::Rf(RandomForest::fit(&x, &y, DEFAULT_TREES, seed))
            }
        };
        Classifier {
            kind,
            fitted,
            counting: dataset.counting().clone(),
            featurizer: dataset.featurizer().clone(),
            single_class,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn is_single_class(&self) -> bool {
        self.single_class
    }

    pub fn uses_fallback(&self) -> bool {
        matches!(self.fitted, Fitted::Fallback)
    }

    /// `P(c ∈ C_T)`, always within `[0, 1]`.
    pub fn predict_proba(&self, c: &Constraint, voc: &Vocabulary) -> Result<f64, LearnError> {
        let p = match &self.fitted {
            Fitted::Counting | Fitted::Fallback => self.counting.probability(c.relation()),
            Fitted::Gnb(m) => m.predict_proba(&self.featurizer.featurize(c, voc)?),
            Fitted::Rf(m) => m.predict_proba(&self.featurizer.featurize(c, voc)?),
        };
        Ok(p.clamp(0.0, 1.0))
    }
}

/// `M(c)`: true when `1/p ≤ ln(|Y|)`; `p = 0` is never likely.
pub fn model_m(p: f64, y_size: usize) -> bool {
    if p <= 0.0 || y_size == 0 {
        return false;
    }
    1.0 / p <= (y_size as f64).ln()
}

/// Weight `1 - |Γ|·[M(c)]` for every member of `bias`, plus the
/// probabilities they were derived from.
pub fn objective_weights(
    bias: &ConstraintSet,
    clf: &Classifier,
    voc: &Vocabulary,
    y_size: usize,
    gamma_size: usize,
) -> Result<(ObjectiveWeights, HashMap<Constraint, f64>), LearnError> {
    let mut weights = ObjectiveWeights::default();
    let mut probabilities = HashMap::with_capacity(bias.len());
    for c in bias {
        let p = clf.predict_proba(c, voc)?;
        let m = model_m(p, y_size);
        weights.set(*c, 1 - gamma_size as i64 * m as i64);
        probabilities.insert(*c, p);
    }
    Ok((weights, probabilities))
}

/// Dataset plus classifier lifecycle for one acquisition session.
#[derive(Debug, Clone)]
pub struct Guide {
    kind: Option<ClassifierKind>,
    dataset: LabeledDataset,
    classifier: Option<Classifier>,
    seed: u64,
    gamma_size: usize,
    fits: u64,
    probabilities: HashMap<Constraint, f64>,
}

impl Guide {
    /// `kind = None` means unguided: all weights are 1.
    pub fn new(kind: Option<ClassifierKind>, voc: &Vocabulary, language: &[Relation], seed: u64) -> Self {
        Guide {
            kind,
            dataset: LabeledDataset::new(voc, language),
            classifier: None,
            seed,
            gamma_size: language.len(),
            fits: 0,
            probabilities: HashMap::new(),
        }
    }

    pub fn kind(&self) -> Option<ClassifierKind> {
        self.kind
    }

    pub fn is_guided(&self) -> bool {
        self.kind.is_some()
    }

    pub fn dataset(&self) -> &LabeledDataset {
        &self.dataset
    }

    pub fn fits(&self) -> u64 {
        self.fits
    }

    pub fn record(&mut self, c: Constraint, decision: Decision, voc: &Vocabulary) -> Result<(), LearnError> {
        self.dataset.record_decision(c, decision, voc)
    }

    /// Refits the classifier on the whole dataset. No-op when unguided.
    pub fn refit(&mut self) {
        if let Some(kind) = self.kind {
            self.fits += 1;
            let seed = self.seed.wrapping_add(self.fits);
            self.classifier = Some(Classifier::fit(kind, &self.dataset, seed));
        }
    }

    /// Weights for the current bias under the last fitted classifier.
    pub fn weights(&mut self, bias: &ConstraintSet, voc: &Vocabulary, y_size: usize) -> Result<ObjectiveWeights, LearnError> {
        match &self.classifier {
            Some(clf) if self.kind.is_some() => {
                let (w, p) = objective_weights(bias, clf, voc, y_size, self.gamma_size)?;
                self.probabilities.extend(p);
                Ok(w)
            }
            _ => Ok(ObjectiveWeights::uniform()),
        }
    }

    /// Last probability predicted for `c`, if any.
    pub fn probability(&self, c: &Constraint) -> Option<f64> {
        self.probabilities.get(c).copied()
    }
}
