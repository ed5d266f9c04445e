//! Constraint featurization.
//!
//! Layout: one slot per language relation (one-hot), then `arity`,
//! `has_constant`, `constant`, `var_name_same`, `var_ndims_same`,
//! `var_ndims_max`, `var_ndims_min`, then six slots per tensor dimension up to
//! the vocabulary's largest rank: `has`, `same`, `max`, `min`, `avg`, `spread`.
//! `spread` is the population standard deviation of the index values.

use crate::error::LearnError;
use crate::model::{Constraint, Relation, Vocabulary};

pub const SCOPE_FEATURES: [&str; 7] =
    ["arity", "has_constant", "constant", "var_name_same", "var_ndims_same", "var_ndims_max", "var_ndims_min"];
pub const DIM_FEATURES: [&str; 6] = ["has", "same", "max", "min", "avg", "spread"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Featurizer {
    language: Vec<Relation>,
    max_rank: usize,
}

impl Featurizer {
    pub fn new(voc: &Vocabulary, language: &[Relation]) -> Self {
        Featurizer { language: language.to_vec(), max_rank: voc.max_rank() }
    }

    pub fn len(&self) -> usize {
        self.language.len() + SCOPE_FEATURES.len() + DIM_FEATURES.len() * self.max_rank
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.language.iter().map(|r| format!("rel_{r}")).collect();
        names.extend(SCOPE_FEATURES.iter().map(|s| s.to_string()));
        for d in 0..self.max_rank {
            names.extend(DIM_FEATURES.iter().map(|s| format!("dim{d}_{s}")));
        }
        names
    }

    fn relation_slot(&self, rel: Relation) -> Option<usize> {
        self.language
            .iter()
            .position(|&r| r == rel)
            .or_else(|| self.language.iter().position(|r| r.kind() == rel.kind()))
    }

    pub fn featurize(&self, c: &Constraint, voc: &Vocabulary) -> Result<Vec<f64>, LearnError> {
        let scope = c.scope();
        if let Some(v) = scope.iter().find(|v| !voc.contains(**v)) {
            return Err(LearnError::Reject(format!("unknown variable {v}")));
        }
        let rel = c.relation();
        let slot = self
            .relation_slot(rel)
            .ok_or_else(|| LearnError::Reject(format!("relation {rel} is not in the language")))?;
        let mut x = vec![0.0; self.len()];
        x[slot] = 1.0;

        let tensors: Vec<&str> = scope.iter().map(|&v| voc.tensor_of(v).name.as_str()).collect();
        let indices: Vec<Vec<usize>> = scope.iter().map(|&v| voc.index_of(v)).collect();
        let ranks: Vec<usize> = indices.iter().map(Vec::len).collect();
        let base = self.language.len();
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        x[base] = c.arity() as f64;
        x[base + 1] = flag(rel.param().is_some());
        x[base + 2] = rel.param().unwrap_or(0) as f64;
        x[base + 3] = flag(tensors.iter().all(|t| *t == tensors[0]));
        x[base + 4] = flag(ranks.iter().all(|r| *r == ranks[0]));
        x[base + 5] = *ranks.iter().max().unwrap() as f64;
        x[base + 6] = *ranks.iter().min().unwrap() as f64;

        for d in 0..self.max_rank {
            if ranks.iter().any(|&r| r <= d) {
                continue;
            }
            let vals: Vec<f64> = indices.iter().map(|ix| ix[d] as f64).collect();
            let n = vals.len() as f64;
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            let avg = vals.iter().sum::<f64>() / n;
            let spread = (vals.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / n).sqrt();
            let at = base + SCOPE_FEATURES.len() + d * DIM_FEATURES.len();
            x[at..at + 6].copy_from_slice(&[1.0, flag(max == min), max, min, avg, spread]);
        }
        Ok(x)
    }
}
