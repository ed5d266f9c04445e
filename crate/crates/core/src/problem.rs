//! JSON problem-definition documents.
//!
//! ```json
//! {
//!   "tensors":  [{ "name": "grid", "shape": [4, 4], "domain": { "lb": 1, "ub": 4 } }],
//!   "domain":   { "lb": 1, "ub": 4 },
//!   "language": [{ "relation": "NEQ" }, { "relation": "FLOORDIV_NEQ", "param": 9 }],
//!   "target":   [{ "relation": "NEQ",
//!                  "scope": [{ "tensor": "grid", "index": [0, 0] },
//!                            { "tensor": "grid", "index": [0, 1] }] }]
//! }
//! ```
//!
//! A tensor without its own `domain` uses the global one. `target` is optional;
//! `holes` may be added to any domain to punch values out of the interval.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{Constraint, ConstraintSet, Domain, Relation, RelationKind, VarId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDocument {
    pub tensors: Vec<TensorDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    pub language: Vec<RelationDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<ConstraintDef>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDef {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationDef {
    pub relation: RelationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarRef {
    pub tensor: String,
    pub index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDef {
    pub relation: RelationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<i64>,
    pub scope: Vec<VarRef>,
}

/// A vocabulary, its constraint language and an optional known target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub vocabulary: Vocabulary,
    pub language: Vec<Relation>,
    pub target: Option<ConstraintSet>,
}

impl RelationDef {
    pub fn from_relation(rel: Relation) -> Self {
        RelationDef { relation: rel.kind(), param: rel.param() }
    }

    pub fn to_relation(&self) -> Result<Relation, ModelError> {
        Relation::new(self.relation, self.param)
    }
}

impl VarRef {
    pub fn of(voc: &Vocabulary, var: VarId) -> Self {
        VarRef { tensor: voc.tensor_of(var).name.clone(), index: voc.index_of(var) }
    }

    pub fn resolve(&self, voc: &Vocabulary) -> Result<VarId, ModelError> {
        if !voc.tensors().iter().any(|t| t.name == self.tensor) {
            return Err(ModelError::Validation(format!("unknown tensor `{}`", self.tensor)));
        }
        voc.var(&self.tensor, &self.index).ok_or_else(|| {
            ModelError::Validation(format!(
                "index {:?} is outside the shape of tensor `{}`",
                self.index, self.tensor
            ))
        })
    }
}

impl ConstraintDef {
    pub fn of(voc: &Vocabulary, c: &Constraint) -> Self {
        let rel = c.relation();
        ConstraintDef {
            relation: rel.kind(),
            param: rel.param(),
            scope: c.scope().iter().map(|&v| VarRef::of(voc, v)).collect(),
        }
    }

    pub fn resolve(&self, voc: &Vocabulary) -> Result<Constraint, ModelError> {
        let rel = Relation::new(self.relation, self.param)?;
        if self.scope.len() != rel.arity() {
            return Err(ModelError::Validation(format!(
                "{} expects {} scope variables, got {}",
                self.relation.name(),
                rel.arity(),
                self.scope.len()
            )));
        }
        let a = self.scope[0].resolve(voc)?;
        let b = self.scope[1].resolve(voc)?;
        Constraint::new(rel, a, b)
    }
}

impl ProblemDocument {
    pub fn into_problem(self) -> Result<Problem, ModelError> {
        let mut voc = Vocabulary::new();
        for t in &self.tensors {
            let domain = t.domain.clone().or_else(|| self.domain.clone()).ok_or_else(|| {
                ModelError::Validation(format!("tensor `{}` has no domain and there is no global one", t.name))
            })?;
            voc.add_tensor(&t.name, &t.shape, domain)?;
        }
        if self.language.is_empty() {
            return Err(ModelError::Validation("`language` must not be empty".into()));
        }
        let mut language = Vec::with_capacity(self.language.len());
        for def in &self.language {
            let rel = def.to_relation()?;
            if !language.contains(&rel) {
                language.push(rel);
            }
        }
        let target = match &self.target {
            Some(defs) => {
                let mut set = ConstraintSet::new();
                for def in defs {
                    set.insert(def.resolve(&voc)?);
                }
                Some(set)
            }
            None => None,
        };
        Ok(Problem { vocabulary: voc, language, target })
    }

    pub fn from_problem(problem: &Problem) -> Self {
        let voc = &problem.vocabulary;
        ProblemDocument {
            tensors: voc
                .tensors()
                .iter()
                .map(|t| TensorDef {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    domain: Some(voc.domain(VarId(t.offset)).clone()),
                })
                .collect(),
            domain: None,
            language: problem.language.iter().map(|&r| RelationDef::from_relation(r)).collect(),
            target: problem
                .target
                .as_ref()
                .map(|set| set.iter().map(|c| ConstraintDef::of(voc, c)).collect()),
        }
    }
}

/// Parses a problem-definition document.
pub fn parse_problem(text: &str) -> Result<Problem, ModelError> {
    let doc: ProblemDocument = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    doc.into_problem()
}

pub fn serialize_problem(problem: &Problem) -> String {
    serde_json::to_string_pretty(&ProblemDocument::from_problem(problem))
        .expect("problem documents always serialize")
}
