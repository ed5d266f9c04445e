//! Vocabularies, relations, constraints, constraint sets and assignments.
//!
//! Variables are addressed globally by [`VarId`]: tensors are laid out in
//! declaration order and each tensor in row-major order. Binary scopes are
//! always stored in that global order, so asymmetric relations are flipped
//! when a constraint is built over a reversed pair.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Global index of a variable inside a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Ordered set of variables. Iteration follows the global variable order.
pub type VarSet = BTreeSet<VarId>;

/// Finite integer domain: the interval `lb..=ub` minus a sorted list of holes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub lb: i64,
    pub ub: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<i64>,
}

impl Domain {
    pub fn interval(lb: i64, ub: i64) -> Self {
        Domain { lb, ub, holes: Vec::new() }
    }

    pub fn with_holes(lb: i64, ub: i64, mut holes: Vec<i64>) -> Self {
        holes.sort_unstable();
        holes.dedup();
        holes.retain(|h| (lb..=ub).contains(h));
        Domain { lb, ub, holes }
    }

    pub fn contains(&self, value: i64) -> bool {
        value >= self.lb && value <= self.ub && self.holes.binary_search(&value).is_err()
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        (self.lb..=self.ub).filter(move |v| self.holes.binary_search(v).is_err())
    }

    pub fn size(&self) -> usize {
        if self.ub < self.lb {
            return 0;
        }
        (self.ub - self.lb + 1) as usize - self.holes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    /// Global id of the tensor's first variable.
    pub offset: usize,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row-major flat position of `index`, if it is within the shape.
    pub fn flat(&self, index: &[usize]) -> Option<usize> {
        if index.len() != self.shape.len() {
            return None;
        }
        let mut flat = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return None;
            }
            flat = flat * extent + i;
        }
        Some(flat)
    }

    pub fn unflat(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.shape.len()];
        for (slot, &extent) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % extent;
            flat /= extent;
        }
        index
    }
}

/// The variables (as named integer tensors) and their domains.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    tensors: Vec<Tensor>,
    domains: Vec<Domain>,
    /// Tensor position for every variable.
    owner: Vec<usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor whose variables all share `domain`.
    pub fn add_tensor(&mut self, name: &str, shape: &[usize], domain: Domain) -> Result<(), ModelError> {
        if name.is_empty() {
            return Err(ModelError::Validation("tensor name must not be empty".into()));
        }
        if self.tensors.iter().any(|t| t.name == name) {
            return Err(ModelError::Validation(format!("duplicate tensor name `{name}`")));
        }
        if shape.is_empty() || shape.iter().any(|&e| e == 0) {
            return Err(ModelError::Validation(format!(
                "tensor `{name}` needs a non-empty shape of positive extents"
            )));
        }
        if domain.is_empty() {
            return Err(ModelError::Validation(format!("tensor `{name}` has an empty domain")));
        }
        let tensor = Tensor { name: name.to_string(), shape: shape.to_vec(), offset: self.domains.len() };
        let n = tensor.len();
        self.owner.extend(std::iter::repeat(self.tensors.len()).take(n));
        self.domains.extend(std::iter::repeat(domain).take(n));
        self.tensors.push(tensor);
        Ok(())
    }

    /// Replaces the domain of a single variable.
    pub fn set_domain(&mut self, var: VarId, domain: Domain) -> Result<(), ModelError> {
        if domain.is_empty() {
            return Err(ModelError::Validation(format!("empty domain for {}", self.var_name(var))));
        }
        self.domains[var.0] = domain;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.len()).map(VarId)
    }

    pub fn all_vars(&self) -> VarSet {
        self.vars().collect()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn domain(&self, var: VarId) -> &Domain {
        &self.domains[var.0]
    }

    pub fn contains(&self, var: VarId) -> bool {
        var.0 < self.len()
    }

    pub fn tensor_of(&self, var: VarId) -> &Tensor {
        &self.tensors[self.owner[var.0]]
    }

    pub fn index_of(&self, var: VarId) -> Vec<usize> {
        let tensor = self.tensor_of(var);
        tensor.unflat(var.0 - tensor.offset)
    }

    pub fn var(&self, tensor: &str, index: &[usize]) -> Option<VarId> {
        let t = self.tensors.iter().find(|t| t.name == tensor)?;
        t.flat(index).map(|flat| VarId(t.offset + flat))
    }

    /// Largest tensor rank, which fixes the feature-vector length.
    pub fn max_rank(&self) -> usize {
        self.tensors.iter().map(Tensor::rank).max().unwrap_or(0)
    }

    pub fn var_name(&self, var: VarId) -> String {
        let index = self.index_of(var);
        let parts: Vec<String> = index.iter().map(|i| i.to_string()).collect();
        format!("{}[{}]", self.tensor_of(var).name, parts.join(","))
    }
}

/// Relation kinds of the constraint language, without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelationKind {
    Eq,
    Neq,
    Lt,
    Gt,
    Leq,
    Geq,
    FloordivNeq,
}

impl RelationKind {
    pub const ALL: [RelationKind; 7] = [
        RelationKind::Eq,
        RelationKind::Neq,
        RelationKind::Lt,
        RelationKind::Gt,
        RelationKind::Leq,
        RelationKind::Geq,
        RelationKind::FloordivNeq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::Eq => "EQ",
            RelationKind::Neq => "NEQ",
            RelationKind::Lt => "LT",
            RelationKind::Gt => "GT",
            RelationKind::Leq => "LEQ",
            RelationKind::Geq => "GEQ",
            RelationKind::FloordivNeq => "FLOORDIV_NEQ",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(name))
    }
}

/// A binary relation from the language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Eq,
    Neq,
    Lt,
    Gt,
    Leq,
    Geq,
    /// `floor(x / p) != floor(y / p)`, with `p >= 1`.
    FloorDivNeq(i64),
}

impl Relation {
    /// The six comparison relations.
    pub const COMPARISONS: [Relation; 6] =
        [Relation::Geq, Relation::Leq, Relation::Lt, Relation::Gt, Relation::Neq, Relation::Eq];

    pub fn new(kind: RelationKind, param: Option<i64>) -> Result<Self, ModelError> {
        let rel = match (kind, param) {
            (RelationKind::FloordivNeq, Some(p)) if p >= 1 => Relation::FloorDivNeq(p),
            (RelationKind::FloordivNeq, _) => {
                return Err(ModelError::Validation("FLOORDIV_NEQ needs a parameter >= 1".into()))
            }
            (_, Some(_)) => {
                return Err(ModelError::Validation(format!("{} takes no parameter", kind.name())))
            }
            (RelationKind::Eq, None) => Relation::Eq,
            (RelationKind::Neq, None) => Relation::Neq,
            (RelationKind::Lt, None) => Relation::Lt,
            (RelationKind::Gt, None) => Relation::Gt,
            (RelationKind::Leq, None) => Relation::Leq,
            (RelationKind::Geq, None) => Relation::Geq,
        };
        Ok(rel)
    }

    pub fn kind(self) -> RelationKind {
        match self {
            Relation::Eq => RelationKind::Eq,
            Relation::Neq => RelationKind::Neq,
            Relation::Lt => RelationKind::Lt,
            Relation::Gt => RelationKind::Gt,
            Relation::Leq => RelationKind::Leq,
            Relation::Geq => RelationKind::Geq,
            Relation::FloorDivNeq(_) => RelationKind::FloordivNeq,
        }
    }

    pub fn param(self) -> Option<i64> {
        match self {
            Relation::FloorDivNeq(p) => Some(p),
            _ => None,
        }
    }

    pub fn arity(self) -> usize {
        2
    }

    /// Whether the pair `(a, b)` belongs to the relation.
    #[inline]
    pub fn holds(self, a: i64, b: i64) -> bool {
        match self {
            Relation::Eq => a == b,
            Relation::Neq => a != b,
            Relation::Lt => a < b,
            Relation::Gt => a > b,
            Relation::Leq => a <= b,
            Relation::Geq => a >= b,
            Relation::FloorDivNeq(p) => a.div_euclid(p) != b.div_euclid(p),
        }
    }

    /// The same relation read over the reversed scope.
    pub fn flipped(self) -> Self {
        match self {
            Relation::Lt => Relation::Gt,
            Relation::Gt => Relation::Lt,
            Relation::Leq => Relation::Geq,
            Relation::Geq => Relation::Leq,
            other => other,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Eq => "=",
            Relation::Neq | Relation::FloorDivNeq(_) => "≠",
            Relation::Lt => "<",
            Relation::Gt => ">",
            Relation::Leq => "≤",
            Relation::Geq => "≥",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::FloorDivNeq(p) => write!(f, "FLOORDIV_NEQ({p})"),
            other => f.write_str(other.kind().name()),
        }
    }
}

/// A relation applied to an ordered pair of distinct variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    relation: Relation,
    scope: [VarId; 2],
}

impl Constraint {
    /// Builds a constraint, flipping it into canonical orientation when
    /// `first` comes after `second` in the global order.
    pub fn new(relation: Relation, first: VarId, second: VarId) -> Result<Self, ModelError> {
        if first == second {
            return Err(ModelError::Validation(format!("scope repeats variable {first}")));
        }
        if let Relation::FloorDivNeq(p) = relation {
            if p < 1 {
                return Err(ModelError::Validation("FLOORDIV_NEQ needs a parameter >= 1".into()));
            }
        }
        Ok(if first < second {
            Constraint { relation, scope: [first, second] }
        } else {
            Constraint { relation: relation.flipped(), scope: [second, first] }
        })
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn scope(&self) -> [VarId; 2] {
        self.scope
    }

    pub fn arity(&self) -> usize {
        self.relation.arity()
    }

    pub fn involves(&self, var: VarId) -> bool {
        self.scope.contains(&var)
    }

    pub fn scope_within(&self, vars: &VarSet) -> bool {
        self.scope.iter().all(|v| vars.contains(v))
    }

    pub fn evaluate(&self, e: &Assignment) -> Verdict {
        match (e.get(self.scope[0]), e.get(self.scope[1])) {
            (Some(a), Some(b)) => {
                if self.relation.holds(a, b) {
                    Verdict::Satisfied
                } else {
                    Verdict::Violated
                }
            }
            _ => Verdict::Undecided,
        }
    }

    pub fn is_violated(&self, e: &Assignment) -> bool {
        self.evaluate(e) == Verdict::Violated
    }

    /// Infix rendering such as `x[0,3] ≠ x[0,5]` or `⌊x[1]/9⌋ ≠ ⌊x[4]/9⌋`.
    pub fn render(&self, voc: &Vocabulary) -> String {
        let a = voc.var_name(self.scope[0]);
        let b = voc.var_name(self.scope[1]);
        match self.relation {
            Relation::FloorDivNeq(p) => format!("⌊{a}/{p}⌋ ≠ ⌊{b}/{p}⌋"),
            rel => format!("{a} {} {b}", rel.symbol()),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.relation, self.scope[0], self.scope[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Satisfied,
    Violated,
    Undecided,
}

/// Evaluates `c` on `e`; undecided whenever a scope variable is unbound.
pub fn evaluate_constraint(c: &Constraint, e: &Assignment) -> Verdict {
    c.evaluate(e)
}

/// Ordered, duplicate-free set of constraints.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    items: IndexSet<Constraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `c`, returning false if it was already present.
    pub fn insert(&mut self, c: Constraint) -> bool {
        self.items.insert(c)
    }

    pub fn remove(&mut self, c: &Constraint) -> bool {
        self.items.shift_remove(c)
    }

    pub fn contains(&self, c: &Constraint) -> bool {
        self.items.contains(c)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> + '_ {
        self.items.iter()
    }

    /// `C[Y]`: the members whose scope lies inside `vars`.
    pub fn restrict(&self, vars: &VarSet) -> ConstraintSet {
        self.iter().filter(|c| c.scope_within(vars)).copied().collect()
    }

    /// Members whose scope is exactly the given pair, in either order.
    pub fn on_scope(&self, a: VarId, b: VarId) -> ConstraintSet {
        let key = if a < b { [a, b] } else { [b, a] };
        self.iter().filter(|c| c.scope == key).copied().collect()
    }

    pub fn involving(&self, var: VarId) -> impl Iterator<Item = &Constraint> + '_ {
        self.iter().filter(move |c| c.involves(var))
    }

    /// Removes every member of `other`, returning how many were present.
    pub fn remove_all<'a>(&mut self, other: impl IntoIterator<Item = &'a Constraint>) -> usize {
        other.into_iter().filter(|c| self.items.shift_remove(*c)).count()
    }

    pub fn is_disjoint(&self, other: &ConstraintSet) -> bool {
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.iter().all(|c| !large.contains(c))
    }

    /// Variables touched by any member.
    pub fn vars(&self) -> VarSet {
        self.iter().flat_map(|c| c.scope).collect()
    }
}

impl FromIterator<Constraint> for ConstraintSet {
    fn from_iter<T: IntoIterator<Item = Constraint>>(iter: T) -> Self {
        ConstraintSet { items: iter.into_iter().collect() }
    }
}

impl Extend<Constraint> for ConstraintSet {
    fn extend<T: IntoIterator<Item = Constraint>>(&mut self, iter: T) {
        self.items.extend(iter)
    }
}

impl<'a> IntoIterator for &'a ConstraintSet {
    type Item = &'a Constraint;
    type IntoIter = indexmap::set::Iter<'a, Constraint>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// `κ_C(e)`: the members of `set` that `e` violates.
pub fn kappa(set: &ConstraintSet, e: &Assignment) -> ConstraintSet {
    set.iter().filter(|c| c.is_violated(e)).copied().collect()
}

/// Partial or complete assignment of values to the variables of a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: Vec<Option<i64>>,
}

impl Assignment {
    /// The empty assignment over a vocabulary of `n` variables.
    pub fn empty(n: usize) -> Self {
        Assignment { values: vec![None; n] }
    }

    /// Binds `var`, checking the value against its domain.
    pub fn bind(&mut self, voc: &Vocabulary, var: VarId, value: i64) -> Result<(), ModelError> {
        if !voc.contains(var) {
            return Err(ModelError::Validation(format!("unknown variable {var}")));
        }
        if !voc.domain(var).contains(value) {
            return Err(ModelError::Validation(format!(
                "value {value} outside the domain of {}",
                voc.var_name(var)
            )));
        }
        self.values[var.0] = Some(value);
        Ok(())
    }

    /// Binds without a domain check; callers draw values from domains.
    pub(crate) fn set(&mut self, var: VarId, value: i64) {
        self.values[var.0] = Some(value);
    }

    pub fn from_pairs(voc: &Vocabulary, pairs: &[(VarId, i64)]) -> Result<Self, ModelError> {
        let mut e = Assignment::empty(voc.len());
        for &(var, value) in pairs {
            e.bind(voc, var, value)?;
        }
        Ok(e)
    }

    #[inline]
    pub fn get(&self, var: VarId) -> Option<i64> {
        self.values.get(var.0).copied().flatten()
    }

    pub fn is_bound(&self, var: VarId) -> bool {
        self.get(var).is_some()
    }

    /// The set of bound variables.
    pub fn support(&self) -> VarSet {
        self.bindings().map(|(v, _)| v).collect()
    }

    pub fn bindings(&self) -> impl Iterator<Item = (VarId, i64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (VarId(i), v)))
    }

    pub fn num_bound(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn capacity(&self) -> usize {
        self.values.len()
    }

    /// `e_Y`: keeps only the bindings on `vars`.
    pub fn project(&self, vars: &VarSet) -> Assignment {
        let mut out = Assignment::empty(self.values.len());
        for &v in vars {
            if let Some(value) = self.get(v) {
                out.values[v.0] = Some(value);
            }
        }
        out
    }
}

/// All candidates over unordered variable pairs, one per relation in
/// `language`, optionally restricted to scopes inside `restrict_to` and
/// containing `must_include`.
pub fn build_bias(
    voc: &Vocabulary,
    language: &[Relation],
    restrict_to: Option<&VarSet>,
    must_include: Option<VarId>,
) -> Result<ConstraintSet, ModelError> {
    if language.is_empty() {
        return Err(ModelError::Reject("the language must not be empty".into()));
    }
    if let (Some(ys), Some(x)) = (restrict_to, must_include) {
        if !ys.contains(&x) {
            return Err(ModelError::Reject(format!(
                "{} is not inside the restriction set",
                voc.var_name(x)
            )));
        }
    }
    let vars: Vec<VarId> = match restrict_to {
        Some(ys) => ys.iter().copied().filter(|v| voc.contains(*v)).collect(),
        None => voc.vars().collect(),
    };
    let mut bias = ConstraintSet::new();
    for (i, &a) in vars.iter().enumerate() {
        for &b in &vars[i + 1..] {
            if let Some(x) = must_include {
                if a != x && b != x {
                    continue;
                }
            }
            for &rel in language {
                bias.insert(Constraint::new(rel, a, b)?);
            }
        }
    }
    Ok(bias)
}
