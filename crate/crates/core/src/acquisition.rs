//! The interactive acquisition loop.
//!
//! [`Acquisition::grow_acquire`] adds one variable at a time and runs
//! [`Acquisition::acquire`] on the candidates that involve it. Each top-level
//! iteration asks an irredundant query; a "yes" refutes every violated
//! candidate, a "no" triggers scope finding followed by relation finding.
//!
//! Every candidate leaving the bias is reported to the [`Guide`] exactly once
//! (label 0 if refuted, 1 if learned), which is what the classifier trains on.

use std::collections::HashMap;
use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::AcqError;
use crate::learning::{ClassifierKind, Decision, Guide};
use crate::model::{build_bias, kappa, Assignment, Constraint, ConstraintSet, Relation, VarId, VarSet, Vocabulary};
use crate::solver::{
    select_split, Deadline, FindCObjective, ObjectiveWeights, SolveOutcome, SolveStatus, Solver,
    DEFAULT_STALL_NODES,
};

/// Query-generation cutoff used by the experiments.
pub const DEFAULT_CUTOFF: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Top,
    FindScope,
    FindC,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Top => "top",
            Layer::FindScope => "findscope",
            Layer::FindC => "findc",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{0}")]
pub struct OracleError(pub String);

impl From<OracleError> for AcqError {
    fn from(e: OracleError) -> Self {
        AcqError::Oracle(e.0)
    }
}

/// What the session looks like when a query is posted.
pub struct QueryContext<'a> {
    pub query_id: u64,
    pub layer: Layer,
    pub learned: &'a ConstraintSet,
    pub bias: &'a ConstraintSet,
    pub stats: &'a AcquisitionStats,
    pub guide: &'a Guide,
}

/// Answers (partial) membership queries.
pub trait Oracle {
    /// True iff `query` violates no target constraint inside its support.
    fn ask(&mut self, query: &Assignment, ctx: &QueryContext<'_>) -> Result<bool, OracleError>;
}

/// Oracle backed by a known target network.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    target: ConstraintSet,
}

impl SimulatedOracle {
    pub fn new(target: ConstraintSet) -> Self {
        SimulatedOracle { target }
    }

    pub fn target(&self) -> &ConstraintSet {
        &self.target
    }
}

impl Oracle for SimulatedOracle {
    fn ask(&mut self, query: &Assignment, _ctx: &QueryContext<'_>) -> Result<bool, OracleError> {
        Ok(!self.target.iter().any(|c| c.is_violated(query)))
    }
}

/// Which layers use the classifier's weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidedLayers {
    /// Top-level query generation only.
    Qgen,
    /// Query generation, scope splitting and relation finding.
    All,
}

impl fmt::Display for GuidedLayers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuidedLayers::Qgen => "qgen",
            GuidedLayers::All => "all",
        })
    }
}

impl std::str::FromStr for GuidedLayers {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qgen" => Ok(GuidedLayers::Qgen),
            "all" => Ok(GuidedLayers::All),
            other => Err(format!("unknown guidance layers `{other}` (expected qgen or all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcquisitionConfig {
    /// `None` runs unguided.
    pub classifier: Option<ClassifierKind>,
    pub layers: GuidedLayers,
    pub seed: u64,
    /// Per-generation solver cutoff; `None` searches without a deadline.
    pub cutoff: Option<Duration>,
    /// See [`Solver::with_stall_limit`].
    pub stall_nodes: Option<u64>,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            classifier: None,
            layers: GuidedLayers::Qgen,
            seed: 0,
            cutoff: Some(DEFAULT_CUTOFF),
            stall_nodes: Some(DEFAULT_STALL_NODES),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryRecord {
    pub id: u64,
    pub assignment: Assignment,
    pub answer: bool,
    pub layer: Layer,
    /// System-side time between the previous answer and this query.
    pub wait: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AcquisitionStats {
    pub top_level_queries: u64,
    pub findscope_queries: u64,
    pub findc_queries: u64,
    pub top_level_generations: u64,
    pub generation_timeouts: u64,
    pub base_retries: u64,
    /// Steps closed because no query could be generated in time, rather than
    /// because convergence was proven.
    pub unproven_convergences: u64,
    pub negative_labels: u64,
    pub positive_labels: u64,
    pub candidates_seen: u64,
    /// Candidates still in the bias when their step converged.
    pub candidates_left: u64,
    pub irredundancy_violations: u64,
    /// Search nodes spent on top-level query generation.
    pub solver_nodes: u64,
    pub max_wait: Duration,
    pub total_wait: Duration,
    /// Longest refit + weight computation before a top-level query.
    pub max_guidance_time: Duration,
}

impl AcquisitionStats {
    pub fn total_queries(&self) -> u64 {
        self.top_level_queries + self.findscope_queries + self.findc_queries
    }

    pub fn avg_wait(&self) -> Duration {
        match self.total_queries() {
            0 => Duration::ZERO,
            n => self.total_wait / n as u32,
        }
    }
}

/// Equivalence check outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Equivalence {
    Equivalent,
    /// A complete assignment accepted by exactly one of the two networks.
    Witness(Assignment),
    Unknown,
}

/// One acquisition session: learned network, live bias, guidance and log.
pub struct Acquisition {
    voc: Vocabulary,
    language: Vec<Relation>,
    config: AcquisitionConfig,
    learned: ConstraintSet,
    bias: ConstraintSet,
    guide: Guide,
    solver: Solver,
    /// Seeded permutation of the variables; plain splits follow it.
    rank: HashMap<VarId, usize>,
    weights: ObjectiveWeights,
    log: Vec<QueryRecord>,
    stats: AcquisitionStats,
    last_answer: Instant,
    /// Leftovers of steps that could not prove convergence. They stay in the
    /// bias so rejections can still be explained by them, but top-level
    /// generation stops chasing them.
    deferred: ConstraintSet,
}

impl Acquisition {
    pub fn new(voc: Vocabulary, language: Vec<Relation>, config: AcquisitionConfig) -> Self {
        let mut order: Vec<VarId> = voc.vars().collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        let rank = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let guide = Guide::new(config.classifier, &voc, &language, config.seed);
        Acquisition {
            voc,
            language,
            config,
            learned: ConstraintSet::new(),
            bias: ConstraintSet::new(),
            guide,
            solver: Solver::new(config.seed).with_stall_limit(config.stall_nodes),
            rank,
            weights: ObjectiveWeights::uniform(),
            log: Vec::new(),
            stats: AcquisitionStats::default(),
            last_answer: Instant::now(),
            deferred: ConstraintSet::new(),
        }
    }

    /// Seeds the learned network with known constraints.
    pub fn with_known(mut self, known: ConstraintSet) -> Self {
        self.learned = known;
        self
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.voc
    }

    pub fn language(&self) -> &[Relation] {
        &self.language
    }

    pub fn config(&self) -> &AcquisitionConfig {
        &self.config
    }

    pub fn learned(&self) -> &ConstraintSet {
        &self.learned
    }

    pub fn bias(&self) -> &ConstraintSet {
        &self.bias
    }

    /// Replaces the live bias, for driving scope and relation finding
    /// directly.
    pub fn set_bias(&mut self, bias: ConstraintSet) {
        self.bias = bias;
    }

    pub fn guide(&self) -> &Guide {
        &self.guide
    }

    pub fn log(&self) -> &[QueryRecord] {
        &self.log
    }

    pub fn stats(&self) -> &AcquisitionStats {
        &self.stats
    }

    fn deadline(&self) -> Deadline {
        self.config.cutoff.map_or(Deadline::unlimited(), Deadline::after)
    }

    fn guides(&self, layer: Layer) -> bool {
        self.guide.is_guided() && (layer == Layer::Top || self.config.layers == GuidedLayers::All)
    }

    /// Grows `Y` one variable at a time, acquiring the candidates that
    /// involve the newly added variable at each step.
    pub fn grow_acquire(&mut self, oracle: &mut dyn Oracle) -> Result<(), AcqError> {
        self.last_answer = Instant::now();
        let mut y = VarSet::new();
        let vars: Vec<VarId> = self.voc.vars().collect();
        let mut carried = ConstraintSet::new();
        for x in vars {
            y.insert(x);
            let mut step = build_bias(&self.voc, &self.language, Some(&y), Some(x))?;
            step.remove_all(self.learned.clone().iter());
            // carried candidates were counted when first seen
            self.stats.candidates_seen -= carried.len() as u64;
            step.extend(carried.iter().copied());
            let unproven = self.stats.unproven_convergences;
            self.acquire(&y, step, oracle)?;
            // a step that could not prove convergence keeps its leftovers in
            // play; dropping them could lose target constraints for good
            carried = if self.stats.unproven_convergences > unproven {
                self.stats.candidates_left -= self.bias.len() as u64;
                self.deferred.extend(self.bias.iter().copied());
                self.bias.clone()
            } else {
                ConstraintSet::new()
            };
        }
        self.stats.candidates_left += carried.len() as u64;
        Ok(())
    }

    /// The acquisition loop over `vars` with the given bias.
    pub fn acquire(&mut self, vars: &VarSet, bias: ConstraintSet, oracle: &mut dyn Oracle) -> Result<(), AcqError> {
        debug_assert!(bias.is_disjoint(&self.learned));
        self.stats.candidates_seen += bias.len() as u64;
        self.bias = bias;
        loop {
            if self.active_bias().restrict(vars).is_empty() {
                // nothing left to ask about: converged without a solver call
                break;
            }
            let Some(e) = self.top_level_query(vars)? else { break };
            if !kappa(&self.learned, &e).is_empty() || kappa(&self.bias, &e).is_empty() {
                self.stats.irredundancy_violations += 1;
            }
            if self.ask(oracle, &e, Layer::Top)? {
                let refuted = kappa(&self.bias, &e);
                self.refute(&refuted)?;
            } else {
                let scope = self.find_scope(oracle, &e, &VarSet::new(), vars)?;
                self.find_c(oracle, &scope, &e)?;
            }
        }
        self.stats.candidates_left += self.bias.len() as u64;
        Ok(())
    }

    /// Refits the classifier, recomputes weights and generates the next
    /// top-level query. `None` means the step has converged.
    fn top_level_query(&mut self, vars: &VarSet) -> Result<Option<Assignment>, AcqError> {
        self.stats.top_level_generations += 1;
        let started = Instant::now();
        if self.guide.is_guided() {
            self.guide.refit();
            self.weights = self.guide.weights(&self.bias, &self.voc, vars.len())?;
        }
        self.stats.max_guidance_time = self.stats.max_guidance_time.max(started.elapsed());

        let active = self.active_bias();
        let outcome =
            self.solver.generate_query(&self.voc, vars, &self.learned, &active, &self.weights, self.deadline());
        self.stats.solver_nodes += outcome.nodes;
        let outcome = self.retry_unweighted(vars, &active, outcome);
        match outcome.status {
            SolveStatus::Infeasible => Ok(None),
            SolveStatus::NoIncumbentTimeout => {
                self.stats.unproven_convergences += 1;
                Ok(None)
            }
            SolveStatus::Optimal | SolveStatus::Incumbent => Ok(outcome.assignment),
        }
    }

    /// The bias minus deferred candidates.
    fn active_bias(&self) -> ConstraintSet {
        if self.deferred.is_empty() {
            return self.bias.clone();
        }
        self.bias.iter().filter(|c| !self.deferred.contains(c)).copied().collect()
    }

    fn retry_unweighted(&mut self, vars: &VarSet, active: &ConstraintSet, outcome: SolveOutcome) -> SolveOutcome {
        match outcome.status {
            SolveStatus::Incumbent => {
                self.stats.generation_timeouts += 1;
                outcome
            }
            SolveStatus::NoIncumbentTimeout => {
                // any irredundant example will do now; clause learning also
                // proves convergence when only implied candidates remain
                self.stats.generation_timeouts += 1;
                self.stats.base_retries += 1;
                let candidates = active.restrict(vars);
                let mut retry =
                    self.solver.find_violation_in(&self.voc, vars, &self.learned, &candidates, self.deadline());
                if retry.status == SolveStatus::Optimal {
                    retry.status = SolveStatus::Incumbent;
                }
                retry
            }
            _ => outcome,
        }
    }

    fn ask(&mut self, oracle: &mut dyn Oracle, e: &Assignment, layer: Layer) -> Result<bool, AcqError> {
        let wait = self.last_answer.elapsed();
        let ctx = QueryContext {
            query_id: self.log.len() as u64,
            layer,
            learned: &self.learned,
            bias: &self.bias,
            stats: &self.stats,
            guide: &self.guide,
        };
        let answer = oracle.ask(e, &ctx)?;
        self.last_answer = Instant::now();
        match layer {
            Layer::Top => self.stats.top_level_queries += 1,
            Layer::FindScope => self.stats.findscope_queries += 1,
            Layer::FindC => self.stats.findc_queries += 1,
        }
        self.stats.max_wait = self.stats.max_wait.max(wait);
        self.stats.total_wait += wait;
        self.log.push(QueryRecord { id: self.log.len() as u64, assignment: e.clone(), answer, layer, wait });
        Ok(answer)
    }

    fn refute(&mut self, set: &ConstraintSet) -> Result<(), AcqError> {
        for c in set {
            if self.bias.remove(c) {
                self.guide.record(*c, Decision::Removed, &self.voc)?;
                self.stats.negative_labels += 1;
            }
        }
        Ok(())
    }

    fn learn(&mut self, set: &ConstraintSet) -> Result<(), AcqError> {
        for c in set {
            if self.bias.remove(c) {
                self.guide.record(*c, Decision::Learned, &self.voc)?;
                self.stats.positive_labels += 1;
            }
            self.learned.insert(*c);
        }
        Ok(())
    }

    fn violated_count(&self, e: &Assignment, vars: &VarSet) -> usize {
        self.bias.iter().filter(|c| c.scope_within(vars) && c.is_violated(e)).count()
    }

    /// Splits `y` into the part kept in the next query and the rest.
    fn split(&self, e: &Assignment, r: &VarSet, y: &VarSet) -> Result<(VarSet, VarSet), AcqError> {
        let y1: VarSet = if self.guides(Layer::FindScope) {
            let violated = kappa(&self.bias, e);
            select_split(y, r, &violated, &self.weights, false)?.y1
        } else {
            let mut ordered: Vec<VarId> = y.iter().copied().collect();
            ordered.sort_by_key(|v| self.rank[v]);
            ordered.into_iter().take(y.len().div_ceil(2)).collect()
        };
        assert!(!y1.is_empty() && y1.len() < y.len(), "split must leave both parts non-empty");
        let y2 = y.difference(&y1).copied().collect();
        Ok((y1, y2))
    }

    /// Locates the scope of a target constraint violated by `e` inside
    /// `r ∪ y`, given that the user rejected `e` on `r ∪ y`.
    pub fn find_scope(
        &mut self,
        oracle: &mut dyn Oracle,
        e: &Assignment,
        r: &VarSet,
        y: &VarSet,
    ) -> Result<VarSet, AcqError> {
        let e_r = e.project(r);
        let violated_r = kappa(&self.bias, &e_r);
        if !violated_r.is_empty() {
            if self.ask(oracle, &e_r, Layer::FindScope)? {
                self.refute(&violated_r)?;
            } else {
                return Ok(VarSet::new());
            }
        }
        if y.len() == 1 {
            return Ok(y.clone());
        }
        let (y1, y2) = self.split(e, r, y)?;
        let r_y: VarSet = r.union(y).copied().collect();
        let r_y1: VarSet = r.union(&y1).copied().collect();

        let s1 = if self.violated_count(e, &r_y1) == self.violated_count(e, &r_y) {
            VarSet::new()
        } else {
            self.find_scope(oracle, e, &r_y1, &y2)?
        };
        let r_s1: VarSet = r.union(&s1).copied().collect();
        let s2 = if self.violated_count(e, &r_s1) == self.violated_count(e, &r_y) {
            VarSet::new()
        } else {
            self.find_scope(oracle, e, &r_s1, &y1)?
        };
        Ok(s1.union(&s2).copied().collect())
    }

    /// Identifies the relation(s) on `scope` responsible for rejecting `e`.
    pub fn find_c(&mut self, oracle: &mut dyn Oracle, scope: &VarSet, e: &Assignment) -> Result<(), AcqError> {
        let vars: Vec<VarId> = scope.iter().copied().collect();
        if vars.len() != 2 {
            return Err(AcqError::Collapse(format!(
                "scope finding returned {} variable(s); binary candidates need 2",
                vars.len()
            )));
        }
        let mut delta = kappa(&self.bias.on_scope(vars[0], vars[1]), e);
        loop {
            if delta.is_empty() {
                return Err(AcqError::Collapse(format!(
                    "no candidate on ({}, {}) explains the answers",
                    self.voc.var_name(vars[0]),
                    self.voc.var_name(vars[1])
                )));
            }
            if delta.len() == 1 {
                return self.learn(&delta);
            }
            let query = self.findc_query(scope, &delta)?;
            let Some(e2) = query else {
                // no assignment separates the remaining candidates
                return self.learn(&delta);
            };
            let violated = kappa(&delta, &e2);
            if self.ask(oracle, &e2, Layer::FindC)? {
                let refuted = kappa(&self.bias.on_scope(vars[0], vars[1]), &e2);
                self.refute(&refuted)?;
                delta.remove_all(violated.iter());
            } else {
                delta = violated;
            }
        }
    }

    fn findc_query(&mut self, scope: &VarSet, delta: &ConstraintSet) -> Result<Option<Assignment>, AcqError> {
        let weights = self.weights.clone();
        let objective =
            if self.guides(Layer::FindC) { FindCObjective::Weighted(&weights) } else { FindCObjective::Halving };
        let mut outcome =
            self.solver.generate_findc_query(&self.voc, scope, &self.learned, delta, objective, self.deadline())?;
        if outcome.status == SolveStatus::NoIncumbentTimeout {
            self.stats.generation_timeouts += 1;
            outcome = self.solver.generate_findc_query(
                &self.voc,
                scope,
                &self.learned,
                delta,
                FindCObjective::Halving,
                Deadline::unlimited(),
            )?;
        }
        Ok(outcome.assignment)
    }
}

/// Checks `sol(learned) = sol(target)` over the whole vocabulary.
pub fn verify_equivalence(
    learned: &ConstraintSet,
    target: &ConstraintSet,
    voc: &Vocabulary,
    deadline: Deadline,
    seed: u64,
) -> Equivalence {
    let mut solver = Solver::new(seed);
    let mut unknown = false;
    for (hard, other) in [(learned, target), (target, learned)] {
        let outcome = solver.find_violation(voc, hard, other, deadline);
        match outcome.status {
            SolveStatus::Optimal | SolveStatus::Incumbent => {
                return Equivalence::Witness(outcome.assignment.expect("found outcomes carry an assignment"))
            }
            SolveStatus::NoIncumbentTimeout => unknown = true,
            SolveStatus::Infeasible => {}
        }
    }
    if unknown {
        Equivalence::Unknown
    } else {
        Equivalence::Equivalent
    }
}

/// Candidates of `set` whose scope is exactly `[a, b]`.
pub fn candidates_on(set: &ConstraintSet, a: VarId, b: VarId) -> Vec<Constraint> {
    set.on_scope(a, b).iter().copied().collect()
}
