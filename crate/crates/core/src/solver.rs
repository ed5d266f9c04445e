//! Anytime branch-and-bound over binary constraint networks.
//!
//! Hard constraints are propagated by forward checking, plus counting over
//! cliques of pairwise-distinct variables (Hall failures, hidden and naked
//! singles, and values confined to the overlap of two cliques). Candidate constraints
//! are soft: each one counts with its weight once both scope variables are
//! assigned and the pair violates it. Candidates are grouped by scope so the
//! bound of an open scope is the best pair still available in the live
//! domains, which is admissible and much tighter than summing weights.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::SolverError;
use crate::model::{kappa, Assignment, Constraint, ConstraintSet, Relation, VarId, VarSet, Vocabulary};

/// Per-candidate objective weights `1 - |Γ|·[M(c)]`. Missing entries weigh 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ObjectiveWeights {
    weights: HashMap<Constraint, i64>,
}

impl ObjectiveWeights {
    /// Every candidate weighs 1: maximize the number of violated candidates.
    pub fn uniform() -> Self {
        Self::default()
    }

    pub fn set(&mut self, c: Constraint, weight: i64) {
        self.weights.insert(c, weight);
    }

    pub fn get(&self, c: &Constraint) -> i64 {
        self.weights.get(c).copied().unwrap_or(1)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl FromIterator<(Constraint, i64)> for ObjectiveWeights {
    fn from_iter<T: IntoIterator<Item = (Constraint, i64)>>(iter: T) -> Self {
        ObjectiveWeights { weights: iter.into_iter().collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Deadline(Option<Instant>);

impl Deadline {
    pub fn after(budget: Duration) -> Self {
        Deadline(Some(Instant::now() + budget))
    }

    pub fn unlimited() -> Self {
        Deadline(None)
    }

    pub fn expired(&self) -> bool {
        self.0.is_some_and(|at| Instant::now() >= at)
    }

    pub fn instant(&self) -> Option<Instant> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Incumbent,
    Infeasible,
    NoIncumbentTimeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub assignment: Option<Assignment>,
    pub objective: Option<i64>,
    pub nodes: u64,
}

impl SolveOutcome {
    pub fn found(&self) -> bool {
        self.assignment.is_some()
    }
}

/// Objective used when generating relation-discriminating queries.
#[derive(Debug, Clone, Copy)]
pub enum FindCObjective<'a> {
    /// Violate as close to half of the candidates as possible.
    Halving,
    /// Maximize the summed weight of violated candidates.
    Weighted(&'a ObjectiveWeights),
}

/// Result of [`select_split`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitChoice {
    pub y1: VarSet,
    pub objective: i64,
}

/// Default for [`Solver::with_stall_limit`].
pub const DEFAULT_STALL_NODES: u64 = 1_000;

/// Query-generating solver. Owns the RNG that orders values, so a fixed seed
/// and an unlimited deadline make every call reproducible.
#[derive(Debug, Clone)]
pub struct Solver {
    rng: ChaCha8Rng,
    stall_limit: Option<u64>,
}

impl Solver {
    pub fn new(seed: u64) -> Self {
        Solver { rng: ChaCha8Rng::seed_from_u64(seed), stall_limit: Some(DEFAULT_STALL_NODES) }
    }

    /// Stops optimizing once this many nodes pass without improving the
    /// incumbent, reporting it as [`SolveStatus::Incumbent`]. `None` searches
    /// until optimality is proven or the deadline fires.
    pub fn with_stall_limit(mut self, nodes: Option<u64>) -> Self {
        self.stall_limit = nodes;
        self
    }

    /// Finds `e_Y` satisfying `learned[Y]` that violates at least one member
    /// of `bias[Y]`, maximizing the weight of the violated members.
    pub fn generate_query(
        &mut self,
        voc: &Vocabulary,
        vars: &VarSet,
        learned: &ConstraintSet,
        bias: &ConstraintSet,
        weights: &ObjectiveWeights,
        deadline: Deadline,
    ) -> SolveOutcome {
        let candidates: Vec<(Constraint, i64)> =
            bias.iter().filter(|c| c.scope_within(vars)).map(|c| (*c, weights.get(c))).collect();
        if candidates.is_empty() {
            return infeasible();
        }
        let goal = Goal { require_some: true, forbid_all: false, score: Score::Weighted, first_only: false };
        let hard: Vec<Constraint> = learned.iter().filter(|c| c.scope_within(vars)).copied().collect();
        let sat_seed: u64 = rand::Rng::gen(&mut self.rng);
        let mut search = Search::build(voc, vars, &hard, &candidates, goal, &mut self.rng).stall_after(self.stall_limit);
        if !search.prepare(&deadline) {
            return search.outcome();
        }
        if !search.dive(&deadline, Some(DIVE_NODES)) {
            // the dive is stuck: let clause learning find a start or prove
            // that none exists
            let cands: Vec<Constraint> = candidates.iter().map(|(c, _)| *c).collect();
            match crate::sat::find_violating(voc, vars, &hard, &cands, &deadline, sat_seed) {
                crate::sat::SatOutcome::Found(e) => search.adopt(&e),
                crate::sat::SatOutcome::Infeasible => return SolveOutcome { nodes: search.nodes, ..infeasible() },
                crate::sat::SatOutcome::Timeout => search.timed_out = true,
            }
        }
        search.optimize(&deadline);
        search.outcome()
    }

    /// Finds `e'_S` satisfying `learned[S]` with `∅ ⊊ κ_Δ(e'_S) ⊊ Δ`.
    pub fn generate_findc_query(
        &mut self,
        voc: &Vocabulary,
        scope: &VarSet,
        learned: &ConstraintSet,
        delta: &ConstraintSet,
        objective: FindCObjective<'_>,
        deadline: Deadline,
    ) -> Result<SolveOutcome, SolverError> {
        if delta.len() < 2 {
            return Err(SolverError::Reject(format!(
                "need at least two candidates to discriminate, got {}",
                delta.len()
            )));
        }
        if scope.is_empty() {
            return Err(SolverError::Reject("empty scope".into()));
        }
        if let Some(c) = delta.iter().find(|c| !c.scope_within(scope)) {
            return Err(SolverError::Reject(format!("candidate {c} lies outside the scope")));
        }
        let (candidates, score): (Vec<(Constraint, i64)>, Score) = match objective {
            FindCObjective::Halving => {
                (delta.iter().map(|c| (*c, 1)).collect(), Score::Halving { target: (delta.len() / 2) as i64 })
            }
            FindCObjective::Weighted(w) => (delta.iter().map(|c| (*c, w.get(c))).collect(), Score::Weighted),
        };
        let goal = Goal { require_some: true, forbid_all: true, score, first_only: false };
        let hard: Vec<Constraint> = learned.iter().filter(|c| c.scope_within(scope)).copied().collect();
        Ok(Search::build(voc, scope, &hard, &candidates, goal, &mut self.rng).stall_after(self.stall_limit).run(deadline))
    }

    /// Any `e_Y` satisfying `constraints[Y]`.
    pub fn solve_decision(
        &mut self,
        voc: &Vocabulary,
        constraints: &ConstraintSet,
        vars: &VarSet,
        deadline: Deadline,
    ) -> SolveOutcome {
        let goal = Goal { require_some: false, forbid_all: false, score: Score::Weighted, first_only: true };
        let hard: Vec<Constraint> = constraints.iter().filter(|c| c.scope_within(vars)).copied().collect();
        let mut out = Search::build(voc, vars, &hard, &[], goal, &mut self.rng).stall_after(self.stall_limit).run(deadline);
        if out.status == SolveStatus::Incumbent {
            out.status = SolveStatus::Optimal;
        }
        out
    }

    /// Any complete assignment satisfying `hard` that violates some member of
    /// `candidates`.
    pub fn find_violation(
        &mut self,
        voc: &Vocabulary,
        hard: &ConstraintSet,
        candidates: &ConstraintSet,
        deadline: Deadline,
    ) -> SolveOutcome {
        self.find_violation_in(voc, &voc.all_vars(), hard, candidates, deadline)
    }

    /// Any `e_Y` satisfying `hard[Y]` that violates some member of
    /// `candidates[Y]`, found or refuted by clause learning. Complete given
    /// time, so it settles the cases the branch-and-bound cannot.
    pub fn find_violation_in(
        &mut self,
        voc: &Vocabulary,
        vars: &VarSet,
        hard: &ConstraintSet,
        candidates: &ConstraintSet,
        deadline: Deadline,
    ) -> SolveOutcome {
        use rand::Rng;
        let hard_set = hard;
        let hard: Vec<Constraint> = hard.iter().filter(|c| c.scope_within(vars)).copied().collect();
        // a candidate that is itself hard cannot be violated
        let cands: Vec<Constraint> =
            candidates.iter().filter(|c| c.scope_within(vars) && !hard_set.contains(c)).copied().collect();
        let seed = self.rng.gen();
        match crate::sat::find_violating(voc, vars, &hard, &cands, &deadline, seed) {
            crate::sat::SatOutcome::Found(e) => {
                let violated = cands.iter().filter(|c| c.is_violated(&e)).count() as i64;
                SolveOutcome { status: SolveStatus::Optimal, assignment: Some(e), objective: Some(violated), nodes: 0 }
            }
            crate::sat::SatOutcome::Infeasible => infeasible(),
            crate::sat::SatOutcome::Timeout => {
                SolveOutcome { status: SolveStatus::NoIncumbentTimeout, assignment: None, objective: None, nodes: 0 }
            }
        }
    }
}

fn infeasible() -> SolveOutcome {
    SolveOutcome { status: SolveStatus::Infeasible, assignment: None, objective: None, nodes: 0 }
}

#[derive(Debug, Clone, Copy)]
enum Score {
    Weighted,
    /// Minimize `|target - violated|`; scored as its negation.
    Halving { target: i64 },
}

#[derive(Debug, Clone, Copy)]
struct Goal {
    require_some: bool,
    forbid_all: bool,
    score: Score,
    first_only: bool,
}

/// Candidates sharing one scope, plus the hard relations on that scope.
struct Group {
    a: usize,
    b: usize,
    soft: Vec<(Relation, i64)>,
    hard: Vec<Relation>,
}

#[derive(Clone, Copy)]
struct GroupEval {
    best: i64,
    min_count: i64,
    max_count: i64,
}

struct Search<'r> {
    globals: Vec<VarId>,
    values: Vec<Vec<i64>>,
    live: Vec<Vec<bool>>,
    size: Vec<usize>,
    assigned: Vec<Option<usize>>,
    trail: Vec<(usize, usize)>,
    /// Variables pruned by the assignment in progress.
    trail_since_assign: Vec<usize>,
    hard: Vec<(usize, usize, Relation)>,
    hard_adj: Vec<Vec<usize>>,
    groups: Vec<Group>,
    group_adj: Vec<Vec<usize>>,
    /// Cached [`Search::eval_group`] per group, kept in sync with the domains.
    geval: Vec<Option<GroupEval>>,
    gtrail: Vec<(usize, Option<GroupEval>)>,
    stamp: Vec<u64>,
    clock: u64,
    /// Locals involved in no constraint at all; filled in at the end.
    free: Vec<usize>,
    /// Maximal sets of pairwise-distinct locals found among the hard constraints.
    cliques: Vec<Vec<usize>>,
    var_cliques: Vec<Vec<usize>>,
    queued: Vec<bool>,
    /// Per-value tally scratch, indexed by `value - vmin`.
    tally: Vec<(u32, usize)>,
    vmin: i64,
    /// Clique reasoning is on only while probing for implied candidates; the
    /// search itself is faster with plain forward checking.
    strong: bool,
    goal: Goal,
    n_candidates: i64,
    best: Option<(i64, Vec<usize>)>,
    nodes: u64,
    stall_limit: Option<u64>,
    improved_at: u64,
    /// Node count at which the current restart gives up.
    node_cap: Option<u64>,
    capped: bool,
    timed_out: bool,
    done: bool,
    rng: &'r mut ChaCha8Rng,
    capacity: usize,
}

impl<'r> Search<'r> {
    fn build(
        voc: &Vocabulary,
        vars: &VarSet,
        hard: &[Constraint],
        candidates: &[(Constraint, i64)],
        goal: Goal,
        rng: &'r mut ChaCha8Rng,
    ) -> Self {
        let globals: Vec<VarId> = vars.iter().copied().collect();
        let local: HashMap<VarId, usize> = globals.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let n = globals.len();
        let values: Vec<Vec<i64>> = globals.iter().map(|&v| voc.domain(v).values().collect()).collect();
        let live: Vec<Vec<bool>> = values.iter().map(|d| vec![true; d.len()]).collect();
        let size: Vec<usize> = values.iter().map(Vec::len).collect();

        let mut hard_list = Vec::new();
        let mut hard_adj = vec![Vec::new(); n];
        for c in hard {
            let [a, b] = c.scope();
            let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) else { continue };
            hard_adj[la].push(hard_list.len());
            hard_adj[lb].push(hard_list.len());
            hard_list.push((la, lb, c.relation()));
        }

        let mut by_scope: HashMap<(usize, usize), usize> = HashMap::new();
        let mut groups: Vec<Group> = Vec::new();
        for &(c, w) in candidates {
            let [a, b] = c.scope();
            let (la, lb) = (local[&a], local[&b]);
            let gi = *by_scope.entry((la, lb)).or_insert_with(|| {
                groups.push(Group { a: la, b: lb, soft: Vec::new(), hard: Vec::new() });
                groups.len() - 1
            });
            groups[gi].soft.push((c.relation(), w));
        }
        for &(la, lb, rel) in &hard_list {
            if let Some(&gi) = by_scope.get(&(la, lb)) {
                groups[gi].hard.push(rel);
            }
        }
        let mut group_adj = vec![Vec::new(); n];
        for (gi, g) in groups.iter().enumerate() {
            group_adj[g.a].push(gi);
            group_adj[g.b].push(gi);
        }
        let free = (0..n).filter(|&i| hard_adj[i].is_empty() && group_adj[i].is_empty()).collect();
        let cliques = find_cliques(n, &hard_list);
        let mut var_cliques = vec![Vec::new(); n];
        for (k, cl) in cliques.iter().enumerate() {
            for &v in cl {
                var_cliques[v].push(k);
            }
        }
        let vmin = values.iter().flatten().copied().min().unwrap_or(0);
        let vmax = values.iter().flatten().copied().max().unwrap_or(0);
        let span = (vmax - vmin + 1) as usize;
        let tally = if cliques.is_empty() || span > MAX_TALLY_SPAN { Vec::new() } else { vec![(0, 0); span] };

        Search {
            globals,
            values,
            live,
            size,
            assigned: vec![None; n],
            trail: Vec::new(),
            trail_since_assign: Vec::new(),
            hard: hard_list,
            hard_adj,
            geval: Vec::new(),
            gtrail: Vec::new(),
            stamp: vec![0; groups.len()],
            clock: 0,
            groups,
            group_adj,
            free,
            queued: vec![false; cliques.len()],
            cliques,
            var_cliques,
            tally,
            vmin,
            strong: false,
            goal,
            n_candidates: candidates.len() as i64,
            best: None,
            nodes: 0,
            stall_limit: None,
            improved_at: 0,
            node_cap: None,
            capped: false,
            timed_out: false,
            done: false,
            rng,
            capacity: voc.len(),
        }
    }

    fn stall_after(mut self, limit: Option<u64>) -> Self {
        // decision searches stop at their first solution anyway
        self.stall_limit = if self.goal.first_only { None } else { limit };
        self
    }

    fn run(mut self, deadline: Deadline) -> SolveOutcome {
        if !self.prepare(&deadline) {
            return self.outcome();
        }
        if self.goal.first_only || !matches!(self.goal.score, Score::Weighted) {
            self.dfs(&deadline);
            return self.outcome();
        }
        self.dive(&deadline, None);
        self.optimize(&deadline);
        self.outcome()
    }

    /// Fixes unconstrained variables and sets up the bounds. False when some
    /// domain is empty.
    fn prepare(&mut self, deadline: &Deadline) -> bool {
        for f in self.free.clone() {
            // any value will do; draw one so queries vary with the seed
            let pick = self.rng_index(self.values[f].len());
            self.assigned[f] = Some(pick);
        }
        if self.size.iter().any(|&s| s == 0) {
            return false;
        }
        if self.goal.require_some && !self.goal.forbid_all {
            self.drop_implied(deadline);
        }
        self.geval = self.groups.iter().map(|g| self.eval_group(g)).collect();
        true
    }

    /// Looks for any solution, restarting with a doubling node budget since
    /// greedy value orders lead forward checking into dead ends it detects
    /// only deep down. False when `max_nodes` ran out first; otherwise the
    /// dive found a solution, proved there is none, or timed out.
    fn dive(&mut self, deadline: &Deadline, max_nodes: Option<u64>) -> bool {
        self.goal.first_only = true;
        self.strong = true;
        let start = self.nodes;
        let mut budget = FIRST_DIVE_NODES;
        let mut settled = true;
        loop {
            self.node_cap = Some(self.nodes + budget);
            self.dfs(deadline);
            if !self.capped {
                break;
            }
            self.capped = false;
            if max_nodes.is_some_and(|m| self.nodes - start >= m) {
                settled = false;
                break;
            }
            budget *= 2;
        }
        self.node_cap = None;
        self.goal.first_only = false;
        self.strong = false;
        self.done = false;
        settled
    }

    /// Branch and bound from the incumbent.
    fn optimize(&mut self, deadline: &Deadline) {
        if self.best.is_some() && !self.timed_out {
            self.improved_at = self.nodes;
            self.dfs(deadline);
        }
    }

    /// Adopts `e` as the incumbent when it meets the goal.
    fn adopt(&mut self, e: &Assignment) {
        let vals: Option<Vec<usize>> = (0..self.globals.len())
            .map(|i| e.get(self.globals[i]).and_then(|v| self.values[i].binary_search(&v).ok()))
            .collect();
        let Some(vals) = vals else { return };
        if let Some(score) = self.score_of(&vals) {
            if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                self.best = Some((score, vals));
            }
        }
    }

    /// Drops candidates that no assignment consistent with the hard
    /// constraints can violate, as shown by propagating each violating pair.
    /// Without this, proving that only such candidates remain can take a
    /// search exponential in the number of variables.
    fn drop_implied(&mut self, deadline: &Deadline) {
        self.strong = true;
        for gi in 0..self.groups.len() {
            let soft = std::mem::take(&mut self.groups[gi].soft);
            let mut kept = Vec::with_capacity(soft.len());
            for (rel, w) in soft {
                if deadline.expired() || self.refutable(gi, rel) {
                    kept.push((rel, w));
                } else {
                    self.n_candidates -= 1;
                }
            }
            self.groups[gi].soft = kept;
        }
        self.strong = false;
    }

    fn refutable(&mut self, gi: usize, rel: Relation) -> bool {
        let (a, b) = (self.groups[gi].a, self.groups[gi].b);
        for ia in 0..self.values[a].len() {
            for ib in 0..self.values[b].len() {
                let (va, vb) = (self.values[a][ia], self.values[b][ib]);
                if rel.holds(va, vb) || !Self::pair_ok(&self.groups[gi], va, vb) {
                    continue;
                }
                if !self.live[a][ia] || !self.live[b][ib] {
                    continue;
                }
                let mark = self.trail.len();
                let ok = self.propagate(a, ia) && self.live[b][ib] && self.propagate(b, ib);
                self.trail_since_assign.clear();
                self.assigned[b] = None;
                self.undo(a, mark, self.gtrail.len());
                if ok {
                    return true;
                }
            }
        }
        false
    }

    fn rng_index(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.rng.gen_range(0..n)
    }

    fn outcome(&self) -> SolveOutcome {
        let (status, assignment, objective) = match (&self.best, self.timed_out) {
            (Some((score, vals)), timed_out) => {
                let mut e = Assignment::empty(self.capacity);
                for (i, &vi) in vals.iter().enumerate() {
                    e.set(self.globals[i], self.values[i][vi]);
                }
                let objective = match self.goal.score {
                    Score::Weighted => *score,
                    Score::Halving { .. } => -*score,
                };
                let status = if timed_out { SolveStatus::Incumbent } else { SolveStatus::Optimal };
                (status, Some(e), Some(objective))
            }
            (None, true) => (SolveStatus::NoIncumbentTimeout, None, None),
            (None, false) => (SolveStatus::Infeasible, None, None),
        };
        SolveOutcome { status, assignment, objective, nodes: self.nodes }
    }

    fn pair_ok(g: &Group, va: i64, vb: i64) -> bool {
        g.hard.iter().all(|r| r.holds(va, vb))
    }

    fn eval_pair(g: &Group, va: i64, vb: i64) -> (i64, i64) {
        let mut w = 0;
        let mut n = 0;
        for &(rel, weight) in &g.soft {
            if !rel.holds(va, vb) {
                w += weight;
                n += 1;
            }
        }
        (w, n)
    }

    fn live_values(&self, var: usize) -> impl Iterator<Item = i64> + '_ {
        match self.assigned[var] {
            Some(i) => either_single(self.values[var][i]),
            None => either_many(&self.values[var], &self.live[var]),
        }
    }

    /// Best weight and count range a group can still reach. `None` when no
    /// live pair satisfies the hard relations on the scope.
    fn eval_group(&self, g: &Group) -> Option<GroupEval> {
        let mut out: Option<GroupEval> = None;
        for va in self.live_values(g.a) {
            for vb in self.live_values(g.b) {
                if !Self::pair_ok(g, va, vb) {
                    continue;
                }
                let (w, n) = Self::eval_pair(g, va, vb);
                out = Some(match out {
                    None => GroupEval { best: w, min_count: n, max_count: n },
                    Some(ev) => GroupEval {
                        best: ev.best.max(w),
                        min_count: ev.min_count.min(n),
                        max_count: ev.max_count.max(n),
                    },
                });
            }
        }
        out
    }

    /// Optimistic score of the node, or `None` if the node cannot lead to a
    /// solution meeting the goal.
    fn bound(&self) -> Option<i64> {
        let mut best = 0;
        let mut kmin = 0;
        let mut kmax = 0;
        for ev in &self.geval {
            let ev = (*ev)?;
            best += ev.best;
            kmin += ev.min_count;
            kmax += ev.max_count;
        }
        if self.goal.require_some && kmax == 0 {
            return None;
        }
        if self.goal.forbid_all && kmin >= self.n_candidates {
            return None;
        }
        Some(match self.goal.score {
            Score::Weighted => best,
            Score::Halving { target } => {
                if target < kmin {
                    -(kmin - target)
                } else if target > kmax {
                    -(target - kmax)
                } else {
                    0
                }
            }
        })
    }

    fn leaf_score(&self) -> Option<i64> {
        let vals: Option<Vec<usize>> = self.assigned.iter().copied().collect();
        self.score_of(&vals?)
    }

    fn score_of(&self, vals: &[usize]) -> Option<i64> {
        let mut w = 0;
        let mut n = 0;
        for g in &self.groups {
            let va = self.values[g.a][vals[g.a]];
            let vb = self.values[g.b][vals[g.b]];
            let (gw, gn) = Self::eval_pair(g, va, vb);
            w += gw;
            n += gn;
        }
        if self.goal.require_some && n == 0 {
            return None;
        }
        if self.goal.forbid_all && n >= self.n_candidates {
            return None;
        }
        Some(match self.goal.score {
            Score::Weighted => w,
            Score::Halving { target } => -(target - n).abs(),
        })
    }

    fn pick_var(&self) -> Option<usize> {
        let mut pick: Option<usize> = None;
        for i in 0..self.globals.len() {
            if self.assigned[i].is_some() {
                continue;
            }
            pick = match pick {
                None => Some(i),
                Some(p) => {
                    let better = (self.size[i], std::cmp::Reverse(self.group_adj[i].len()))
                        < (self.size[p], std::cmp::Reverse(self.group_adj[p].len()));
                    Some(if better { i } else { p })
                }
            };
        }
        pick
    }

    /// Weight gained right away by `var = values[var][vi]` on scopes whose
    /// other end is already assigned.
    fn immediate_gain(&self, var: usize, vi: usize) -> i64 {
        let v = self.values[var][vi];
        let mut gain = 0;
        for &gi in &self.group_adj[var] {
            let g = &self.groups[gi];
            let other = if g.a == var { g.b } else { g.a };
            if let Some(oi) = self.assigned[other] {
                let ov = self.values[other][oi];
                let (va, vb) = if g.a == var { (v, ov) } else { (ov, v) };
                gain += Self::eval_pair(g, va, vb).0;
            }
        }
        gain
    }

    fn assign(&mut self, var: usize, vi: usize) -> bool {
        if !self.propagate(var, vi) {
            self.trail_since_assign.clear();
            return false;
        }
        self.clock += 1;
        let mut touched = vec![var];
        touched.extend(self.trail_since_assign.drain(..));
        for t in touched {
            for k in 0..self.group_adj[t].len() {
                let gi = self.group_adj[t][k];
                if self.stamp[gi] == self.clock {
                    continue;
                }
                self.stamp[gi] = self.clock;
                let fresh = self.eval_group(&self.groups[gi]);
                let old = std::mem::replace(&mut self.geval[gi], fresh);
                self.gtrail.push((gi, old));
            }
        }
        true
    }

    fn propagate(&mut self, var: usize, vi: usize) -> bool {
        self.assigned[var] = Some(vi);
        let v = self.values[var][vi];
        for k in 0..self.hard_adj[var].len() {
            let (a, b, rel) = self.hard[self.hard_adj[var][k]];
            let (other, var_first) = if a == var { (b, true) } else { (a, false) };
            if self.assigned[other].is_some() {
                let ov = self.values[other][self.assigned[other].unwrap()];
                let ok = if var_first { rel.holds(v, ov) } else { rel.holds(ov, v) };
                if !ok {
                    return false;
                }
                continue;
            }
            for oi in 0..self.values[other].len() {
                if !self.live[other][oi] {
                    continue;
                }
                let ov = self.values[other][oi];
                let ok = if var_first { rel.holds(v, ov) } else { rel.holds(ov, v) };
                if !ok {
                    self.live[other][oi] = false;
                    self.size[other] -= 1;
                    self.trail.push((other, oi));
                    if self.trail_since_assign.last() != Some(&other) {
                        self.trail_since_assign.push(other);
                    }
                }
            }
            if self.size[other] == 0 {
                return false;
            }
        }
        if !self.strong || self.cliques.is_empty() {
            return true;
        }
        let mut queue = Vec::new();
        self.enqueue(var, &mut queue);
        for i in 0..self.trail_since_assign.len() {
            let t = self.trail_since_assign[i];
            self.enqueue(t, &mut queue);
        }
        let mut ok = true;
        while let Some(k) = queue.pop() {
            self.queued[k] = false;
            if ok && !self.clique_pass(k, &mut queue) {
                ok = false;
            }
        }
        ok
    }

    fn enqueue(&mut self, var: usize, queue: &mut Vec<usize>) {
        for &k in &self.var_cliques[var] {
            if !self.queued[k] {
                self.queued[k] = true;
                queue.push(k);
            }
        }
    }

    /// The value `var` is fixed to, if any.
    fn fixed(&self, var: usize) -> Option<i64> {
        match self.assigned[var] {
            Some(i) => Some(self.values[var][i]),
            None if self.size[var] == 1 => {
                let i = self.live[var].iter().position(|&l| l)?;
                Some(self.values[var][i])
            }
            None => None,
        }
    }

    /// Removes `value` from an unassigned variable. False on a wipe-out or
    /// when the variable is assigned that very value.
    fn prune(&mut self, var: usize, value: i64, queue: &mut Vec<usize>) -> bool {
        let Ok(i) = self.values[var].binary_search(&value) else { return true };
        if let Some(a) = self.assigned[var] {
            return a != i;
        }
        if !self.live[var][i] {
            return true;
        }
        self.live[var][i] = false;
        self.size[var] -= 1;
        self.trail.push((var, i));
        self.trail_since_assign.push(var);
        self.enqueue(var, queue);
        self.size[var] > 0
    }

    fn clique_pass(&mut self, k: usize, queue: &mut Vec<usize>) -> bool {
        let cells = std::mem::take(&mut self.cliques[k]);
        let ok = self.clique_reason(k, &cells, queue);
        self.cliques[k] = cells;
        ok
    }

    fn clique_reason(&mut self, k: usize, cells: &[usize], queue: &mut Vec<usize>) -> bool {
        // naked singles
        for &c in cells {
            let Some(v) = self.fixed(c) else { continue };
            for &o in cells {
                if o != c && !self.prune(o, v, queue) {
                    return false;
                }
            }
        }
        if self.tally.is_empty() {
            return true;
        }
        let mut seen: Vec<usize> = Vec::new();
        for &c in cells {
            for vi in 0..self.values[c].len() {
                let live = match self.assigned[c] {
                    Some(a) => a == vi,
                    None => self.live[c][vi],
                };
                if !live {
                    continue;
                }
                let slot = (self.values[c][vi] - self.vmin) as usize;
                if self.tally[slot].0 == 0 {
                    seen.push(slot);
                }
                self.tally[slot].0 += 1;
                self.tally[slot].1 = c;
            }
        }
        let mut ok = seen.len() >= cells.len();
        if ok && seen.len() == cells.len() {
            // every value is taken by exactly one cell
            for &slot in &seen {
                let (count, cell) = self.tally[slot];
                let v = self.vmin + slot as i64;
                if count == 1 {
                    if self.fixed(cell).is_none() {
                        let others: Vec<i64> = self.values[cell].iter().copied().filter(|&w| w != v).collect();
                        for w in others {
                            if !self.prune(cell, w, queue) {
                                ok = false;
                                break;
                            }
                        }
                    }
                } else if !self.point(k, cells, v, queue) {
                    ok = false;
                }
                if !ok {
                    break;
                }
            }
        }
        for slot in seen {
            self.tally[slot] = (0, 0);
        }
        ok
    }

    /// When the cells of clique `k` that can take `v` all lie in another
    /// clique, `v` is removed from the rest of that clique.
    fn point(&mut self, k: usize, cells: &[usize], v: i64, queue: &mut Vec<usize>) -> bool {
        let holders: Vec<usize> = cells.iter().copied().filter(|&c| self.can_take(c, v)).collect();
        let Some(&first) = holders.first() else { return false };
        for j in 0..self.var_cliques[first].len() {
            let k2 = self.var_cliques[first][j];
            if k2 == k || !holders.iter().all(|h| self.var_cliques[*h].contains(&k2)) {
                continue;
            }
            let targets: Vec<usize> = self.cliques[k2].iter().copied().filter(|c| !holders.contains(c)).collect();
            for t in targets {
                if !self.prune(t, v, queue) {
                    return false;
                }
            }
        }
        true
    }

    fn can_take(&self, var: usize, v: i64) -> bool {
        let Ok(i) = self.values[var].binary_search(&v) else { return false };
        match self.assigned[var] {
            Some(a) => a == i,
            None => self.live[var][i],
        }
    }

    fn undo(&mut self, var: usize, mark: usize, gmark: usize) {
        while self.gtrail.len() > gmark {
            let (gi, old) = self.gtrail.pop().unwrap();
            self.geval[gi] = old;
        }
        while self.trail.len() > mark {
            let (v, i) = self.trail.pop().unwrap();
            self.live[v][i] = true;
            self.size[v] += 1;
        }
        self.assigned[var] = None;
    }

    fn dfs(&mut self, deadline: &Deadline) {
        if self.done || self.timed_out || self.capped {
            return;
        }
        self.nodes += 1;
        if self.node_cap.is_some_and(|cap| self.nodes > cap) {
            self.capped = true;
            return;
        }
        if self.nodes % 64 == 0 && deadline.expired() {
            self.timed_out = true;
            return;
        }
        if let (Some(limit), Some(_)) = (self.stall_limit, &self.best) {
            if self.nodes - self.improved_at > limit {
                self.timed_out = true;
                return;
            }
        }
        let Some(bound) = self.bound() else { return };
        if let Some((best, _)) = &self.best {
            if bound <= *best {
                return;
            }
        }
        let Some(var) = self.pick_var() else {
            if let Some(score) = self.leaf_score() {
                let improves = self.best.as_ref().is_none_or(|(b, _)| score > *b);
                if improves {
                    let vals = self.assigned.iter().map(|a| a.unwrap()).collect();
                    self.best = Some((score, vals));
                    self.improved_at = self.nodes;
                    let at_bound = matches!(self.goal.score, Score::Halving { .. }) && score == 0;
                    if self.goal.first_only || at_bound {
                        self.done = true;
                    }
                }
            }
            return;
        };

        let mut order: Vec<usize> = (0..self.values[var].len()).filter(|&i| self.live[var][i]).collect();
        order.shuffle(self.rng);
        if matches!(self.goal.score, Score::Weighted) && !self.goal.first_only {
            let gains: HashMap<usize, i64> = order.iter().map(|&i| (i, self.immediate_gain(var, i))).collect();
            order.sort_by_key(|i| std::cmp::Reverse(gains[i]));
        }
        for vi in order {
            let mark = self.trail.len();
            let gmark = self.gtrail.len();
            if self.assign(var, vi) {
                self.dfs(deadline);
            }
            self.undo(var, mark, gmark);
            if self.done || self.timed_out || self.capped {
                return;
            }
        }
    }
}

/// Node budget of the first restart of the initial dive.
const FIRST_DIVE_NODES: u64 = 128;
/// Total dive budget before query generation turns to clause learning.
const DIVE_NODES: u64 = 4096;

/// Larger value spans skip the counting rules.
const MAX_TALLY_SPAN: usize = 4096;

fn implies_distinct(rel: Relation) -> bool {
    matches!(rel, Relation::Neq | Relation::Lt | Relation::Gt | Relation::FloorDivNeq(_))
}

/// Greedy maximal cliques of the "must differ" graph, at least three wide.
pub(crate) fn find_cliques(n: usize, hard: &[(usize, usize, Relation)]) -> Vec<Vec<usize>> {
    let mut adj = vec![vec![false; n]; n];
    let mut edges = Vec::new();
    for &(a, b, rel) in hard {
        if implies_distinct(rel) && a != b && !adj[a][b] {
            adj[a][b] = true;
            adj[b][a] = true;
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges.sort_unstable();
    let mut found: std::collections::HashSet<Vec<usize>> = std::collections::HashSet::new();
    let mut cliques: Vec<Vec<usize>> = Vec::new();
    let mut member: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in edges {
        if member[a].iter().any(|k| member[b].contains(k)) {
            continue;
        }
        let mut clique = vec![a, b];
        for v in 0..n {
            if v != a && v != b && clique.iter().all(|&c| adj[v][c]) {
                clique.push(v);
            }
        }
        clique.sort_unstable();
        if clique.len() >= 3 && found.insert(clique.clone()) {
            for &v in &clique {
                member[v].push(cliques.len());
            }
            cliques.push(clique);
        }
    }
    cliques
}

enum Values<'a> {
    Single(std::iter::Once<i64>),
    Many(std::iter::Zip<std::slice::Iter<'a, i64>, std::slice::Iter<'a, bool>>),
}

impl Iterator for Values<'_> {
    type Item = i64;

    #[inline]
    fn next(&mut self) -> Option<i64> {
        match self {
            Values::Single(it) => it.next(),
            Values::Many(it) => it.find(|(_, &alive)| alive).map(|(&v, _)| v),
        }
    }
}

fn either_single<'a>(v: i64) -> Values<'a> {
    Values::Single(std::iter::once(v))
}

fn either_many<'a>(values: &'a [i64], live: &'a [bool]) -> Values<'a> {
    Values::Many(values.iter().zip(live.iter()))
}

/// Chooses the part `Y1` of `Y` whose assignments (together with those on
/// `R`) form the next scope-finding query.
///
/// Maximizes the weight of the violated candidates in `kappa_e` whose scope
/// lies inside `R ∪ Y1`, subject to `0 < |Y1| <= ⌊|Y|/2⌋` (or `|Y1| =
/// ⌊|Y|/2⌋` with `exact_half`). Ties go to the smaller `Y1`, then to the first
/// set met by the search, which decides the most heavily weighted variables
/// first.
pub fn select_split(
    y: &VarSet,
    r: &VarSet,
    kappa_e: &ConstraintSet,
    weights: &ObjectiveWeights,
    exact_half: bool,
) -> Result<SplitChoice, SolverError> {
    if y.len() < 2 {
        return Err(SolverError::Reject(format!("cannot split a set of {} variable(s)", y.len())));
    }
    let half = y.len() / 2;
    let mut constant = 0;
    // (variables of Y the candidate needs, weight)
    let mut relevant: Vec<(Vec<VarId>, i64)> = Vec::new();
    for c in kappa_e {
        let scope = c.scope();
        if scope.iter().any(|v| !r.contains(v) && !y.contains(v)) {
            continue;
        }
        let needs: Vec<VarId> = scope.iter().copied().filter(|v| !r.contains(v)).collect();
        if needs.is_empty() {
            constant += weights.get(c);
        } else {
            relevant.push((needs, weights.get(c)));
        }
    }
    // hubs first: once they are decided, the bound credits their
    // neighbours in full
    let mut heft: HashMap<VarId, i64> = HashMap::new();
    for (needs, w) in &relevant {
        for v in needs {
            *heft.entry(*v).or_default() += w.abs();
        }
    }
    let mut rel_vars: Vec<VarId> = heft.keys().copied().collect();
    rel_vars.sort_unstable_by_key(|v| (std::cmp::Reverse(heft[v]), *v));
    let pos: HashMap<VarId, usize> = rel_vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let fillers: Vec<VarId> = y.iter().copied().filter(|v| !pos.contains_key(v)).collect();

    // candidates needing the same variables act as one
    let mut merged: HashMap<Vec<usize>, i64> = HashMap::new();
    for (needs, w) in &relevant {
        let mut key: Vec<usize> = needs.iter().map(|v| pos[v]).collect();
        key.sort_unstable();
        *merged.entry(key).or_default() += w;
    }
    let mut items: Vec<(Vec<usize>, i64)> = merged.into_iter().collect();
    items.sort_unstable();
    // candidates become decided once their last needed variable is decided
    let mut closes_at: Vec<Vec<usize>> = vec![Vec::new(); rel_vars.len()];
    for (k, (needs, _)) in items.iter().enumerate() {
        closes_at[*needs.iter().max().unwrap()].push(k);
    }

    let mut split = SplitSearch {
        items: &items,
        closes_at: &closes_at,
        n_rel: rel_vars.len(),
        n_fillers: fillers.len(),
        half,
        exact_half,
        chosen: vec![false; rel_vars.len()],
        best: None,
        nodes: 0,
        potential: Vec::new(),
    };
    split.dfs(0, 0, 0);

    let (score, chosen, fill) = split.best.ok_or_else(|| {
        SolverError::Reject("no admissible split exists".into())
    })?;
    let mut y1: VarSet = rel_vars.iter().zip(&chosen).filter(|(_, &c)| c).map(|(&v, _)| v).collect();
    y1.extend(fillers.iter().take(fill).copied());
    debug_assert!(!y1.is_empty() && y1.len() < y.len());
    Ok(SplitChoice { y1, objective: score + constant })
}

struct SplitSearch<'a> {
    items: &'a [(Vec<usize>, i64)],
    closes_at: &'a [Vec<usize>],
    n_rel: usize,
    n_fillers: usize,
    half: usize,
    exact_half: bool,
    chosen: Vec<bool>,
    /// (score, inclusion flags, number of fillers)
    best: Option<(i64, Vec<bool>, usize)>,
    nodes: u64,
    potential: Vec<i64>,
}

impl SplitSearch<'_> {
    const NODE_LIMIT: u64 = 5_000_000;

    fn best_size(&self) -> Option<(i64, usize)> {
        self.best.as_ref().map(|(s, ch, f)| (*s, ch.iter().filter(|&&c| c).count() + f))
    }

    /// Upper bound on the weight still reachable from candidates not yet
    /// decided. Each undecided variable gets a potential: shares of the
    /// positive candidates it could help close, plus the negative candidates
    /// it would certainly close. No `budget` variables can gain more than
    /// their best potentials, which this leaves sorted in `potential`
    /// (doubled).
    fn potentials(&self, depth: usize, potential: &mut Vec<i64>) {
        potential.clear();
        potential.resize(self.n_rel - depth, 0);
        for (needs, w) in self.items {
            if needs.iter().all(|&v| v < depth) || needs.iter().any(|&v| v < depth && !self.chosen[v]) {
                continue;
            }
            // doubled, so a share of one half stays integral
            let undecided = needs.iter().filter(|&&v| v >= depth).count() as i64;
            if *w > 0 {
                for &v in needs.iter().filter(|&&v| v >= depth) {
                    potential[v - depth] += 2 * *w / undecided;
                }
            } else if undecided == 1 {
                let v = needs.iter().copied().find(|&v| v >= depth).unwrap();
                potential[v - depth] += 2 * *w;
            }
        }
        potential.sort_unstable_by(|a, b| b.cmp(a));
    }

    fn gain(potential: &[i64], budget: usize) -> i64 {
        potential.iter().take(budget).take_while(|&&p| p > 0).sum::<i64>() / 2
    }

    fn dfs(&mut self, depth: usize, count: usize, score: i64) {
        self.nodes += 1;
        if self.nodes > Self::NODE_LIMIT && self.best.is_some() {
            return;
        }
        if count > self.half {
            return;
        }
        if let Some((best, best_size)) = self.best_size() {
            let mut potential = std::mem::take(&mut self.potential);
            self.potentials(depth, &mut potential);
            let better = score + Self::gain(&potential, self.half - count) > best;
            // an equal score only helps with fewer variables
            let smaller = !self.exact_half
                && count < best_size
                && score + Self::gain(&potential, best_size - 1 - count.min(best_size - 1)) >= best
                && count.max(1) < best_size;
            self.potential = potential;
            if !better && !smaller {
                return;
            }
        }
        if depth == self.n_rel {
            let fill = if self.exact_half { self.half - count } else if count == 0 { 1 } else { 0 };
            if fill > self.n_fillers {
                return;
            }
            let size = count + fill;
            let improves = match self.best_size() {
                None => true,
                Some((b, bs)) => score > b || (score == b && size < bs),
            };
            if improves {
                self.best = Some((score, self.chosen.clone(), fill));
            }
            return;
        }
        for include in [true, false] {
            self.chosen[depth] = include;
            let gained: i64 = self.closes_at[depth]
                .iter()
                .map(|&k| &self.items[k])
                .filter(|(needs, _)| needs.iter().all(|&v| self.chosen[v]))
                .map(|(_, w)| *w)
                .sum();
            self.dfs(depth + 1, count + include as usize, score + gained);
        }
        self.chosen[depth] = false;
    }
}

/// Re-evaluates a returned query against the constraints it must respect.
pub fn query_is_irredundant(e: &Assignment, learned: &ConstraintSet, bias: &ConstraintSet) -> bool {
    kappa(learned, e).is_empty() && !kappa(bias, e).is_empty()
}
