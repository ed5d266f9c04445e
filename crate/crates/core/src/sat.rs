//! CDCL decision procedure for "some assignment of `vars` satisfies the hard
//! constraints and violates a candidate".
//!
//! The branch-and-bound search is good at optimizing but weak at proving that
//! no such assignment exists when the remaining candidates are implied by the
//! hard network in non-obvious ways; clause learning handles those proofs.

use std::collections::HashMap;

use batsat::{lbool, BasicSolver, Lit, SolverInterface, SolverOpts};

use crate::model::{Assignment, Constraint, Relation, VarId, VarSet, Vocabulary};
use crate::solver::{find_cliques, Deadline};

/// Pairwise at-most-one clauses up to this domain size, a sequential
/// counter above it.
const PAIRWISE_AMO_MAX: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum SatOutcome {
    Found(Assignment),
    Infeasible,
    Timeout,
}

struct Encoding {
    solver: BasicSolver,
    vars: Vec<VarId>,
    values: Vec<Vec<i64>>,
    lits: Vec<Vec<Lit>>,
}

impl Encoding {
    fn lit(&self, local: usize, value: i64) -> Option<Lit> {
        self.values[local].binary_search(&value).ok().map(|i| self.lits[local][i])
    }

    fn clause(&mut self, mut c: Vec<Lit>) {
        self.solver.add_clause_reuse(&mut c);
    }
}

/// Searches for an assignment of `vars` satisfying every `hard` constraint
/// inside `vars` and violating at least one of `candidates`.
pub(crate) fn find_violating(
    voc: &Vocabulary,
    vars: &VarSet,
    hard: &[Constraint],
    candidates: &[Constraint],
    deadline: &Deadline,
    seed: u64,
) -> SatOutcome {
    if candidates.is_empty() {
        return SatOutcome::Infeasible;
    }
    let opts = SolverOpts { random_seed: (seed % 1_000_000) as f64 + 1.0, ..SolverOpts::default() };
    let mut solver = BasicSolver::new(opts, Default::default());
    if let Some(at) = deadline.instant() {
        solver.cb_mut().set_stop(move || std::time::Instant::now() >= at);
    }
    let order: Vec<VarId> = vars.iter().copied().collect();
    let local: HashMap<VarId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let values: Vec<Vec<i64>> = order.iter().map(|&v| voc.domain(v).values().collect()).collect();
    let lits: Vec<Vec<Lit>> =
        values.iter().map(|d| d.iter().map(|_| Lit::new(solver.new_var_default(), true)).collect()).collect();
    let mut enc = Encoding { solver, vars: order, values, lits };

    for i in 0..enc.vars.len() {
        let row = enc.lits[i].clone();
        enc.clause(row.clone());
        if row.len() <= PAIRWISE_AMO_MAX {
            for a in 0..row.len() {
                for b in a + 1..row.len() {
                    enc.clause(vec![!row[a], !row[b]]);
                }
            }
        } else {
            let s: Vec<Lit> = (1..row.len()).map(|_| Lit::new(enc.solver.new_var_default(), true)).collect();
            enc.clause(vec![!row[0], s[0]]);
            for k in 1..row.len() - 1 {
                enc.clause(vec![!row[k], s[k]]);
                enc.clause(vec![!s[k - 1], s[k]]);
                enc.clause(vec![!row[k], !s[k - 1]]);
            }
            enc.clause(vec![!row[row.len() - 1], !s[row.len() - 2]]);
        }
    }

    let mut distinct = Vec::new();
    for c in hard {
        let [a, b] = c.scope();
        let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) else { continue };
        forbid_pairs(&mut enc, la, lb, c.relation());
        distinct.push((la, lb, c.relation()));
    }
    // every value of a full clique is taken: redundant, but it hands the
    // solver the pigeonhole facts it would otherwise have to rediscover
    for clique in find_cliques(enc.vars.len(), &distinct) {
        let mut union: Vec<i64> = clique.iter().flat_map(|&v| enc.values[v].iter().copied()).collect();
        union.sort_unstable();
        union.dedup();
        if union.len() != clique.len() {
            continue;
        }
        for &value in &union {
            let c: Vec<Lit> = clique.iter().filter_map(|&v| enc.lit(v, value)).collect();
            enc.clause(c);
        }
    }

    let mut some = Vec::with_capacity(candidates.len());
    for c in candidates {
        let [a, b] = c.scope();
        let (Some(&la), Some(&lb)) = (local.get(&a), local.get(&b)) else { continue };
        let z = Lit::new(enc.solver.new_var_default(), true);
        some.push(z);
        let mut options = vec![!z];
        for ia in 0..enc.values[la].len() {
            let va = enc.values[la][ia];
            let bad: Vec<Lit> = (0..enc.values[lb].len())
                .filter(|&ib| !c.relation().holds(va, enc.values[lb][ib]))
                .map(|ib| enc.lits[lb][ib])
                .collect();
            if bad.is_empty() {
                continue;
            }
            let w = Lit::new(enc.solver.new_var_default(), true);
            options.push(w);
            enc.clause(vec![!w, enc.lits[la][ia]]);
            let mut reach = vec![!w];
            reach.extend(bad);
            enc.clause(reach);
        }
        enc.clause(options);
    }
    if some.is_empty() {
        return SatOutcome::Infeasible;
    }
    enc.clause(some);

    let result = enc.solver.solve_limited(&[]);
    if result == lbool::TRUE {
        let mut e = Assignment::empty(voc.len());
        for (i, &var) in enc.vars.iter().enumerate() {
            let pick = (0..enc.values[i].len()).find(|&k| enc.solver.value_lit(enc.lits[i][k]) == lbool::TRUE);
            e.set(var, enc.values[i][pick.unwrap_or(0)]);
        }
        SatOutcome::Found(e)
    } else if result == lbool::FALSE {
        SatOutcome::Infeasible
    } else {
        SatOutcome::Timeout
    }
}

fn forbid_pairs(enc: &mut Encoding, la: usize, lb: usize, rel: Relation) {
    for ia in 0..enc.values[la].len() {
        for ib in 0..enc.values[lb].len() {
            if !rel.holds(enc.values[la][ia], enc.values[lb][ib]) {
                let c = vec![!enc.lits[la][ia], !enc.lits[lb][ib]];
                enc.clause(c);
            }
        }
    }
}
