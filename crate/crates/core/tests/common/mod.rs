//! Brute-force oracles and randomized trials shared by the test suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guidacq::acquisition::{Acquisition, AcquisitionConfig, GuidedLayers, SimulatedOracle};
use guidacq::learning::ClassifierKind;
use guidacq::model::{build_bias, kappa, Assignment, Constraint, ConstraintSet, Domain, Relation, VarId, VarSet, Vocabulary};
use guidacq::solver::{
    query_is_irredundant, select_split, Deadline, FindCObjective, ObjectiveWeights, SolveStatus, Solver,
};

pub const INSTANCES: usize = 200;

pub struct Instance {
    pub voc: Vocabulary,
    pub vars: VarSet,
    pub learned: ConstraintSet,
    pub bias: ConstraintSet,
    pub weights: ObjectiveWeights,
}

pub fn random_relation(rng: &mut ChaCha8Rng) -> Relation {
    match rng.gen_range(0..7) {
        6 => Relation::FloorDivNeq(rng.gen_range(2..=3)),
        k => Relation::COMPARISONS[k],
    }
}

pub fn random_vocabulary(rng: &mut ChaCha8Rng, n: usize) -> Vocabulary {
    let mut voc = Vocabulary::new();
    voc.add_tensor("x", &[n], Domain::interval(1, 1)).unwrap();
    for i in 0..n {
        let lb = rng.gen_range(0..3);
        let ub = lb + rng.gen_range(0..5);
        let holes: Vec<i64> = if ub > lb + 1 && rng.gen_bool(0.2) { vec![lb + 1] } else { Vec::new() };
        voc.set_domain(VarId(i), Domain::with_holes(lb, ub, holes)).unwrap();
    }
    voc
}

pub fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (VarId, VarId) {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    (VarId(a), VarId(b))
}

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    let voc = random_vocabulary(&mut rng, n);
    let mut learned = ConstraintSet::new();
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = random_pair(&mut rng, n);
        learned.insert(Constraint::new(random_relation(&mut rng), a, b).unwrap());
    }
    let mut bias = ConstraintSet::new();
    for _ in 0..rng.gen_range(1..=3 * n) {
        let (a, b) = random_pair(&mut rng, n);
        let c = Constraint::new(random_relation(&mut rng), a, b).unwrap();
        if !learned.contains(&c) {
            bias.insert(c);
        }
    }
    let weights: ObjectiveWeights = bias.iter().map(|c| (*c, rng.gen_range(-5..=3))).collect();
    // a strict subset of the variables now and then
    let vars: VarSet = if n > 2 && rng.gen_bool(0.3) {
        voc.vars().filter(|v| v.0 + 1 < n).collect()
    } else {
        voc.all_vars()
    };
    Instance { voc, vars, learned, bias, weights }
}

/// Every complete assignment of `vars`.
pub fn enumerate(voc: &Vocabulary, vars: &VarSet) -> Vec<Assignment> {
    let mut out = vec![Assignment::empty(voc.len())];
    for &v in vars {
        let mut next = Vec::new();
        for e in &out {
            for value in voc.domain(v).values() {
                let mut e = e.clone();
                e.bind(voc, v, value).unwrap();
                next.push(e);
            }
        }
        out = next;
    }
    out
}

pub fn restrict(set: &ConstraintSet, vars: &VarSet) -> ConstraintSet {
    set.iter().filter(|c| c.scope_within(vars)).copied().collect()
}

pub fn weight_of(set: &ConstraintSet, weights: &ObjectiveWeights) -> i64 {
    set.iter().map(|c| weights.get(c)).sum()
}

pub fn brute_query(inst: &Instance) -> Option<i64> {
    let hard = restrict(&inst.learned, &inst.vars);
    let cands = restrict(&inst.bias, &inst.vars);
    enumerate(&inst.voc, &inst.vars)
        .iter()
        .filter(|e| kappa(&hard, e).is_empty())
        .map(|e| kappa(&cands, e))
        .filter(|k| !k.is_empty())
        .map(|k| weight_of(&k, &inst.weights))
        .max()
}

pub fn exact() -> Solver {
    Solver::new(7).with_stall_limit(None)
}

/// Checks one random instance of query generation against enumeration.
pub fn check_query(seed: u64) -> Result<(), String> {
    let inst = random_instance(seed);
    let out = exact().generate_query(&inst.voc, &inst.vars, &inst.learned, &inst.bias, &inst.weights, Deadline::unlimited());
    let fail = |what: &str| Err(format!("query instance {seed}: {what}"));
    match brute_query(&inst) {
        None if out.status == SolveStatus::Infeasible => Ok(()),
        None => fail("expected infeasible"),
        Some(best) => {
            if out.status != SolveStatus::Optimal || out.objective != Some(best) {
                return fail(&format!("expected optimum {best}, got {:?} {:?}", out.status, out.objective));
            }
            let e = out.assignment.unwrap();
            let cands = restrict(&inst.bias, &inst.vars);
            if e.support() != inst.vars
                || !query_is_irredundant(&e, &restrict(&inst.learned, &inst.vars), &cands)
                || weight_of(&kappa(&cands, &e), &inst.weights) != best
            {
                return fail("returned assignment does not realize the optimum");
            }
            Ok(())
        }
    }
}

fn brute_findc(inst: &Instance, delta: &ConstraintSet, halving: bool) -> Option<i64> {
    let hard = restrict(&inst.learned, &inst.vars);
    let target = (delta.len() / 2) as i64;
    let feasible = enumerate(&inst.voc, &inst.vars)
        .into_iter()
        .filter(|e| kappa(&hard, e).is_empty())
        .map(|e| kappa(delta, &e))
        .filter(|k| !k.is_empty() && k.len() < delta.len());
    if halving {
        feasible.map(|k| (target - k.len() as i64).abs()).min()
    } else {
        feasible.map(|k| weight_of(&k, &inst.weights)).max()
    }
}

/// Checks relation-finding queries under both objectives; `None` when the
/// instance has fewer than two candidates to discriminate.
pub fn check_findc(seed: u64) -> Option<Result<(), String>> {
    let inst = random_instance(seed);
    let delta = restrict(&inst.bias, &inst.vars);
    if delta.len() < 2 {
        return None;
    }
    for halving in [true, false] {
        let objective = if halving { FindCObjective::Halving } else { FindCObjective::Weighted(&inst.weights) };
        let out = exact()
            .generate_findc_query(&inst.voc, &inst.vars, &inst.learned, &delta, objective, Deadline::unlimited())
            .unwrap();
        let fail = |what: String| Some(Err(format!("findc instance {seed} halving={halving}: {what}")));
        match brute_findc(&inst, &delta, halving) {
            None if out.status == SolveStatus::Infeasible => {}
            None => return fail("expected infeasible".into()),
            Some(best) => {
                if out.status != SolveStatus::Optimal || out.objective != Some(best) {
                    return fail(format!("expected optimum {best}, got {:?} {:?}", out.status, out.objective));
                }
                let e = out.assignment.unwrap();
                let k = kappa(&delta, &e);
                if k.is_empty() || k.len() == delta.len() || !kappa(&restrict(&inst.learned, &inst.vars), &e).is_empty() {
                    return fail("returned assignment does not discriminate".into());
                }
            }
        }
    }
    Some(Ok(()))
}

fn split_score(y1: &VarSet, r: &VarSet, kappa_e: &ConstraintSet, weights: &ObjectiveWeights) -> i64 {
    let inside: VarSet = r.union(y1).copied().collect();
    kappa_e.iter().filter(|c| c.scope_within(&inside)).map(|c| weights.get(c)).sum()
}

/// Checks one split choice against all subsets; `None` when `Y` is too small
/// to split. A third of the instances put every candidate on one hub.
pub fn check_split(seed: u64) -> Option<Result<(), String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=16);
    let vars: Vec<VarId> = (0..n).map(VarId).collect();
    let r_len = rng.gen_range(0..n.min(4));
    let r: VarSet = vars[..r_len].iter().copied().collect();
    let y: VarSet = vars[r_len..].iter().copied().collect();
    if y.len() < 2 {
        return None;
    }
    let hub = rng.gen_bool(0.3).then(|| VarId(rng.gen_range(0..n)));
    let mut kappa_e = ConstraintSet::new();
    for _ in 0..rng.gen_range(0..3 * n) {
        let (a, b) = random_pair(&mut rng, n);
        let a = match hub {
            Some(h) if b != h => h,
            _ => a,
        };
        kappa_e.insert(Constraint::new(random_relation(&mut rng), a, b).unwrap());
    }
    let weights: ObjectiveWeights = kappa_e.iter().map(|c| (*c, rng.gen_range(-5..=3))).collect();
    for exact_half in [false, true] {
        let choice = select_split(&y, &r, &kappa_e, &weights, exact_half).unwrap();
        let half = y.len() / 2;
        let ys: Vec<VarId> = y.iter().copied().collect();
        let mut best: Option<(i64, usize)> = None;
        for mask in 1u32..(1 << ys.len()) - 1 {
            let size = mask.count_ones() as usize;
            if size > half || (exact_half && size != half) {
                continue;
            }
            let y1: VarSet = ys.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, v)| *v).collect();
            let s = split_score(&y1, &r, &kappa_e, &weights);
            best = match best {
                Some((b, bs)) if b > s || (b == s && bs <= size) => Some((b, bs)),
                _ => Some((s, size)),
            };
        }
        let (score, size) = best.unwrap();
        if choice.objective != score
            || choice.y1.len() != size
            || !choice.y1.is_subset(&y)
            || split_score(&choice.y1, &r, &kappa_e, &weights) != score
        {
            return Some(Err(format!(
                "split instance {seed} exact_half={exact_half}: expected ({score}, |Y1|={size}), got ({}, {:?})",
                choice.objective, choice.y1
            )));
        }
    }
    Some(Ok(()))
}

/// Runs `check` on consecutive seeds from `first` until `count` instances
/// were applicable; returns the failures.
pub fn run_checks(first: u64, count: usize, check: impl Fn(u64) -> Option<Result<(), String>>) -> Vec<String> {
    let mut failures = Vec::new();
    let mut done = 0;
    let mut seed = first;
    while done < count {
        if let Some(result) = check(seed) {
            done += 1;
            if let Err(e) = result {
                failures.push(e);
            }
        }
        seed += 1;
    }
    failures
}

pub fn line(n: usize, lb: i64, ub: i64) -> Vocabulary {
    let mut voc = Vocabulary::new();
    voc.add_tensor("x", &[n], Domain::interval(lb, ub)).unwrap();
    voc
}

pub fn config(classifier: Option<ClassifierKind>, layers: GuidedLayers, seed: u64) -> AcquisitionConfig {
    AcquisitionConfig { classifier, layers, seed, cutoff: None, ..AcquisitionConfig::default() }
}

pub fn comparisons() -> Vec<Relation> {
    Relation::COMPARISONS.to_vec()
}

/// One randomized scope-finding trial: a target, a rejected complete
/// example, then scope and relation finding from scratch.
pub fn scope_trial(seed: u64, guided: bool) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12);
    let voc = line(n, 1, rng.gen_range(2..=5));
    let mut target = ConstraintSet::new();
    for _ in 0..rng.gen_range(1..=n) {
        let a = rng.gen_range(0..n);
        let b = (a + rng.gen_range(1..n)) % n;
        let rel = Relation::COMPARISONS[rng.gen_range(0..6)];
        target.insert(Constraint::new(rel, VarId(a), VarId(b)).unwrap());
    }
    let e = loop {
        let pairs: Vec<(VarId, i64)> = voc.vars().map(|v| (v, rng.gen_range(1..=voc.domain(v).values().last().unwrap()))).collect();
        let e = Assignment::from_pairs(&voc, &pairs).unwrap();
        if !kappa(&target, &e).is_empty() {
            break e;
        }
    };
    let violated = kappa(&target, &e);
    let (classifier, layers) =
        if guided { (Some(ClassifierKind::Counting), GuidedLayers::All) } else { (None, GuidedLayers::Qgen) };
    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(classifier, layers, seed));
    acq.set_bias(build_bias(&voc, &comparisons(), None, None).unwrap());
    let mut oracle = SimulatedOracle::new(target.clone());
    let scope = acq.find_scope(&mut oracle, &e, &VarSet::new(), &voc.all_vars()).map_err(|e| e.to_string())?;
    if !violated.iter().any(|c| c.scope().iter().copied().collect::<VarSet>() == scope) {
        return Err(format!("trial {seed}: {scope:?} is not the scope of a violated target constraint"));
    }
    acq.find_c(&mut oracle, &scope, &e).map_err(|e| format!("trial {seed}: {e}"))?;
    if kappa(acq.learned(), &e).is_empty() {
        return Err(format!("trial {seed}: the learned constraint must reject e"));
    }
    for c in acq.learned() {
        let [a, b] = c.scope();
        let on_scope: ConstraintSet = target.on_scope(a, b);
        // every learned relation is implied by the target on its scope
        for va in voc.domain(a).values() {
            for vb in voc.domain(b).values() {
                let pair = Assignment::from_pairs(&voc, &[(a, va), (b, vb)]).unwrap();
                if kappa(&on_scope, &pair).is_empty() && c.is_violated(&pair) {
                    return Err(format!("trial {seed}: {c} rejects a target-accepted pair"));
                }
            }
        }
    }
    Ok(())
}
