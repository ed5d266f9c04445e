//! Solver results checked against exhaustive enumeration.

use std::collections::BTreeSet;

mod common;

use common::*;
use guidacq::model::{kappa, Constraint, ConstraintSet, Domain, Relation, VarId, VarSet, Vocabulary};
use guidacq::solver::{query_is_irredundant, select_split, Deadline, FindCObjective, ObjectiveWeights, SolveStatus, Solver};

#[test]
fn generate_query_matches_enumeration() {
    let failures = run_checks(0, INSTANCES, |seed| Some(check_query(seed)));
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn generate_findc_query_matches_enumeration() {
    let failures = run_checks(1000, INSTANCES, check_findc);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn select_split_matches_enumeration() {
    let failures = run_checks(5000, INSTANCES, check_split);
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn find_violation_agrees_with_enumeration() {
    for seed in 0..INSTANCES as u64 {
        let inst = random_instance(9000 + seed);
        let out = exact().find_violation_in(&inst.voc, &inst.vars, &inst.learned, &inst.bias, Deadline::unlimited());
        let hard = restrict(&inst.learned, &inst.vars);
        let cands: ConstraintSet =
            restrict(&inst.bias, &inst.vars).iter().filter(|c| !hard.contains(c)).copied().collect();
        let exists = enumerate(&inst.voc, &inst.vars)
            .iter()
            .any(|e| kappa(&hard, e).is_empty() && !kappa(&cands, e).is_empty());
        if exists {
            assert_eq!(out.status, SolveStatus::Optimal, "instance {seed}");
            let e = out.assignment.unwrap();
            assert!(query_is_irredundant(&e, &hard, &cands), "instance {seed}");
        } else {
            assert_eq!(out.status, SolveStatus::Infeasible, "instance {seed}");
        }
    }
}

#[test]
fn identical_inputs_give_identical_queries() {
    for seed in 0..20 {
        let inst = random_instance(300 + seed);
        let run = || {
            Solver::new(seed).generate_query(
                &inst.voc,
                &inst.vars,
                &inst.learned,
                &inst.bias,
                &inst.weights,
                Deadline::unlimited(),
            )
        };
        assert_eq!(run(), run());
    }
}

fn two_vars(lb: i64, ub: i64) -> (Vocabulary, VarId, VarId) {
    let mut voc = Vocabulary::new();
    voc.add_tensor("x", &[2], Domain::interval(lb, ub)).unwrap();
    (voc, VarId(0), VarId(1))
}

#[test]
fn query_examples() {
    let (voc, x1, x2) = two_vars(1, 2);
    let eq = Constraint::new(Relation::Eq, x1, x2).unwrap();
    let ne = Constraint::new(Relation::Neq, x1, x2).unwrap();
    let bias: ConstraintSet = [eq, ne].into_iter().collect();
    let all = voc.all_vars();
    let learned = ConstraintSet::new();

    let out = exact().generate_query(&voc, &all, &learned, &bias, &ObjectiveWeights::uniform(), Deadline::unlimited());
    assert_eq!(out.objective, Some(1));

    let weights: ObjectiveWeights = [(eq, 1), (ne, -1)].into_iter().collect();
    let out = exact().generate_query(&voc, &all, &learned, &bias, &weights, Deadline::unlimited());
    let e = out.assignment.unwrap();
    assert_eq!(out.objective, Some(1));
    assert_ne!(e.get(x1), e.get(x2), "violating the equality means the values differ");

    let out = exact().generate_query(&voc, &all, &learned, &ConstraintSet::new(), &weights, Deadline::unlimited());
    assert_eq!(out.status, SolveStatus::Infeasible);
}

#[test]
fn findc_examples() {
    let (voc, x, y) = two_vars(1, 3);
    let s = voc.all_vars();
    let none = ConstraintSet::new();
    let delta: ConstraintSet =
        [Relation::Leq, Relation::Lt, Relation::Neq].iter().map(|&r| Constraint::new(r, x, y).unwrap()).collect();
    let out = exact().generate_findc_query(&voc, &s, &none, &delta, FindCObjective::Halving, Deadline::unlimited()).unwrap();
    let e = out.assignment.unwrap();
    assert_eq!(e.get(x), e.get(y));
    assert_eq!(kappa(&delta, &e).len(), 2);
    assert_eq!(out.objective, Some(1));

    // every feasible example violates all of delta
    let learned: ConstraintSet = [Constraint::new(Relation::Gt, x, y).unwrap()].into_iter().collect();
    let delta: ConstraintSet =
        [Relation::Leq, Relation::Lt, Relation::Eq].iter().map(|&r| Constraint::new(r, x, y).unwrap()).collect();
    let out =
        exact().generate_findc_query(&voc, &s, &learned, &delta, FindCObjective::Halving, Deadline::unlimited()).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);

    let (voc, x, y) = two_vars(1, 2);
    let eq = Constraint::new(Relation::Eq, x, y).unwrap();
    let le = Constraint::new(Relation::Leq, x, y).unwrap();
    let delta: ConstraintSet = [eq, le].into_iter().collect();
    let weights: ObjectiveWeights = [(eq, -5), (le, 1)].into_iter().collect();
    let out = exact()
        .generate_findc_query(&voc, &voc.all_vars(), &none, &delta, FindCObjective::Weighted(&weights), Deadline::unlimited())
        .unwrap();
    let e = out.assignment.unwrap();
    assert!(e.get(x) < e.get(y));
    assert_eq!(out.objective, Some(-5));

    let single: ConstraintSet = [eq].into_iter().collect();
    assert!(exact()
        .generate_findc_query(&voc, &voc.all_vars(), &none, &single, FindCObjective::Halving, Deadline::unlimited())
        .is_err());
}

#[test]
fn split_examples() {
    let mut voc = Vocabulary::new();
    voc.add_tensor("x", &[5], Domain::interval(1, 3)).unwrap();
    let [a, b, c, d, e] = [0, 1, 2, 3, 4].map(VarId);
    let c1 = Constraint::new(Relation::Neq, a, b).unwrap();
    let c2 = Constraint::new(Relation::Neq, c, d).unwrap();
    let kappa_e: ConstraintSet = [c1, c2].into_iter().collect();
    let weights: ObjectiveWeights = [(c1, 1), (c2, -5)].into_iter().collect();
    let y: VarSet = [a, b, c, d].into_iter().collect();
    let choice = select_split(&y, &VarSet::new(), &kappa_e, &weights, false).unwrap();
    assert_eq!(choice.y1, [a, b].into_iter().collect::<BTreeSet<_>>());
    assert_eq!(choice.objective, 1);

    let y5: VarSet = [a, b, c, d, e].into_iter().collect();
    let choice = select_split(&y5, &VarSet::new(), &kappa_e, &ObjectiveWeights::uniform(), true).unwrap();
    assert_eq!(choice.y1.len(), 2);

    let choice = select_split(&y, &VarSet::new(), &ConstraintSet::new(), &weights, false).unwrap();
    assert_eq!((choice.y1.len(), choice.objective), (1, 0));

    assert!(select_split(&[a].into_iter().collect(), &VarSet::new(), &kappa_e, &weights, false).is_err());
}

#[test]
fn decision_examples() {
    let (voc, x1, x2) = two_vars(1, 2);
    let lt = Constraint::new(Relation::Lt, x1, x2).unwrap();
    let all = voc.all_vars();
    let out = exact().solve_decision(&voc, &[lt].into_iter().collect(), &all, Deadline::unlimited());
    let e = out.assignment.unwrap();
    assert_eq!((e.get(x1), e.get(x2)), (Some(1), Some(2)));

    let gt = Constraint::new(Relation::Gt, x1, x2).unwrap();
    let out = exact().solve_decision(&voc, &[lt, gt].into_iter().collect(), &all, Deadline::unlimited());
    assert_eq!(out.status, SolveStatus::Infeasible);
}

#[test]
fn decision_on_sudoku4_returns_a_valid_grid() {
    let p = guidacq::benchmarks::generate_benchmark(&"sudoku4".parse().unwrap()).unwrap();
    let target = p.target.unwrap();
    let all = p.vocabulary.all_vars();
    let out = exact().solve_decision(&p.vocabulary, &target, &all, Deadline::unlimited());
    let e = out.assignment.unwrap();
    assert_eq!(e.num_bound(), 16);
    assert!(kappa(&target, &e).is_empty());
}
