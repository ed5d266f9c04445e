//! Acquisition loop, scope finding and relation finding against simulated users.

mod common;

use common::*;
use guidacq::acquisition::{
    verify_equivalence, Acquisition, Equivalence, GuidedLayers, Layer, Oracle, SimulatedOracle,
};
use guidacq::learning::ClassifierKind;
use guidacq::model::{build_bias, kappa, Assignment, Constraint, ConstraintSet, Relation, VarId, VarSet, Vocabulary};
use guidacq::solver::Deadline;
use guidacq::AcqError;

/// Solution sets over the whole vocabulary compared by enumeration.
fn same_solutions(voc: &Vocabulary, a: &ConstraintSet, b: &ConstraintSet) -> bool {
    let vars: Vec<VarId> = voc.vars().collect();
    let mut e = Assignment::empty(voc.len());
    fn walk(voc: &Vocabulary, vars: &[VarId], e: &mut Assignment, a: &ConstraintSet, b: &ConstraintSet) -> bool {
        let Some((&v, rest)) = vars.split_first() else {
            return kappa(a, e).is_empty() == kappa(b, e).is_empty();
        };
        voc.domain(v).values().all(|value| {
            e.bind(voc, v, value).unwrap();
            walk(voc, rest, e, a, b)
        })
    }
    walk(voc, &vars, &mut e, a, b)
}

#[test]
fn empty_bias_converges_without_queries() {
    let voc = line(3, 1, 3);
    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 0));
    let mut oracle = SimulatedOracle::new(ConstraintSet::new());
    acq.acquire(&voc.all_vars(), ConstraintSet::new(), &mut oracle).unwrap();
    assert_eq!(acq.stats().total_queries(), 0);
    assert!(acq.learned().is_empty());
}

#[test]
fn two_variable_loop_learns_an_equivalent_network() {
    let voc = line(2, 1, 3);
    let (x1, x2) = (VarId(0), VarId(1));
    let target: ConstraintSet = [Constraint::new(Relation::Lt, x1, x2).unwrap()].into_iter().collect();
    for seed in 0..10 {
        let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, seed));
        let bias = build_bias(&voc, &comparisons(), None, None).unwrap();
        assert_eq!(bias.len(), 6);
        acq.acquire(&voc.all_vars(), bias, &mut SimulatedOracle::new(target.clone())).unwrap();
        assert!(same_solutions(&voc, acq.learned(), &target), "seed {seed}");
    }
}

#[test]
fn accepted_query_removes_exactly_its_violations() {
    /// (layer, answer, |B|, |κ_B(e)|, |C_L|) at each query.
    struct Recorder {
        seen: Vec<(Layer, bool, usize, usize, usize)>,
        target: SimulatedOracle,
    }
    impl Oracle for Recorder {
        fn ask(
            &mut self,
            query: &Assignment,
            ctx: &guidacq::acquisition::QueryContext<'_>,
        ) -> Result<bool, guidacq::acquisition::OracleError> {
            let answer = self.target.ask(query, ctx)?;
            self.seen.push((ctx.layer, answer, ctx.bias.len(), kappa(ctx.bias, query).len(), ctx.learned.len()));
            Ok(answer)
        }
    }
    let voc = line(4, 1, 4);
    let target: ConstraintSet = [Constraint::new(Relation::Neq, VarId(0), VarId(3)).unwrap()].into_iter().collect();
    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 3));
    let mut oracle = Recorder { seen: Vec::new(), target: SimulatedOracle::new(target.clone()) };
    let bias = build_bias(&voc, &comparisons(), None, None).unwrap();
    acq.acquire(&voc.all_vars(), bias, &mut oracle).unwrap();
    assert!(same_solutions(&voc, acq.learned(), &target));
    let mut checked = 0;
    for pair in oracle.seen.windows(2) {
        let (layer, answer, bias, violated, learned) = pair[0];
        if layer == Layer::Top && answer {
            assert_eq!(pair[1].2, bias - violated);
            assert_eq!(pair[1].4, learned);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn single_variable_vocabulary_needs_nothing() {
    let voc = line(1, 1, 3);
    let mut acq = Acquisition::new(voc, comparisons(), config(None, GuidedLayers::Qgen, 0));
    acq.grow_acquire(&mut SimulatedOracle::new(ConstraintSet::new())).unwrap();
    assert_eq!(acq.stats().total_queries(), 0);
    assert_eq!(acq.stats().candidates_seen, 0);
}

#[test]
fn all_different_on_three_variables() {
    let voc = line(3, 1, 3);
    let target: ConstraintSet = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| Constraint::new(Relation::Neq, VarId(a), VarId(b)).unwrap())
        .collect();
    for classifier in [None, Some(ClassifierKind::Counting), Some(ClassifierKind::Rf)] {
        let mut acq = Acquisition::new(voc.clone(), comparisons(), config(classifier, GuidedLayers::All, 1));
        acq.grow_acquire(&mut SimulatedOracle::new(target.clone())).unwrap();
        assert!(same_solutions(&voc, acq.learned(), &target));
        // step biases of 0, |Γ| and 2|Γ| candidates
        assert_eq!(acq.stats().candidates_seen, 3 * 6);
    }
}

#[test]
fn step_biases_partition_the_full_bias() {
    let voc = line(5, 1, 3);
    let mut union = ConstraintSet::new();
    let mut total = 0;
    let mut y = VarSet::new();
    for x in voc.vars() {
        y.insert(x);
        let step = build_bias(&voc, &comparisons(), Some(&y), Some(x)).unwrap();
        total += step.len();
        union.extend(step.iter().copied());
    }
    assert_eq!(total, union.len());
    assert_eq!(union, build_bias(&voc, &comparisons(), None, None).unwrap());
}

#[test]
fn find_scope_isolates_the_violated_pair() {
    let voc = line(8, 1, 4);
    let (x2, x7) = (VarId(2), VarId(7));
    let target: ConstraintSet = [Constraint::new(Relation::Neq, x2, x7).unwrap()].into_iter().collect();
    let pairs: Vec<(VarId, i64)> = voc.vars().map(|v| (v, if v == x2 || v == x7 { 3 } else { v.0 as i64 % 4 + 1 })).collect();
    let e = Assignment::from_pairs(&voc, &pairs).unwrap();
    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 0));
    acq.set_bias(build_bias(&voc, &comparisons(), None, None).unwrap());
    let scope = acq.find_scope(&mut SimulatedOracle::new(target), &e, &VarSet::new(), &voc.all_vars()).unwrap();
    assert_eq!(scope, [x2, x7].into_iter().collect());
}

#[test]
fn find_scope_base_case_asks_nothing() {
    let voc = line(3, 1, 3);
    let e = Assignment::from_pairs(&voc, &[(VarId(0), 1), (VarId(1), 1), (VarId(2), 1)]).unwrap();
    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 0));
    acq.set_bias(build_bias(&voc, &comparisons(), None, None).unwrap());
    let y: VarSet = [VarId(2)].into_iter().collect();
    let scope = acq.find_scope(&mut SimulatedOracle::new(ConstraintSet::new()), &e, &VarSet::new(), &y).unwrap();
    assert_eq!(scope, y);
    assert_eq!(acq.stats().total_queries(), 0);
}

#[test]
fn find_c_examples() {
    let voc = line(2, 1, 3);
    let (x, y) = (VarId(0), VarId(1));
    let s: VarSet = voc.all_vars();
    let ne = Constraint::new(Relation::Neq, x, y).unwrap();
    let target: ConstraintSet = [ne].into_iter().collect();
    let e = Assignment::from_pairs(&voc, &[(x, 2), (y, 2)]).unwrap();

    let three: ConstraintSet =
        [Relation::Neq, Relation::Lt, Relation::Leq].iter().map(|&r| Constraint::new(r, x, y).unwrap()).collect();
    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 0));
    acq.set_bias(three);
    acq.find_c(&mut SimulatedOracle::new(target.clone()), &s, &e).unwrap();
    assert!(same_solutions(&voc, acq.learned(), &target));

    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 0));
    acq.set_bias([ne, Constraint::new(Relation::Leq, x, y).unwrap()].into_iter().collect());
    acq.find_c(&mut SimulatedOracle::new(target.clone()), &s, &e).unwrap();
    assert_eq!(acq.learned(), &target);
    assert_eq!(acq.bias().len(), 1);
    assert_eq!(acq.stats().findc_queries, 0);

    let mut acq = Acquisition::new(voc.clone(), comparisons(), config(None, GuidedLayers::Qgen, 0));
    acq.set_bias([Constraint::new(Relation::Eq, x, y).unwrap()].into_iter().collect());
    let err = acq.find_c(&mut SimulatedOracle::new(target), &s, &e).unwrap_err();
    assert!(matches!(err, AcqError::Collapse(_)));
}

#[test]
fn verification_examples() {
    let voc = line(2, 1, 2);
    let (x1, x2) = (VarId(0), VarId(1));
    let lt: ConstraintSet = [Constraint::new(Relation::Lt, x1, x2).unwrap()].into_iter().collect();
    let le: ConstraintSet = [Constraint::new(Relation::Leq, x1, x2).unwrap()].into_iter().collect();
    assert_eq!(verify_equivalence(&lt, &lt, &voc, Deadline::unlimited(), 0), Equivalence::Equivalent);
    let Equivalence::Witness(w) = verify_equivalence(&le, &lt, &voc, Deadline::unlimited(), 0) else {
        panic!("expected a witness")
    };
    // an equality point: accepted by x1 <= x2, rejected by x1 < x2
    assert!(w.get(x1).is_some() && w.get(x1) == w.get(x2));
}

#[test]
fn scope_finding_is_correct_with_plain_splits() {
    for seed in 0..1000 {
        scope_trial(seed, false).unwrap();
    }
}

#[test]
fn scope_finding_is_correct_with_guided_splits() {
    for seed in 0..1000 {
        scope_trial(10_000 + seed, true).unwrap();
    }
}
