//! Model invariants over random inputs.

use proptest::prelude::*;

use guidacq::model::{
    build_bias, kappa, Assignment, Constraint, ConstraintSet, Domain, Relation, VarId, VarSet, Verdict, Vocabulary,
};

const N: usize = 6;

fn vocabulary() -> Vocabulary {
    let mut voc = Vocabulary::new();
    voc.add_tensor("x", &[N], Domain::interval(0, 5)).unwrap();
    voc
}

fn relation() -> impl Strategy<Value = Relation> {
    prop_oneof![
        prop::sample::select(Relation::COMPARISONS.to_vec()),
        (1i64..4).prop_map(Relation::FloorDivNeq),
    ]
}

fn constraint() -> impl Strategy<Value = Constraint> {
    (relation(), 0..N, 1..N).prop_map(|(r, a, d)| Constraint::new(r, VarId(a), VarId((a + d) % N)).unwrap())
}

fn partial_assignment() -> impl Strategy<Value = Assignment> {
    prop::collection::vec(prop::option::of(0i64..=5), N).prop_map(|values| {
        let voc = vocabulary();
        let pairs: Vec<(VarId, i64)> =
            values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (VarId(i), v))).collect();
        Assignment::from_pairs(&voc, &pairs).unwrap()
    })
}

fn truth(rel: Relation, a: i64, b: i64) -> bool {
    match rel {
        Relation::Eq => a == b,
        Relation::Neq => a != b,
        Relation::Lt => a < b,
        Relation::Gt => a > b,
        Relation::Leq => a <= b,
        Relation::Geq => a >= b,
        Relation::FloorDivNeq(p) => a.div_euclid(p) != b.div_euclid(p),
    }
}

proptest! {
    #[test]
    fn kappa_lies_inside_the_support(set in prop::collection::vec(constraint(), 0..20), e in partial_assignment()) {
        let set: ConstraintSet = set.into_iter().collect();
        let k = kappa(&set, &e);
        let support = e.support();
        for c in &k {
            prop_assert!(set.contains(c));
            prop_assert!(c.scope_within(&support));
            prop_assert_eq!(c.evaluate(&e), Verdict::Violated);
        }
        let inside = set.restrict(&support);
        prop_assert_eq!(k, kappa(&inside, &e));
    }

    #[test]
    fn projection_only_shrinks_kappa(set in prop::collection::vec(constraint(), 0..20), e in partial_assignment(), keep in prop::collection::btree_set(0..N, 0..=N)) {
        let set: ConstraintSet = set.into_iter().collect();
        let vars: VarSet = keep.into_iter().map(VarId).collect();
        let projected = kappa(&set, &e.project(&vars));
        let full = kappa(&set, &e);
        for c in &projected {
            prop_assert!(full.contains(c));
        }
    }

    #[test]
    fn orientation_does_not_change_meaning(rel in relation(), a in 0..N, d in 1..N, va in 0i64..=5, vb in 0i64..=5) {
        let voc = vocabulary();
        let (x, y) = (VarId(a), VarId((a + d) % N));
        let c = Constraint::new(rel, x, y).unwrap();
        let e = Assignment::from_pairs(&voc, &[(x, va), (y, vb)]).unwrap();
        prop_assert_eq!(c.is_violated(&e), !truth(rel, va, vb));
        prop_assert_eq!(rel.flipped().holds(vb, va), truth(rel, va, vb));
        prop_assert!(c.scope()[0] < c.scope()[1]);
    }

    #[test]
    fn bias_filter(keep in prop::collection::btree_set(0..N, 1..=N), pick in 0..N, langsize in 1usize..=6) {
        let voc = vocabulary();
        let ys: VarSet = keep.into_iter().map(VarId).collect();
        let x = *ys.iter().nth(pick % ys.len()).unwrap();
        let language = Relation::COMPARISONS[..langsize].to_vec();
        let bias = build_bias(&voc, &language, Some(&ys), Some(x)).unwrap();
        prop_assert_eq!(bias.len(), (ys.len() - 1) * language.len());
        for c in &bias {
            prop_assert!(c.scope_within(&ys));
            prop_assert!(c.involves(x));
        }
        let all = build_bias(&voc, &language, Some(&ys), None).unwrap();
        prop_assert_eq!(all.len(), ys.len() * (ys.len() - 1) / 2 * language.len());
    }
}

#[test]
fn relation_truth_table() {
    let rows: [(Relation, [bool; 3]); 7] = [
        (Relation::Eq, [false, true, false]),
        (Relation::Neq, [true, false, true]),
        (Relation::Lt, [true, false, false]),
        (Relation::Gt, [false, false, true]),
        (Relation::Leq, [true, true, false]),
        (Relation::Geq, [false, true, true]),
        (Relation::FloorDivNeq(3), [true, false, false]),
    ];
    // pairs (2, 3), (3, 3), (4, 3)
    for (rel, expected) in rows {
        let got = [rel.holds(2, 3), rel.holds(3, 3), rel.holds(4, 3)];
        assert_eq!(got, expected, "{rel}");
    }
    assert!(Relation::FloorDivNeq(3).holds(5, 6));
    assert!(!Relation::FloorDivNeq(3).holds(-1, -3));
}
