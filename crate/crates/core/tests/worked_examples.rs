//! Hand-checked inputs for every public operation, including the five
//! shipped golden traces.

use std::collections::BTreeSet;

use causalcheck::consistency::{
    check_all, check_cc, check_ccv, check_cm, detect_patterns, validate_pattern, Criterion, Evidence, PatternKind,
};
use causalcheck::history::{
    apply_renaming, derive_history, is_differentiated, parse_trace, DefaultRule, Execution, History, OpId, Renaming,
    TraceError,
};
use causalcheck::monitor::{build_mcc, feed, monitor_branch, monitor_execution, Branch, MonitorState};
use causalcheck::oracle::{
    brute_force_sat, encode_sat, oracle_check, spec_member, Cnf, Label, OracleConfig, SpecSequence,
};
use causalcheck::relations::{compute_cf, compute_co, compute_hb, compute_rf, find_cycle, BitMatrix, CausalOrder};
use causalcheck::simstore::{fuzz, run_sim, Protocol, SimConfig};

const CM_NOT_CCV: &str = include_str!("../traces/cm_not_ccv.trace");
const CCV_NOT_CM: &str = include_str!("../traces/ccv_not_cm.trace");
const CC_ONLY: &str = include_str!("../traces/cc_only.trace");
const ALL_CAUSAL: &str = include_str!("../traces/all_causal.trace");
const NOT_CC: &str = include_str!("../traces/not_cc.trace");

fn hist(text: &str) -> History {
    derive_history(&parse_trace(text).unwrap())
}

fn id(site: u32, seq: u32) -> OpId {
    OpId::new(site, seq)
}

fn idx(h: &History, site: u32, seq: u32) -> usize {
    h.index_of(id(site, seq)).unwrap()
}

fn verdicts(h: &History) -> [bool; 3] {
    let v = check_all(h).unwrap();
    [
        v[&Criterion::CC].consistent,
        v[&Criterion::CM].consistent,
        v[&Criterion::CCv].consistent,
    ]
}

#[test]
fn golden_traces_classify() {
    assert_eq!(verdicts(&hist(CM_NOT_CCV)), [true, true, false]);
    assert_eq!(verdicts(&hist(CCV_NOT_CM)), [true, false, true]);
    assert_eq!(verdicts(&hist(CC_ONLY)), [true, false, false]);
    assert_eq!(verdicts(&hist(ALL_CAUSAL)), [true, true, true]);
    assert_eq!(verdicts(&hist(NOT_CC)), [false, false, false]);
}

#[test]
fn golden_witness_kinds() {
    let kind = |t: &str, c: Criterion| check_all(&hist(t)).unwrap()[&c].pattern().unwrap().kind;
    assert_eq!(kind(CM_NOT_CCV, Criterion::CCv), PatternKind::CyclicCF);
    assert_eq!(kind(CCV_NOT_CM, Criterion::CM), PatternKind::WriteHBInitRead);
    assert_eq!(kind(CC_ONLY, Criterion::CCv), PatternKind::CyclicCF);
    assert!(matches!(
        kind(CC_ONLY, Criterion::CM),
        PatternKind::WriteHBInitRead | PatternKind::CyclicHB
    ));
    assert_eq!(kind(NOT_CC, Criterion::CC), PatternKind::WriteCORead);
    for t in [CM_NOT_CCV, CCV_NOT_CM, CC_ONLY, ALL_CAUSAL, NOT_CC] {
        let h = hist(t);
        for p in &detect_patterns(&h).unwrap().patterns {
            validate_pattern(&h, p).unwrap();
        }
    }
}

#[test]
fn golden_traces_agree_with_oracle() {
    for t in [CM_NOT_CCV, CCV_NOT_CM, CC_ONLY, ALL_CAUSAL, NOT_CC] {
        let h = hist(t);
        let fast = check_all(&h).unwrap();
        for c in Criterion::ALL {
            let o = oracle_check(&h, c, &OracleConfig::default()).unwrap();
            assert_eq!(o.consistent, fast[&c].consistent, "{c} on {t:?}");
        }
    }
}

#[test]
fn parse_examples() {
    let e = parse_trace("0 wr x 1\n0 rd x 2\n1 wr x 2\n1 rd x 1").unwrap();
    assert_eq!(e.len(), 4);
    assert_eq!(derive_history(&e).sites(), vec![0, 1]);
    assert!(parse_trace("").unwrap().is_empty());
    let e = parse_trace("0 rd x 0").unwrap();
    assert!(e.events()[0].is_read() && e.events()[0].value == 0);
}

#[test]
fn parse_errors() {
    assert!(matches!(
        parse_trace("0 wr x 1\n0 xx x 1"),
        Err(TraceError::Malformed { line: 2, .. })
    ));
    assert!(matches!(
        parse_trace("@0 0 wr x 1\n@0 0 wr x 2"),
        Err(TraceError::DuplicateSeq { .. })
    ));
    assert!(matches!(
        parse_trace("0 wr x -3"),
        Err(TraceError::NegativeValue { line: 1, .. })
    ));
    assert!(parse_trace("# comment\n\n@0 0 wr x 1\n@0 1 rd x 1\n").is_ok());
}

#[test]
fn derive_history_program_order() {
    let h = hist(CM_NOT_CCV);
    assert!(h.po_lt(idx(&h, 0, 0), idx(&h, 0, 1)));
    assert!(h.po_lt(idx(&h, 1, 0), idx(&h, 1, 1)));
    assert!(!h.po_lt(idx(&h, 0, 0), idx(&h, 1, 1)));
    assert!(derive_history(&Execution::default()).is_empty());
    let chain = hist("3 wr x 1\n3 rd x 1\n3 wr y 1");
    let (a, b, c) = (idx(&chain, 3, 0), idx(&chain, 3, 1), idx(&chain, 3, 2));
    assert!(chain.po_lt(a, b) && chain.po_lt(b, c) && chain.po_lt(a, c));
}

#[test]
fn differentiation_examples() {
    assert!(is_differentiated(&hist(NOT_CC)));
    assert!(!is_differentiated(&hist("0 wr x 1\n0 wr x 1")));
    assert!(!is_differentiated(&hist("0 wr x 0")));
}

#[test]
fn renaming_examples() {
    let h = hist(CC_ONLY);
    assert_eq!(apply_renaming(&h, &Renaming::identity()), h);
    let f = Renaming::from_table([(1, 7), (2, 9)], DefaultRule::Identity);
    assert_eq!(apply_renaming(&h, &f), hist("0 wr x 7\n1 wr x 9\n1 rd x 7\n1 rd x 9"));
    let g = apply_renaming(&h, &Renaming::constant(1));
    assert!(g.ops().iter().all(|o| o.value == 1));
    assert!(!g.is_differentiated());
}

#[test]
fn read_from_examples() {
    let h = hist(NOT_CC);
    let rf = compute_rf(&h).unwrap();
    let want: BTreeSet<(usize, usize)> = [
        (idx(&h, 0, 1), idx(&h, 1, 0)),
        (idx(&h, 1, 1), idx(&h, 2, 0)),
        (idx(&h, 0, 0), idx(&h, 2, 1)),
    ]
    .into();
    assert_eq!(rf.pairs().into_iter().collect::<BTreeSet<_>>(), want);
    assert!(compute_rf(&hist("0 wr x 1\n1 wr y 2")).unwrap().pairs().is_empty());
    assert!(compute_rf(&hist("0 wr x 1\n1 rd x 2")).unwrap().pairs().is_empty());
    assert!(compute_rf(&hist("0 wr x 1\n1 wr x 1")).is_err());
}

#[test]
fn causal_order_examples() {
    let h = hist(NOT_CC);
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf);
    let co = co.acyclic().unwrap();
    assert!(co.get(idx(&h, 0, 0), idx(&h, 2, 1)));
    assert!(co.get(idx(&h, 0, 0), idx(&h, 1, 1)));

    let h = hist("0 rd x 1\n0 wr y 1\n1 rd y 1\n1 wr x 1");
    let rf = compute_rf(&h).unwrap();
    let CausalOrder::Cyclic(cycle) = compute_co(&h, &rf) else {
        panic!("expected a cycle")
    };
    assert_eq!(cycle.len(), 4);

    let h = hist("0 wr x 1");
    let rf = compute_rf(&h).unwrap();
    assert_eq!(compute_co(&h, &rf).acyclic().unwrap().count(), 0);
}

#[test]
fn conflict_examples() {
    let h = hist(CM_NOT_CCV);
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf).acyclic().unwrap().clone();
    let cf = compute_cf(&h, &rf, &co);
    let (w1, w2) = (idx(&h, 0, 0), idx(&h, 1, 0));
    assert_eq!(cf.pairs(), {
        let mut p = vec![(w1, w2), (w2, w1)];
        p.sort();
        p
    });
    assert_eq!(find_cycle(&cf).unwrap(), vec![w1, w2]);

    let h = hist(NOT_CC);
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf).acyclic().unwrap().clone();
    assert!(compute_cf(&h, &rf, &co).get(idx(&h, 1, 1), idx(&h, 0, 0)));

    let h = hist("0 wr x 1\n0 wr y 1\n1 rd y 1\n1 rd x 1");
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf).acyclic().unwrap().clone();
    assert_eq!(compute_cf(&h, &rf, &co).count(), 0);
}

#[test]
fn happened_before_examples() {
    let h = hist(CCV_NOT_CM);
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf).acyclic().unwrap().clone();
    let hb = compute_hb(&h, &co, id(1, 3)).unwrap();
    let (wz, wx1, wx2, rz) = (idx(&h, 0, 0), idx(&h, 0, 1), idx(&h, 1, 0), idx(&h, 1, 1));
    assert!(hb.get(wx1, wx2));
    assert!(hb.get(wz, rz));

    let h = hist("0 wr x 1\n1 wr x 2\n1 rd x 1");
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf).acyclic().unwrap().clone();
    assert_eq!(compute_hb(&h, &co, id(1, 0)).unwrap().count(), 0);
    assert!(compute_hb(&h, &co, id(5, 0)).is_err());
}

#[test]
fn happened_before_grows_along_program_order() {
    // hb at the first read already orders 1.0 before 0.0 by rule (iii); the
    // second read adds the reverse edge, so only its hb is cyclic.
    let h = hist(CC_ONLY);
    let rf = compute_rf(&h).unwrap();
    let co = compute_co(&h, &rf).acyclic().unwrap().clone();
    let (w1, w2) = (idx(&h, 0, 0), idx(&h, 1, 0));
    let first = compute_hb(&h, &co, id(1, 1)).unwrap();
    assert!(first.get(w2, w1) && !first.get(w1, w2));
    assert!(find_cycle(&first).is_none());
    let second = compute_hb(&h, &co, id(1, 2)).unwrap();
    assert!(second.get(w1, w2) && second.get(w2, w1));
    assert!(first.is_subset_of(&second));
}

#[test]
fn find_cycle_examples() {
    assert_eq!(
        find_cycle(&BitMatrix::from_pairs(2, [(0, 1), (1, 0)])),
        Some(vec![0, 1])
    );
    assert_eq!(find_cycle(&BitMatrix::from_pairs(3, [(0, 1), (1, 2)])), None);
}

#[test]
fn detection_examples() {
    let r = detect_patterns(&hist(NOT_CC)).unwrap();
    let p = r.get(PatternKind::WriteCORead).unwrap();
    assert_eq!(p.ids(), vec![id(0, 0), id(1, 1), id(2, 1)]);
    let r = detect_patterns(&hist(CM_NOT_CCV)).unwrap();
    assert_eq!(r.kinds(), vec![PatternKind::CyclicCF]);
    assert!(detect_patterns(&hist(ALL_CAUSAL)).unwrap().patterns.is_empty());
}

#[test]
fn cyclic_causal_order_short_circuits() {
    let h = hist("0 rd x 1\n0 wr y 1\n1 rd y 1\n1 wr x 1");
    let r = detect_patterns(&h).unwrap();
    assert_eq!(r.kinds(), vec![PatternKind::CyclicCO]);
    assert!(r.not_evaluated.contains(&PatternKind::CyclicCF));
    for c in Criterion::ALL {
        assert_eq!(
            check_all(&h).unwrap()[&c].pattern().unwrap().kind,
            PatternKind::CyclicCO
        );
    }
}

#[test]
fn single_criterion_checks() {
    assert!(check_cc(&hist(CC_ONLY)).unwrap().consistent);
    assert_eq!(
        check_cc(&hist(NOT_CC)).unwrap().pattern().unwrap().kind,
        PatternKind::WriteCORead
    );
    assert!(check_cc(&History::empty()).unwrap().consistent);
    assert!(check_cm(&hist(CM_NOT_CCV)).unwrap().consistent);
    assert_eq!(
        check_cm(&hist(CCV_NOT_CM)).unwrap().pattern().unwrap().kind,
        PatternKind::WriteHBInitRead
    );
    assert!(!check_cm(&hist(CC_ONLY)).unwrap().consistent);
    assert!(check_ccv(&hist(CCV_NOT_CM)).unwrap().consistent);
    assert_eq!(
        check_ccv(&hist(CM_NOT_CCV)).unwrap().pattern().unwrap().kind,
        PatternKind::CyclicCF
    );
    assert!(check_ccv(&hist(ALL_CAUSAL)).unwrap().consistent);
}

#[test]
fn non_differentiated_input_uses_oracle() {
    let v = check_cc(&hist("0 wr x 1\n1 wr x 1\n2 rd x 1")).unwrap();
    assert!(v.consistent);
    assert_eq!(v.mode, causalcheck::consistency::Mode::Oracle);
}

#[test]
fn spec_membership_examples() {
    let seq = |labels: Vec<Label>| SpecSequence::from_labels(labels);
    assert!(spec_member(&seq(vec![Label::write("x", 1), Label::read("x", 1)])));
    assert!(!spec_member(&seq(vec![Label::write("x", 1), Label::read("x", 0)])));
    assert!(spec_member(&seq(vec![
        Label::read("x", 0),
        Label::write("x", 2),
        Label::read("x", 2)
    ])));
}

#[test]
fn oracle_examples() {
    let cfg = OracleConfig::default();
    let v = oracle_check(&hist(CC_ONLY), Criterion::CC, &cfg).unwrap();
    let Some(Evidence::Orders(w)) = v.evidence else {
        panic!("expected witness orders")
    };
    assert!(!w.co.contains(&(id(0, 0), id(1, 0))) && !w.co.contains(&(id(1, 0), id(0, 0))));
    assert!(
        !oracle_check(&hist(CM_NOT_CCV), Criterion::CCv, &cfg)
            .unwrap()
            .consistent
    );
    assert!(!oracle_check(&hist("0 rd x 5"), Criterion::CC, &cfg).unwrap().consistent);
}

#[test]
fn sat_encoding_examples() {
    let cfg = OracleConfig::with_cap(32).unwrap();
    let cases = [
        (Cnf::new(1, vec![vec![1]]).unwrap(), true),
        (Cnf::new(1, vec![vec![1], vec![-1]]).unwrap(), false),
        (Cnf::new(2, vec![vec![1, -2]]).unwrap(), true),
    ];
    for (cnf, sat) in cases {
        assert_eq!(brute_force_sat(&cnf).is_some(), sat);
        let h = encode_sat(&cnf).unwrap();
        assert_eq!(
            oracle_check(&h, Criterion::CC, &cfg).unwrap().consistent,
            sat,
            "{cnf:?}"
        );
    }
}

#[test]
fn observer_structure() {
    let a = build_mcc();
    assert_eq!(a.accepting.len(), 3);
    let reachable = a.reachable();
    assert!(a.accepting.keys().all(|s| reachable.contains(s)));
    let mut d0: Vec<u8> = a.links.iter().map(|l| l.d0).collect();
    d0.sort();
    assert_eq!(d0, vec![2, 3, 4]);
    assert!(!MonitorState::new(&a).accepted());
}

#[test]
fn observer_examples() {
    let a = build_mcc();
    let e = parse_trace("1 rd x 1").unwrap();
    let m = feed(MonitorState::new(&a), &a, &e.events()[0]).unwrap();
    assert_eq!(m.branch(), Some(Branch::ThinAirRead));

    // Operations that cannot start any pattern leave the frontier alone.
    let e = parse_trace("0 rd x 0\n1 rd y 0\n0 rd y 0").unwrap();
    let mut m = MonitorState::new(&a);
    let start = m.frontier().clone();
    for ev in e.events() {
        m = feed(m, &a, ev).unwrap();
    }
    assert_eq!(m.frontier(), &start);
    assert!(!m.accepted());

    assert_eq!(
        monitor_branch(&parse_trace(NOT_CC).unwrap()).unwrap(),
        Some(Branch::WriteCORead)
    );
    assert!(!monitor_execution(&parse_trace(ALL_CAUSAL).unwrap()).unwrap());
    assert!(!monitor_execution(&Execution::default()).unwrap());
}

#[test]
fn observer_is_interleaving_independent_on_violation() {
    // A different interleaving of the same not-CC history.
    let e = parse_trace("0 wr x 1\n0 wr y 1\n1 rd y 1\n1 wr x 2\n2 rd x 2\n2 rd x 1").unwrap();
    let shuffled = parse_trace("0 wr x 1\n2 rd x 2\n0 wr y 1\n1 rd y 1\n1 wr x 2\n2 rd x 1").unwrap();
    assert_eq!(derive_history(&e), derive_history(&shuffled));
    assert!(monitor_execution(&e).unwrap());
    assert!(monitor_execution(&shuffled).unwrap());
}

#[test]
fn simulation_examples() {
    let cfg = SimConfig {
        sites: 1,
        ops: 4,
        seed: 7,
        ..SimConfig::default()
    };
    let e = run_sim(&cfg);
    assert_eq!(e.len(), 4);
    assert_eq!(verdicts(&derive_history(&e)), [true, true, true]);
    assert!(run_sim(&SimConfig {
        ops: 0,
        ..SimConfig::default()
    })
    .is_empty());

    let template = SimConfig {
        sites: 3,
        ops: 60,
        seed: 1,
        protocol: Protocol::MutantNoCausalDelivery,
        ..SimConfig::default()
    };
    assert!(fuzz(&template, 200).counts[&Criterion::CC] > 0);
}

#[test]
fn stale_read_mutant_shows_thin_air_reads() {
    let template = SimConfig {
        protocol: Protocol::MutantStaleRead,
        ..SimConfig::default()
    };
    let r = fuzz(&template, 200);
    assert!(r.runs.iter().any(|run| run.violations[0]));
    let found = r.runs.iter().filter(|run| run.violations[0]).any(|run| {
        let h = derive_history(&run_sim(&SimConfig {
            seed: run.seed,
            ..template.clone()
        }));
        detect_patterns(&h).unwrap().get(PatternKind::ThinAirRead).is_some()
    });
    assert!(found);
}
