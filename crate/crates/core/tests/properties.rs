//! Randomized invariants. Histories are built from shrinkable skeletons so
//! failures minimize to small counterexamples.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use causalcheck::consistency::{
    check_all, detect_patterns, hb_pairs, validate_pattern, CheckMode, Checker, Criterion, Evidence,
};
use causalcheck::history::{
    apply_renaming, derive_history, parse_trace, serialize_trace, DefaultRule, Execution, History, Method, Renaming,
    Value,
};
use causalcheck::monitor::{build_mcc, feed, monitor_execution, MonitorState};
use causalcheck::oracle::{brute_force_sat, encode_sat, oracle_check, validate_witness, Cnf, OracleConfig};
use causalcheck::relations::{compute_co, compute_hb, compute_rf, po_rf_edges, HbMode};
use causalcheck::simstore::{run_sim, Protocol, SimConfig};

const VARS: [&str; 3] = ["x", "y", "z"];

/// `(site, is_write, var, pick)`; a read returns 0, a written value, or an
/// unwritten one depending on `pick`.
type Skeleton = Vec<(u32, bool, usize, u8)>;

fn skeleton(max_ops: usize, sites: u32, vars: usize) -> impl Strategy<Value = Skeleton> {
    prop::collection::vec((0..sites, any::<bool>(), 0..vars, any::<u8>()), 0..=max_ops)
}

fn build(sk: &Skeleton) -> Execution {
    let mut counts = [0 as Value; 3];
    for &(_, w, x, _) in sk {
        if w {
            counts[x] += 1;
        }
    }
    let mut next = [0 as Value; 3];
    let events = sk.iter().map(|&(site, w, x, pick)| {
        let value = if w {
            next[x] += 1;
            next[x]
        } else {
            // One slot past the written values is a thin-air value.
            pick as Value % (counts[x] + 2)
        };
        let method = if w { Method::Write } else { Method::Read };
        (site, method, VARS[x], value)
    });
    Execution::from_events(events).unwrap()
}

fn differentiated(max_ops: usize, sites: u32, vars: usize) -> impl Strategy<Value = Execution> {
    skeleton(max_ops, sites, vars).prop_map(|sk| build(&sk))
}

/// Like [`build`], but a read only returns 0, an unwritten value, or a value
/// written earlier in the execution, as a running store would.
fn build_online(sk: &Skeleton) -> Execution {
    let mut next = [0 as Value; 3];
    let events = sk.iter().map(|&(site, w, x, pick)| {
        let value = if w {
            next[x] += 1;
            next[x]
        } else if pick == u8::MAX {
            Value::MAX
        } else {
            pick as Value % (next[x] + 1)
        };
        let method = if w { Method::Write } else { Method::Read };
        (site, method, VARS[x], value)
    });
    Execution::from_events(events).unwrap()
}

fn online(max_ops: usize, sites: u32, vars: usize) -> impl Strategy<Value = Execution> {
    skeleton(max_ops, sites, vars).prop_map(|sk| build_online(&sk))
}

fn cc(h: &History) -> bool {
    check_all(h).unwrap()[&Criterion::CC].consistent
}

fn some_prefix_not_cc(e: &Execution) -> bool {
    (0..=e.len()).any(|k| !cc(&derive_history(&e.prefix(k))))
}

/// Any well-formed execution, values drawn from a small range so that
/// repeated writes are common.
fn arbitrary(max_ops: usize) -> impl Strategy<Value = Execution> {
    prop::collection::vec((0..3u32, any::<bool>(), 0..2usize, 0..4u64), 0..=max_ops).prop_map(|v| {
        let events = v
            .into_iter()
            .map(|(s, w, x, d)| (s, if w { Method::Write } else { Method::Read }, VARS[x], d));
        Execution::from_events(events).unwrap()
    })
}

fn consistency(h: &History) -> BTreeMap<Criterion, bool> {
    check_all(h)
        .unwrap()
        .into_iter()
        .map(|(c, v)| (c, v.consistent))
        .collect()
}

/// An injective renaming fixing 0, mapping `1..=n` onto distinct nonzero values.
fn injective_renaming(n: usize) -> impl Strategy<Value = Renaming> {
    Just((1..=40u64).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(move |image| Renaming::from_table((1..=n as Value).zip(image), DefaultRule::Identity))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn trace_round_trip(e in arbitrary(20)) {
        prop_assert_eq!(parse_trace(&serialize_trace(&e)).unwrap(), e);
    }

    #[test]
    fn derivation_preserves_counts(e in arbitrary(20)) {
        let h = derive_history(&e);
        prop_assert_eq!(h.len(), e.len());
        let mut per_site: BTreeMap<u32, usize> = BTreeMap::new();
        for ev in e.events() {
            *per_site.entry(ev.site()).or_default() += 1;
        }
        for (site, n) in per_site {
            prop_assert_eq!(h.ops().iter().filter(|o| o.site() == site).count(), n);
        }
    }

    #[test]
    fn injective_renaming_preserves_differentiation(e in arbitrary(12), f in injective_renaming(4)) {
        let h = derive_history(&e);
        prop_assert_eq!(apply_renaming(&h, &f).is_differentiated(), h.is_differentiated());
    }

    #[test]
    fn injective_renaming_preserves_verdicts(e in differentiated(14, 3, 2), f in injective_renaming(14)) {
        let h = derive_history(&e);
        let g = apply_renaming(&h, &f);
        prop_assert!(g.is_differentiated());
        prop_assert_eq!(consistency(&h), consistency(&g));
        prop_assert_eq!(detect_patterns(&h).unwrap().kinds(), detect_patterns(&g).unwrap().kinds());
    }

    #[test]
    fn implication(e in differentiated(16, 3, 2)) {
        let v = consistency(&derive_history(&e));
        prop_assert!(!v[&Criterion::CM] || v[&Criterion::CC]);
        prop_assert!(!v[&Criterion::CCv] || v[&Criterion::CC]);
    }

    #[test]
    fn patterns_revalidate(e in differentiated(16, 3, 3)) {
        let h = derive_history(&e);
        let report = detect_patterns(&h).unwrap();
        for p in &report.patterns {
            prop_assert!(validate_pattern(&h, p).is_ok(), "{}", p);
        }
        for v in check_all(&h).unwrap().values() {
            prop_assert_eq!(v.consistent, v.pattern().is_none());
        }
    }

    #[test]
    fn hb_modes_agree(e in differentiated(14, 3, 2)) {
        let h = derive_history(&e);
        let site = Checker { hb: HbMode::SiteMaximal, ..Checker::default() }.check_all(&h).unwrap();
        let per_op = Checker { hb: HbMode::PerOperation, ..Checker::default() }.check_all(&h).unwrap();
        prop_assert_eq!(site, per_op);
    }

    #[test]
    fn relation_invariants(e in differentiated(16, 3, 2)) {
        let h = derive_history(&e);
        let rf = compute_rf(&h).unwrap();
        for r in 0..h.len() {
            if let Some(w) = rf.writer_of(r) {
                let (wo, ro) = (h.op(w), h.op(r));
                prop_assert!(wo.is_write() && ro.is_read() && wo.var == ro.var && wo.value == ro.value);
            }
            let writers = rf.pairs().iter().filter(|&&(_, b)| b == r).count();
            prop_assert!(writers <= 1);
        }
        if let Some(co) = compute_co(&h, &rf).acyclic() {
            prop_assert!(co.is_transitive() && co.is_irreflexive());
            prop_assert!(po_rf_edges(&h, &rf).is_subset_of(co));
        }
    }

    #[test]
    fn hb_is_monotone_and_a_fixpoint(e in differentiated(12, 3, 2)) {
        let h = derive_history(&e);
        let rf = compute_rf(&h).unwrap();
        let Some(co) = compute_co(&h, &rf).acyclic().cloned() else { return Ok(()) };
        let n = h.len();
        let hbs: Vec<_> = h.ids().map(|o| compute_hb(&h, &co, o).unwrap()).collect();
        for o in 0..n {
            let hb = &hbs[o];
            let past: Vec<bool> = (0..n).map(|a| a == o || co.get(a, o)).collect();
            // Rule (i).
            for a in 0..n {
                for b in 0..n {
                    if past[a] && past[b] && co.get(a, b) {
                        prop_assert!(hb.get(a, b));
                    }
                }
            }
            // Rule (ii).
            prop_assert!(hb.is_transitive());
            // Rule (iii).
            for r2 in (0..n).filter(|&r| r == o || h.po_lt(r, o)) {
                let Some(w2) = rf.writer_of(r2) else { continue };
                for w1 in 0..n {
                    let same = h.op(w1).is_write() && h.op(w1).var == h.op(r2).var;
                    if same && w1 != w2 && hb.get(w1, r2) {
                        prop_assert!(hb.get(w1, w2));
                    }
                }
            }
            // Least fixpoint: equal to an independent naive computation.
            prop_assert_eq!(Some(hb.clone()), hb_pairs(&h, h.op(o).id));
            for o2 in 0..n {
                if h.po_lt(o, o2) {
                    prop_assert!(hb.is_subset_of(&hbs[o2]));
                }
            }
        }
    }

    #[test]
    fn monitor_matches_offline(e in online(30, 4, 3)) {
        prop_assert_eq!(monitor_execution(&e).unwrap(), !cc(&derive_history(&e)));
    }

    #[test]
    fn monitor_detects_violating_prefixes(e in differentiated(20, 3, 2)) {
        prop_assert_eq!(monitor_execution(&e).unwrap(), some_prefix_not_cc(&e));
    }

    #[test]
    fn monitor_latches_and_stays_bounded(e in differentiated(30, 4, 3)) {
        let a = build_mcc();
        let mut m = MonitorState::new(&a);
        let mut violated = false;
        for (k, ev) in e.events().iter().enumerate() {
            let was = m.accepted();
            m = feed(m, &a, ev).unwrap();
            prop_assert!(!was || m.accepted());
            prop_assert!(m.frontier().len() <= m.frontier_bound(&a));
            violated |= !cc(&derive_history(&e.prefix(k + 1)));
            prop_assert_eq!(m.accepted(), violated);
        }
    }

    #[test]
    fn monitor_prefix_soundness(e in differentiated(24, 3, 2), cut in 0usize..25) {
        if monitor_execution(&e.prefix(cut)).unwrap() {
            prop_assert!(monitor_execution(&e).unwrap());
        }
    }

    #[test]
    fn simulation_is_deterministic_and_differentiated(
        seed in any::<u64>(),
        sites in 1usize..5,
        variables in 1usize..4,
        ops in 0usize..60,
        k in 0usize..5,
        ratio in 0.0f64..=1.0,
    ) {
        let cfg = SimConfig { sites, variables, ops, seed, protocol: Protocol::ALL[k], write_ratio: ratio };
        let e = run_sim(&cfg);
        prop_assert_eq!(e.len(), ops);
        prop_assert_eq!(serialize_trace(&e), serialize_trace(&run_sim(&cfg)));
        prop_assert!(derive_history(&e).is_differentiated());
    }

    #[test]
    fn correct_protocol_is_always_consistent(seed in any::<u64>(), sites in 1usize..5, variables in 1usize..4) {
        let cfg = SimConfig { sites, variables, ops: 50, seed, ..SimConfig::default() };
        let v = consistency(&derive_history(&run_sim(&cfg)));
        prop_assert!(v.values().all(|&c| c), "{:?}", v);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(192))]

    #[test]
    fn fast_path_matches_oracle(e in differentiated(8, 3, 2)) {
        let h = derive_history(&e);
        let fast = consistency(&h);
        for c in Criterion::ALL {
            let v = oracle_check(&h, c, &OracleConfig::default()).unwrap();
            prop_assert_eq!(v.consistent, fast[&c], "{}", c);
        }
    }

    #[test]
    fn oracle_witnesses_validate(e in arbitrary(7)) {
        let h = derive_history(&e);
        let oracle = Checker::new(CheckMode::Oracle);
        let v = oracle.check_all(&h).unwrap();
        for (c, verdict) in &v {
            if let Some(Evidence::Orders(w)) = &verdict.evidence {
                prop_assert!(validate_witness(&h, *c, w).is_ok());
            }
        }
        prop_assert!(!v[&Criterion::CM].consistent || v[&Criterion::CC].consistent);
        prop_assert!(!v[&Criterion::CCv].consistent || v[&Criterion::CC].consistent);
    }

    /// Merging values can only remove constraints on a consistent history.
    #[test]
    fn consistency_survives_renaming(e in differentiated(7, 3, 2), table in prop::collection::vec(0u64..3, 8)) {
        let h = derive_history(&e);
        let f = Renaming::from_table(
            (1..=8).zip(table.into_iter().map(|v| v + 1)),
            DefaultRule::Identity,
        );
        let g = apply_renaming(&h, &f);
        let oracle = Checker::new(CheckMode::Oracle);
        let (before, after) = (oracle.check_all(&h).unwrap(), oracle.check_all(&g).unwrap());
        for c in Criterion::ALL {
            prop_assert!(!before[&c].consistent || after[&c].consistent, "{}", c);
        }
    }

    #[test]
    fn sat_reduction(nvars in 1usize..=3, clauses in prop::collection::vec(prop::collection::vec((1i64..=3, any::<bool>()), 1..=3), 1..=3)) {
        let clauses: Vec<Vec<i64>> = clauses
            .into_iter()
            .map(|c| {
                let mut lits: Vec<i64> = c
                    .into_iter()
                    .map(|(v, neg)| {
                        let v = (v - 1) % nvars as i64 + 1;
                        if neg { -v } else { v }
                    })
                    .collect();
                lits.sort();
                lits.dedup();
                lits
            })
            .collect();
        let cnf = Cnf::new(nvars, clauses).unwrap();
        let h = encode_sat(&cnf).unwrap();
        let cfg = OracleConfig::with_cap(64).unwrap();
        let v = oracle_check(&h, Criterion::CC, &cfg).unwrap();
        prop_assert_eq!(v.consistent, brute_force_sat(&cnf).is_some());
    }
}

#[test]
fn renaming_to_nonzero_image_keeps_initial_reads_distinct() {
    // A renaming with 0 outside its image would turn initial reads into
    // reads of unwritten values; the properties above therefore fix 0.
    let h = derive_history(&parse_trace("0 rd x 0\n1 wr x 1").unwrap());
    let f = Renaming::from_table([(0, 5), (1, 6)], DefaultRule::Identity);
    let g = apply_renaming(&h, &f);
    assert!(check_all(&h).unwrap()[&Criterion::CC].consistent);
    assert!(!check_all(&g).unwrap()[&Criterion::CC].consistent);
    let reads: BTreeSet<Value> = g.ops().iter().filter(|o| o.is_read()).map(|o| o.value).collect();
    assert_eq!(reads, BTreeSet::from([5]));
}
